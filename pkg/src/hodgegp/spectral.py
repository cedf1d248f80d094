"""Spectral analysis of Hodge Laplacians.

The eigenvectors of the edge Laplacian ``l1 = ld + lu`` split into three
orthogonal families: harmonic (zero eigenvalue), gradient (nonzero
eigenvalues of ``ld``) and curl (nonzero eigenvalues of ``lu``).  This module
computes that partitioned spectrum, decomposes edge flows into the three
components, and simulates diffusion on the edge space.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .complexes import Cochain, SimplicialComplex2, laplacians
from .errors import ClassificationError, NumericalError, UsageError

__all__ = [
    "LaplacianSpectrum",
    "HodgeSpectrum",
    "HodgeComponents",
    "laplacian_spectrum",
    "eigendecompose",
    "classify",
    "hodge_decompose",
    "edge_diffusion",
]

# Relative eigenvalue threshold below which a mode counts as harmonic.
ZERO_TOL = 1e-8
# Singular-value cutoff when splitting a degenerate eigenspace between the
# gradient and curl subspaces.
_SPLIT_TOL = 1e-3


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class LaplacianSpectrum:
    """Plain eigendecomposition of a symmetric PSD operator."""

    values: np.ndarray
    vectors: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _freeze(np.asarray(self.values, float)))
        object.__setattr__(self, "vectors", _freeze(np.asarray(self.vectors, float)))


def laplacian_spectrum(matrix: np.ndarray) -> LaplacianSpectrum:
    """Full eigendecomposition of a symmetric matrix, eigenvalues ascending."""
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise UsageError("expected a square matrix")
    if not np.allclose(matrix, matrix.T, atol=1e-10 * max(1.0, np.abs(matrix).max())):
        raise UsageError("expected a symmetric matrix")
    values, vectors = np.linalg.eigh(matrix)
    return LaplacianSpectrum(values, vectors)


@dataclass(frozen=True, eq=False)
class HodgeSpectrum:
    """Eigenpairs of the edge Laplacian partitioned into Hodge subspaces.

    Eigenvalues are sorted ascending within each block.  The harmonic block
    carries exact zeros; gradient eigenvalues equal ``||b1 @ u||^2`` and curl
    eigenvalues ``||b2.T @ u||^2`` for their eigenvectors.  When ``truncated``
    is set, only the ``retained`` largest nonzero modes are present, but the
    harmonic block is always complete.
    """

    n_edges: int
    harmonic_vectors: np.ndarray
    gradient_vectors: np.ndarray
    gradient_values: np.ndarray
    curl_vectors: np.ndarray
    curl_values: np.ndarray
    truncated: bool = False
    retained: int | None = None

    def __post_init__(self):
        for name in (
            "harmonic_vectors",
            "gradient_vectors",
            "gradient_values",
            "curl_vectors",
            "curl_values",
        ):
            object.__setattr__(self, name, _freeze(getattr(self, name)))

    @property
    def harmonic_values(self) -> np.ndarray:
        return np.zeros(self.n_harmonic)

    @property
    def n_harmonic(self) -> int:
        return self.harmonic_vectors.shape[1]

    @property
    def n_gradient(self) -> int:
        return self.gradient_vectors.shape[1]

    @property
    def n_curl(self) -> int:
        return self.curl_vectors.shape[1]

    def block(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(vectors, values)`` for block ``'H'``, ``'G'`` or ``'C'``."""
        if name in ("H", "harmonic"):
            return self.harmonic_vectors, self.harmonic_values
        if name in ("G", "gradient"):
            return self.gradient_vectors, self.gradient_values
        if name in ("C", "curl"):
            return self.curl_vectors, self.curl_values
        raise UsageError(f"unknown Hodge block {name!r}")

    def basis(self) -> np.ndarray:
        """Eigenvector matrix ``[U_H U_G U_C]``."""
        return np.hstack(
            [self.harmonic_vectors, self.gradient_vectors, self.curl_vectors]
        )

    def eigenvalues(self) -> np.ndarray:
        return np.concatenate(
            [self.harmonic_values, self.gradient_values, self.curl_values]
        )

    def reconstruct(self) -> np.ndarray:
        """Synthesize ``sum_b U_b diag(lambda_b) U_b.T`` (equals l1 when full)."""
        u = self.basis()
        return (u * self.eigenvalues()) @ u.T


def _nonzero_eigenbasis(matrix: np.ndarray, zero_tol: float) -> np.ndarray:
    values, vectors = np.linalg.eigh(matrix)
    scale = max(values[-1], 1.0) if len(values) else 1.0
    return vectors[:, values > zero_tol * scale]


def _split_cluster(block, q_g, q_c):
    """Orthonormal bases of the gradient / curl parts of an eigenspace block."""
    out = []
    for q in (q_g, q_c):
        if q.shape[1] == 0:
            out.append(np.zeros((block.shape[0], 0)))
            continue
        coeff = q.T @ block
        u, s, _ = np.linalg.svd(coeff, full_matrices=False)
        out.append(q @ u[:, s > _SPLIT_TOL])
    return out


def _classify_nonzero(vectors, values, sc, q_g, q_c, *, require_complete):
    """Cluster nonzero eigenpairs by eigenvalue and split each cluster into
    pure gradient / curl eigenvectors, re-deriving eigenvalues as Rayleigh
    quotients so the ``lambda = ||B u||^2`` identities hold by construction."""
    n1 = sc.n_edges
    grad_vecs, grad_vals, curl_vecs, curl_vals = [], [], [], []
    if len(values):
        gap = ZERO_TOL * max(values[-1], 1.0)
        start = 0
        for i in range(1, len(values) + 1):
            if i == len(values) or values[i] - values[i - 1] > gap:
                block = vectors[:, start:i]
                g_part, c_part = _split_cluster(block, q_g, q_c)
                if require_complete and g_part.shape[1] + c_part.shape[1] != block.shape[1]:
                    raise ClassificationError(
                        "degenerate eigenspace did not split cleanly into gradient"
                        " and curl parts; re-diagonalize within the eigenspace"
                        " using projections onto im(b1.T) and im(b2)"
                    )
                if g_part.shape[1]:
                    grad_vecs.append(g_part)
                    grad_vals.append(np.sum((sc.b1 @ g_part) ** 2, axis=0))
                if c_part.shape[1]:
                    curl_vecs.append(c_part)
                    curl_vals.append(np.sum((sc.b2.T @ c_part) ** 2, axis=0))
                start = i

    def _assemble(vecs, vals):
        if not vecs:
            return np.zeros((n1, 0)), np.zeros(0)
        v = np.hstack(vecs)
        w = np.concatenate(vals)
        order = np.argsort(w)
        return v[:, order], w[order]

    g_v, g_w = _assemble(grad_vecs, grad_vals)
    c_v, c_w = _assemble(curl_vecs, curl_vals)
    return g_v, g_w, c_v, c_w


def eigendecompose(
    sc: SimplicialComplex2, truncation: int | None = None
) -> HodgeSpectrum:
    """Partitioned eigendecomposition of the Hodge Laplacian.

    With ``truncation=l``, only the ``l`` largest nonzero eigenpairs are
    computed (iteratively for larger problems); the harmonic basis is always
    computed exactly and retained in full, since a largest-first rule would
    drop its zero eigenvalues.
    """
    lap = laplacians(sc)
    n1 = sc.n_edges
    if truncation is not None:
        if truncation < 1 or truncation > n1:
            raise UsageError(f"truncation must be in [1, {n1}], got {truncation}")
        if truncation == n1:
            truncation = None

    l1 = lap.l1.astype(float)
    q_g = _nonzero_eigenbasis(lap.ld.astype(float), ZERO_TOL)
    q_c = _nonzero_eigenbasis(lap.lu.astype(float), ZERO_TOL) if sc.n_triangles else np.zeros((n1, 0))

    if truncation is None:
        values, vectors = np.linalg.eigh(l1)
        scale = max(values[-1], 1.0)
        nonzero = values > ZERO_TOL * scale
        harmonic = vectors[:, ~nonzero]
        g_v, g_w, c_v, c_w = _classify_nonzero(
            vectors[:, nonzero], values[nonzero], sc, q_g, q_c, require_complete=True
        )
        return HodgeSpectrum(n1, harmonic, g_v, g_w, c_v, c_w)

    # Truncated path: exact harmonic basis from the incidence matrices plus
    # the largest-l nonzero eigenpairs from an iterative solver.
    stacked = np.vstack([sc.b1.astype(float), sc.b2.T.astype(float)])
    harmonic = scipy.linalg.null_space(stacked)

    if n1 < 50 or truncation > n1 - 2:
        values, vectors = np.linalg.eigh(l1)
        values, vectors = values[-truncation:], vectors[:, -truncation:]
    else:
        v0 = np.ones(n1) + 1e-3 * np.arange(n1)  # deterministic start vector
        try:
            values, vectors = scipy.sparse.linalg.eigsh(
                scipy.sparse.csr_matrix(l1), k=truncation, which="LA", v0=v0
            )
        except scipy.sparse.linalg.ArpackNoConvergence as exc:
            raise NumericalError(
                f"eigensolver failed to converge: {exc}; "
                f"{len(exc.eigenvalues)} of {truncation} eigenpairs found"
            ) from exc
        order = np.argsort(values)
        values, vectors = values[order], vectors[:, order]

    scale = max(values[-1], 1.0)
    nonzero = values > ZERO_TOL * scale
    g_v, g_w, c_v, c_w = _classify_nonzero(
        vectors[:, nonzero], values[nonzero], sc, q_g, q_c, require_complete=False
    )
    return HodgeSpectrum(
        n1, harmonic, g_v, g_w, c_v, c_w, truncated=True, retained=truncation
    )


def classify(u: np.ndarray, lam: float, sc: SimplicialComplex2, tol: float = ZERO_TOL) -> str:
    """Assign one L1 eigenvector to a Hodge subspace.

    Harmonic means ``lam <= tol``; otherwise the vector is gradient when its
    curl residual vanishes and curl when its divergence residual vanishes.
    A vector failing both tests straddles a degenerate eigenvalue shared by
    the gradient and curl spaces and must be split, not classified.
    """
    u = np.asarray(u, dtype=float)
    if u.shape != (sc.n_edges,):
        raise UsageError(f"eigenvector must have length {sc.n_edges}")
    if abs(np.linalg.norm(u) - 1.0) > 1e-6:
        raise UsageError("eigenvector must be unit-norm")
    if lam <= tol:
        return "harmonic"
    sqrt_lam = np.sqrt(lam)
    if np.linalg.norm(sc.b2.T @ u) <= tol * sqrt_lam:
        return "gradient"
    if np.linalg.norm(sc.b1 @ u) <= tol * sqrt_lam:
        return "curl"
    raise ClassificationError(
        f"eigenvector at lambda={lam:g} has both nonzero divergence and curl;"
        " its eigenvalue is shared between the gradient and curl subspaces --"
        " re-diagonalize within the degenerate eigenspace using projections"
        " onto im(b1.T) and im(b2)"
    )


@dataclass(frozen=True, eq=False)
class HodgeComponents:
    """Orthogonal split of an edge flow into harmonic + gradient + curl."""

    f_h: Cochain
    f_g: Cochain
    f_c: Cochain

    def reconstruct(self) -> np.ndarray:
        return self.f_h.values + self.f_g.values + self.f_c.values

    def energies(self) -> tuple[float, float, float]:
        """Squared norms ``(harmonic, gradient, curl)``."""
        return (
            float(self.f_h.values @ self.f_h.values),
            float(self.f_g.values @ self.f_g.values),
            float(self.f_c.values @ self.f_c.values),
        )

    def energy_fractions(self) -> tuple[float, float, float]:
        e = self.energies()
        total = sum(e)
        if total == 0.0:
            return (0.0, 0.0, 0.0)
        return tuple(x / total for x in e)


def hodge_decompose(sc_or_spectrum, f1) -> HodgeComponents:
    """Split an edge flow into its gradient, curl and harmonic parts.

    Given a complex, the gradient and curl parts are least-squares
    projections onto ``im(b1.T)`` and ``im(b2)`` computed directly from the
    incidence matrices, so the split is exact even when only a truncated
    spectrum is available elsewhere.  A full spectrum may be passed instead,
    in which case the split projects onto its eigenvector blocks.
    """
    if isinstance(sc_or_spectrum, SimplicialComplex2):
        sc = sc_or_spectrum
        if isinstance(f1, Cochain):
            if f1.degree != 1:
                raise UsageError(f"expected a degree-1 cochain, got degree {f1.degree}")
            f = f1.values
        else:
            f = np.asarray(f1, dtype=float)
        if f.shape != (sc.n_edges,):
            raise UsageError(f"edge flow must have length {sc.n_edges}")
        pot, *_ = np.linalg.lstsq(sc.b1.T.astype(float), f, rcond=None)
        f_g = sc.b1.T @ pot
        if sc.n_triangles:
            tri, *_ = np.linalg.lstsq(sc.b2.astype(float), f, rcond=None)
            f_c = sc.b2 @ tri
        else:
            f_c = np.zeros_like(f)
        f_h = f - f_g - f_c
    elif isinstance(sc_or_spectrum, HodgeSpectrum):
        spec = sc_or_spectrum
        if spec.truncated:
            raise UsageError("hodge_decompose needs a full spectrum or the complex itself")
        f = f1.values if isinstance(f1, Cochain) else np.asarray(f1, dtype=float)
        if f.shape != (spec.n_edges,):
            raise UsageError(f"edge flow must have length {spec.n_edges}")
        f_g = spec.gradient_vectors @ (spec.gradient_vectors.T @ f)
        f_c = spec.curl_vectors @ (spec.curl_vectors.T @ f)
        f_h = f - f_g - f_c
    else:
        raise UsageError("first argument must be a SimplicialComplex2 or a HodgeSpectrum")
    return HodgeComponents(f_h=Cochain(1, f_h), f_g=Cochain(1, f_g), f_c=Cochain(1, f_c))


def edge_diffusion(
    sc: SimplicialComplex2,
    phi0,
    mu: float,
    gamma: float,
    t: float,
    spectrum: HodgeSpectrum | None = None,
) -> Cochain:
    """Evolve an edge flow under ``d(phi)/dt = -(mu*ld + gamma*lu) phi``.

    The solution ``exp(-t (mu*ld + gamma*lu)) phi0`` is evaluated on the Hodge
    spectrum: gradient modes decay at rate ``mu * lambda``, curl modes at
    ``gamma * lambda``, and the harmonic component is preserved for all time.
    """
    if mu <= 0 or gamma <= 0:
        raise UsageError("diffusion rates mu and gamma must be positive")
    if t < 0:
        raise UsageError("time must be non-negative")
    phi = phi0.values if isinstance(phi0, Cochain) else np.asarray(phi0, dtype=float)
    if phi.shape != (sc.n_edges,):
        raise UsageError(f"initial flow must have length {sc.n_edges}")
    spec = spectrum if spectrum is not None else eigendecompose(sc)
    u_h, u_g, u_c = spec.harmonic_vectors, spec.gradient_vectors, spec.curl_vectors
    out = u_h @ (u_h.T @ phi)
    out += u_g @ (np.exp(-t * mu * spec.gradient_values) * (u_g.T @ phi))
    out += u_c @ (np.exp(-t * gamma * spec.curl_values) * (u_c.T @ phi))
    return Cochain(1, out)
