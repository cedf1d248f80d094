"""Covariance kernels built from Laplacian spectra.

Every kernel here is a spectral filter: an orthonormal eigenbasis with a
positive weight ``psi(lambda)`` per eigenvalue.  The two weight families are
Matern, ``sigma^2 (2 nu / kappa^2 + lambda)^(-nu)``, and diffusion (heat),
``sigma^2 exp(-kappa^2 lambda / 2)``.  Hodge-structured kernels assign an
independently parametrized weight function to each of the harmonic, gradient
and curl eigenvector blocks; the harmonic block sits at eigenvalue zero and
uses a plain variance scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .complexes import SimplicialComplex2, laplacians
from .errors import NumericalError, UsageError
from .spectral import HodgeSpectrum, LaplacianSpectrum, laplacian_spectrum

__all__ = [
    "SpectrumFn",
    "KernelSpec",
    "KernelMatrix",
    "matern_psi",
    "diffusion_psi",
    "node_kernel",
    "non_hc_edge_kernel",
    "subspace_kernel",
    "hc_kernel",
    "grad_of_node_kernel",
    "composed_hc_kernel",
    "hodge_laplacian_pinv_kernel",
    "line_graph_kernel",
]

KINDS = (
    "node",
    "non_hc_edge",
    "hc_edge",
    "subspace_edge",
    "grad_of_node",
    "composed_hc",
    "hodge_laplacian_pinv",
    "line_graph_node",
)


def matern_psi(lam, sigma2: float, kappa: float, nu: float) -> np.ndarray:
    return sigma2 * (2.0 * nu / kappa**2 + np.asarray(lam, float)) ** (-nu)


def diffusion_psi(lam, sigma2: float, kappa: float) -> np.ndarray:
    return sigma2 * np.exp(-0.5 * kappa**2 * np.asarray(lam, float))


@dataclass(frozen=True)
class SpectrumFn:
    """A positive, non-increasing spectral weight function."""

    family: str  # "matern" or "diffusion"
    sigma2: float = 1.0
    kappa: float = 1.0
    nu: float | None = None

    def __post_init__(self):
        if self.family not in ("matern", "diffusion"):
            raise UsageError(f"unknown spectrum family {self.family!r}")
        if self.sigma2 < 0:
            raise UsageError("sigma2 must be non-negative")
        if self.kappa < 0 or (self.kappa == 0 and self.family == "matern"):
            raise UsageError("kappa must be positive (diffusion allows kappa=0)")
        if self.family == "matern":
            if self.nu is None:
                object.__setattr__(self, "nu", 1.5)
            if self.nu <= 0:
                raise UsageError("nu must be positive")

    def __call__(self, lam) -> np.ndarray:
        if self.family == "matern":
            return matern_psi(lam, self.sigma2, self.kappa, self.nu)
        return diffusion_psi(lam, self.sigma2, self.kappa)

    def to_dict(self) -> dict:
        d = {"family": self.family, "sigma2": self.sigma2, "kappa": self.kappa}
        if self.family == "matern":
            d["nu"] = self.nu
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SpectrumFn":
        return cls(**d)


@dataclass(frozen=True)
class KernelSpec:
    """Declarative description of a kernel: a kind plus its weight functions.

    Which fields apply depends on ``kind``:

    - ``node``, ``non_hc_edge``, ``line_graph_node``: ``fn``
    - ``subspace_edge``: ``block`` in {"H","G","C"} and ``fn`` (the harmonic
      block only uses ``fn.sigma2`` since its eigenvalues are all zero)
    - ``hc_edge``: ``harmonic_sigma2``, ``gradient_fn``, ``curl_fn`` -- three
      disjoint parameter sets, nothing shared
    - ``grad_of_node``: ``node_fn``
    - ``composed_hc``: ``node_fn``, ``triangle_fn``, ``harmonic_sigma2``
    - ``hodge_laplacian_pinv``: ``sigma2`` amplitude (weights sigma2/lambda^2)
    """

    kind: str
    fn: SpectrumFn | None = None
    block: str | None = None
    harmonic_sigma2: float | None = None
    gradient_fn: SpectrumFn | None = None
    curl_fn: SpectrumFn | None = None
    node_fn: SpectrumFn | None = None
    triangle_fn: SpectrumFn | None = None
    sigma2: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise UsageError(f"unknown kernel kind {self.kind!r}")
        need = {
            "node": ("fn",),
            "non_hc_edge": ("fn",),
            "line_graph_node": ("fn",),
            "subspace_edge": ("fn", "block"),
            "hc_edge": ("harmonic_sigma2", "gradient_fn", "curl_fn"),
            "grad_of_node": ("node_fn",),
            "composed_hc": ("node_fn", "triangle_fn", "harmonic_sigma2"),
            "hodge_laplacian_pinv": (),
        }[self.kind]
        for name in need:
            if getattr(self, name) is None:
                raise UsageError(f"kernel kind {self.kind!r} requires {name!r}")
        if self.kind == "subspace_edge" and self.block not in ("H", "G", "C"):
            raise UsageError("subspace block must be 'H', 'G' or 'C'")
        if self.kind == "hodge_laplacian_pinv" and self.sigma2 is None:
            object.__setattr__(self, "sigma2", 1.0)

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        for name in ("block", "harmonic_sigma2", "sigma2"):
            if getattr(self, name) is not None:
                d[name] = getattr(self, name)
        for name in ("fn", "gradient_fn", "curl_fn", "node_fn", "triangle_fn"):
            if getattr(self, name) is not None:
                d[name] = getattr(self, name).to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "KernelSpec":
        kw = dict(d)
        for name in ("fn", "gradient_fn", "curl_fn", "node_fn", "triangle_fn"):
            if name in kw:
                kw[name] = SpectrumFn.from_dict(kw[name])
        return cls(**kw)


@dataclass(frozen=True, eq=False)
class KernelMatrix:
    """A symmetric PSD covariance matrix with its construction provenance."""

    matrix: np.ndarray
    spec: KernelSpec | None = None
    provenance: str = ""

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        m = 0.5 * (m + m.T)  # enforce exact symmetry of the stored matrix
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @property
    def shape(self):
        return self.matrix.shape

    def validate(self, sym_tol: float = 1e-12, psd_tol: float = 1e-8) -> None:
        """Eigenvalue-level PSD check; raises NumericalError on failure."""
        m = self.matrix
        scale = max(np.abs(m).max(), 1e-300)
        if np.abs(m - m.T).max() > sym_tol * scale:
            raise NumericalError("kernel matrix is not symmetric")
        eigs = np.linalg.eigvalsh(m)
        if eigs[0] < -psd_tol * max(eigs[-1], 0.0):
            raise NumericalError(
                f"kernel matrix is not PSD: min eigenvalue {eigs[0]:g}"
            )


def _synth(vectors: np.ndarray, weights: np.ndarray) -> np.ndarray:
    return (vectors * weights) @ vectors.T


def _check_weights(w: np.ndarray, what: str) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise NumericalError(f"{what} produced invalid spectral weights")
    return w


def node_kernel(spectrum: LaplacianSpectrum, spec: KernelSpec) -> KernelMatrix:
    """Kernel on nodes: the spectral weight applied to the graph Laplacian."""
    if spec.kind not in ("node", "line_graph_node"):
        raise UsageError(f"expected a node kernel spec, got kind {spec.kind!r}")
    w = _check_weights(spec.fn(spectrum.values), "node kernel")
    return KernelMatrix(_synth(spectrum.vectors, w), spec, "node_kernel")


def line_graph_kernel(spectrum: LaplacianSpectrum, spec: KernelSpec) -> KernelMatrix:
    """Node kernel on the line graph: an edge kernel oblivious to triangles."""
    return node_kernel(spectrum, spec)


def _edge_eigensystem(spectrum) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(spectrum, HodgeSpectrum):
        return spectrum.basis(), spectrum.eigenvalues()
    if isinstance(spectrum, LaplacianSpectrum):
        return spectrum.vectors, spectrum.values
    raise UsageError("expected a HodgeSpectrum or LaplacianSpectrum")


def non_hc_edge_kernel(spectrum, spec: KernelSpec) -> KernelMatrix:
    """Edge kernel with one weight function over the whole L1 spectrum."""
    if spec.kind != "non_hc_edge":
        raise UsageError(f"expected a non_hc_edge spec, got kind {spec.kind!r}")
    vectors, values = _edge_eigensystem(spectrum)
    w = _check_weights(spec.fn(values), "edge kernel")
    return KernelMatrix(_synth(vectors, w), spec, "non_hc_edge_kernel")


def subspace_kernel(
    spectrum: HodgeSpectrum, block: str, fn: SpectrumFn
) -> KernelMatrix:
    """Kernel supported on a single Hodge subspace (zero matrix if empty).

    The harmonic block has all-zero eigenvalues, so only ``fn.sigma2`` enters.
    """
    vectors, values = spectrum.block(block)
    spec = KernelSpec(kind="subspace_edge", block=block[0].upper() if len(block) > 1 else block, fn=fn)
    if vectors.shape[1] == 0:
        return KernelMatrix(np.zeros((spectrum.n_edges,) * 2), spec, "subspace_kernel")
    if spec.block == "H":
        w = np.full(vectors.shape[1], fn.sigma2)
    else:
        w = _check_weights(fn(values), "subspace kernel")
    return KernelMatrix(_synth(vectors, w), spec, "subspace_kernel")


def hc_kernel(spectrum: HodgeSpectrum, spec: KernelSpec) -> KernelMatrix:
    """Hodge-compositional kernel: exact sum of the three subspace kernels."""
    if spec.kind != "hc_edge":
        raise UsageError(f"expected an hc_edge spec, got kind {spec.kind!r}")
    k_h = subspace_kernel(
        spectrum, "H", SpectrumFn("matern", sigma2=spec.harmonic_sigma2)
    )
    k_g = subspace_kernel(spectrum, "G", spec.gradient_fn)
    k_c = subspace_kernel(spectrum, "C", spec.curl_fn)
    return KernelMatrix(k_h.matrix + k_g.matrix + k_c.matrix, spec, "hc_kernel")


def grad_of_node_kernel(
    sc: SimplicialComplex2,
    node_spec: KernelSpec,
    method: str = "congruence",
    spectrum: HodgeSpectrum | None = None,
) -> KernelMatrix:
    """Edge kernel of the gradient of a node field.

    Two equivalent constructions: ``congruence`` computes ``b1.T @ K0 @ b1``
    from the node kernel, ``spectral`` puts weights ``lambda * psi0(lambda)``
    on the gradient eigenvectors.  Both annihilate curl and harmonic vectors.
    """
    if node_spec.kind != "node":
        raise UsageError(f"expected a node kernel spec, got kind {node_spec.kind!r}")
    out_spec = KernelSpec(kind="grad_of_node", node_fn=node_spec.fn)
    if method == "congruence":
        lap = laplacians(sc)
        k0 = node_kernel(laplacian_spectrum(lap.l0), node_spec)
        return KernelMatrix(sc.b1.T @ k0.matrix @ sc.b1, out_spec, "grad_of_node:congruence")
    if method == "spectral":
        from .spectral import eigendecompose

        spec = spectrum if spectrum is not None else eigendecompose(sc)
        lam = spec.gradient_values
        w = _check_weights(lam * node_spec.fn(lam), "grad-of-node kernel")
        return KernelMatrix(
            _synth(spec.gradient_vectors, w), out_spec, "grad_of_node:spectral"
        )
    raise UsageError(f"unknown construction method {method!r}")


def composed_hc_kernel(
    sc: SimplicialComplex2,
    node_spec: KernelSpec,
    tri_fn: SpectrumFn,
    harmonic_sigma2: float,
    spectrum: HodgeSpectrum | None = None,
) -> KernelMatrix:
    """Edge kernel composed from node, triangle and harmonic priors:
    ``K_H + b1.T @ K0 @ b1 + b2 @ K2 @ b2.T``."""
    if node_spec.kind != "node":
        raise UsageError(f"expected a node kernel spec, got kind {node_spec.kind!r}")
    from .spectral import eigendecompose

    spec = spectrum if spectrum is not None else eigendecompose(sc)
    out_spec = KernelSpec(
        kind="composed_hc",
        node_fn=node_spec.fn,
        triangle_fn=tri_fn,
        harmonic_sigma2=harmonic_sigma2,
    )
    k = harmonic_sigma2 * (spec.harmonic_vectors @ spec.harmonic_vectors.T)
    lap = laplacians(sc)
    k0 = node_kernel(laplacian_spectrum(lap.l0), node_spec)
    k = k + sc.b1.T @ k0.matrix @ sc.b1
    if sc.n_triangles:
        k2 = _synth(*_triangle_eigensystem(lap.l2, tri_fn))
        k = k + sc.b2 @ k2 @ sc.b2.T
    return KernelMatrix(k, out_spec, "composed_hc_kernel")


def _triangle_eigensystem(l2: np.ndarray, tri_fn: SpectrumFn):
    s2 = laplacian_spectrum(l2)
    return s2.vectors, _check_weights(tri_fn(s2.values), "triangle kernel")


def hodge_laplacian_pinv_kernel(
    spectrum: HodgeSpectrum, sigma2: float = 1.0
) -> KernelMatrix:
    """Pseudoinverse kernel ``sigma2 * (l1.T l1)^+``: weights ``lambda^-2`` on
    nonzero eigenvalues and zero on the harmonic block."""
    if spectrum.truncated:
        raise UsageError("the pseudoinverse kernel needs the full spectrum")
    spec = KernelSpec(kind="hodge_laplacian_pinv", sigma2=sigma2)
    k = np.zeros((spectrum.n_edges,) * 2)
    for block in ("G", "C"):
        vectors, values = spectrum.block(block)
        if vectors.shape[1]:
            k = k + _synth(vectors, sigma2 * values**-2.0)
    return KernelMatrix(k, spec, "hodge_laplacian_pinv_kernel")
