"""Exact GP regression on Laplacian-spectrum kernels.

Hyperparameters live in unconstrained form and are mapped to positive values
through a softplus; amplitudes are parametrized as scales, so a variance is
``softplus(raw)^2``.  The marginal likelihood and its analytic gradient are
evaluated on a Cholesky factorization of the training covariance, with
spectrum-parameter derivatives propagated through the weight functions.
Fitting uses Adam (bias-corrected moments, betas 0.9/0.999, eps 1e-8) on the
negative log marginal likelihood.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.special

from .complexes import SimplicialComplex2, line_graph_laplacian
from .errors import NumericalError, UsageError
from .kernels import KernelMatrix, KernelSpec, SpectrumFn
from .spectral import HodgeSpectrum, eigendecompose, laplacian_spectrum

logger = logging.getLogger(__name__)

__all__ = [
    "KERNEL_NAMES",
    "GPModel",
    "PosteriorResult",
    "KernelModel",
    "build_model",
    "posterior",
    "component_posterior",
    "log_marginal_likelihood",
    "lml_and_gradient",
    "fit",
    "predict",
    "sample_prior",
    "metrics",
    "make_rng",
    "softplus",
    "inv_softplus",
]

KERNEL_NAMES = (
    "hc-matern",
    "hc-diffusion",
    "matern",
    "diffusion",
    "line-graph-matern",
    "line-graph-diffusion",
    "grad-of-node",
    "composed-hc",
    "hodge-pinv",
)

# Jitter escalation ladder applied to a failing Cholesky factorization,
# relative to the mean prior variance trace(K)/n.
_JITTER_LADDER = (0.0, 1e-8, 1e-6, 1e-4)


def make_rng(seed) -> np.random.Generator:
    """Seeded counter-based generator (Philox) used for every stochastic
    operation in the package; bit-reproducible across platforms."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def softplus(x):
    return np.logaddexp(0.0, x)


def _sigmoid(x):
    return scipy.special.expit(x)


def inv_softplus(y):
    """Inverse of softplus on (0, inf), stable at both ends."""
    y = np.maximum(np.asarray(y, dtype=float), 1e-300)
    return y + np.log(-np.expm1(-y))


def _weights(family, lam, sigma, kappa, nu, times_lambda):
    """Spectral weights of one block at constrained parameter values."""
    if family == "matern":
        a = 2.0 * nu / kappa**2 + lam
        w = sigma**2 * a ** (-nu)
    elif family == "diffusion":
        w = sigma**2 * np.exp(-0.5 * kappa**2 * lam)
    elif family == "scale":
        w = np.full_like(lam, sigma**2)
    elif family == "pinv":
        w = sigma**2 * lam**-2.0
    else:  # pragma: no cover
        raise UsageError(f"unknown weight family {family!r}")
    return w * lam if times_lambda else w


def _weights_and_partials(family, lam, sigma, kappa, nu, times_lambda, learn_nu):
    """Weights plus partial derivatives w.r.t. the constrained parameters."""
    partials = {}
    if family == "matern":
        a = 2.0 * nu / kappa**2 + lam
        p = a ** (-nu)
        w = sigma**2 * p
        partials["sigma"] = 2.0 * sigma * p
        partials["kappa"] = sigma**2 * 4.0 * nu**2 / kappa**3 * a ** (-nu - 1.0)
        if learn_nu:
            partials["nu"] = -w * (np.log(a) + 2.0 * nu / (kappa**2 * a))
    elif family == "diffusion":
        e = np.exp(-0.5 * kappa**2 * lam)
        w = sigma**2 * e
        partials["sigma"] = 2.0 * sigma * e
        partials["kappa"] = -w * kappa * lam
    elif family == "scale":
        w = np.full_like(lam, sigma**2)
        partials["sigma"] = np.full_like(lam, 2.0 * sigma)
    elif family == "pinv":
        ilam2 = lam**-2.0
        w = sigma**2 * ilam2
        partials["sigma"] = 2.0 * sigma * ilam2
    else:  # pragma: no cover
        raise UsageError(f"unknown weight family {family!r}")
    if times_lambda:
        w = w * lam
        partials = {k: v * lam for k, v in partials.items()}
    return w, partials


@dataclass
class _Block:
    component: str | None  # "harmonic" | "gradient" | "curl" | None
    basis: np.ndarray  # (n, m), fixed
    eigs: np.ndarray  # (m,)
    family: str  # "matern" | "diffusion" | "scale" | "pinv"
    param_idx: dict  # constrained-param name -> index into the raw vector
    times_lambda: bool = False
    fixed_nu: float | None = None

    def params(self, raw):
        sigma = softplus(raw[self.param_idx["sigma"]])
        kappa = softplus(raw[self.param_idx["kappa"]]) if "kappa" in self.param_idx else 1.0
        if "nu" in self.param_idx:
            nu = softplus(raw[self.param_idx["nu"]])
        else:
            nu = self.fixed_nu
        return sigma, kappa, nu

    def weights(self, raw):
        s, k, n = self.params(raw)
        return _weights(self.family, self.eigs, s, k, n, self.times_lambda)

    def weights_and_raw_grads(self, raw):
        s, k, n = self.params(raw)
        w, partials = _weights_and_partials(
            self.family, self.eigs, s, k, n, self.times_lambda, "nu" in self.param_idx
        )
        grads = {}
        for name, dw in partials.items():
            i = self.param_idx[name]
            grads[i] = dw * _sigmoid(raw[i])  # chain rule through softplus
        return w, grads


class KernelModel:
    """A parametric spectral kernel: fixed eigenbases, learnable weights.

    The full covariance is ``sum_b V_b diag(w_b(theta)) V_b.T`` over blocks
    with disjoint (or explicitly shared) parameters.  Blocks of Hodge-aware
    kernels carry a component tag, which is what enables the per-component
    posteriors.
    """

    def __init__(self, name: str, kind: str, n: int, blocks: list[_Block], param_names: list[str]):
        self.name = name
        self.kind = kind
        self.n = n
        self.blocks = blocks
        self.param_names = param_names

    @property
    def n_params(self) -> int:
        return len(self.param_names)

    @property
    def has_components(self) -> bool:
        return all(b.component is not None for b in self.blocks)

    def random_raw(self, rng: np.random.Generator) -> np.ndarray:
        return rng.standard_normal(self.n_params)

    def full_matrix(self, raw) -> np.ndarray:
        k = np.zeros((self.n, self.n))
        for b in self.blocks:
            k += (b.basis * b.weights(raw)) @ b.basis.T
        return k

    def component_matrices(self, raw) -> dict:
        """Per-component covariance matrices (zero if a component is absent)."""
        if not self.has_components:
            raise UsageError(
                f"kernel {self.name!r} has no Hodge component structure"
            )
        out = {c: np.zeros((self.n, self.n)) for c in ("harmonic", "gradient", "curl")}
        for b in self.blocks:
            out[b.component] += (b.basis * b.weights(raw)) @ b.basis.T
        return out

    def constrained(self, raw) -> dict:
        """Fitted parameter values per block, in natural units."""
        out = {}
        for b in self.blocks:
            s, k, n = b.params(raw)
            entry = {"sigma2": s**2}
            if b.family in ("matern", "diffusion"):
                entry["kappa"] = k
            if b.family == "matern":
                entry["nu"] = n
            key = b.component if b.component is not None else "spectrum"
            out[key] = entry
        return out

    def spectrum_table(self, raw) -> list[tuple[str, float, float]]:
        """Rows ``(block, lambda, psi(lambda))`` for the kernel-shape dump."""
        rows = []
        for b in self.blocks:
            w = b.weights(raw)
            label = b.component if b.component is not None else "all"
            rows.extend((label, float(l), float(v)) for l, v in zip(b.eigs, w))
        return rows

    def to_spec(self, raw) -> KernelSpec:
        """A declarative KernelSpec carrying the constrained parameters."""
        c = self.constrained(raw)
        family = "diffusion" if "diffusion" in self.name else "matern"

        def fn(entry, fam=family):
            if entry is None:
                return SpectrumFn(fam, sigma2=0.0)
            # kappa/nu can underflow to 0 in degenerate fits; clamp so the
            # provenance spec stays constructible
            kw = {"sigma2": entry["sigma2"]}
            if "kappa" in entry:
                kw["kappa"] = max(entry["kappa"], 1e-12)
            if "nu" in entry:
                kw["nu"] = max(entry["nu"], 1e-12)
            return SpectrumFn(fam, **kw)

        if self.kind == "hc_edge":
            h = c.get("harmonic", {"sigma2": 0.0})
            return KernelSpec(
                kind="hc_edge",
                harmonic_sigma2=h["sigma2"],
                gradient_fn=fn(c.get("gradient")),
                curl_fn=fn(c.get("curl")),
            )
        if self.kind in ("non_hc_edge", "node", "line_graph_node"):
            return KernelSpec(kind=self.kind, fn=fn(c["spectrum"]))
        if self.kind == "grad_of_node":
            return KernelSpec(kind="grad_of_node", node_fn=fn(c["gradient"]))
        if self.kind == "composed_hc":
            h = c.get("harmonic", {"sigma2": 0.0})
            return KernelSpec(
                kind="composed_hc",
                node_fn=fn(c.get("gradient")),
                triangle_fn=fn(c.get("curl")),
                harmonic_sigma2=h["sigma2"],
            )
        if self.kind == "hodge_laplacian_pinv":
            some = c.get("gradient") or c.get("curl")
            return KernelSpec(kind="hodge_laplacian_pinv", sigma2=some["sigma2"])
        if self.kind == "subspace_edge":
            comp = self.blocks[0].component
            letter = {"harmonic": "H", "gradient": "G", "curl": "C"}[comp]
            return KernelSpec(kind="subspace_edge", block=letter, fn=fn(c[comp]))
        raise UsageError(f"cannot serialize kernel kind {self.kind!r}")

    def raw_from_spec(self, spec: KernelSpec) -> np.ndarray:
        """Unconstrained parameters reproducing a KernelSpec's numeric values."""
        raw = np.zeros(self.n_params)

        def put(block, entry):
            raw[block.param_idx["sigma"]] = inv_softplus(math.sqrt(max(entry.get("sigma2", 1.0), 0.0)))
            if "kappa" in block.param_idx:
                raw[block.param_idx["kappa"]] = inv_softplus(entry.get("kappa", 1.0))
            if "nu" in block.param_idx:
                raw[block.param_idx["nu"]] = inv_softplus(entry.get("nu", 1.5))

        by_component = _spec_block_params(spec)
        for b in self.blocks:
            key = b.component if b.component is not None else "spectrum"
            put(b, by_component[key])
        return raw


def _spec_block_params(spec: KernelSpec) -> dict:
    def d(fn):
        return fn.to_dict() if fn is not None else {}

    if spec.kind == "hc_edge":
        return {
            "harmonic": {"sigma2": spec.harmonic_sigma2},
            "gradient": d(spec.gradient_fn),
            "curl": d(spec.curl_fn),
        }
    if spec.kind in ("node", "non_hc_edge", "line_graph_node"):
        return {"spectrum": d(spec.fn)}
    if spec.kind == "subspace_edge":
        block = {"H": "harmonic", "G": "gradient", "C": "curl"}[spec.block]
        return {block: d(spec.fn)}
    if spec.kind == "grad_of_node":
        return {"gradient": d(spec.node_fn)}
    if spec.kind == "composed_hc":
        return {
            "harmonic": {"sigma2": spec.harmonic_sigma2},
            "gradient": d(spec.node_fn),
            "curl": d(spec.triangle_fn),
        }
    if spec.kind == "hodge_laplacian_pinv":
        return {"gradient": {"sigma2": spec.sigma2}, "curl": {"sigma2": spec.sigma2}}
    raise UsageError(f"unknown kernel kind {spec.kind!r}")


def build_model(
    kernel,
    sc: SimplicialComplex2 | None = None,
    spectrum: HodgeSpectrum | None = None,
    *,
    learn_nu: bool = True,
    fixed_nu: float = 1.5,
) -> KernelModel:
    """Assemble the parametric model for a named kernel or a KernelSpec.

    ``kernel`` is one of the names in :data:`KERNEL_NAMES` or a
    :class:`~hodgegp.kernels.KernelSpec`.  Hodge kernels need ``spectrum``
    (computed from ``sc`` when omitted); the line-graph kernels need ``sc``.
    Empty Hodge blocks are dropped: their processes are identically zero and
    carry no parameters.
    """
    spec = None
    if isinstance(kernel, KernelSpec):
        spec = kernel
        name = {
            "hc_edge": "hc",
            "non_hc_edge": "non-hc",
            "node": "node",
            "line_graph_node": "line-graph",
            "subspace_edge": f"subspace-{kernel.block}",
            "grad_of_node": "grad-of-node",
            "composed_hc": "composed-hc",
            "hodge_laplacian_pinv": "hodge-pinv",
        }[kernel.kind]
        kind = kernel.kind
        family = "matern"
        for f in (kernel.fn, kernel.gradient_fn, kernel.node_fn):
            if f is not None:
                family = f.family
                break
    elif kernel in KERNEL_NAMES:
        name = kernel
        family = "diffusion" if "diffusion" in kernel else "matern"
        kind = {
            "hc-matern": "hc_edge",
            "hc-diffusion": "hc_edge",
            "matern": "non_hc_edge",
            "diffusion": "non_hc_edge",
            "line-graph-matern": "line_graph_node",
            "line-graph-diffusion": "line_graph_node",
            "grad-of-node": "grad_of_node",
            "composed-hc": "composed_hc",
            "hodge-pinv": "hodge_laplacian_pinv",
        }[kernel]
    else:
        raise UsageError(f"unknown kernel {kernel!r}; expected one of {KERNEL_NAMES}")

    if kind == "line_graph_node":
        if sc is None:
            raise UsageError("line-graph kernels need the complex")
        lg = laplacian_spectrum(line_graph_laplacian(sc))
        basis, eigs = lg.vectors, lg.values
        n = basis.shape[0]
        blocks, names = [], []
        _add_block(blocks, names, None, basis, eigs, family, learn_nu, fixed_nu, prefix="spectrum")
        model = KernelModel(name, kind, n, blocks, names)
    else:
        if spectrum is None:
            if sc is None:
                raise UsageError("need a complex or a precomputed spectrum")
            spectrum = eigendecompose(sc)
        n = spectrum.n_edges
        blocks, names = [], []
        if kind == "non_hc_edge":
            _add_block(
                blocks, names, None, spectrum.basis(), spectrum.eigenvalues(),
                family, learn_nu, fixed_nu, prefix="spectrum",
            )
        elif kind == "hc_edge":
            if spectrum.n_harmonic:
                _add_block(blocks, names, "harmonic", *spectrum.block("H"), "scale", False, None)
            _add_block(blocks, names, "gradient", *spectrum.block("G"), family, learn_nu, fixed_nu)
            if spectrum.n_curl:
                _add_block(blocks, names, "curl", *spectrum.block("C"), family, learn_nu, fixed_nu)
        elif kind == "subspace_edge":
            comp = {"H": "harmonic", "G": "gradient", "C": "curl"}[spec.block]
            fam = "scale" if comp == "harmonic" else family
            vecs, vals = spectrum.block(spec.block)
            _add_block(blocks, names, comp, vecs, vals, fam, learn_nu, fixed_nu)
        elif kind == "grad_of_node":
            _add_block(
                blocks, names, "gradient", *spectrum.block("G"), family,
                learn_nu, fixed_nu, times_lambda=True,
            )
        elif kind == "composed_hc":
            if spectrum.n_harmonic:
                _add_block(blocks, names, "harmonic", *spectrum.block("H"), "scale", False, None)
            _add_block(
                blocks, names, "gradient", *spectrum.block("G"), family,
                learn_nu, fixed_nu, times_lambda=True,
            )
            if spectrum.n_curl:
                _add_block(
                    blocks, names, "curl", *spectrum.block("C"), family,
                    learn_nu, fixed_nu, times_lambda=True,
                )
        elif kind == "hodge_laplacian_pinv":
            if spectrum.truncated:
                raise UsageError("the pseudoinverse kernel needs the full spectrum")
            names.append("sigma")
            shared = {"sigma": 0}
            g_vecs, g_vals = spectrum.block("G")
            blocks.append(_Block("gradient", g_vecs, g_vals, "pinv", shared))
            if spectrum.n_curl:
                c_vecs, c_vals = spectrum.block("C")
                blocks.append(_Block("curl", c_vecs, c_vals, "pinv", shared))
        else:  # pragma: no cover
            raise UsageError(f"unhandled kernel kind {kind!r}")
        model = KernelModel(name, kind, n, blocks, names)

    if not model.blocks or all(b.basis.shape[1] == 0 for b in model.blocks):
        raise UsageError(f"kernel {name!r} has no active spectral modes on this complex")
    return model


def _add_block(blocks, names, component, basis, eigs, family, learn_nu, fixed_nu,
               times_lambda=False, prefix=None):
    if basis.shape[1] == 0:
        return
    prefix = prefix or component
    idx = {"sigma": len(names)}
    names.append(f"{prefix}.sigma")
    fixed = None
    if family in ("matern", "diffusion"):
        idx["kappa"] = len(names)
        names.append(f"{prefix}.kappa")
    if family == "matern":
        if learn_nu:
            idx["nu"] = len(names)
            names.append(f"{prefix}.nu")
        else:
            fixed = fixed_nu
    blocks.append(
        _Block(component, np.asarray(basis, float), np.asarray(eigs, float),
               family, idx, times_lambda=times_lambda, fixed_nu=fixed)
    )


# ---------------------------------------------------------------------------
# Exact conditioning


@dataclass(frozen=True, eq=False)
class PosteriorResult:
    """Predictive mean and variance at test simplices, plus optional
    per-Hodge-component posteriors."""

    test_indices: np.ndarray
    mean: np.ndarray
    variance: np.ndarray
    noise_variance: float = 0.0
    components: dict | None = None  # name -> (mean, variance)

    def component_mean_sum(self) -> np.ndarray:
        if self.components is None:
            raise UsageError("no component posteriors were computed")
        return sum(m for m, _ in self.components.values())


def _as_matrix(k) -> np.ndarray:
    return k.matrix if isinstance(k, KernelMatrix) else np.asarray(k, dtype=float)


def _check_indices(idx, n, what) -> np.ndarray:
    idx = np.asarray(idx, dtype=int).ravel()
    if idx.size == 0:
        raise UsageError(f"{what} index set is empty")
    if idx.min() < 0 or idx.max() >= n:
        raise UsageError(f"{what} indices out of range [0, {n})")
    if len(np.unique(idx)) != len(idx):
        raise UsageError(f"{what} indices contain duplicates")
    return idx


def _chol_with_jitter(c: np.ndarray, scale: float):
    if not np.all(np.isfinite(c)):
        raise NumericalError("covariance contains non-finite entries")
    for jitter in _JITTER_LADDER:
        try:
            chol = scipy.linalg.cholesky(
                c + jitter * scale * np.eye(c.shape[0]), lower=True
            )
            if jitter:
                logger.debug("cholesky needed jitter %.1e * %.3e", jitter, scale)
            return chol
        except scipy.linalg.LinAlgError:
            continue
    raise NumericalError(
        "covariance factorization failed even with jitter "
        f"{_JITTER_LADDER[-1]:g} * trace/n"
    )


def posterior(k, train_idx, y, noise_variance: float, test_idx) -> PosteriorResult:
    """Exact GP conditioning via a Cholesky factorization (never an explicit
    inverse).  Negative predictive variances beyond roundoff are clamped."""
    k = _as_matrix(k)
    n = k.shape[0]
    tr = _check_indices(train_idx, n, "train")
    te = _check_indices(test_idx, n, "test")
    y = np.asarray(y, dtype=float).ravel()
    if y.shape != tr.shape:
        raise UsageError("y must align with train_idx")
    if noise_variance < 0:
        raise UsageError("noise variance must be non-negative")

    k_tr = k[np.ix_(tr, tr)]
    scale = max(np.trace(k_tr) / len(tr), 1e-30)
    chol = _chol_with_jitter(k_tr + noise_variance * np.eye(len(tr)), scale)
    alpha = scipy.linalg.cho_solve((chol, True), y)
    k_cross = k[np.ix_(tr, te)]
    mean = k_cross.T @ alpha
    v = scipy.linalg.solve_triangular(chol, k_cross, lower=True)
    variance = np.clip(np.diag(k)[te] - np.sum(v**2, axis=0), 0.0, None)
    return PosteriorResult(te, mean, variance, noise_variance)


def _component_posterior_from_matrices(
    component_mats: dict, train_idx, y, noise_variance: float, test_idx
) -> PosteriorResult:
    mats = list(component_mats.values())
    k1 = sum(mats)
    n = k1.shape[0]
    tr = _check_indices(train_idx, n, "train")
    te = _check_indices(test_idx, n, "test")
    y = np.asarray(y, dtype=float).ravel()
    if y.shape != tr.shape:
        raise UsageError("y must align with train_idx")

    k_tr = k1[np.ix_(tr, tr)]
    scale = max(np.trace(k_tr) / len(tr), 1e-30)
    chol = _chol_with_jitter(k_tr + noise_variance * np.eye(len(tr)), scale)
    alpha = scipy.linalg.cho_solve((chol, True), y)

    components = {}
    for name, km in component_mats.items():
        cross = km[np.ix_(tr, te)]
        c_mean = cross.T @ alpha
        v = scipy.linalg.solve_triangular(chol, cross, lower=True)
        c_var = np.clip(np.diag(km)[te] - np.sum(v**2, axis=0), 0.0, None)
        components[name] = (c_mean, c_var)

    cross = k1[np.ix_(tr, te)]
    mean = cross.T @ alpha
    v = scipy.linalg.solve_triangular(chol, cross, lower=True)
    variance = np.clip(np.diag(k1)[te] - np.sum(v**2, axis=0), 0.0, None)
    return PosteriorResult(te, mean, variance, noise_variance, components)


def component_posterior(
    spectrum: HodgeSpectrum, hc_spec: KernelSpec, train_idx, y,
    noise_variance: float, test_idx,
) -> PosteriorResult:
    """Joint posterior of the edge function and its three Hodge components.

    The component means are conditioned on the same noisy observations as the
    full posterior and sum to its mean exactly (the cross-covariances of a
    Hodge-structured prior are the per-component kernels themselves).
    """
    model = build_model(hc_spec, spectrum=spectrum)
    if not model.has_components:
        raise UsageError("component posteriors need a Hodge-structured kernel")
    raw = model.raw_from_spec(hc_spec)
    return _component_posterior_from_matrices(
        model.component_matrices(raw), train_idx, y, noise_variance, test_idx
    )


def log_marginal_likelihood(k, train_idx, y, noise_variance: float) -> float:
    """Gaussian log-density of y under the prior restricted to train_idx."""
    k = _as_matrix(k)
    tr = _check_indices(train_idx, k.shape[0], "train")
    y = np.asarray(y, dtype=float).ravel()
    k_tr = k[np.ix_(tr, tr)]
    scale = max(np.trace(k_tr) / len(tr), 1e-30)
    chol = _chol_with_jitter(k_tr + noise_variance * np.eye(len(tr)), scale)
    alpha = scipy.linalg.cho_solve((chol, True), y)
    return float(
        -0.5 * y @ alpha
        - np.sum(np.log(np.diag(chol)))
        - 0.5 * len(tr) * np.log(2.0 * np.pi)
    )


def lml_and_gradient(
    model: KernelModel, raw_all: np.ndarray, train_idx, y, noise_floor: float = 0.0,
    _v_trs: list | None = None,
):
    """Log marginal likelihood and its gradient w.r.t. the unconstrained
    parameters ``[kernel raws..., noise raw]``.

    The noise variance is ``noise_floor + softplus(raw_noise)^2``.  Gradients
    use the trace identity on the factorized system; per-block they reduce to
    ``0.5 * sum_k dw_k * ((V.T alpha)_k^2 - (V.T C^-1 V)_kk)``.
    """
    raw_all = np.asarray(raw_all, dtype=float)
    raw, raw_noise = raw_all[:-1], raw_all[-1]
    tr = _check_indices(train_idx, model.n, "train")
    y = np.asarray(y, dtype=float).ravel()
    n = len(tr)
    v_trs = _v_trs if _v_trs is not None else [b.basis[tr] for b in model.blocks]

    noise_scale = softplus(raw_noise)
    noise_var = noise_floor + noise_scale**2

    weights, grads = [], []
    for b in model.blocks:
        w, g = b.weights_and_raw_grads(raw)
        weights.append(w)
        grads.append(g)

    c = noise_var * np.eye(n)
    for v_tr, w in zip(v_trs, weights):
        c += (v_tr * w) @ v_tr.T
    scale = max(np.trace(c) / n, 1e-30)
    chol = _chol_with_jitter(c, scale)
    alpha = scipy.linalg.cho_solve((chol, True), y)
    c_inv = scipy.linalg.cho_solve((chol, True), np.eye(n))

    lml = float(
        -0.5 * y @ alpha - np.sum(np.log(np.diag(chol))) - 0.5 * n * np.log(2 * np.pi)
    )

    grad = np.zeros(len(raw_all))
    for v_tr, g in zip(v_trs, grads):
        if not g:
            continue
        p = v_tr.T @ alpha
        q = np.einsum("ij,ij->j", v_tr, c_inv @ v_tr)
        base = p**2 - q
        for i, dw in g.items():
            grad[i] += 0.5 * float(dw @ base)
    # noise: dC/d(noise_var) = I
    dlml_dnoise = 0.5 * (alpha @ alpha - np.trace(c_inv))
    grad[-1] = dlml_dnoise * 2.0 * noise_scale * _sigmoid(raw_noise)
    return lml, grad


@dataclass
class GPModel:
    """A fitted GP: kernel spec with learned values, noise, data, and the
    optimizer trace."""

    kernel_spec: KernelSpec
    noise_variance: float
    train_indices: np.ndarray
    train_values: np.ndarray
    fitted: bool
    loss_trace: np.ndarray
    raw_params: np.ndarray
    param_names: list
    model: KernelModel = field(repr=False, default=None)

    def constrained_params(self) -> dict:
        return self.model.constrained(self.raw_params[:-1])


def fit(
    model: KernelModel,
    train_idx,
    y,
    *,
    iters: int = 1000,
    lr: float = 1e-3,
    seed: int = 0,
    noise_init_fraction: float = 1.0,
    init_raw: np.ndarray | None = None,
) -> GPModel:
    """Maximize the marginal likelihood with Adam; deterministic per seed.

    Kernel parameters are initialized from standard normals in unconstrained
    space.  The noise variance starts at ``noise_init_fraction * var(y)``
    (default: all of the data variance, so structure has to win variance away
    from noise rather than fight an under-dispersed start) and keeps a floor
    of ``1e-6 * var(y)`` throughout.
    """
    tr = _check_indices(train_idx, model.n, "train")
    y = np.asarray(y, dtype=float).ravel()
    if y.shape != tr.shape:
        raise UsageError("y must align with train_idx")
    var_y = float(np.var(y))
    noise_floor = 1e-6 * var_y
    if init_raw is not None:
        raw = np.asarray(init_raw, dtype=float).copy()
        if raw.shape != (model.n_params,):
            raise UsageError(f"init_raw must have length {model.n_params}")
    else:
        raw = model.random_raw(make_rng(seed))
    noise_init = max(noise_init_fraction * var_y, noise_floor, 1e-12)
    raw_all = np.concatenate([raw, [float(inv_softplus(math.sqrt(noise_init)))]])
    v_trs = [b.basis[tr] for b in model.blocks]

    m = np.zeros_like(raw_all)
    v = np.zeros_like(raw_all)
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    trace = np.empty(iters + 1)
    for t in range(1, iters + 1):
        try:
            lml, grad = lml_and_gradient(model, raw_all, tr, y, noise_floor, _v_trs=v_trs)
        except NumericalError as exc:
            raise NumericalError(
                f"{exc} at iteration {t}; parameter snapshot: "
                f"{dict(zip(list(model.param_names) + ['noise'], raw_all))}"
            ) from exc
        loss, g = -lml, -grad
        if not np.isfinite(loss) or not np.all(np.isfinite(g)):
            raise NumericalError(
                f"non-finite loss at iteration {t}; parameter snapshot: "
                f"{dict(zip(list(model.param_names) + ['noise'], raw_all))}"
            )
        trace[t - 1] = loss
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g**2
        m_hat = m / (1 - beta1**t)
        v_hat = v / (1 - beta2**t)
        raw_all = raw_all - lr * m_hat / (np.sqrt(v_hat) + eps)

    final_lml, _ = lml_and_gradient(model, raw_all, tr, y, noise_floor, _v_trs=v_trs)
    trace[iters] = -final_lml
    noise_var = noise_floor + softplus(raw_all[-1]) ** 2
    return GPModel(
        kernel_spec=model.to_spec(raw_all[:-1]),
        noise_variance=float(noise_var),
        train_indices=tr,
        train_values=y,
        fitted=True,
        loss_trace=trace,
        raw_params=raw_all,
        param_names=list(model.param_names) + ["noise"],
        model=model,
    )


def predict(gp: GPModel, test_idx, components: bool = False) -> PosteriorResult:
    """Posterior prediction from a fitted GP at the given edge indices."""
    if not gp.fitted:
        raise UsageError("model is not fitted")
    raw = gp.raw_params[:-1]
    if components:
        return _component_posterior_from_matrices(
            gp.model.component_matrices(raw),
            gp.train_indices, gp.train_values, gp.noise_variance, test_idx,
        )
    return posterior(
        gp.model.full_matrix(raw),
        gp.train_indices, gp.train_values, gp.noise_variance, test_idx,
    )


def sample_prior(spectrum_or_model, spec: KernelSpec | None = None, seed: int = 0,
                 count: int = 1) -> np.ndarray:
    """Draw prior samples ``U diag(sqrt(psi)) z`` with standard-normal z.

    Accepts either ``(spectrum, spec)`` or a prebuilt :class:`KernelModel`
    whose spec supplies its parameters.  Returns an array (count, n).
    """
    if isinstance(spectrum_or_model, KernelModel):
        model = spectrum_or_model
        if spec is None:
            raise UsageError("need a KernelSpec with parameter values")
    else:
        model = build_model(spec, spectrum=spectrum_or_model)
    raw = model.raw_from_spec(spec)
    rng = make_rng(seed)
    out = np.zeros((count, model.n))
    for b in model.blocks:
        w = b.weights(raw)
        z = rng.standard_normal((b.basis.shape[1], count))
        out += (b.basis @ (np.sqrt(np.clip(w, 0.0, None))[:, None] * z)).T
    return out


def metrics(pred: PosteriorResult, truth) -> tuple[float, float]:
    """RMSE of the predictive mean and mean negative log predictive density
    of the truth under ``N(mean, variance + noise_variance)``."""
    truth = np.asarray(truth, dtype=float).ravel()
    if truth.size == 0:
        raise UsageError("empty test set")
    if truth.shape != pred.mean.shape:
        raise UsageError("truth must align with the predicted test set")
    resid = truth - pred.mean
    rmse = float(np.sqrt(np.mean(resid**2)))
    var = np.maximum(pred.variance + pred.noise_variance, 1e-300)
    nlpd = float(np.mean(0.5 * np.log(2 * np.pi * var) + resid**2 / (2 * var)))
    return rmse, nlpd
