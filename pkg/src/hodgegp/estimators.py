"""Scikit-learn style estimators over edge flows.

``X`` is always an integer array of edge indices into the canonical edge list
of the complex passed at construction, so fitted models compose with the
usual sklearn tooling (``get_params``, cloning, pipelines over index arrays).
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.exceptions import NotFittedError

from . import gp
from .complexes import SimplicialComplex2
from .errors import UsageError
from .spectral import eigendecompose, hodge_decompose

__all__ = ["EdgeGPRegressor", "HodgeDecomposition"]


def _validate_edge_indices(X, n_edges: int, *, unique: bool) -> np.ndarray:
    X = np.asarray(X)
    if X.ndim == 2 and X.shape[1] == 1:
        X = X[:, 0]
    if X.ndim != 1:
        raise UsageError("X must be a 1-d array (or column) of edge indices")
    if not np.issubdtype(X.dtype, np.integer):
        Xi = X.astype(int)
        if not np.array_equal(Xi, X):
            raise UsageError("edge indices must be integers")
        X = Xi
    if X.size and (X.min() < 0 or X.max() >= n_edges):
        raise UsageError(f"edge indices out of range [0, {n_edges})")
    if unique and len(np.unique(X)) != len(X):
        raise UsageError("training edge indices must be unique")
    return X


class EdgeGPRegressor(RegressorMixin, BaseEstimator):
    """Exact GP regression of an edge flow on a simplicial 2-complex.

    Parameters
    ----------
    complex : SimplicialComplex2
        The domain; predictions are indexed by its canonical edge order.
    kernel : str
        One of ``hodgegp.gp.KERNEL_NAMES`` (default ``"hc-matern"``).
    iters, lr : optimizer budget and learning rate for the marginal
        likelihood maximization.
    learn_nu : learn the Matern smoothness jointly; when False it is fixed
        at ``fixed_nu``.
    truncate : keep only this many of the largest nonzero Laplacian
        eigenpairs (the harmonic block is always kept in full).
    noise_init : initial noise variance as a fraction of ``var(y)``.
    random_state : seed for the hyperparameter initialization.

    Attributes
    ----------
    gp_ : fitted :class:`hodgegp.gp.GPModel`
    spectrum_ : the Hodge spectrum the kernel was built on (Hodge kernels)
    """

    def __init__(
        self,
        complex: SimplicialComplex2 | None = None,
        kernel: str = "hc-matern",
        *,
        iters: int = 1000,
        lr: float = 1e-3,
        learn_nu: bool = True,
        fixed_nu: float = 1.5,
        truncate: int | None = None,
        noise_init: float = 1e-2,
        random_state: int = 0,
    ):
        self.complex = complex
        self.kernel = kernel
        self.iters = iters
        self.lr = lr
        self.learn_nu = learn_nu
        self.fixed_nu = fixed_nu
        self.truncate = truncate
        self.noise_init = noise_init
        self.random_state = random_state

    def _spectrum(self):
        if self.kernel in ("line-graph-matern", "line-graph-diffusion"):
            return None
        return eigendecompose(self.complex, truncation=self.truncate)

    def fit(self, X, y):
        if self.complex is None:
            raise UsageError("EdgeGPRegressor needs a complex")
        X = _validate_edge_indices(X, self.complex.n_edges, unique=True)
        y = np.asarray(y, dtype=float).ravel()
        if y.shape != X.shape:
            raise UsageError("y must have one value per training edge")
        self.spectrum_ = self._spectrum()
        self.model_ = gp.build_model(
            self.kernel,
            sc=self.complex,
            spectrum=self.spectrum_,
            learn_nu=self.learn_nu,
            fixed_nu=self.fixed_nu,
        )
        self.gp_ = gp.fit(
            self.model_,
            X,
            y,
            iters=self.iters,
            lr=self.lr,
            seed=self.random_state,
            noise_init_fraction=self.noise_init,
        )
        self.noise_variance_ = self.gp_.noise_variance
        self.loss_trace_ = self.gp_.loss_trace
        return self

    def _check_fitted(self):
        if not hasattr(self, "gp_"):
            raise NotFittedError("EdgeGPRegressor is not fitted yet")

    def predict(self, X, return_std: bool = False):
        self._check_fitted()
        X = _validate_edge_indices(X, self.complex.n_edges, unique=False)
        uniq, inverse = np.unique(X, return_inverse=True)
        post = gp.predict(self.gp_, uniq)
        mean = post.mean[inverse]
        if return_std:
            return mean, np.sqrt(post.variance)[inverse]
        return mean

    def predict_components(self, X):
        """Posterior mean and variance of the harmonic, gradient and curl
        parts of the flow; returns ``{name: (mean, variance)}``."""
        self._check_fitted()
        X = _validate_edge_indices(X, self.complex.n_edges, unique=False)
        uniq, inverse = np.unique(X, return_inverse=True)
        post = gp.predict(self.gp_, uniq, components=True)
        return {k: (m[inverse], v[inverse]) for k, (m, v) in post.components.items()}

    def log_marginal_likelihood(self) -> float:
        self._check_fitted()
        lml, _ = gp.lml_and_gradient(
            self.gp_.model,
            self.gp_.raw_params,
            self.gp_.train_indices,
            self.gp_.train_values,
            1e-6 * float(np.var(self.gp_.train_values)),
        )
        return lml


class HodgeDecomposition(TransformerMixin, BaseEstimator):
    """Transformer splitting edge-flow rows into their Hodge components.

    ``transform`` maps an (n_samples, n_edges) array to
    (n_samples, 3 * n_edges): harmonic, gradient and curl parts concatenated.
    ``inverse_transform`` sums them back.
    """

    def __init__(self, complex: SimplicialComplex2 | None = None):
        self.complex = complex

    def fit(self, X=None, y=None):
        if self.complex is None:
            raise UsageError("HodgeDecomposition needs a complex")
        self.n_features_in_ = self.complex.n_edges
        return self

    def transform(self, X):
        if not hasattr(self, "n_features_in_"):
            raise NotFittedError("HodgeDecomposition is not fitted yet")
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.complex.n_edges:
            raise UsageError(f"expected rows of length {self.complex.n_edges}")
        out = np.empty((X.shape[0], 3 * X.shape[1]))
        for i, row in enumerate(X):
            parts = hodge_decompose(self.complex, row)
            out[i] = np.concatenate(
                [parts.f_h.values, parts.f_g.values, parts.f_c.values]
            )
        return out

    def inverse_transform(self, Xt):
        Xt = np.atleast_2d(np.asarray(Xt, dtype=float))
        n = self.complex.n_edges
        if Xt.shape[1] != 3 * n:
            raise UsageError(f"expected rows of length {3 * n}")
        return Xt[:, :n] + Xt[:, n : 2 * n] + Xt[:, 2 * n :]
