"""Gaussian processes for edge flows on simplicial 2-complexes.

The package models flow-type data on the edges of a graph-with-triangles
structure.  Edge functions split orthogonally into gradient (curl-free),
curl (divergence-free) and harmonic parts; the kernels here either treat the
whole edge Laplacian spectrum with one weight function or give each Hodge
subspace its own independently learned weights, which lets regression
discover which parts of a flow actually carry signal.

Typical use::

    from hodgegp import EdgeGPRegressor, synth_forex

    ds = synth_forex(noise=0.01, relative_noise=True, seed=7)
    model = EdgeGPRegressor(ds.complex, kernel="hc-matern").fit(
        ds.train_indices, ds.observations.values[ds.train_indices]
    )
    mean, std = model.predict(ds.test_indices, return_std=True)
"""

from .complexes import (
    Cochain,
    Laplacians,
    SimplicialComplex2,
    build_complex,
    curl,
    div,
    grad,
    laplacians,
    line_graph_laplacian,
)
from .data import (
    Dataset,
    load_dataset,
    load_flow_csv,
    random_complex,
    sample_hodge_flow,
    save_dataset,
    split,
    synth_forex,
)
from .errors import (
    ClassificationError,
    GenerationError,
    HodgeGPError,
    IngestionError,
    NumericalError,
    StructuralError,
    UsageError,
)
from .estimators import EdgeGPRegressor, HodgeDecomposition
from .gp import (
    KERNEL_NAMES,
    GPModel,
    KernelModel,
    PosteriorResult,
    build_model,
    component_posterior,
    fit,
    lml_and_gradient,
    log_marginal_likelihood,
    make_rng,
    metrics,
    posterior,
    predict,
    sample_prior,
)
from .kernels import (
    KernelMatrix,
    KernelSpec,
    SpectrumFn,
    composed_hc_kernel,
    grad_of_node_kernel,
    hc_kernel,
    hodge_laplacian_pinv_kernel,
    line_graph_kernel,
    node_kernel,
    non_hc_edge_kernel,
    subspace_kernel,
)
from .spectral import (
    HodgeComponents,
    HodgeSpectrum,
    LaplacianSpectrum,
    classify,
    edge_diffusion,
    eigendecompose,
    hodge_decompose,
    laplacian_spectrum,
)

__version__ = "0.1.0"
