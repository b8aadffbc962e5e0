"""Bayesian spatio-temporal Poisson regression on areal graphs.

Conditional-autoregressive latent fields (ICAR, PCAR, LCAR, BYM) coupled
with an AR(1) in time, penalised-complexity priors derived from explicit
Kullback-Leibler divergences, nested Laplace inference with WAIC model
comparison, and eigenvector-based spatial-confounding correction.
"""

from .confounding import FilterSpec, apply_filter, spatial_plus_filter
from .data import (
    DataValidationError,
    Dataset,
    export_results,
    load_dataset,
    log_incidence,
    save_dataset,
)
from .fields import SpaceTimeField, ar1_precision, joint_precision, log_density, sample_constrained
from .graphs import (
    Graph,
    GraphError,
    Spectrum,
    build_graph,
    lattice_graph,
    random_connected_graph,
    read_adjacency_csv,
    read_edge_list,
    scaled_laplacian,
    spectrum,
)
from .inference import (
    FitResult,
    GridConfig,
    Hyper,
    InferenceError,
    ModelSpec,
    RateRatio,
    WaicReport,
    fit,
    laplace_inner,
    make_spec,
    rate_ratio,
    waic,
)
from .priors import (
    PcPrior,
    PriorError,
    UniformPrior,
    calibrate,
    kld_ar1,
    kld_bym,
    kld_dense,
    kld_lcar,
    kld_pcar,
)
from .simulate import SimConfig, SimulationError, simulate
from .structures import (
    SpatialStructure,
    StructureError,
    build_structure,
    log_generalized_det,
    structure_covariance_eigs,
)

__version__ = "0.1.0"
