"""Deformed isotropic random fields: simulation and deformation recovery.

The observation model is Y = Z(finv(.)) for an isotropic Gaussian field
Z with fractional local behavior and an orientation-preserving planar
map finv.  From one dense realization the package estimates the fractal
index, the local dilatation and scale of the map, and rebuilds the map
itself up to a rigid motion.
"""

from .config import PipelineConfig, parse_config, read_config, write_config
from .conformal import (
    DiskTransform,
    HarmonicFit,
    align_rigid,
    compose_estimate,
    distance_d1,
    distance_d2,
    embed_to_disk,
    fit_log_scale,
    integrate_hprime,
)
from .diskgeom import (
    EllipseParams,
    ellipse_to_mu,
    frechet_mean,
    hyperbolic_distance,
    interpolate_dilatation,
    mobius_diff,
    mu_to_ellipse,
    smooth_dilatation,
)
from .errors import (
    ConfigError,
    DeformFieldError,
    EstimationError,
    FlowError,
    NumericalError,
    OrientationError,
    SimulationError,
)
from .fields import (
    CovarianceModel,
    DeformationSpec,
    SampleField,
    add_noise,
    apply_deformation,
    covariance_eval,
    covariance_polynomial_part,
    empirical_variogram,
    g_alpha,
    numeric_dilatation,
    p_alpha,
    simulate_isotropic,
    simulation_blocks,
    variogram_slope,
)
from .flow import FlowState, flow_step, poisson_solve_dirichlet, reconstruct_map, sigma_field
from .grids import ComplexGrid, Grid, grid_sample, read_grd, write_grd, write_grid_csv
from .increments import ContrastMatrix, increment_matrix, monomial_basis
from .likelihood import (
    AnisotropyParams,
    DilatationScaleField,
    NeighborhoodPartition,
    aniso_g,
    estimate_alpha,
    estimate_field,
    estimate_theta,
    neg_loglik_alpha,
    partition_grid,
)
from .pipeline import (
    run_pipeline,
    stage_estimate,
    stage_evaluate,
    stage_reconstruct,
    stage_simulate,
)

__version__ = "0.1.0"

__all__ = [
    "AnisotropyParams",
    "ComplexGrid",
    "ConfigError",
    "ContrastMatrix",
    "CovarianceModel",
    "DeformFieldError",
    "DeformationSpec",
    "DilatationScaleField",
    "DiskTransform",
    "EllipseParams",
    "EstimationError",
    "FlowError",
    "FlowState",
    "Grid",
    "HarmonicFit",
    "NeighborhoodPartition",
    "NumericalError",
    "OrientationError",
    "PipelineConfig",
    "SampleField",
    "SimulationError",
    "add_noise",
    "align_rigid",
    "aniso_g",
    "apply_deformation",
    "compose_estimate",
    "covariance_eval",
    "covariance_polynomial_part",
    "distance_d1",
    "distance_d2",
    "ellipse_to_mu",
    "embed_to_disk",
    "empirical_variogram",
    "estimate_alpha",
    "estimate_field",
    "estimate_theta",
    "fit_log_scale",
    "flow_step",
    "frechet_mean",
    "g_alpha",
    "grid_sample",
    "hyperbolic_distance",
    "increment_matrix",
    "integrate_hprime",
    "interpolate_dilatation",
    "mobius_diff",
    "monomial_basis",
    "mu_to_ellipse",
    "neg_loglik_alpha",
    "numeric_dilatation",
    "p_alpha",
    "parse_config",
    "partition_grid",
    "poisson_solve_dirichlet",
    "read_config",
    "read_grd",
    "reconstruct_map",
    "run_pipeline",
    "sigma_field",
    "simulate_isotropic",
    "simulation_blocks",
    "smooth_dilatation",
    "stage_estimate",
    "stage_evaluate",
    "stage_reconstruct",
    "stage_simulate",
    "variogram_slope",
    "write_config",
    "write_grd",
    "write_grid_csv",
]
