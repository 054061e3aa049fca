"""Multimatrix variate distributions, zonal-polynomial series and cone probabilities."""

__version__ = "0.1.0"

from .numeric import DimensionError, DomainError, Partition, Spectrum, enumerate_partitions, log_mv_gamma
from .zonal import SeriesControl, SeriesResult, hypergeometric_pFq, partial_sum_rQq, weighted_series_rPq, zonal_C
from .generators import EllipticalGenerator, h_deriv, zeta_coeff
from .densities import MultimatrixParams, sample_spherical_blocks
from .cones import ConeBound, ProbResult, prob_beta1_k1, prob_beta2_cone, prob_wishart_gaussian
from .affine import AffineShapeParams, Configuration, affine_shape_logdensity
from .docking import PathSpec, probability_path

__all__ = [
    "AffineShapeParams",
    "ConeBound",
    "Configuration",
    "DimensionError",
    "DomainError",
    "EllipticalGenerator",
    "MultimatrixParams",
    "Partition",
    "PathSpec",
    "ProbResult",
    "SeriesControl",
    "SeriesResult",
    "Spectrum",
    "affine_shape_logdensity",
    "enumerate_partitions",
    "h_deriv",
    "hypergeometric_pFq",
    "log_mv_gamma",
    "partial_sum_rQq",
    "prob_beta1_k1",
    "prob_beta2_cone",
    "prob_wishart_gaussian",
    "probability_path",
    "sample_spherical_blocks",
    "weighted_series_rPq",
    "zeta_coeff",
    "zonal_C",
]
