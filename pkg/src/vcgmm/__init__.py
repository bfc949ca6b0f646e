"""Clustering with truncated variational EM for isotropic Gaussian mixtures
on lightweight coresets (vc-GMM), with seeding, baselines and a benchmark
harness that counts distance evaluations."""

from .baselines import KMeansConfig, kmeanspp_fit, lloyd_iterate, lwcs_kmeans_fit, var_gmm_s_fit
from .bench import ExperimentSpec, map_partition, nmi, relative_error, run_experiment
from .coreset import LwcsConfig, build_lightweight_coreset, data_mean, identity_coreset
from .em import VcGmmConfig, fit, init_sigma, mstep, variational_estep, vc_gmm_fit
from .errors import ConfigError, ContractViolation, DataFormatError, NumericalAbort
from .instrument import DistanceCounter, PhaseTimer
from .model import (GmmParams, TruncatedState, WeightedCoreset, coreset_log_likelihood,
                    merged_objective, quantization_error, squared_distance,
                    truncated_responsibilities)
from .report import RunReport
from .seeding import SeedingConfig, afkmc2_seed, dsquared_seed, uniform_seed

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "ContractViolation", "DataFormatError", "DistanceCounter",
    "ExperimentSpec", "GmmParams", "KMeansConfig", "LwcsConfig", "NumericalAbort",
    "PhaseTimer", "RunReport", "SeedingConfig", "TruncatedState", "VcGmmConfig",
    "WeightedCoreset", "afkmc2_seed", "build_lightweight_coreset", "coreset_log_likelihood",
    "data_mean", "dsquared_seed", "fit", "identity_coreset", "init_sigma", "kmeanspp_fit",
    "lloyd_iterate", "lwcs_kmeans_fit", "map_partition", "merged_objective", "mstep", "nmi",
    "quantization_error", "relative_error", "run_experiment", "squared_distance",
    "truncated_responsibilities", "uniform_seed", "var_gmm_s_fit", "variational_estep",
    "vc_gmm_fit",
]
