"""Parsimonious Gaussian process models in kernel feature spaces.

Supervised classification (:class:`PGPDA`) and EM clustering
(:class:`PGPEM`) with class-specific low-dimensional subspaces and a
shared noise level, for any kernel: vectors, categorical tuples, graph
nodes and curves.
"""

from .errors import (
    ClusteringFailure,
    ConfigurationError,
    DegenerateClusterError,
    DegenerateNoiseError,
    DimensionError,
    InputError,
    LoadError,
    ModelError,
    NumericalError,
    PGPError,
)
from .kernels import GramMatrix, KernelSpec, gram
from .pgpda import PGPDA, FittedModel, ScreeParams, cattell_dim, fit
from .pgpem import PGPEM, EmConfig, cluster_accuracy, run
from .modelsel import CvReport, SearchGrid, holdout_replications, kfold_cv

__version__ = "0.1.0"

__all__ = [
    "PGPDA",
    "PGPEM",
    "KernelSpec",
    "GramMatrix",
    "FittedModel",
    "ScreeParams",
    "EmConfig",
    "SearchGrid",
    "CvReport",
    "gram",
    "fit",
    "run",
    "cattell_dim",
    "cluster_accuracy",
    "kfold_cv",
    "holdout_replications",
    "PGPError",
    "InputError",
    "ConfigurationError",
    "ModelError",
    "DimensionError",
    "DegenerateNoiseError",
    "DegenerateClusterError",
    "ClusteringFailure",
    "NumericalError",
    "LoadError",
]
