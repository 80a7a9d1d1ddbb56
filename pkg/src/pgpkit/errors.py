"""Exception hierarchy. Every error carries a stable ``code`` used by the CLI."""


class PGPError(Exception):
    code = "pgp"


class InputError(PGPError, ValueError):
    code = "input"


class ConfigurationError(PGPError, ValueError):
    code = "config"


class ModelError(PGPError):
    code = "model"


class DimensionError(ModelError):
    code = "dimension"


class DegenerateNoiseError(ModelError):
    code = "degenerate-noise"


class DegenerateClusterError(ModelError):
    code = "degenerate-cluster"


class ClusteringFailure(ModelError):
    code = "clustering-failure"


class NumericalError(PGPError, ArithmeticError):
    code = "numerical"


class LoadError(InputError):
    code = "load"
