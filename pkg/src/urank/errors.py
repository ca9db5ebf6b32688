"""Exception hierarchy shared by the library and the CLI."""


class UrankError(Exception):
    """Base class for all library errors."""


class ModelError(UrankError, ValueError):
    """Invalid generative-model parameters."""


class UnsupportedModelError(UrankError):
    """Operation needs a finite-support (or otherwise specific) model."""


class DatasetFormatError(UrankError, ValueError):
    """Malformed dataset file or inconsistent dimensions."""


class NumericalError(UrankError, ArithmeticError):
    """An internal cross-check or numerical routine failed."""


class ConfigError(UrankError, ValueError):
    """Experiment configuration rejected by validation."""
