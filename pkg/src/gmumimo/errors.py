"""Exception hierarchy shared by all modules."""


class GmuError(Exception):
    """Base class for all package errors."""


class ParameterError(GmuError):
    """Invalid argument or configuration value (CLI exit code 2)."""


class FormatError(GmuError):
    """Corrupt or inconsistent on-disk artifact (CLI exit code 2)."""


class NumericError(GmuError):
    """Quadrature / solver failure (CLI exit code 3)."""


class SingularityError(NumericError):
    """Inversion of a singular operator was requested."""


class ModelError(GmuError):
    """Model assumption violated (non-monotone transfer, rank-0 subset, ...)."""


class ContractError(GmuError):
    """A caller-supplied object violates a documented contract."""
