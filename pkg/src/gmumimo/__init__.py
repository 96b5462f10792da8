"""Constrained capacity analysis, multi-user LDPC design, and link-level
simulation for generalized multi-user MIMO under discrete signaling and
right-unitarily-invariant channels."""

from . import allocation, channel, constellation, ldpc, receiver, se, simharness
from .errors import (
    ContractError,
    FormatError,
    GmuError,
    ModelError,
    NumericError,
    ParameterError,
    SingularityError,
)

__version__ = "0.1.0"

__all__ = [
    "allocation",
    "channel",
    "constellation",
    "ldpc",
    "receiver",
    "se",
    "simharness",
    "GmuError",
    "ParameterError",
    "FormatError",
    "NumericError",
    "SingularityError",
    "ModelError",
    "ContractError",
    "__version__",
]
