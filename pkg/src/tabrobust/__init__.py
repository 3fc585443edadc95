"""Constrained evasion attacks and context hardening for tabular classifiers."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    CapabilityError,
    ConfigError,
    DataError,
    SchemaError,
    TabRobustError,
)

__all__ = [
    "__version__",
    "CapabilityError",
    "ConfigError",
    "DataError",
    "SchemaError",
    "TabRobustError",
]
