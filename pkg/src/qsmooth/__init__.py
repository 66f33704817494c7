"""Past-future state estimation for a partially observed, continuously
monitored qubit."""

from importlib.metadata import PackageNotFoundError, version

from .core import BlochYZ, ConfigError, Effect, NumericalError, ObservedBlock, Params, PureAngle, UnknownRecord
from .pipeline import ESTIMATORS, BlockResult, run_block

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.0.0"

__all__ = [
    "ESTIMATORS",
    "BlochYZ",
    "BlockResult",
    "ConfigError",
    "Effect",
    "NumericalError",
    "ObservedBlock",
    "Params",
    "PureAngle",
    "UnknownRecord",
    "run_block",
]
