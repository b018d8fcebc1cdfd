from ._version import __version__
from .core import (
    ToleranceSchedule,
    factor_apply,
    factor_memory,
    factor_report,
    factor_solve,
    rsrs_factor,
)
from .proxy import ProxyConfig, srs_factor_proxy
from .tree import build_tree

__all__ = [
    "__version__",
    "ToleranceSchedule",
    "ProxyConfig",
    "build_tree",
    "rsrs_factor",
    "srs_factor_proxy",
    "factor_apply",
    "factor_solve",
    "factor_memory",
    "factor_report",
]
