"""A-free projections, negative norms and quasiconvexity testers."""

import json as _json

from ._afreeqc import (
    ConfigError,
    ConstantRankViolation,
    Error,
    InvalidArgument,
    cr_sequence,
    functional,
    hessian_search,
    hminus1_norm,
    operators,
    project,
    rank_check,
    symbol,
    table5,
    test_aqc,
    test_aqcb,
    test_strong_aqcb,
)
from ._afreeqc import run as _run


def run(config):
    """Run an experiment config given as a dict or JSON text."""
    text = config if isinstance(config, str) else _json.dumps(config)
    return _run(text)


__all__ = [
    "ConfigError",
    "ConstantRankViolation",
    "Error",
    "InvalidArgument",
    "cr_sequence",
    "functional",
    "hessian_search",
    "hminus1_norm",
    "operators",
    "project",
    "rank_check",
    "run",
    "symbol",
    "table5",
    "test_aqc",
    "test_aqcb",
    "test_strong_aqcb",
]
