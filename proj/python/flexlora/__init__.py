"""Federated low-rank adapter aggregation: python surface of the C++ core."""

from _flexlora import (  # noqa: F401
    FlexloraError,
    aggregate_flexlora,
    compose,
    decompose,
    run_experiment,
    run_sweep,
    svd,
    truncate,
    truncation_error,
)

__all__ = [
    "FlexloraError",
    "aggregate_flexlora",
    "compose",
    "decompose",
    "run_experiment",
    "run_sweep",
    "svd",
    "truncate",
    "truncation_error",
]
