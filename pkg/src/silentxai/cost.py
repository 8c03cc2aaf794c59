"""NVM read/write overhead of an imperfect silent-store predictor.

Units are whatever the caller uses for ``c_read``/``c_store`` (energy or
latency). The compare in load/compare/store is taken as free.
"""
from __future__ import annotations

from dataclasses import dataclass

from .errors import InvalidConfig

# documented NVM write/read cost ratio range
NVM_RATIO_RANGE = (1.02, 75.0)


@dataclass(frozen=True)
class NvmCosts:
    c_read: float = 1.0
    c_store: float = 2.5

    def __post_init__(self):
        if not (self.c_read > 0 and self.c_store > 0):
            raise InvalidConfig("c_read and c_store must be positive")


def _check(m, p):
    if m < 0:
        raise InvalidConfig("m must be non-negative")
    if not 0.0 <= p <= 1.0:
        raise InvalidConfig("p must lie in [0, 1]")


def fp_overhead(m: float, p: float, costs: NvmCosts) -> float:
    """Wasted verify reads: m * p * c_read."""
    _check(m, p)
    return m * p * costs.c_read


def fn_overhead(m: float, p: float, costs: NvmCosts) -> float:
    """Missed savings: m * (1 - p) * (c_store - c_read); negative when c_store < c_read."""
    _check(m, p)
    return m * (1.0 - p) * (costs.c_store - costs.c_read)


def total_overhead(m: float, p: float, costs: NvmCosts) -> float:
    _check(m, p)
    return m * (costs.c_store - costs.c_read) - m * (costs.c_store - 2.0 * costs.c_read) * p


def overhead_slope(m: float, costs: NvmCosts) -> float:
    """d total_overhead / d p."""
    return m * (2.0 * costs.c_read - costs.c_store)


def regime_advice(costs: NvmCosts) -> str:
    """Deployment regime: when c_store > 2 c_read a higher false-positive share is cheaper."""
    diff = costs.c_store - 2.0 * costs.c_read
    if diff > 0:
        return "favor_recall"
    if diff == 0:
        return "indifferent"
    return "favor_precision_for_cost"


def overhead_curve(m: float, costs: NvmCosts, n_points: int = 21) -> list[tuple[float, float, float, float]]:
    """Rows of (p, fp overhead, fn overhead, total) for plotting."""
    rows = []
    for k in range(n_points):
        p = k / (n_points - 1)
        rows.append((p, fp_overhead(m, p, costs), fn_overhead(m, p, costs), total_overhead(m, p, costs)))
    return rows
