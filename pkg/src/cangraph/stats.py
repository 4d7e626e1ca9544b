"""Chi-squared goodness of fit over six median-centred bins, plus the median outlier test."""

from __future__ import annotations

import bisect
import math
import statistics
from dataclasses import dataclass
from typing import Sequence

N_BINS = 6
DOF = 5  # (6 bins - 1) * (2 rows - 1)
EXPECTED_FLOOR = 0.5

# upper-tail critical values of the chi-square distribution at 5 degrees of freedom
CRITICAL_VALUES = {
    0.1: 9.236,
    0.05: 11.0705,
    0.01: 15.086,
    0.001: 20.515,
}
SUPPORTED_LOS = tuple(sorted(CRITICAL_VALUES, reverse=True))


class StatsError(ValueError):
    pass


class InsufficientDataError(StatsError):
    pass


class DegenerateLayoutError(StatsError):
    pass


class EmptyDistributionError(StatsError):
    pass


class UnsupportedLevelError(StatsError):
    pass


@dataclass(frozen=True)
class BinLayout:
    median_null: float
    sigma_null: float

    @property
    def boundaries(self) -> tuple[float, ...]:
        m, s = self.median_null, self.sigma_null
        return tuple(m + k * s for k in range(-3, 4))

    @property
    def outlier_limit(self) -> float:
        return self.median_null + 3 * self.sigma_null


@dataclass(frozen=True)
class BinnedDistribution:
    counts: tuple[int, ...]

    def __post_init__(self):
        if len(self.counts) != N_BINS:
            raise ValueError(f"expected {N_BINS} bins, got {len(self.counts)}")
        if any(c < 0 for c in self.counts):
            raise ValueError("bin counts must be non-negative")

    @property
    def total(self) -> int:
        return sum(self.counts)

    @property
    def proportions(self) -> tuple[float, ...]:
        t = self.total
        return tuple(c / t for c in self.counts) if t else (0.0,) * N_BINS


@dataclass(frozen=True)
class ChiResult:
    statistic: float
    threshold: float
    los: float
    dof: int = DOF

    @property
    def rejected(self) -> bool:
        """True when the observed distribution differs from the base at ``los``."""
        return self.statistic > self.threshold


def fit_bin_layout(base_edge_counts: Sequence[float]) -> BinLayout:
    if len(base_edge_counts) < 2:
        raise InsufficientDataError(f"need at least 2 base values, got {len(base_edge_counts)}")
    sigma = statistics.pstdev(base_edge_counts)
    if sigma == 0:
        raise DegenerateLayoutError(
            "all base edge counts are identical (sigma = 0); widen the attack-free base population"
        )
    return BinLayout(float(statistics.median(base_edge_counts)), float(sigma))


def bin_index(value: float, layout: BinLayout) -> int:
    # half-open [b_i, b_i+1), values outside the outer boundaries clamp to bins 0 and 5
    i = bisect.bisect_right(layout.boundaries, value) - 1
    return min(max(i, 0), N_BINS - 1)


def bin_values(values: Sequence[float], layout: BinLayout) -> BinnedDistribution:
    counts = [0] * N_BINS
    for v in values:
        counts[bin_index(v, layout)] += 1
    return BinnedDistribution(tuple(counts))


def expected_frequencies(observed_total: int, base: BinnedDistribution) -> list[float]:
    # multiply before dividing: exact when the totals are equal
    return [max(c * observed_total / base.total, EXPECTED_FLOOR) for c in base.counts]


def chi_statistic(observed: BinnedDistribution, base: BinnedDistribution) -> float:
    if observed.total <= 0 or base.total <= 0:
        raise EmptyDistributionError("chi-squared needs non-empty observed and base distributions")
    expected = expected_frequencies(observed.total, base)
    return math.fsum((o - e) ** 2 / e for o, e in zip(observed.counts, expected))


def threshold_for(los: float) -> float:
    for level, value in CRITICAL_VALUES.items():
        if math.isclose(los, level, rel_tol=1e-9):
            return value
    raise UnsupportedLevelError(
        f"unsupported level of significance {los!r}; supported: {', '.join(map(str, SUPPORTED_LOS))}"
    )


def chi_squared(observed: BinnedDistribution, base: BinnedDistribution, los: float = 0.01) -> ChiResult:
    return ChiResult(chi_statistic(observed, base), threshold_for(los), los)


def median_outlier_test(test_edge_counts: Sequence[float], layout: BinLayout) -> bool:
    """True (attack) when the test median lies above ``median_null + 3 sigma_null``."""
    if not len(test_edge_counts):
        raise EmptyDistributionError("median test needs at least one value")
    return statistics.median(test_edge_counts) > layout.outlier_limit


def recentred_layout(layout: BinLayout, test_median: float) -> BinLayout:
    """The base layout translated onto a test population's median.

    The shift is rounded to a whole number of edges: edge counts are integers,
    so an integer translation keeps the lattice of possible values in the same
    position relative to every bin boundary and the binning stays comparable
    with the base distribution.
    """
    shift = math.floor(test_median - layout.median_null + 0.5)
    return BinLayout(layout.median_null + shift, layout.sigma_null)
