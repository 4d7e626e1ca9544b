"""Population-window attack detection against a frozen attack-free hypothesis.

Training bins the edge counts of attack-free window graphs into six regions
around their median. Detection cuts the test graphs into consecutive
population windows and runs two tests on each:

* a chi-squared goodness-of-fit test of the population's binned edge counts
  against the base distribution (a change in *shape*), and
* a median outlier test (a change in *location*): the population median
  lies more than three base sigmas above the base median.

A population is attacked when either test fires. Both tests are always
evaluated; ``triggered_by`` records the first one in chi-then-median order.
"""

from __future__ import annotations

import enum
import json
import logging
import math
import statistics
import time
from dataclasses import dataclass, field
from typing import Sequence

from . import stats
from .graph import WindowGraph, extract_edge_counts
from .stats import BinLayout, BinnedDistribution, ChiResult

logger = logging.getLogger(__name__)

DEFAULT_POPULATION_SIZE = 50
MIN_BASE_GRAPHS = 10
HYPOTHESIS_FORMAT = "cangraph-hypothesis"
HYPOTHESIS_VERSION = 1


class DetectorError(ValueError):
    pass


class TrainingError(DetectorError):
    pass


class DetectionError(DetectorError):
    pass


class HypothesisFormatError(DetectorError):
    """A hypothesis document is truncated, corrupted or from another schema version."""


class Centering(str, enum.Enum):
    """Where the test population's bins are placed before the chi-squared test.

    ``TEST`` translates the base bins onto the test population's own median
    (rounded to whole edges) so the chi test measures shape alone and leaves
    location to the median test. ``BASE`` bins every population on the base
    layout, so a location shift also inflates chi.
    """

    TEST = "test"
    BASE = "base"


class TriggeredBy(str, enum.Enum):
    NONE = "none"
    CHI = "chi"
    MEDIAN = "median"


@dataclass(frozen=True)
class BaseHypothesis:
    layout: BinLayout
    base_distribution: BinnedDistribution
    window_size: int
    population_size: int = DEFAULT_POPULATION_SIZE
    created_from: str = ""

    def __post_init__(self):
        if self.population_size < 1:
            raise TrainingError(f"population_size must be positive, got {self.population_size}")
        if self.base_distribution.total < self.population_size:
            raise TrainingError(
                f"base distribution holds {self.base_distribution.total} windows, "
                f"fewer than one population of {self.population_size}"
            )
        if not (math.isfinite(self.layout.sigma_null) and self.layout.sigma_null > 0):
            raise TrainingError(f"invalid layout sigma {self.layout.sigma_null!r}")


@dataclass(frozen=True)
class PopulationWindow:
    edge_counts: tuple[int, ...]
    first_window_index: int


@dataclass(frozen=True)
class Verdict:
    population_index: int
    chi: ChiResult
    chi_attacked: bool
    median_attacked: bool
    is_attacked: bool
    triggered_by: TriggeredBy
    median: float
    first_window_index: int = 0
    # wall-clock microseconds; excluded from equality so reruns compare equal
    elapsed: float = field(default=0.0, compare=False)


def train(
    base_graphs: Sequence[WindowGraph],
    population_size: int = DEFAULT_POPULATION_SIZE,
    created_from: str = "",
) -> BaseHypothesis:
    """Fit the bin layout and base distribution on attack-free window graphs."""
    minimum = max(population_size, MIN_BASE_GRAPHS)
    if len(base_graphs) < minimum:
        raise TrainingError(
            f"training needs at least {minimum} attack-free window graphs, got {len(base_graphs)}"
        )
    sizes = {g.window_size for g in base_graphs}
    if len(sizes) != 1:
        raise TrainingError(f"base graphs mix window sizes {sorted(sizes)}")
    edge_counts = extract_edge_counts(base_graphs)
    try:
        layout = stats.fit_bin_layout(edge_counts)
    except stats.StatsError as exc:
        raise TrainingError(str(exc)) from exc
    base = stats.bin_values(edge_counts, layout)
    logger.info(
        "trained on %d windows: median %.3f, sigma %.3f, bins %s",
        len(edge_counts), layout.median_null, layout.sigma_null, base.counts,
    )
    return BaseHypothesis(layout, base, sizes.pop(), population_size, created_from)


def population_windows(graphs: Sequence[WindowGraph], population_size: int) -> list[PopulationWindow]:
    """Group graphs into consecutive populations; a trailing partial population is dropped."""
    counts = extract_edge_counts(graphs)
    return [
        PopulationWindow(tuple(counts[i:i + population_size]), i)
        for i in range(0, len(counts) - population_size + 1, population_size)
    ]


def evaluate_population(
    hypothesis: BaseHypothesis,
    edge_counts: Sequence[int],
    los: float = 0.01,
    centering: Centering = Centering.TEST,
) -> tuple[ChiResult, bool, float]:
    """Chi result, median-test outcome and median for one population's edge counts."""
    layout = hypothesis.layout
    median = statistics.median(edge_counts)
    test_layout = stats.recentred_layout(layout, median) if centering is Centering.TEST else layout
    observed = stats.bin_values(edge_counts, test_layout)
    chi = stats.chi_squared(observed, hypothesis.base_distribution, los)
    return chi, median > layout.outlier_limit, float(median)


def detect(
    hypothesis: BaseHypothesis,
    test_graphs: Sequence[WindowGraph],
    los: float = 0.01,
    centering: Centering | str = Centering.TEST,
) -> list[Verdict]:
    centering = Centering(centering)
    stats.threshold_for(los)  # reject unsupported levels before doing any work
    if len(test_graphs) < hypothesis.population_size:
        raise DetectionError(
            f"need at least {hypothesis.population_size} window graphs for one population, got {len(test_graphs)}"
        )
    wrong = {g.window_size for g in test_graphs} - {hypothesis.window_size}
    if wrong:
        raise DetectionError(
            f"test windows of size {sorted(wrong)} do not match the hypothesis window size {hypothesis.window_size}"
        )
    verdicts = []
    for index, population in enumerate(population_windows(test_graphs, hypothesis.population_size)):
        t0 = time.perf_counter()
        chi, median_attacked, median = evaluate_population(hypothesis, population.edge_counts, los, centering)
        elapsed = (time.perf_counter() - t0) * 1e6
        chi_attacked = chi.rejected
        if chi_attacked:
            trigger = TriggeredBy.CHI
        elif median_attacked:
            trigger = TriggeredBy.MEDIAN
        else:
            trigger = TriggeredBy.NONE
        verdicts.append(
            Verdict(
                population_index=index,
                chi=chi,
                chi_attacked=chi_attacked,
                median_attacked=median_attacked,
                is_attacked=chi_attacked or median_attacked,
                triggered_by=trigger,
                median=median,
                first_window_index=population.first_window_index,
                elapsed=elapsed,
            )
        )
    return verdicts


def save_hypothesis(hypothesis: BaseHypothesis) -> str:
    layout = hypothesis.layout
    doc = {
        "format": HYPOTHESIS_FORMAT,
        "version": HYPOTHESIS_VERSION,
        "window_size": hypothesis.window_size,
        "population_size": hypothesis.population_size,
        "median_null": layout.median_null,
        "sigma_null": layout.sigma_null,
        "boundaries": list(layout.boundaries),
        "base_counts": list(hypothesis.base_distribution.counts),
        "base_total": hypothesis.base_distribution.total,
        "created_from": hypothesis.created_from,
    }
    # json writes floats with repr(), the shortest exact round-trip form
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _require(doc: dict, key: str, kind):
    if key not in doc:
        raise HypothesisFormatError(f"hypothesis is missing field {key!r}")
    value = doc[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, kind) or isinstance(value, bool):
        raise HypothesisFormatError(f"field {key!r} has wrong type {type(value).__name__}")
    return value


def load_hypothesis(text: str) -> BaseHypothesis:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise HypothesisFormatError(f"hypothesis is not valid JSON (truncated?): {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != HYPOTHESIS_FORMAT:
        raise HypothesisFormatError("not a cangraph hypothesis document")
    if doc.get("version") != HYPOTHESIS_VERSION:
        raise HypothesisFormatError(
            f"unsupported hypothesis version {doc.get('version')!r}; expected {HYPOTHESIS_VERSION}"
        )
    median = _require(doc, "median_null", float)
    sigma = _require(doc, "sigma_null", float)
    boundaries = _require(doc, "boundaries", list)
    counts = _require(doc, "base_counts", list)
    total = _require(doc, "base_total", int)
    if not all(math.isfinite(v) for v in (median, sigma)):
        raise HypothesisFormatError("median_null and sigma_null must be finite")
    layout = BinLayout(median, sigma)
    if len(boundaries) != stats.N_BINS + 1 or any(
        not isinstance(b, (int, float)) or not math.isclose(b, e, rel_tol=1e-12, abs_tol=1e-12)
        for b, e in zip(boundaries, layout.boundaries)
    ):
        raise HypothesisFormatError("boundaries do not match median_null and sigma_null")
    if len(counts) != stats.N_BINS or any(not isinstance(c, int) or c < 0 for c in counts):
        raise HypothesisFormatError(f"base_counts must be {stats.N_BINS} non-negative integers")
    if sum(counts) != total:
        raise HypothesisFormatError(f"base_counts sum to {sum(counts)}, not base_total {total}")
    try:
        return BaseHypothesis(
            layout=layout,
            base_distribution=BinnedDistribution(tuple(counts)),
            window_size=_require(doc, "window_size", int),
            population_size=_require(doc, "population_size", int),
            created_from=_require(doc, "created_from", str),
        )
    except TrainingError as exc:
        raise HypothesisFormatError(str(exc)) from exc
