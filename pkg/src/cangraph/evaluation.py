"""Scoring detectors against labelled traffic: confusion matrices, LoS sweeps, latency.

Ground truth is per population window: a population is attacked when any of
its frames carries the ``injected`` label. Reports come out as JSON (the
machine-readable record), CSV rows and a plain-text table.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import time
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import stats
from .baseline import TransitionMatrix, baseline_detect
from .can_io import FrameStream
from .detector import BaseHypothesis, Centering, Verdict, detect, evaluate_population, population_windows
from .graph import WindowGraph, WindowingConfig, build_graphs

logger = logging.getLogger(__name__)

REPORT_FORMAT = "cangraph-report"
REPORT_VERSION = 1


class EvaluationError(ValueError):
    pass


def _pct(num: int, den: int) -> float | None:
    return 100.0 * num / den if den else None


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise EvaluationError("confusion-matrix cells must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def accuracy(self) -> float | None:
        return _pct(self.tp + self.tn, self.total)

    @property
    def misclassification(self) -> float | None:
        acc = self.accuracy
        return None if acc is None else 100.0 - acc

    @property
    def tpr(self) -> float | None:
        return _pct(self.tp, self.tp + self.fn)

    @property
    def fnr(self) -> float | None:
        return _pct(self.fn, self.tp + self.fn)

    @property
    def tnr(self) -> float | None:
        return _pct(self.tn, self.tn + self.fp)

    @property
    def fpr(self) -> float | None:
        return _pct(self.fp, self.tn + self.fp)

    def to_dict(self) -> dict:
        return {
            "tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn,
            "accuracy": self.accuracy, "misclassification": self.misclassification,
            "tpr": self.tpr, "fpr": self.fpr, "tnr": self.tnr, "fnr": self.fnr,
        }

    def grid(self) -> str:
        """A 2x2 text grid, rows = actual, columns = predicted."""
        w = max(len(str(v)) for v in (self.tp, self.fp, self.tn, self.fn, "attack"))
        lines = [
            f"{'':>10} | {'attack':>{w}} | {'normal':>{w}}",
            f"{'attack':>10} | {self.tp:>{w}} | {self.fn:>{w}}",
            f"{'normal':>10} | {self.fp:>{w}} | {self.tn:>{w}}",
        ]
        return "\n".join(lines)


def score(verdicts: Sequence[Verdict | bool], truth: Sequence[bool]) -> ConfusionMatrix:
    if len(verdicts) != len(truth):
        raise EvaluationError(f"{len(verdicts)} verdicts but {len(truth)} ground-truth labels")
    tp = fp = tn = fn = 0
    for v, t in zip(verdicts, truth):
        flagged = v.is_attacked if isinstance(v, Verdict) else bool(v)
        if flagged and t:
            tp += 1
        elif flagged:
            fp += 1
        elif t:
            fn += 1
        else:
            tn += 1
    return ConfusionMatrix(tp, fp, tn, fn)


def population_truth(graphs: Sequence[WindowGraph], population_size: int) -> list[bool]:
    """Per complete population: does any of its windows hold an injected frame?"""
    n = len(graphs) // population_size
    return [any(g.attacked for g in graphs[i * population_size:(i + 1) * population_size]) for i in range(n)]


def baseline_population_verdicts(
    matrix: TransitionMatrix,
    stream: FrameStream,
    window_size: int,
    population_size: int,
    violation_threshold: float = 0.0,
) -> list[bool]:
    """Run the transition-matrix detector over the same population spans as the graph detector."""
    span = window_size * population_size
    frames = stream.frames
    return [
        baseline_detect(matrix, frames[i * span:(i + 1) * span], violation_threshold)
        for i in range(len(frames) // span)
    ]


@dataclass(frozen=True)
class LatencyStats:
    mean_us: float
    p95_us: float
    max_us: float
    samples: int

    def to_dict(self) -> dict:
        return {"mean_us": self.mean_us, "p95_us": self.p95_us, "max_us": self.max_us, "samples": self.samples}


def measure_latency(
    hypothesis: BaseHypothesis,
    test_graphs: Sequence[WindowGraph],
    repetitions: int = 10,
    los: float = 0.01,
    centering: Centering | str = Centering.TEST,
) -> LatencyStats:
    """Wall-clock time to test one population (graphs already built), in microseconds."""
    if repetitions < 1:
        raise EvaluationError("repetitions must be >= 1")
    centering = Centering(centering)
    populations = population_windows(test_graphs, hypothesis.population_size)
    if not populations:
        raise EvaluationError("no complete population to time")
    samples = []
    for _ in range(repetitions):
        for population in populations:
            t0 = time.perf_counter()
            chi, _, _ = evaluate_population(hypothesis, population.edge_counts, los, centering)
            _ = chi.rejected
            samples.append((time.perf_counter() - t0) * 1e6)
    arr = np.asarray(samples)
    return LatencyStats(float(arr.mean()), float(np.percentile(arr, 95)), float(arr.max()), arr.size)


@dataclass(frozen=True)
class EvalReport:
    label: str
    los: float
    centering: str
    confusion: ConfusionMatrix
    chi_only: ConfusionMatrix
    median_only: ConfusionMatrix
    triggered: dict = field(default_factory=dict)  # none/chi/median -> count
    baseline: ConfusionMatrix | None = None
    latency: LatencyStats | None = None

    @property
    def populations(self) -> int:
        return self.confusion.total

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "los": self.los,
            "threshold": stats.threshold_for(self.los),
            "centering": self.centering,
            "populations": self.populations,
            "confusion": self.confusion.to_dict(),
            "chi_only": self.chi_only.to_dict(),
            "median_only": self.median_only.to_dict(),
            "triggered": dict(sorted(self.triggered.items())),
            "baseline": self.baseline.to_dict() if self.baseline else None,
            "latency": self.latency.to_dict() if self.latency else None,
        }


def evaluate(
    hypothesis: BaseHypothesis,
    stream: FrameStream,
    los: float = 0.01,
    centering: Centering | str = Centering.TEST,
    baseline: TransitionMatrix | None = None,
    baseline_threshold: float = 0.0,
    timing: bool = False,
    label: str = "",
    graphs: Sequence[WindowGraph] | None = None,
) -> EvalReport:
    """Detect over a labelled stream and score every population against its ground truth."""
    if graphs is None:
        graphs = build_graphs(stream, WindowingConfig(hypothesis.window_size))
    return _evaluate_graphs(hypothesis, graphs, stream, los, centering, baseline, baseline_threshold, timing, label)


def _evaluate_graphs(hypothesis, graphs, stream, los, centering, baseline, baseline_threshold, timing, label):
    centering = Centering(centering)
    verdicts = detect(hypothesis, graphs, los, centering)
    truth = population_truth(graphs, hypothesis.population_size)
    triggered = {k: 0 for k in ("none", "chi", "median")}
    for v in verdicts:
        triggered[v.triggered_by.value] += 1
    base_cm = None
    if baseline is not None:
        flags = baseline_population_verdicts(
            baseline, stream, hypothesis.window_size, hypothesis.population_size, baseline_threshold
        )
        base_cm = score(flags[:len(truth)], truth)
    latency = measure_latency(hypothesis, graphs, 1, los, centering) if timing else None
    return EvalReport(
        label=label or stream.source,
        los=los,
        centering=centering.value,
        confusion=score(verdicts, truth),
        chi_only=score([v.chi_attacked for v in verdicts], truth),
        median_only=score([v.median_attacked for v in verdicts], truth),
        triggered=triggered,
        baseline=base_cm,
        latency=latency,
    )


@dataclass(frozen=True)
class SweepResult:
    reports: dict  # los -> EvalReport, in the order the levels were given
    best_los: float

    def to_dict(self) -> dict:
        return {"best_los": self.best_los, "levels": [r.to_dict() for r in self.reports.values()]}


def sweep_los(
    hypothesis: BaseHypothesis,
    stream: FrameStream,
    levels: Iterable[float] = stats.SUPPORTED_LOS,
    centering: Centering | str = Centering.TEST,
    baseline: TransitionMatrix | None = None,
    label: str = "",
) -> SweepResult:
    """Evaluate at every level; the best level has the highest accuracy (ties: the smaller LoS)."""
    levels = list(levels)
    if not levels:
        raise EvaluationError("no levels to sweep")
    for los in levels:
        stats.threshold_for(los)
    graphs = build_graphs(stream, WindowingConfig(hypothesis.window_size))
    reports = {
        los: evaluate(hypothesis, stream, los, centering, baseline, label=label, graphs=graphs) for los in levels
    }
    best = max(levels, key=lambda los: (reports[los].confusion.accuracy or 0.0, -los))
    return SweepResult(reports, best)


# ---------------------------------------------------------------- rendering

def report_document(reports: Sequence[EvalReport], sweep_best: float | None = None) -> str:
    doc = {
        "format": REPORT_FORMAT,
        "version": REPORT_VERSION,
        "reports": [r.to_dict() for r in reports],
    }
    if sweep_best is not None:
        doc["best_los"] = sweep_best
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _fmt(value: float | None, digits: int = 2) -> str:
    return "-" if value is None else f"{value:.{digits}f}"


CSV_COLUMNS = (
    "label", "detector", "los", "tp", "fp", "tn", "fn", "accuracy", "tpr", "fpr", "tnr", "fnr", "mean_latency_us",
)


def report_csv(reports: Sequence[EvalReport]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in reports:
        rows = [("proposed", r.confusion), ("chi_only", r.chi_only), ("median_only", r.median_only)]
        if r.baseline is not None:
            rows.append(("id_sequence", r.baseline))
        for name, cm in rows:
            latency = r.latency.mean_us if (r.latency and name == "proposed") else None
            writer.writerow([
                r.label, name, r.los, cm.tp, cm.fp, cm.tn, cm.fn,
                _fmt(cm.accuracy, 4), _fmt(cm.tpr, 4), _fmt(cm.fpr, 4), _fmt(cm.tnr, 4), _fmt(cm.fnr, 4),
                _fmt(latency, 3),
            ])
    return buf.getvalue()


def report_table(reports: Sequence[EvalReport], sweep_best: float | None = None) -> str:
    header = f"{'label':<28} {'detector':<12} {'LoS':>6} {'acc%':>7} {'TPR%':>7} {'FPR%':>7} {'TNR%':>7} {'FNR%':>7}"
    lines = [header, "-" * len(header)]
    for r in reports:
        rows = [("proposed", r.confusion), ("chi only", r.chi_only), ("median only", r.median_only)]
        if r.baseline is not None:
            rows.append(("id sequence", r.baseline))
        for name, cm in rows:
            lines.append(
                f"{r.label[:28]:<28} {name:<12} {r.los:>6g} {_fmt(cm.accuracy):>7} {_fmt(cm.tpr):>7} "
                f"{_fmt(cm.fpr):>7} {_fmt(cm.tnr):>7} {_fmt(cm.fnr):>7}"
            )
    for r in reports:
        lines += ["", f"{r.label} @ LoS {r.los:g} (rows actual, columns predicted):", r.confusion.grid()]
        lines.append(
            "triggered by: " + ", ".join(f"{k} {v}" for k, v in sorted(r.triggered.items()))
        )
        if r.latency:
            lines.append(
                f"latency per population: mean {r.latency.mean_us:.1f} us, "
                f"p95 {r.latency.p95_us:.1f} us, max {r.latency.max_us:.1f} us"
            )
    if sweep_best is not None:
        lines += ["", f"best LoS by accuracy: {sweep_best:g}"]
    return "\n".join(lines) + "\n"
