"""Optional figures for reports. Needs matplotlib (the ``plot`` extra).

matplotlib is imported lazily so that the library and CLI work without it;
only the ``--figures`` paths call into this module.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

from .detector import BaseHypothesis
from .evaluation import EvalReport, SweepResult
from .stats import N_BINS, BinnedDistribution


def _pyplot():
    try:
        import matplotlib
    except ImportError as exc:  # pragma: no cover - depends on the environment
        raise RuntimeError("figures need matplotlib: install the 'plot' extra") from exc
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # no creation-time metadata, so reruns write identical files
    fig.savefig(path, dpi=100, metadata={"Software": None})
    fig.clf()
    import matplotlib.pyplot as plt

    plt.close(fig)
    return path


def edge_distribution(series: Mapping[str, Sequence[int]], path: str | Path) -> Path:
    """Histogram of per-window edge counts, one series per label."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(7, 4))
    values = [v for s in series.values() for v in s]
    lo, hi = (min(values), max(values)) if values else (0, 1)
    bins = range(lo, hi + 2)
    for name, counts in series.items():
        ax.hist(counts, bins=bins, alpha=0.6, label=name)
    ax.set_xlabel("edges per window")
    ax.set_ylabel("windows")
    ax.legend()
    return _save(fig, path)


def binned_comparison(
    hypothesis: BaseHypothesis, observed: Mapping[str, BinnedDistribution], path: str | Path
) -> Path:
    """Bin proportions of the base distribution next to observed populations."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(7, 4))
    series = {"base": hypothesis.base_distribution, **observed}
    width = 0.8 / len(series)
    for i, (name, dist) in enumerate(series.items()):
        xs = [b + i * width for b in range(N_BINS)]
        ax.bar(xs, dist.proportions, width=width, label=name)
    ax.set_xticks([b + 0.4 - width / 2 for b in range(N_BINS)])
    ax.set_xticklabels([f"bin {b}" for b in range(N_BINS)])
    ax.set_ylabel("share of windows")
    ax.legend()
    return _save(fig, path)


def confusion_matrices(reports: Sequence[EvalReport], path: str | Path) -> Path:
    plt = _pyplot()
    n = max(len(reports), 1)
    fig, axes = plt.subplots(1, n, figsize=(3.2 * n, 3.2), squeeze=False)
    for ax, r in zip(axes[0], reports):
        cm = r.confusion
        grid = [[cm.tp, cm.fn], [cm.fp, cm.tn]]
        ax.imshow(grid, cmap="Blues")
        for i in range(2):
            for j in range(2):
                ax.text(j, i, str(grid[i][j]), ha="center", va="center")
        ax.set_xticks([0, 1], ["attack", "normal"])
        ax.set_yticks([0, 1], ["attack", "normal"])
        ax.set_xlabel("predicted")
        ax.set_ylabel("actual")
        ax.set_title(f"{r.label}\nLoS {r.los:g}", fontsize=9)
    fig.tight_layout()
    return _save(fig, path)


def los_sweep(sweep: SweepResult, path: str | Path) -> Path:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    levels = list(sweep.reports)
    for metric in ("accuracy", "tpr", "fpr"):
        ax.plot(
            [str(l) for l in levels],
            [getattr(sweep.reports[l].confusion, metric) or 0.0 for l in levels],
            marker="o",
            label=metric,
        )
    ax.set_xlabel("level of significance")
    ax.set_ylabel("%")
    ax.set_title(f"best LoS {sweep.best_los:g}")
    ax.legend()
    return _save(fig, path)


def max_degree_histogram(histogram: Mapping[int, int], path: str | Path) -> Path:
    """How often each arbitration id was the max-degree node of a window."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(8, 4))
    ids = list(histogram)
    ax.bar([f"{i:03x}" for i in ids], [histogram[i] for i in ids])
    ax.set_xlabel("arbitration id")
    ax.set_ylabel("windows as max-degree node")
    ax.tick_params(axis="x", rotation=90)
    fig.tight_layout()
    return _save(fig, path)
