"""Command-line front end: ``cangraph <subcommand> [flags]``.

Exit codes: 0 success (or no attack found by ``detect``), 1 attack detected
(``detect`` only), 2 input/format error, 3 configuration/training error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from . import can_io, stats
from .attack_sim import DEFAULT_RATIOS, DEFAULT_SPOOF_ID, AttackError, AttackKind, AttackSpec, inject, load_attack_spec
from .baseline import BaselineError, baseline_train, load_matrix, save_matrix
from .can_io import CanIOError, FrameStream, Label
from .detector import (
    DEFAULT_POPULATION_SIZE,
    Centering,
    DetectorError,
    HypothesisFormatError,
    detect,
    load_hypothesis,
    save_hypothesis,
    train,
)
from .evaluation import (
    EvaluationError,
    evaluate,
    measure_latency,
    report_csv,
    report_document,
    report_table,
    sweep_los,
)
from .graph import DEFAULT_WINDOW_SIZE, ConfigError, WindowingConfig, build_graphs, max_degree_histogram, to_dot
from .scenarios import FixtureSpec, build_fixture
from .synthetic import synthesize_traffic

logger = logging.getLogger("cangraph")

EXIT_OK = 0
EXIT_ATTACK = 1
EXIT_INPUT = 2
EXIT_CONFIG = 3


class UsageError(Exception):
    """Invalid flag values or combinations (exit 3 after printing usage)."""


# ------------------------------------------------------------------ helpers

def _los(value) -> float:
    try:
        level = float(value)
        stats.threshold_for(level)
    except (TypeError, ValueError, stats.UnsupportedLevelError):
        raise UsageError(
            f"unsupported level {value!r}; choose from {', '.join(map(str, stats.SUPPORTED_LOS))}"
        ) from None
    return level


def _levels(value) -> list[float]:
    parts = value.split(",") if isinstance(value, str) else list(value)
    levels = [_los(p) for p in parts if str(p).strip()]
    if not levels:
        raise UsageError("--levels needs at least one level")
    return levels


def _hex_id(text: str) -> int:
    try:
        return int(text, 16)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a hex arbitration id: {text!r}") from None


def _region(text: str) -> tuple[int, int]:
    try:
        start, stop = (int(p) for p in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"region must be START:STOP frame indices, got {text!r}") from None
    return start, stop


def _kinds(text: str) -> tuple[str, ...]:
    kinds = tuple(k.strip() for k in text.replace("+", ",").split(",") if k.strip())
    for k in kinds:
        if k not in {a.value for a in AttackKind} - {"combined"}:
            raise argparse.ArgumentTypeError(f"unknown attack kind {k!r}")
    return kinds


def _write(path: str, text: str) -> None:
    if path == "-":
        sys.stdout.write(text)
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)


def _read_text(path: str) -> str:
    try:
        return sys.stdin.read() if path == "-" else Path(path).read_text()
    except (OSError, UnicodeDecodeError) as exc:
        raise CanIOError(f"cannot read {path}: {exc}") from exc


def _windowing(args) -> WindowingConfig:
    return WindowingConfig(window_size=args.window_size)


def _display_name(path: str) -> str:
    """The file name recorded in models and reports, so outputs do not depend on the working directory."""
    return "stdin" if path == "-" else Path(path).name


def _read(args, path: str) -> FrameStream:
    stream = can_io.read_frames(path, args.format)
    return dataclasses.replace(stream, source=_display_name(path))


def _load_model(args):
    hypothesis = load_hypothesis(_read_text(args.model))
    if args.window_size_given and args.window_size != hypothesis.window_size:
        raise UsageError(
            f"--window-size {args.window_size} does not match the model's window size {hypothesis.window_size}"
        )
    if args.population_size_given and args.population_size != hypothesis.population_size:
        raise UsageError(
            f"--population-size {args.population_size} does not match the model's {hypothesis.population_size}"
        )
    return hypothesis


def _require_labels(stream: FrameStream) -> None:
    if any(f.label is Label.UNLABELED for f in stream):
        raise CanIOError(f"{stream.source or 'input'} has unlabelled frames; eval/sweep need labelled CSV input")


# ------------------------------------------------------------------ subcommands

def cmd_parse(args) -> int:
    stream = _read(args, args.input)
    can_io.write_csv(stream, args.output)
    logger.info("wrote %d frames to %s", len(stream), args.output)
    return EXIT_OK


def cmd_train(args) -> int:
    stream = _read(args, args.input)
    graphs = build_graphs(stream, _windowing(args))
    if args.base_windows is not None:
        graphs = graphs[:args.base_windows]
    if any(g.attacked for g in graphs):
        logger.warning("training input contains frames labelled injected")
    hypothesis = train(graphs, args.population_size, created_from=_display_name(args.input))
    _write(args.out_model, save_hypothesis(hypothesis))
    if args.out_baseline:
        _write(args.out_baseline, save_matrix(baseline_train(stream)))
    return EXIT_OK


def _verdict_rows(verdicts, timing: bool) -> list[dict]:
    rows = []
    for v in verdicts:
        row = {
            "population": v.population_index,
            "first_window": v.first_window_index,
            "chi": v.chi.statistic,
            "threshold": v.chi.threshold,
            "chi_attacked": v.chi_attacked,
            "median": v.median,
            "median_attacked": v.median_attacked,
            "is_attacked": v.is_attacked,
            "triggered_by": v.triggered_by.value,
        }
        if timing:
            row["elapsed_us"] = v.elapsed
        rows.append(row)
    return rows


def cmd_detect(args) -> int:
    hypothesis = _load_model(args)
    stream = _read(args, args.input)
    graphs = build_graphs(stream, WindowingConfig(hypothesis.window_size))
    verdicts = detect(hypothesis, graphs, args.los, args.centering)
    attacked = [v for v in verdicts if v.is_attacked]
    rows = _verdict_rows(verdicts, args.timing)
    doc = {
        "format": "cangraph-verdicts",
        "version": 1,
        "input": _display_name(args.input),
        "los": args.los,
        "centering": Centering(args.centering).value,
        "populations": len(verdicts),
        "attacked_populations": len(attacked),
        "verdicts": rows,
    }
    if args.report:
        _write(args.report, json.dumps(doc, indent=2, sort_keys=True) + "\n")
    if args.csv:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(rows[0]) if rows else ["population"], lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
        _write(args.csv, buf.getvalue())
    for v in attacked:
        print(
            f"population {v.population_index}: ATTACK (triggered by {v.triggered_by.value}; "
            f"chi {v.chi.statistic:.3f} vs {v.chi.threshold}, median {v.median:g})"
        )
    print(f"{len(attacked)} of {len(verdicts)} populations flagged at LoS {args.los:g}")
    return EXIT_ATTACK if attacked else EXIT_OK


def _attack_spec_from_args(args) -> AttackSpec:
    if args.spec:
        spec = load_attack_spec(_read_text(args.spec))
        overrides = {}
        if args.seed_given:
            overrides["seed"] = args.seed
        return AttackSpec.from_dict({**spec.to_dict(), **overrides}) if overrides else spec
    if not args.attack:
        raise UsageError("inject needs --attack or --spec")
    kind = AttackKind(args.attack)
    if kind is AttackKind.COMBINED:
        raise UsageError("combined attacks are described with --spec FILE")
    return AttackSpec(
        kind=kind,
        injection_ratio=args.ratio if args.ratio is not None else DEFAULT_RATIOS[kind],
        target_id=args.target_id if args.target_id is not None else DEFAULT_SPOOF_ID,
        id_range=tuple(args.id_range) if args.id_range else (0, can_io.STANDARD_ID_MAX),
        region=args.region,
        seed=args.seed,
    )


def cmd_inject(args) -> int:
    spec = _attack_spec_from_args(args)
    stream = _read(args, args.input)
    out = inject(stream, spec)
    can_io.write_csv(out, args.out)
    logger.info("injected %d frames", sum(f.injected for f in out))
    return EXIT_OK


def _baseline(args):
    return load_matrix(_read_text(args.baseline)) if args.baseline else None


def _emit_reports(args, reports, best=None) -> None:
    if args.report:
        _write(args.report, report_document(reports, best))
    if args.csv:
        _write(args.csv, report_csv(reports))
    sys.stdout.write(report_table(reports, best))


def cmd_eval(args) -> int:
    hypothesis = _load_model(args)
    stream = _read(args, args.labeled_input)
    _require_labels(stream)
    graphs = build_graphs(stream, WindowingConfig(hypothesis.window_size))
    report = evaluate(
        hypothesis, stream, args.los, args.centering, _baseline(args),
        args.baseline_threshold, timing=False, label=args.label or _display_name(args.labeled_input), graphs=graphs,
    )
    if args.timing:
        from dataclasses import replace

        report = replace(report, latency=measure_latency(hypothesis, graphs, args.repetitions, args.los, args.centering))
    _emit_reports(args, [report])
    if args.figures:
        from . import plotting

        fig_dir = Path(args.figures)
        plotting.confusion_matrices([report], fig_dir / "confusion.png")
        clean = [g.edge_count for g in graphs if not g.attacked]
        attacked = [g.edge_count for g in graphs if g.attacked]
        plotting.edge_distribution({"clean windows": clean, "attacked windows": attacked}, fig_dir / "edges.png")
        plotting.max_degree_histogram(max_degree_histogram(graphs), fig_dir / "max_degree.png")
    return EXIT_OK


def cmd_sweep(args) -> int:
    hypothesis = _load_model(args)
    stream = _read(args, args.labeled_input)
    _require_labels(stream)
    result = sweep_los(hypothesis, stream, args.levels, args.centering, _baseline(args), label=args.label or _display_name(args.labeled_input))
    reports = list(result.reports.values())
    _emit_reports(args, reports, result.best_los)
    if args.figures:
        from . import plotting

        plotting.los_sweep(result, Path(args.figures) / "los_sweep.png")
        plotting.confusion_matrices(reports, Path(args.figures) / "confusion.png")
    return EXIT_OK


def cmd_synth(args) -> int:
    if args.fixture:
        fixture = build_fixture(
            FixtureSpec(
                kinds=args.fixture,
                seed=args.seed,
                n_attacked=args.attacked,
                n_clean=args.clean,
                population_size=args.population_size,
                window_size=args.window_size,
            )
        )
        can_io.write_csv(fixture.stream, args.out)
        if args.clean_out:
            can_io.write_csv(fixture.clean, args.clean_out)
    else:
        can_io.write_csv(synthesize_traffic(args.frames, seed=args.seed), args.out)
    return EXIT_OK


def cmd_features(args) -> int:
    stream = _read(args, args.input)
    graphs = build_graphs(stream, _windowing(args))
    lines = ["window,edge_count,node_count,max_degree,max_degree_id,injected_frames"]
    for g in graphs:
        top = "" if g.max_degree_id is None else f"{g.max_degree_id:04x}"
        lines.append(f"{g.window_index},{g.edge_count},{g.node_count},{g.max_degree},{top},{g.injected_frames}")
    _write(args.output, "\n".join(lines) + "\n")
    if args.dot:
        out = Path(args.dot)
        out.mkdir(parents=True, exist_ok=True)
        for g in graphs[:args.dot_limit]:
            (out / f"window_{g.window_index:05d}.dot").write_text(to_dot(g))
    if args.figures:
        from . import plotting

        fig_dir = Path(args.figures)
        plotting.edge_distribution({stream.source or "input": [g.edge_count for g in graphs]}, fig_dir / "edges.png")
        plotting.max_degree_histogram(max_degree_histogram(graphs), fig_dir / "max_degree.png")
    return EXIT_OK


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("common options")
    g.add_argument("--seed", type=int, default=0, help="seed for every random choice (default 0)")
    g.add_argument("--window-size", type=int, default=None, help="frames per window graph (default 200)")
    g.add_argument("--population-size", type=int, default=None, help="windows per population (default 50)")
    g.add_argument("--los", type=float, default=0.01, help="level of significance (default 0.01)")
    g.add_argument("--format", choices=("auto", "hcrl", "csv"), default="auto", help="input log format")
    g.add_argument(
        "--centering", choices=[c.value for c in Centering], default=Centering.TEST.value,
        help="place test bins on the test median (test, default) or on the base layout (base)",
    )
    g.add_argument("--config", help="JSON file of flag values (keys are flag names); explicit flags win")
    g.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(
        prog="cangraph", description="Graph-based CAN bus intrusion detection toolkit."
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("parse", parents=[common], help="convert an HCRL or CSV log to canonical CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--output", default="-")
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("train", parents=[common], help="build a base hypothesis from attack-free traffic")
    p.add_argument("--input", required=True)
    p.add_argument("--out-model", required=True)
    p.add_argument("--out-baseline", help="also write an ID-sequence transition matrix")
    p.add_argument("--base-windows", type=int, help="use only the first N windows")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("detect", parents=[common], help="test a log against a hypothesis (exit 1 on attack)")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--report", help="JSON verdict report")
    p.add_argument("--csv", help="CSV verdict table")
    p.add_argument("--timing", action="store_true", help="include per-population detection time in reports")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("inject", parents=[common], help="inject a labelled attack into a log")
    p.add_argument("--input", required=True)
    p.add_argument("--attack", choices=[k.value for k in AttackKind])
    p.add_argument("--spec", help="attack spec JSON (same field names as the flags)")
    p.add_argument("--ratio", type=float)
    p.add_argument("--target-id", type=_hex_id)
    p.add_argument("--id-range", type=_hex_id, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--region", type=_region, help="START:STOP frame indices")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_inject)

    for name, helptext in (("eval", "score detection on labelled traffic"), ("sweep", "evaluate over several LoS")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--model", required=True)
        p.add_argument("--labeled-input", required=True)
        p.add_argument("--baseline", help="transition matrix to compare against")
        p.add_argument("--report", help="JSON report file")
        p.add_argument("--csv", help="CSV report file")
        p.add_argument("--label", help="name for this data set in reports")
        p.add_argument("--figures", help="directory for PNG figures (needs matplotlib)")
        if name == "eval":
            p.add_argument("--baseline-threshold", type=float, default=0.0)
            p.add_argument("--timing", action="store_true", help="measure detection latency")
            p.add_argument("--repetitions", type=int, default=10)
            p.set_defaults(func=cmd_eval)
        else:
            p.add_argument("--levels", default=",".join(map(str, stats.SUPPORTED_LOS)))
            p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("synth", parents=[common], help="write synthetic periodic traffic or a labelled fixture")
    p.add_argument("--out", required=True)
    p.add_argument("--frames", type=int, default=100_000)
    p.add_argument("--fixture", type=_kinds, help="attack kinds, e.g. dos or dos,fuzzy")
    p.add_argument("--attacked", type=int, default=20, help="attacked populations in a fixture")
    p.add_argument("--clean", type=int, default=20, help="clean populations in a fixture")
    p.add_argument("--clean-out", help="also write the fixture's attack-free source capture")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("features", parents=[common], help="per-window graph features as CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--output", default="-")
    p.add_argument("--dot", help="directory for Graphviz DOT files")
    p.add_argument("--dot-limit", type=int, default=10)
    p.add_argument("--figures", help="directory for PNG figures (needs matplotlib)")
    p.set_defaults(func=cmd_features)
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: Sequence[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if not args.config:
        return args
    try:
        config = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {args.config}: {exc}") from exc
    if not isinstance(config, dict):
        raise UsageError("config file must hold a JSON object")
    subparser = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest: a for a in subparser._actions}
    defaults = {}
    for key, value in config.items():
        dest = key.lstrip("-").replace("-", "_")
        if dest not in known or dest in ("config", "help"):
            raise UsageError(f"unknown config key {key!r} for {args.command}")
        action = known[dest]
        if action.type is not None and isinstance(value, str):
            value = action.type(value)
        elif dest == "region" and isinstance(value, list):
            value = tuple(value)
        defaults[dest] = value
    subparser.set_defaults(**defaults)
    return parser.parse_args(argv)


def _validate(args) -> None:
    # None means "not given": model-driven commands then take the value from the model
    args.window_size_given = args.window_size is not None
    args.population_size_given = args.population_size is not None
    if args.window_size is None:
        args.window_size = DEFAULT_WINDOW_SIZE
    if args.population_size is None:
        args.population_size = DEFAULT_POPULATION_SIZE
    args.los = _los(args.los)
    if hasattr(args, "levels"):
        args.levels = _levels(args.levels)
    if args.window_size < 2:
        raise UsageError("--window-size must be >= 2")
    if args.population_size < 1:
        raise UsageError("--population-size must be >= 1")
    if getattr(args, "ratio", None) is not None and not 0 < args.ratio <= 1:
        raise UsageError("--ratio must be in (0, 1]")
    if getattr(args, "repetitions", 1) < 1:
        raise UsageError("--repetitions must be >= 1")
    if getattr(args, "frames", 1) < 1:
        raise UsageError("--frames must be >= 1")


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        args.seed_given = any(a == "--seed" or a.startswith("--seed=") for a in argv)
        _validate(args)
    except (UsageError, argparse.ArgumentTypeError) as exc:
        parser.print_usage(sys.stderr)
        print(f"cangraph: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except (CanIOError, HypothesisFormatError, BaselineError, EvaluationError) as exc:
        print(f"cangraph: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (DetectorError, ConfigError, AttackError, stats.StatsError, UsageError) as exc:
        print(f"cangraph: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
