"""``tlrel`` command line: eval, relevance train/run, bench, validate, synth, version.

Exit codes: 0 success, 1 internal error, 2 input validation error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from collections import Counter
from pathlib import Path

from . import __version__, kernels
from .errors import InputError
from .taxonomy import load_schema, render_class

log = logging.getLogger("tlrelevance")

EXIT_OK, EXIT_INTERNAL, EXIT_INPUT = 0, 1, 2


def _emit(text: str, out):
    if out in (None, "-"):
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        from .dataio import atomic_write_text

        atomic_write_text(out, text if text.endswith("\n") else text + "\n")


def cmd_eval(args):
    from .dataio import read_frames
    from .evaluation import EvalConfig, evaluate
    from .taxonomy import ARROW_ORDER

    schema = load_schema(args.schema)
    cfg = EvalConfig(
        iou_threshold=args.iou,
        conf_threshold=args.conf_threshold,
        max_detections_per_image=args.max_det,
        pr_conf=args.pr_conf,
        ap_mode=args.ap_mode,
    )
    gt = read_frames(args.gt, schema)
    pred = read_frames(args.pred, schema)
    classes = list(ARROW_ORDER) if args.kind == "arrow" else schema
    report = evaluate(gt, pred, classes, cfg, workers=args.workers,
                      three_states=args.three_states and args.kind == "tl")
    if args.report == "table":
        _emit(report.to_table(), args.out)
    else:
        _emit(json.dumps(report.to_json(), indent=2), args.out)
    return EXIT_OK


def _training_rows(frames):
    from .gbm import extract_features
    from .geometry import Detection

    rows = []
    for fr in frames:
        for g in fr.ground_truths:
            if g.is_arrow and g.relevant is not None:
                rows.append((extract_features(Detection(g.bbox, g.cls, 1.0), fr), g.relevant))
    return rows


def cmd_train(args):
    from .dataio import read_frames
    from .gbm import GBMConfig, fit, save_model

    schema = load_schema(args.schema)
    cfg = GBMConfig(
        stages=args.stages,
        max_depth=args.depth,
        learning_rate=args.lr,
        subsample=args.subsample,
        min_samples_leaf=args.min_samples_leaf,
        seed=args.seed,
    )
    rows = _training_rows(read_frames(args.data, schema))
    if len(rows) < 2:
        raise InputError(f"need at least 2 arrow records with a relevant label, found {len(rows)}")
    model = fit(rows, cfg)
    save_model(model, args.out)
    positives = sum(1 for _, r in rows if r)
    note = " (degenerate: single class)" if model.degenerate else ""
    print(f"trained {len(model.trees)} trees on {len(rows)} arrows ({positives} relevant); "
          f"train loss {model.train_loss[0]:.4f} -> {model.train_loss[-1]:.4f}{note}; wrote {args.out}")
    return EXIT_OK


def assignment_records(frame, assignment):
    for v in assignment.lights:
        d = v.detection
        rec = {"frame_id": frame.id, "kind": "tl", "bbox": d.bbox.as_list(), "cls": render_class(d.cls),
               "confidence": d.confidence}
        if frame.timestamp_ms is not None:
            rec["timestamp_ms"] = frame.timestamp_ms
        rec["relevant"] = v.relevant
        rec["source"] = v.source.value
        yield rec


def cmd_run(args):
    from .dataio import read_frames, to_sequence
    from .gbm import load_model
    from .relevance import RelevanceEngine

    schema = load_schema(args.schema)
    model = load_model(args.model)
    frames = to_sequence(read_frames(args.stream, schema))
    engine = RelevanceEngine(model, window=args.window, threshold=args.threshold)
    lines = []
    counts = Counter()
    for fr in frames:
        result = engine.process(fr)
        counts[result.rule.value] += 1
        lines.extend(json.dumps(r) for r in assignment_records(fr, result))
    _emit("\n".join(lines), args.out)
    if args.out not in (None, "-"):
        print(f"{len(frames)} frames, {len(lines)} light verdicts; rules fired: {dict(sorted(counts.items()))}")
    return EXIT_OK


def cmd_bench(args):
    from .bench import bench_relevance, compare_backends, format_comparison, synthetic_model
    from .dataio import read_frames, to_sequence
    from .gbm import load_model
    from .synthetic import bench_stream

    if args.backend:
        kernels.set_backend(args.backend)
    if args.compare_backends:
        print(format_comparison(compare_backends(seed=args.seed)))
        print()
    if args.stream:
        if not args.model:
            raise InputError("--stream requires --model")
        frames = to_sequence(read_frames(args.stream, load_schema(args.schema)))
    else:
        frames = bench_stream(args.frames, args.arrows, args.lights, seed=args.seed)
    model = load_model(args.model) if args.model else synthetic_model(seed=args.seed)
    report = bench_relevance(frames, model, budget_ms=args.budget_ms, warmup=args.warmup,
                             window=args.window, threshold=args.threshold)
    print(report.summary())
    if args.out:
        _emit(json.dumps(report.to_json(), indent=2), args.out)
    return EXIT_OK


def cmd_validate(args):
    from .dataio import ParseStats, read_frames

    schema = load_schema(args.input_schema)
    stats = ParseStats()
    frames = read_frames(args.input, schema, stats)
    counts = Counter()
    for fr in frames:
        for d in fr.detections:
            counts[("pred", "arrow" if d.is_arrow else "tl", render_class(d.cls))] += 1
        for g in fr.ground_truths:
            counts[("gt", "arrow" if g.is_arrow else "tl", render_class(g.cls))] += 1
    print(f"{args.input}: {len(frames)} frames, {stats.records} records, {stats.manifests} manifests, "
          f"{stats.unknown_field_count} unknown fields")
    for (role, kind, label), n in sorted(counts.items()):
        print(f"  {role:<5}{kind:<6}{label:<26}{n:>8}")
    return EXIT_OK


def cmd_synth(args):
    from .dataio import atomic_write_text, dump_frames
    from .synthetic import arrow_frames, bench_stream

    if args.what == "arrows":
        frames = arrow_frames(args.n, seed=args.seed)
    else:
        frames = bench_stream(args.frames, args.arrows, args.lights, seed=args.seed)
    atomic_write_text(args.out, dump_frames(frames))
    print(f"wrote {len(frames)} frames to {args.out}")
    return EXIT_OK


def cmd_version(args):
    print(f"tlrel {__version__} (kernels: {kernels.BACKEND}; available: {', '.join(kernels.available_backends())})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tlrel", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="JSON file with default values for flags (flags win)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval", help="mAP50 / mAP_3states report")
    p.add_argument("--gt", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--schema", default="dtld", help="builtin name or JSON schema file")
    p.add_argument("--iou", type=float, default=0.5)
    p.add_argument("--conf-threshold", type=float, default=0.001)
    p.add_argument("--max-det", type=int, default=300)
    p.add_argument("--pr-conf", type=float, default=0.25, help="operating point for scalar P/R")
    p.add_argument("--three-states", action="store_true")
    p.add_argument("--ap-mode", choices=("coco101", "allpoints"), default="coco101")
    p.add_argument("--kind", choices=("tl", "arrow"), default="tl")
    p.add_argument("--report", choices=("json", "table"), default="json")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    rel = sub.add_parser("relevance", help="train or run the arrow relevance classifier")
    rsub = rel.add_subparsers(dest="relevance_command", required=True)
    p = rsub.add_parser("train")
    p.add_argument("--data", required=True, help="JSON Lines with arrow records carrying 'relevant'")
    p.add_argument("--schema", default="dtld")
    p.add_argument("--stages", type=int, default=300)
    p.add_argument("--depth", type=int, default=3)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--subsample", type=float, default=1.0)
    p.add_argument("--min-samples-leaf", type=int, default=1)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = rsub.add_parser("run")
    p.add_argument("--model", required=True)
    p.add_argument("--stream", required=True)
    p.add_argument("--schema", default="dtld")
    p.add_argument("--window", type=int, default=30)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--out")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("bench", help="per-frame latency of the relevance stage")
    p.add_argument("--stream")
    p.add_argument("--model")
    p.add_argument("--schema", default="dtld")
    p.add_argument("--frames", type=int, default=1100)
    p.add_argument("--arrows", type=int, default=20)
    p.add_argument("--lights", type=int, default=20)
    p.add_argument("--warmup", type=int, default=100)
    p.add_argument("--budget-ms", type=float, default=2.0)
    p.add_argument("--window", type=int, default=30)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--backend", choices=("cython", "python"))
    p.add_argument("--compare-backends", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("validate", help="parse a records file and print class counts")
    p.add_argument("--input", required=True)
    p.add_argument("--schema", dest="input_schema", default="dtld")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("synth", help="write seeded synthetic data")
    p.add_argument("what", choices=("arrows", "stream"))
    p.add_argument("--n", type=int, default=2000, help="arrow count (arrows)")
    p.add_argument("--frames", type=int, default=1100)
    p.add_argument("--arrows", type=int, default=20)
    p.add_argument("--lights", type=int, default=20)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("version")
    p.set_defaults(func=cmd_version)
    return parser


def _subparser_actions(parser, args):
    """Actions of the innermost subcommand that was selected."""
    actions = list(parser._actions)
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            chosen = getattr(args, action.dest, None)
            if chosen in action.choices:
                return _subparser_actions(action.choices[chosen], args)
    return actions


def apply_config(parser, args, argv):
    """Fill flags absent from ``argv`` with values from the ``--config`` JSON file."""
    if not args.config:
        return args
    try:
        config = json.loads(Path(args.config).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InputError(f"config file {args.config} is not valid JSON: {exc}") from None
    if not isinstance(config, dict):
        raise InputError("config file must hold a JSON object")
    given = {a.split("=", 1)[0] for a in argv if a.startswith("--")}
    by_dest = {}
    for action in _subparser_actions(parser, args):
        if action.option_strings:
            by_dest[action.dest] = action
            for opt in action.option_strings:
                by_dest[opt.lstrip("-").replace("-", "_")] = action
    for key, value in config.items():
        action = by_dest.get(key.replace("-", "_"))
        if action is None:
            raise InputError(f"unknown config key {key!r}")
        if given & set(action.option_strings):
            continue
        if action.type is not None and value is not None:
            value = action.type(value)
        setattr(args, action.dest, value)
    return args


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        apply_config(parser, args, argv)
        return args.func(args)
    except (InputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
