"""Command-line surface for batch use.

Exit codes are pinned so scripts can branch on them: 0 success, 1 I/O error,
2 configuration or usage error, 3 validation failure. Every command is
deterministic for identical inputs and flags; --threads only controls worker
counts and never changes any output byte.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__, storage
from .errors import DimError, FormatError, ValidationError
from .localize import TNConfig, localize_candidates
from .metrics import (
    detection_uap,
    drop_distractor_predictions,
    evaluate_subset,
    localization_uap,
    mean_ap,
)
from .plots import save_pr_curve
from .search import (
    apply_normalizer,
    detection_scores,
    fit_normalizer,
    global_topk_pairs,
    l2_normalize,
)
from .simulate import SimConfig, generate, write_instance

_INT_KEYS = (
    "seed",
    "dim",
    "n_references",
    "n_distractor_queries",
    "n_copied_queries",
    "n_training",
    "n_hard_negative_pairs",
    "min_segment_separation",
)
_FLOAT_KEYS = (
    "noise_sigma",
    "p_multi_segment",
    "p_multi_reference",
    "p_speed_change",
    "p_time_decimate",
    "hard_negative_correlation",
)
_INT_PAIR_KEYS = ("duration_range", "segment_length_range", "decimate_chunk_range")
_FLOAT_TUPLE_KEYS = ("speed_factors",)


def parse_sim_config(path: str) -> SimConfig:
    """Parse a key=value simulation config file (# starts a comment)."""
    values: dict[str, object] = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValidationError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, value = (part.strip() for part in line.partition("="))
            try:
                if key in _INT_KEYS:
                    values[key] = int(value)
                elif key in _FLOAT_KEYS:
                    values[key] = float(value)
                elif key in _INT_PAIR_KEYS:
                    a, b = (int(v) for v in value.split(","))
                    values[key] = (a, b)
                elif key in _FLOAT_TUPLE_KEYS:
                    values[key] = tuple(float(v) for v in value.split(","))
                else:
                    raise ValidationError(f"{path}:{lineno}: unknown config key {key!r}")
            except ValueError:
                raise ValidationError(f"{path}:{lineno}: bad value for {key}: {value!r}")
    if "seed" not in values:
        raise ValidationError(f"{path}: missing required config key 'seed'")
    return SimConfig(**values)


def _cmd_simulate(args: argparse.Namespace) -> int:
    cfg = parse_sim_config(args.config)
    instance = generate(cfg)
    write_instance(instance, args.out)
    s = instance.summary()
    print(f"queries: {s['queries']}")
    print(f"references: {s['references']}")
    print(f"copied segments: {s['copied_segments']}")
    print(f"queries with copies: {s['queries_with_copies']}")
    print(f"distractor queries: {s['distractor_queries']}")
    print(f"training videos: {s['training']}")
    print(f"hard negative pairs: {s['hard_negative_pairs']}")
    return 0


def _load_processed_sets(args: argparse.Namespace):
    """Read query/reference descriptors and apply the requested normalizations."""
    queries = storage.read_descriptors(args.queries)
    references = storage.read_descriptors(args.refs)
    score_normalized = False
    if args.normalize == "l2":
        queries, zq = l2_normalize(queries)
        references, zr = l2_normalize(references)
        if zq + zr:
            print(f"warning: {zq + zr} zero descriptor rows left unnormalized", file=sys.stderr)
    if args.score_norm:
        training = storage.read_descriptors(args.score_norm)
        if args.normalize == "l2":
            training, _ = l2_normalize(training)
        normalizer = fit_normalizer(training, args.k_sn, args.beta, training)
        queries, references = apply_normalizer(normalizer, queries, references)
        score_normalized = True
    return queries, references, score_normalized


def _add_descriptor_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--queries", required=True, help="query descriptor file (.vcbd)")
    p.add_argument("--refs", required=True, help="reference descriptor file (.vcbd)")
    p.add_argument("--normalize", choices=["l2", "none"], default="none",
                   help="per-frame descriptor normalization (default none)")
    p.add_argument("--score-norm", metavar="TRAIN",
                   help="training descriptor file enabling score normalization")
    p.add_argument("--k-sn", type=int, default=1,
                   help="k-th training neighbor for score normalization (default 1)")
    p.add_argument("--beta", type=float, default=1.2,
                   help="score normalization strength (default 1.2)")


def _cmd_search(args: argparse.Namespace) -> int:
    queries, references, _ = _load_processed_sets(args)
    matches = global_topk_pairs(queries, references, args.k, args.threads)
    detections = detection_scores(matches)
    if args.matches:
        storage.write_matches(args.matches, matches)
    storage.write_detection_predictions(args.detections, detections)
    print(f"retrieved {len(matches)} frame pairs covering {len(detections)} video pairs")
    return 0


def _cmd_localize(args: argparse.Namespace) -> int:
    queries, references, score_normalized = _load_processed_sets(args)
    if args.candidates:
        pairs = storage.read_pairs(args.candidates)
    else:
        matches = global_topk_pairs(queries, references, args.k, args.threads)
        pairs = [(p.query, p.reference) for p in detection_scores(matches)]
    offset = args.offset if args.offset is not None else (0.5 if score_normalized else 0.0)
    cfg = TNConfig(
        similarity_threshold=args.threshold,
        offset=offset,
        max_time_gap=args.max_gap,
        min_path_length=args.min_path_length,
        max_paths_per_pair=args.max_paths,
    )
    preds = localize_candidates(pairs, queries, references, cfg, args.threads)
    storage.write_localization_predictions(args.out, preds)
    print(f"localized {len(preds)} segments over {len(set(pairs))} candidate pairs")
    return 0


def _subset_predicate(expr: str):
    if expr.startswith("transform:"):
        name = expr.split(":", 1)[1]
        if not name:
            raise ValidationError("empty transform name in subset expression")
        return lambda _q, tag: name in tag.tags
    if expr.startswith("min-transforms:"):
        n = int(expr.split(":", 1)[1])
        return lambda _q, tag: tag.n_transforms >= n
    raise ValidationError(
        f"unknown subset expression {expr!r} "
        "(use transform:NAME, min-transforms:K, or no-distractors)"
    )


def _cmd_evaluate(args: argparse.Namespace) -> int:
    if args.curve and args.task == "map":
        print("error: --curve is only available for detection/localization", file=sys.stderr)
        return 2
    gt = storage.read_ground_truth(args.gt)
    if args.task == "localization":
        preds = storage.read_localization_predictions(args.preds)
        metric = localization_uap
    else:
        preds = storage.read_detection_predictions(args.preds)
        metric = detection_uap if args.task == "detection" else mean_ap

    if args.subset == "no-distractors":
        preds = drop_distractor_predictions(preds, gt)
        result = metric(preds, gt)
    elif args.subset:
        if not args.tags:
            print("error: --subset requires --tags", file=sys.stderr)
            return 2
        tags = storage.read_tags(args.tags)
        result = evaluate_subset(preds, gt, tags, _subset_predicate(args.subset), metric)
    else:
        result = metric(preds, gt)

    if args.task == "map":
        print(f"mAP: {result:.6f}")
        return 0
    value, curve = result
    print(f"{args.task} uAP: {value:.6f}")
    if args.curve:
        curve.write_csv(args.curve)
        figure = args.figure or str(Path(args.curve).with_suffix(".png"))
        save_pr_curve(curve, figure, title=f"{args.task}")
        print(f"wrote curve to {args.curve} and figure to {figure}")
    return 0


def _cmd_validate_submission(args: argparse.Namespace) -> int:
    sets = storage.read_descriptors(args.descriptors)
    durations = storage.read_durations(args.durations)
    report = storage.validate_descriptor_budget(sets, durations)
    for line in report.lines():
        print(line)
    return 0 if report.passed else 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vcbench",
        description="Video copy detection and localization benchmark toolkit",
    )
    parser.add_argument(
        "--version",
        action="version",
        version=f"vcbench {__version__} (descriptor format v{storage.FORMAT_VERSION})",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=1,
                        help="worker threads for search/localization (never affects output)")

    p = sub.add_parser("simulate", parents=[common], help="generate a benchmark instance")
    p.add_argument("--config", required=True, help="key=value config file (seed is required)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("search", parents=[common],
                       help="global top-k descriptor pair search and detection scoring")
    _add_descriptor_args(p)
    p.add_argument("--k", type=int, required=True, help="number of frame pairs to retrieve")
    p.add_argument("--matches", help="optional frame match CSV output")
    p.add_argument("--detections", required=True, help="detection predictions CSV output")
    p.set_defaults(func=_cmd_search)

    p = sub.add_parser("localize", parents=[common],
                       help="temporal-network localization over candidate pairs")
    _add_descriptor_args(p)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--candidates", help="candidate pair CSV (query_id,ref_id)")
    src.add_argument("--from-search", action="store_true",
                     help="derive candidates by running the search step first")
    p.add_argument("--k", type=int, default=2000,
                   help="frame pairs retrieved when using --from-search (default 2000)")
    p.add_argument("--threshold", type=float, default=0.0,
                   help="similarity threshold after offset (default 0)")
    p.add_argument("--offset", type=float, default=None,
                   help="similarity offset (default 0.5 when score-normalized, else 0)")
    p.add_argument("--max-gap", type=float, default=10.0,
                   help="maximum time gap between matched frames (default 10 s)")
    p.add_argument("--min-path-length", type=int, default=3,
                   help="minimum matches per reported segment (default 3)")
    p.add_argument("--max-paths", type=int, default=5,
                   help="maximum segments per video pair (default 5)")
    p.add_argument("--out", required=True, help="localization predictions CSV output")
    p.set_defaults(func=_cmd_localize)

    p = sub.add_parser("evaluate", parents=[common], help="compute uAP/mAP from prediction files")
    p.add_argument("--task", choices=["detection", "localization", "map"], required=True)
    p.add_argument("--preds", required=True, help="predictions CSV")
    p.add_argument("--gt", required=True, help="ground truth CSV")
    p.add_argument("--tags", help="transform tags CSV (needed for tag-based subsets)")
    p.add_argument("--subset",
                   help="restrict matched queries: transform:NAME, min-transforms:K, "
                        "or no-distractors")
    p.add_argument("--curve", help="write the precision/recall curve CSV here")
    p.add_argument("--figure", help="figure output path (default: curve path with .png)")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("validate-submission", parents=[common],
                       help="check descriptor files against the track limits")
    p.add_argument("--descriptors", required=True, help="descriptor file (.vcbd)")
    p.add_argument("--durations", required=True, help="durations CSV (video_id,duration)")
    p.set_defaults(func=_cmd_validate_submission)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ValidationError, FormatError, DimError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2 if args.command == "simulate" else 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(main())
