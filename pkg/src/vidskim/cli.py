"""Command-line interface: stage subcommands, reports, and the end-to-end run."""

import argparse
import json
import sys
from pathlib import Path

from .config import (EVAL_PROTOCOLS, PipelineConfig, load_config, save_config)
from .data_io import load_dataset, load_score_track
from .errors import StageError, VidskimError
from .evaluation import (load_splits, por_heatmap, random_baseline,
                         save_eval_report, write_heatmap_csv)
from .pipeline import (ablation_grid, discover_videos, run_all, run_stage,
                       stage_evaluate, work_dir, write_ablation_csv)
from .summarization import PROTOCOLS


def _load_config(args) -> PipelineConfig:
    path = Path(args.config)
    if path.exists():
        cfg = load_config(path)
    elif args.config == "config.json":
        cfg = PipelineConfig()
    else:
        raise StageError(f"config file {path} not found")
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "fixtures", None) is not None:
        cfg.paths.fixtures = args.fixtures
    if getattr(args, "strict_fixtures", None) is not None:
        cfg.strict_fixtures = args.strict_fixtures
    if getattr(args, "cache", None) is not None:
        cfg.paths.cache = args.cache
    if getattr(args, "record", None):
        cfg.record = True
    if getattr(args, "dataset", None) is not None:
        cfg.paths.annotations = args.dataset
    if getattr(args, "splits", None) is not None:
        cfg.paths.splits = args.splits
    if getattr(args, "query", None):
        cfg.queries = tuple(args.query)
    if getattr(args, "query_index", None) is not None:
        cfg.query_index = args.query_index
    if getattr(args, "protocol", None) is not None:
        if args.command in ("evaluate", "baseline", "por"):
            cfg.eval_protocol = args.protocol
        else:
            cfg.summary_protocol = args.protocol
    return cfg


def _filter_videos(cfg, args):
    videos = discover_videos(cfg)
    wanted = getattr(args, "video", None)
    if wanted:
        byid = {v.video_id: v for v in videos}
        missing = [w for w in wanted if w not in byid]
        if missing:
            raise StageError(f"unknown video ids {missing}; "
                             f"known: {sorted(byid)}")
        videos = [byid[w] for w in sorted(set(wanted))]
    return videos


def _emit(args, payload: dict, text_lines) -> None:
    if args.format == "json":
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        for line in text_lines:
            print(line)


def _pct(x: float) -> str:
    return f"{100.0 * x:.2f}"


def _report_payload(report) -> dict:
    return {
        "protocol": report.protocol,
        "seed": report.seed,
        "trials": report.trials,
        "grand": {"precision": report.grand.precision,
                  "recall": report.grand.recall,
                  "f1": report.grand.f1},
        "split_means": list(report.split_means),
        "per_video": {v: {"precision": ev.precision, "recall": ev.recall,
                          "f1": ev.f1}
                      for v, ev in report.per_video.items()},
    }


def _report_lines(report) -> list[str]:
    lines = [f"protocol {report.protocol}  trials {report.trials}  "
             f"seed {report.seed}"]
    for i, mean in enumerate(report.split_means, 1):
        lines.append(f"split {i}: F1 {_pct(mean)}")
    lines.append(f"grand: F1 {_pct(report.grand.f1)}  "
                 f"precision {_pct(report.grand.precision)}  "
                 f"recall {_pct(report.grand.recall)}")
    return lines


def cmd_stage(args) -> int:
    cfg = _load_config(args)
    videos = _filter_videos(cfg, args)
    paths = run_stage(cfg, args.command, videos=videos, jobs=args.jobs)
    _emit(args, {"stage": args.command, "artifacts": [str(p) for p in paths]},
          [f"{args.command}: wrote {p}" for p in paths])
    return 0


def cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    videos = _filter_videos(cfg, args)
    report = stage_evaluate(cfg, videos=videos)
    _emit(args, _report_payload(report), _report_lines(report))
    return 0


def cmd_run_all(args) -> int:
    cfg = _load_config(args)
    videos = _filter_videos(cfg, args)
    report = run_all(cfg, jobs=args.jobs, videos=videos)
    summaries = [str(work_dir(cfg, v.video_id) / "summary.json")
                 for v in videos]
    payload = {"summaries": summaries}
    lines = [f"run-all: wrote {p}" for p in summaries]
    if report is not None:
        payload["report"] = _report_payload(report)
        lines += _report_lines(report)
    _emit(args, payload, lines)
    return 0


def cmd_baseline(args) -> int:
    cfg = _load_config(args)
    if cfg.paths.annotations is None:
        raise StageError("baseline needs an annotations path; pass --dataset "
                         "or set paths.annotations in the config")
    dataset = load_dataset(cfg.paths.annotations)
    splits = load_splits(cfg.paths.splits) if cfg.paths.splits else None
    report = random_baseline(dataset, cfg.eval_protocol, trials=args.trials,
                             seed=cfg.seed, splits=splits,
                             per_frame=args.per_frame)
    if args.out:
        save_eval_report(report, args.out)
    payload = _report_payload(report)
    lines = _report_lines(report)
    code = 0
    if args.expect is not None:
        delta = abs(100.0 * report.grand.f1 - args.expect)
        ok = delta <= args.tol
        payload["check"] = {"expect": args.expect, "tol": args.tol,
                            "delta": delta, "passed": ok}
        lines.append(f"check: expected {args.expect} +- {args.tol}, "
                     f"got {_pct(report.grand.f1)} -> "
                     f"{'PASS' if ok else 'FAIL'}")
        code = 0 if ok else 1
    _emit(args, payload, lines)
    return code


def cmd_por(args) -> int:
    cfg = _load_config(args)
    if cfg.paths.annotations is None:
        raise StageError("por needs an annotations path; pass --dataset or "
                         "set paths.annotations in the config")
    dataset = load_dataset(cfg.paths.annotations)
    model_scores = None
    if args.use_model:
        model_scores = {}
        for vid in sorted(dataset):
            path = work_dir(cfg, vid) / "scores_frame_final.json"
            if not path.exists():
                raise StageError(f"{path} is missing: run score first")
            model_scores[vid] = load_score_track(path).values
    matrix = por_heatmap(dataset, args.fragments, args.budgets,
                         model_scores=model_scores, trials=args.trials,
                         seed=cfg.seed)
    out = args.out or str(Path(cfg.paths.work) / "por.csv")
    write_heatmap_csv(out, matrix, args.fragments, args.budgets)
    payload = {"out": out, "fragments": args.fragments,
               "budgets": args.budgets, "matrix": matrix.tolist()}
    lines = [f"por: wrote {out}"]
    for ff, row in zip(args.fragments, matrix):
        lines.append(f"fragment {ff}: " +
                     "  ".join(f"{v:.3f}" for v in row))
    _emit(args, payload, lines)
    return 0


def cmd_ablate(args) -> int:
    cfg = _load_config(args)
    videos = _filter_videos(cfg, args)
    rows = ablation_grid(cfg, sigmas=args.sigmas, ws=args.ws,
                         norms=args.norms, embedding_dirs=args.embeddings,
                         videos=videos)
    out = args.out or str(Path(cfg.paths.work) / "ablation.csv")
    write_ablation_csv(out, rows)
    lines = [f"ablate: wrote {out}"]
    for row in rows:
        lines.append(f"sigma={row['sigma']} W={row['w_seconds']} "
                     f"norm={row['norm']} enc={row['encoder_tag']}: "
                     f"F1 {_pct(row['f1'])}")
    _emit(args, {"out": out, "rows": rows}, lines)
    return 0


def cmd_init(args) -> int:
    cfg = PipelineConfig()
    save_config(cfg, args.out)
    _emit(args, {"out": args.out}, [f"init: wrote {args.out}"])
    return 0


def _csv_floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad float list {text!r}: {exc}")


def _csv_names(text: str) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vidskim",
        description="Language-guided video summarization pipeline and "
                    "benchmark harness.")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default="config.json",
                        help="JSON config file (default: ./config.json)")
    common.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
    common.add_argument("--format", choices=("text", "json"), default="text",
                        help="output format for reports")

    backend = argparse.ArgumentParser(add_help=False)
    backend.add_argument("--fixtures", default=None,
                         help="recorded backend replies (JSONL)")
    backend.add_argument("--strict-fixtures",
                         action=argparse.BooleanOptionalAction, default=None,
                         help="fail on fixture misses instead of stubbing")
    backend.add_argument("--cache", default=None,
                         help="response cache directory")
    backend.add_argument("--record", action="store_true", default=None,
                         help="capture live replies into the fixtures file")

    pervid = argparse.ArgumentParser(add_help=False)
    pervid.add_argument("--jobs", type=int, default=1,
                        help="videos processed in parallel")
    pervid.add_argument("--video", action="append", default=None,
                        help="restrict to this video id (repeatable)")

    for name, info in (
            ("detect", "segment videos into scenes"),
            ("describe", "caption scenes and the full video"),
            ("judge", "score scene importance with the chat backend"),
            ("score", "turn scene scores into per-frame scores"),
            ("summarize", "select summary frames under the protocol budget")):
        p = sub.add_parser(name, parents=[common, backend, pervid], help=info)
        if name == "judge":
            p.add_argument("--query", action="append", default=None,
                           help="user content preference (repeatable)")
        if name == "score":
            p.add_argument("--query-index", type=int, default=None,
                           help="score column to use when judged with "
                                "multiple queries")
        if name == "summarize":
            p.add_argument("--protocol", choices=PROTOCOLS, default=None,
                           help="summary selection protocol")
        p.set_defaults(func=cmd_stage)

    p = sub.add_parser("evaluate", parents=[common, pervid],
                       help="compare summaries against reference annotations")
    p.add_argument("--protocol", choices=EVAL_PROTOCOLS, default=None)
    p.add_argument("--dataset", default=None,
                   help="annotation directory override")
    p.add_argument("--splits", default=None, help="split definition file")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("run-all", parents=[common, backend, pervid],
                       help="run every stage in order, then evaluate")
    p.add_argument("--query", action="append", default=None)
    p.add_argument("--protocol", choices=PROTOCOLS, default=None)
    p.add_argument("--dataset", default=None)
    p.add_argument("--splits", default=None)
    p.set_defaults(func=cmd_run_all)

    p = sub.add_parser("baseline", parents=[common],
                       help="random-summary baseline over a dataset")
    p.add_argument("--dataset", default=None,
                   help="annotation directory (default: config annotations)")
    p.add_argument("--protocol", choices=EVAL_PROTOCOLS, default=None)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--per-frame", action="store_true",
                   help="draw per-frame instead of per-unit random scores")
    p.add_argument("--splits", default=None)
    p.add_argument("--out", default=None, help="write the report JSON here")
    p.add_argument("--expect", type=float, default=None,
                   help="expected grand F1 x100 for a tolerance check")
    p.add_argument("--tol", type=float, default=2.0,
                   help="allowed absolute deviation for --expect")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("por", parents=[common],
                       help="precision-over-random heatmap")
    p.add_argument("--dataset", default=None)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--fragments", type=_csv_floats, default=[0.02, 0.03, 0.05],
                   help="fragment fractions, comma separated")
    p.add_argument("--budgets", type=_csv_floats, default=[0.15, 0.36],
                   help="budget fractions, comma separated")
    p.add_argument("--use-model", action="store_true",
                   help="use pipeline frame scores as the numerator instead "
                        "of the random null model")
    p.add_argument("--out", default=None, help="CSV output path")
    p.set_defaults(func=cmd_por)

    p = sub.add_parser("ablate", parents=[common, pervid],
                       help="F1 grid over sigma, W, norm, and encoders")
    p.add_argument("--sigmas", type=_csv_floats, default=[],
                   help="sigma values, comma separated")
    p.add_argument("--ws", type=_csv_floats, default=[],
                   help="segment durations in seconds, comma separated")
    p.add_argument("--norms", type=_csv_names, default=[],
                   help="normalization kinds, comma separated")
    p.add_argument("--embeddings", action="append", default=None,
                   help="alternative embedding file/directory (repeatable)")
    p.add_argument("--query-index", type=int, default=None)
    p.add_argument("--out", default=None, help="CSV output path")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("init", parents=[common],
                       help="write a config file with every default")
    p.add_argument("--out", default="config.json")
    p.set_defaults(func=cmd_init)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except VidskimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
