"""Command line interface for the asset preparation toolkit."""

import argparse
import sys

from vidprep.convert import convert_qfvs, convert_summe, convert_tvsum, convert_vidsum_reason
from vidprep.embed import ENCODERS, export_embeddings
from vidprep.errors import PrepError
from vidprep.extract import ExtractionJob, extract_frames
from vidprep.formats import write_frame_archive
from vidprep.record import record_run
from vidprep.skim import cut_skim


def _cmd_extract(args) -> int:
    job = ExtractionJob(
        source=args.source, fps=args.fps, source_fps=args.source_fps,
        max_edge=args.max_edge, keep_pixels=not args.no_pixels,
    )
    clip = extract_frames(job)
    write_frame_archive(clip, args.out)
    print(
        f"wrote {args.out}: {clip.count} frames {clip.height}x{clip.width} "
        f"at {clip.fps:g} fps"
    )
    return 0


def _cmd_embed(args) -> int:
    sheet = export_embeddings(args.archive, args.out, args.encoder)
    count, dim = sheet.rows.shape
    print(f"wrote {args.out}: {count}x{dim} rows tagged {sheet.tag}")
    return 0


def _cmd_convert(args) -> int:
    if args.layout == "summe":
        stats = convert_summe(args.src, args.out, segment_seconds=args.segment_seconds)
    elif args.layout == "tvsum":
        seg = 2.0 if args.segment_seconds is None else args.segment_seconds
        stats = convert_tvsum(
            args.src, args.out, fps=args.fps, info_path=args.info, segment_seconds=seg,
        )
    elif args.layout == "qfvs":
        stats = convert_qfvs(args.src, args.out, shot_seconds=args.shot_seconds)
    else:
        stats = convert_vidsum_reason(args.src, args.out)
    for row in stats:
        print(f"{row['video_id']}: {row['users']} users, {row['n_frames']} frames")
    total_users = sum(row["users"] for row in stats)
    print(f"converted {len(stats)} videos, {total_users} annotators -> {args.out}")
    return 0


def _cmd_cut_skim(args) -> int:
    stats = cut_skim(args.archive, args.summary, args.out)
    print(f"wrote {stats['out']}: {stats['frames']} frames, {stats['seconds']:.1f}s")
    return 0


def _cmd_record_fixtures(args) -> int:
    output = record_run(
        args.config, stages=tuple(args.stage), fixtures_path=args.fixtures,
        videos=tuple(args.video or ()),
    )
    if output.strip():
        print(output.strip())
    print(f"recorded stages: {', '.join(args.stage)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vidprep",
        description="Prepare frame archives, embeddings, and benchmark "
        "annotations for the scoring pipeline.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="decode a video or image directory into a frame archive")
    p.add_argument("source", help="video file, or directory of images")
    p.add_argument("--out", required=True, help="output .psfr path")
    p.add_argument("--fps", type=float, default=None,
                   help="resample to this rate (default: keep the source grid)")
    p.add_argument("--source-fps", type=float, default=None,
                   help="native rate; required for image directories")
    p.add_argument("--max-edge", type=int, default=None,
                   help="shrink frames so the longer edge fits this")
    p.add_argument("--no-pixels", action="store_true",
                   help="store only the difference series")
    p.set_defaults(func=_cmd_extract)

    p = sub.add_parser("embed", help="export per-frame embeddings from an archive")
    p.add_argument("archive", help="input .psfr path")
    p.add_argument("--out", required=True, help="output .psem path")
    p.add_argument("--encoder", default="hist64", choices=sorted(ENCODERS),
                   help="encoder name (default: hist64)")
    p.set_defaults(func=_cmd_embed)

    p = sub.add_parser("convert", help="convert a benchmark archive to annotation JSON")
    p.add_argument("layout", choices=("summe", "tvsum", "qfvs", "vidsum_reason"),
                   help="archive layout to read")
    p.add_argument("src", help="archive directory, TSV, or manifest JSON")
    p.add_argument("--out", required=True, help="output directory for per-video JSON")
    p.add_argument("--fps", type=float, default=30.0,
                   help="tvsum: fallback frame rate when --info lacks a video")
    p.add_argument("--info", default=None,
                   help="tvsum: TSV of video_id and fps columns")
    p.add_argument("--segment-seconds", type=float, default=None,
                   help="summe/tvsum: uniform segment length when the archive "
                   "has no segmentation (tvsum default: 2.0)")
    p.add_argument("--shot-seconds", type=float, default=5.0,
                   help="qfvs: fixed shot length behind the selection matrix")
    p.set_defaults(func=_cmd_convert)

    p = sub.add_parser("cut-skim", help="cut the frames a summary selects into a preview")
    p.add_argument("archive", help="input .psfr path")
    p.add_argument("summary", help="summary JSON produced by the pipeline")
    p.add_argument("--out", required=True, help="output .gif or .psfr path")
    p.set_defaults(func=_cmd_cut_skim)

    p = sub.add_parser("record-fixtures",
                       help="run pipeline stages against a live backend and "
                       "capture the replies for replay")
    p.add_argument("--config", required=True, help="pipeline config path")
    p.add_argument("--stage", action="append", default=None,
                   help="stage to record; repeat for several "
                   "(default: describe then judge)")
    p.add_argument("--fixtures", default=None,
                   help="replay file override passed to the pipeline")
    p.add_argument("--video", action="append", default=None,
                   help="restrict recording to these video ids")
    p.set_defaults(func=_cmd_record_fixtures)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "record-fixtures" and not args.stage:
        args.stage = ["describe", "judge"]
    try:
        return args.func(args)
    except PrepError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
