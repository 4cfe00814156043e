"""Benchmark dataset conversion into the annotation interchange format.

Each converter reads one published archive layout and writes one JSON
annotation file per video.  Archives in the wild drift between
releases, so every converter checks the layout it understands and
fails with the offending file named rather than guessing.

Supported layouts:
  summe: a directory of MATLAB files, one per video, holding a binary
    user_score matrix (frames x annotators), nFrames, and FPS.
  tvsum: a single TSV with one row per (video, annotator) holding
    comma-separated per-frame importance scores on a 1..5 scale.
  qfvs: a directory of MATLAB files with a binary user_summary matrix
    (queries x fixed-length shots) plus a .queries.json sidecar per
    video listing the query texts.
  vidsum_reason: one JSON manifest with per-video query/keyshot pairs.
"""

import json
from pathlib import Path

import numpy as np
import scipy.io

from vidprep.errors import LayoutError
from vidprep.formats import write_annotation_file

SUMME_SCALE_THRESHOLD = 0.5


def _mask_runs(mask) -> list[tuple[int, int]]:
    """Half-open index runs where a binary vector is set."""
    idx = np.flatnonzero(np.asarray(mask, dtype=np.float64) > SUMME_SCALE_THRESHOLD)
    if idx.size == 0:
        return []
    breaks = np.flatnonzero(np.diff(idx) > 1)
    starts = np.concatenate(([0], breaks + 1))
    ends = np.concatenate((breaks, [idx.size - 1]))
    return [(int(idx[s]), int(idx[e]) + 1) for s, e in zip(starts, ends)]


def _block_segments(n_frames: int, block: int) -> list[tuple[int, int]]:
    if block < 1:
        raise LayoutError(f"segment length rounds to {block} frames; need >= 1")
    return [(s, min(s + block, n_frames)) for s in range(0, n_frames, block)]


def _mat_field(mat: dict, path: Path, *names):
    for name in names:
        if name in mat:
            return mat[name]
    raise LayoutError(f"{path}: none of the fields {names} are present")


def _load_mat(path: Path) -> dict:
    try:
        return scipy.io.loadmat(path, squeeze_me=True)
    except (OSError, ValueError, NotImplementedError) as exc:
        raise LayoutError(f"{path}: not a readable MATLAB file: {exc}") from exc


def _check_partition(segments, n_frames: int, path: Path) -> None:
    prev = 0
    for s, e in segments:
        if s != prev or e <= s:
            raise LayoutError(
                f"{path}: segments must partition [0, {n_frames}) contiguously, "
                f"got a piece [{s}, {e}) after position {prev}"
            )
        prev = e
    if prev != n_frames:
        raise LayoutError(f"{path}: segments end at {prev}, not n_frames={n_frames}")


def convert_summe(src_dir, out_dir, segment_seconds: float | None = None) -> list[dict]:
    """Convert a directory of per-video MATLAB ground truth files.

    Columns of user_score are per-annotator binary selections; runs of
    selected frames become keyshots.  Segments come from the file when
    present (1-based inclusive rows) and otherwise from a uniform grid
    of segment_seconds, or are omitted.

    Returns one stats dict per converted video.
    """
    src = Path(src_dir)
    gt = src / "GT"
    mats = sorted((gt if gt.is_dir() else src).glob("*.mat"))
    if not mats:
        raise LayoutError(f"{src}: no .mat files found (looked in ./ and ./GT)")
    out = Path(out_dir)
    stats = []
    for path in mats:
        mat = _load_mat(path)
        n_frames = int(_mat_field(mat, path, "nFrames", "n_frames"))
        fps = float(_mat_field(mat, path, "FPS", "fps"))
        scores = np.atleast_2d(np.asarray(_mat_field(mat, path, "user_score", "user_scores")))
        if scores.shape[0] != n_frames and scores.shape[1] == n_frames:
            scores = scores.T
        if scores.shape[0] != n_frames:
            raise LayoutError(
                f"{path}: user_score shape {scores.shape} does not cover "
                f"nFrames={n_frames} on either axis"
            )
        users = [{"keyshots": _mask_runs(scores[:, u])} for u in range(scores.shape[1])]
        segments = None
        if "segments" in mat:
            rows = np.atleast_2d(np.asarray(mat["segments"], dtype=np.int64))
            segments = [(int(s) - 1, int(e)) for s, e in rows]
            _check_partition(segments, n_frames, path)
        elif segment_seconds is not None:
            segments = _block_segments(n_frames, round(segment_seconds * fps))
        video_id = path.stem
        write_annotation_file(
            out / f"{video_id}.json", video_id, fps, n_frames, users, segments=segments,
        )
        stats.append({"video_id": video_id, "users": len(users), "n_frames": n_frames})
    return stats


def convert_tvsum(
    anno_path, out_dir, fps: float = 30.0,
    info_path=None, segment_seconds: float | None = 2.0,
) -> list[dict]:
    """Convert a per-frame importance TSV with repeated rows per video.

    Each row is video_id, category, comma-separated scores; the 1..5
    scale is enforced.  Frame rates come from an optional info TSV of
    video_id and fps columns, falling back to the fps argument.
    Segments default to the two-second cadence the scores were
    collected on.

    Returns one stats dict per converted video.
    """
    anno = Path(anno_path)
    rates = {}
    if info_path is not None:
        for line in Path(info_path).read_text(encoding="utf-8").splitlines():
            cols = line.rstrip("\n").split("\t")
            if len(cols) >= 2 and cols[0] and not cols[0].startswith("#"):
                try:
                    rates[cols[0]] = float(cols[1])
                except ValueError:
                    continue
    by_video: dict[str, list[list[float]]] = {}
    for ln, line in enumerate(anno.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        cols = line.split("\t")
        if len(cols) < 3:
            raise LayoutError(f"{anno}:{ln}: expected 3 tab-separated columns")
        try:
            scores = [float(v) for v in cols[2].split(",") if v != ""]
        except ValueError as exc:
            raise LayoutError(f"{anno}:{ln}: scores column is not numeric: {exc}") from exc
        if not scores:
            raise LayoutError(f"{anno}:{ln}: empty scores column")
        if min(scores) < 1.0 or max(scores) > 5.0:
            raise LayoutError(
                f"{anno}:{ln}: scores outside the 1..5 scale "
                f"(min {min(scores)}, max {max(scores)})"
            )
        by_video.setdefault(cols[0], []).append(scores)
    if not by_video:
        raise LayoutError(f"{anno}: no annotation rows found")
    out = Path(out_dir)
    stats = []
    for video_id, rows in by_video.items():
        n_frames = len(rows[0])
        for i, row in enumerate(rows):
            if len(row) != n_frames:
                raise LayoutError(
                    f"{anno}: video {video_id} row {i} has {len(row)} scores, "
                    f"first row has {n_frames}"
                )
        video_fps = rates.get(video_id, fps)
        users = [{"frame_scores": row, "scale": [1.0, 5.0]} for row in rows]
        segments = None
        if segment_seconds is not None:
            segments = _block_segments(n_frames, round(segment_seconds * video_fps))
        write_annotation_file(
            out / f"{video_id}.json", video_id, video_fps, n_frames, users,
            segments=segments,
        )
        stats.append({"video_id": video_id, "users": len(users), "n_frames": n_frames})
    return stats


def convert_qfvs(src_dir, out_dir, shot_seconds: float = 5.0) -> list[dict]:
    """Convert per-video MATLAB files of query-conditioned shot selections.

    user_summary rows select fixed-length shots for one query each; the
    sidecar <video>.queries.json lists the query texts in row order,
    either as strings or as {"text", "class"} objects.  The per-video
    budget is the oracle_budget field when present, otherwise the
    largest selected-frame total across queries.

    Returns one stats dict per converted video.
    """
    src = Path(src_dir)
    mats = sorted(src.glob("*.mat"))
    if not mats:
        raise LayoutError(f"{src}: no .mat files found")
    out = Path(out_dir)
    stats = []
    for path in mats:
        mat = _load_mat(path)
        n_frames = int(_mat_field(mat, path, "nFrames", "n_frames"))
        fps = float(_mat_field(mat, path, "FPS", "fps"))
        picks = np.atleast_2d(np.asarray(_mat_field(mat, path, "user_summary", "oracle_summary")))
        shot_len = round(shot_seconds * fps)
        if shot_len < 1:
            raise LayoutError(f"{path}: shot length rounds to {shot_len} frames")
        n_shots = -(-n_frames // shot_len)
        if picks.shape[1] != n_shots:
            raise LayoutError(
                f"{path}: user_summary has {picks.shape[1]} shot columns but "
                f"{n_frames} frames at {fps} fps gives {n_shots} shots of "
                f"{shot_seconds}s"
            )
        sidecar = path.parent / (path.stem + ".queries.json")
        if not sidecar.exists():
            raise LayoutError(f"{path}: query sidecar {sidecar.name} is missing")
        raw = json.loads(sidecar.read_text(encoding="utf-8"))
        queries = [
            {"text": q, "class": ""} if isinstance(q, str)
            else {"text": q["text"], "class": q.get("class", "")}
            for q in raw
        ]
        if len(queries) != picks.shape[0]:
            raise LayoutError(
                f"{path}: {picks.shape[0]} selection rows but {len(queries)} "
                f"queries in {sidecar.name}"
            )
        users = []
        budget = 0
        for row in picks:
            # run ends are exclusive shot indices, so e * shot_len is the
            # first frame past the run.
            shots = [
                (s * shot_len, min(e * shot_len, n_frames))
                for s, e in _mask_runs(row)
            ]
            users.append({"keyshots": shots})
            budget = max(budget, sum(b - a for a, b in shots))
        if "oracle_budget" in mat:
            budget = int(mat["oracle_budget"])
        if budget < 1:
            raise LayoutError(
                f"{path}: no shots selected by any query and no oracle_budget field"
            )
        video_id = path.stem
        write_annotation_file(
            out / f"{video_id}.json", video_id, fps, n_frames, users,
            oracle_budget_frames=budget, queries=queries,
        )
        stats.append({
            "video_id": video_id, "users": len(users), "n_frames": n_frames,
            "budget": budget,
        })
    return stats


def convert_vidsum_reason(manifest_path, out_dir) -> list[dict]:
    """Convert a JSON manifest of query/keyshot pairs.

    The manifest holds {"videos": [{video_id, fps, n_frames, pairs:
    [{query, class, keyshots}]}]}; each pair becomes one query plus one
    keyshot annotator in matching order.

    Returns one stats dict per converted video.
    """
    path = Path(manifest_path)
    doc = json.loads(path.read_text(encoding="utf-8"))
    videos = doc.get("videos")
    if not isinstance(videos, list) or not videos:
        raise LayoutError(f"{path}: manifest has no 'videos' list")
    out = Path(out_dir)
    stats = []
    for entry in videos:
        for key in ("video_id", "fps", "n_frames", "pairs"):
            if key not in entry:
                raise LayoutError(f"{path}: video entry is missing {key!r}")
        if not entry["pairs"]:
            raise LayoutError(f"{path}: video {entry['video_id']} has no pairs")
        queries = []
        users = []
        for pair in entry["pairs"]:
            if "query" not in pair or "keyshots" not in pair:
                raise LayoutError(
                    f"{path}: video {entry['video_id']} pair needs query and keyshots"
                )
            queries.append({"text": pair["query"], "class": pair.get("class", "")})
            users.append({"keyshots": [(int(s), int(e)) for s, e in pair["keyshots"]]})
        video_id = entry["video_id"]
        write_annotation_file(
            out / f"{video_id}.json", video_id, float(entry["fps"]),
            int(entry["n_frames"]), users, queries=queries,
        )
        stats.append({
            "video_id": video_id, "users": len(users),
            "n_frames": int(entry["n_frames"]), "pairs": len(users),
        })
    return stats


CONVERTERS = {
    "summe": convert_summe,
    "tvsum": convert_tvsum,
    "qfvs": convert_qfvs,
    "vidsum_reason": convert_vidsum_reason,
}
