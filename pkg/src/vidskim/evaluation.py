"""Keyshot F1 evaluation, ground-truth conversion, splits, random baselines,
and precision-over-random heatmaps.

Benchmark flavors differ along two axes handled here: how user references are
stored (keyshot intervals vs per-frame score vectors needing conversion) and
how per-user F1s aggregate (best user vs mean over users).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .data_io import (
    FORMAT_VERSION,
    DatasetAnnotations,
    load_json,
    save_json,
    write_atomic,
)
from .errors import InvariantError, SchemaError
from .summarization import (
    SummaryMask,
    summarize_keyshot,
    summarize_qfvs,
    summarize_uniform,
    qfvs_shot_bounds,
    uniform_fragments,
)

EVAL_PROTOCOLS = ("summe", "tvsum", "vidsum_reason", "qfvs")


class VideoEval(NamedTuple):
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class EvalReport:
    protocol: str
    seed: int | None
    trials: int
    per_video: dict[str, VideoEval]
    split_means: tuple[float, ...]
    grand: VideoEval


def prf1(a: SummaryMask, b: SummaryMask) -> VideoEval:
    """Frame-overlap precision/recall/F1 between two masks of equal length."""
    if a.n_frames != b.n_frames:
        raise InvariantError(f"mask lengths differ: {a.n_frames} vs {b.n_frames}")
    inter = int(np.count_nonzero(a.selected & b.selected))
    na = a.n_selected
    nb = b.n_selected
    p = inter / na if na else 0.0
    r = inter / nb if nb else 0.0
    f1 = 2.0 * p * r / (p + r) if p + r > 0 else 0.0
    return VideoEval(p, r, f1)


def _mask_prf1(a_sel: np.ndarray, b_sel: np.ndarray) -> VideoEval:
    inter = int(np.count_nonzero(a_sel & b_sel))
    na = int(np.count_nonzero(a_sel))
    nb = int(np.count_nonzero(b_sel))
    p = inter / na if na else 0.0
    r = inter / nb if nb else 0.0
    f1 = 2.0 * p * r / (p + r) if p + r > 0 else 0.0
    return VideoEval(p, r, f1)


def gt_to_keyshots(user_frame_scores, segments, budget_fraction: float = 0.15) -> SummaryMask:
    """Convert a per-frame score annotation into a budgeted keyshot mask."""
    return summarize_keyshot(user_frame_scores, segments, budget_fraction)


def user_reference_masks(ann: DatasetAnnotations, protocol: str,
                         budget_fraction: float = 0.15) -> list[np.ndarray]:
    """One boolean reference mask per user, converting frame scores when needed."""
    if protocol not in EVAL_PROTOCOLS:
        raise InvariantError(f"unknown protocol {protocol!r}, expected one of {EVAL_PROTOCOLS}")
    masks = []
    for i, user in enumerate(ann.users):
        if user.keyshots is not None:
            masks.append(user.mask(ann.n_frames))
        else:
            if ann.segments is None:
                raise InvariantError(
                    f"user {i} has frame scores but the video declares no segments to convert over"
                )
            masks.append(gt_to_keyshots(user.frame_scores, ann.segments, budget_fraction).selected)
    return masks


def eval_video(summary: SummaryMask, ann: DatasetAnnotations, protocol: str,
               reference_masks: list[np.ndarray] | None = None) -> VideoEval:
    """Score one summary against the video's references under a benchmark flavor.

    summe takes the best user (max F1); tvsum and vidsum_reason average over
    users; qfvs compares against the single oracle reference.
    """
    if summary.n_frames != ann.n_frames:
        raise InvariantError(
            f"summary covers {summary.n_frames} frames, annotations say {ann.n_frames}"
        )
    if reference_masks is None:
        reference_masks = user_reference_masks(ann, protocol)
    per_user = [_mask_prf1(summary.selected, ref) for ref in reference_masks]
    if protocol == "summe":
        return max(per_user, key=lambda ev: ev.f1)
    if protocol in ("tvsum", "vidsum_reason"):
        return VideoEval(*(float(np.mean([ev[k] for ev in per_user])) for k in range(3)))
    if protocol == "qfvs":
        if len(per_user) != 1:
            raise InvariantError(f"qfvs expects exactly one oracle reference, got {len(per_user)}")
        return per_user[0]
    raise InvariantError(f"unknown protocol {protocol!r}")


def eval_splits(per_video_f1: dict[str, float], splits: list[list[str]]) -> tuple[list[float], float]:
    """Mean F1 within each split, then the mean of those split means."""
    if not splits:
        raise InvariantError("need at least one split")
    split_means = []
    for i, ids in enumerate(splits):
        if not ids:
            raise InvariantError(f"split {i} is empty")
        for vid in ids:
            if vid not in per_video_f1:
                raise InvariantError(f"split {i} names unknown video id {vid!r}")
        split_means.append(float(np.mean([per_video_f1[v] for v in ids])))
    return split_means, float(np.mean(split_means))


def make_splits(video_ids, n_splits: int = 5, seed: int = 0) -> list[list[str]]:
    """Disjoint random splits covering every id once, stable under the seed."""
    ids = sorted(video_ids)
    if n_splits < 1 or n_splits > len(ids):
        raise InvariantError(f"cannot make {n_splits} splits from {len(ids)} videos")
    rng = np.random.default_rng(seed)
    order = [ids[i] for i in rng.permutation(len(ids))]
    return [sorted(order[i::n_splits]) for i in range(n_splits)]


def save_splits(splits: list[list[str]], path: str | Path) -> None:
    save_json(path, {"version": FORMAT_VERSION, "splits": splits})


def load_splits(path: str | Path) -> list[list[str]]:
    obj = load_json(path)
    if obj.get("version") != FORMAT_VERSION or not isinstance(obj.get("splits"), list):
        raise SchemaError(f"{path}: malformed splits file")
    return [[str(v) for v in split] for split in obj["splits"]]


def _protocol_units(ann: DatasetAnnotations, protocol: str,
                    fragment_fraction: float = 0.03) -> list[tuple[int, int]]:
    if protocol in ("summe", "tvsum"):
        if ann.segments is None:
            raise InvariantError(f"{ann.video_id}: keyshot protocol requires segments")
        return list(ann.segments)
    if protocol == "vidsum_reason":
        return uniform_fragments(ann.n_frames, fragment_fraction)
    if protocol == "qfvs":
        return qfvs_shot_bounds(ann.n_frames, ann.fps)
    raise InvariantError(f"unknown protocol {protocol!r}")


def _summarize_for(ann: DatasetAnnotations, protocol: str,
                   frame_scores: np.ndarray) -> SummaryMask:
    if protocol in ("summe", "tvsum"):
        return summarize_keyshot(frame_scores, ann.segments)
    if protocol == "vidsum_reason":
        return summarize_uniform(frame_scores)
    if protocol == "qfvs":
        if ann.oracle_budget_frames is None:
            raise InvariantError(f"{ann.video_id}: qfvs requires oracle_budget_frames")
        return summarize_qfvs(frame_scores, ann.fps, ann.oracle_budget_frames)
    raise InvariantError(f"unknown protocol {protocol!r}")


def _unit_scores_to_frames(units, unit_scores: np.ndarray, n_frames: int) -> np.ndarray:
    out = np.empty(n_frames, dtype=np.float64)
    for (s, e), v in zip(units, unit_scores):
        out[s:e] = v
    return out


def _trial_rng(seed: int, trial: int, video_index: int) -> np.random.Generator:
    return np.random.default_rng((seed, trial, video_index))


def random_baseline(dataset: dict[str, DatasetAnnotations], protocol: str,
                    trials: int = 100, seed: int = 0,
                    splits: list[list[str]] | None = None,
                    per_frame: bool = False) -> EvalReport:
    """Mean score of uniformly random summaries over seeded trials.

    Scores are drawn per protocol unit (segment/shot/fragment) by default, or
    per frame with per_frame=True. Each (trial, video) pair gets its own
    generator derived from the global seed, so trial order never matters.
    """
    if trials < 1:
        raise InvariantError("need at least one trial")
    vids = sorted(dataset)
    refs = {v: user_reference_masks(dataset[v], protocol) for v in vids}
    units = {v: _protocol_units(dataset[v], protocol) for v in vids}
    sums = {v: np.zeros(3) for v in vids}
    for trial in range(trials):
        for j, vid in enumerate(vids):
            ann = dataset[vid]
            rng = _trial_rng(seed, trial, j)
            if per_frame:
                scores = rng.uniform(size=ann.n_frames)
            else:
                scores = _unit_scores_to_frames(
                    units[vid], rng.uniform(size=len(units[vid])), ann.n_frames)
            summary = _summarize_for(ann, protocol, scores)
            sums[vid] += eval_video(summary, ann, protocol, reference_masks=refs[vid])
    per_video = {v: VideoEval(*(sums[v] / trials)) for v in vids}
    return finish_report(per_video, protocol, seed=seed, trials=trials, splits=splits)


def finish_report(per_video: dict[str, VideoEval], protocol: str, seed: int | None,
                  trials: int, splits: list[list[str]] | None = None) -> EvalReport:
    """Aggregate per-video results into split means and a grand mean."""
    if splits is None:
        splits = [sorted(per_video)]
    split_means, grand_f1 = eval_splits({v: ev.f1 for v, ev in per_video.items()}, splits)
    grand = VideoEval(
        float(np.mean([ev.precision for ev in per_video.values()])),
        float(np.mean([ev.recall for ev in per_video.values()])),
        grand_f1,
    )
    return EvalReport(protocol=protocol, seed=seed, trials=trials,
                      per_video=per_video, split_means=tuple(split_means), grand=grand)


def save_eval_report(report: EvalReport, path: str | Path) -> None:
    save_json(path, {
        "version": FORMAT_VERSION,
        "protocol": report.protocol,
        "seed": report.seed,
        "trials": report.trials,
        "per_video": {
            v: {"precision": ev.precision, "recall": ev.recall, "f1": ev.f1}
            for v, ev in report.per_video.items()
        },
        "split_means": list(report.split_means),
        "grand": {"precision": report.grand.precision, "recall": report.grand.recall,
                  "f1": report.grand.f1},
    })


def load_eval_report(path: str | Path) -> EvalReport:
    obj = load_json(path)
    if obj.get("version") != FORMAT_VERSION:
        raise SchemaError(f"{path}: field 'version' must be {FORMAT_VERSION}")
    try:
        per_video = {
            v: VideoEval(d["precision"], d["recall"], d["f1"])
            for v, d in obj["per_video"].items()
        }
        grand = obj["grand"]
        return EvalReport(
            protocol=obj["protocol"], seed=obj.get("seed"), trials=int(obj["trials"]),
            per_video=per_video, split_means=tuple(obj["split_means"]),
            grand=VideoEval(grand["precision"], grand["recall"], grand["f1"]),
        )
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"{path}: malformed report: {exc}") from exc


def por_heatmap(dataset: dict[str, DatasetAnnotations],
                fragment_fractions, budget_fractions,
                model_scores: dict[str, np.ndarray] | None = None,
                trials: int = 100, seed: int = 0) -> np.ndarray:
    """Precision of a scorer relative to mean random precision, per grid cell.

    With model_scores=None the "model" is itself a random scorer averaged over
    a reserved block of trial indices, so cells hover around 1.
    """
    fragment_fractions = list(fragment_fractions)
    budget_fractions = list(budget_fractions)
    if not fragment_fractions or not budget_fractions:
        raise InvariantError("need non-empty fraction grids")
    vids = sorted(dataset)
    refs = {v: user_reference_masks(dataset[v], "vidsum_reason") for v in vids}
    out = np.zeros((len(fragment_fractions), len(budget_fractions)))
    for a, ff in enumerate(fragment_fractions):
        for b, bf in enumerate(budget_fractions):
            model_ps = []
            random_ps = []
            for j, vid in enumerate(vids):
                ann = dataset[vid]
                frags = uniform_fragments(ann.n_frames, ff)
                if model_scores is not None:
                    scores = np.asarray(model_scores[vid], dtype=np.float64)
                    summary = summarize_uniform(scores, ff, bf)
                    model_ps.append(
                        eval_video(summary, ann, "vidsum_reason",
                                   reference_masks=refs[vid]).precision)
                else:
                    for trial in range(trials, 2 * trials):
                        rng = _trial_rng(seed, trial, j)
                        scores = _unit_scores_to_frames(
                            frags, rng.uniform(size=len(frags)), ann.n_frames)
                        summary = summarize_uniform(scores, ff, bf)
                        model_ps.append(
                            eval_video(summary, ann, "vidsum_reason",
                                       reference_masks=refs[vid]).precision)
                for trial in range(trials):
                    rng = _trial_rng(seed, trial, j)
                    rscores = _unit_scores_to_frames(
                        frags, rng.uniform(size=len(frags)), ann.n_frames)
                    rsummary = summarize_uniform(rscores, ff, bf)
                    random_ps.append(
                        eval_video(rsummary, ann, "vidsum_reason",
                                   reference_masks=refs[vid]).precision)
            denom = float(np.mean(random_ps))
            out[a, b] = float(np.mean(model_ps)) / denom if denom > 0 else np.nan
    return out


def write_heatmap_csv(path: str | Path, matrix: np.ndarray, row_labels, col_labels,
                      corner: str = "fragment\\budget") -> None:
    rows = [[corner] + [str(c) for c in col_labels]]
    for label, row in zip(row_labels, np.asarray(matrix)):
        rows.append([str(label)] + [f"{v:.6f}" for v in row])
    _write_csv(path, rows)


def _write_csv(path: str | Path, rows) -> None:
    import io

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerows(rows)
    write_atomic(path, buf.getvalue().encode("utf-8"))
