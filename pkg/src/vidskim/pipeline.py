"""Stage orchestration: per-video artifact chaining plus dataset-level reports."""

import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .backends import make_backend
from .config import PipelineConfig
from .data_io import (ScoreTrack, load_dataset, load_embeddings,
                      load_frame_store, load_scene_set, load_score_track,
                      save_scene_set, save_score_track)
from .description import describe_all, load_description_set, save_description_set
from .errors import StageError, VidskimError
from .evaluation import (EvalReport, eval_video, finish_report, load_splits,
                         save_eval_report)
from .judging import (load_scene_scores, save_scene_scores, score_scenes,
                      score_scenes_multi_query)
from .scoring import (NormSpec, WeightParams, frame_weights, fuse_frame_scores,
                      normalize, select_params, smooth_scene_scores)
from .segmentation import ThresholdGrid, segment_video
from .summarization import (load_summary_mask, save_summary_mask,
                            summarize_keyshot, summarize_qfvs,
                            summarize_uniform)

SCENES_FILE = "scenes.json"
DESCRIPTIONS_FILE = "descriptions.json"
SCENE_SCORES_FILE = "scene_scores.json"
SUMMARY_FILE = "summary.json"
EVAL_REPORT_FILE = "eval_report.json"


@dataclass(frozen=True)
class VideoInputs:
    video_id: str
    frames_path: Path
    embeddings_path: Path | None


def discover_videos(cfg: PipelineConfig) -> list[VideoInputs]:
    """Map the configured frame store path to one entry per video, sorted by id."""
    if cfg.paths.frames is None:
        raise StageError("config has no frames path; nothing to process")
    frames = Path(cfg.paths.frames)
    if frames.is_file():
        stores = [frames]
    elif frames.is_dir():
        stores = sorted(frames.glob("*.psfr"))
        if not stores:
            raise StageError(f"no .psfr frame stores found in {frames}")
    else:
        raise StageError(f"frames path {frames} does not exist")
    emb_root = Path(cfg.paths.embeddings) if cfg.paths.embeddings else None
    out = []
    for store in stores:
        video_id = store.stem
        emb = None
        if emb_root is not None:
            if emb_root.is_file():
                emb = emb_root if len(stores) == 1 else None
            else:
                candidate = emb_root / f"{video_id}.psem"
                emb = candidate if candidate.is_file() else None
        out.append(VideoInputs(video_id=video_id, frames_path=store,
                               embeddings_path=emb))
    return sorted(out, key=lambda v: v.video_id)


def work_dir(cfg: PipelineConfig, video_id: str) -> Path:
    return Path(cfg.paths.work) / video_id


def _need(path: Path, hint: str) -> Path:
    if not Path(path).exists():
        raise StageError(f"{path} is missing: run {hint} first")
    return Path(path)


def _video_seed(cfg: PipelineConfig, video_id: str) -> tuple:
    # stable across runs and independent of which other videos are present
    tag = int(hashlib.sha256(video_id.encode("utf-8")).hexdigest()[:8], 16)
    return (cfg.seed, tag)


def _grid(cfg: PipelineConfig) -> ThresholdGrid:
    return ThresholdGrid(cfg.threshold_min, cfg.threshold_max, cfg.threshold_delta)


def caption_backend(cfg: PipelineConfig):
    cache = Path(cfg.paths.cache) / "captions" if cfg.paths.cache else None
    return make_backend(cfg.caption_backend, fixtures=cfg.paths.fixtures,
                        strict_fixtures=cfg.strict_fixtures, cache_dir=cache,
                        record=cfg.record)


def judge_backend(cfg: PipelineConfig):
    cache = Path(cfg.paths.cache) / "judge" if cfg.paths.cache else None
    return make_backend(cfg.judge_backend, fixtures=cfg.paths.fixtures,
                        strict_fixtures=cfg.strict_fixtures, cache_dir=cache,
                        record=cfg.record)


def stage_detect(cfg: PipelineConfig, vid: VideoInputs) -> Path:
    frames = load_frame_store(vid.frames_path)
    emb = load_embeddings(vid.embeddings_path) if vid.embeddings_path else None
    scenes, result = segment_video(frames, emb, grid=_grid(cfg),
                                   min_len_s=cfg.min_scene_len_s,
                                   min_frames=cfg.refine_min_frames)
    out = work_dir(cfg, vid.video_id) / SCENES_FILE
    save_scene_set(scenes, out, video_id=vid.video_id, tau_star=result.tau_star)
    return out


def stage_describe(cfg: PipelineConfig, vid: VideoInputs, backend=None) -> Path:
    work = work_dir(cfg, vid.video_id)
    scenes = load_scene_set(_need(work / SCENES_FILE, "detect"))
    frames = load_frame_store(vid.frames_path)
    if frames.pixels is None:
        raise StageError(f"{vid.frames_path} holds no pixel data; "
                         "captioning needs frames, not just differences")
    if backend is None:
        backend = caption_backend(cfg)
    descs = describe_all(scenes, frames, backend, batch_size=cfg.batch_size,
                         prompt=cfg.caption_prompt)
    out = work / DESCRIPTIONS_FILE
    save_description_set(out, descs)
    return out


def stage_judge(cfg: PipelineConfig, vid: VideoInputs, backend=None) -> Path:
    work = work_dir(cfg, vid.video_id)
    descs = load_description_set(_need(work / DESCRIPTIONS_FILE, "describe"))
    if backend is None:
        backend = judge_backend(cfg)
    if len(cfg.queries) > 1:
        scores = score_scenes_multi_query(descs, cfg.queries, backend,
                                          temperature=cfg.judge_temperature)
    else:
        query = cfg.queries[0] if cfg.queries else None
        scores = score_scenes(descs, query, backend,
                              temperature=cfg.judge_temperature)
    out = work / SCENE_SCORES_FILE
    save_scene_scores(out, scores)
    return out


def _score_stage_path(work: Path, stage: str) -> Path:
    return work / f"scores_{stage}.json"


def compute_frame_scores(scenes, raw_column, emb, fps: float, duration_s: float,
                         norm: NormSpec, sigma: float | None,
                         w_seconds: float | None, short_video_s: float,
                         cluster_spec, seed) -> dict[str, np.ndarray]:
    """Scene scores to final frame scores; the shared core of score and ablate."""
    scene_norm = normalize(np.asarray(raw_column, dtype=np.float64), norm)
    smoothed = smooth_scene_scores(scene_norm, scenes)
    params = select_params(duration_s, short_video_s)
    if sigma is not None:
        params = WeightParams(sigma=sigma, w_seconds=params.w_seconds,
                              short_threshold_s=params.short_threshold_s)
    if w_seconds is not None:
        params = WeightParams(sigma=params.sigma, w_seconds=w_seconds,
                              short_threshold_s=params.short_threshold_s)
    weights = frame_weights(scenes, emb, params, cluster_spec, fps=fps, seed=seed)
    final = fuse_frame_scores(smoothed, weights, scenes, norm)
    return {"scene_norm": scene_norm, "frame_smoothed": smoothed,
            "frame_weight": weights, "frame_final": final}


def stage_score(cfg: PipelineConfig, vid: VideoInputs) -> Path:
    work = work_dir(cfg, vid.video_id)
    scenes = load_scene_set(_need(work / SCENES_FILE, "detect"))
    scores = load_scene_scores(_need(work / SCENE_SCORES_FILE, "judge"))
    if vid.embeddings_path is None:
        raise StageError(f"{vid.video_id}: no embedding file found; "
                         "scoring needs per-frame embeddings")
    emb = load_embeddings(vid.embeddings_path)
    frames = load_frame_store(vid.frames_path)
    if scores.n_scenes != len(scenes):
        raise StageError(f"{vid.video_id}: {scores.n_scenes} scored scenes but "
                         f"{len(scenes)} detected; rerun judge")
    if not cfg.query_index < scores.matrix.shape[1]:
        raise StageError(f"query_index {cfg.query_index} out of range for "
                         f"{scores.matrix.shape[1]} score columns")
    raw = scores.matrix[:, cfg.query_index]
    tracks = compute_frame_scores(
        scenes, raw, emb, fps=frames.fps, duration_s=frames.duration_s,
        norm=cfg.norm, sigma=cfg.sigma, w_seconds=cfg.w_seconds,
        short_video_s=cfg.short_video_s, cluster_spec=cfg.cluster,
        seed=_video_seed(cfg, vid.video_id))
    save_score_track(ScoreTrack(stage="scene_raw", values=raw),
                     _score_stage_path(work, "scene_raw"), video_id=vid.video_id)
    for stage, values in tracks.items():
        save_score_track(ScoreTrack(stage=stage, values=values),
                         _score_stage_path(work, stage), video_id=vid.video_id)
    return _score_stage_path(work, "frame_final")


def _summarize(cfg: PipelineConfig, values: np.ndarray, scenes, fps: float,
               oracle_budget_frames: int | None):
    if cfg.summary_protocol == "keyshot15":
        return summarize_keyshot(values, scenes.boundaries, cfg.budget_fraction)
    if cfg.summary_protocol == "qfvs_shots":
        if oracle_budget_frames is None:
            raise StageError("qfvs_shots needs an annotation with an oracle "
                             "budget; set the annotations path")
        return summarize_qfvs(values, fps, oracle_budget_frames,
                              cfg.shot_seconds)
    return summarize_uniform(values, cfg.fragment_fraction, cfg.fragment_budget)


def stage_summarize(cfg: PipelineConfig, vid: VideoInputs) -> Path:
    work = work_dir(cfg, vid.video_id)
    scenes = load_scene_set(_need(work / SCENES_FILE, "detect"))
    track = load_score_track(_need(_score_stage_path(work, "frame_final"), "score"))
    frames = load_frame_store(vid.frames_path)
    oracle = None
    if cfg.summary_protocol == "qfvs_shots":
        ann = _annotation_for(cfg, vid.video_id)
        oracle = ann.oracle_budget_frames
    mask = _summarize(cfg, track.values, scenes, frames.fps, oracle)
    out = work / SUMMARY_FILE
    save_summary_mask(mask, out, video_id=vid.video_id)
    return out


def _annotation_for(cfg: PipelineConfig, video_id: str):
    if cfg.paths.annotations is None:
        raise StageError("config has no annotations path")
    dataset = load_dataset(cfg.paths.annotations)
    if video_id not in dataset:
        raise StageError(f"no annotations found for video {video_id!r} "
                         f"in {cfg.paths.annotations}")
    return dataset[video_id]


VIDEO_STAGES = ("detect", "describe", "judge", "score", "summarize")

_STAGE_FN = {
    "detect": stage_detect,
    "describe": stage_describe,
    "judge": stage_judge,
    "score": stage_score,
    "summarize": stage_summarize,
}


def run_stage(cfg: PipelineConfig, stage: str, videos=None, jobs: int = 1) -> list[Path]:
    """Run one per-video stage over the workspace, optionally in parallel."""
    if stage not in _STAGE_FN:
        raise StageError(f"unknown stage {stage!r}")
    if videos is None:
        videos = discover_videos(cfg)
    fn = _STAGE_FN[stage]
    shared = {}
    if stage == "describe":
        shared["backend"] = caption_backend(cfg)
    elif stage == "judge":
        shared["backend"] = judge_backend(cfg)

    def one(vid):
        try:
            return fn(cfg, vid, **shared)
        except VidskimError as exc:
            raise StageError(f"{vid.video_id}: {stage}: {exc}") from exc

    if jobs <= 1 or len(videos) <= 1:
        return [one(v) for v in videos]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(one, videos))


def run_video(cfg: PipelineConfig, vid: VideoInputs, caption=None, judge=None) -> Path:
    """All per-video stages in order; returns the summary artifact path."""
    stage_detect(cfg, vid)
    stage_describe(cfg, vid, backend=caption)
    stage_judge(cfg, vid, backend=judge)
    stage_score(cfg, vid)
    return stage_summarize(cfg, vid)


def stage_evaluate(cfg: PipelineConfig, videos=None) -> EvalReport:
    """Score every summarized video against its annotations."""
    if videos is None:
        videos = discover_videos(cfg)
    if cfg.paths.annotations is None:
        raise StageError("config has no annotations path; evaluation needs "
                         "reference summaries")
    dataset = load_dataset(cfg.paths.annotations)
    per_video = {}
    for vid in videos:
        summary = load_summary_mask(
            _need(work_dir(cfg, vid.video_id) / SUMMARY_FILE, "summarize"))
        if vid.video_id not in dataset:
            raise StageError(f"no annotations for video {vid.video_id!r} "
                             f"in {cfg.paths.annotations}")
        per_video[vid.video_id] = eval_video(summary, dataset[vid.video_id],
                                             cfg.eval_protocol)
    splits = load_splits(cfg.paths.splits) if cfg.paths.splits else None
    report = finish_report(per_video, protocol=cfg.eval_protocol, seed=cfg.seed,
                           trials=1, splits=splits)
    save_eval_report(report, Path(cfg.paths.work) / EVAL_REPORT_FILE)
    return report


def run_all(cfg: PipelineConfig, jobs: int = 1, videos=None) -> EvalReport | None:
    """Chain every stage; evaluation runs when annotations are configured."""
    if videos is None:
        videos = discover_videos(cfg)
    caption = caption_backend(cfg)
    judge = judge_backend(cfg)

    def one(vid):
        try:
            return run_video(cfg, vid, caption=caption, judge=judge)
        except VidskimError as exc:
            raise StageError(f"{vid.video_id}: {exc}") from exc

    if jobs <= 1 or len(videos) <= 1:
        for vid in videos:
            one(vid)
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(one, videos))
    if cfg.paths.annotations is None:
        return None
    return stage_evaluate(cfg, videos)


def ablation_grid(cfg: PipelineConfig, sigmas, ws, norms,
                  embedding_dirs=None, videos=None) -> list[dict]:
    """F1 per (sigma, W, norm, encoder) cell from cached scene scores.

    Reuses the judged scene scores on disk, so no backend is touched; each
    cell reruns scoring, summarization, and evaluation.
    """
    if videos is None:
        videos = discover_videos(cfg)
    if cfg.paths.annotations is None:
        raise StageError("ablation needs an annotations path for evaluation")
    dataset = load_dataset(cfg.paths.annotations)
    sigmas = [None if s is None else float(s) for s in sigmas] or [cfg.sigma]
    ws = [None if w is None else float(w) for w in ws] or [cfg.w_seconds]
    norms = list(norms) or [cfg.norm.kind]

    per_video = []
    for vid in videos:
        work = work_dir(cfg, vid.video_id)
        scenes = load_scene_set(_need(work / SCENES_FILE, "detect"))
        scores = load_scene_scores(_need(work / SCENE_SCORES_FILE, "judge"))
        frames = load_frame_store(vid.frames_path)
        if vid.video_id not in dataset:
            raise StageError(f"no annotations for video {vid.video_id!r}")
        per_video.append((vid, scenes, scores.matrix[:, cfg.query_index],
                          frames.fps, frames.duration_s))

    def emb_for(vid, source):
        if source is None:
            if vid.embeddings_path is None:
                raise StageError(f"{vid.video_id}: no embedding file found")
            return load_embeddings(vid.embeddings_path)
        source = Path(source)
        path = source if source.is_file() else source / f"{vid.video_id}.psem"
        if not path.is_file():
            raise StageError(f"{vid.video_id}: no embedding file at {path}")
        return load_embeddings(path)

    rows = []
    for source in (embedding_dirs or [None]):
        embs = {v.video_id: emb_for(v, source) for v, *_ in per_video}
        for sigma in sigmas:
            for w_seconds in ws:
                for norm_kind in norms:
                    norm = NormSpec(kind=norm_kind, beta=cfg.norm.beta)
                    evals = {}
                    tags = set()
                    for vid, scenes, raw, fps, duration_s in per_video:
                        emb = embs[vid.video_id]
                        tags.add(emb.encoder_tag)
                        tracks = compute_frame_scores(
                            scenes, raw, emb, fps=fps, duration_s=duration_s,
                            norm=norm, sigma=sigma, w_seconds=w_seconds,
                            short_video_s=cfg.short_video_s,
                            cluster_spec=cfg.cluster,
                            seed=_video_seed(cfg, vid.video_id))
                        ann = dataset[vid.video_id]
                        mask = _summarize(cfg, tracks["frame_final"], scenes,
                                          fps, ann.oracle_budget_frames)
                        evals[vid.video_id] = eval_video(mask, ann,
                                                         cfg.eval_protocol)
                    splits = (load_splits(cfg.paths.splits)
                              if cfg.paths.splits else None)
                    report = finish_report(evals, protocol=cfg.eval_protocol,
                                           seed=cfg.seed, trials=1,
                                           splits=splits)
                    rows.append({
                        "sigma": sigma,
                        "w_seconds": w_seconds,
                        "norm": norm_kind,
                        "encoder_tag": "+".join(sorted(tags)),
                        "precision": report.grand.precision,
                        "recall": report.grand.recall,
                        "f1": report.grand.f1,
                    })
    return rows


def write_ablation_csv(path: str | Path, rows: list[dict]) -> None:
    from .evaluation import _write_csv

    header = ["sigma", "w_seconds", "norm", "encoder_tag",
              "precision", "recall", "f1"]
    table = [header]
    for row in rows:
        table.append([("" if row[k] is None else
                       f"{row[k]:.6f}" if isinstance(row[k], float) else
                       str(row[k])) for k in header])
    _write_csv(path, table)
