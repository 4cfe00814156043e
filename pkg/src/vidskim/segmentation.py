"""Scene boundary detection from intensity differences, plus similarity-based refinement.

The detector cuts wherever the mean absolute inter-frame difference meets a
threshold chosen dynamically from a candidate grid: count scenes N(tau) per
candidate, find the global peak of N, and take the candidate at or after the
peak where N drops fastest. Short scenes are then merged into whichever
neighbor has the more similar mean embedding.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .data_io import EmbeddingMatrix, FrameStore, SceneSet
from .errors import InvariantError

MIN_SCENE_LEN_S = 2.0
MIN_SCENE_FRAMES = 150


@dataclass(frozen=True)
class ThresholdGrid:
    """Candidate thresholds tau_min, tau_min+delta, ... up to tau_max."""

    tau_min: float = 5.0
    tau_max: float = 95.0
    delta_tau: float = 2.0

    def __post_init__(self):
        if not self.tau_min < self.tau_max:
            raise InvariantError(f"need tau_min < tau_max, got {self.tau_min} >= {self.tau_max}")
        if self.delta_tau <= 0:
            raise InvariantError(f"delta_tau must be positive, got {self.delta_tau}")
        if len(self.candidates()) < 3:
            raise InvariantError("threshold grid must contain at least 3 candidates")

    def candidates(self) -> np.ndarray:
        n = int(np.floor((self.tau_max - self.tau_min) / self.delta_tau + 1e-9)) + 1
        return self.tau_min + self.delta_tau * np.arange(n, dtype=np.float64)


DEFAULT_GRID = ThresholdGrid()


class ThresholdResult(NamedTuple):
    tau_star: float
    n_curve: np.ndarray
    degenerate: bool


def intensity_diff_series(frames: FrameStore) -> np.ndarray:
    """Mean absolute pixel difference between consecutive frames, length count-1."""
    if frames.pixels is None:
        raise InvariantError("intensity_diff_series requires pixel data")
    if frames.count < 2:
        return np.zeros(0, dtype=np.float64)
    px = frames.pixels.astype(np.int16)
    return np.abs(px[1:] - px[:-1]).mean(axis=(1, 2), dtype=np.float64)


def ensure_diffs(frames: FrameStore) -> np.ndarray:
    """Return the stored difference series, computing it from pixels if absent."""
    if frames.diff_series is not None:
        return frames.diff_series
    return intensity_diff_series(frames)


def detect_scenes_at(diffs: np.ndarray, tau: float, fps: float,
                     min_len_s: float = MIN_SCENE_LEN_S) -> SceneSet:
    """Cut between frames t and t+1 wherever diffs[t] >= tau, then merge short scenes.

    A scene shorter than min_len_s seconds is merged into its successor; a
    trailing short scene merges backward instead.
    """
    if tau < 0:
        raise InvariantError(f"threshold must be nonnegative, got {tau}")
    diffs = np.asarray(diffs, dtype=np.float64)
    n_frames = diffs.shape[0] + 1
    if n_frames < 1:
        raise InvariantError("cannot segment an empty video")
    cut_after = np.flatnonzero(diffs >= tau)
    bounds = [0] + [int(t) + 1 for t in cut_after] + [n_frames]
    scenes = [(bounds[i], bounds[i + 1]) for i in range(len(bounds) - 1)]

    min_frames = min_len_s * fps
    merged: list[tuple[int, int]] = []
    i = 0
    while i < len(scenes):
        s, e = scenes[i]
        while (e - s) < min_frames and i + 1 < len(scenes):
            i += 1
            e = scenes[i][1]
        merged.append((s, e))
        i += 1
    if len(merged) > 1 and (merged[-1][1] - merged[-1][0]) < min_frames:
        last = merged.pop()
        merged[-1] = (merged[-1][0], last[1])
    return SceneSet(tuple(merged))


def select_from_curve(n_values: np.ndarray, candidates: np.ndarray) -> tuple[float, bool]:
    """Pick the candidate at or after the global peak of N where N drops fastest.

    Degenerate curves (constant N, or peak at the last candidate so no slope
    exists) fall back to the middle candidate with a warning flag.
    """
    n_values = np.asarray(n_values, dtype=np.float64)
    candidates = np.asarray(candidates, dtype=np.float64)
    if n_values.shape != candidates.shape:
        raise InvariantError("curve and candidate grid lengths differ")
    if n_values.shape[0] < 3:
        raise InvariantError("need at least 3 candidates")
    midpoint = float(candidates[len(candidates) // 2])
    if np.all(n_values == n_values[0]):
        return midpoint, True
    peak = int(np.argmax(n_values))
    if peak >= len(candidates) - 1:
        return midpoint, True
    # slope at tau_i is -(N(tau_{i+1}) - N(tau_i)) / delta; delta is uniform so
    # the argmax is unaffected by dividing it out, but keep it for the record.
    delta = candidates[1] - candidates[0]
    slopes = -(n_values[peak + 1:] - n_values[peak:-1]) / delta
    best = int(np.argmax(slopes))
    return float(candidates[peak + best]), False


def select_threshold(diffs: np.ndarray, grid: ThresholdGrid = DEFAULT_GRID,
                     fps: float = 1.0, min_len_s: float = MIN_SCENE_LEN_S) -> ThresholdResult:
    """Evaluate N(tau) over the grid and apply the post-peak steepest-drop rule."""
    candidates = grid.candidates()
    n_curve = np.array(
        [len(detect_scenes_at(diffs, float(tau), fps, min_len_s)) for tau in candidates],
        dtype=np.float64,
    )
    tau_star, degenerate = select_from_curve(n_curve, candidates)
    return ThresholdResult(tau_star=tau_star, n_curve=n_curve, degenerate=degenerate)


def _mean_embedding(emb: EmbeddingMatrix, scene: tuple[int, int]) -> np.ndarray:
    s, e = scene
    return emb.rows[s:e].astype(np.float64).mean(axis=0)


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return -1.0
    return float(np.dot(a, b) / (na * nb))


def refine_boundaries(scenes: SceneSet, emb: EmbeddingMatrix,
                      min_frames: int = MIN_SCENE_FRAMES) -> SceneSet:
    """Merge every scene shorter than min_frames into its more similar neighbor.

    Scans left to right and repeats until no short scene remains (or one scene
    is left). A similarity tie merges into the previous scene.
    """
    if scenes.n_frames != emb.count:
        raise InvariantError(
            f"scene set covers {scenes.n_frames} frames but embeddings have {emb.count} rows"
        )
    bounds = list(scenes.boundaries)
    while len(bounds) > 1:
        short = next((i for i, (s, e) in enumerate(bounds) if e - s < min_frames), None)
        if short is None:
            break
        mean_here = _mean_embedding(emb, bounds[short])
        sim_prev = (_cosine(mean_here, _mean_embedding(emb, bounds[short - 1]))
                    if short > 0 else None)
        sim_next = (_cosine(mean_here, _mean_embedding(emb, bounds[short + 1]))
                    if short + 1 < len(bounds) else None)
        if sim_next is None or (sim_prev is not None and sim_prev >= sim_next):
            bounds[short - 1] = (bounds[short - 1][0], bounds[short][1])
            del bounds[short]
        else:
            bounds[short + 1] = (bounds[short][0], bounds[short + 1][1])
            del bounds[short]
    return SceneSet(tuple(bounds))


def segment_video(frames: FrameStore, emb: EmbeddingMatrix | None = None,
                  grid: ThresholdGrid = DEFAULT_GRID,
                  min_len_s: float = MIN_SCENE_LEN_S,
                  min_frames: int = MIN_SCENE_FRAMES) -> tuple[SceneSet, ThresholdResult]:
    """Full detection pass: diffs, dynamic threshold, cut, then optional refinement."""
    diffs = ensure_diffs(frames)
    result = select_threshold(diffs, grid, frames.fps, min_len_s)
    scenes = detect_scenes_at(diffs, result.tau_star, frames.fps, min_len_s)
    if emb is not None:
        scenes = refine_boundaries(scenes, emb, min_frames)
    return scenes, result
