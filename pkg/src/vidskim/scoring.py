"""Scene scores to per-frame importance: normalization, cosine smoothing,
cluster-based frame weighting, duration-adaptive parameters, and fusion.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .cluster import kmeans
from .data_io import EmbeddingMatrix, SceneSet
from .errors import InvariantError

SHORT_VIDEO_S = 108.0

NORM_KINDS = ("minmax", "exponential", "combined")


@dataclass(frozen=True)
class NormSpec:
    """Score normalization strategy; beta is the exponential sharpness."""

    kind: str = "minmax"
    beta: float = 2.0

    def __post_init__(self):
        if self.kind not in NORM_KINDS:
            raise InvariantError(f"unknown normalization {self.kind!r}, expected one of {NORM_KINDS}")
        if self.beta <= 0:
            raise InvariantError(f"beta must be positive, got {self.beta}")


@dataclass(frozen=True)
class WeightParams:
    """Fusion weight sigma and segment duration W (seconds)."""

    sigma: float
    w_seconds: float
    short_threshold_s: float = SHORT_VIDEO_S

    def __post_init__(self):
        if not 0.0 <= self.sigma <= 1.0:
            raise InvariantError(f"sigma must lie in [0, 1], got {self.sigma}")
        if self.w_seconds <= 0:
            raise InvariantError(f"segment duration must be positive, got {self.w_seconds}")


@dataclass(frozen=True)
class ClusterSpec:
    """Candidate cluster counts k_min, k_min+delta_k, ... up to k_max."""

    k_min: int = 2
    k_max: int = 10
    delta_k: int = 1

    def __post_init__(self):
        if not 1 <= self.k_min < self.k_max:
            raise InvariantError(f"need 1 <= k_min < k_max, got {self.k_min}, {self.k_max}")
        if self.delta_k < 1:
            raise InvariantError(f"delta_k must be >= 1, got {self.delta_k}")

    def candidates(self, n_max: int | None = None) -> list[int]:
        out = list(range(self.k_min, self.k_max + 1, self.delta_k))
        if n_max is not None:
            out = [k for k in out if k <= n_max]
        return out


class KChoice(NamedTuple):
    k: int
    flagged: bool


def normalize(values, spec: NormSpec = NormSpec()) -> np.ndarray:
    """Map scores into [0,1]; constant input maps to all 0.5.

    exponential (and its alias combined) sharpen the upper range by applying
    (e^(beta*x) - 1)/(e^beta - 1) to the minmax-scaled values.
    """
    x = np.asarray(values, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise InvariantError("normalize needs a non-empty 1-D vector")
    if not np.all(np.isfinite(x)):
        raise InvariantError("normalize input contains NaN or Inf")
    lo = float(x.min())
    hi = float(x.max())
    if hi == lo:
        return np.full_like(x, 0.5)
    scaled = (x - lo) / (hi - lo)
    if spec.kind == "minmax":
        return scaled
    return (np.exp(spec.beta * scaled) - 1.0) / (math.exp(spec.beta) - 1.0)


def smooth_scene_scores(scene_scores_norm, scenes: SceneSet) -> np.ndarray:
    """Spread normalized scene scores to frames with cosine transitions.

    Frames between the midpoints of consecutive scenes interpolate with
    w = (1 - cos(pi * p))/2; each scene's midpoint keeps its own score.
    """
    scores = np.asarray(scene_scores_norm, dtype=np.float64)
    if scores.shape[0] != len(scenes):
        raise InvariantError(
            f"{scores.shape[0]} scores for {len(scenes)} scenes"
        )
    out = np.empty(scenes.n_frames, dtype=np.float64)
    for (s, e), v in zip(scenes.boundaries, scores):
        out[s:e] = v
    mids = [(s + e) // 2 for s, e in scenes.boundaries]
    for i in range(len(mids) - 1):
        a, b = mids[i], mids[i + 1]
        length = b - a
        t = np.arange(a, b + 1)
        p = (t - a) / length
        w = (1.0 - np.cos(np.pi * p)) / 2.0
        out[a:b + 1] = (1.0 - w) * scores[i] + w * scores[i + 1]
    return out


def elbow_pick(curve, candidates) -> KChoice:
    """The candidate at the maximum second difference of the WCSS curve.

    A curve with under 3 points or without a distinguished elbow (all second
    differences equal, e.g. linear decay) falls back to the first candidate
    with the flag set.
    """
    curve = np.asarray(curve, dtype=np.float64)
    candidates = list(candidates)
    if curve.shape[0] != len(candidates):
        raise InvariantError("curve and candidate list lengths differ")
    if len(candidates) < 3:
        return KChoice(candidates[0] if candidates else 1, True)
    d2 = curve[:-2] - 2.0 * curve[1:-1] + curve[2:]
    if np.allclose(d2, d2[0], rtol=1e-9, atol=1e-12):
        return KChoice(candidates[0], True)
    return KChoice(candidates[1 + int(np.argmax(d2))], False)


def choose_k(rows: np.ndarray, spec: ClusterSpec = ClusterSpec(), seed=0,
             restarts: int = 10) -> KChoice:
    """Elbow pick over the WCSS curve of the candidate cluster counts.

    Degenerate inputs (fewer frames than k_min, zero variance) collapse to a
    single cluster with the flag set.
    """
    x = np.asarray(rows, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise InvariantError("choose_k needs a non-empty 2-D row matrix")
    n = x.shape[0]
    if n < spec.k_min:
        return KChoice(1, True)
    if np.all(x == x[0]):
        return KChoice(1, True)
    candidates = spec.candidates(n_max=n)
    if not candidates:
        return KChoice(1, True)
    if len(candidates) < 3:
        return KChoice(spec.k_min, True)
    curve = [kmeans(x, k, seed=(seed, k), restarts=restarts).inertia
             for k in candidates]
    return elbow_pick(curve, candidates)


def consistency(labels) -> float:
    """Share of the segment taken by its most common cluster label."""
    labels = np.asarray(labels)
    if labels.size == 0:
        raise InvariantError("consistency needs a non-empty label segment")
    _, counts = np.unique(labels, return_counts=True)
    return float(counts.max()) / labels.size


def uniqueness(rows) -> float:
    """Mean L2 distance of segment rows to the segment mean."""
    x = np.asarray(rows, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise InvariantError("uniqueness needs a non-empty 2-D row matrix")
    center = x.mean(axis=0)
    return float(np.linalg.norm(x - center, axis=1).mean())


def select_params(duration_s: float, short_threshold_s: float = SHORT_VIDEO_S) -> WeightParams:
    """Duration-adaptive sigma and W: long videos favor uniqueness with fine
    segments, mid-length favor pure consistency, short favor coarse segments."""
    if duration_s <= 0:
        raise InvariantError(f"duration must be positive, got {duration_s}")
    s = short_threshold_s
    if duration_s > 5.0 * s:
        return WeightParams(sigma=0.1, w_seconds=1.0, short_threshold_s=s)
    if duration_s > s:
        return WeightParams(sigma=1.0, w_seconds=1.0, short_threshold_s=s)
    return WeightParams(sigma=0.3, w_seconds=3.0, short_threshold_s=s)


def segment_bounds(start: int, end: int, seg_frames: int) -> list[tuple[int, int]]:
    """Non-overlapping windows of seg_frames within [start, end); last may be short."""
    if seg_frames < 1:
        raise InvariantError(f"segment length must be >= 1 frame, got {seg_frames}")
    return [(s, min(s + seg_frames, end)) for s in range(start, end, seg_frames)]


def frame_weights(scenes: SceneSet, emb: EmbeddingMatrix, params: WeightParams,
                  cluster_spec: ClusterSpec = ClusterSpec(), fps: float = 1.0,
                  seed=0) -> np.ndarray:
    """Per-frame weights from per-segment consistency and uniqueness.

    Within each scene: cluster frames at the elbow K, cut into W-second
    segments, score each segment, minmax-rescale both series across the
    scene's segments, and fuse with sigma * c + (1 - sigma) * u.
    """
    if scenes.n_frames != emb.count:
        raise InvariantError(
            f"scene set covers {scenes.n_frames} frames but embeddings have {emb.count} rows"
        )
    seg_frames = max(1, int(round(params.w_seconds * fps)))
    out = np.empty(scenes.n_frames, dtype=np.float64)
    for scene_index, (s, e) in enumerate(scenes.boundaries):
        rows = emb.rows[s:e].astype(np.float64)
        k, _ = choose_k(rows, cluster_spec, seed=(seed, scene_index))
        labels = kmeans(rows, k, seed=(seed, scene_index)).labels
        segs = segment_bounds(s, e, seg_frames)
        cons = np.array([consistency(labels[a - s:b - s]) for a, b in segs])
        uniq = np.array([uniqueness(rows[a - s:b - s]) for a, b in segs])
        cons = normalize(cons, NormSpec("minmax"))
        uniq = normalize(uniq, NormSpec("minmax"))
        fused = params.sigma * cons + (1.0 - params.sigma) * uniq
        for (a, b), w in zip(segs, fused):
            out[a:b] = w
    return out


def fuse_frame_scores(smoothed, weights, scenes: SceneSet,
                      norm: NormSpec = NormSpec()) -> np.ndarray:
    """Multiply smoothed scores by weights, then renormalize within each scene."""
    smoothed = np.asarray(smoothed, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if smoothed.shape != weights.shape or smoothed.shape[0] != scenes.n_frames:
        raise InvariantError("smoothed, weights, and scene set must cover the same frames")
    product = smoothed * weights
    out = np.empty_like(product)
    for s, e in scenes.boundaries:
        out[s:e] = normalize(product[s:e], norm)
    return out
