"""Budgeted summary construction from per-frame scores.

Three protocols share one exact 0/1 knapsack core:
  keyshot15     segment knapsack at a 15% frame budget,
  qfvs_shots    greedy top shots matched to an oracle budget,
  uniform_frag  uniform fragments (3% each) packed to a 36% budget.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data_io import FORMAT_VERSION, SceneSet, load_json, save_json
from .errors import InvariantError, SchemaError

PROTOCOLS = ("keyshot15", "qfvs_shots", "uniform_frag")


@dataclass(frozen=True, eq=False)
class SummaryMask:
    """Per-frame selection under one protocol, capped at budget_frames."""

    selected: np.ndarray
    budget_frames: int
    protocol: str

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise InvariantError(f"unknown protocol {self.protocol!r}, expected one of {PROTOCOLS}")
        sel = np.ascontiguousarray(np.asarray(self.selected, dtype=bool))
        if sel.ndim != 1 or sel.size == 0:
            raise InvariantError("selection must be a non-empty 1-D boolean vector")
        if self.budget_frames < 0:
            raise InvariantError(f"budget_frames must be nonnegative, got {self.budget_frames}")
        if int(sel.sum()) > self.budget_frames:
            raise InvariantError(
                f"selected {int(sel.sum())} frames exceeds budget {self.budget_frames}"
            )
        object.__setattr__(self, "selected", sel)

    def __eq__(self, other):
        if not isinstance(other, SummaryMask):
            return NotImplemented
        return (self.protocol == other.protocol
                and self.budget_frames == other.budget_frames
                and np.array_equal(self.selected, other.selected))

    @property
    def n_frames(self) -> int:
        return self.selected.shape[0]

    @property
    def n_selected(self) -> int:
        return int(self.selected.sum())

    def intervals(self) -> list[tuple[int, int]]:
        edges = np.flatnonzero(np.diff(np.concatenate(([0], self.selected.view(np.int8), [0]))))
        return [(int(edges[i]), int(edges[i + 1])) for i in range(0, len(edges), 2)]

    @classmethod
    def from_intervals(cls, intervals, n_frames: int, budget_frames: int,
                       protocol: str) -> "SummaryMask":
        sel = np.zeros(n_frames, dtype=bool)
        for s, e in intervals:
            if not 0 <= s < e <= n_frames:
                raise InvariantError(f"interval [{s}, {e}) outside [0, {n_frames})")
            sel[s:e] = True
        return cls(selected=sel, budget_frames=budget_frames, protocol=protocol)


def save_summary_mask(mask: SummaryMask, path: str | Path, video_id: str = "") -> None:
    save_json(path, {
        "version": FORMAT_VERSION,
        "video_id": video_id,
        "protocol": mask.protocol,
        "budget_frames": int(mask.budget_frames),
        "n_frames": int(mask.n_frames),
        "intervals": [[s, e] for s, e in mask.intervals()],
    })


def load_summary_mask(path: str | Path) -> SummaryMask:
    obj = load_json(path)
    if obj.get("version") != FORMAT_VERSION:
        raise SchemaError(f"{path}: field 'version' must be {FORMAT_VERSION}")
    try:
        return SummaryMask.from_intervals(
            [(int(s), int(e)) for s, e in obj["intervals"]],
            n_frames=int(obj["n_frames"]),
            budget_frames=int(obj["budget_frames"]),
            protocol=obj["protocol"],
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"{path}: malformed summary mask: {exc}") from exc
    except InvariantError as exc:
        raise SchemaError(f"{path}: {exc}") from exc


def knapsack_select(values, lengths, capacity: int) -> list[int]:
    """Exact 0/1 knapsack over item lengths; ties prefer the lexicographically
    smallest index set.

    The table is filled right-to-left (dp[i] = best value using items i..n-1),
    so a front-to-back scan that takes item i whenever taking is at least as
    good as skipping reconstructs the lex-smallest optimal set.
    """
    values = np.asarray(values, dtype=np.float64)
    lengths = np.asarray(lengths)
    if values.shape != lengths.shape or values.ndim != 1:
        raise InvariantError("values and lengths must be 1-D and equally long")
    if np.any(lengths <= 0) or np.any(lengths != np.asarray(lengths, dtype=np.int64)):
        raise InvariantError("item lengths must be positive integers")
    lengths = lengths.astype(np.int64)
    n = values.shape[0]
    capacity = int(capacity)
    if capacity <= 0 or n == 0:
        return []
    dp = np.zeros((n + 1, capacity + 1), dtype=np.float64)
    for i in range(n - 1, -1, -1):
        li = int(lengths[i])
        dp[i] = dp[i + 1]
        if li <= capacity:
            take = values[i] + dp[i + 1, : capacity + 1 - li]
            np.maximum(dp[i, li:], take, out=dp[i, li:])
    chosen: list[int] = []
    w = capacity
    for i in range(n):
        li = int(lengths[i])
        if li <= w and values[i] + dp[i + 1, w - li] >= dp[i + 1, w]:
            chosen.append(i)
            w -= li
    return chosen


def _segment_values(frame_scores: np.ndarray, segments) -> tuple[np.ndarray, np.ndarray]:
    vals = np.array([frame_scores[s:e].mean() * (e - s) for s, e in segments])
    lens = np.array([e - s for s, e in segments], dtype=np.int64)
    return vals, lens


def _as_segments(segments) -> tuple[tuple[int, int], ...]:
    if isinstance(segments, SceneSet):
        return segments.boundaries
    return tuple((int(s), int(e)) for s, e in segments)


def summarize_keyshot(frame_scores, segments, budget_fraction: float = 0.15) -> SummaryMask:
    """Knapsack over evaluation segments at floor(budget_fraction * n_frames)."""
    frame_scores = np.asarray(frame_scores, dtype=np.float64)
    segments = _as_segments(segments)
    n = frame_scores.shape[0]
    if not segments or segments[-1][1] != n or segments[0][0] != 0:
        raise InvariantError("segments must partition the scored frame range")
    capacity = int(math.floor(budget_fraction * n))
    vals, lens = _segment_values(frame_scores, segments)
    chosen = knapsack_select(vals, lens, capacity)
    sel = np.zeros(n, dtype=bool)
    for i in chosen:
        s, e = segments[i]
        sel[s:e] = True
    return SummaryMask(selected=sel, budget_frames=capacity, protocol="keyshot15")


def qfvs_shot_bounds(n_frames: int, fps: float, shot_seconds: float = 5.0) -> list[tuple[int, int]]:
    shot_len = int(round(shot_seconds * fps))
    if shot_len < 1:
        raise InvariantError(f"shot length rounds to {shot_len} frames; need >= 1")
    return [(s, min(s + shot_len, n_frames)) for s in range(0, n_frames, shot_len)]


def summarize_qfvs(frame_scores, fps: float, oracle_budget_frames: int,
                   shot_seconds: float = 5.0) -> SummaryMask:
    """Take the highest-scoring fixed-length shots, earliest first on ties,
    stopping when the next pick would exceed the oracle budget."""
    frame_scores = np.asarray(frame_scores, dtype=np.float64)
    n = frame_scores.shape[0]
    if oracle_budget_frames <= 0:
        raise InvariantError("oracle budget must be positive")
    shots = qfvs_shot_bounds(n, fps, shot_seconds)
    means = np.array([frame_scores[s:e].mean() for s, e in shots])
    order = sorted(range(len(shots)), key=lambda i: (-means[i], i))
    sel = np.zeros(n, dtype=bool)
    used = 0
    for i in order:
        s, e = shots[i]
        if used + (e - s) > oracle_budget_frames:
            break
        sel[s:e] = True
        used += e - s
    return SummaryMask(selected=sel, budget_frames=int(oracle_budget_frames),
                       protocol="qfvs_shots")


def uniform_fragments(n_frames: int, fragment_fraction: float = 0.03) -> list[tuple[int, int]]:
    """Cut [0, n_frames) into ceil(1/fraction) near-equal fragments; short
    videos may leave some fragments empty, which are dropped."""
    if not 0 < fragment_fraction <= 1:
        raise InvariantError(f"fragment_fraction must be in (0, 1], got {fragment_fraction}")
    n_frag = math.ceil(1.0 / fragment_fraction)
    bounds = [(n_frames * i) // n_frag for i in range(n_frag + 1)]
    return [(bounds[i], bounds[i + 1]) for i in range(n_frag) if bounds[i + 1] > bounds[i]]


def summarize_uniform(frame_scores, fragment_fraction: float = 0.03,
                      budget_fraction: float = 0.36) -> SummaryMask:
    """Knapsack over uniform fragments at floor(budget_fraction * n_frames)."""
    if not 0 < budget_fraction <= 1:
        raise InvariantError(f"budget_fraction must be in (0, 1], got {budget_fraction}")
    frame_scores = np.asarray(frame_scores, dtype=np.float64)
    n = frame_scores.shape[0]
    frags = uniform_fragments(n, fragment_fraction)
    capacity = int(math.floor(budget_fraction * n))
    vals, lens = _segment_values(frame_scores, frags)
    chosen = knapsack_select(vals, lens, capacity)
    sel = np.zeros(n, dtype=bool)
    for i in chosen:
        s, e = frags[i]
        sel[s:e] = True
    return SummaryMask(selected=sel, budget_frames=capacity, protocol="uniform_frag")
