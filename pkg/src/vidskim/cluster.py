"""Deterministic KMeans with D^2-weighted seeding and restarts.

Kept in-tree rather than delegated so that cluster labels, and everything
scored from them, are bit-identical across platforms and library versions.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import InvariantError


class KMeansResult(NamedTuple):
    labels: np.ndarray
    centers: np.ndarray
    inertia: float


def flat_seed(seed) -> tuple[int, ...]:
    """Flatten arbitrarily nested seed tuples into the form default_rng accepts."""
    if isinstance(seed, (tuple, list)):
        out: list[int] = []
        for part in seed:
            out.extend(flat_seed(part))
        return tuple(out)
    return (int(seed),)


def _init_centers(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]), dtype=np.float64)
    centers[0] = x[int(rng.integers(n))]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        total = float(d2.sum())
        if total <= 0.0:
            # all remaining mass sits on existing centers; reuse any point
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centers[j] = x[idx]
        d2 = np.minimum(d2, np.sum((x - centers[j]) ** 2, axis=1))
    return centers


def _lloyd(x: np.ndarray, centers: np.ndarray, max_iter: int) -> KMeansResult:
    k = centers.shape[0]
    labels = np.full(x.shape[0], -1, dtype=np.int64)
    for _ in range(max_iter):
        d2 = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_labels = np.argmin(d2, axis=1)
        for j in range(k):
            members = new_labels == j
            if not np.any(members):
                # revive an empty cluster at the worst-fit point
                worst = int(np.argmax(d2[np.arange(len(new_labels)), new_labels]))
                centers[j] = x[worst]
                new_labels[worst] = j
                members = new_labels == j
            centers[j] = x[members].mean(axis=0)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    d2 = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    labels = np.argmin(d2, axis=1)
    inertia = float(d2[np.arange(x.shape[0]), labels].sum())
    return KMeansResult(labels=labels, centers=centers, inertia=inertia)


def kmeans(rows: np.ndarray, k: int, seed, restarts: int = 10,
           max_iter: int = 100) -> KMeansResult:
    """Cluster rows into k groups; the best of `restarts` seeded runs wins."""
    x = np.asarray(rows, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise InvariantError("kmeans needs a non-empty 2-D row matrix")
    if not 1 <= k <= x.shape[0]:
        raise InvariantError(f"k={k} outside [1, {x.shape[0]}]")
    if k == 1:
        center = x.mean(axis=0, keepdims=True)
        inertia = float(((x - center) ** 2).sum())
        return KMeansResult(labels=np.zeros(x.shape[0], dtype=np.int64),
                            centers=center, inertia=inertia)
    rng = np.random.default_rng(flat_seed(seed))
    best: KMeansResult | None = None
    for _ in range(restarts):
        centers = _init_centers(x, k, rng)
        result = _lloyd(x, centers.copy(), max_iter)
        if best is None or result.inertia < best.inertia:
            best = result
    return best


def wcss(rows: np.ndarray, k: int, seed, restarts: int = 10) -> float:
    """Within-cluster sum of squares at k (the KMeans objective)."""
    return kmeans(rows, k, seed, restarts=restarts).inertia
