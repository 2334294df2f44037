"""k-means++ seeding and Lloyd iteration (Euclidean)."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import Rng, derive_seed


@dataclass
class ClusterModel:
    k: int
    centroids: np.ndarray
    assignments: np.ndarray
    inertia: float
    n_iter: int = 0
    inertia_history: list = field(default_factory=list)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignments, minlength=self.k)


def _as_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    return pts


def _sq_dists(pts, centroids):
    return ((pts[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)


def kmeans_pp_init(points, k: int, rng: Rng) -> np.ndarray:
    pts = _as_points(points)
    n = len(pts)
    if n == 0:
        raise ValueError("cannot cluster an empty point set")
    distinct = len(np.unique(pts, axis=0))
    if not 1 <= k <= distinct:
        raise ValueError(f"k={k} must be between 1 and the number of distinct points ({distinct})")
    chosen = [rng.integers(n)]
    nearest = ((pts - pts[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        cum = np.cumsum(nearest)
        target = rng.random() * cum[-1]
        idx = int(np.searchsorted(cum, target, side="right"))
        if idx >= n:
            idx = int(np.flatnonzero(nearest > 0)[-1])
        chosen.append(idx)
        nearest = np.minimum(nearest, ((pts - pts[idx]) ** 2).sum(axis=1))
    return pts[chosen].copy()


def _assign(pts, centroids):
    d = _sq_dists(pts, centroids)
    labels = np.argmin(d, axis=1)
    k = len(centroids)
    # repair empty clusters: steal the point farthest from its own centroid
    for j in range(k):
        if np.any(labels == j):
            continue
        own = d[np.arange(len(pts)), labels]
        counts = np.bincount(labels, minlength=k)
        own = np.where(counts[labels] > 1, own, -1.0)
        victim = int(np.argmax(own))
        labels[victim] = j
        centroids[j] = pts[victim]
        d = _sq_dists(pts, centroids)
    inertia = float(d[np.arange(len(pts)), labels].sum())
    return labels, inertia


def _lloyd(pts, centroids, tol, max_iter):
    history = []
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        labels, inertia = _assign(pts, centroids)
        history.append(inertia)
        new = np.array([pts[labels == j].mean(axis=0) for j in range(len(centroids))])
        shift = np.sqrt(((new - centroids) ** 2).sum(axis=1)).max()
        centroids = new
        if shift < tol:
            break
    labels, inertia = _assign(pts, centroids)
    history.append(inertia)
    return centroids, labels, inertia, n_iter, history


def kmeans_fit(points, k: int, rng: Rng, tol: float = 1e-4, max_iter: int = 300,
               restarts: int = 1) -> ClusterModel:
    """Best-of-``restarts`` Lloyd k-means.

    One 64-bit base seed is drawn from ``rng``; restart ``r`` is seeded from
    ``(base, r)`` only, so results do not depend on restart scheduling.
    Ties on inertia go to the lowest restart index.
    """
    pts = _as_points(points)
    if len(pts) == 0:
        raise ValueError("cannot cluster an empty point set")
    if restarts < 1 or max_iter < 1:
        raise ValueError("restarts and max_iter must be >= 1")
    base = rng.next_u64()
    best = None
    for r in range(restarts):
        init = kmeans_pp_init(pts, k, Rng(derive_seed(base, r)))
        centroids, labels, inertia, n_iter, history = _lloyd(pts, init, tol, max_iter)
        if best is None or inertia < best.inertia:
            best = ClusterModel(k, centroids, labels, inertia, n_iter, history)
    return best
