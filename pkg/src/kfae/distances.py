"""Distance metrics on latent vectors and pairwise distance matrices."""
from __future__ import annotations

import numpy as np


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape[-1] != b.shape[-1]:
        raise ValueError(f"length mismatch: {a.shape[-1]} vs {b.shape[-1]}")
    return a, b


def euclidean(a, b):
    a, b = _pair(a, b)
    return np.sqrt(np.sum((a - b) ** 2, axis=-1))


def manhattan(a, b):
    a, b = _pair(a, b)
    return np.sum(np.abs(a - b), axis=-1)


def cosine_distance(a, b):
    """``1 - cos(angle)``; a zero vector is at distance 1 from everything."""
    a, b = _pair(a, b)
    # scale by the largest component so tiny vectors don't underflow to norm 0
    sa = np.max(np.abs(a), axis=-1, keepdims=True)
    sb = np.max(np.abs(b), axis=-1, keepdims=True)
    a = a / np.where(sa > 0, sa, 1.0)
    b = b / np.where(sb > 0, sb, 1.0)
    na = np.sqrt(np.sum(a * a, axis=-1))
    nb = np.sqrt(np.sum(b * b, axis=-1))
    denom = na * nb
    ok = denom > 0
    cos = np.sum(a * b, axis=-1) / np.where(ok, denom, 1.0)
    return np.where(ok, 1.0 - np.clip(cos, -1.0, 1.0), 1.0)


METRICS = {"euclidean": euclidean, "manhattan": manhattan, "cosine": cosine_distance}


def get_metric(name: str):
    try:
        return METRICS[name]
    except KeyError:
        raise ValueError(f"unknown metric {name!r}; choose from {sorted(METRICS)}") from None


def pairwise(points, metric="euclidean") -> np.ndarray:
    """Symmetric ``n x n`` matrix; the upper triangle is computed and mirrored."""
    fn = get_metric(metric) if isinstance(metric, str) else metric
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    n = len(pts)
    out = np.zeros((n, n))
    for i in range(n - 1):
        row = fn(pts[i], pts[i + 1:])
        out[i, i + 1:] = row
        out[i + 1:, i] = row
    return out
