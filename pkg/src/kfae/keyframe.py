"""Keyframe selection: cluster latents, pick centroid-nearest frames, merge near-duplicates."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autoencoder, clustering, imaging
from .distances import get_metric, pairwise
from .errors import ExtractionError
from .numerics import Rng

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Candidate:
    frame_index: int
    cluster_id: int
    centroid_distance: float


@dataclass(frozen=True)
class Merge:
    kept: int
    dropped: int
    distance: float


@dataclass
class DedupResult:
    survivors: list
    merges: list
    mu: float
    sigma: float
    threshold: float
    matrix: np.ndarray


@dataclass
class KeyframeSet:
    requested_k: int
    oversampled_k: int
    metric: str
    candidates: list
    survivors: list
    merges: list
    mu: float = 0.0
    sigma: float = 0.0
    threshold: float = 0.0
    cluster_sizes: dict = field(default_factory=dict)

    @property
    def frame_indices(self) -> list[int]:
        return [c.frame_index for c in self.survivors]

    def to_report(self, video: str) -> dict:
        return {
            "video": video,
            "requested_k": self.requested_k,
            "oversampled_k": self.oversampled_k,
            "metric": self.metric,
            "mu": float(self.mu),
            "sigma": float(self.sigma),
            "threshold": float(self.threshold),
            "keyframes": [{"frame": c.frame_index, "cluster": c.cluster_id,
                           "centroid_distance": float(c.centroid_distance)}
                          for c in self.survivors],
            "merges": [{"kept": m.kept, "dropped": m.dropped, "distance": float(m.distance)}
                       for m in self.merges],
        }


def select_representatives(latents, model: clustering.ClusterModel, metric="euclidean",
                           frame_indices=None) -> list[Candidate]:
    """Member nearest each centroid; ties go to the lower frame index."""
    z = np.asarray(latents, dtype=np.float64)
    if z.ndim == 1:
        z = z[:, None]
    frames = np.arange(len(z)) if frame_indices is None else np.asarray(frame_indices)
    fn = get_metric(metric)
    out = []
    for cid in range(model.k):
        members = np.flatnonzero(model.assignments == cid)
        if len(members) == 0:
            raise RuntimeError(f"cluster {cid} has no members")
        d = np.atleast_1d(fn(z[members], model.centroids[cid]))
        best = min(range(len(members)), key=lambda i: (d[i], frames[members[i]]))
        out.append(Candidate(int(frames[members[best]]), cid, float(d[best])))
    return sorted(out, key=lambda c: c.frame_index)


def dedup(candidates, latents, metric="euclidean") -> DedupResult:
    """Merge candidate pairs closer than ``mean - 2 * std`` of their pairwise distances.

    ``latents`` maps a frame index to its latent vector (indexable by
    ``frame_index``).  Pairs are visited by ascending distance; the member
    farther from its centroid is dropped (ties: the higher frame index).
    Population standard deviation over the strict upper triangle.
    """
    cands = sorted(candidates, key=lambda c: c.frame_index)
    n = len(cands)
    pts = np.array([np.atleast_1d(np.asarray(latents[c.frame_index], np.float64)) for c in cands]) \
        if n else np.zeros((0, 1))
    matrix = pairwise(pts, metric) if n else np.zeros((0, 0))
    if n < 2:
        return DedupResult(list(cands), [], 0.0, 0.0, 0.0, matrix)
    iu = np.triu_indices(n, k=1)
    upper = matrix[iu]
    mu = float(np.mean(upper))
    sigma = float(np.std(upper))
    tau = mu - 2.0 * sigma
    alive = [True] * n
    merges = []
    if tau > 0:
        order = sorted(zip(upper, iu[0], iu[1]),
                       key=lambda t: (t[0], cands[t[1]].frame_index, cands[t[2]].frame_index))
        for dist, i, j in order:
            if dist >= tau:
                break
            if not (alive[i] and alive[j]):
                continue
            a, b = cands[i], cands[j]
            drop_j = (b.centroid_distance, b.frame_index) > (a.centroid_distance, a.frame_index)
            keep, drop = (i, j) if drop_j else (j, i)
            alive[drop] = False
            merges.append(Merge(cands[keep].frame_index, cands[drop].frame_index, float(dist)))
    survivors = [c for c, ok in zip(cands, alive) if ok]
    return DedupResult(survivors, merges, mu, sigma, tau, matrix)


def oversampled_k(requested_k: int, factor: float) -> int:
    return math.ceil(factor * requested_k - 1e-9)


def trim_to_k(survivors, requested_k: int, sizes) -> list[Candidate]:
    """Keep the candidates of the ``requested_k`` largest clusters (ties: lower id)."""
    if len(survivors) <= requested_k:
        return list(survivors)
    ranked = sorted(survivors, key=lambda c: (-int(sizes[c.cluster_id]), c.cluster_id))
    return sorted(ranked[:requested_k], key=lambda c: c.frame_index)


def keyframes_from_latents(latents, requested_k: int, oversample_factor: float = 1.5,
                           metric: str = "euclidean", seed: int = 0,
                           restarts: int = 8) -> KeyframeSet:
    """Cluster -> representatives -> dedup -> trim, on precomputed latents."""
    if requested_k < 1:
        raise ValueError("requested_k must be >= 1")
    if oversample_factor < 1:
        raise ValueError("oversample factor must be >= 1")
    get_metric(metric)
    z = np.asarray(latents, dtype=np.float64)
    n = len(z)
    k_prime = oversampled_k(requested_k, oversample_factor)
    if k_prime > n:
        raise ExtractionError(
            f"{n} frames cannot form {k_prime} clusters (k={requested_k} x oversample "
            f"{oversample_factor}); use a smaller k or oversample factor")
    distinct = len(np.unique(z, axis=0))
    if k_prime > distinct:
        raise ExtractionError(
            f"only {distinct} distinct latent vectors for {k_prime} clusters; "
            "use a smaller k or oversample factor")
    model = clustering.kmeans_fit(z, k_prime, Rng(seed), restarts=restarts)
    candidates = select_representatives(z, model, metric)
    result = dedup(candidates, z, metric)
    sizes = model.sizes()
    survivors = trim_to_k(result.survivors, requested_k, sizes)
    log.info("k'=%d candidates=%d merges=%d survivors=%d", k_prime, len(candidates),
             len(result.merges), len(survivors))
    return KeyframeSet(requested_k, k_prime, metric, candidates, survivors, result.merges,
                       result.mu, result.sigma, result.threshold,
                       {int(i): int(s) for i, s in enumerate(sizes)})


def extract_keyframes(frames_dir, model_path, requested_k: int, oversample_factor: float = 1.5,
                      metric: str = "euclidean", seed: int = 0, restarts: int = 8,
                      frames=None):
    """Full pipeline on a frame directory; returns ``(KeyframeSet, raw frames)``."""
    params, cfg = autoencoder.load_model(model_path)
    raw = imaging.load_frame_sequence(frames_dir) if frames is None else frames
    size = cfg.input_shape[1]
    if cfg.input_shape[0] != 3 or cfg.input_shape[2] != size:
        raise ExtractionError(f"model input shape {cfg.input_shape} is not a square HSV frame")
    tensors = [imaging.preprocess_frame(f, size) for f in raw]
    latents = autoencoder.encode_batch(params, cfg, tensors)
    kset = keyframes_from_latents(latents, requested_k, oversample_factor, metric, seed, restarts)
    return kset, raw


def video_name(frames_dir) -> str:
    return Path(frames_dir).resolve().name
