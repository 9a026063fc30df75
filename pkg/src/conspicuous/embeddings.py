"""Collection centroids, visual distinctiveness and centroid stability curves."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import Embedding

DEFAULT_SAMPLE_SIZE = 50


@dataclass(frozen=True, eq=False)
class Centroid:
    collection: str
    vector: np.ndarray
    sample_size: int
    seed: int


@dataclass(frozen=True)
class DistinctivenessScore:
    token_id: str
    distance: float


@dataclass(frozen=True, eq=False)
class StabilityCurve:
    sizes: tuple[int, ...]
    values: np.ndarray  # shape (trials, len(sizes))

    @property
    def mean(self) -> np.ndarray:
        return self.values.mean(axis=0)

    @property
    def median(self) -> np.ndarray:
        return np.median(self.values, axis=0)

    def as_rows(self) -> list[dict[str, float]]:
        return [
            {"sample_size": s, "mean_relative_difference": float(m), "median_relative_difference": float(md)}
            for s, m, md in zip(self.sizes, self.mean, self.median)
        ]


def stack(embeddings: Sequence[Embedding]) -> np.ndarray:
    if not embeddings:
        raise ValueError("no embeddings")
    return np.vstack([e.vector for e in embeddings])


def sample_indices(n: int, sample_size: int, rng: np.random.Generator) -> np.ndarray:
    k = min(sample_size, n)
    return np.sort(rng.choice(n, size=k, replace=False))


def centroid(
    embeddings: Sequence[Embedding] | np.ndarray,
    sample_size: int = DEFAULT_SAMPLE_SIZE,
    seed: int = 0,
    collection: str = "",
) -> Centroid:
    """Mean of a seeded uniform sample (without replacement) of the embeddings.

    Collections smaller than ``sample_size`` use every embedding.
    """
    if isinstance(embeddings, np.ndarray):
        matrix = np.atleast_2d(embeddings)
    else:
        if embeddings and not collection:
            collection = embeddings[0].collection
        matrix = stack(embeddings)
    if matrix.shape[0] == 0:
        raise ValueError("no embeddings for collection")
    if sample_size < 1:
        raise ValueError("sample_size must be positive")
    idx = sample_indices(matrix.shape[0], sample_size, np.random.default_rng(seed))
    vec = matrix[idx].mean(axis=0)
    vec.setflags(write=False)
    return Centroid(collection, vec, int(idx.size), seed)


def visual_distinctiveness(embedding: np.ndarray | Embedding, center: np.ndarray | Centroid) -> float:
    a = embedding.vector if isinstance(embedding, Embedding) else np.asarray(embedding, dtype=np.float64)
    b = center.vector if isinstance(center, Centroid) else np.asarray(center, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b))


def distinctiveness_scores(embeddings: Sequence[Embedding], center: Centroid) -> list[DistinctivenessScore]:
    matrix = stack(embeddings)
    if matrix.shape[1] != center.vector.shape[0]:
        raise ValueError("dimension mismatch between embeddings and centroid")
    dist = np.linalg.norm(matrix - center.vector, axis=1)
    return [DistinctivenessScore(e.token_id, float(d)) for e, d in zip(embeddings, dist)]


def stability_curve(
    embeddings: Sequence[Embedding] | np.ndarray,
    sizes: Sequence[int],
    trials: int = 20,
    seed: int = 0,
) -> StabilityCurve:
    """Relative change in distance-to-centroid when the centroid is subsampled.

    For every size and trial the statistic is
    ``mean_i |d_true_i - d_sub_i| / mean_i d_true_i`` over all embeddings,
    where the true centroid uses the whole population.
    """
    matrix = embeddings if isinstance(embeddings, np.ndarray) else stack(embeddings)
    n = matrix.shape[0]
    if trials < 1:
        raise ValueError("trials must be positive")
    for s in sizes:
        if s < 1 or s > n:
            raise ValueError(f"sample size {s} outside 1..{n}")
    true_center = matrix.mean(axis=0)
    d_true = np.linalg.norm(matrix - true_center, axis=1)
    denom = d_true.mean()
    values = np.zeros((trials, len(sizes)))
    seeds = np.random.SeedSequence(seed).spawn(trials)
    for t, ss in enumerate(seeds):
        rng = np.random.default_rng(ss)
        for j, s in enumerate(sizes):
            if s == n:
                continue
            sub = matrix[sample_indices(n, s, rng)].mean(axis=0)
            d_sub = np.linalg.norm(matrix - sub, axis=1)
            values[t, j] = np.abs(d_true - d_sub).mean() / denom if denom > 0 else 0.0
    return StabilityCurve(tuple(int(s) for s in sizes), values)
