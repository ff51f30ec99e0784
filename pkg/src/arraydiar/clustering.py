"""Global speaker clustering of segment embeddings.

HDBSCAN over the pairwise cosine-distance matrix groups the per-segment
embeddings; outliers are absorbed into the closest cluster centroid
afterwards, so every segment ends up labeled.
"""

from __future__ import annotations

import numpy as np
from sklearn.cluster import HDBSCAN

from .embeddings import normalize

OUTLIER = -1


def cosine_distance_matrix(embeddings: np.ndarray) -> np.ndarray:
    """Pairwise cosine distances; embeddings are normalized first."""
    unit = np.stack([normalize(e) for e in embeddings])
    dist = 1.0 - unit @ unit.T
    np.fill_diagonal(dist, 0.0)
    return np.maximum(dist, 0.0)


def cluster_embeddings(
    embeddings: np.ndarray,
    min_cluster_size: int = 2,
    min_samples: int = 1,
) -> np.ndarray:
    """Density-based clustering; returns one label per segment, -1 = outlier.

    Fewer embeddings than ``min_cluster_size`` cannot form any cluster, so
    everything is an outlier (resolved downstream). Identical embeddings
    collapse to a single cluster.
    """
    embeddings = np.atleast_2d(np.asarray(embeddings, dtype=np.float64))
    num = embeddings.shape[0]
    if num == 0:
        return np.empty(0, dtype=np.int64)
    if num < min_cluster_size:
        return np.full(num, OUTLIER, dtype=np.int64)

    dist = cosine_distance_matrix(embeddings)
    if float(dist.max()) < 1e-12:
        return np.zeros(num, dtype=np.int64)

    labels = HDBSCAN(
        min_cluster_size=min_cluster_size,
        min_samples=min_samples,
        metric="precomputed",
        allow_single_cluster=True,
    ).fit_predict(dist)
    return labels.astype(np.int64)


def reassign_outliers(labels: np.ndarray, embeddings: np.ndarray) -> np.ndarray:
    """Merge every outlier into the cluster with the closest centroid.

    Centroids are renormalized means of the member embeddings; ties go to
    the lowest cluster id. If no cluster exists at all, all segments form a
    single cluster 0.
    """
    labels = np.asarray(labels, dtype=np.int64).copy()
    embeddings = np.atleast_2d(np.asarray(embeddings, dtype=np.float64))
    cluster_ids = sorted(c for c in set(labels.tolist()) if c != OUTLIER)
    if not cluster_ids:
        return np.zeros_like(labels)

    unit = np.stack([normalize(e) for e in embeddings])
    centroids = np.stack(
        [normalize(unit[labels == c].mean(axis=0)) for c in cluster_ids]
    )
    for n in np.nonzero(labels == OUTLIER)[0]:
        dist = 1.0 - centroids @ unit[n]
        labels[n] = cluster_ids[int(np.argmin(dist))]
    return labels
