"""Lengthscale-scaled K-means with iterative smallest-cluster merges.

Selection cost scales with the squared cluster size, so the pool is
partitioned into S independent selection problems.  Rescaling each
dimension by the trained level-0 lengthscale makes Euclidean distance a
cheap stand-in for kernel distance.  K-means first over-segments into
S_hat > S clusters; the smallest cluster is then repeatedly merged into
its nearest neighbor under the Hausdorff set distance until S remain.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .gp import GpHyperparams
from .pool import EmbeddingPool

_KMEANS_MAX_ITER = 100


@dataclass(frozen=True)
class ClusterAssignment:
    """Cluster id per point; ids are dense in 0..n_clusters-1."""

    labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.intp)
        uniq = np.unique(labels)
        if not np.array_equal(uniq, np.arange(uniq.size)):
            raise InvalidInputError("cluster labels must be dense from 0")
        object.__setattr__(self, "labels", labels)

    @property
    def n_clusters(self) -> int:
        return int(self.labels.max()) + 1

    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_clusters)

    def members(self, cluster_id: int) -> np.ndarray:
        return np.flatnonzero(self.labels == cluster_id)


def scale_points(pool: EmbeddingPool, hyper: GpHyperparams) -> np.ndarray:
    """Divide each coordinate by the trained level-0 lengthscale."""
    return pool.points / hyper.lengthscales


def _sq_dists(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    return (
        np.sum(points * points, axis=1)[:, None]
        - 2.0 * points @ centers.T
        + np.sum(centers * centers, axis=1)[None, :]
    )


def _kmeans_pp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[rng.integers(n)]
    d2 = np.maximum(_sq_dists(points, centers[:1]).ravel(), 0.0)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            centers[j] = points[rng.integers(n)]
            continue
        centers[j] = points[np.searchsorted(np.cumsum(d2), rng.random() * total)]
        d2 = np.minimum(d2, np.maximum(_sq_dists(points, centers[j:j + 1]).ravel(), 0.0))
    return centers


def kmeans(points: np.ndarray, k: int, seed) -> ClusterAssignment:
    """Lloyd's algorithm with k-means++ seeding on pre-scaled points.

    Converges when assignments stabilize or after 100 iterations; an
    emptied cluster is re-seeded to the point farthest from its center.
    """
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if not 1 <= k <= n:
        raise InvalidInputError(f"k must be in [1, {n}], got {k}")
    rng = np.random.default_rng(seed)
    centers = _kmeans_pp_init(points, k, rng)
    labels = np.full(n, -1, dtype=np.intp)
    for _ in range(_KMEANS_MAX_ITER):
        d2 = _sq_dists(points, centers)
        new_labels = np.argmin(d2, axis=1)
        for j in range(k):
            sel = new_labels == j
            if not np.any(sel):
                worst = int(np.argmax(d2[np.arange(n), new_labels]))
                centers[j] = points[worst]
                new_labels[worst] = j
                sel = new_labels == j
            centers[j] = points[sel].mean(axis=0)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return ClusterAssignment(_relabel(labels))


def _relabel(labels: np.ndarray) -> np.ndarray:
    """Dense labels, numbered by first appearance in point order."""
    out = np.empty_like(labels)
    mapping: dict[int, int] = {}
    for i, lab in enumerate(labels):
        out[i] = mapping.setdefault(int(lab), len(mapping))
    return out


def hausdorff_distance(A: np.ndarray, B: np.ndarray) -> float:
    """Symmetric Hausdorff distance between two nonempty point sets."""
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    B = np.atleast_2d(np.asarray(B, dtype=np.float64))
    if A.shape[0] == 0 or B.shape[0] == 0:
        raise InvalidInputError("Hausdorff distance needs nonempty sets")

    def directed(X, Y):
        # direct differences, chunked: exact zero for coincident points
        worst = 0.0
        step = max(1, int(4e6 // max(Y.shape[0] * Y.shape[1], 1)))
        for s in range(0, X.shape[0], step):
            diff = X[s:s + step, None, :] - Y[None, :, :]
            d2 = np.einsum("ijk,ijk->ij", diff, diff)
            worst = max(worst, float(d2.min(axis=1).max()))
        return worst

    return float(np.sqrt(max(directed(A, B), directed(B, A))))


def cluster_with_merges(pool: EmbeddingPool, hyper: GpHyperparams, S: int,
                        S_hat: int, seed) -> ClusterAssignment:
    """K-means into S_hat clusters, then merge the smallest cluster into its
    Hausdorff-nearest neighbor until exactly S remain.

    Ties (smallest size, nearest distance) break on lowest cluster id.
    Distances from the shrinking cluster to all points are computed once per
    merge and sliced per neighbor, instead of one pairwise pass per neighbor.
    """
    if not 1 <= S <= S_hat <= pool.n_points:
        raise InvalidInputError("need 1 <= S <= S_hat <= N")
    z = scale_points(pool, hyper)
    assign = kmeans(z, S_hat, seed)
    labels = assign.labels.copy()
    groups: dict[int, np.ndarray] = {j: np.flatnonzero(labels == j)
                                     for j in range(assign.n_clusters)}
    z32 = z.astype(np.float32)
    for _ in range(S_hat - S):
        sizes = sorted((len(idx), cid) for cid, idx in groups.items())
        smallest = sizes[0][1]
        a_idx = groups[smallest]
        # squared distances preserve the min/max ordering; sqrt only at the end
        d2 = np.maximum(_sq_dists(z32[a_idx], z32), 0.0)
        col_min = d2.min(axis=0)
        best = None
        for cid, idx in groups.items():
            if cid == smallest:
                continue
            dist2 = max(float(d2[:, idx].min(axis=1).max()),
                        float(col_min[idx].max()))
            if best is None or (dist2, cid) < best:
                best = (dist2, cid)
        target = best[1]
        groups[target] = np.sort(np.concatenate([groups[target], groups[smallest]]))
        del groups[smallest]
    for cid, idx in groups.items():
        labels[idx] = cid
    return ClusterAssignment(_relabel(labels))
