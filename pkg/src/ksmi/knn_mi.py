"""Kraskov-Stögbauer-Grassberger (KSG) k-nearest-neighbour MI estimator.

References
----------
Kraskov, A., Stögbauer, H., & Grassberger, P. (2004). Estimating mutual
information. Physical Review E, 69(6), 066138.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from ._neighbors import counts_within_radii
from .gaussmodel import PairedSamples
from .matkit import RngStream, as_matrix, digamma

__all__ = [
    "KsgConfig",
    "PairedSamples",
    "knn_radius",
    "count_within",
    "knn_radii",
    "counts_within",
    "jitter",
    "ksg_mi",
]

# jitter streams are derived from this fixed root, keyed by the data itself
_JITTER_SEED = 0x6B7367


@dataclass(frozen=True)
class KsgConfig:
    """Settings of the KSG estimator.

    Attributes
    ----------
    k_neighbors : int
        Neighbour order used for the joint-space radius.
    jitter_scale : float
        Magnitude of the tie-breaking noise relative to each coordinate's
        standard deviation; 0 disables jitter.
    """

    k_neighbors: int = 3
    jitter_scale: float = 1e-10

    def __post_init__(self):
        if self.k_neighbors < 1:
            raise ValueError(f"k_neighbors must be >= 1, got {self.k_neighbors}")
        if not self.jitter_scale >= 0:
            raise ValueError("jitter_scale must be non-negative")


def _maxnorm_to(points: np.ndarray, index: int) -> np.ndarray:
    return np.max(np.abs(points - points[index]), axis=1)


def knn_radius(points, index: int, k_neighbors: int) -> float:
    """Max-norm distance from ``points[index]`` to its ``k``-th nearest other point."""
    points = as_matrix(points, "points")
    n = points.shape[0]
    if not 1 <= k_neighbors < n:
        raise ValueError(f"need 1 <= k_neighbors < n, got {k_neighbors} with n={n}")
    dist = _maxnorm_to(points, index)
    others = np.delete(dist, index)
    return float(np.partition(others, k_neighbors - 1)[k_neighbors - 1])


def count_within(points, index: int, radius: float) -> int:
    """Number of other points strictly within max-norm ``radius`` of ``points[index]``."""
    if radius < 0:
        raise ValueError("radius must be non-negative")
    points = as_matrix(points, "points")
    dist = _maxnorm_to(points, index)
    dist[index] = np.inf
    return int(np.count_nonzero(dist < radius))


def _pairwise_maxnorm(points: np.ndarray) -> np.ndarray:
    return np.max(np.abs(points[:, None, :] - points[None, :, :]), axis=2)


def knn_radii(points, k_neighbors: int, method: str = "tree") -> np.ndarray:
    """:func:`knn_radius` for every point.

    ``method="tree"`` uses a k-d tree; ``"brute"`` the quadratic reference.
    """
    points = as_matrix(points, "points")
    n = points.shape[0]
    if not 1 <= k_neighbors < n:
        raise ValueError(f"need 1 <= k_neighbors < n, got {k_neighbors} with n={n}")
    if method == "brute":
        dist = _pairwise_maxnorm(points)
        np.fill_diagonal(dist, np.inf)
        return np.partition(dist, k_neighbors - 1, axis=1)[:, k_neighbors - 1]
    if method != "tree":
        raise ValueError(f"unknown method {method!r}")
    # the query point itself comes back at distance 0 among the k+1 results
    dist, _ = cKDTree(points).query(points, k=k_neighbors + 1, p=np.inf)
    return np.ascontiguousarray(dist[:, k_neighbors])


def counts_within(points, radii, method: str = "grid") -> np.ndarray:
    """:func:`count_within` for every point with per-point radii."""
    points = as_matrix(points, "points")
    radii = np.asarray(radii, dtype=np.float64)
    if radii.shape != (points.shape[0],):
        raise ValueError("need one radius per point")
    if method == "brute":
        dist = _pairwise_maxnorm(points)
        np.fill_diagonal(dist, np.inf)
        return np.count_nonzero(dist < radii[:, None], axis=1)
    if method != "grid":
        raise ValueError(f"unknown method {method!r}")
    return counts_within_radii(points, radii)


def jitter(z: np.ndarray, scale: float) -> np.ndarray:
    """Add deterministic tie-breaking noise that does not depend on row order.

    Rows are ranked lexicographically and the noise for rank ``p`` comes from
    a stream keyed by a hash of the sorted data, so a row permutation of the
    input permutes the output identically.
    """
    if scale == 0:
        return z
    order = np.lexsort(z.T[::-1])
    ranked = np.ascontiguousarray(z[order])
    digest = hashlib.blake2b(ranked.tobytes(), digest_size=8).digest()
    rng = RngStream(_JITTER_SEED).child(digest.hex(), z.shape[1])
    std = np.std(ranked, axis=0)
    std = np.where(std > 0, std, 1.0)
    noise = np.empty_like(z)
    for c in range(z.shape[1]):
        noise[order, c] = rng.child("coord", c).generator().standard_normal(z.shape[0])
    return z + scale * std * noise


def ksg_mi(samples: PairedSamples, cfg: KsgConfig = KsgConfig(), method: str = "fast") -> float:
    """KSG estimate (algorithm 1) of ``I(X; Y)`` in nats.

    ``psi(k) + psi(n) - < psi(n_x + 1) + psi(n_y + 1) >`` where the joint
    radius is the max-norm distance to the k-th neighbour and the marginal
    counts are strict.  The result is not clamped at zero.

    ``method="brute"`` runs the same estimator on quadratic neighbour
    searches and exists as a reference.
    """
    n = samples.n
    k = cfg.k_neighbors
    if n <= k:
        raise ValueError(f"need more samples than neighbours: n={n}, k_neighbors={k}")
    z = jitter(np.hstack([samples.x, samples.y]), cfg.jitter_scale)
    x = np.ascontiguousarray(z[:, : samples.dx])
    y = np.ascontiguousarray(z[:, samples.dx :])
    if method == "brute":
        eps = knn_radii(z, k, method="brute")
        nx = counts_within(x, eps, method="brute")
        ny = counts_within(y, eps, method="brute")
    elif method == "fast":
        eps = knn_radii(z, k)
        nx = counts_within(x, eps)
        ny = counts_within(y, eps)
    else:
        raise ValueError(f"unknown method {method!r}")
    terms = digamma(nx + 1.0) + digamma(ny + 1.0)
    # exactly rounded sum: independent of row order
    return digamma(float(k)) + digamma(float(n)) - math.fsum(terms) / n
