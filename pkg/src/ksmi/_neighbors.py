"""Compiled max-norm neighbour counting kernels used by the KSG estimator.

Both kernels evaluate ``|a - b| < r`` with exactly the same floating-point
operations as a brute-force double loop, so their counts are identical to
the quadratic reference (not merely close).
"""

import math

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def count_sorted_1d(values, radii):
    """Count, for each i, the j != i with ``|v_j - v_i| < radii[i]`` (1-D)."""
    n = values.shape[0]
    order = np.argsort(values, kind="mergesort")
    s = values[order]
    out = np.empty(n, dtype=np.int64)
    for a in range(n):
        v = s[a]
        e = radii[order[a]]
        # v - s[j] < e is monotone along the sorted prefix, s[j] - v along the suffix
        lo = 0
        hi = a
        while lo < hi:
            mid = (lo + hi) // 2
            if v - s[mid] < e:
                hi = mid
            else:
                lo = mid + 1
        first = lo
        lo = a
        hi = n
        while lo < hi:
            mid = (lo + hi) // 2
            if s[mid] - v < e:
                lo = mid + 1
            else:
                hi = mid
        cnt = lo - first - 1
        out[order[a]] = cnt if cnt > 0 else 0
    return out


@njit(cache=True, nogil=True)
def _cell_of(x, lo, h, size):
    q = int(math.floor((x - lo) / h))
    if q < 0:
        return 0
    if q >= size:
        return size - 1
    return q


@njit(cache=True, nogil=True)
def count_grid(points, radii, h, lo, shape):
    """Multi-dimensional version of :func:`count_sorted_1d` on a uniform grid.

    Cell membership only prunes candidates (with one cell of slack on each
    side); cells lying inside the query box by a clear margin are counted
    whole and every other candidate is tested exactly.
    """
    n, d = points.shape
    ncell = 1
    for c in range(d):
        ncell *= shape[c]
    cid = np.empty(n, dtype=np.int64)
    for i in range(n):
        idx = 0
        for c in range(d):
            idx = idx * shape[c] + _cell_of(points[i, c], lo[c], h, shape[c])
        cid[i] = idx
    start = np.zeros(ncell + 1, dtype=np.int64)
    for i in range(n):
        start[cid[i] + 1] += 1
    for c in range(ncell):
        start[c + 1] += start[c]
    fill = start[:-1].copy()
    perm = np.empty(n, dtype=np.int64)
    for i in range(n):
        perm[fill[cid[i]]] = i
        fill[cid[i]] += 1
    sp = np.empty((n, d))
    for p in range(n):
        for c in range(d):
            sp[p, c] = points[perm[p], c]

    out = np.empty(n, dtype=np.int64)
    qlo = np.empty(d, dtype=np.int64)
    qhi = np.empty(d, dtype=np.int64)
    ilo = np.empty(d, dtype=np.int64)
    ihi = np.empty(d, dtype=np.int64)
    cur = np.empty(d, dtype=np.int64)
    for i in range(n):
        e = radii[i]
        for c in range(d):
            x = points[i, c]
            a = _cell_of(x - e, lo[c], h, shape[c]) - 1
            b = _cell_of(x + e, lo[c], h, shape[c]) + 1
            qlo[c] = a if a > 0 else 0
            qhi[c] = b if b < shape[c] else shape[c] - 1
            cur[c] = qlo[c]
            # cells whose closure lies inside (x - e, x + e) with a safety
            # margin; edge cells are clamped catch-alls and never qualify
            margin = 1e-9 * (abs(x) + abs(lo[c]) + e + h)
            ilo[c] = max(1, int(math.ceil((x - e + margin - lo[c]) / h)))
            ihi[c] = min(shape[c] - 2, int(math.floor((x + e - margin - lo[c]) / h)) - 1)
        cnt = 0
        while True:
            cell = 0
            whole = True
            for c in range(d):
                cell = cell * shape[c] + cur[c]
                if cur[c] < ilo[c] or cur[c] > ihi[c]:
                    whole = False
            if whole:
                cnt += start[cell + 1] - start[cell]
            else:
                for p in range(start[cell], start[cell + 1]):
                    inside = True
                    for c in range(d):
                        if abs(sp[p, c] - points[i, c]) >= e:
                            inside = False
                            break
                    if inside:
                        cnt += 1
            c = d - 1
            while c >= 0:
                cur[c] += 1
                if cur[c] <= qhi[c]:
                    break
                cur[c] = qlo[c]
                c -= 1
            if c < 0:
                break
        # the point itself is inside whenever e > 0
        out[i] = cnt - 1 if e > 0 else cnt
    return out


def counts_within_radii(points: np.ndarray, radii: np.ndarray) -> np.ndarray:
    """Vectorised strict max-norm neighbour counts (self excluded)."""
    points = np.ascontiguousarray(points, dtype=np.float64)
    radii = np.ascontiguousarray(radii, dtype=np.float64)
    n, d = points.shape
    if d == 1:
        return count_sorted_1d(points[:, 0].copy(), radii)
    lo = points.min(axis=0)
    span = points.max(axis=0) - lo
    pos = radii[radii > 0]
    h = 0.35 * float(np.median(pos)) if pos.size else 0.0
    wide = float(span.max())
    if not h > 0:
        h = wide / max(n, 1) ** (1.0 / d) if wide > 0 else 1.0
    # keep the grid at most ~4n cells
    while np.prod(np.floor(span / h) + 1) > 4 * n + 16:
        h *= 1.5
    shape = (np.floor(span / h) + 1).astype(np.int64)
    return count_grid(points, radii, h, lo, shape)
