"""Incremental density model over recent feature vectors, plus batch DBSCAN.

The streaming side labels each arriving vector Inlier or Outlier by counting
retained neighbors within epsilon (Euclidean), then inserts it into a
bounded FIFO reservoir. The per-event scan is a single fused kernel
(JIT-compiled when numba is available, vectorized numpy otherwise) that
counts neighbors, finds the nearest core neighbor, applies the arrival-side
neighbor-count increments, and stores the new vector.

Neighbor counts gain increments as new points arrive. Losses from FIFO
eviction are not propagated (the evicted point's neighbor set is not
stored); this staleness can only inflate the informational core flags and
cluster ids -- the Inlier/Outlier partition always uses the exact, freshly
scanned neighbor count of the incoming vector.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .types import ClusterAssignment, FeatureVector, FEATURE_COUNT

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    _HAVE_NUMBA = False


# once density is confirmed (count >= min_pts) the scan may stop at the
# next chunk boundary; chunks keep the inner loop vectorizable. The most
# recently inserted chunk is scanned first -- recent behavior is where an
# entity's neighbors almost always are -- so dense traffic usually stops
# after one chunk.
_SCAN_CHUNK = 256


def _chunk_bounds(n: int) -> list[tuple[int, int]]:
    first_lo = n - _SCAN_CHUNK
    if first_lo <= 0:
        return [(0, n)] if n else []
    bounds = [(first_lo, n)]
    for lo in range(0, first_lo, _SCAN_CHUNK):
        bounds.append((lo, min(lo + _SCAN_CHUNK, first_lo)))
    return bounds


def _scan_insert_numpy(pts, counts, n, slot, x, thr, min_pts, scan_all):
    """Count neighbors of x, locate its nearest core neighbor, bump arrival
    counts, store x at slot. Returns (neighbor_count, core_idx or -1).

    When scan_all is false the scan stops at the first chunk boundary where
    min_pts neighbors have been seen (the Inlier/Outlier decision is already
    fixed at that point); the reported count is then a lower bound."""
    cnt, best = 0, -1
    bestd = np.inf
    for lo, hi in _chunk_bounds(n):
        diff = pts[lo:hi] - x
        d2 = np.einsum("ij,ij->i", diff, diff)
        mask = d2 <= thr
        core = mask & (counts[lo:hi] >= min_pts)
        idx = np.flatnonzero(core)
        if idx.size:
            j = int(idx[np.argmin(d2[idx])])
            if d2[j] < bestd:
                bestd = float(d2[j])
                best = lo + j
        cnt += int(np.count_nonzero(mask))
        np.add(counts[lo:hi], mask, out=counts[lo:hi], casting="unsafe")
        if not scan_all and cnt >= min_pts:
            break
    pts[slot] = x
    counts[slot] = cnt
    return cnt, best


if _HAVE_NUMBA:

    @njit(cache=True)
    def _scan_insert_12(pts, counts, n, slot, x, thr, min_pts, scan_all):  # pragma: no cover
        # unrolled for the fixed 12-wide feature vector; branch-free inner
        # sum so the loop vectorizes within each chunk
        x0 = x[0]; x1 = x[1]; x2 = x[2]; x3 = x[3]
        x4 = x[4]; x5 = x[5]; x6 = x[6]; x7 = x[7]
        x8 = x[8]; x9 = x[9]; x10 = x[10]; x11 = x[11]
        cnt = 0
        best = -1
        bestd = 1e300
        first_lo = n - _SCAN_CHUNK
        if first_lo < 0:
            first_lo = 0
        seg = 0
        lo = first_lo
        hi = n
        while hi > lo:
            for i in range(lo, hi):
                r = pts[i]
                t0 = r[0] - x0; t1 = r[1] - x1; t2 = r[2] - x2; t3 = r[3] - x3
                t4 = r[4] - x4; t5 = r[5] - x5; t6 = r[6] - x6; t7 = r[7] - x7
                t8 = r[8] - x8; t9 = r[9] - x9; t10 = r[10] - x10; t11 = r[11] - x11
                d = (t0 * t0 + t1 * t1 + t2 * t2 + t3 * t3
                     + t4 * t4 + t5 * t5 + t6 * t6 + t7 * t7
                     + t8 * t8 + t9 * t9 + t10 * t10 + t11 * t11)
                if d <= thr:
                    cnt += 1
                    if counts[i] >= min_pts and d < bestd:
                        bestd = d
                        best = i
                    counts[i] += 1
            if not scan_all and cnt >= min_pts:
                break
            # advance through the remaining (older) chunks in order
            lo = seg * _SCAN_CHUNK
            hi = lo + _SCAN_CHUNK
            if hi > first_lo:
                hi = first_lo
            seg += 1
        pts[slot] = x
        counts[slot] = cnt
        return cnt, best


def warm_kernel() -> None:
    """Trigger JIT compilation/cache load outside any latency-sensitive path."""
    ref = ReferenceSet(2)
    assign_raw(np.zeros(FEATURE_COUNT), ref, 0.1, 1)


def _as_array(x: FeatureVector | np.ndarray | list | tuple) -> np.ndarray:
    if isinstance(x, np.ndarray):
        return x
    if isinstance(x, FeatureVector):
        return np.asarray(x.values, dtype=np.float64)
    return np.asarray(x, dtype=np.float64)


class ReferenceSet:
    """FIFO reservoir of up to ``capacity`` vectors with density bookkeeping.

    One instance per entity: an entity's density context is its own recent
    behavior, which keeps every entity's verdicts independent of how other
    entities interleave or shard.
    """

    __slots__ = ("capacity", "dim", "size", "_next", "pts", "counts", "ids",
                 "_next_cluster_id", "_use_kernel", "exact_counts")

    def __init__(self, capacity: int, dim: int = FEATURE_COUNT,
                 exact_counts: bool = False):
        self.capacity = capacity
        self.dim = dim
        self.size = 0
        self._next = 0
        self.pts = np.empty((capacity, dim), dtype=np.float64)
        self.counts = np.zeros(capacity, dtype=np.int32)
        self.ids = np.full(capacity, -1, dtype=np.int32)
        self._next_cluster_id = 0
        self._use_kernel = _HAVE_NUMBA and dim == FEATURE_COUNT
        # exact_counts forces full scans so reported neighbor counts are the
        # true cardinality (diagnostics); decisions never need it
        self.exact_counts = exact_counts

    def __len__(self) -> int:
        return self.size

    def retained(self) -> np.ndarray:
        """Currently retained vectors (copy, slot order)."""
        return self.pts[: self.size].copy()

    def core_flags(self, min_pts: int) -> np.ndarray:
        """Per retained point: has it seen >= min_pts neighbors (slot order)."""
        return self.counts[: self.size] >= min_pts

    def fresh_cluster_id(self) -> int:
        cid = self._next_cluster_id
        self._next_cluster_id += 1
        return cid


def assign_raw(
    vec: np.ndarray,
    ref: ReferenceSet,
    epsilon: float,
    min_pts: int,
) -> tuple[bool, int, int]:
    """Core of assign() without the wrapper object: returns
    (outlier, cluster_id or -1, neighbor_count) and inserts vec."""
    n = ref.size
    if n < ref.capacity:
        slot = n
        ref.size = n + 1
    else:
        slot = ref._next
        ref._next = slot + 1
        if ref._next == ref.capacity:
            ref._next = 0
    scan = _scan_insert_12 if ref._use_kernel else _scan_insert_numpy
    cnt, best = scan(ref.pts, ref.counts, n, slot, vec,
                     epsilon * epsilon, min_pts, ref.exact_counts)

    if cnt >= min_pts:
        if best >= 0:
            cid = int(ref.ids[best])
            if cid < 0:
                cid = ref.fresh_cluster_id()
                ref.ids[best] = cid
        else:
            cid = ref.fresh_cluster_id()
        ref.ids[slot] = cid
        return False, cid, cnt
    ref.ids[slot] = -1
    return True, -1, cnt


def assign(
    x: FeatureVector | np.ndarray,
    ref: ReferenceSet,
    epsilon: float,
    min_pts: int,
) -> ClusterAssignment:
    """Label x against the reservoir, then insert it (evicting the oldest).

    Inlier when at least min_pts retained points lie within epsilon; the
    cluster id is the nearest core neighbor's (a fresh id when the dense
    neighborhood has no core point yet). Outlier otherwise. The point about
    to be evicted still counts: it is retained until x is stored.

    The reported neighbor_count is exact for outliers and for reservoirs
    constructed with exact_counts=True; otherwise counting may stop at the
    chunk boundary where the density threshold was confirmed.
    """
    outlier, cid, cnt = assign_raw(_as_array(x), ref, epsilon, min_pts)
    if outlier:
        return ClusterAssignment.make_outlier(cnt)
    return ClusterAssignment.inlier(cid, cnt)


@dataclass
class BatchClustering:
    """Exact DBSCAN labels for a static point set (None = outlier)."""

    labels: list[int | None]

    @property
    def n_clusters(self) -> int:
        ids = {c for c in self.labels if c is not None}
        return len(ids)

    def outlier_indices(self) -> list[int]:
        return [i for i, c in enumerate(self.labels) if c is None]


def _pairwise_sq(points: np.ndarray, chunk: int = 128) -> np.ndarray:
    n = points.shape[0]
    out = np.empty((n, n), dtype=np.float64)
    for a in range(0, n, chunk):
        b = min(a + chunk, n)
        diff = points[a:b, None, :] - points[None, :, :]
        out[a:b] = np.einsum("ijk,ijk->ij", diff, diff)
    return out


def dbscan_batch(
    points: list[FeatureVector] | list[np.ndarray] | np.ndarray,
    epsilon: float,
    min_pts: int,
) -> BatchClustering:
    """Textbook DBSCAN over a static set; deterministic given input order.

    Neighborhoods are self-inclusive (a point counts itself), core points
    need min_pts neighbors, and cluster ids are assigned in first-core-point
    order with breadth-first expansion over core neighborhoods.
    """
    if isinstance(points, np.ndarray):
        arr = points.astype(np.float64, copy=False)
    else:
        arr = np.asarray([_as_array(p) for p in points], dtype=np.float64)
    n = arr.shape[0]
    if n == 0:
        return BatchClustering(labels=[])

    d2 = _pairwise_sq(arr)
    adj = d2 <= epsilon * epsilon
    degrees = adj.sum(axis=1)
    core = degrees >= min_pts

    labels: list[int | None] = [None] * n
    visited = np.zeros(n, dtype=bool)
    next_id = 0
    for start in range(n):
        if visited[start] or not core[start]:
            continue
        cid = next_id
        next_id += 1
        queue = deque([start])
        visited[start] = True
        labels[start] = cid
        while queue:
            p = queue.popleft()
            for q in np.flatnonzero(adj[p]):
                q = int(q)
                if labels[q] is None:
                    labels[q] = cid
                if not visited[q] and core[q]:
                    visited[q] = True
                    queue.append(q)
    return BatchClustering(labels=labels)
