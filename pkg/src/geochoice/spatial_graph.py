"""Incrementally grown geometric graph on the torus with a uniform-grid index.

The graph is append-only: inserting point number t creates every edge between
it and the points at torus distance <= r (closed condition) among the first
t-1.  Vertices are 0-based; `insert_point` returns the new size t, which is
also the 1-based index of the point just inserted.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import _kernels
from ._kernels import KMAX, STATUS_EDGE_CAPACITY
from .geometry import DomainError, GeoParams, canonical_point


class UsageError(ValueError):
    """The caller violated an operation precondition."""


@dataclass(frozen=True)
class SeparatedSet:
    """A vertex set with at most `neighbor_count` neighbours outside it."""

    vertices: frozenset
    neighbor_count: int


class DynamicGeoGraph:
    """Geometric graph G_t grown one point at a time.

    Besides adjacency, the insertion kernel maintains the counters needed for
    hitting times: the number of vertices of degree < k and, when
    ``track_pairs`` is set, the number of consecutive-index partner pairs
    whose two members both have degree < k.  tau1[k]/tau2[k] latch the first
    time those counters hit zero (0 means "not yet").
    """

    def __init__(self, params: GeoParams, expected_points: int = 1024,
                 track_pairs: bool = False, expected_edges: int | None = None):
        self.params = params
        self.track_pairs = bool(track_pairs)
        m = int(1.0 / params.r)
        self.m = max(m, 1)
        self.n = 0
        cap = max(16, int(expected_points))
        self._pts = np.empty((cap, params.d), dtype=np.float64)
        self._nxt = np.empty(cap, dtype=np.int64)
        self._deg = np.zeros(cap, dtype=np.int64)
        self._eoff = np.zeros(cap + 1, dtype=np.int64)
        if expected_edges is None:
            ecap = max(64, 4 * cap)
        else:
            ecap = max(64, int(expected_edges) + cap)
        self._edst = np.empty(ecap, dtype=np.int32)
        self._cell_head = np.full(self.m ** params.d, -1, dtype=np.int64)
        self.cnt_lt = np.zeros(KMAX + 1, dtype=np.int64)
        self.bad_cnt = np.zeros(KMAX + 1, dtype=np.int64)
        self.tau1 = np.zeros(KMAX + 1, dtype=np.int64)
        self.tau2 = np.zeros(KMAX + 1, dtype=np.int64)
        self._csr = None
        if params.d == 2:
            ncells = self.m * self.m
            per_cell = max(4, (2 * cap) // ncells + 1)
            self._bcap = np.full(ncells, per_cell, dtype=np.int64)
            self._bstart = np.concatenate(
                ([0], np.cumsum(self._bcap)[:-1])).astype(np.int64)
            self._bcnt = np.zeros(ncells, dtype=np.int64)
            store = int(self._bcap.sum())
            self._sx = np.empty(store, dtype=np.float64)
            self._sy = np.empty(store, dtype=np.float64)
            self._sid = np.empty(store, dtype=np.int32)

    # -- capacity management -------------------------------------------------

    def _ensure_points_capacity(self, extra: int):
        need = self.n + extra
        cap = self._pts.shape[0]
        if need <= cap:
            return
        new_cap = max(need, 2 * cap)
        self._pts = np.resize(self._pts, (new_cap, self.params.d))
        self._nxt = np.resize(self._nxt, new_cap)
        deg = np.zeros(new_cap, dtype=np.int64)
        deg[:self.n] = self._deg[:self.n]
        self._deg = deg
        eoff = np.zeros(new_cap + 1, dtype=np.int64)
        eoff[:self.n + 1] = self._eoff[:self.n + 1]
        self._eoff = eoff

    def _grow_edges(self, headroom: int):
        new_cap = max(2 * self._edst.shape[0], self._eoff[self.n] + headroom)
        edst = np.empty(new_cap, dtype=np.int32)
        edst[:self._eoff[self.n]] = self._edst[:self._eoff[self.n]]
        self._edst = edst

    def _repack_store(self):
        """Re-lay out the d=2 bucket store with doubled per-cell headroom."""
        ncells = self.m * self.m
        new_cap = np.maximum(4, 2 * self._bcnt)
        new_start = np.concatenate(([0], np.cumsum(new_cap)[:-1])).astype(np.int64)
        store = int(new_cap.sum())
        new_sx = np.empty(store, dtype=np.float64)
        new_sy = np.empty(store, dtype=np.float64)
        new_sid = np.empty(store, dtype=np.int32)
        _kernels.repack_store(ncells, self._bstart, self._bcnt,
                              self._sx, self._sy, self._sid,
                              new_start, new_sx, new_sy, new_sid)
        self._bstart, self._bcap = new_start, new_cap
        self._sx, self._sy, self._sid = new_sx, new_sy, new_sid

    # -- insertion -----------------------------------------------------------

    def insert_point(self, p) -> int:
        """Insert one point (canonicalized); return the new size t."""
        return self.insert_batch(canonical_point(p).reshape(1, -1))

    def insert_batch(self, pts, stop_kind: int = 0, stop_k: int = 0,
                     stop_margin: int = 0, stop_abs: int = 0) -> int:
        """Insert the rows of `pts` in order; return the new size t.

        Optional early stop, checked after every insertion: stop_abs halts at
        an absolute size; stop_kind 1 halts once n >= tau1[stop_k] +
        stop_margin, stop_kind 2 once n >= 2 * tau2[stop_k] + stop_margin.
        Remaining rows are discarded when the stop fires.
        """
        pts = np.ascontiguousarray(pts, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != self.params.d:
            raise UsageError(
                f"expected shape (n, {self.params.d}), got {pts.shape}")
        self._ensure_points_capacity(pts.shape[0])
        i = 0
        while i < pts.shape[0]:
            if self.params.d == 2:
                n, i, status = _kernels._insert_batch_2d(
                    pts, i,
                    self._pts, self.n, self.m,
                    self._cell_head, self._nxt, self._deg,
                    self._eoff, self._edst,
                    self.params.r * self.params.r,
                    self.cnt_lt, self.bad_cnt, self.tau1, self.tau2,
                    self.track_pairs,
                    self._bstart, self._bcnt, self._bcap,
                    self._sx, self._sy, self._sid,
                    stop_kind, stop_k, stop_margin, stop_abs,
                )
            else:
                n, i, status = _kernels.insert_batch(
                    pts, i,
                    self._pts, self.n, self.m,
                    self._cell_head, self._nxt, self._deg,
                    self._eoff, self._edst,
                    self.params.r * self.params.r,
                    self.cnt_lt, self.bad_cnt, self.tau1, self.tau2,
                    self.track_pairs,
                    stop_kind, stop_k, stop_margin, stop_abs,
                )
            self.n = int(n)
            if status == STATUS_EDGE_CAPACITY:
                self._grow_edges(headroom=2 * self.n + 64)
            elif status == _kernels.STATUS_STORE_FULL:
                self._repack_store()
            elif status == _kernels.STATUS_STOPPED:
                break
        self._csr = None
        return self.n

    # -- views ---------------------------------------------------------------

    @property
    def points(self) -> np.ndarray:
        return self._pts[:self.n]

    @property
    def degrees(self) -> np.ndarray:
        return self._deg[:self.n]

    @property
    def num_edges(self) -> int:
        return int(self._eoff[self.n])

    def edge_list(self) -> np.ndarray:
        """(E, 2) array of edges as (later index, earlier index)."""
        n = self.n
        srcs = np.repeat(np.arange(n, dtype=np.int64),
                         np.diff(self._eoff[:n + 1]))
        return np.column_stack([srcs, self._edst[:self._eoff[n]].astype(np.int64)])

    def adjacency(self):
        """Full symmetric CSR (off, adj); cached until the next insertion."""
        if self._csr is None:
            self._csr = _kernels.full_csr(
                self.n, self._eoff, self._edst, self._deg)
        return self._csr

    def neighbors(self, v: int) -> np.ndarray:
        off, adj = self.adjacency()
        return adj[off[v]:off[v + 1]]

    # -- queries -------------------------------------------------------------

    def neighbors_within(self, p, rho: float) -> np.ndarray:
        """All vertex indices at torus distance <= rho from p."""
        if rho > 30 * self.params.d * self.params.r and rho > 3.0 / self.m:
            raise UsageError(
                f"rho={rho} exceeds the grid-supported radius "
                f"(30*d*r = {30 * self.params.d * self.params.r}); rebuild the index")
        p = canonical_point(p)
        out = np.empty(max(64, self.n), dtype=np.int64)
        cnt = _kernels.neighbors_within(
            p, float(rho), self._pts, self.n, self.m,
            self._cell_head, self._nxt, out)
        if cnt < 0:  # out was too small (cannot happen with n-sized buffer)
            raise RuntimeError("neighbor buffer overflow")
        res = out[:cnt]
        res.sort()
        return res

    def connected_components(self):
        """List of sorted index arrays, ordered by smallest member."""
        if self.n == 0:
            return []
        off, adj = self.adjacency()
        labels = _kernels.component_labels(self.n, off, adj)
        reps = np.unique(labels)
        order = np.argsort(labels, kind="stable")
        sorted_labels = labels[order]
        bounds = np.searchsorted(sorted_labels, reps)
        out = []
        for i, rep in enumerate(reps):
            hi = bounds[i + 1] if i + 1 < len(reps) else self.n
            out.append(np.sort(order[bounds[i]:hi]))
        return out

    def min_degree_vertexset(self, bound: int) -> np.ndarray:
        """Vertices of degree <= bound."""
        return np.nonzero(self._deg[:self.n] <= bound)[0]

    def low_degree_count(self, k: int) -> int:
        """Number of vertices with degree < k (k <= KMAX is tracked)."""
        if 1 <= k <= KMAX:
            return int(self.cnt_lt[k])
        return int(np.count_nonzero(self._deg[:self.n] < k))

    def snapshot_csr(self, t: int):
        """Full symmetric CSR of the prefix graph G_t (first t insertions)."""
        if not (0 <= t <= self.n):
            raise UsageError(f"snapshot time {t} outside [0, {self.n}]")
        eoff = self._eoff[:t + 1]
        deg_t = np.bincount(self._edst[:eoff[t]], minlength=t).astype(np.int64)
        if t > 0:
            deg_t += np.diff(eoff)
        return _kernels.full_csr(t, self._eoff, self._edst, deg_t)

    def prefix_degrees(self, t: int) -> np.ndarray:
        """Vertex degrees in the prefix graph G_t."""
        eoff = self._eoff[:t + 1]
        deg_t = np.bincount(self._edst[:eoff[t]], minlength=t).astype(np.int64)
        if t > 0:
            deg_t += np.diff(eoff)
        return deg_t

    def is_k_connected(self, k: int, t: int | None = None) -> bool:
        """Exact vertex connectivity >= k test (of G_t when t is given).

        k = 1 by BFS, k = 2 by articulation points, k >= 3 by vertex-split
        max-flow with flow capped at k (Even-Tarjan vertex selection).
        A graph on n vertices is k-connected only if n > k.
        """
        if k < 1:
            raise UsageError(f"k must be >= 1, got {k}")
        n = self.n if t is None else int(t)
        if n <= k:
            return False
        if t is None or t == self.n:
            degs = self._deg[:n]
            off, adj = self.adjacency()
        else:
            degs = self.prefix_degrees(n)
            off, adj = self.snapshot_csr(n)
        if int(degs.min()) < k:
            return False
        if k == 1:
            return bool(_kernels.is_connected(n, off, adj))
        if k == 2:
            return bool(_kernels.is_biconnected(n, off, adj))
        return bool(_kernels.vertex_connectivity_at_least(n, off, adj, k))

    def find_separated_sets(self, kappa: int, pool, max_size: int):
        """Inclusion-minimal subsets S of `pool`, |S| <= max_size, with at
        most kappa neighbours outside S (neighbours range over the whole
        graph, not just the pool)."""
        pool = sorted(int(v) for v in pool)
        if len(pool) > 64:
            raise UsageError(f"pool of {len(pool)} vertices is too large "
                             "for exhaustive separated-set search (max 64)")
        from itertools import combinations
        total = 0
        found: list[SeparatedSet] = []
        found_sets: list[frozenset] = []
        off, adj = self.adjacency()
        for size in range(1, max_size + 1):
            for combo in combinations(pool, size):
                total += 1
                if total > 2_000_000:
                    raise UsageError("separated-set search budget exceeded; "
                                     "restrict the pool or max_size")
                s = frozenset(combo)
                if any(prev <= s for prev in found_sets):
                    continue  # not inclusion-minimal
                nbrs = set()
                for v in combo:
                    nbrs.update(int(u) for u in adj[off[v]:off[v + 1]])
                nbrs -= s
                if len(nbrs) <= kappa:
                    found.append(SeparatedSet(s, len(nbrs)))
                    found_sets.append(s)
        return found

    # -- export ----------------------------------------------------------

    def export_csv(self, points_path, edges_path):
        """Debug snapshot: points (index, x1..xd) and edge list (i, j)."""
        d = self.params.d
        with open(points_path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["index"] + [f"x{a + 1}" for a in range(d)])
            for v in range(self.n):
                w.writerow([v] + [f"{x:.17g}" for x in self._pts[v]])
        with open(edges_path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["i", "j"])
            for i, j in self.edge_list():
                w.writerow([int(i), int(j)])


def brute_force_edges(points, r: float):
    """O(n^2) reference edge set {(i, j): i > j, torus distance <= r}."""
    pts = np.asarray(points, dtype=np.float64)
    n = pts.shape[0]
    edges = set()
    for i in range(n):
        delta = np.abs(pts[:i] - pts[i]) % 1.0
        delta = np.minimum(delta, 1.0 - delta)
        close = np.nonzero((delta * delta).sum(axis=1) <= r * r)[0]
        for j in close:
            edges.add((i, int(j)))
    return edges
