"""Compiled kernels for the hot loops: grid insertion, hitting-time counters,
BFS/biconnectivity, and capped max-flow for vertex connectivity.

All kernels release the GIL so independent trials can run on real threads.
Vertex indices are 0-based throughout; the count of inserted points t is the
process time (point t has 0-based index t-1).
"""
from __future__ import annotations

import numpy as np
from numba import njit

KMAX = 8  # hitting times are tracked for k = 1..KMAX

STATUS_OK = 0
STATUS_EDGE_CAPACITY = 1
STATUS_STORE_FULL = 2
STATUS_STOPPED = 3


@njit(cache=True, nogil=True)
def _insert_batch_2d(
    pts_new, start_i,
    pts, n0, m,
    cell_head, nxt, deg,
    eoff, edst,
    r2,
    cnt_lt, bad_cnt, tau1, tau2,
    track_pairs,
    bstart, bcnt, bcap, sx, sy, sid,
    stop_kind, stop_k, stop_margin, stop_abs,
):
    """d = 2 insertion using a packed per-cell bucket store.

    Candidate scans read contiguous bucket segments (sx/sy/sid) instead of
    chasing the linked list, which keeps the hot loop memory-sequential.  The
    chain structure (cell_head/nxt) is still maintained for radius queries.
    Returns STATUS_STORE_FULL when the new point's home bucket is at
    capacity; the caller repacks and resumes.
    """
    n = n0
    ecap = edst.shape[0]
    nb = pts_new.shape[0]
    ptr = eoff[n]

    for i in range(start_i, nb):
        x = pts_new[i, 0]
        y = pts_new[i, 1]
        cx = int(x * m)
        if cx >= m:
            cx = m - 1
        cy = int(y * m)
        if cy >= m:
            cy = m - 1
        home = cx * m + cy
        if ptr + n > ecap:
            return n, i, STATUS_EDGE_CAPACITY
        if bcnt[home] >= bcap[home]:
            return n, i, STATUS_STORE_FULL
        v = n
        pts[v, 0] = x
        pts[v, 1] = y

        nn = 0
        for ox in range(-1, 2):
            gx = cx + ox
            if gx < 0:
                gx += m
            elif gx >= m:
                gx -= m
            base = gx * m
            for oy in range(-1, 2):
                gy = cy + oy
                if gy < 0:
                    gy += m
                elif gy >= m:
                    gy -= m
                cell = base + gy
                lo = bstart[cell]
                hi = lo + bcnt[cell]
                for s in range(lo, hi):
                    dx = x - sx[s]
                    if dx < 0.0:
                        dx = -dx
                    if dx > 0.5:
                        dx = 1.0 - dx
                    dy = y - sy[s]
                    if dy < 0.0:
                        dy = -dy
                    if dy > 0.5:
                        dy = 1.0 - dy
                    if dx * dx + dy * dy <= r2:
                        u = np.int64(sid[s])
                        edst[ptr] = sid[s]
                        ptr += 1
                        nn += 1
                        du = deg[u]
                        deg[u] = du + 1
                        if du + 1 <= KMAX:
                            cnt_lt[du + 1] -= 1
                        if track_pairs:
                            w = u ^ 1
                            if w < v:
                                dw = deg[w]
                                if du >= dw and du + 1 <= KMAX:
                                    bad_cnt[du + 1] -= 1

        deg[v] = nn
        eoff[v + 1] = ptr
        slot = bstart[home] + bcnt[home]
        sx[slot] = x
        sy[slot] = y
        sid[slot] = v
        bcnt[home] += 1
        nxt[v] = cell_head[home]
        cell_head[home] = v
        kk = nn + 1
        while kk <= KMAX:
            cnt_lt[kk] += 1
            kk += 1

        n = v + 1

        if track_pairs and (v & 1) == 1:
            da = deg[v - 1]
            db = deg[v]
            mx = da if da >= db else db
            kk = mx + 1
            while kk <= KMAX:
                bad_cnt[kk] += 1
                kk += 1

        for k in range(1, KMAX + 1):
            if tau1[k] == 0 and cnt_lt[k] == 0:
                tau1[k] = n
        if track_pairs and (v & 1) == 1:
            tp = (v + 1) // 2
            for k in range(1, KMAX + 1):
                if tau2[k] == 0 and bad_cnt[k] == 0:
                    tau2[k] = tp

        if stop_abs > 0 and n >= stop_abs:
            return n, i + 1, STATUS_STOPPED
        if stop_kind == 1 and tau1[stop_k] > 0 and n >= tau1[stop_k] + stop_margin:
            return n, i + 1, STATUS_STOPPED
        if stop_kind == 2 and tau2[stop_k] > 0 and n >= 2 * tau2[stop_k] + stop_margin:
            return n, i + 1, STATUS_STOPPED

    return n, nb, STATUS_OK


@njit(cache=True, nogil=True)
def repack_store(ncells, bstart, bcnt, sx, sy, sid,
                 new_start, new_sx, new_sy, new_sid):
    """Copy bucket segments into the freshly laid-out store."""
    for c in range(ncells):
        src = bstart[c]
        dst = new_start[c]
        for t in range(bcnt[c]):
            new_sx[dst + t] = sx[src + t]
            new_sy[dst + t] = sy[src + t]
            new_sid[dst + t] = sid[src + t]


@njit(cache=True, nogil=True)
def insert_batch(
    pts_new, start_i,
    pts, n0, m,
    cell_head, nxt, deg,
    eoff, edst,
    r2,
    cnt_lt, bad_cnt, tau1, tau2,
    track_pairs,
    stop_kind, stop_k, stop_margin, stop_abs,
):
    """Insert pts_new[start_i:] sequentially; return (new_n, resume_i, status).

    Maintains, incrementally:
      cnt_lt[k] = number of vertices with degree < k   (k = 1..KMAX)
      bad_cnt[k] = number of complete partner pairs (2i, 2i+1) whose two
                   members both have degree < k (only when track_pairs)
      tau1[k] latched at the first t with cnt_lt[k] == 0
      tau2[k] latched at the first pair count with bad_cnt[k] == 0

    Stops early with STATUS_EDGE_CAPACITY when edst may not hold the next
    point's edges; the caller grows the buffer and resumes from the returned
    index.
    """
    d = pts.shape[1]
    n = n0
    ecap = edst.shape[0]
    nb = pts_new.shape[0]
    ptr = eoff[n]

    offs = np.empty(d, dtype=np.int64)
    cc = np.empty(d, dtype=np.int64)

    for i in range(start_i, nb):
        if ptr + n > ecap:
            return n, i, STATUS_EDGE_CAPACITY
        v = n
        for a in range(d):
            pts[v, a] = pts_new[i, a]
            c = int(pts_new[i, a] * m)
            if c >= m:
                c = m - 1
            if c < 0:
                c = 0
            cc[a] = c

        nn = 0
        for a in range(d):
            offs[a] = -1
        while True:
            cell = 0
            for a in range(d):
                c = cc[a] + offs[a]
                if c < 0:
                    c += m
                elif c >= m:
                    c -= m
                cell = cell * m + c
            u = cell_head[cell]
            while u >= 0:
                dist2 = 0.0
                for a in range(d):
                    dx = pts[v, a] - pts[u, a]
                    if dx < 0.0:
                        dx = -dx
                    if dx > 0.5:
                        dx = 1.0 - dx
                    dist2 += dx * dx
                if dist2 <= r2:
                    edst[ptr] = u
                    ptr += 1
                    nn += 1
                    du = deg[u]
                    deg[u] = du + 1
                    if du + 1 <= KMAX:
                        cnt_lt[du + 1] -= 1
                    if track_pairs:
                        w = u ^ 1
                        if w < v:  # partner present: pair complete before now
                            dw = deg[w]
                            if du >= dw and du + 1 <= KMAX:
                                # pair max degree rose from du to du+1
                                bad_cnt[du + 1] -= 1
                u = nxt[u]
            a = 0
            while a < d:
                offs[a] += 1
                if offs[a] <= 1:
                    break
                offs[a] = -1
                a += 1
            if a == d:
                break

        deg[v] = nn
        eoff[v + 1] = ptr
        home = 0
        for a in range(d):
            home = home * m + cc[a]
        nxt[v] = cell_head[home]
        cell_head[home] = v
        kk = nn + 1
        while kk <= KMAX:
            cnt_lt[kk] += 1
            kk += 1

        n = v + 1

        if track_pairs and (v & 1) == 1:
            da = deg[v - 1]
            db = deg[v]
            mx = da if da >= db else db
            kk = mx + 1
            while kk <= KMAX:
                bad_cnt[kk] += 1
                kk += 1

        for k in range(1, KMAX + 1):
            if tau1[k] == 0 and cnt_lt[k] == 0:
                tau1[k] = n
        if track_pairs and (v & 1) == 1:
            tp = (v + 1) // 2
            for k in range(1, KMAX + 1):
                if tau2[k] == 0 and bad_cnt[k] == 0:
                    tau2[k] = tp

        if stop_abs > 0 and n >= stop_abs:
            return n, i + 1, STATUS_STOPPED
        if stop_kind == 1 and tau1[stop_k] > 0 and n >= tau1[stop_k] + stop_margin:
            return n, i + 1, STATUS_STOPPED
        if stop_kind == 2 and tau2[stop_k] > 0 and n >= 2 * tau2[stop_k] + stop_margin:
            return n, i + 1, STATUS_STOPPED

    return n, nb, STATUS_OK


@njit(cache=True, nogil=True)
def neighbors_within(q, rho, pts, n, m, cell_head, nxt, out):
    """Indices of points at torus distance <= rho from q, written into out.

    Returns the count, or -1 if out is too small.
    """
    d = pts.shape[1]
    rho2 = rho * rho
    side = 1.0 / m
    rad = int(rho / side) + 1
    cnt = 0

    cc = np.empty(d, dtype=np.int64)
    for a in range(d):
        c = int(q[a] * m)
        if c >= m:
            c = m - 1
        if c < 0:
            c = 0
        cc[a] = c

    if 2 * rad + 1 >= m:
        total = 1
        for _a in range(d):
            total *= m
        for cell in range(total):
            u = cell_head[cell]
            while u >= 0:
                dist2 = 0.0
                for a in range(d):
                    dx = q[a] - pts[u, a]
                    if dx < 0.0:
                        dx = -dx
                    if dx > 0.5:
                        dx = 1.0 - dx
                    dist2 += dx * dx
                if dist2 <= rho2:
                    if cnt >= out.shape[0]:
                        return -1
                    out[cnt] = u
                    cnt += 1
                u = nxt[u]
        return cnt

    offs = np.empty(d, dtype=np.int64)
    for a in range(d):
        offs[a] = -rad
    while True:
        cell = 0
        for a in range(d):
            c = (cc[a] + offs[a]) % m
            if c < 0:
                c += m
            cell = cell * m + c
        u = cell_head[cell]
        while u >= 0:
            dist2 = 0.0
            for a in range(d):
                dx = q[a] - pts[u, a]
                if dx < 0.0:
                    dx = -dx
                if dx > 0.5:
                    dx = 1.0 - dx
                dist2 += dx * dx
            if dist2 <= rho2:
                if cnt >= out.shape[0]:
                    return -1
                out[cnt] = u
                cnt += 1
            u = nxt[u]
        a = 0
        while a < d:
            offs[a] += 1
            if offs[a] <= rad:
                break
            offs[a] = -rad
            a += 1
        if a == d:
            break
    return cnt


@njit(cache=True, nogil=True)
def full_csr(n, eoff, edst, deg):
    """Symmetric CSR adjacency from the per-insertion (new -> old) edge lists."""
    off = np.zeros(n + 1, dtype=np.int64)
    for v in range(n):
        off[v + 1] = off[v] + deg[v]
    pos = off[:n].copy()
    adj = np.empty(off[n], dtype=np.int64)
    for v in range(n):
        for e in range(eoff[v], eoff[v + 1]):
            u = edst[e]
            adj[pos[v]] = u
            pos[v] += 1
            adj[pos[u]] = v
            pos[u] += 1
    return off, adj


@njit(cache=True, nogil=True)
def component_labels(n, off, adj):
    """Per-vertex component label = smallest vertex index in the component."""
    label = np.full(n, -1, dtype=np.int64)
    stack = np.empty(n, dtype=np.int64)
    for s in range(n):
        if label[s] >= 0:
            continue
        label[s] = s
        top = 0
        stack[top] = s
        top += 1
        while top > 0:
            top -= 1
            v = stack[top]
            for e in range(off[v], off[v + 1]):
                u = adj[e]
                if label[u] < 0:
                    label[u] = s
                    stack[top] = u
                    top += 1
    return label


@njit(cache=True, nogil=True)
def is_connected(n, off, adj):
    if n <= 1:
        return True
    seen = np.zeros(n, dtype=np.uint8)
    stack = np.empty(n, dtype=np.int64)
    seen[0] = 1
    top = 0
    stack[top] = 0
    top += 1
    cnt = 1
    while top > 0:
        top -= 1
        v = stack[top]
        for e in range(off[v], off[v + 1]):
            u = adj[e]
            if seen[u] == 0:
                seen[u] = 1
                cnt += 1
                stack[top] = u
                top += 1
    return cnt == n


@njit(cache=True, nogil=True)
def is_biconnected(n, off, adj):
    """True iff the graph is 2-connected (n >= 3, connected, no cut vertex)."""
    if n < 3:
        return False
    disc = np.full(n, -1, dtype=np.int64)
    low = np.empty(n, dtype=np.int64)
    parent = np.full(n, -1, dtype=np.int64)
    eptr = np.empty(n, dtype=np.int64)
    stack = np.empty(n, dtype=np.int64)

    timer = 0
    root = 0
    root_children = 0

    disc[root] = timer
    low[root] = timer
    timer += 1
    eptr[root] = off[root]
    top = 0
    stack[top] = root
    top += 1
    visited = 1

    while top > 0:
        v = stack[top - 1]
        if eptr[v] < off[v + 1]:
            u = adj[eptr[v]]
            eptr[v] += 1
            if disc[u] < 0:
                parent[u] = v
                if v == root:
                    root_children += 1
                disc[u] = timer
                low[u] = timer
                timer += 1
                eptr[u] = off[u]
                stack[top] = u
                top += 1
                visited += 1
            elif u != parent[v]:
                if disc[u] < low[v]:
                    low[v] = disc[u]
        else:
            top -= 1
            if top > 0:
                p = stack[top - 1]
                if low[v] < low[p]:
                    low[p] = low[v]
                if p != root and low[v] >= disc[p]:
                    return False  # p is an articulation point

    if visited != n:
        return False
    if root_children > 1:
        return False
    return True


@njit(cache=True, nogil=True)
def _dinic_at_least(nn, head, to, nxt_arc, cap, src, dst, k, level, q, it):
    """True iff max flow from src to dst is >= k (unit capacities, cap array
    already reset by the caller)."""
    flow = 0
    path_arcs = np.empty(nn, dtype=np.int64)
    while flow < k:
        for v in range(nn):
            level[v] = -1
        qh = 0
        qt = 0
        level[src] = 0
        q[qt] = src
        qt += 1
        while qh < qt:
            v = q[qh]
            qh += 1
            a = head[v]
            while a >= 0:
                if cap[a] > 0 and level[to[a]] < 0:
                    level[to[a]] = level[v] + 1
                    q[qt] = to[a]
                    qt += 1
                a = nxt_arc[a]
        if level[dst] < 0:
            break
        for v in range(nn):
            it[v] = head[v]
        while flow < k:
            cur = src
            depth = 0
            found = False
            while True:
                if cur == dst:
                    found = True
                    break
                advanced = False
                a = it[cur]
                while a >= 0:
                    if cap[a] > 0 and level[to[a]] == level[cur] + 1:
                        it[cur] = a
                        path_arcs[depth] = a
                        depth += 1
                        cur = to[a]
                        advanced = True
                        break
                    a = nxt_arc[a]
                    it[cur] = a
                if advanced:
                    continue
                level[cur] = -1
                if depth == 0:
                    break
                depth -= 1
                cur = to[path_arcs[depth] ^ 1]
            if not found:
                break
            for i in range(depth):
                a = path_arcs[i]
                cap[a] -= 1
                cap[a ^ 1] += 1
            flow += 1
    return flow >= k


@njit(cache=True, nogil=True)
def vertex_connectivity_at_least(n, off, adj, k):
    """Exact test that vertex connectivity is >= k via vertex-split max-flow.

    Even-Tarjan selection: W = the first k vertices; test min-cut >= k from
    every w in W to every vertex non-adjacent to w.  The caller guarantees
    n > k and min degree >= k.
    """
    nn = 2 * n
    nedges = off[n] // 2
    narcs = 2 * n + 4 * nedges

    head = np.full(nn, -1, dtype=np.int64)
    to = np.empty(narcs, dtype=np.int64)
    nxt_arc = np.empty(narcs, dtype=np.int64)
    cap = np.empty(narcs, dtype=np.int64)

    # arcs 2v, 2v+1: v_in -> v_out and reverse (v_in = 2v, v_out = 2v + 1)
    cnt = 0
    for v in range(n):
        to[cnt] = 2 * v + 1
        nxt_arc[cnt] = head[2 * v]
        head[2 * v] = cnt
        cnt += 1
        to[cnt] = 2 * v
        nxt_arc[cnt] = head[2 * v + 1]
        head[2 * v + 1] = cnt
        cnt += 1
    # per undirected edge {v,u}: v_out -> u_in (+rev), u_out -> v_in (+rev)
    for v in range(n):
        for e in range(off[v], off[v + 1]):
            u = adj[e]
            if u > v:
                to[cnt] = 2 * u
                nxt_arc[cnt] = head[2 * v + 1]
                head[2 * v + 1] = cnt
                cnt += 1
                to[cnt] = 2 * v + 1
                nxt_arc[cnt] = head[2 * u]
                head[2 * u] = cnt
                cnt += 1
                to[cnt] = 2 * v
                nxt_arc[cnt] = head[2 * u + 1]
                head[2 * u + 1] = cnt
                cnt += 1
                to[cnt] = 2 * u + 1
                nxt_arc[cnt] = head[2 * v]
                head[2 * v] = cnt
                cnt += 1

    level = np.empty(nn, dtype=np.int64)
    q = np.empty(nn, dtype=np.int64)
    it = np.empty(nn, dtype=np.int64)
    mark = np.zeros(n, dtype=np.uint8)

    wsize = k if k < n else n
    for w in range(wsize):
        for v in range(n):
            mark[v] = 0
        mark[w] = 1
        for e in range(off[w], off[w + 1]):
            mark[adj[e]] = 1
        for v in range(n):
            if mark[v] == 0:
                for a in range(narcs):
                    cap[a] = 1 if (a & 1) == 0 else 0
                if not _dinic_at_least(nn, head, to, nxt_arc, cap,
                                       2 * w + 1, 2 * v, k, level, q, it):
                    return False
    return True


@njit(cache=True, nogil=True)
def masked_grid_components(mask, m, d, deltas, guaranteed, check_points,
                           cube_start, cube_cnt, spts, r2):
    """Connected-component labels of masked grid cells on the torus.

    Cells v, w are adjacent when w = v + delta (mod m per axis) for some row
    of `deltas` and either guaranteed[o] holds (pure geometry) or, when
    `check_points`, every cross pair of the two cells' points (slices of
    `spts` given by cube_start/cube_cnt) is within sqrt(r2).  Labels equal
    the smallest cell id in the component; unmasked cells get -1.
    """
    ncells = mask.shape[0]
    label = np.full(ncells, -1, dtype=np.int64)
    stack = np.empty(ncells, dtype=np.int64)
    coords = np.empty(d, dtype=np.int64)
    for seed in range(ncells):
        if not mask[seed] or label[seed] >= 0:
            continue
        label[seed] = seed
        top = 0
        stack[top] = seed
        top += 1
        while top > 0:
            top -= 1
            v = stack[top]
            tmp = v
            for a in range(d - 1, -1, -1):
                coords[a] = tmp % m
                tmp //= m
            for o in range(deltas.shape[0]):
                w = 0
                for a in range(d):
                    cc = (coords[a] + deltas[o, a]) % m
                    if cc < 0:
                        cc += m
                    w = w * m + cc
                if not mask[w] or label[w] >= 0:
                    continue
                ok = guaranteed[o]
                if (not ok) and check_points:
                    if cube_cnt[v] == 0 or cube_cnt[w] == 0:
                        ok = False
                    else:
                        ok = True
                        for s1 in range(cube_start[v], cube_start[v] + cube_cnt[v]):
                            for s2 in range(cube_start[w], cube_start[w] + cube_cnt[w]):
                                dist2 = 0.0
                                for a in range(d):
                                    dx = spts[s1, a] - spts[s2, a]
                                    if dx < 0.0:
                                        dx = -dx
                                    if dx > 0.5:
                                        dx = 1.0 - dx
                                    dist2 += dx * dx
                                if dist2 > r2:
                                    ok = False
                                    break
                            if not ok:
                                break
                if ok:
                    label[w] = seed
                    stack[top] = w
                    top += 1
    return label
