"""Coarse and fine cube tessellations of the torus with the label machinery:
M-fullness, nonfull-component structure, sea/close/far regions, blow-ups,
annuli, remote sets, and the deterministic annulus-core region built from a
connected fine-cube set's extremal skeleton.

Adjacency conventions between cubes (centre-to-centre):

  component graph   l_infinity distance <= 4r  (groups nonfull cubes)
  region graph      three modes, see `classify_regions`
  fine graph        Euclidean distance <= 2r   (groups fine cubes)
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import maximum_filter
from scipy.spatial import cKDTree

from . import _kernels
from .geometry import DomainError, GeoParams
from .spatial_graph import UsageError

REGION_SEA = 0
REGION_CLOSE = 1
REGION_FAR = 2


class ConfigError(ValueError):
    """Tessellation parameters are inconsistent with the radius."""


class RegimeError(RuntimeError):
    """The asymptotic regime's structure is absent at this scale."""


@dataclass(frozen=True)
class CoarseTess:
    params: GeoParams
    c: float
    m_side: int
    side: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "side", 1.0 / self.m_side)

    @property
    def ncubes(self) -> int:
        return self.m_side ** self.params.d

    def cube_of(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        cells = np.minimum((pts * self.m_side).astype(np.int64), self.m_side - 1)
        out = cells[:, 0]
        for a in range(1, self.params.d):
            out = out * self.m_side + cells[:, a]
        return out

    def coords_of(self, ids) -> np.ndarray:
        ids = np.atleast_1d(np.asarray(ids, dtype=np.int64))
        d = self.params.d
        out = np.empty((ids.shape[0], d), dtype=np.int64)
        tmp = ids.copy()
        for a in range(d - 1, -1, -1):
            out[:, a] = tmp % self.m_side
            tmp //= self.m_side
        return out

    def centers_of(self, ids) -> np.ndarray:
        return (self.coords_of(ids) + 0.5) * self.side


@dataclass(frozen=True)
class FineTess:
    coarse: CoarseTess
    factor: int
    m_side: int = field(init=False)
    side: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "m_side", self.coarse.m_side * self.factor)
        object.__setattr__(self, "side", self.coarse.side / self.factor)

    @property
    def params(self) -> GeoParams:
        return self.coarse.params

    @property
    def ncubes(self) -> int:
        return self.m_side ** self.params.d

    def cube_of(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        cells = np.minimum((pts * self.m_side).astype(np.int64), self.m_side - 1)
        out = cells[:, 0]
        for a in range(1, self.params.d):
            out = out * self.m_side + cells[:, a]
        return out

    def coords_of(self, ids) -> np.ndarray:
        ids = np.atleast_1d(np.asarray(ids, dtype=np.int64))
        d = self.params.d
        out = np.empty((ids.shape[0], d), dtype=np.int64)
        tmp = ids.copy()
        for a in range(d - 1, -1, -1):
            out[:, a] = tmp % self.m_side
            tmp //= self.m_side
        return out

    def centers_of(self, ids) -> np.ndarray:
        return (self.coords_of(ids) + 0.5) * self.side

    def parent_of(self, ids) -> np.ndarray:
        """Coarse cube containing each fine cube (exact refinement)."""
        coords = self.coords_of(ids) // self.factor
        out = coords[:, 0]
        for a in range(1, self.params.d):
            out = out * self.coarse.m_side + coords[:, a]
        return out


def fine_side_target(r: float) -> float:
    """r * sqrt(loglog(1/r)) / log(1/r); requires loglog(1/r) > 0."""
    ll = math.log(math.log(1.0 / r))
    if ll <= 0.0:
        raise DomainError(f"loglog(1/r) <= 0 for r={r}; use a smaller radius")
    return r * math.sqrt(ll) / math.log(1.0 / r)


def build_tessellations(params: GeoParams, c: float) -> tuple[CoarseTess, FineTess]:
    """Coarse grid of side 1/ceil(c/r) <= r/c plus its integer refinement
    with fine side at most r*sqrt(loglog(1/r))/log(1/r)."""
    if c < math.sqrt(params.d):
        raise ConfigError(
            f"aspect constant c={c} below sqrt(d); cubes would not be cliques")
    m_side = math.ceil(c / params.r - 1e-12)
    if m_side < 10:
        raise ConfigError(
            f"r={params.r} too large for c={c}: only {m_side} cubes per axis "
            "(need at least 10)")
    coarse = CoarseTess(params, c, m_side)
    target = fine_side_target(params.r)
    factor = max(1, math.ceil(coarse.side / target - 1e-12))
    return coarse, FineTess(coarse, factor)


# ---------------------------------------------------------------------------
# Adjacency offset tables
# ---------------------------------------------------------------------------

def _all_deltas(d: int, radius: int) -> np.ndarray:
    """All nonzero integer offset vectors with l_infinity norm <= radius."""
    rng = np.arange(-radius, radius + 1)
    grids = np.meshgrid(*([rng] * d), indexing="ij")
    deltas = np.stack([g.ravel() for g in grids], axis=1)
    keep = np.any(deltas != 0, axis=1)
    return deltas[keep].astype(np.int64)


def component_graph_deltas(tess: CoarseTess) -> np.ndarray:
    """Offsets of the nonfull-component graph: l_infinity distance <= 4r."""
    radius = int((4.0 * tess.params.r) / tess.side + 1e-9)
    return _all_deltas(tess.params.d, max(radius, 1))


def region_graph_deltas(tess: CoarseTess, mode: str):
    """(deltas, guaranteed, check_points) for the region graph.

    paper:     centre distance <= (c - d) r / c
    tight:     every cross pair of the two cubes is within r by geometry
    effective: tight, or (data-dependent) all actual cross pairs within r
    """
    d, r, s = tess.params.d, tess.params.r, tess.side
    if mode == "paper":
        thresh = (tess.c - d) * r / tess.c
        radius = int(thresh / s + 1e-9)
        deltas = _all_deltas(d, max(radius, 1)) if radius >= 1 else \
            np.empty((0, d), dtype=np.int64)
        if deltas.shape[0]:
            dist = np.sqrt((deltas.astype(float) ** 2).sum(axis=1)) * s
            deltas = deltas[dist <= thresh + 1e-12]
        guaranteed = np.ones(len(deltas), dtype=np.bool_)
        return deltas, guaranteed, False
    # worst-case cross-pair distance for offset delta:
    # sqrt(sum((|delta_a| + 1)^2)) * s
    if mode == "tight":
        radius = int(r / s + 1e-9)
        deltas = _all_deltas(d, max(radius, 1))
        worst = np.sqrt(((np.abs(deltas) + 1.0) ** 2).sum(axis=1)) * s
        deltas = deltas[worst <= r + 1e-12]
        guaranteed = np.ones(len(deltas), dtype=np.bool_)
        return deltas, guaranteed, False
    if mode == "effective":
        radius = int(r / s + 1e-9) + 1
        deltas = _all_deltas(d, radius)
        # candidates: the minimal cross-pair distance does not exceed r
        gap = np.maximum(np.abs(deltas) - 1.0, 0.0) * s
        deltas = deltas[np.sqrt((gap ** 2).sum(axis=1)) <= r + 1e-12]
        worst = np.sqrt(((np.abs(deltas) + 1.0) ** 2).sum(axis=1)) * s
        guaranteed = worst <= r + 1e-12
        return deltas, guaranteed, True
    raise UsageError(f"unknown region adjacency mode {mode!r}")


def fine_graph_deltas(fine: FineTess) -> np.ndarray:
    """Offsets of the fine graph: Euclidean centre distance <= 2r."""
    radius = int(2.0 * fine.params.r / fine.side + 1e-9)
    deltas = _all_deltas(fine.params.d, max(radius, 1))
    dist = np.sqrt((deltas.astype(float) ** 2).sum(axis=1)) * fine.side
    return deltas[dist <= 2.0 * fine.params.r + 1e-12]


def _neighbor_any(mask: np.ndarray, deltas: np.ndarray, m: int, d: int) -> np.ndarray:
    """Cells with at least one True cell among `deltas`-offset neighbours."""
    grid = mask.reshape((m,) * d)
    out = np.zeros_like(grid)
    for delta in deltas:
        out |= np.roll(grid, shift=tuple(-delta), axis=tuple(range(d)))
    return out.ravel()


# ---------------------------------------------------------------------------
# Labels
# ---------------------------------------------------------------------------

@dataclass
class CubeLabels:
    tess: CoarseTess
    M: int
    counts: np.ndarray
    nonfull: np.ndarray
    comp_id: np.ndarray          # component label per nonfull cube, -1 elsewhere
    region: np.ndarray | None = None
    far_group: np.ndarray | None = None
    sea_id: int | None = None
    adjacency_mode: str | None = None
    diagnostics: list = field(default_factory=list)

    @property
    def component_sizes(self) -> dict:
        ids, cnt = np.unique(self.comp_id[self.comp_id >= 0], return_counts=True)
        return dict(zip(ids.tolist(), cnt.tolist()))

    def far_cubes_of(self, comp: int) -> np.ndarray:
        return np.nonzero((self.region == REGION_FAR) & (self.far_group == comp))[0]


_EMPTY_PTS = np.empty((0, 1), dtype=np.float64)
_EMPTY_I64 = np.empty(0, dtype=np.int64)


def classify_fullness(tess: CoarseTess, points, M: int) -> CubeLabels:
    """Per-cube counts, M-fullness, and nonfull components (l_inf <= 4r)."""
    points = np.asarray(points, dtype=np.float64)
    counts = np.bincount(tess.cube_of(points), minlength=tess.ncubes)
    nonfull = counts < M
    deltas = component_graph_deltas(tess)
    guaranteed = np.ones(len(deltas), dtype=np.bool_)
    comp = _kernels.masked_grid_components(
        nonfull, tess.m_side, tess.params.d, deltas, guaranteed,
        False, _EMPTY_I64, _EMPTY_I64, _EMPTY_PTS, 0.0)
    labels = CubeLabels(tess, int(M), counts, nonfull, comp)
    if points.shape[0] == 0:
        labels.diagnostics.append("degenerate: empty point set")
    return labels


def classify_regions(tess: CoarseTess, labels: CubeLabels, points,
                     mode: str = "paper", strict: bool = True) -> CubeLabels:
    """Sea / close / far labels.

    The sea is the largest region-graph component of M-full cubes; close
    cubes are nonfull cubes with a geometric region-graph edge into the sea;
    the rest is far.  Far cubes are attributed to the nonfull component that
    cuts them off (closest nonfull cube when no close neighbour exists).

    With strict=True, a sea covering at most half of all cubes raises
    RegimeError(REGIME_TOO_SPARSE); otherwise it is recorded as a diagnostic
    and the largest component is used anyway.
    """
    points = np.asarray(points, dtype=np.float64)
    d, m = tess.params.d, tess.m_side
    deltas, guaranteed, check = region_graph_deltas(tess, mode)
    full = ~labels.nonfull

    if check:
        order = np.argsort(tess.cube_of(points), kind="stable")
        spts = np.ascontiguousarray(points[order])
        cnt = labels.counts.astype(np.int64)
        start = np.concatenate(([0], np.cumsum(cnt)[:-1])).astype(np.int64)
    else:
        spts, cnt = _EMPTY_PTS, _EMPTY_I64
        start = _EMPTY_I64

    if deltas.shape[0] == 0:
        full_comp = np.where(full, np.arange(tess.ncubes), -1)
        labels.diagnostics.append(
            "region graph has no edges at this aspect constant")
    else:
        full_comp = _kernels.masked_grid_components(
            full, m, d, deltas, guaranteed, check,
            start, cnt, spts, tess.params.r ** 2)

    region = np.full(tess.ncubes, REGION_FAR, dtype=np.int8)
    sea_id = None
    if full.any():
        ids, sizes = np.unique(full_comp[full_comp >= 0], return_counts=True)
        sea_id = int(ids[np.argmax(sizes)])
        sea_size = int(sizes.max())
        others = sizes[ids != sea_id]
        if others.size and others.max() == sea_size:
            labels.diagnostics.append(
                "sea component not unique; using smallest label")
        if sea_size <= tess.ncubes // 2:
            msg = (f"REGIME_TOO_SPARSE: largest full component covers "
                   f"{sea_size}/{tess.ncubes} cubes")
            if strict:
                raise RegimeError(msg)
            labels.diagnostics.append(msg)
        region[full_comp == sea_id] = REGION_SEA
    else:
        msg = "REGIME_TOO_SPARSE: no M-full cube"
        if strict:
            raise RegimeError(msg)
        labels.diagnostics.append(msg)

    # close = nonfull with a geometric edge into the sea
    geo_deltas = deltas[guaranteed] if deltas.shape[0] else deltas
    sea_mask = region == REGION_SEA
    if geo_deltas.shape[0]:
        near_sea = _neighbor_any(sea_mask, geo_deltas, m, d)
        region[labels.nonfull & near_sea] = REGION_CLOSE
    # everything else stays FAR (both nonfull beyond reach and cut-off fulls)

    # attribute far cubes to nonfull components
    far_group = np.full(tess.ncubes, -1, dtype=np.int64)
    far_ids = np.nonzero(region == REGION_FAR)[0]
    if far_ids.size:
        comp_grid = labels.comp_id.reshape((m,) * d)
        # nearest nonfull component by expanding l_inf rings (min label wins)
        lab = np.where(labels.comp_id >= 0, labels.comp_id,
                       np.iinfo(np.int64).max).reshape((m,) * d)
        ring = _all_deltas(d, 1)
        need = region.reshape((m,) * d) == REGION_FAR
        cur = lab.copy()
        for _ in range(m):
            if not (need & (cur == np.iinfo(np.int64).max)).any():
                break
            best = cur.copy()
            for delta in ring:
                cand = np.roll(cur, shift=tuple(-delta), axis=tuple(range(d)))
                np.minimum(best, cand, out=best)
            # only unlabeled cells adopt neighbour labels
            cur = np.where(cur == np.iinfo(np.int64).max, best, cur)
        flat = cur.ravel()
        far_group[far_ids] = np.where(flat[far_ids] == np.iinfo(np.int64).max,
                                      -1, flat[far_ids])
        if (far_group[far_ids] < 0).any():
            labels.diagnostics.append(
                "some far cubes have no nonfull component to attach to")

    labels.region = region
    labels.far_group = far_group
    labels.sea_id = sea_id
    labels.adjacency_mode = mode
    return labels


def blow_up(tess: CoarseTess, cubes, b: float) -> np.ndarray:
    """Closed l_infinity dilation by b*r/c, as a boolean cube mask."""
    if b < 0:
        raise UsageError(f"blow-up parameter must be >= 0, got {b}")
    d, m = tess.params.d, tess.m_side
    mask = np.zeros(tess.ncubes, dtype=bool)
    cubes = np.asarray(list(cubes) if not isinstance(cubes, np.ndarray) else cubes)
    if cubes.dtype == bool:
        mask = cubes.copy()
    else:
        mask[cubes.astype(np.int64)] = True
    radius = int(b * (tess.params.r / tess.c) / tess.side + 1e-9)
    if radius == 0 or not mask.any():
        return mask
    grid = mask.reshape((m,) * d)
    out = maximum_filter(grid.astype(np.uint8), size=2 * radius + 1, mode="wrap")
    return out.astype(bool).ravel()


# ---------------------------------------------------------------------------
# Annuli and remote sets on the fine tessellation
# ---------------------------------------------------------------------------

def annulus_radius(fine: FineTess) -> float:
    return fine.params.r - fine.side * math.sqrt(fine.params.d) / 2.0


def annulus_membership(fine: FineTess, Q, p) -> bool:
    """p lies within the shrunken balls around member-cube centres but not
    inside the member cubes themselves."""
    Q = np.asarray(sorted(Q), dtype=np.int64)
    if Q.size == 0:
        raise UsageError("Q must be nonempty")
    p = np.asarray(p, dtype=np.float64)
    centers = fine.centers_of(Q)
    delta = np.abs(centers - p) % 1.0
    delta = np.minimum(delta, 1.0 - delta)
    dist = np.sqrt((delta ** 2).sum(axis=1))
    if not (dist <= annulus_radius(fine)).any():
        return False
    return int(fine.cube_of(p.reshape(1, -1))[0]) not in set(Q.tolist())


def annulus_point_count(fine: FineTess, Q, points, tree: cKDTree | None = None,
                        point_cubes: np.ndarray | None = None) -> int:
    """Number of points of `points` inside Ann(Q)."""
    Q = np.asarray(sorted(Q), dtype=np.int64)
    points = np.asarray(points, dtype=np.float64)
    if points.shape[0] == 0:
        return 0
    if tree is None:
        tree = cKDTree(points, boxsize=1.0)
    if point_cubes is None:
        point_cubes = fine.cube_of(points)
    centers = fine.centers_of(Q)
    rad = annulus_radius(fine)
    hit: set[int] = set()
    for lst in tree.query_ball_point(centers, rad):
        hit.update(lst)
    if not hit:
        return 0
    qset = set(Q.tolist())
    return sum(1 for i in hit if int(point_cubes[i]) not in qset)


@dataclass(frozen=True)
class RemoteSet:
    cubes: frozenset
    kappa: int
    diameter: float
    annulus_point_count: int

    @property
    def is_remote(self) -> bool:
        return self.annulus_point_count <= self.kappa - 1


def _cube_set_diameter(fine: FineTess, ids: np.ndarray) -> float:
    """Exact diameter of a union of fine cubes (min-image metric)."""
    coords = fine.coords_of(ids).astype(np.float64)
    m = fine.m_side
    base = coords[0]
    rel = (coords - base + m / 2.0) % m - m / 2.0
    best = 0.0
    s = fine.side
    n = rel.shape[0]
    # max over cube pairs of sqrt(sum((|dc_a| + 1) * side)^2)
    for i in range(n):
        diff = np.abs(rel - rel[i]) + 1.0
        best = max(best, float(np.sqrt(((diff * s) ** 2).sum(axis=1)).max()))
    return best


def _component_members(fine: FineTess, label: np.ndarray):
    comp_ids = np.unique(label[label >= 0])
    return {int(cid): np.nonzero(label == cid)[0] for cid in comp_ids}


def find_remote_sets(tess: CoarseTess, fine: FineTess, labels: CubeLabels,
                     points, kappa: int, max_candidates: int = 100_000):
    """Maximal non-sea fine-cube components with their annulus status, plus a
    per-fine-cube flag marking membership in some kappa-remote set.

    A cube is flagged when the annulus condition (at most kappa-1 points)
    holds for its maximal component or for one of the radius-doubling BFS
    balls grown around the cube inside its component.
    """
    points = np.asarray(points, dtype=np.float64)
    if labels.region is None:
        raise UsageError("region labels required; run classify_regions first")
    parent = fine.parent_of(np.arange(fine.ncubes))
    non_sea = labels.region[parent] != REGION_SEA
    n_cand = int(non_sea.sum())
    if n_cand > max_candidates:
        raise RegimeError(
            f"REGIME_TOO_SPARSE: {n_cand} non-sea fine cubes exceed the "
            f"{max_candidates} candidate budget")
    deltas = fine_graph_deltas(fine)
    guaranteed = np.ones(len(deltas), dtype=np.bool_)
    label = _kernels.masked_grid_components(
        non_sea, fine.m_side, fine.params.d, deltas, guaranteed,
        False, _EMPTY_I64, _EMPTY_I64, _EMPTY_PTS, 0.0)

    tree = cKDTree(points, boxsize=1.0) if points.shape[0] else None
    point_cubes = fine.cube_of(points) if points.shape[0] else None

    flags = np.zeros(fine.ncubes, dtype=bool)
    out = []
    for cid, members in _component_members(fine, label).items():
        cnt = annulus_point_count(fine, members, points, tree, point_cubes)
        diam = _cube_set_diameter(fine, members)
        out.append(RemoteSet(frozenset(int(x) for x in members), kappa,
                             diam, cnt))
        if cnt <= kappa - 1:
            flags[members] = True
            continue
        if members.size > 2000:
            continue  # per-cube growth skipped on oversized components
        # per-cube radius-doubling BFS balls within the component
        member_set = set(int(x) for x in members)
        adj = {}
        coords = fine.coords_of(members)
        lookup = {int(x): i for i, x in enumerate(members)}
        m = fine.m_side
        d = fine.params.d
        for i, cube in enumerate(members):
            nbrs = []
            for delta in deltas:
                cc = (coords[i] + delta) % m
                w = 0
                for a in range(d):
                    w = w * m + cc[a]
                if int(w) in member_set:
                    nbrs.append(int(w))
            adj[int(cube)] = nbrs
        for cube in members:
            cube = int(cube)
            if flags[cube]:
                continue
            radius = 1
            while True:
                ball = {cube}
                frontier = [cube]
                for _ in range(radius):
                    nxt = []
                    for v in frontier:
                        for w in adj[v]:
                            if w not in ball:
                                ball.add(w)
                                nxt.append(w)
                    frontier = nxt
                cnt_b = annulus_point_count(fine, np.fromiter(ball, dtype=np.int64),
                                            points, tree, point_cubes)
                if cnt_b <= kappa - 1:
                    flags[list(ball)] = True
                    break
                if len(ball) == members.size:
                    break
                radius *= 2
    return out, flags


def measure_remote_volume(tess: CoarseTess, fine: FineTess, labels: CubeLabels,
                          points, kappa: int) -> float:
    """Total volume of fine cubes flagged as belonging to a remote set."""
    _, flags = find_remote_sets(tess, fine, labels, points, kappa)
    return float(flags.sum()) * fine.side ** fine.params.d


# ---------------------------------------------------------------------------
# Deterministic annulus-core region of a connected fine-cube set
# ---------------------------------------------------------------------------

@dataclass
class CrRegion:
    """Piecewise ball/half-space/slab region built from the extremal skeleton
    of a connected fine-cube set.

    Membership is exact; the region is contained in the annulus of the source
    set and its volume is lower-bounded in terms of the set's diameter.
    Coordinates are lifted to a local Euclidean frame around the set (valid
    because the diameter is below 20*d*r << 1/2).
    """

    fine: FineTess
    skeleton: list            # fine cube ids, one per extremal point
    a: np.ndarray             # lifted coordinates
    b: np.ndarray
    alphas: np.ndarray        # (l, d) lifted extremal points (may hold NaN rows)
    normals: np.ndarray       # (l, d) unit normals of the half-spaces
    axis: np.ndarray          # unit vector from a to b
    lam: float                # diameter of the union
    radius: float             # r - 2 s_f sqrt(d)
    origin: np.ndarray        # torus anchor used for lifting

    @property
    def l(self) -> int:
        return self.alphas.shape[0]

    def lift(self, points) -> np.ndarray:
        """Map torus points into the local frame (min-image around origin)."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        rel = (pts - self.origin + 0.5) % 1.0 - 0.5
        return rel

    def contains(self, points) -> np.ndarray:
        pts = self.lift(points)
        rel_a = pts - self.a
        axial = rel_a @ self.axis
        inside = np.zeros(pts.shape[0], dtype=bool)
        # end caps: half-balls beyond the first and last hyperplanes
        da = np.sqrt((rel_a ** 2).sum(axis=1))
        inside |= (axial <= 0.0) & (da <= self.radius)
        rel_b = pts - self.b
        db = np.sqrt((rel_b ** 2).sum(axis=1))
        inside |= (axial >= self.lam) & (db <= self.radius)
        two_r = 2.0 * self.fine.params.r
        for i in range(self.l):
            alpha = self.alphas[i]
            if np.isnan(alpha[0]):
                continue
            lo = two_r * i
            hi = min(two_r * (i + 1), self.lam)
            rel = pts - alpha
            dist = np.sqrt((rel ** 2).sum(axis=1))
            side = rel @ self.normals[i]
            inside |= ((axial >= lo) & (axial <= hi)
                       & (dist <= self.radius) & (side >= 0.0))
        return inside

    def volume_estimate(self, rng: np.random.Generator, nsamples: int = 100_000):
        """(estimate, standard error) by Monte Carlo over the bounding box."""
        anchors = [self.a, self.b] + [al for al in self.alphas
                                      if not np.isnan(al[0])]
        anchors = np.array(anchors)
        lo = anchors.min(axis=0) - self.radius
        hi = anchors.max(axis=0) + self.radius
        box = np.prod(hi - lo)
        pts = rng.random((nsamples, self.fine.params.d)) * (hi - lo) + lo
        frac_in = self._contains_lifted(pts).mean()
        vol = float(box * frac_in)
        stderr = float(box * math.sqrt(frac_in * (1.0 - frac_in) / nsamples))
        return vol, stderr

    def _contains_lifted(self, pts: np.ndarray) -> np.ndarray:
        rel_a = pts - self.a
        axial = rel_a @ self.axis
        inside = np.zeros(pts.shape[0], dtype=bool)
        da = np.sqrt((rel_a ** 2).sum(axis=1))
        inside |= (axial <= 0.0) & (da <= self.radius)
        rel_b = pts - self.b
        db = np.sqrt((rel_b ** 2).sum(axis=1))
        inside |= (axial >= self.lam) & (db <= self.radius)
        two_r = 2.0 * self.fine.params.r
        for i in range(self.l):
            alpha = self.alphas[i]
            if np.isnan(alpha[0]):
                continue
            lo = two_r * i
            hi = min(two_r * (i + 1), self.lam)
            rel = pts - alpha
            dist = np.sqrt((rel ** 2).sum(axis=1))
            side = rel @ self.normals[i]
            inside |= ((axial >= lo) & (axial <= hi)
                       & (dist <= self.radius) & (side >= 0.0))
        return inside


def _lex_less(p: np.ndarray, q: np.ndarray) -> bool:
    for a, b in zip(p, q):
        if a < b - 1e-15:
            return True
        if a > b + 1e-15:
            return False
    return False


def cr_region(fine: FineTess, C) -> CrRegion:
    """Build the annulus-core region of a connected fine-cube set C.

    The skeleton consists of the diameter endpoints a, b (corner/centre
    lattice points of C, lexicographic tie-break) and, per 2r-slab orthogonal
    to ab, the lattice point farthest from the segment ab.  Requires d >= 2
    and diam(union C) in [s_f, 20*d*r).
    """
    d = fine.params.d
    r = fine.params.r
    s = fine.side
    if d < 2:
        raise DomainError("the half-cylinder construction needs d >= 2")
    C = np.asarray(sorted(int(x) for x in C), dtype=np.int64)
    if C.size == 0:
        raise UsageError("C must be nonempty")

    # connectivity in the fine graph
    deltas = fine_graph_deltas(fine)
    cset = set(C.tolist())
    coords = fine.coords_of(C)
    m = fine.m_side
    seen = {int(C[0])}
    frontier = [0]
    idx_of = {int(x): i for i, x in enumerate(C)}
    while frontier:
        i = frontier.pop()
        for delta in deltas:
            cc = (coords[i] + delta) % m
            w = 0
            for a in range(d):
                w = w * m + int(cc[a])
            if w in cset and w not in seen:
                seen.add(w)
                frontier.append(idx_of[w])
    if len(seen) != C.size:
        raise UsageError("C is not connected in the fine graph")

    # lift cube centres to a local frame and build the corner/centre lattice
    origin = fine.centers_of(C[:1])[0]
    centers = fine.centers_of(C)
    rel_centers = (centers - origin + 0.5) % 1.0 - 0.5

    half = s / 2.0
    corner_offs = np.array(
        [[(half if (bits >> a) & 1 else -half) for a in range(d)]
         for bits in range(2 ** d)])
    zf = [rel_centers]
    for off in corner_offs:
        zf.append(rel_centers + off)
    zf = np.vstack(zf)
    owner = np.tile(C, 2 ** d + 1)
    # dedupe shared corners on the half-side lattice, keeping the smallest cube id
    keys = np.round(zf / half).astype(np.int64)
    order = np.lexsort((owner,) + tuple(keys[:, a] for a in range(d - 1, -1, -1)))
    zf, owner, keys = zf[order], owner[order], keys[order]
    uniq = np.ones(len(zf), dtype=bool)
    uniq[1:] = np.any(keys[1:] != keys[:-1], axis=1)
    zf, owner = zf[uniq], owner[uniq]

    # diameter endpoints with lexicographic tie-break
    best = -1.0
    for i in range(zf.shape[0]):
        dist = np.sqrt(((zf - zf[i]) ** 2).sum(axis=1))
        mx = float(dist.max())
        if mx > best:
            best = mx
    lam = best
    if not (s - 1e-12 <= lam < 20 * d * r):
        raise DomainError(
            f"diameter {lam} outside [s_f, 20*d*r) = [{s}, {20 * d * r})")
    tol = 1e-12
    a_pt = b_pt = None
    a_cube = b_cube = -1
    for i in range(zf.shape[0]):
        dist = np.sqrt(((zf - zf[i]) ** 2).sum(axis=1))
        for j in np.nonzero(dist >= lam - tol)[0]:
            for (p, pc, q, qc) in (((zf[i]), owner[i], zf[j], owner[j]),
                                   ((zf[j]), owner[j], zf[i], owner[i])):
                if a_pt is None or _lex_less(p, a_pt) or (
                        not _lex_less(a_pt, p) and _lex_less(q, b_pt)):
                    a_pt, a_cube, b_pt, b_cube = p, int(pc), q, int(qc)
    axis = (b_pt - a_pt) / lam

    two_r = 2.0 * r
    l = max(1, math.ceil(lam / two_r - 1e-12))
    radius = r - 2.0 * s * math.sqrt(d)
    if radius <= 0:
        raise DomainError("fine side too large: r - 2 s_f sqrt(d) <= 0")

    axial = (zf - a_pt) @ axis
    lat_vec = (zf - a_pt) - np.outer(axial, axis)
    lat = np.sqrt((lat_vec ** 2).sum(axis=1))
    # distance to the segment ab (beyond the ends, distance to the endpoint)
    seg = lat.copy()
    before = axial < 0
    seg[before] = np.sqrt(((zf[before] - a_pt) ** 2).sum(axis=1))
    after = axial > lam
    seg[after] = np.sqrt(((zf[after] - b_pt) ** 2).sum(axis=1))

    margin = s * math.sqrt(d)  # conservative slab extension for straddling cubes
    alphas = np.full((l, d), np.nan)
    normals = np.zeros((l, d))
    skel = {a_cube, b_cube}
    for i in range(l):
        lo = two_r * i - margin
        hi = min(two_r * (i + 1), lam) + margin
        in_slab = (axial >= lo) & (axial <= hi)
        if not in_slab.any():
            continue
        cand = np.nonzero(in_slab)[0]
        dmax = seg[cand].max()
        ties = cand[seg[cand] >= dmax - tol]
        pick = ties[0]
        for t in ties[1:]:
            if _lex_less(zf[t], zf[pick]):
                pick = t
        alphas[i] = zf[pick]
        skel.add(int(owner[pick]))
        if lat[pick] > 1e-12:
            normals[i] = lat_vec[pick] / lat[pick]
        else:
            # collinear extremal point: deterministic normal orthogonal to ab
            j = int(np.argmin(np.abs(axis)))
            e = np.zeros(d)
            e[j] = 1.0
            n = e - (e @ axis) * axis
            normals[i] = n / np.sqrt((n ** 2).sum())

    return CrRegion(fine=fine, skeleton=sorted(skel), a=a_pt, b=b_pt,
                    alphas=alphas, normals=normals, axis=axis, lam=lam,
                    radius=radius, origin=origin)
