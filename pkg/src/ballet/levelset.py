"""Point sets, fixed-radius queries, level-set surrogate clustering, and DBSCAN.

The surrogate clustering of a density at level lambda activates the points with
density >= lambda and groups them by connected components of the delta-
neighborhood graph. Edges are strictly below delta by default; DBSCAN and the
density-equivalence results use closed (<= eps) neighborhoods, so the closed
convention is available behind a flag.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .subpartition import SubPartition

__all__ = [
    "PointSet",
    "GridIndex",
    "NeighborhoodGraph",
    "AdaptiveDeltaConfig",
    "unit_ball_volume",
    "default_k_levelset",
    "default_k_dbscan",
    "knn_distance",
    "adaptive_delta",
    "neighborhood_graph",
    "active_set_components",
    "surrogate_cluster",
    "dbscan_star",
    "dbscan_classic",
    "theory_min_delta",
]


def unit_ball_volume(d: int) -> float:
    """Volume of the unit Euclidean ball in d dimensions, pi^(d/2)/Gamma(d/2+1).

    Evaluated by the two-step recurrence v_d = v_{d-2} * 2 pi / d, which keeps
    the low-dimensional values exact (2, pi, 4 pi / 3) instead of round-tripping
    through gamma-function rounding.
    """
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    v = 1.0 if d % 2 == 0 else 2.0
    for i in range(2 + (d % 2), d + 1, 2):
        v *= 2.0 * math.pi / i
    return v


def default_k_levelset(n: int) -> int:
    """Default neighbor count for the adaptive delta: ceil(ln n)."""
    return max(1, math.ceil(math.log(n)))


def default_k_dbscan(n: int) -> int:
    """Default MinPts for the DBSCAN baseline: ceil(log2 n)."""
    return max(1, math.ceil(math.log2(n)))


@dataclass(frozen=True)
class PointSet:
    """n observations in R^d; row order is the canonical observation order."""

    points: np.ndarray

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise ValueError(f"points must be a nonempty n x d matrix, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points must have finite coordinates")
        pts = np.ascontiguousarray(pts)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def to_csv(self, path, header: bool = False) -> None:
        with open(path, "w", encoding="ascii") as fh:
            if header:
                fh.write(",".join(f"x{j}" for j in range(self.d)) + "\n")
            for row in self.points:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")

    @classmethod
    def from_csv(cls, path, header: bool = False) -> "PointSet":
        rows = []
        with open(path, "r", encoding="ascii") as fh:
            for idx, line in enumerate(fh):
                line = line.strip()
                if line == "":
                    continue
                if header and idx == 0:
                    continue
                rows.append([float(tok) for tok in line.split(",")])
        if not rows:
            raise ValueError(f"no data rows in {path}")
        return cls(np.asarray(rows, dtype=np.float64))


class GridIndex:
    """Uniform grid of cell width w over a point set, for radius <= w queries.

    Candidates come from the 3^d adjacent cells; any pair within w of each
    other is at most one cell apart per axis, so the candidate set is complete
    for query radii up to w. Dimensions above 3 fall back to brute force.
    """

    def __init__(self, points: np.ndarray, cell_width: float, force_brute: bool = False):
        if cell_width <= 0 or not math.isfinite(cell_width):
            raise ValueError(f"cell width must be a positive finite real, got {cell_width}")
        self.points = np.asarray(points, dtype=np.float64)
        self.cell_width = float(cell_width)
        self.d = self.points.shape[1]
        self.brute = bool(force_brute or self.d > 3)
        if not self.brute:
            coords = np.floor(self.points / self.cell_width).astype(np.int64)
            cells: dict[tuple, list[int]] = {}
            for i, key in enumerate(map(tuple, coords)):
                cells.setdefault(key, []).append(i)
            self._cells = {k: np.asarray(v, dtype=np.int64) for k, v in cells.items()}
            self._coords = coords
            self._offsets = list(itertools.product((-1, 0, 1), repeat=self.d))

    def _candidates(self, x: np.ndarray) -> np.ndarray:
        base = tuple(np.floor(x / self.cell_width).astype(np.int64))
        found = [self._cells[key] for off in self._offsets
                 if (key := tuple(b + o for b, o in zip(base, off))) in self._cells]
        if not found:
            return np.empty(0, dtype=np.int64)
        return np.concatenate(found)

    def query_ball(self, x: np.ndarray, radius: float, closed: bool = True) -> np.ndarray:
        """Indices of stored points within radius of x (closed or open ball)."""
        if radius > self.cell_width * (1 + 1e-12):
            raise ValueError(f"query radius {radius} exceeds grid cell width {self.cell_width}")
        cand = np.arange(self.points.shape[0]) if self.brute else self._candidates(np.asarray(x, dtype=np.float64))
        if cand.size == 0:
            return cand
        diff = self.points[cand] - x
        d2 = np.einsum("ij,ij->i", diff, diff)
        r2 = radius * radius
        mask = d2 <= r2 if closed else d2 < r2
        return cand[mask]


def _find(parent: np.ndarray, x: int) -> int:
    while parent[x] != x:
        parent[x] = parent[parent[x]]
        x = int(parent[x])
    return x


def _component_labels(points: np.ndarray, active: np.ndarray, delta: float, closed: bool) -> np.ndarray:
    """Full-length labels: 0 for inactive, components of the delta graph on active."""
    n = points.shape[0]
    labels = np.zeros(n, dtype=np.int64)
    active = np.asarray(active, dtype=np.int64)
    m = active.size
    if m == 0:
        return labels
    sub = points[active]
    grid = GridIndex(sub, delta)
    parent = np.arange(m)
    for i in range(m):
        for j in grid.query_ball(sub[i], delta, closed=closed).tolist():
            if j > i:
                ri, rj = _find(parent, i), _find(parent, j)
                if ri != rj:
                    parent[rj] = ri
    comp = np.fromiter((_find(parent, i) for i in range(m)), dtype=np.int64, count=m)
    # first-occurrence numbering; SubPartition would redo this, but callers
    # also use the raw labels directly
    order: dict[int, int] = {}
    for r in comp.tolist():
        if r not in order:
            order[r] = len(order) + 1
    labels[active] = np.asarray([order[r] for r in comp.tolist()], dtype=np.int64)
    return labels


def active_set_components(
    ps: PointSet,
    active: Sequence[int],
    delta: float,
    closed_edges: bool = False,
) -> SubPartition:
    """Sub-partition whose clusters are the delta-graph components of `active`."""
    if delta <= 0 or not math.isfinite(delta):
        raise ValueError(f"delta must be positive and finite, got {delta}")
    act = np.asarray(sorted(int(i) for i in active), dtype=np.int64)
    if act.size and (act[0] < 0 or act[-1] >= ps.n):
        raise ValueError("active indices out of range")
    return SubPartition(_component_labels(ps.points, act, delta, closed_edges))


@dataclass(frozen=True)
class NeighborhoodGraph:
    """Open delta-neighborhood graph on the active points (strict edges)."""

    delta: float
    vertex_ids: np.ndarray
    edges: tuple[tuple[int, int], ...]

    def component_labels(self, n: int) -> np.ndarray:
        """Full-length component labels (0 = not a vertex)."""
        pos = {int(v): i for i, v in enumerate(self.vertex_ids)}
        parent = np.arange(len(pos))
        for u, v in self.edges:
            ru, rv = _find(parent, pos[u]), _find(parent, pos[v])
            if ru != rv:
                parent[rv] = ru
        labels = np.zeros(n, dtype=np.int64)
        order: dict[int, int] = {}
        for i, v in enumerate(self.vertex_ids.tolist()):
            r = _find(parent, i)
            if r not in order:
                order[r] = len(order) + 1
            labels[v] = order[r]
        return labels


def neighborhood_graph(ps: PointSet, active: Sequence[int], delta: float) -> NeighborhoodGraph:
    """Materialized strict-edge graph over the active points."""
    if delta <= 0:
        raise ValueError(f"delta must be positive, got {delta}")
    act = np.asarray(sorted(int(i) for i in active), dtype=np.int64)
    sub = ps.points[act]
    grid = GridIndex(sub, delta)
    edges: list[tuple[int, int]] = []
    for i in range(act.size):
        for j in grid.query_ball(sub[i], delta, closed=False).tolist():
            if j > i:
                edges.append((int(act[i]), int(act[j])))
    return NeighborhoodGraph(delta=float(delta), vertex_ids=act, edges=tuple(edges))


@dataclass(frozen=True)
class AdaptiveDeltaConfig:
    """k-NN order (default ceil(ln n)) and tail fraction gamma for delta-hat."""

    k: Optional[int] = None
    gamma: float = 0.01

    def __post_init__(self) -> None:
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")
        if self.k is not None and self.k < 1:
            raise ValueError(f"k must be a positive int, got {self.k}")

    def resolve_k(self, n: int) -> int:
        k = default_k_levelset(n) if self.k is None else int(self.k)
        if k > n - 1:
            raise ValueError(f"k={k} out of range for n={n} (need k <= n-1)")
        return k


def knn_distance(ps: PointSet, k: int) -> np.ndarray:
    """Distance from each point to its k-th nearest other point, 1 <= k <= n-1."""
    if not 1 <= k <= ps.n - 1:
        raise ValueError(f"k={k} out of range for n={ps.n} (need 1 <= k <= n-1)")
    tree = cKDTree(ps.points)
    # column 0 is the point itself (distance 0); ties only shift equal values
    dist, _ = tree.query(ps.points, k=k + 1)
    return np.asarray(dist[:, k], dtype=np.float64)


def adaptive_delta(ps: PointSet, active: Sequence[int], cfg: AdaptiveDeltaConfig = AdaptiveDeltaConfig()) -> float:
    """Data-adaptive delta: upper (1-gamma)-quantile of active points' kNN distances.

    The kNN distances are measured in the full point set; the quantile (m-th
    smallest with m = ceil((1-gamma) * |active|)) runs over the active subset.
    """
    act = np.asarray(list(active), dtype=np.int64)
    if act.size == 0:
        raise ValueError("active set must be nonempty")
    k = cfg.resolve_k(ps.n)
    from .util import order_statistic_ceil

    return order_statistic_ceil(knn_distance(ps, k)[act], 1.0 - cfg.gamma)


def surrogate_cluster(
    ps: PointSet,
    density_at_points: Sequence[float],
    lam: float,
    delta: float,
    closed_edges: bool = False,
) -> SubPartition:
    """Level-set clustering of a density vector: components of G_delta on {f >= lambda}.

    closed_edges selects the <= delta convention used by the DBSCAN
    equivalences; the default is the strict < delta graph.
    """
    dens = np.asarray(density_at_points, dtype=np.float64)
    if dens.shape != (ps.n,):
        raise ValueError(f"density vector has shape {dens.shape}, expected ({ps.n},)")
    if np.isnan(dens).any():
        raise ValueError("density values must not be NaN")
    if delta <= 0:
        raise ValueError(f"delta must be positive, got {delta}")
    active = np.flatnonzero(dens >= lam)
    return SubPartition(_component_labels(ps.points, active, delta, closed_edges))


def dbscan_star(ps: PointSet, eps: float, min_pts: int, include_self: bool = True) -> SubPartition:
    """DBSCAN*: clusters are closed-eps components of the core points, rest is noise.

    Core points have at least min_pts dataset points in their closed eps-ball;
    the ball includes the point itself unless include_self=False (parity flag
    for implementations that count only other points).
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if min_pts < 1:
        raise ValueError(f"min_pts must be a positive int, got {min_pts}")
    grid = GridIndex(ps.points, eps)
    counts = np.empty(ps.n, dtype=np.int64)
    for i in range(ps.n):
        nbrs = grid.query_ball(ps.points[i], eps, closed=True)
        counts[i] = nbrs.size if include_self else nbrs.size - 1
    core = np.flatnonzero(counts >= min_pts)
    return SubPartition(_component_labels(ps.points, core, eps, closed=True))


def dbscan_classic(ps: PointSet, eps: float, min_pts: int, include_self: bool = True) -> SubPartition:
    """DBSCAN with border points: each non-core point within eps of a core point
    joins the cluster of its nearest core point (ties: smallest core index)."""
    star = dbscan_star(ps, eps, min_pts, include_self=include_self)
    labels = star.labels_array.copy()
    core_mask = labels != 0
    grid = GridIndex(ps.points, eps)
    for i in np.flatnonzero(~core_mask).tolist():
        nbrs = grid.query_ball(ps.points[i], eps, closed=True)
        core_nbrs = nbrs[core_mask[nbrs]]
        if core_nbrs.size == 0:
            continue
        diff = ps.points[core_nbrs] - ps.points[i]
        d2 = np.einsum("ij,ij->i", diff, diff)
        best = core_nbrs[np.lexsort((core_nbrs, d2))[0]]
        labels[i] = labels[best]
    return SubPartition(labels)


def theory_min_delta(n: int, lam: float, d: int) -> float:
    """Diagnostic lower bound on admissible delta; reported, never enforced."""
    if n < 2 or lam <= 0 or d < 1:
        raise ValueError("need n >= 2, lambda > 0, d >= 1")
    return 2.0 * (16.0 * d * math.log(n) / (lam * unit_ball_volume(d) * n)) ** (1.0 / d)
