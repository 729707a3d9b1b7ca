"""Level selection and multi-level post-processing.

Three ways to pick the density threshold (direct, noise-fraction quantile,
scaled flat-density multiple), a knee detector over sorted log densities, and
the cluster tree across an increasing ladder of levels with the persistence
walk that extracts clusters stable below any split.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Union

import numpy as np

from .errors import ConfigError, InfeasibleError
from .levelset import PointSet, surrogate_cluster
from .risk import DensityDrawEnsemble, SearchConfig, ballet_estimate, plugin_estimate
from .subpartition import DEFAULT_LOSS_PARAMS, LossParams, SubPartition
from .util import _ceil_count, canonical_json, order_statistic_upper

__all__ = [
    "LevelSpec",
    "ElbowResult",
    "LevelSelectionWarning",
    "TreeEdge",
    "ClusterTree",
    "resolve_level",
    "elbow_level",
    "build_cluster_tree",
    "tree_from_clusterings",
    "persistent_clusters",
]

LEVEL_KINDS = ("lambda", "noise_fraction", "cosmo_c")


class LevelSelectionWarning(UserWarning):
    """Raised when the knee detector degrades to the default noise fraction."""


@dataclass(frozen=True)
class LevelSpec:
    """A level choice: a direct lambda, a target noise fraction nu, or a
    multiple (1 + c) of the flat density over the domain."""

    kind: str
    value: float
    resolved_lambda: Optional[float] = None

    def __post_init__(self) -> None:
        if self.kind not in LEVEL_KINDS:
            raise ValueError(f"kind must be one of {LEVEL_KINDS}, got {self.kind!r}")
        if not np.isfinite(self.value):
            raise ValueError(f"level value must be finite, got {self.value}")
        if self.kind == "lambda" and self.value < 0:
            raise ValueError("lambda must be nonnegative")
        if self.kind == "noise_fraction" and not (0.0 <= self.value < 1.0):
            raise ValueError(f"noise fraction must be in [0, 1), got {self.value}")
        if self.kind == "cosmo_c" and self.value < -1.0:
            raise ValueError("c must be >= -1 so the level stays nonnegative")
        if self.resolved_lambda is not None and self.resolved_lambda < 0:
            raise ValueError("resolved lambda must be nonnegative")

    def with_resolved(self, lam: float) -> "LevelSpec":
        return replace(self, resolved_lambda=float(lam))


def resolve_level(
    spec: LevelSpec,
    density_at_points: Optional[np.ndarray] = None,
    domain_volume: Optional[float] = None,
) -> float:
    """Concrete lambda for a level spec.

    noise_fraction nu maps to the ceil((1 - nu) * n)-th largest of the
    reference densities (nu = 0 gives the minimum: nothing is noise);
    cosmo_c maps to (1 + c) / Vol with Vol the domain volume.
    """
    if spec.kind == "lambda":
        return float(spec.value)
    if spec.kind == "noise_fraction":
        if density_at_points is None:
            raise ConfigError("noise_fraction level needs reference densities")
        vals = np.asarray(density_at_points, dtype=np.float64)
        return float(order_statistic_upper(vals, 1.0 - spec.value))
    if domain_volume is None:
        raise ConfigError("cosmo_c level needs the domain volume")
    if not (domain_volume > 0 and np.isfinite(domain_volume)):
        raise ConfigError(f"domain volume must be positive and finite, got {domain_volume}")
    return float((1.0 + spec.value) / domain_volume)


@dataclass(frozen=True)
class ElbowResult:
    """Detected level: the density at the knee rank of the sorted log-density
    curve, the implied noise fraction, and whether the default kicked in."""

    lam: float
    nu: float
    rank: int
    fallback: bool


def _kneedle_knee_index(y: np.ndarray, sensitivity: float = 1.0) -> Optional[int]:
    """First knee of a concave increasing series, None when no knee confirms.

    Normalized difference curve d = y_norm - x_norm; a local maximum of d is a
    knee once d drops below (max - sensitivity * mean_step) before the next
    local maximum.
    """
    n = y.size
    if n < 3:
        return None
    span = float(y[-1] - y[0])
    if span <= 0:
        return None
    y_norm = (y - y[0]) / span
    x_norm = np.linspace(0.0, 1.0, n)
    d = y_norm - x_norm
    maxima = [
        i for i in range(1, n - 1)
        if d[i] > d[i - 1] and d[i] >= d[i + 1]
    ]
    step = sensitivity / (n - 1)
    for pos, i in enumerate(maxima):
        threshold = d[i] - step
        stop = maxima[pos + 1] if pos + 1 < len(maxima) else n
        for j in range(i + 1, stop):
            if d[j] < threshold:
                return i
    return None


def elbow_level(density_at_points: np.ndarray) -> ElbowResult:
    """Knee of the ascending sorted log densities; the level at that rank.

    A curve with no confirmed knee (a straight line, for instance) falls back
    to a 0.1 noise fraction with a warning.
    """
    f = np.asarray(density_at_points, dtype=np.float64)
    if f.ndim != 1 or f.size == 0:
        raise ValueError("density_at_points must be a nonempty vector")
    if not np.all(np.isfinite(f)) or (f <= 0).any():
        raise ValueError("all densities must be positive and finite")
    order = np.argsort(f, kind="stable")
    sorted_vals = f[order]
    knee = _kneedle_knee_index(np.log(sorted_vals))
    n = f.size
    if knee is None:
        warnings.warn(
            "no knee found in the sorted log densities; using noise fraction 0.1",
            LevelSelectionWarning,
        )
        nu = 0.1
        rank = n - _ceil_count(1.0 - nu, n)
        return ElbowResult(lam=float(sorted_vals[rank]), nu=nu, rank=rank, fallback=True)
    return ElbowResult(lam=float(sorted_vals[knee]), nu=knee / n, rank=int(knee), fallback=False)


# -- cluster tree ---------------------------------------------------------------


@dataclass(frozen=True)
class TreeEdge:
    """Overlap between a cluster at row level-1 (parent) and row level (child)."""

    level: int
    parent: int
    child: int
    weight: int


@dataclass(frozen=True)
class ClusterTree:
    """One clustering per level, rows ordered by increasing level value.

    The top row is the smallest level (largest active set); edges join
    clusters in adjacent rows that share at least one observation.
    """

    levels: tuple[float, ...]
    clusterings: tuple[SubPartition, ...]
    edges: tuple[TreeEdge, ...]

    def __post_init__(self) -> None:
        if len(self.levels) != len(self.clusterings):
            raise ValueError("one clustering per level required")
        if len(self.levels) < 2:
            raise ValueError("a cluster tree needs at least two levels")
        if any(b <= a for a, b in zip(self.levels, self.levels[1:])):
            raise ValueError("levels must be strictly increasing")
        n = self.clusterings[0].n
        if any(c.n != n for c in self.clusterings):
            raise ValueError("clusterings disagree on n")
        for e in self.edges:
            if not (1 <= e.level < len(self.levels)):
                raise ValueError(f"edge row {e.level} out of range")
            if not (1 <= e.parent <= self.clusterings[e.level - 1].k):
                raise ValueError(f"edge parent {e.parent} not a cluster of row {e.level - 1}")
            if not (1 <= e.child <= self.clusterings[e.level].k):
                raise ValueError(f"edge child {e.child} not a cluster of row {e.level}")

    def nodes(self) -> list[tuple[int, int]]:
        return [
            (i, cid)
            for i, sp in enumerate(self.clusterings)
            for cid in range(1, sp.k + 1)
        ]

    def parents(self, level: int, cid: int) -> list[tuple[int, int]]:
        """(cluster id, overlap) pairs one row above (smaller level)."""
        return [(e.parent, e.weight) for e in self.edges if e.level == level and e.child == cid]

    def children(self, level: int, cid: int) -> list[tuple[int, int]]:
        """(cluster id, overlap) pairs one row below (larger level)."""
        return [(e.child, e.weight) for e in self.edges if e.level == level + 1 and e.parent == cid]

    def to_json_dict(self) -> dict:
        return {
            "levels": list(self.levels),
            "clusterings": [list(c.labels) for c in self.clusterings],
            "nodes": [[i, cid] for i, cid in self.nodes()],
            "edges": [
                {"level": e.level, "parent": e.parent, "child": e.child, "weight": e.weight}
                for e in self.edges
            ],
        }

    def to_json(self) -> str:
        return canonical_json(self.to_json_dict())

    def to_dot(self) -> str:
        """Graphviz text, one rank row per level, edges labeled by overlap."""
        lines = ["digraph clustertree {", "  rankdir=TB;", '  node [shape=box];']
        for i, (lev, sp) in enumerate(zip(self.levels, self.clusterings)):
            sizes = np.bincount(sp.labels_array, minlength=sp.k + 1)
            row = []
            for cid in range(1, sp.k + 1):
                name = f"L{i}_C{cid}"
                lines.append(f'  {name} [label="level={lev:g} cluster={cid} size={int(sizes[cid])}"];')
                row.append(name)
            if row:
                lines.append("  { rank=same; " + "; ".join(row) + "; }")
        for e in self.edges:
            lines.append(f'  L{e.level - 1}_C{e.parent} -> L{e.level}_C{e.child} [label="{e.weight}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"


def _overlap_edges(row: int, upper: SubPartition, lower: SubPartition) -> list[TreeEdge]:
    la = upper.labels_array
    lb = lower.labels_array
    mask = (la > 0) & (lb > 0)
    if not mask.any():
        return []
    base = lower.k + 1
    codes = la[mask] * base + lb[mask]
    uniq, counts = np.unique(codes, return_counts=True)
    return [
        TreeEdge(level=row, parent=int(code // base), child=int(code % base), weight=int(cnt))
        for code, cnt in zip(uniq.tolist(), counts.tolist())
    ]


def tree_from_clusterings(
    levels: Sequence[float],
    clusterings: Sequence[SubPartition],
) -> ClusterTree:
    """Assemble the tree for precomputed per-level clusterings."""
    edges: list[TreeEdge] = []
    for i in range(1, len(clusterings)):
        edges.extend(_overlap_edges(i, clusterings[i - 1], clusterings[i]))
    return ClusterTree(
        levels=tuple(float(v) for v in levels),
        clusterings=tuple(clusterings),
        edges=tuple(edges),
    )


def build_cluster_tree(
    ps: PointSet,
    source: Union[DensityDrawEnsemble, np.ndarray],
    levels: Sequence[float],
    delta: float,
    estimator: str = "ballet",
    p: LossParams = DEFAULT_LOSS_PARAMS,
    cfg: SearchConfig = SearchConfig(),
    closed_edges: bool = False,
) -> ClusterTree:
    """Estimate one clustering per level and link overlaps across rows.

    source is either a draw ensemble (estimator "ballet" or "plugin") or a
    fixed density vector (level sets of that vector directly).
    """
    if estimator not in ("ballet", "plugin"):
        raise ValueError(f"estimator must be 'ballet' or 'plugin', got {estimator!r}")
    lams = [float(v) for v in levels]
    if len(lams) < 2:
        raise ValueError("need at least two levels")
    if any(b <= a for a, b in zip(lams, lams[1:])):
        raise ValueError("levels must be strictly increasing")
    clusterings: list[SubPartition] = []
    if isinstance(source, DensityDrawEnsemble):
        for lam in lams:
            if estimator == "plugin":
                clusterings.append(plugin_estimate(ps, source, lam, delta, closed_edges=closed_edges))
            else:
                res = ballet_estimate(ps, source, lam, delta, p=p, cfg=cfg, closed_edges=closed_edges)
                clusterings.append(res.estimate)
    else:
        if estimator == "ballet":
            raise ValueError("the ballet estimator needs a draw ensemble, not a fixed density")
        dens = np.asarray(source, dtype=np.float64)
        for lam in lams:
            clusterings.append(surrogate_cluster(ps, dens, lam, delta, closed_edges=closed_edges))
    return tree_from_clusterings(lams, clusterings)


def persistent_clusters(tree: ClusterTree, strict: bool = True) -> set[tuple[int, int]]:
    """Walk up from every bottom-row cluster; keep the node reached at the top
    row or just below the first split.

    A node with several parents makes the walk ambiguous: with strict=True
    that raises; otherwise the parent with maximal overlap (ties to the
    smallest id) is taken.
    """
    bottom = len(tree.levels) - 1
    out: set[tuple[int, int]] = set()
    for cid in range(1, tree.clusterings[bottom].k + 1):
        level, cur = bottom, cid
        while level > 0:
            parents = tree.parents(level, cur)
            if not parents:
                break
            if len(parents) > 1:
                if strict:
                    raise InfeasibleError(
                        f"cluster {cur} at row {level} has {len(parents)} parents; "
                        "the level ladder does not form a tree"
                    )
                parents.sort(key=lambda pw: (-pw[1], pw[0]))
            parent = parents[0][0]
            if len(tree.children(level - 1, parent)) > 1:
                break
            level, cur = level - 1, parent
        out.add((level, cur))
    return out
