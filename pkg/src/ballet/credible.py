"""Credible-ball radius and greedy lattice bounds around a point estimate.

The radius is an order statistic of the losses from the center to the draw
clusterings. The bounds walk the activity lattice greedily: the upper bound
activates inactive points by decreasing posterior activity probability, the
lower bound deactivates active points by increasing activity probability,
recomputing delta-graph components after each toggle and stopping just before
the state would leave the ball.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .levelset import GridIndex, PointSet, _component_labels, _find
from .risk import CoClusteringStats, precompute_stats
from .subpartition import DEFAULT_LOSS_PARAMS, LossParams, SubPartition, ia_binder_loss
from .util import canonical_json, order_statistic_ceil

__all__ = [
    "BoundStep",
    "CredibleBall",
    "credible_radius",
    "greedy_upper_bound",
    "greedy_lower_bound",
    "compute_credible_ball",
]


@dataclass(frozen=True)
class BoundStep:
    """One greedy toggle: which point, its activity probability, where the
    resulting state landed relative to the ball."""

    index: int
    alpha: float
    distance: float
    accepted: bool


def _center_distances(
    center: SubPartition,
    clusterings: Sequence[SubPartition],
    p: LossParams,
) -> np.ndarray:
    return np.asarray([ia_binder_loss(center, c, p) for c in clusterings])


def credible_radius(
    center: SubPartition,
    clusterings: Sequence[SubPartition],
    p: LossParams = DEFAULT_LOSS_PARAMS,
    alpha: float = 0.05,
) -> float:
    """Smallest radius whose Monte-Carlo coverage reaches 1 - alpha.

    This is the ceil((1 - alpha) * S)-th smallest loss from the center to the
    draw clusterings.
    """
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    if len(clusterings) == 0:
        raise ValueError("need at least one draw clustering")
    dists = _center_distances(center, clusterings, p)
    return float(order_statistic_ceil(dists, 1.0 - alpha))


def _activation_order(alpha_hat: np.ndarray, candidates: np.ndarray, largest_first: bool) -> np.ndarray:
    """Candidates sorted by activity probability, ties by smallest index."""
    key = -alpha_hat[candidates] if largest_first else alpha_hat[candidates]
    return candidates[np.lexsort((candidates, key))]


def greedy_upper_bound(
    center: SubPartition,
    ps: PointSet,
    delta: float,
    stats: CoClusteringStats,
    radius: float,
    p: LossParams = DEFAULT_LOSS_PARAMS,
    closed_edges: bool = False,
    trace: Optional[list] = None,
) -> SubPartition:
    """Last in-ball state of the greedy activation walk from the center.

    Activates the inactive point with the largest alpha-hat, recomputes the
    delta-graph components of the enlarged active set, and stops as soon as a
    state falls outside the ball. Activation only merges components, so the
    walk maintains a union-find incrementally.
    """
    if radius < 0:
        raise ValueError(f"radius must be nonnegative, got {radius}")
    _check_bound_inputs(center, ps, stats)
    n = ps.n
    active = np.zeros(n, dtype=bool)
    active[center.active_indices] = True
    order = _activation_order(stats.alpha, np.flatnonzero(~active), largest_first=True)
    grid = GridIndex(ps.points, delta)
    parent = np.arange(n)
    for i in center.active_indices.tolist():
        for j in grid.query_ball(ps.points[i], delta, closed=closed_edges).tolist():
            if j != i and active[j]:
                ri, rj = _find(parent, i), _find(parent, j)
                if ri != rj:
                    parent[rj] = ri
    best = center
    for idx in order.tolist():
        active[idx] = True
        for j in grid.query_ball(ps.points[idx], delta, closed=closed_edges).tolist():
            if j != idx and active[j]:
                ri, rj = _find(parent, idx), _find(parent, j)
                if ri != rj:
                    parent[rj] = ri
        labels = np.zeros(n, dtype=np.int64)
        act_idx = np.flatnonzero(active)
        roots = np.asarray([_find(parent, int(i)) for i in act_idx])
        labels[act_idx] = roots + 1  # SubPartition renumbers by first occurrence
        cand = SubPartition(labels)
        dist = ia_binder_loss(center, cand, p)
        accepted = dist <= radius
        if trace is not None:
            trace.append(BoundStep(int(idx), float(stats.alpha[idx]), dist, accepted))
        if not accepted:
            break
        best = cand
    return best


def greedy_lower_bound(
    center: SubPartition,
    ps: PointSet,
    delta: float,
    stats: CoClusteringStats,
    radius: float,
    p: LossParams = DEFAULT_LOSS_PARAMS,
    closed_edges: bool = False,
    trace: Optional[list] = None,
) -> SubPartition:
    """Last in-ball state of the greedy deactivation walk from the center.

    Symmetric to the upper bound: removes the active point with the smallest
    alpha-hat. Removal can split only the component the point belonged to, so
    just that component is rebuilt.
    """
    if radius < 0:
        raise ValueError(f"radius must be nonnegative, got {radius}")
    _check_bound_inputs(center, ps, stats)
    n = ps.n
    # start from the components of the center's own active set so the split
    # bookkeeping matches the graph, not the center's (possibly coarser) cells
    labels = _component_labels(ps.points, center.active_indices, delta, closed_edges)
    order = _activation_order(stats.alpha, center.active_indices, largest_first=False)
    best = center
    next_id = int(labels.max()) + 1
    for idx in order.tolist():
        comp = int(labels[idx])
        labels[idx] = 0
        members = np.flatnonzero(labels == comp)
        if members.size:
            rebuilt = _component_labels(ps.points, members, delta, closed_edges)
            piece = rebuilt[members]
            labels[members] = piece + next_id
            next_id += int(piece.max())
        cand = SubPartition(labels)
        dist = ia_binder_loss(center, cand, p)
        accepted = dist <= radius
        if trace is not None:
            trace.append(BoundStep(int(idx), float(stats.alpha[idx]), dist, accepted))
        if not accepted:
            break
        best = cand
    return best


def _check_bound_inputs(center: SubPartition, ps: PointSet, stats: CoClusteringStats) -> None:
    if center.n != ps.n:
        raise ValueError(f"center has n={center.n} but point set has n={ps.n}")
    if stats.n != ps.n:
        raise ValueError(f"stats have n={stats.n} but point set has n={ps.n}")


@dataclass(frozen=True)
class CredibleBall:
    """Ball summary: radius, achieved coverage, and the two greedy bounds."""

    center: SubPartition
    radius: float
    alpha: float
    coverage: float
    lower: SubPartition
    upper: SubPartition

    def to_json_dict(self) -> dict:
        return {
            "epsilon_star": self.radius,
            "alpha": self.alpha,
            "coverage": self.coverage,
            "lower": self.lower.to_json_dict(),
            "upper": self.upper.to_json_dict(),
        }

    def to_json(self) -> str:
        return canonical_json(self.to_json_dict())


def compute_credible_ball(
    center: SubPartition,
    ps: PointSet,
    delta: float,
    clusterings: Sequence[SubPartition],
    alpha: float = 0.05,
    p: LossParams = DEFAULT_LOSS_PARAMS,
    stats: Optional[CoClusteringStats] = None,
    closed_edges: bool = False,
) -> CredibleBall:
    """Radius, coverage, and both greedy bounds in one pass."""
    radius = credible_radius(center, clusterings, p, alpha)
    if stats is None:
        stats = precompute_stats(clusterings)
    dists = _center_distances(center, clusterings, p)
    coverage = float(np.count_nonzero(dists <= radius)) / len(clusterings)
    lower = greedy_lower_bound(center, ps, delta, stats, radius, p, closed_edges)
    upper = greedy_upper_bound(center, ps, delta, stats, radius, p, closed_edges)
    return CredibleBall(
        center=center, radius=radius, alpha=alpha, coverage=coverage, lower=lower, upper=upper
    )
