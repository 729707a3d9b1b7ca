"""Sub-partitions with a noise set, the IA-Binder loss, and lattice operations.

A sub-partition of items 0..n-1 assigns each item either to the noise set
(label 0) or to one of k clusters (labels 1..k). Two sub-partitions are equal
when they have the same active set and induce the same grouping on it; the
canonical form renumbers clusters by first occurrence, so equality and hashing
reduce to label-tuple equality.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

__all__ = [
    "SubPartition",
    "LossParams",
    "DEFAULT_LOSS_PARAMS",
    "NonMetricParamsWarning",
    "ia_binder_loss",
    "rescaled_distance",
    "pairwise_penalties",
    "pairwise_penalty_sum",
    "meet",
    "join",
    "precedes",
    "hasse_successors",
    "enumerate_subpartitions",
]


class NonMetricParamsWarning(UserWarning):
    """Raised as a warning when a distance is requested outside metric mode."""


@dataclass(frozen=True)
class LossParams:
    """Penalty weights for the IA-Binder loss.

    a: penalty for a pair clustered together in the first argument but apart
       in the second; b: the reverse. m_ai: per-pair penalty for a point active
       in the first argument but inactive in the second; m_ia: the reverse.
    Metric mode (symmetric a = b <= 1, m_ai = m_ia <= 1, a <= 2m) is what makes
    the rescaled distance a true metric.
    """

    a: float = 1.0
    b: float = 1.0
    m_ai: float = 0.5
    m_ia: float = 0.5

    def __post_init__(self) -> None:
        for name in ("a", "b", "m_ai", "m_ia"):
            v = float(getattr(self, name))
            if not np.isfinite(v) or v <= 0.0:
                raise ValueError(f"LossParams.{name} must be a positive finite real, got {v!r}")
            object.__setattr__(self, name, v)

    @property
    def is_metric(self) -> bool:
        return (
            self.a == self.b
            and self.m_ai == self.m_ia
            and 0.0 < self.a <= 1.0
            and self.m_ai <= 1.0
            and self.a <= 2.0 * self.m_ai
        )


DEFAULT_LOSS_PARAMS = LossParams()


def _canonical_labels(labels: Iterable[int]) -> tuple[int, ...]:
    out: list[int] = []
    remap: dict[int, int] = {}
    for raw in labels:
        v = int(raw)
        if v != raw:
            raise ValueError(f"labels must be integers, got {raw!r}")
        if v < 0:
            raise ValueError(f"labels must be >= 0 (0 = noise), got {v}")
        if v == 0:
            out.append(0)
        else:
            if v not in remap:
                remap[v] = len(remap) + 1
            out.append(remap[v])
    return tuple(out)


class SubPartition:
    """Immutable allocation vector; 0 = noise, 1..k = clusters (canonical order)."""

    __slots__ = ("_labels", "_array", "_hash")

    def __init__(self, labels: Iterable[int]):
        canon = _canonical_labels(labels)
        object.__setattr__(self, "_labels", canon)
        arr = np.asarray(canon, dtype=np.int64)
        arr.setflags(write=False)
        object.__setattr__(self, "_array", arr)
        object.__setattr__(self, "_hash", hash(canon))

    def __setattr__(self, name, value):  # immutability guard
        raise AttributeError("SubPartition is immutable")

    @classmethod
    def from_labels(cls, labels: Iterable[int]) -> "SubPartition":
        return cls(labels)

    @classmethod
    def all_noise(cls, n: int) -> "SubPartition":
        return cls([0] * n)

    @property
    def labels(self) -> tuple[int, ...]:
        return self._labels

    @property
    def labels_array(self) -> np.ndarray:
        return self._array

    @property
    def n(self) -> int:
        return len(self._labels)

    @property
    def k(self) -> int:
        return int(self._array.max(initial=0))

    @property
    def active_indices(self) -> np.ndarray:
        return np.flatnonzero(self._array != 0)

    @property
    def noise_indices(self) -> np.ndarray:
        return np.flatnonzero(self._array == 0)

    @property
    def is_all_noise(self) -> bool:
        return bool((self._array == 0).all())

    def clusters(self) -> list[frozenset[int]]:
        """Clusters as index sets, ordered by cluster id."""
        return [frozenset(np.flatnonzero(self._array == h).tolist()) for h in range(1, self.k + 1)]

    def __eq__(self, other) -> bool:
        if not isinstance(other, SubPartition):
            return NotImplemented
        return self._labels == other._labels

    def __hash__(self) -> int:
        return self._hash

    def __repr__(self) -> str:
        return f"SubPartition({list(self._labels)!r})"

    # -- serialization ------------------------------------------------------

    def to_json_dict(self) -> dict:
        return {"n": self.n, "labels": list(self._labels)}

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)

    @classmethod
    def from_json_dict(cls, obj: dict) -> "SubPartition":
        if not isinstance(obj, dict) or "n" not in obj or "labels" not in obj:
            raise ValueError("sub-partition JSON must have keys 'n' and 'labels'")
        labels = obj["labels"]
        if int(obj["n"]) != len(labels):
            raise ValueError(f"declared n={obj['n']} does not match {len(labels)} labels")
        return cls(labels)

    @classmethod
    def from_json(cls, text: str) -> "SubPartition":
        return cls.from_json_dict(json.loads(text))

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="ascii") as fh:
            for v in self._labels:
                fh.write(f"{v}\n")

    @classmethod
    def from_csv(cls, path) -> "SubPartition":
        with open(path, "r", encoding="ascii") as fh:
            rows = [line.strip() for line in fh if line.strip() != ""]
        return cls([int(r) for r in rows])


# -- IA-Binder loss ---------------------------------------------------------


def _check_same_n(c1: SubPartition, c2: SubPartition) -> None:
    if c1.n != c2.n:
        raise ValueError(f"sub-partitions over different item counts: {c1.n} != {c2.n}")


def _pair_disagreement_counts(g1: np.ndarray, g2: np.ndarray) -> tuple[int, int]:
    """Counts over pairs active in both: (together in 1 / apart in 2, apart in 1 / together in 2).

    Contingency-table arithmetic keeps this O(n): pairs co-clustered in one
    labeling are sums of C(size, 2) over its clusters, and pairs co-clustered
    in both are the same sums over the joint cells. All counts are exact ints.
    """
    if g1.size < 2:
        return 0, 0

    def same_pairs(sizes: np.ndarray) -> int:
        return int((sizes * (sizes - 1) // 2).sum())

    s1 = same_pairs(np.bincount(g1))
    s2 = same_pairs(np.bincount(g2))
    k2 = int(g2.max()) + 1
    joint = g1.astype(np.int64) * k2 + g2
    s12 = same_pairs(np.bincount(joint))
    return s1 - s12, s2 - s12


def ia_binder_loss(c1: SubPartition, c2: SubPartition, p: LossParams = DEFAULT_LOSS_PARAMS) -> float:
    """IA-Binder loss between two sub-partitions of the same n items.

    Activity mismatches cost (n-1)*m_ai (active -> inactive) or (n-1)*m_ia
    (inactive -> active) per point; pairs active in both cost a when split and
    b when merged relative to the first argument. n = 1 is degenerate (always 0).
    """
    _check_same_n(c1, c2)
    n = c1.n
    if n == 0:
        return 0.0
    l1 = c1.labels_array
    l2 = c2.labels_array
    a1 = l1 != 0
    a2 = l2 != 0
    cnt_ai = int(np.count_nonzero(a1 & ~a2))
    cnt_ia = int(np.count_nonzero(~a1 & a2))
    both = a1 & a2
    c_split, c_merge = _pair_disagreement_counts(l1[both], l2[both])
    if p.m_ai == p.m_ia and p.a == p.b:
        # single-rounding form; bit-identical to pairwise_penalty_sum
        return p.m_ai * float((n - 1) * (cnt_ai + cnt_ia)) + p.a * float(c_split + c_merge)
    return (
        p.m_ai * float((n - 1) * cnt_ai)
        + p.m_ia * float((n - 1) * cnt_ia)
        + p.a * float(c_split)
        + p.b * float(c_merge)
    )


def rescaled_distance(c1: SubPartition, c2: SubPartition, p: LossParams = DEFAULT_LOSS_PARAMS) -> float:
    """Loss divided by C(n, 2); a metric on sub-partitions in metric mode.

    Outside metric mode the value is still returned but a
    NonMetricParamsWarning is issued: symmetry or the triangle inequality may
    fail. n < 2 returns 0.0 (no pairs to compare).
    """
    if not p.is_metric:
        warnings.warn(
            "loss parameters are outside metric mode; rescaled value is not a metric",
            NonMetricParamsWarning,
            stacklevel=2,
        )
    _check_same_n(c1, c2)
    n = c1.n
    if n < 2:
        return 0.0
    return ia_binder_loss(c1, c2, p) / float(n * (n - 1) // 2)


def pairwise_penalties(c1: SubPartition, c2: SubPartition, p: LossParams = DEFAULT_LOSS_PARAMS) -> np.ndarray:
    """Per-pair penalty matrix phi with values in {0, a, m, 2m} (metric mode only).

    phi[i, j] charges m for each endpoint whose activity differs between the
    two sub-partitions, plus a when both endpoints have consistent activity in
    both but the together/apart relation flips. Symmetric, zero diagonal;
    the sum over i < j equals ia_binder_loss exactly.
    """
    if not (p.a == p.b and p.m_ai == p.m_ia):
        raise ValueError("pairwise penalties require metric-mode parameters (a == b, m_ai == m_ia)")
    _check_same_n(c1, c2)
    l1 = c1.labels_array
    l2 = c2.labels_array
    a1 = l1 != 0
    a2 = l2 != 0
    mismatch = a1 != a2
    consistent = ~mismatch
    # relation: together iff same cluster, or both noise
    same1 = (l1[:, None] == l1[None, :]) & (a1[:, None] & a1[None, :])
    same1 |= ~a1[:, None] & ~a1[None, :]
    same2 = (l2[:, None] == l2[None, :]) & (a2[:, None] & a2[None, :])
    same2 |= ~a2[:, None] & ~a2[None, :]
    both_consistent = consistent[:, None] & consistent[None, :]
    phi = p.m_ai * (mismatch[:, None].astype(np.float64) + mismatch[None, :].astype(np.float64))
    phi += p.a * ((same1 != same2) & both_consistent).astype(np.float64)
    np.fill_diagonal(phi, 0.0)
    return phi


def pairwise_penalty_sum(c1: SubPartition, c2: SubPartition, p: LossParams = DEFAULT_LOSS_PARAMS) -> float:
    """Sum of per-pair penalties over i < j; equals ia_binder_loss bit-exactly.

    Summed by integer class counts (how many pairs incur m, 2m, and a), then
    combined with one multiplication per class, so no float accumulation order
    can make it drift from the closed-form loss.
    """
    if not (p.a == p.b and p.m_ai == p.m_ia):
        raise ValueError("pairwise penalties require metric-mode parameters (a == b, m_ai == m_ia)")
    _check_same_n(c1, c2)
    n = c1.n
    if n < 2:
        return 0.0
    l1 = c1.labels_array
    l2 = c2.labels_array
    a1 = l1 != 0
    a2 = l2 != 0
    n_mismatch = int(np.count_nonzero(a1 != a2))
    # each mismatched endpoint is charged m in n-1 pairs
    m_incidences = (n - 1) * n_mismatch
    both = a1 & a2
    c_split, c_merge = _pair_disagreement_counts(l1[both], l2[both])
    # pairs inactive in both on both sides have equal relation; mixed pairs are
    # excluded by the consistency indicator, so a-pairs reduce to the active ones
    return p.m_ai * float(m_incidences) + p.a * float(c_split + c_merge)


# -- lattice operations -----------------------------------------------------


def meet(c1: SubPartition, c2: SubPartition) -> SubPartition:
    """Greatest lower bound: nonempty pairwise intersections of clusters."""
    _check_same_n(c1, c2)
    l1 = c1.labels_array
    l2 = c2.labels_array
    both = (l1 != 0) & (l2 != 0)
    out = np.zeros(c1.n, dtype=np.int64)
    k2 = int(l2.max(initial=0)) + 1
    out[both] = l1[both] * k2 + l2[both]  # distinct positive code per joint cell
    return SubPartition(out)


def join(c1: SubPartition, c2: SubPartition) -> SubPartition:
    """Least upper bound: union of clusters, merging chains that overlap."""
    _check_same_n(c1, c2)
    l1 = c1.labels_array
    l2 = c2.labels_array
    k1 = int(l1.max(initial=0))
    k2 = int(l2.max(initial=0))
    # union-find over cluster nodes: 0..k1-1 from c1, k1..k1+k2-1 from c2
    parent = list(range(k1 + k2))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(x: int, y: int) -> None:
        rx, ry = find(x), find(y)
        if rx != ry:
            parent[ry] = rx

    for v1, v2 in zip(l1.tolist(), l2.tolist()):
        if v1 != 0 and v2 != 0:
            union(v1 - 1, k1 + v2 - 1)
    out = np.zeros(c1.n, dtype=np.int64)
    for i, (v1, v2) in enumerate(zip(l1.tolist(), l2.tolist())):
        if v1 != 0:
            out[i] = find(v1 - 1) + 1
        elif v2 != 0:
            out[i] = find(k1 + v2 - 1) + 1
    return SubPartition(out)


def precedes(c1: SubPartition, c2: SubPartition) -> bool:
    """Partial order: every cluster of c1 is contained in a single cluster of c2."""
    _check_same_n(c1, c2)
    l1 = c1.labels_array
    l2 = c2.labels_array
    active1 = l1 != 0
    if np.any(active1 & (l2 == 0)):
        return False
    for h in range(1, int(l1.max(initial=0)) + 1):
        targets = np.unique(l2[l1 == h])
        if targets.size > 1:
            return False
    return True


def hasse_successors(c: SubPartition) -> list[SubPartition]:
    """Covers of c in the lattice: merge two clusters, or add a noise singleton."""
    out: list[SubPartition] = []
    arr = c.labels_array
    k = c.k
    for h1 in range(1, k + 1):
        for h2 in range(h1 + 1, k + 1):
            merged = arr.copy()
            merged[merged == h2] = h1
            out.append(SubPartition(merged))
    for i in c.noise_indices.tolist():
        added = arr.copy()
        added[i] = k + 1
        out.append(SubPartition(added))
    return out


def enumerate_subpartitions(n: int) -> Iterator[SubPartition]:
    """All sub-partitions of n items, in restricted-growth order; Bell(n+1) of them.

    Sub-partitions of n items biject with set partitions of n+1 items where an
    anchor item marks the noise block, so the enumeration walks restricted
    growth strings of length n+1 with the anchor first. Yielded labels are
    already canonical.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    if n == 0:
        yield SubPartition([])
        return
    rgs = [0] * (n + 1)

    def rec(i: int, top: int) -> Iterator[SubPartition]:
        if i == n + 1:
            yield SubPartition(rgs[1:])
            return
        for v in range(top + 2):
            rgs[i] = v
            yield from rec(i + 1, max(top, v))

    yield from rec(1, 0)
