"""Density models feeding the clustering pipeline.

Three evaluators: a mixture of random histograms with a fast modular
posterior sampler (bin layouts drawn once from the prior, per-component bin
masses drawn conjugately), a uniform-kernel KDE, and a k-NN density. The
latter two exist mainly for the DBSCAN correspondences; the histogram mixture
is the workhorse posterior model.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConfigError, NumericError
from .levelset import PointSet, unit_ball_volume
from .risk import DensityDrawEnsemble
from .util import spawn_rngs

__all__ = [
    "HistogramMixtureConfig",
    "HistogramBins",
    "HistogramDensity",
    "HistogramPosterior",
    "default_domain",
    "sample_bins",
    "fit_histogram_posterior",
    "posterior_draw",
    "build_ensemble",
    "kde_uniform",
    "knn_density",
    "KdeUniformDensity",
    "KnnDensity",
]

_MAX_AXES = 3


@dataclass(frozen=True)
class HistogramMixtureConfig:
    """Mixture of K product-grid histograms, M_prime bins per axis.

    alpha_b controls bin-width regularity (larger = more even grids) and
    alpha_d is the concentration of the prior on per-bin masses. domain is a
    per-axis (low, high) tuple; None means the data bounding box inflated by
    one percent.
    """

    K: int = 50
    M_prime: int = 50
    alpha_b: float = 5.0
    alpha_d: float = 1.0
    domain: Optional[tuple[tuple[float, float], ...]] = None

    def __post_init__(self) -> None:
        if self.K < 1 or self.M_prime < 1:
            raise ValueError("K and M_prime must be >= 1")
        if not (self.alpha_b > 0 and np.isfinite(self.alpha_b)):
            raise ValueError("alpha_b must be positive and finite")
        if not (self.alpha_d > 0 and np.isfinite(self.alpha_d)):
            raise ValueError("alpha_d must be positive and finite")
        if self.domain is not None:
            for lo, hi in self.domain:
                if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                    raise ValueError(f"bad domain axis ({lo}, {hi})")


def default_domain(ps: PointSet, inflate: float = 0.01) -> tuple[tuple[float, float], ...]:
    """Data bounding box widened by `inflate` of each axis range (half per side)."""
    lo = ps.points.min(axis=0)
    hi = ps.points.max(axis=0)
    span = hi - lo
    pad = np.where(span > 0, 0.5 * inflate * span, 0.5)
    return tuple((float(a - p), float(b + p)) for a, b, p in zip(lo, hi, pad))


def _domain_array(domain) -> np.ndarray:
    arr = np.asarray(domain, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("domain must be a sequence of (low, high) pairs")
    return arr


class HistogramBins:
    """Fixed per-component grid cut points shared by all posterior draws.

    cuts has shape (K, d, M_prime + 1) with cuts[..., 0] and cuts[..., -1]
    exactly at the domain edges. Bin m on an axis is [u_0, u_1] for m = 1 and
    (u_{m-1}, u_m] after that, so the grid covers the domain exactly.
    """

    def __init__(self, cuts: np.ndarray, domain) -> None:
        cuts = np.ascontiguousarray(np.asarray(cuts, dtype=np.float64))
        dom = _domain_array(domain)
        if cuts.ndim != 3 or cuts.shape[2] < 2:
            raise ValueError(f"cuts must have shape (K, d, M_prime + 1), got {cuts.shape}")
        if cuts.shape[1] != dom.shape[0]:
            raise ValueError("cuts and domain disagree on the number of axes")
        if cuts.shape[1] > _MAX_AXES:
            raise ConfigError(f"histogram grids support at most {_MAX_AXES} axes")
        if not np.all(np.diff(cuts, axis=2) > 0):
            raise NumericError("grid cut points must be strictly increasing")
        if not (np.all(cuts[:, :, 0] == dom[:, 0]) and np.all(cuts[:, :, -1] == dom[:, 1])):
            raise ValueError("grid endpoints must coincide with the domain edges")
        cuts.setflags(write=False)
        self.cuts = cuts
        self.domain = dom
        widths = np.diff(cuts, axis=2)  # (K, d, M')
        K, d, mp = widths.shape
        areas = widths[:, 0, :]
        for a in range(1, d):
            areas = areas[:, :, None] * widths[:, a, None, :]
            areas = areas.reshape(K, -1)
        self.areas = areas  # (K, M) in row-major axis order
        self.total_area = float(np.prod(dom[:, 1] - dom[:, 0]))

    @property
    def K(self) -> int:
        return self.cuts.shape[0]

    @property
    def d(self) -> int:
        return self.cuts.shape[1]

    @property
    def M_prime(self) -> int:
        return self.cuts.shape[2] - 1

    @property
    def M(self) -> int:
        return self.M_prime ** self.d

    def bin_indices(self, X: np.ndarray) -> np.ndarray:
        """Flat bin index of each row of X for each component: (K, len(X)).

        Points must lie inside the domain; the first bin on each axis is
        closed, later bins are left-open.
        """
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        mp = self.M_prime
        out = np.empty((self.K, X.shape[0]), dtype=np.int64)
        dims = (mp,) * self.d
        for k in range(self.K):
            per_axis = tuple(
                np.searchsorted(self.cuts[k, a, 1:-1], X[:, a], side="left")
                for a in range(self.d)
            )
            out[k] = np.ravel_multi_index(per_axis, dims)
        return out

    def contains(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        dom = self.domain
        return np.all((X >= dom[:, 0]) & (X <= dom[:, 1]), axis=1)


def sample_bins(
    cfg: HistogramMixtureConfig,
    domain: Sequence[tuple[float, float]],
    rng: np.random.Generator,
) -> HistogramBins:
    """One draw of all K per-axis grids; reused for every posterior draw."""
    dom = _domain_array(domain)
    d = dom.shape[0]
    if d > _MAX_AXES:
        raise ConfigError(f"histogram grids support at most {_MAX_AXES} axes")
    mp = cfg.M_prime
    cuts = np.empty((cfg.K, d, mp + 1))
    for k in range(cfg.K):
        for a in range(d):
            frac = rng.dirichlet(np.full(mp, cfg.alpha_b))
            edges = dom[a, 0] + (dom[a, 1] - dom[a, 0]) * np.concatenate(([0.0], np.cumsum(frac)))
            edges[0] = dom[a, 0]
            edges[-1] = dom[a, 1]
            cuts[k, a] = edges
    return HistogramBins(cuts, dom)


class HistogramDensity:
    """One posterior draw: bin masses per component, evaluated as a density."""

    def __init__(self, bins: HistogramBins, masses: np.ndarray) -> None:
        masses = np.asarray(masses, dtype=np.float64)
        if masses.shape != (bins.K, bins.M):
            raise ValueError(f"masses must have shape {(bins.K, bins.M)}, got {masses.shape}")
        if not np.all(np.isfinite(masses)) or (masses < 0).any():
            raise NumericError("bin masses must be finite and nonnegative")
        self.bins = bins
        self.masses = masses
        self._rho = masses / bins.areas

    def __call__(self, X: np.ndarray) -> np.ndarray:
        """Density at each row of X; zero outside the domain."""
        X2 = np.atleast_2d(np.asarray(X, dtype=np.float64))
        scalar = np.asarray(X).ndim == 1
        out = np.zeros(X2.shape[0])
        inside = self.bins.contains(X2)
        if inside.any():
            idx = self.bins.bin_indices(X2[inside])
            acc = np.zeros(int(inside.sum()))
            for k in range(self.bins.K):
                acc += self._rho[k, idx[k]]
            out[inside] = acc / self.bins.K
        return float(out[0]) if scalar else out

    def integral(self) -> float:
        """Exact integral over the domain: the mixture-weighted total mass."""
        return float(self.masses.sum() / self.bins.K)


class HistogramPosterior:
    """Conjugate bin-mass posterior for a fixed bin layout and dataset."""

    def __init__(self, bins: HistogramBins, cfg: HistogramMixtureConfig,
                 counts: np.ndarray, data_bin_indices: np.ndarray) -> None:
        self.bins = bins
        self.cfg = cfg
        self.counts = counts  # (K, M) points per bin
        self.dirichlet_params = counts / cfg.K + cfg.alpha_d * bins.areas / bins.total_area
        self._data_idx = data_bin_indices  # (K, n) cached for fast data-point draws

    def sample(self, rng: np.random.Generator) -> HistogramDensity:
        masses = np.stack([rng.dirichlet(self.dirichlet_params[k]) for k in range(self.bins.K)])
        return HistogramDensity(self.bins, masses)

    def sample_at_data(self, rng: np.random.Generator) -> np.ndarray:
        """One posterior draw evaluated at the fitted data points."""
        K = self.bins.K
        row = np.zeros(self._data_idx.shape[1])
        for k in range(K):
            masses = rng.dirichlet(self.dirichlet_params[k])
            rho = masses / self.bins.areas[k]
            row += rho[self._data_idx[k]]
        return row / K


def fit_histogram_posterior(
    data: PointSet,
    bins: HistogramBins,
    cfg: HistogramMixtureConfig,
) -> HistogramPosterior:
    if data.d != bins.d:
        raise ConfigError(f"data has {data.d} axes but bins have {bins.d}")
    inside = bins.contains(data.points)
    if not inside.all():
        offenders = np.flatnonzero(~inside)
        shown = ", ".join(str(i) for i in offenders[:10])
        more = "" if offenders.size <= 10 else f" (+{offenders.size - 10} more)"
        raise ConfigError(f"{offenders.size} data points outside the domain: indices {shown}{more}")
    idx = bins.bin_indices(data.points)
    counts = np.stack([np.bincount(idx[k], minlength=bins.M) for k in range(bins.K)]).astype(np.float64)
    return HistogramPosterior(bins, cfg, counts, idx)


def posterior_draw(
    data: PointSet,
    bins: HistogramBins,
    cfg: HistogramMixtureConfig,
    rng: np.random.Generator,
) -> HistogramDensity:
    """One posterior density draw (convenience wrapper over the posterior)."""
    return fit_histogram_posterior(data, bins, cfg).sample(rng)


def build_ensemble(
    data: PointSet,
    cfg: HistogramMixtureConfig = HistogramMixtureConfig(),
    S: int = 100,
    seed: int = 0,
    bins: Optional[HistogramBins] = None,
) -> DensityDrawEnsemble:
    """S independent posterior density draws evaluated at the data points.

    Deterministic given seed: one RNG stream samples the bin layout (when not
    supplied), then each draw gets its own stream.
    """
    if S < 1:
        raise ValueError("S must be >= 1")
    rngs = spawn_rngs(seed, S + 1)
    domain = cfg.domain if cfg.domain is not None else default_domain(data)
    if bins is None:
        bins = sample_bins(cfg, domain, rngs[0])
    post = fit_histogram_posterior(data, bins, cfg)
    values = np.empty((S, data.n))
    for s in range(S):
        values[s] = post.sample_at_data(rngs[1 + s])
    return DensityDrawEnsemble(values)


class KdeUniformDensity:
    """Uniform-kernel KDE: ball-count over n times the ball volume."""

    def __init__(self, ps: PointSet, delta: float) -> None:
        if not (delta > 0 and np.isfinite(delta)):
            raise ValueError(f"delta must be positive and finite, got {delta}")
        self.n = ps.n
        self.d = ps.d
        self.delta = float(delta)
        self._tree = cKDTree(ps.points)
        self._norm = ps.n * unit_ball_volume(ps.d) * self.delta ** ps.d

    def __call__(self, X: np.ndarray) -> np.ndarray:
        X2 = np.atleast_2d(np.asarray(X, dtype=np.float64))
        scalar = np.asarray(X).ndim == 1
        counts = self._tree.query_ball_point(X2, self.delta, return_length=True)
        out = np.asarray(counts, dtype=np.float64) / self._norm
        return float(out[0]) if scalar else out


def kde_uniform(ps: PointSet, delta: float) -> KdeUniformDensity:
    return KdeUniformDensity(ps, delta)


class KnnDensity:
    """k-NN density: k over n times the volume of the k-th neighbor ball.

    The k-th nearest dataset point is counted over the whole dataset, so at a
    data point the point itself is its own first neighbor.
    """

    def __init__(self, ps: PointSet, k: int) -> None:
        if not (1 <= k <= ps.n):
            raise ValueError(f"k must be in [1, {ps.n}], got {k}")
        self.n = ps.n
        self.d = ps.d
        self.k = int(k)
        self._tree = cKDTree(ps.points)
        self._norm = ps.n * unit_ball_volume(ps.d)

    def __call__(self, X: np.ndarray) -> np.ndarray:
        X2 = np.atleast_2d(np.asarray(X, dtype=np.float64))
        scalar = np.asarray(X).ndim == 1
        dists, _ = self._tree.query(X2, k=self.k)
        dk = dists if self.k == 1 else dists[:, -1]
        dk = np.atleast_1d(np.asarray(dk, dtype=np.float64))
        with np.errstate(divide="ignore"):
            out = self.k / (self._norm * dk ** self.d)
        return float(out[0]) if scalar else out


def knn_density(ps: PointSet, k: int) -> KnnDensity:
    return KnnDensity(ps, k)
