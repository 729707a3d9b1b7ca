import numpy as np
import pytest

from ballet.density import (
    HistogramBins,
    HistogramDensity,
    HistogramMixtureConfig,
    build_ensemble,
    default_domain,
    fit_histogram_posterior,
    kde_uniform,
    knn_density,
    posterior_draw,
    sample_bins,
)
from ballet.errors import ConfigError, NumericError
from ballet.levelset import PointSet, dbscan_star, surrogate_cluster, unit_ball_volume

trapezoid = getattr(np, "trapezoid", None) or np.trapz

UNIT_SQUARE = ((0.0, 1.0), (0.0, 1.0))


def hand_bins():
    """Two components on the unit square, M_prime = 2, hand-chosen cuts."""
    cuts = np.array([
        [[0.0, 0.5, 1.0], [0.0, 0.5, 1.0]],
        [[0.0, 0.25, 1.0], [0.0, 0.75, 1.0]],
    ])
    return HistogramBins(cuts, UNIT_SQUARE)


# -- config and domain ---------------------------------------------------------


def test_config_validation():
    with pytest.raises(ValueError):
        HistogramMixtureConfig(K=0)
    with pytest.raises(ValueError):
        HistogramMixtureConfig(M_prime=0)
    with pytest.raises(ValueError):
        HistogramMixtureConfig(alpha_b=0.0)
    with pytest.raises(ValueError):
        HistogramMixtureConfig(alpha_d=-1.0)
    with pytest.raises(ValueError):
        HistogramMixtureConfig(domain=((1.0, 0.0),))


def test_default_domain_inflates_by_one_percent():
    ps = PointSet(np.array([[0.0, 10.0], [2.0, 30.0]]))
    dom = default_domain(ps)
    assert dom[0] == (-0.01, 2.01)
    assert dom[1] == (9.9, 30.1)


def test_default_domain_degenerate_axis():
    ps = PointSet(np.array([[1.0], [1.0]]))
    (lo, hi), = default_domain(ps)
    assert lo < 1.0 < hi


# -- bin sampling ---------------------------------------------------------------


def test_sample_bins_single_bin_is_domain():
    cfg = HistogramMixtureConfig(K=3, M_prime=1)
    bins = sample_bins(cfg, ((2.0, 5.0), (-1.0, 1.0)), np.random.default_rng(0))
    assert bins.M == 1
    assert np.all(bins.cuts[:, 0, 0] == 2.0) and np.all(bins.cuts[:, 0, 1] == 5.0)
    assert np.all(bins.cuts[:, 1, 0] == -1.0) and np.all(bins.cuts[:, 1, 1] == 1.0)
    assert np.allclose(bins.areas, 6.0)


def test_sample_bins_strictly_increasing_with_exact_endpoints():
    cfg = HistogramMixtureConfig(K=4, M_prime=7)
    bins = sample_bins(cfg, ((0.0, 1.0), (3.0, 9.0)), np.random.default_rng(1))
    assert np.all(np.diff(bins.cuts, axis=2) > 0)
    assert np.all(bins.cuts[:, 0, 0] == 0.0) and np.all(bins.cuts[:, 0, -1] == 1.0)
    assert np.all(bins.cuts[:, 1, 0] == 3.0) and np.all(bins.cuts[:, 1, -1] == 9.0)


def test_sample_bins_concentration_large_alpha_b():
    # huge concentration: every cut fraction is within 2% of 1/M_prime
    cfg = HistogramMixtureConfig(K=2, M_prime=10, alpha_b=1e8)
    bins = sample_bins(cfg, ((0.0, 1.0),), np.random.default_rng(2))
    fracs = np.diff(bins.cuts, axis=2)
    assert np.all(np.abs(fracs - 0.1) <= 0.02 * 0.1)


def test_sample_bins_mean_fraction_matches_prior_mean():
    cfg = HistogramMixtureConfig(K=1, M_prime=5, alpha_b=5.0)
    rng = np.random.default_rng(3)
    fracs = []
    for _ in range(8000):
        bins = sample_bins(cfg, ((0.0, 1.0),), rng)
        fracs.append(np.diff(bins.cuts[0, 0]))
    mean = np.mean(fracs, axis=0)
    assert np.all(np.abs(mean - 0.2) <= 0.02 * 0.2)


def test_sample_bins_rejects_high_dimension():
    cfg = HistogramMixtureConfig(K=1, M_prime=2)
    with pytest.raises(ConfigError):
        sample_bins(cfg, ((0.0, 1.0),) * 4, np.random.default_rng(0))


def test_bins_validation_errors():
    with pytest.raises(NumericError):
        HistogramBins(np.array([[[0.0, 0.5, 0.5]]]), ((0.0, 0.5),))
    with pytest.raises(ValueError):
        HistogramBins(np.array([[[0.0, 0.5, 0.9]]]), ((0.0, 1.0),))


# -- bin lookup ----------------------------------------------------------------


def test_bin_indices_boundary_conventions():
    bins = hand_bins()
    # first bin closed on both axes: the shared cut belongs to the lower bin
    idx = bins.bin_indices(np.array([[0.5, 0.5], [0.5000001, 0.5], [0.0, 0.0], [1.0, 1.0]]))
    assert idx[0].tolist() == [0, 2, 0, 3]
    # component 1 cuts at x=0.25, y=0.75
    idx1 = bins.bin_indices(np.array([[0.25, 0.75], [0.26, 0.76]]))
    assert idx1[1].tolist() == [0, 3]


def test_hand_fixture_counts_and_dirichlet_params():
    bins = hand_bins()
    cfg = HistogramMixtureConfig(K=2, M_prime=2, alpha_d=1.0)
    data = PointSet(np.array([[0.1, 0.1], [0.6, 0.2], [0.3, 0.8], [0.9, 0.9]]))
    post = fit_histogram_posterior(data, bins, cfg)
    assert post.counts[0].tolist() == [1.0, 1.0, 1.0, 1.0]
    assert post.counts[1].tolist() == [1.0, 0.0, 1.0, 2.0]
    assert np.array_equal(post.dirichlet_params[0], [0.75, 0.75, 0.75, 0.75])
    expected1 = np.array([1 / 2 + 0.1875, 0.0625, 1 / 2 + 0.5625, 1.0 + 0.1875])
    assert np.allclose(post.dirichlet_params[1], expected1, atol=1e-15)


def test_fit_rejects_points_outside_domain():
    bins = hand_bins()
    cfg = HistogramMixtureConfig(K=2, M_prime=2)
    data = PointSet(np.array([[0.1, 0.1], [1.5, 0.2], [-0.3, 0.8]]))
    with pytest.raises(ConfigError, match="1, 2"):
        fit_histogram_posterior(data, bins, cfg)


# -- posterior draws -----------------------------------------------------------


def test_single_bin_posterior_is_uniform_density():
    cfg = HistogramMixtureConfig(K=1, M_prime=1)
    dom = ((0.0, 2.0), (0.0, 2.0))
    bins = sample_bins(cfg, dom, np.random.default_rng(0))
    data = PointSet(np.array([[0.5, 0.5], [1.5, 1.5]]))
    f = posterior_draw(data, bins, cfg, np.random.default_rng(4))
    assert f(np.array([0.3, 1.9])) == 0.25
    assert f(np.array([[1.0, 1.0], [0.0, 0.0]])).tolist() == [0.25, 0.25]
    assert f(np.array([2.5, 0.5])) == 0.0


def test_posterior_draw_is_proper_density():
    rng = np.random.default_rng(5)
    cfg = HistogramMixtureConfig(K=4, M_prime=6)
    data = PointSet(rng.random((30, 2)))
    bins = sample_bins(cfg, default_domain(data), rng)
    f = posterior_draw(data, bins, cfg, rng)
    assert f.integral() == pytest.approx(1.0, abs=1e-12)
    assert np.all(f.masses >= 0)
    assert np.allclose(f.masses.sum(axis=1), 1.0, atol=1e-12)
    grid = np.stack(np.meshgrid(np.linspace(0, 1, 20), np.linspace(0, 1, 20)), axis=-1).reshape(-1, 2)
    assert np.all(f(grid) >= 0)


def test_density_evaluator_validation():
    bins = hand_bins()
    with pytest.raises(ValueError):
        HistogramDensity(bins, np.ones((2, 3)))
    with pytest.raises(NumericError):
        HistogramDensity(bins, -np.ones((2, 4)))


# -- ensembles -----------------------------------------------------------------


def test_build_ensemble_deterministic_under_seed():
    rng = np.random.default_rng(6)
    data = PointSet(rng.random((50, 2)))
    cfg = HistogramMixtureConfig(K=3, M_prime=4)
    a = build_ensemble(data, cfg, S=5, seed=9)
    b = build_ensemble(data, cfg, S=5, seed=9)
    c = build_ensemble(data, cfg, S=5, seed=10)
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)
    assert a.S == 5 and a.n == 50


def test_fast_data_evaluation_matches_evaluator():
    rng = np.random.default_rng(7)
    data = PointSet(rng.random((25, 2)))
    cfg = HistogramMixtureConfig(K=3, M_prime=5)
    bins = sample_bins(cfg, default_domain(data), np.random.default_rng(8))
    post = fit_histogram_posterior(data, bins, cfg)
    fast = post.sample_at_data(np.random.default_rng(11))
    f = post.sample(np.random.default_rng(11))
    assert np.array_equal(fast, f(data.points))


def test_ensemble_mean_orders_dense_above_empty_region():
    rng = np.random.default_rng(12)
    dense = rng.normal(0.25, 0.02, (200, 2))
    sparse = rng.normal(0.75, 0.02, (8, 2))
    data = PointSet(np.clip(np.concatenate([dense, sparse]), 0.0, 1.0))
    cfg = HistogramMixtureConfig(K=5, M_prime=8, domain=UNIT_SQUARE)
    e = build_ensemble(data, cfg, S=20, seed=13)
    mean = e.posterior_mean()
    assert mean[:200].mean() > 10 * mean[200:].mean()


def test_build_ensemble_one_and_three_axes():
    rng = np.random.default_rng(14)
    cfg = HistogramMixtureConfig(K=2, M_prime=3)
    e1 = build_ensemble(PointSet(rng.random((20, 1))), cfg, S=3, seed=0)
    assert e1.values.shape == (3, 20)
    e3 = build_ensemble(PointSet(rng.random((20, 3))), cfg, S=3, seed=0)
    assert e3.values.shape == (3, 20)
    with pytest.raises(ConfigError):
        build_ensemble(PointSet(rng.random((20, 4))), cfg, S=3, seed=0)


# -- uniform-kernel KDE --------------------------------------------------------


def test_kde_uniform_single_point_value():
    ps = PointSet(np.array([[3.0]]))
    f = kde_uniform(ps, delta=0.25)
    assert f(np.array([3.0])) == 1.0 / (2 * 0.25)
    assert f(np.array([3.2])) == 1.0 / (2 * 0.25)  # boundary is included
    assert f(np.array([3.3])) == 0.0


def test_kde_uniform_integral_by_quadrature():
    ps = PointSet(np.array([[0.0], [0.4], [1.1], [2.0], [2.05]]))
    delta = 0.3
    f = kde_uniform(ps, delta)
    xs = np.linspace(-1.0, 3.0, 120_001)
    vals = f(xs[:, None])
    assert trapezoid(vals, xs) == pytest.approx(1.0, abs=1e-3)


def test_kde_uniform_validation():
    ps = PointSet(np.zeros((3, 2)))
    with pytest.raises(ValueError):
        kde_uniform(ps, 0.0)


# -- k-NN density --------------------------------------------------------------


def test_knn_density_hand_value():
    ps = PointSet(np.array([[0.0], [1.0], [3.0], [7.0]]))
    f = knn_density(ps, k=1)
    # query 0.5 sits at distance 0.5 from its nearest data point
    assert f(np.array([0.5])) == 1.0 / (4 * 2 * 0.5)


def test_knn_density_counts_self_at_data_points():
    ps = PointSet(np.array([[0.0], [1.0], [3.0], [7.0]]))
    f = knn_density(ps, k=2)
    # at x=0 the first neighbor is the point itself, the second is x=1
    assert f(np.array([0.0])) == 2.0 / (4 * 2 * 1.0)


def test_knn_density_scaling_homogeneity():
    rng = np.random.default_rng(15)
    pts = rng.random((30, 2))
    queries = rng.random((10, 2)) * 0.8 + 0.1
    f1 = knn_density(PointSet(pts), k=4)
    f2 = knn_density(PointSet(pts * 2.0), k=4)
    assert np.array_equal(f1(queries) / 4.0, f2(queries * 2.0))


def test_knn_density_validation():
    ps = PointSet(np.zeros((3, 1)))
    with pytest.raises(ValueError):
        knn_density(ps, 0)
    with pytest.raises(ValueError):
        knn_density(ps, 4)


# -- DBSCAN* correspondences ---------------------------------------------------


def test_uniform_kernel_level_set_equals_dbscan_star():
    rng = np.random.default_rng(16)
    pts = np.concatenate([
        rng.normal(0.0, 0.5, (40, 2)),
        rng.normal(3.0, 0.5, (30, 2)),
        rng.uniform(-2, 5, (15, 2)),
    ])
    ps = PointSet(pts)
    n, d = ps.n, ps.d
    for eps, min_pts in [(0.3, 3), (0.5, 5), (0.8, 10), (0.25, 2)]:
        f = kde_uniform(ps, eps)
        lam = min_pts / (n * unit_ball_volume(d) * eps ** d)
        via_level_set = surrogate_cluster(ps, f(ps.points), lam, eps, closed_edges=True)
        via_dbscan = dbscan_star(ps, eps=eps, min_pts=min_pts)
        assert via_level_set.labels == via_dbscan.labels


def test_knn_level_set_equals_dbscan_star():
    rng = np.random.default_rng(17)
    pts = np.concatenate([
        rng.normal(0.0, 0.4, (35, 2)),
        rng.normal((4.0, 1.0), 0.6, (35, 2)),
    ])
    ps = PointSet(pts)
    n, d = ps.n, ps.d
    for eps, k in [(0.35, 3), (0.6, 6), (1.0, 12)]:
        f = knn_density(ps, k)
        lam = k / (n * unit_ball_volume(d) * eps ** d)
        via_level_set = surrogate_cluster(ps, f(ps.points), lam, eps, closed_edges=True)
        via_dbscan = dbscan_star(ps, eps=eps, min_pts=k)
        assert via_level_set.labels == via_dbscan.labels
