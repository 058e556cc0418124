import numpy as np
import pytest
from scipy import stats

from fiberk.density import DensityModel, LinearTrend
from fiberk.errors import EmptyDataError, IllConditionedCovarianceError, InvalidSpecError
from fiberk.fibers import CubicCurve, Fiber, Polyline, SamplingConfig, Segment
from fiberk.geometry import ORIENTED, UNORIENTED, Window
from fiberk.kstat import KGrid
from fiberk.simulate import (
    DependentModelSpec,
    FiberPattern,
    NullModelSpec,
    correlated_gaussian,
    envelope,
    exponential_covariance,
    hits_window,
    resample_null,
    restrict_to_window,
    sample_poisson_linear,
    simulate_dependent,
    simulate_null,
)

W20 = Window((20.0, 20.0))
BETA = (3.5, -0.15, 0.0)


def test_germ_count_linear_trend():
    counts = np.array([W20.contains(sample_poisson_linear(W20, LinearTrend(BETA), 1.0, s)).sum() for s in range(300)])
    se = np.sqrt(800 / len(counts))
    assert abs(counts.mean() - 800) < 3 * se


def test_germ_count_dilated_box():
    # integral of the trend over [-1, 21]^2: mean over x of 3.5 - 0.15 x is 3.5 - 0.15 * 10
    expected = (3.5 - 1.5) * 22 * 22
    counts = np.array([len(sample_poisson_linear(W20, LinearTrend(BETA), 1.0, s)) for s in range(300)])
    assert abs(counts.mean() - expected) < 3 * np.sqrt(expected / len(counts))


def test_homogeneous_counts_are_poisson():
    w = Window((3.0, 2.0))
    counts = np.array([len(sample_poisson_linear(w, LinearTrend((1.5, 0, 0)), 0.5, s)) for s in range(500)])
    lam = 1.5 * 4.0 * 3.0
    # chi-square goodness of fit over pooled count classes
    edges = np.array([0, 12, 15, 17, 19, 21, 24, 1000])
    observed = np.histogram(counts, edges)[0]
    expected = np.diff(stats.poisson.cdf(edges - 1, lam)) * len(counts)
    assert stats.chisquare(observed, expected).pvalue > 0.01
    assert counts.var(ddof=1) == pytest.approx(lam, rel=0.2)


def test_germ_points_follow_trend():
    pts = np.concatenate([sample_poisson_linear(W20, LinearTrend(BETA), 0.0, s) for s in range(20)])
    # x-marginal density proportional to 3.5 - 0.15 x on [0, 20]
    cdf = lambda x: (3.5 * x - 0.075 * x**2) / 40.0
    assert stats.kstest(pts[:, 0], cdf).pvalue > 0.01


def test_zero_trend_and_negative_trend():
    assert len(sample_poisson_linear(W20, LinearTrend((0, 0, 0)), 1.0, 1)) == 0
    with pytest.raises(InvalidSpecError):
        sample_poisson_linear(W20, LinearTrend((1.0, -0.1, 0)), 1.0, 1)
    with pytest.raises(InvalidSpecError):
        NullModelSpec(W20, (1.0, -0.1, 0.0), 2.0)  # negative at x = 20 + margin
        simulate_null(NullModelSpec(W20, (1.0, -0.1, 0.0), 2.0))


def test_null_true_model_and_determinism():
    spec = NullModelSpec(W20, BETA, 2.0, UNORIENTED, seed=7)
    p1, model = simulate_null(spec)
    p2, _ = simulate_null(spec)
    assert model.trend.beta == BETA
    assert len(p1) == len(p2)
    for a, b in zip(p1.fibers, p2.fibers):
        np.testing.assert_array_equal(a.geometry.midpoint, b.geometry.midpoint)
        np.testing.assert_array_equal(a.geometry.direction, b.geometry.direction)
    assert 700 < len(p1) < 950  # about 800 germs in W plus fibers reaching in from outside


def test_null_lengths_and_directions():
    lengths, angles = [], []
    for s in range(20):
        p, _ = simulate_null(NullModelSpec(W20, BETA, 2.0, UNORIENTED, seed=s))
        for f in p.fibers:
            g = f.geometry
            if np.all((g.midpoint > 1.0) & (g.midpoint < 19.0)):  # kept whatever its length
                lengths.append(g.length)
                angles.append(np.arctan2(g.direction[1], g.direction[0]))
    assert stats.kstest(lengths, stats.uniform(0, 2).cdf).pvalue > 0.01
    assert np.min(angles) >= 0 and np.max(angles) <= np.pi
    counts = np.histogram(angles, np.linspace(0, np.pi, 13))[0]
    assert stats.chisquare(counts).pvalue > 0.01
    assert np.mean(lengths) == pytest.approx(1.0, abs=0.02)


def test_null_small_length_limit():
    p, _ = simulate_null(NullModelSpec(Window((10.0, 10.0)), (2.0, 0.0, 0.0), 0.01, seed=3))
    assert p.lengths().sum() / len(p) == pytest.approx(0.005, rel=0.05)


def test_null_3d_oriented():
    p, model = simulate_null(NullModelSpec(Window((5.0, 5.0, 5.0)), (1.0, 0.0, 0.0, 0.02), 2.0, ORIENTED, seed=1))
    assert p.dim == 3 and len(p) > 100
    assert model.trend.beta == (1.0, 0.0, 0.0, 0.02)


def test_dependent_sigma_for_unit_mean_length():
    spec = DependentModelSpec(W20, BETA)
    assert spec.sigma == pytest.approx(1 / np.sqrt(2 * np.pi), rel=1e-14)
    assert spec.fiber_mean_length == pytest.approx(1.0)
    assert spec.true_model().trend.beta == pytest.approx(BETA)


def test_dependent_mean_length_and_determinism():
    spec = DependentModelSpec(Window((10.0, 10.0)), (2.0, 0.0, 0.0), 1.0, seed=4)
    p1, _ = simulate_dependent(spec)
    p2, _ = simulate_dependent(spec)
    np.testing.assert_array_equal(p1.lengths(), p2.lengths())
    lengths = np.concatenate([simulate_dependent(DependentModelSpec(Window((10.0, 10.0)), (2.0, 0, 0), 1.0, seed=s))[0].lengths() for s in range(10)])
    assert lengths.mean() == pytest.approx(1.0, abs=0.05)


def test_grf_marginal_and_covariance():
    pts = np.array([[0.0, 0.0], [1.0, 0.0]])
    sigma, scale = 0.7, 2.0
    cov = exponential_covariance(pts, sigma, scale)
    draws = np.array([correlated_gaussian(cov, 1, np.random.default_rng(s))[:, 0] for s in range(4000)])
    assert stats.kstest(draws[:, 0] / sigma, "norm").pvalue > 0.01
    prod = draws[:, 0] * draws[:, 1]
    target = sigma**2 * np.exp(-1.0 / scale)
    assert abs(prod.mean() - target) < 3 * prod.std(ddof=1) / np.sqrt(len(prod))


def test_grf_independence_limit():
    pts = np.array([[0.0, 0.0], [1.0, 0.0]])
    cov = exponential_covariance(pts, 1.0, 1e-3)
    x = np.array([correlated_gaussian(cov, 2, np.random.default_rng(s)) for s in range(3000)])
    ang = np.arctan2(x[:, :, 1], x[:, :, 0])
    # circular correlation of the two directions
    c = np.corrcoef(np.cos(ang[:, 0]), np.cos(ang[:, 1]))[0, 1]
    s = np.corrcoef(np.sin(ang[:, 0]), np.sin(ang[:, 1]))[0, 1]
    assert abs(c) < 3 / np.sqrt(3000) and abs(s) < 3 / np.sqrt(3000)


def test_dependent_directions_uniform():
    # directions within one pattern are correlated, so take one fiber per pattern
    angles = []
    for s in range(10**4):
        spec = DependentModelSpec(Window((3.0, 3.0)), (4.0, 0.0, 0.0), 2.0, conv=ORIENTED, seed=s)
        p, _ = simulate_dependent(spec)
        if len(p):
            d = p.fibers[0].geometry.direction
            angles.append(np.arctan2(d[1], d[0]))
    assert len(angles) > 9500
    assert stats.kstest(angles, stats.uniform(-np.pi, 2 * np.pi).cdf).pvalue > 0.01


def test_jitter_escalation_and_failure():
    cov = np.ones((3, 3))  # rank one, needs jitter
    out = correlated_gaussian(cov, 2, np.random.default_rng(0))
    assert out.shape == (3, 2)
    with pytest.raises(IllConditionedCovarianceError):
        correlated_gaussian(-np.eye(3), 1, np.random.default_rng(0))


def test_dependent_germ_guard():
    spec = DependentModelSpec(Window((200.0, 200.0)), (1.0, 0, 0), seed=0)
    with pytest.raises(InvalidSpecError):
        simulate_dependent(spec)


def test_window_hits_for_all_geometries():
    w = Window((1.0, 1.0))
    assert hits_window(Fiber(0, Segment(np.array([1.2, 0.5]), np.array([1.0, 0.0]), 0.5)), w)
    assert not hits_window(Fiber(0, Segment(np.array([1.3, 0.5]), np.array([1.0, 0.0]), 0.5)), w)
    assert hits_window(Fiber(0, Polyline([[-1, 2], [-1, -1], [0.5, 0.5]])), w)
    assert not hits_window(Fiber(0, Polyline([[-1, 2], [-1, -1], [-0.5, 0.5]])), w)
    arc = Fiber(0, CubicCurve([[0.5, 0.3, 0, 0], [1.7, 0, -1.0, 0]]))  # y = 1.7 - t^2 enters the box near t = +-1
    assert hits_window(arc, w)
    kept = restrict_to_window([Fiber(5, Polyline([[3, 3], [4, 4]])), arc], w)
    assert len(kept) == 1 and kept[0].id == 0


def test_resample_degenerate_case():
    unit = [Fiber(i, Segment(np.array([5.0, 5.0]), np.array([1.0, 0.0]), 1.0)) for i in range(3)]
    pattern = FiberPattern(Window((10.0, 10.0)), UNORIENTED, unit)
    fitted = DensityModel(LinearTrend((2.0, 0.0, 0.0)))
    counts = np.array([len(resample_null(pattern, fitted, 1.0, s)) for s in range(200)])
    expected = 2.0 * 11.0 * 10.0  # midpoints within x in [-0.5, 10.5], y in [0, 10]
    assert abs(counts.mean() - expected) < 3 * np.sqrt(expected / 200)
    p1 = resample_null(pattern, fitted, 1.0, 9)
    p2 = resample_null(pattern, fitted, 1.0, 9)
    assert [f.geometry.midpoint.tolist() for f in p1.fibers] == [f.geometry.midpoint.tolist() for f in p2.fibers]
    assert all(f.geometry.length == 1.0 for f in p1.fibers)


def test_resample_errors():
    pattern = FiberPattern(Window((10.0, 10.0)), UNORIENTED, [])
    with pytest.raises(EmptyDataError):
        resample_null(pattern, DensityModel(LinearTrend((1.0, 0, 0))), 1.0, 0)
    seg = [Fiber(0, Segment(np.array([5.0, 5.0]), np.array([1.0, 0.0]), 1.0))]
    with pytest.raises(InvalidSpecError):
        resample_null(FiberPattern(Window((10.0, 10.0)), UNORIENTED, seg), DensityModel(LinearTrend((1.0, -0.5, 0))), 1.0, 0)


def test_envelope_single_simulation_and_reproducibility():
    p, _ = simulate_null(NullModelSpec(Window((8.0, 8.0)), (2.0, -0.1, 0.0), 2.0, seed=2))
    grid = KGrid([0.5, 1.0], [np.pi / 4, np.pi / 2])
    env = envelope(p, grid, SamplingConfig.poisson(3.0, 0), seed=5, n_sim=1)
    np.testing.assert_array_equal(env.lo, env.hi)
    np.testing.assert_array_equal(env.lo, env.sims[0])
    again = envelope(p, grid, SamplingConfig.poisson(3.0, 0), seed=5, n_sim=1)
    np.testing.assert_array_equal(env.data, again.data)
    with pytest.raises(InvalidSpecError):
        envelope(p, grid, SamplingConfig.poisson(3.0, 0), seed=5, n_sim=0)


def test_clipped_trend_counts():
    # 1 - 0.2 x on [0, 10]^2 is positive for x < 5 only; its positive part integrates to 2.5 * 10
    w = Window((10.0, 10.0))
    trend = LinearTrend((1.0, -0.2, 0.0))
    with pytest.raises(InvalidSpecError):
        sample_poisson_linear(w, trend, 0.0, 0)
    pts = [sample_poisson_linear(w, trend, 0.0, s, clip_negative=True) for s in range(400)]
    counts = np.array([len(p) for p in pts])
    assert abs(counts.mean() - 25.0) < 3 * np.sqrt(25.0 / len(counts))
    assert max(p[:, 0].max(initial=0.0) for p in pts) < 5.0


def test_resample_with_trend_negative_only_in_margin():
    # positive on [0, 10] (0.05 at x = 10) but negative once the window grows by the fiber reach
    seg = [Fiber(0, Segment(np.array([5.0, 5.0]), np.array([1.0, 0.0]), 4.0))]
    pattern = FiberPattern(Window((10.0, 10.0)), UNORIENTED, seg)
    fitted = DensityModel(LinearTrend((1.0, -0.095, 0.0)))
    counts = np.array([len(resample_null(pattern, fitted, 1.0, s)) for s in range(100)])
    assert counts.min() > 0
