import numpy as np
import pytest

from fiberk.density import DensityModel, LinearTrend
from fiberk.errors import InvalidGridError, InvalidInputError, NonpositiveDensityError
from fiberk.fibers import SampleSet
from fiberk.geometry import ORIENTED, UNORIENTED, Window, canonicalize, edge_correction
from fiberk.kstat import KEstimate, KGrid, build_spatial_index, estimate_k, estimate_k_many, estimate_k_naive, relative_k

UNIT = Window((1.0, 1.0))


def flat(conv=UNORIENTED, d=2, level=1.0):
    return DensityModel(LinearTrend((level,) + (0.0,) * d), conv=conv)


def random_samples(rng, n, d, n_fibers, extent=1.0, conv=UNORIENTED):
    t = rng.standard_normal((n, d))
    t /= np.linalg.norm(t, axis=1, keepdims=True)
    return SampleSet(rng.uniform(0, extent, (n, d)), canonicalize(t, conv), rng.integers(0, n_fibers, n), rng.uniform(0.1, 1, n))


def test_single_pair_hand_computation():
    a = 0.1
    s = SampleSet([[0.2, 0.4], [0.5, 0.4]], [[1.0, 0.0], [np.cos(0.2), np.sin(0.2)]], [0, 1], [a, 0.3])
    est = estimate_k(s, flat(ORIENTED), UNIT, KGrid([0.5], [0.3]))
    expected = 2 * a * 0.3 * edge_correction(UNIT, [0.3, 0.0])
    assert est.k_hat[0, 0] == pytest.approx(expected, rel=1e-14)
    assert est.diagnostics["n_pairs"] == 2
    # the pair falls outside a tighter grid point
    est = estimate_k(s, flat(ORIENTED), UNIT, KGrid([0.2, 0.5], [0.1, 0.3]))
    np.testing.assert_allclose(est.k_hat, [[0, 0], [0, expected]], rtol=1e-14)


def test_one_fiber_gives_zero(rng):
    s = random_samples(rng, 200, 2, 1)
    est = estimate_k(s, flat(), UNIT, KGrid([0.2, 0.5], [0.5, 1.5]))
    assert np.all(est.k_hat == 0)


def test_single_sample_and_empty():
    s = SampleSet([[0.5, 0.5]], [[1.0, 0.0]], [0], [1.0])
    assert estimate_k(s, flat(), UNIT, KGrid([0.5], [1.0])).k_hat[0, 0] == 0
    assert estimate_k(SampleSet.empty(2), flat(), UNIT, KGrid([0.5], [1.0])).k_hat[0, 0] == 0


def test_samples_outside_window_ignored():
    s = SampleSet([[0.2, 0.4], [0.5, 0.4], [1.2, 0.4]], [[1.0, 0.0]] * 3, [0, 1, 2], [1.0, 1.0, 1.0])
    est = estimate_k(s, flat(), UNIT, KGrid([0.8], [0.1]))
    assert est.diagnostics["n_samples"] == 2 and est.diagnostics["n_pairs"] == 2


@pytest.mark.parametrize("d,conv", [(2, UNORIENTED), (2, ORIENTED), (3, UNORIENTED), (3, ORIENTED)])
@pytest.mark.parametrize("use_numba", [True, False])
def test_indexed_matches_naive(rng, d, conv, use_numba):
    s = random_samples(rng, 600, d, 40, extent=3.0, conv=conv)
    w = Window((3.0,) * d)
    model = DensityModel(LinearTrend((2.0, 0.3) + (-0.1,) * (d - 1)), conv=conv)
    grid = KGrid([0.2, 0.5, 0.9], [0.3, 1.0, conv.max_angle()])
    fast = estimate_k(s, model, w, grid, use_numba=use_numba)
    slow = estimate_k_naive(s, model, w, grid)
    np.testing.assert_allclose(fast.k_hat, slow.k_hat, rtol=1e-12)
    assert fast.diagnostics["n_pairs"] == slow.diagnostics["n_pairs"]


def test_all_samples_in_one_cell(rng):
    s = SampleSet(rng.uniform(0.4, 0.45, (50, 2)), np.tile([0.0, 1.0], (50, 1)), np.arange(50) % 7, np.ones(50))
    grid = KGrid([0.9], [1.0])
    np.testing.assert_allclose(estimate_k(s, flat(), UNIT, grid).k_hat, estimate_k_naive(s, flat(), UNIT, grid).k_hat, rtol=1e-13)


def test_numba_and_numpy_bitwise_equal(rng):
    s = random_samples(rng, 800, 2, 60, extent=4.0)
    w = Window((4.0, 4.0))
    grid = KGrid.regular(1.5, 6, [0.2, 0.8, np.pi / 2])
    a = estimate_k(s, flat(), w, grid, use_numba=True)
    b = estimate_k(s, flat(), w, grid, use_numba=False)
    np.testing.assert_allclose(a.k_hat, b.k_hat, rtol=1e-13)


def test_many_models_match_single(rng):
    s = random_samples(rng, 400, 2, 30, extent=2.0)
    w = Window((2.0, 2.0))
    models = [flat(level=1.0), DensityModel(LinearTrend((1.0, 0.2, 0.1)))]
    grid = KGrid([0.3, 0.6], [0.5, 1.2])
    both = estimate_k_many(s, models, w, grid)
    for est, m in zip(both, models):
        np.testing.assert_allclose(est.k_hat, estimate_k(s, m, w, grid).k_hat, rtol=1e-15)


def test_nonpositive_policy(rng):
    s = random_samples(rng, 300, 2, 20, extent=2.0)
    w = Window((2.0, 2.0))
    model = DensityModel(LinearTrend((1.0, -1.0, 0.0)))  # negative for x > 1
    grid = KGrid([0.5], [1.0])
    est = estimate_k(s, model, w, grid, policy="exclude")
    n_bad = int(np.sum(s.locations[:, 0] >= 1.0 - 1e-12))
    assert est.diagnostics["n_nonpositive"] == n_bad
    keep = s.subset(s.locations[:, 0] < 1.0 - 1e-12)
    np.testing.assert_allclose(est.k_hat, estimate_k_naive(keep, model, w, grid).k_hat, rtol=1e-12)
    with pytest.raises(NonpositiveDensityError):
        estimate_k(s, model, w, grid, policy="fail")
    with pytest.raises(InvalidInputError):
        estimate_k(s, model, w, grid, policy="ignore")


def test_grid_validation():
    with pytest.raises(InvalidGridError):
        KGrid([0.5, 0.4], [1.0])
    with pytest.raises(InvalidGridError):
        KGrid([0.5], [-1.0])
    s = SampleSet([[0.5, 0.5]], [[1.0, 0.0]], [0], [1.0])
    with pytest.raises(InvalidGridError):
        estimate_k(s, flat(), UNIT, KGrid([1.0], [1.0]))
    with pytest.raises(InvalidGridError):
        estimate_k(s, flat(), UNIT, KGrid([0.5], [2.0]))
    g = KGrid.regular(2.0, 4, [np.pi / 2, 0.1])
    np.testing.assert_allclose(g.r1, [0.5, 1.0, 1.5, 2.0])
    np.testing.assert_allclose(g.r2, [0.1, np.pi / 2])


def test_relative_k():
    grid = KGrid([0.5], [1.0])
    est = KEstimate(grid, np.array([[2.0]]), np.array([[2.0]]))
    np.testing.assert_array_equal(relative_k(est), [[1.0]])
    with pytest.raises(InvalidGridError):
        relative_k(KEstimate(KGrid([0.0, 0.5], [1.0]), np.zeros((2, 1)), np.array([[0.0], [1.0]])))


def test_spatial_index_covers_all(rng):
    pts = rng.uniform(0, 5, (500, 3))
    idx = build_spatial_index(pts, Window((5.0, 5.0, 5.0)), 1.2)
    assert sorted(idx.order.tolist()) == list(range(500))
    assert idx.cell_start[-1] == 500
