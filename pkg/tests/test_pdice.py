import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from explainkit.data import Dataset
from explainkit.errors import DataError
from explainkit.pdice import (PdIceResult, decile_instances, histogram, ice, make_grid, monotone_violations,
                              partial_dependence, pd2, pd_ice, pd_ice_divergence)


def stump_score(X):
    return (X[:, 0] >= 1.5).astype(float)


@pytest.fixture
def data():
    return Dataset(np.random.default_rng(1).uniform(-3, 3, (60, 3)), ["a", "b", "c"])


def test_make_grid():
    assert make_grid([1, 1, 2], 20).tolist() == [1, 2]
    assert make_grid(np.arange(100), 5).tolist() == [0, 24, 49, 74, 99]
    assert make_grid([4, 4, 4]).tolist() == [4]
    with pytest.raises(DataError):
        make_grid([], 5)
    with pytest.raises(DataError):
        make_grid([1, 2], 1)


def test_pd_closed_forms(data):
    assert partial_dependence(lambda X: np.full(len(X), 0.2), data, 0, [0, 1, 2]) == pytest.approx([0.2] * 3, abs=1e-15)
    assert partial_dependence(stump_score, data, "a", [0, 2]).tolist() == [0.0, 1.0]


def test_pd_hand_average():
    d = Dataset(np.array([[0.0, 1.0], [5.0, -2.0], [9.0, 4.0]]), ["x", "n"])
    score = lambda X: X[:, 0] + 0.1 * X[:, 1]
    # overwrite x: mean over rows of (v + 0.1 n), mean n = 1
    assert partial_dependence(score, d, "x", [2.0, 3.0]) == pytest.approx([2.1, 3.1], abs=1e-15)


def test_ice_entries(data):
    assert ice(stump_score, data, 0, [0, 2], [4]).tolist() == [[0.0, 1.0]]
    assert np.all(ice(lambda X: np.full(len(X), 3.0), data, 1, [0, 1], [0, 1, 2]) == 3.0)


def test_ice_mean_is_pd(data):
    score = lambda X: np.sin(X[:, 0]) * X[:, 1] + X[:, 2] ** 2
    grid = make_grid(data.column(0), 7)
    full = ice(score, data, 0, grid, np.arange(data.n_rows))
    assert np.abs(full.mean(axis=0) - partial_dependence(score, data, 0, grid)).max() < 1e-12


def test_unused_feature_leaves_predictions(data):
    score = lambda X: X[:, 0] * 2 + X[:, 2]
    base = score(data.features[:5])
    curves = ice(score, data, 1, [-1.0, 0.0, 7.0], range(5))
    assert np.all(curves == base[:, None])


def test_deciles():
    d11 = Dataset(np.arange(11.0)[::-1, None], ["a"])
    assert decile_instances(lambda X: X[:, 0], d11).tolist() == list(range(10, -1, -1))
    assert decile_instances(lambda X: X[:, 0], Dataset(np.ones((1, 1)), ["a"])).tolist() == [0]
    d100 = Dataset(np.arange(100.0)[:, None], ["a"])
    assert decile_instances(lambda X: X[:, 0], d100).tolist() == [0, 9, 19, 29, 39, 49, 59, 69, 79, 89, 99]


def test_pd2(data):
    add = lambda X: X[:, 0] + X[:, 1]
    ga, gb = [0.0, 1.0, 2.0], [-1.0, 3.0]
    m = pd2(add, data, 0, 1, ga, gb)
    assert m - (np.add.outer(ga, gb)) == pytest.approx(np.full((3, 2), 0.0), abs=1e-12)
    s = pd2(stump_score, data, 0, 2, [0.0, 2.0], [0.0, 1.0, 5.0])
    assert np.all(s == s[:, :1])
    assert np.ptp(pd2(lambda X: np.full(len(X), 0.4), data, 0, 1, ga, gb)) == 0.0
    with pytest.raises(DataError):
        pd2(add, data, 0, 0, ga, gb)


def test_divergence():
    assert pd_ice_divergence(np.array([[0.0, 1.0], [1.0, 0.0]])).tolist() == [0.5, 0.5]
    parallel = np.array([[0.0, 1.0, 3.0], [5.0, 6.0, 8.0], [-1.0, 0.0, 2.0]])
    assert np.abs(pd_ice_divergence(parallel)).max() < 1e-12
    assert pd_ice_divergence(np.array([[1.0, 4.0, 2.0]])).tolist() == [0.0, 0.0, 0.0]


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=2, max_size=50), st.integers(2, 30))
def test_grid_strictly_increasing(col, k):
    g = make_grid(col, k)
    assert np.all(np.diff(g) > 0) and len(g) <= max(k, 1)
    assert g[0] == min(col) and g[-1] == max(col)


def test_histogram_ten_bins():
    edges, counts = histogram(np.arange(100.0))
    assert len(edges) == 11 and counts.sum() == 100 and counts.tolist() == [10] * 10


def test_result_bundle_and_outputs(data):
    res = pd_ice(stump_score, data, "a", max_points=8)
    assert isinstance(res, PdIceResult)
    assert res.ice.shape == (len(res.instance_ids), len(res.grid))
    lines = res.to_csv().splitlines()
    assert lines[0] == "feature,grid_value,series_id,value"
    assert len(lines) == 1 + len(res.grid) * (1 + len(res.instance_ids))
    assert res.to_dict()["feature"] == "a"


def test_monotone_violation_counter():
    assert monotone_violations([[0, 1, 2], [0, 0, 1]]) == 0
    assert monotone_violations([[0, 1, 0.5]]) == 1
    assert monotone_violations([[2, 1, 0]], direction=-1) == 0


@pytest.mark.slow
def test_simulation_num9_pd_is_u_shaped():
    from explainkit.data import SimConfig, simulate_signal, split
    from explainkit.model import GbmConfig, fit_gbm
    train, valid = split(simulate_signal(SimConfig(20000, seed=2)), 0.5, seed=2)
    model = fit_gbm(train, valid, GbmConfig(seed=2))
    res = pd_ice(model, valid, "num9")
    k = int(np.argmin(res.pd))
    assert 0 < k < len(res.pd) - 1
    assert res.pd[0] > res.pd[k] and res.pd[-1] > res.pd[k]
