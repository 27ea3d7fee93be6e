import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from explainkit.data import ColumnStats, Dataset, column_stats
from explainkit.errors import ConvergenceError, DataError
from explainkit.lime import (LimeConfig, explain_lime, fit_lasso, kernel_weights, lambda_max, lasso_kkt_residual,
                             lime_cv_std, sample_locality)
from oracles import lasso_subgradient_residual, weighted_least_squares


def stats_for(std):
    return [ColumnStats(0.0, s, -1.0, 1.0) for s in std]


@pytest.fixture(scope="module")
def cloud():
    return Dataset(np.random.default_rng(0).normal(size=(500, 4)), ["a", "b", "c", "d"])


def test_sampling_basics():
    x = np.array([1.0, -2.0])
    assert np.all(sample_locality(x, stats_for([0, 0]), 20, 1) == x)
    S = sample_locality(x, stats_for([2.0, 0.0]), 4000, 3)
    assert abs(S[:, 0].mean() - 1.0) < 3 * 2.0 / np.sqrt(4000)
    assert np.all(S[:, 1] == -2.0)
    assert np.array_equal(S, sample_locality(x, stats_for([2.0, 0.0]), 4000, 3))


def test_kernel_shape():
    st_ = stats_for([2.0, 1.0])
    x = np.zeros(2)
    w = kernel_weights(x, np.array([[0.0, 0.0], [2.0, 0.0], [0.0, 3.0], [4.0, 0.0]]), 1.0, st_)
    assert w[0] == 1.0
    assert w[1] == pytest.approx(np.exp(-1))
    assert w[0] > w[1] > w[3] and w[1] > w[2]


def test_lasso_zero_penalty_is_wls():
    rng = np.random.default_rng(2)
    Z, y, w = rng.normal(size=(40, 3)), rng.normal(size=40), rng.uniform(0.2, 1, 40)
    b0, b = fit_lasso(Z, y, w, 0.0)
    o0, o = weighted_least_squares(Z, y, w)
    assert abs(b0 - o0) < 1e-6 and np.abs(b - o).max() < 1e-6


def test_lasso_above_lambda_max_is_empty():
    rng = np.random.default_rng(3)
    Z, y, w = rng.normal(size=(30, 4)), rng.normal(size=30), rng.uniform(size=30)
    _, b = fit_lasso(Z, y, w, lambda_max(Z, y, w) * 1.0000001)
    assert np.all(b == 0)


def test_lasso_toy_kkt():
    Z = np.array([[1.0, 0, 2], [0, 1, 1], [1, 1, 0], [2, 0, 1], [0, 2, 3]])
    y = np.array([1.0, 2, 0, 3, 1])
    w = np.array([1.0, 0.5, 2, 1, 1])
    b0, b = fit_lasso(Z, y, w, 0.1)
    assert lasso_subgradient_residual(Z.tolist(), y.tolist(), w.tolist(), 0.1, b0, b.tolist()) < 1e-6


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 100_000), st.floats(0.0, 0.5))
def test_lasso_kkt_property(seed, lam):
    rng = np.random.default_rng(seed)
    Z = rng.normal(size=(25, 5)) * rng.uniform(0.1, 5, 5)
    y = Z @ rng.normal(size=5) + rng.normal(size=25)
    w = rng.uniform(0.1, 1, 25)
    b0, b = fit_lasso(Z, y, w, lam)
    assert lasso_kkt_residual(Z, y, w, lam, b0, b) < 1e-6


def test_zero_weight_rows_do_not_matter():
    rng = np.random.default_rng(4)
    Z, y = rng.normal(size=(30, 3)), rng.normal(size=30)
    w = rng.uniform(size=30)
    w[::3] = 0
    a = fit_lasso(Z, y, w, 0.05)
    keep = w > 0
    b = fit_lasso(Z[keep], y[keep], w[keep], 0.05)
    assert a[0] == pytest.approx(b[0], abs=1e-10) and np.abs(a[1] - b[1]).max() < 1e-10


def test_nonconvergence_keeps_iterate():
    rng = np.random.default_rng(5)
    Z = rng.normal(size=(20, 3))
    Z[:, 2] = Z[:, 0] + 1e-3 * rng.normal(size=20)
    with pytest.raises(ConvergenceError) as exc:
        fit_lasso(Z, rng.normal(size=20), np.ones(20), 0.0, max_sweeps=2)
    assert exc.value.coef is not None and exc.value.sweeps == 2


def test_linear_recovery(cloud):
    score = lambda X: 3 * X[:, 0] + 1
    e = explain_lime(score, cloud.features[7], cloud, LimeConfig(lambda_grid=(1e-9,)))
    assert e.coefficients["a"] == pytest.approx(3.0, rel=0.05)
    assert e.local_r2 >= 0.99


def test_additivity_and_counts(cloud):
    score = lambda X: np.tanh(X[:, 0] * X[:, 1]) + 0.2 * X[:, 3]
    e = explain_lime(score, cloud.features[3], cloud, LimeConfig(discretize=(0,), target_nonzero=2))
    assert abs(e.surrogate_prediction - e.intercept - e.contributions.sum()) < 1e-10
    assert e.nonzero_count == np.count_nonzero(e.contributions) <= 2
    assert set(e.to_dict()) >= {"intercept", "local_r2", "surrogate_prediction", "model_prediction", "config"}


def test_path_sparsity_monotone(cloud):
    rng = np.random.default_rng(1)
    Z = cloud.features
    y = Z @ np.array([1.0, -0.5, 0.2, 0.0]) + 0.1 * rng.normal(size=Z.shape[0])
    w = rng.uniform(size=Z.shape[0])
    top = lambda_max(Z, y, w)
    counts = [np.count_nonzero(fit_lasso(Z, y, w, lam)[1]) for lam in np.geomspace(1e-4 * top, top, 12)]
    assert all(b <= a for a, b in zip(counts, counts[1:]))


def test_ignored_feature_dropped(cloud):
    score = lambda X: 2 * X[:, 0] - X[:, 2]
    e = explain_lime(score, cloud.features[0], cloud, LimeConfig(target_nonzero=2))
    assert e.contributions[1] == 0 and e.contributions[3] == 0


def test_cv_std(cloud):
    score = lambda X: 3 * X[:, 0] + 1
    cfg = LimeConfig(lambda_grid=(1e-9,))
    assert np.all(lime_cv_std(score, cloud.features[2], cloud, cfg, 3, seeds=[5, 5, 5]) == 0)
    std = lime_cv_std(score, cloud.features[2], cloud, cfg, 3)
    assert std[0] < 1e-6


def test_config_validation(cloud):
    with pytest.raises(DataError):
        LimeConfig(lambda_grid=(0.1, 0.2))
    with pytest.raises(DataError):
        LimeConfig(kernel_width=0)
    with pytest.raises(DataError):
        explain_lime(lambda X: X[:, 0], cloud.features[0], cloud, LimeConfig(n_samples=20))


def test_degenerate_design():
    d = Dataset(np.zeros((50, 2)), ["a", "b"])
    with pytest.raises(DataError):
        explain_lime(lambda X: X[:, 0], d.features[0], d, LimeConfig(n_samples=100))


@pytest.mark.slow
def test_simulation_noise_features_sparse():
    from explainkit.data import SimConfig, simulate_signal, split
    from explainkit.model import GbmConfig, fit_gbm
    train, valid = split(simulate_signal(SimConfig(20000)), 0.5)
    model = fit_gbm(train, valid, GbmConfig())
    order = np.argsort(model.predict(valid.features))
    x = valid.features[order[len(order) // 2]]
    e = explain_lime(model, x, train, LimeConfig(discretize=(0, 3, 7, 8)))
    noise = [j for j in range(12) if j not in (0, 3, 7, 8)]
    assert np.sum(e.contributions[noise] == 0) >= 6
    assert np.all(np.isfinite(lime_cv_std(model, x, train, LimeConfig(discretize=(0, 3, 7, 8)), 3)))
