import math

import numpy as np
import pytest

from dpvi.guide import DiagonalGuide, FullRankGuide
from dpvi.models import ConjugateLinearRegression, DataError, Dataset, LinearRegression, LogisticRegression
from dpvi.privacy import DpSgdConfig
from dpvi.synthetic import gen_logistic
from dpvi.trainer import AdamState, DivergenceError, adam_step, read_trace_csv, run_dpvi


@pytest.fixture(scope="module")
def logistic_data():
    data, _ = gen_logistic(n=500, p=3, seed=7)
    return data


def test_adam_zero_gradient():
    params = np.array([1.0, -2.0])
    out, state = adam_step(AdamState(), params, np.zeros(2))
    np.testing.assert_array_equal(out, params)
    assert state.t == 1


def test_adam_first_step_matches_formula():
    g = np.array([1e3, -1e-3, 0.5])
    out, _ = adam_step(AdamState(), np.zeros(3), g)
    # after bias correction m_hat = g and v_hat = g^2 at t = 1
    np.testing.assert_allclose(out, -1e-3 * g / (np.abs(g) + 1e-8), rtol=1e-12)
    assert abs(out[0]) == pytest.approx(1e-3, rel=1e-9)


def test_adam_matches_reference_recursion(rng):
    grads = rng.normal(size=(50, 4))
    params, state = np.zeros(4), AdamState(lr=0.01)
    m = v = np.zeros(4)
    ref = np.zeros(4)
    for t, g in enumerate(grads, start=1):
        params, state = adam_step(state, params, g)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        ref = ref - 0.01 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
    np.testing.assert_allclose(params, ref, rtol=1e-12)


def test_trace_shape_and_determinism(logistic_data):
    guide = DiagonalGuide.from_sigma(np.zeros(3), 1.0)
    cfg = DpSgdConfig("aligned", 2.0, 1.5, 0.05, 300, seed=9)
    a = run_dpvi(LogisticRegression(3), guide, logistic_data, cfg)
    b = run_dpvi(LogisticRegression(3), guide, logistic_data, cfg)
    assert a.snapshots.shape == (300, 6)
    assert a.names == ["m[0]", "m[1]", "m[2]", "s[0]", "s[1]", "s[2]"]
    np.testing.assert_array_equal(a.snapshots, b.snapshots)
    c = run_dpvi(LogisticRegression(3), guide, logistic_data, DpSgdConfig("aligned", 2.0, 1.5, 0.05, 300, seed=10))
    assert not np.array_equal(a.snapshots, c.snapshots)
    assert 0 < a.spend.epsilon < math.inf
    assert a.spend.delta == 1 / 500


@pytest.mark.parametrize("variant", ["vanilla", "aligned", "preconditioned", "natural", "aligned-natural"])
def test_all_diagonal_variants_run(variant, logistic_data):
    guide = DiagonalGuide.from_sigma(np.zeros(3), 0.5)
    trace = run_dpvi(LogisticRegression(3), guide, logistic_data, DpSgdConfig(variant, None, 1.0, 0.05, 100))
    assert np.all(np.isfinite(trace.snapshots))


@pytest.mark.parametrize("variant", ["full-rank-vanilla", "full-rank-aligned"])
def test_full_rank_variants_run(variant, rng):
    X = rng.normal(size=(200, 2))
    data = Dataset(X, X @ [1.0, -1.0] + rng.normal(size=200))
    guide = FullRankGuide.from_sigma(np.zeros(3), 0.5)
    trace = run_dpvi(LinearRegression(2), guide, data, DpSgdConfig(variant, None, 1.0, 0.05, 100))
    assert trace.snapshots.shape == (100, 9)
    assert trace.final_guide().cholesky.shape == (3, 3)


def test_vanilla_and_aligned_agree_without_privacy(logistic_data):
    guide = DiagonalGuide.from_sigma(np.array([0.1, 0.0, -0.1]), 0.7)
    kw = dict(clip_threshold=math.inf, noise_multiplier=0.0, subsample_ratio=1.0, iterations=200, seed=3)
    van = run_dpvi(LogisticRegression(3), guide, logistic_data, DpSgdConfig("vanilla", **kw))
    ali = run_dpvi(LogisticRegression(3), guide, logistic_data, DpSgdConfig("aligned", **kw))
    np.testing.assert_allclose(ali.snapshots, van.snapshots, rtol=0, atol=1e-10)


def conjugate_problem(seed=0, n=50):
    rng = np.random.default_rng(seed)
    model = ConjugateLinearRegression(1, noise_std=1.0, prior_var=4.0)
    X = np.ones((n, 1))
    y = 1.5 + rng.normal(size=n)
    mean, cov = model.posterior(X, y)
    return model, Dataset(X, y), float(mean[0]), float(math.sqrt(cov[0, 0]))


def test_conjugate_posterior_recovered():
    model, data, mu, sd = conjugate_problem()
    guide = DiagonalGuide.from_sigma(np.zeros(1), 1.0)
    cfg = DpSgdConfig("vanilla", math.inf, 0.0, 1.0, 5000, seed=1)
    trace = run_dpvi(model, guide, data, cfg)
    tail = trace.means[-1000:, 0]
    # the last iterate fluctuates with the single-sample gradient noise
    assert abs(tail[-1] - mu) <= 3 * tail.std(ddof=1)
    # the averaged tail sits well inside the posterior
    assert abs(tail.mean() - mu) <= 0.25 * sd


def test_conjugate_scale_recovered_on_longer_run():
    model, data, _, sd = conjugate_problem()
    guide = DiagonalGuide.from_sigma(np.zeros(1), 1.0)
    trace = run_dpvi(model, guide, data, DpSgdConfig("aligned", math.inf, 0.0, 1.0, 10_000, seed=1))
    assert trace.final_guide().sigma[0] == pytest.approx(sd, rel=0.1)


def test_elbo_increases_on_conjugate_model():
    model, data, _, _ = conjugate_problem(seed=2)
    guide = DiagonalGuide.from_sigma(np.array([-3.0]), 1.0)
    trace = run_dpvi(model, guide, data, DpSgdConfig("aligned", math.inf, 0.0, 1.0, 5000, seed=4))
    rng = np.random.default_rng(0)

    def elbo(row):
        g = DiagonalGuide(row[:1], row[1:])
        th = g.draw(rng.standard_normal(1))
        return model.loglik(data.features, data.targets, th).sum() + model.log_prior(th) + g.entropy()

    values = np.array([elbo(r) for r in trace.snapshots])
    assert values[-1000:].mean() > values[:1000].mean()


def test_divergence_reports_iteration(logistic_data):
    guide = DiagonalGuide.from_sigma(np.zeros(3), 1.0)
    cfg = DpSgdConfig("aligned", 2.0, 0.0, 1.0, 10, learning_rate=1e9)
    with pytest.raises(DivergenceError) as err:
        run_dpvi(LogisticRegression(3), guide, logistic_data, cfg)
    assert err.value.iteration == 0


def test_shape_and_data_errors(logistic_data):
    with pytest.raises(ValueError):
        run_dpvi(LogisticRegression(4), DiagonalGuide(np.zeros(3), np.zeros(3)), logistic_data, DpSgdConfig())
    with pytest.raises(DataError):
        Dataset(np.zeros((0, 3)), np.zeros(0))
    bad = Dataset(logistic_data.features, logistic_data.targets + 0.5)
    with pytest.raises(DataError):
        run_dpvi(LogisticRegression(3), DiagonalGuide(np.zeros(3), np.zeros(3)), bad, DpSgdConfig())


def test_target_epsilon_calibrates(logistic_data):
    guide = DiagonalGuide.from_sigma(np.zeros(3), 1.0)
    cfg = DpSgdConfig("aligned", 2.0, None, 0.05, 200, target_epsilon=2.0)
    trace = run_dpvi(LogisticRegression(3), guide, logistic_data, cfg)
    assert 1.98 <= trace.spend.epsilon <= 2.0
    assert trace.noise_multiplier > 0


def test_trace_csv_round_trip(tmp_path, logistic_data):
    guide = DiagonalGuide.from_sigma(np.zeros(3), 1.0)
    trace = run_dpvi(LogisticRegression(3), guide, logistic_data, DpSgdConfig("aligned", 2.0, 1.0, 0.05, 20))
    path = tmp_path / "trace.csv"
    trace.to_csv(path)
    assert path.read_text().splitlines()[0] == "iteration,parameter,value"
    names, initial, snaps = read_trace_csv(path)
    assert names == trace.names
    np.testing.assert_array_equal(initial, trace.initial)
    np.testing.assert_array_equal(snaps, trace.snapshots)
