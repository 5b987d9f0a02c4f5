import math

import numpy as np
import pytest
from scipy import integrate, stats

from flexavg.loss import LossSpec
from flexavg.regress import Dataset
from flexavg.simlab import (DgpSpec, ExperimentConfig, calibrate_theta, candidate_set,
                            correct_models, design2_truth, efpe, fpe, generate,
                            location_constant, monte_carlo_r2, mse_metric, nested_count,
                            noise_loss_constant, run_experiment, synthetic_fixture,
                            weight_sum_correct, DESIGN2_RELEVANT)
from oracles import check_loss, normal_quantile_loss


# ---------------------------------------------------------------- generation

def test_dgp1_null_variance():
    s = generate(DgpSpec("DGP1", 100_000, 0.0, seed=1, holdout=0))
    assert np.var(s.train.y) == pytest.approx(35.0, rel=0.02)


def test_dgp3_null_variance():
    s = generate(DgpSpec("DGP3", 100_000, 0.0, seed=2, holdout=0))
    assert np.var(s.train.y) == pytest.approx(20.0 + 10.01**2, rel=0.03)


def test_design2_ols_recovers_beta():
    s = generate(DgpSpec("DESIGN2", 100_000, seed=3, holdout=0))
    coef, *_ = np.linalg.lstsq(s.train.x, s.train.y, rcond=None)
    np.testing.assert_allclose(coef, [1, 1, 1, 1, 0], atol=0.02)


@pytest.mark.parametrize("kind,theta", [("DGP1", 2.0), ("DGP2", 1.0), ("DGP3", 3.0),
                                        ("DESIGN2", None)])
def test_sample_consistency(kind, theta):
    s = generate(DgpSpec(kind, 200, theta, seed=4))
    np.testing.assert_allclose(s.train.y, s.location + s.scale * s.shocks, rtol=1e-14)
    np.testing.assert_allclose(s.holdout.y, s.holdout_location + s.holdout_scale * s.holdout_shocks,
                               rtol=1e-14)
    assert s.holdout.n == 100
    assert np.all(s.train.x[:, 0] == 1.0)
    a = generate(DgpSpec(kind, 200, theta, seed=4))
    assert np.array_equal(a.train.y, s.train.y)


def test_dgp_scale_formulas():
    s = generate(DgpSpec("DGP1", 50, 1.0, seed=5, holdout=0))
    np.testing.assert_allclose(s.scale, np.sum(s.train.x[:, 1:6] ** 2, axis=1))
    s = generate(DgpSpec("DGP3", 50, 1.0, seed=5, holdout=0))
    np.testing.assert_allclose(s.scale, 0.01 + np.sum(s.train.x[:, 1:11] ** 2, axis=1))
    np.testing.assert_allclose(
        s.location, s.train.x[:, 0] + sum(stats.norm.cdf(s.train.x[:, j]) / (j + 1)
                                          for j in range(1, 25)))


def test_dgp2_observed_columns_and_scale():
    s = generate(DgpSpec("DGP2", 50, 2.0, seed=6, holdout=0))
    assert s.train.K == 8
    np.testing.assert_allclose(s.scale, np.sum(s.train.x[:, 1:8] ** 2, axis=1))
    # the unobserved tail makes the mean differ from the observed-part index
    beta = np.array([1, 1, 1, 0, 0, 1, 2, 3], dtype=float)
    assert np.var(s.location - 2.0 * s.train.x @ beta) > 0


def test_dgp_spec_validation():
    for bad in (("NOPE", 10, 1.0), ("DGP1", 0, 1.0), ("DGP1", 10, None), ("DGP1", 10, -1.0),
                ("DESIGN2", 10, 1.0)):
        with pytest.raises(ValueError):
            DgpSpec(*bad)


# ---------------------------------------------------------------- calibration

def test_calibrate_dgp1_closed_form():
    S = sum(j**-2.0 for j in range(2, 1001))
    assert calibrate_theta("DGP1", 0.5) == pytest.approx(math.sqrt(35 / S), rel=1e-12)
    assert calibrate_theta("DGP1", 0.5) == pytest.approx(7.372, abs=1e-3)


@pytest.mark.parametrize("kind", ["DGP1", "DGP2", "DGP3"])
def test_calibration_monotone(kind):
    grid = np.linspace(0.05, 0.95, 19)
    th = [calibrate_theta(kind, r) for r in grid]
    assert all(b > a for a, b in zip(th, th[1:]))


@pytest.mark.parametrize("kind,r2", [("DGP1", 0.5), ("DGP2", 0.9), ("DGP3", 0.3)])
def test_calibration_round_trip(kind, r2):
    assert monte_carlo_r2(kind, calibrate_theta(kind, r2), draws=400_000) == pytest.approx(
        r2, abs=0.01)


def test_calibration_errors():
    for r2 in (0.0, 1.0, -0.2):
        with pytest.raises(ValueError):
            calibrate_theta("DGP1", r2)
    with pytest.raises(ValueError):
        calibrate_theta("DESIGN2", 0.5)


# ---------------------------------------------------------------- noise constants

@pytest.mark.parametrize("tau", [0.05, 0.3, 0.5, 0.9])
def test_location_constants(tau):
    assert location_constant(tau, 1) == pytest.approx(stats.norm.ppf(tau), abs=1e-12)
    q = location_constant(tau, 2)
    lo = integrate.quad(lambda z: (q - z) * stats.norm.pdf(z), -np.inf, q)[0]
    hi = integrate.quad(lambda z: (z - q) * stats.norm.pdf(z), q, np.inf)[0]
    assert tau * hi == pytest.approx((1 - tau) * lo, abs=1e-10)
    if tau == 0.5:
        assert location_constant(tau, 1) == 0.0 and abs(q) < 1e-10


@pytest.mark.parametrize("tau,p", [(0.05, 1), (0.05, 2), (0.5, 1), (0.5, 2), (0.9, 2)])
def test_noise_constant_matches_quadrature(tau, p):
    assert noise_loss_constant(tau, p) == pytest.approx(normal_quantile_loss(tau, p), abs=1e-3)


def test_noise_constant_median_expectile():
    assert noise_loss_constant(0.5, 2) == pytest.approx(0.5, abs=2e-3)


def test_efpe_perfect_predictor():
    rng = np.random.default_rng(7)
    mu = rng.normal(size=200_000)
    y = mu + rng.normal(size=mu.size)
    v = efpe(mu, y, np.ones_like(y), LossSpec(0.5, 2))
    assert abs(v) < 5e-3


def test_efpe_heteroskedastic_correction():
    spec = LossSpec(0.05, 1)
    scale = np.array([1.0, 2.0, 3.0])
    pred = np.zeros(3)
    y = np.array([1.0, -1.0, 0.5])
    want = check_loss(0.05, 1, y).mean() - noise_loss_constant(0.05, 1) * scale.mean()
    assert efpe(pred, y, scale, spec) == pytest.approx(want, rel=1e-14)
    assert fpe(pred, y, spec) == pytest.approx(check_loss(0.05, 1, y).mean())
    with pytest.raises(ValueError):
        efpe(pred, y[:2], scale, spec)


def test_target_is_conditional_quantile():
    s = generate(DgpSpec("DGP1", 20, 1.0, seed=8))
    spec = LossSpec(0.05, 1)
    np.testing.assert_allclose(s.target(spec), s.location + s.scale * stats.norm.ppf(0.05))


# ---------------------------------------------------------------- metrics

def test_mse_and_weight_sum_examples():
    t = np.array([1.0, 2.0, 3.0])
    assert mse_metric(t, t) == 0.0
    assert mse_metric(t + [0.1, 0, 0], t) == pytest.approx(0.01)
    with pytest.raises(ValueError):
        mse_metric(t, t[:2])
    assert weight_sum_correct(np.eye(16)[3], (3, 9)) == 1.0
    assert weight_sum_correct(np.full(16, 1 / 16), (3, 9)) == pytest.approx(0.125)


# ---------------------------------------------------------------- candidate sets

def test_nested_count_independent():
    for n in (50, 100, 200, 400, 1600, 32, 243, 1024):
        M = 0
        while (M + 1) ** 5 <= 5**5 * n:
            M += 1
        assert nested_count(n) == M
    assert nested_count(400) == 16


def test_dgp1_candidates():
    cs = candidate_set("DGP1", 400)
    assert len(cs) == 16
    assert cs[0].indices == (0,) and cs[1].indices == (0, 1)
    assert all(set(a.indices) < set(b.indices) for a, b in zip(cs, cs.models[1:]))


def test_dgp2_candidates():
    cs = candidate_set("DGP2", 100)
    assert len(cs) == 32
    assert all({0, 1, 2} <= set(m.indices) for m in cs)
    assert len(set(cs.models)) == 32


def test_design2_correct_models():
    cs = candidate_set("DESIGN2", 100)
    assert len(cs) == 16
    correct = correct_models(cs, DESIGN2_RELEVANT)
    assert len(correct) == 2
    assert {cs[m].indices for m in correct} == {(0, 1, 2, 3), (0, 1, 2, 3, 4)}


def test_design2_truth():
    np.testing.assert_allclose(design2_truth(LossSpec(0.5, 2)), [1, 1, 1, 1, 0], atol=1e-10)
    t = design2_truth(LossSpec(0.05, 1))
    assert t[0] == pytest.approx(1 + stats.norm.ppf(0.05))


# ---------------------------------------------------------------- harness

def test_one_replication_one_value():
    cfg = ExperimentConfig(dgp="DESIGN2", n_values=(60,), specs=(LossSpec(0.5, 1),),
                           methods=("JCVMA5",), reps=1)
    res = run_experiment(cfg)
    assert {(r.method, r.metric) for r in res.reports} == {("JCVMA5", "MSE"),
                                                           ("JCVMA5", "WEIGHT_SUM")}
    assert all(r.values.size == 1 for r in res.reports)


def test_rerun_and_method_order_invariance():
    spec = LossSpec(0.05, 2)
    a = run_experiment(ExperimentConfig("DGP1", (60,), (0.5,), (spec,),
                                        ("JCVMA5", "SAIC", "CV5", "EWA", "BIC"), 3, seed=9))
    b = run_experiment(ExperimentConfig("DGP1", (60,), (0.5,), (spec,),
                                        ("BIC", "EWA", "CV5", "SAIC", "JCVMA5"), 3, seed=9))
    for r in a.reports:
        other = b.get(r.method, r.metric)
        assert np.array_equal(r.values, other.values)
        assert r.normalizer == other.normalizer


def test_normalizer_is_best_single_model():
    cfg = ExperimentConfig("DGP1", (50,), (0.5,), (LossSpec(0.5, 2),), ("EWA",), 4, seed=1)
    res = run_experiment(cfg)
    rep = res.get("EWA", "EFPE")
    assert rep.normalizer > 0
    assert rep.normalized == pytest.approx(rep.mean / rep.normalizer)


def test_failures_recorded_not_dropped():
    cfg = ExperimentConfig("DGP2", (6,), (0.5,), (LossSpec(0.5, 2),), ("JCVMA5",), 2)
    res = run_experiment(cfg)
    assert len(res.failures) == 2
    assert res.failures[0]["error"] == "rank_deficient"
    rep = res.get("JCVMA5", "EFPE") if res.reports else None
    assert rep is None or rep.values.size == 2


def test_efpe_nonnegative_in_expectation():
    cfg = ExperimentConfig("DGP1", (50,), (0.5,), (LossSpec(0.05, 1),), ("JCVMA5",), 100,
                           seed=3)
    rep = run_experiment(cfg).get("JCVMA5", "EFPE")
    assert rep.mean >= -3 * rep.se


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(dgp="DGP9")
    with pytest.raises(ValueError):
        ExperimentConfig(reps=0)
    with pytest.raises(ValueError):
        ExperimentConfig(methods=("JCVMA",))


def test_fixture_shape():
    names, values = synthetic_fixture()
    assert values.shape == (175, 15)
    assert names[-1] == "y" and names[0] == "x1"
    a = synthetic_fixture(0)[1]
    assert np.array_equal(a, values)
