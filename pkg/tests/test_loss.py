import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flexavg.loss import (LossSpec, asymmetry_weight, loss_gradient, mean_loss, psi, rho,
                          weighted_identity)
from oracles import check_loss

taus = st.floats(0.001, 0.999)
lams = st.floats(-1e3, 1e3, allow_nan=False)
powers = st.sampled_from([1, 2])


@pytest.mark.parametrize("tau,p,lam,expected", [
    (0.5, 2, 2.0, 2.0),
    (0.05, 1, -1.0, 0.95),
    (0.7, 1, 0.0, 0.0),
    (0.7, 1, 2.0, 1.4),
])
def test_rho_examples(tau, p, lam, expected):
    assert rho(LossSpec(tau, p), lam) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("tau,u,expected", [(0.5, 1, 0.5), (0.05, -2, -0.95), (0.3, 0, -0.7)])
def test_psi_examples(tau, u, expected):
    assert psi(tau, u) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("tau,u,expected", [(0.5, 2, 1.0), (0.05, -1, -0.95), (0.9, 0, 0.0)])
def test_weighted_identity_examples(tau, u, expected):
    assert weighted_identity(tau, u) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("tau,p,lam,expected", [
    (0.5, 2, 3.0, 3.0), (0.05, 2, -2.0, -3.8), (0.5, 2, 0.0, 0.0)])
def test_gradient_examples(tau, p, lam, expected):
    assert loss_gradient(LossSpec(tau, p), lam) == pytest.approx(expected, abs=1e-15)


def test_gradient_p1_left_convention():
    s = LossSpec(0.3, 1)
    assert loss_gradient(s, 2.0) == pytest.approx(0.3)
    assert loss_gradient(s, -2.0) == pytest.approx(-0.7)
    assert loss_gradient(s, 0.0) == pytest.approx(-0.7)


@pytest.mark.parametrize("tau,p", [(0.0, 1), (1.0, 2), (-0.1, 1), (0.5, 3), (0.5, 1.5), (0.5, 0)])
def test_invalid_spec_rejected(tau, p):
    with pytest.raises(ValueError):
        LossSpec(tau, p)


def test_spec_kind():
    assert LossSpec(0.5, 1).kind == "quantile"
    assert LossSpec(0.5, 2).kind == "expectile"


def test_vectorised_matches_oracle():
    rng = np.random.default_rng(1)
    lam = rng.normal(size=1000) * 5
    lam[::50] = 0.0
    for tau in (0.05, 0.5, 0.93):
        for p in (1, 2):
            np.testing.assert_allclose(rho(LossSpec(tau, p), lam), check_loss(tau, p, lam),
                                       rtol=1e-15, atol=0)
            assert mean_loss(LossSpec(tau, p), lam) == pytest.approx(
                check_loss(tau, p, lam).mean(), rel=1e-14)


def test_asymmetry_weight_values():
    assert asymmetry_weight(0.2, 1.0) == pytest.approx(0.2)
    assert asymmetry_weight(0.2, 0.0) == pytest.approx(0.8)


@given(taus, powers, lams)
def test_nonnegative_and_zero_only_at_zero(tau, p, lam):
    v = rho(LossSpec(tau, p), lam)
    assert v >= 0
    if lam != 0 and abs(lam) ** p > 0:
        assert v > 0
    if lam == 0:
        assert v == 0


@given(powers, lams)
def test_symmetric_at_median(p, lam):
    s = LossSpec(0.5, p)
    assert rho(s, lam) == rho(s, -lam)


@given(taus, powers, st.floats(1e-3, 1e3))
def test_asymmetry_ratio(tau, p, lam):
    s = LossSpec(tau, p)
    assert rho(s, lam) / rho(s, -lam) == pytest.approx(tau / (1 - tau), rel=1e-12)


def test_convexity_p2_finite_differences():
    rng = np.random.default_rng(7)
    tau = rng.uniform(0.01, 0.99, 10_000)
    lam = rng.uniform(-10, 10, 10_000)
    lam = np.where(np.abs(lam) < 1e-2, 1.0, lam)
    h = 1e-4
    vals = []
    for t, l in zip(tau, lam):
        s = LossSpec(float(t), 2)
        vals.append(rho(s, l + h) - 2 * rho(s, l) + rho(s, l - h))
    assert min(vals) >= -1e-12


def test_gradient_matches_central_differences():
    rng = np.random.default_rng(8)
    for _ in range(2000):
        tau = rng.uniform(0.01, 0.99)
        lam = rng.uniform(-10, 10)
        if abs(lam) <= 1e-3:
            continue
        s = LossSpec(tau, 2)
        h = 1e-6 * max(1.0, abs(lam))
        fd = (rho(s, lam + h) - rho(s, lam - h)) / (2 * h)
        assert loss_gradient(s, lam) == pytest.approx(fd, rel=1e-6)
