import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from savings_hjb.model import (
    ModelParams,
    c_beta_gamma,
    compute_bound_constants,
    drift_f,
    j,
    lipschitz_constant,
    lower_envelope,
    production,
    regime_of,
    u1_prime,
    u2,
    u2_prime,
    upper_envelope,
)

pos = st.floats(min_value=1e-3, max_value=1e3, allow_nan=False)
unit = st.floats(min_value=0.05, max_value=0.95)


def test_production_examples():
    p = ModelParams(A=1.0, beta=0.5)
    assert production(4.0, 1.0, p) == pytest.approx(2.0, rel=1e-15)
    assert production(2.0, 1.4, ModelParams(A=10.0, beta=0.5)) == pytest.approx(10 * math.sqrt(2.8), rel=1e-14)
    assert production(3.7, 3.7, ModelParams(A=2.5, beta=0.3)) == pytest.approx(2.5 * 3.7, rel=1e-14)


@given(K=pos, N=pos, s=st.floats(0.01, 100.0), beta=unit)
def test_production_homogeneous(K, N, s, beta):
    p = ModelParams(beta=beta)
    assert production(s * K, s * N, p) == pytest.approx(s * production(K, N, p), rel=1e-12)


@pytest.mark.parametrize("K,N", [(0.0, 1.0), (1.0, -1.0)])
def test_production_domain(K, N):
    with pytest.raises(ValueError):
        production(K, N, ModelParams())


def test_drift_examples():
    p = ModelParams()
    assert drift_f(p.Nbar, p) == 0.0
    assert drift_f(3.0, p) == pytest.approx(-1.5)
    a, M, Nb = p.alpha_f, p.M_f, p.Nbar
    assert a * M * (Nb - M) == pytest.approx(a * M * M + a * (Nb - 2 * M) * M)
    assert drift_f(0.0, p) == 0.0
    with pytest.raises(ValueError):
        drift_f(-0.1, p)


def test_lipschitz_examples():
    assert lipschitz_constant(ModelParams()) == 2.0
    assert lipschitz_constant(ModelParams(alpha_f=1.0, M_f=5.0, Nbar=2.0)) == 8.0
    assert lipschitz_constant(ModelParams(alpha_f=0.7, M_f=2.0, Nbar=2.0)) == pytest.approx(1.4)


@pytest.mark.parametrize("alpha,M,Nb", [(0.5, 3.0, 2.0), (1.0, 5.0, 2.0), (0.2, 2.0, 2.0)])
def test_lipschitz_bounds_sampled_slope(alpha, M, Nb):
    p = ModelParams(alpha_f=alpha, M_f=M, Nbar=Nb)
    x = np.linspace(1e-6, 10 * M, 200001)
    slopes = np.abs(np.diff(drift_f(x, p)) / np.diff(x))
    assert slopes.max() <= lipschitz_constant(p) * (1 + 1e-9)
    assert slopes.max() >= 0.999 * lipschitz_constant(p)


def test_utility_examples():
    p = ModelParams(gamma=0.5)
    assert j(1.0, p) == 1.0
    assert j(4.0, p) == pytest.approx(0.0625, rel=1e-15)
    assert u2_prime(3.0 / 3.0, p) == 1.0
    assert u2(4.0, p) == pytest.approx(4.0)
    with pytest.raises(ValueError):
        j(0.0, p)


@given(x=pos, gamma=unit)
def test_j_inverts_marginal(x, gamma):
    p = ModelParams(gamma=gamma)
    assert u1_prime(j(x, p), p) == pytest.approx(x, rel=1e-12)
    assert j(x, p) * x ** (1 / gamma) == pytest.approx(1.0, rel=1e-12)


@given(x=pos, y=pos)
def test_j_decreasing(x, y):
    p = ModelParams(gamma=0.4)
    if x < y:
        assert j(x, p) > j(y, p)


@pytest.mark.parametrize("kw,msg", [({"beta": 1.5}, "beta must lie in (0,1)"), ({"gamma": 0.0}, "gamma"),
                                    ({"eps": -1.0}, "eps"), ({"M_f": 1.0}, "M_f"), ({"T": math.nan}, "T")])
def test_params_validation(kw, msg):
    with pytest.raises(ValueError, match=msg.replace("(", r"\(").replace(")", r"\)")):
        ModelParams(**kw)


def test_crra_utility_constants():
    p = ModelParams(beta=0.3, gamma=0.6)
    assert (p.a1, p.a2, p.a3) == (1.0, 1.0, 1.0)
    assert p.a4 == pytest.approx(0.96)
    assert p.atilde4 == pytest.approx(0.96 - 1.2)
    assert p.atilde5 == pytest.approx(0.96 - 0.6)


def test_constant_examples():
    p = ModelParams(beta=0.5, gamma=0.5, sigma=0.0, eps=0.0, T=1.0)
    c = compute_bound_constants(p)
    assert c.c0 == pytest.approx(math.exp(-2.0), rel=1e-14)
    assert c.C1 == pytest.approx(math.exp(1.0 + 0.5 * math.e**2), rel=1e-13)
    assert c.C1 == pytest.approx(109.35, abs=0.01)
    assert c.C2 == 0.0
    assert compute_bound_constants(p.replace(T=0.0)).c0 == 1.0


@pytest.mark.parametrize("beta,gamma,regime", [(0.5, 0.5, "beta_eq_gamma"), (0.8, 0.3, "beta_ge_gamma_low"),
                                               (0.6, 0.5, "beta_ge_gamma_high"), (0.3, 0.6, "beta_lt_gamma")])
def test_regimes_and_invariants(beta, gamma, regime):
    p = ModelParams(beta=beta, gamma=gamma)
    c = compute_bound_constants(p)
    assert regime_of(beta, gamma) == c.regime == regime
    assert c.c0 > 0 and c.b > 0
    if regime == "beta_lt_gamma":
        assert min(c.C3, c.C4, c.C5, c.C6) > 0
    else:
        assert c.C1 >= 0 and c.C2 >= 0
    r = np.logspace(-3, 3, 401)
    lo = lower_envelope(np.ones_like(r), r, c)
    hi = upper_envelope(np.ones_like(r), r, c)
    assert np.all(lo <= hi)
    # terminal datum inside the band
    assert np.all(lo <= r**gamma * (1 + 1e-12)) and np.all(r**gamma <= hi * (1 + 1e-12))


def test_degenerate_noise_is_finite():
    for beta, gamma in [(0.5, 0.5), (0.3, 0.6), (0.6, 0.5), (0.8, 0.3)]:
        c = compute_bound_constants(ModelParams(beta=beta, gamma=gamma, sigma=0.0, eps=0.0))
        assert all(math.isfinite(v) or math.isnan(v) for _, v in c.table())
        assert math.isfinite(c.c0)


def test_envelope_examples():
    c = compute_bound_constants(ModelParams(beta=0.5, gamma=0.5, sigma=0.0, eps=0.0))
    assert lower_envelope(3.0, 3.0, c) == pytest.approx(c.c0**0.5)
    assert lower_envelope(1.0, 4.0, c) == pytest.approx(math.exp(-1.0) * 2.0, rel=1e-13)


@given(K=pos, N=pos, s=st.sampled_from([0.5, 2.0, 10.0]))
@settings(max_examples=50)
def test_envelope_scale_invariance(K, N, s):
    for beta, gamma in [(0.5, 0.5), (0.3, 0.6)]:
        c = compute_bound_constants(ModelParams(beta=beta, gamma=gamma))
        assert lower_envelope(s * K, s * N, c) == pytest.approx(lower_envelope(K, N, c), rel=1e-12)
        assert upper_envelope(s * K, s * N, c) == pytest.approx(upper_envelope(K, N, c), rel=1e-12)


@pytest.mark.parametrize("beta,gamma", [(0.8, 0.3), (0.9, 0.5), (0.75, 0.5)])
def test_c_beta_gamma_inequality(beta, gamma):
    C = c_beta_gamma(beta, gamma)
    x = np.logspace(-4, 4, 10_000)
    assert np.all(1.0 <= C * x ** (2 * beta - 1 - gamma) + x ** (beta - 1) + 1e-12)


def test_c_beta_gamma_domain():
    with pytest.raises(ValueError):
        c_beta_gamma(0.5, 0.5)
