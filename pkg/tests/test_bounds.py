import math
import warnings
from fractions import Fraction

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pmixlab.bounds import (H1, H2, BoundInputs, InfeasibleRegime, corollary_delta, d_p_constant,
                            decay_threshold, enhanced_rate_factor, F_apply, F_compose,
                            F_compose_min, gradient_growth_bound, gronwall_decay, lemma42_t0,
                            rate_inverse, script_H1, script_H2, select_lambda_n,
                            transport_distance_bound, trivial_kappa_bound)
from pmixlab.mixing import RateFunction
from pmixlab.spectral import EigenTable, weyl_constant

L1 = 4 * math.pi**2
TWO_PI = 2 * math.pi
EXP = RateFunction.exponential(1.0, 1.0)
POW = RateFunction.power(1.0, 1.0)


def inputs(nu, h=EXP, **kw):
    base = dict(p=3.0, nu=nu, alpha=1.0, beta=1.0, d=2, grad_u_sup=TWO_PI, theta0_l2=1.0, h=h)
    base.update(kw)
    return BoundInputs(**base)


# --- constants and envelopes ------------------------------------------------------


def test_d_p_exact_integers():
    assert d_p_constant(3) == 3_981_312
    assert d_p_constant(4) == 115_964_116_992
    assert isinstance(d_p_constant(3.0), int)
    # independent route: exact rational arithmetic
    for p in (3, 4, 5):
        assert d_p_constant(p) == Fraction(48) ** (p - 1) * p**p * 2 ** (p * (p - 1))


def test_d_p_monotone_and_guarded():
    assert d_p_constant(3) < d_p_constant(3.5) < d_p_constant(4)
    assert d_p_constant(3.5) == pytest.approx(48**2.5 * 3.5**3.5 * 2 ** (3.5 * 2.5), rel=1e-12)
    with pytest.raises(ValueError):
        d_p_constant(2)


def test_decay_threshold_examples():
    assert decay_threshold(1.0, 3) == pytest.approx(0.5, rel=1e-15)
    assert decay_threshold(1.0, 4) == pytest.approx(1 / math.sqrt(3), rel=1e-15)
    assert decay_threshold(1e-12, 3) / 1e-12 == pytest.approx(1.0, rel=1e-10)


def test_gronwall_examples():
    assert gronwall_decay(0.01, 3, L1, 0.7, 0.0) == 0.7
    t = trivial_kappa_bound(0.01, 3)
    assert t == pytest.approx(0.403144, abs=1e-6)
    assert t == pytest.approx(100 / (8 * math.pi**3), rel=1e-14)
    assert gronwall_decay(0.01, 3, L1, 1.0, t) == pytest.approx(decay_threshold(1.0, 3), abs=1e-12)
    assert trivial_kappa_bound(0.005, 3) == pytest.approx(2 * t, rel=1e-14)
    with pytest.raises(ValueError):
        trivial_kappa_bound(0.01, 2)


@given(st.floats(2.1, 6.0), st.floats(1e-4, 1.0), st.floats(0.1, 10.0))
def test_envelope_at_trivial_time_is_threshold(p, nu, norm0):
    # with norm0 = 1 the identity is exact for every p
    t = trivial_kappa_bound(nu, p)
    assert gronwall_decay(nu, p, L1, 1.0, t) == pytest.approx(decay_threshold(1.0, p), rel=1e-12)
    assert gronwall_decay(nu, p, L1, norm0, 2 * t) < gronwall_decay(nu, p, L1, norm0, t)
    assert gronwall_decay(2 * nu, p, L1, norm0, t) < gronwall_decay(nu, p, L1, norm0, t)


def test_rate_inverse_round_trip():
    rng = np.random.default_rng(0)
    for h in (EXP, POW, RateFunction.power(3.0, 2.0)):
        y = rng.uniform(1e-9, 0.999, 200) * min(h.sup(), 1.0)
        assert np.allclose(h(rate_inverse(h, y)), y, rtol=1e-12, atol=0)
    assert rate_inverse(RateFunction.power(1, 2), 0.25) == pytest.approx(2)
    with pytest.raises(ValueError):
        rate_inverse(EXP, 1.5)


# --- threshold frequencies --------------------------------------------------------


def g_oracle(inp, lam, case="strong"):
    """Direct multiprecision evaluation of the threshold condition, as ``(lhs, rhs)``."""
    mp.mp.dps = 50
    lam = mp.mpf(lam)
    p, a, b, d = inp.p, inp.alpha, inp.beta, inp.d
    if case == "strong":
        y = lam ** (-(a + b) / 2) / 2
    else:
        y = lam ** (-(d + 2 * a + 2 * b) / mp.mpf(4)) / (2 * mp.sqrt(inp.weyl))
    c1, c2 = inp.h.params
    L = mp.log(c1 / y) / c2 if inp.h.law == "exponential" else (c1 / y) ** (1 / mp.mpf(c2))
    D = mp.mpf(48) ** (p - 1) * mp.mpf(p) ** p * mp.mpf(2) ** (p * (p - 1))
    G = mp.mpf(inp.grad_u_sup)
    lhs = lam ** (p / 2) * mp.mpf(d) ** ((p - 2) / 2) * D * mp.mpf(inp.theta0_l2) ** (p - 2) \
        * mp.exp(4 * G * L) / L
    return lhs, G**2 / (4 * mp.mpf(inp.nu))


@pytest.mark.parametrize("case", ["strong", "weak"])
@pytest.mark.parametrize("nu,h", [(1e-12, EXP), (1e-30, EXP), (1e-300, POW), (1e-100, POW)])
def test_threshold_is_a_certified_sup(case, nu, h):
    inp = inputs(nu, h)
    H, info = (H1 if case == "strong" else H2)(inp, full_output=True)
    lhs, rhs = g_oracle(inp, mp.e ** mp.mpf(info.log_value), case)
    assert lhs <= rhs * (1 + 1e-9)
    lhs, rhs = g_oracle(inp, mp.e ** mp.mpf(info.log_value) * (1 + 1e-6), case)
    assert lhs > rhs
    assert info.method == "bisection" and info.residual <= 1e-10


def test_threshold_infeasible_for_large_nu():
    with pytest.raises(InfeasibleRegime, match="too large for enhancement regime"):
        H1(inputs(1e-3))


def test_threshold_grows_as_nu_decreases():
    nus = [1e-10, 1e-14, 1e-20, 1e-40, 1e-80]
    Hs = [H1(inputs(nu), full_output=True)[1].log_value for nu in nus]
    assert np.all(np.diff(Hs) > 0)
    # fixed lambda: the condition tightens as nu grows
    inp_a, inp_b = inputs(1e-12), inputs(1e-11)
    lam = math.exp(H1(inp_a, full_output=True)[1].log_value)
    assert g_oracle(inp_b, lam)[0] > g_oracle(inp_b, lam)[1]


def test_non_monotone_condition_falls_back_to_grid_scan():
    h = RateFunction.tabulated([0, 1e-4, 1e-1, 5.0, 10.0], [1.0, 1e-3, 0.9e-3, 1e-8, 1e-12])
    inp = inputs(1e-13, h)
    with pytest.warns(RuntimeWarning, match="not monotone"):
        H, info = H1(inp, full_output=True)
    assert info.method == "grid-scan" and info.warnings
    from pmixlab.bounds import _condition
    c = _condition(inp, "strong")
    assert c(info.log_value) <= 0
    beyond = info.log_value + np.arange(1e-3, 60, 1e-3)
    assert np.all(c(beyond) > 0)


def test_weyl_constant_doubling_does_not_raise_h2():
    a = H2(inputs(1e-20), full_output=True)[1].log_value
    b = H2(inputs(1e-20, weyl=2 * weyl_constant(2)), full_output=True)[1].log_value
    assert b <= a


@pytest.mark.parametrize("G,nus", [(1.0, (1e-30, 1e-60, 1e-120, 1e-300)),
                                   (TWO_PI, (1e-120, 1e-200, 1e-300))])
def test_weak_threshold_below_strong_once_both_active(G, nus):
    for nu in nus:
        inp = inputs(nu, grad_u_sup=G)
        strong, weak = enhanced_rate_factor(inp, "strong"), enhanced_rate_factor(inp, "weak")
        assert strong.active and weak.active
        assert weak.log_H <= strong.log_H
        assert weak.rate_factor >= strong.rate_factor


def test_weak_threshold_can_exceed_strong_below_lambda1():
    # 1/(2 sqrt(c)) > 1/2 enlarges the weak feasible set at small lambda
    inp = inputs(1e-15)
    assert H2(inp) > H1(inp) and H1(inp) < L1


# --- script H, rate factor ------------------------------------------------------------


def test_script_h1_worked_example():
    inp = inputs(1e-12)
    # exponent (a+b)/2 = 1, so the h^{-1} argument is 1e4^-1 / 2^0
    L = math.log(1e4)
    want = min(1.0, 2.0**-4 * L**0.5)
    assert script_H1(inp, 1e4) == pytest.approx(want, rel=1e-14)
    assert script_H1(inp, 1e4) == pytest.approx(0.189678, abs=1e-6)


def test_script_h_equals_one_for_small_nu():
    # H grows like |ln nu| / (8 G): a gentle flow reaches script H = 1 within float range
    inp = inputs(1e-300, POW, grad_u_sup=0.01)
    assert enhanced_rate_factor(inp).script_H == 1.0
    assert script_H2(inp, H2(inp)) == 1.0
    assert enhanced_rate_factor(inputs(1e-300, POW)).script_H < 1.0


def test_script_h_rejects_out_of_range():
    with pytest.raises(ValueError):
        script_H1(inputs(1e-12), 1.0)


@given(st.floats(-300, -11))
def test_rate_factor_report_positive(log_nu):
    rep = enhanced_rate_factor(inputs(10.0**log_nu))
    d = rep.to_dict()
    assert rep.effective > 0 and 0 < (rep.script_H or 1.0) <= 1.0
    assert d["d_p"] == 3_981_312.0 and rep.search.residual <= 1e-10


def test_rate_factor_over_trivial_vanishes():
    ratios = [rep.effective / rep.trivial for rep in
              (enhanced_rate_factor(inputs(nu, grad_u_sup=1.0))
               for nu in (1e-20, 1e-40, 1e-80, 1e-160, 1e-300))]
    assert np.all(np.diff(ratios) < 0) and ratios[-1] < 1e-50


def test_inactive_regime_falls_back_to_trivial():
    # H below lambda1: only the trivial bound applies
    rep = enhanced_rate_factor(inputs(1e-12))
    assert not rep.active and rep.H < L1
    assert rep.script_H is None and rep.rate_factor is None
    assert rep.effective == rep.trivial


# --- corollary exponents ---------------------------------------------------------


def test_delta_worked_examples():
    assert corollary_delta("strong", "power", p=3, alpha=1, beta=1, q=2) == pytest.approx(3, abs=1e-12)
    assert corollary_delta("strong", "exponential", p=3, alpha=1, beta=1, c2=1,
                           grad_u_sup=TWO_PI) == pytest.approx(16 * math.pi / (3 + 16 * math.pi),
                                                              abs=1e-12)
    assert corollary_delta("weak", "power", p=3, alpha=1, beta=1, d=2, q=2) == pytest.approx(2.0)
    assert corollary_delta("weak", "exponential", p=3, alpha=1, beta=1, d=2, c2=1,
                           grad_u_sup=TWO_PI) == pytest.approx(24 * math.pi / (3 + 24 * math.pi))


@given(st.floats(2.01, 10), st.floats(0.01, 1), st.floats(0.01, 5), st.sampled_from([1, 2]),
       st.floats(0.01, 10), st.floats(0.01, 50))
def test_delta_ranges(p, a, b, d, c2, G):
    for case in ("strong", "weak"):
        e = corollary_delta(case, "exponential", p=p, alpha=a, beta=b, d=d, c2=c2, grad_u_sup=G)
        assert 0 < e < 1
        assert corollary_delta(case, "power", p=p, alpha=a, beta=b, d=d, q=c2) > 0


# --- transport comparison ------------------------------------------------------------


def test_transport_distance_bound_examples():
    inp = inputs(1e-3)
    assert transport_distance_bound(inp, 0.0, 1.0) == 0.0
    g = 7.3
    want = math.sqrt(2) * 3_981_312 * 1e-3 / TWO_PI * g**3
    assert transport_distance_bound(inp, g, 0.0) == pytest.approx(want, rel=1e-14)
    r = transport_distance_bound(inp, g, 0.4) / transport_distance_bound(inp, g, 0.2)
    assert r == pytest.approx(math.exp(2 * TWO_PI * 0.2), rel=1e-12)
    assert transport_distance_bound(inp, g, 0.0, d_p=1.0) == pytest.approx(want / 3_981_312)


def test_gradient_growth_bound_examples():
    assert gradient_growth_bound(1, 3, TWO_PI, 2.0, 0.0) == 8.0
    assert gradient_growth_bound(2, 3, TWO_PI, 2.0, 0.0) == pytest.approx(8 * math.sqrt(2))
    with pytest.raises(ValueError):
        gradient_growth_bound(2, 3, TWO_PI, 2.0, -1.0)


def test_bound_inputs_validation():
    with pytest.raises(ValueError):
        inputs(1e-3, grad_u_sup=0.0)
    with pytest.raises(ValueError):
        inputs(1e-3, alpha=1.5)
    with pytest.raises(ValueError):
        inputs(-1.0)
    assert inputs(1e-3).weyl == pytest.approx(weyl_constant(2))


# --- contact time, mode selection ------------------------------------------------------


def test_contact_time_example():
    t0 = lemma42_t0(0.5, L1, EXP, 1.0, 1.0)
    assert t0 == pytest.approx(0.5 + 2 * math.log(8 * math.pi**2), rel=1e-14)
    assert t0 - 0.5 == pytest.approx(8.7378, abs=1e-4)


@given(st.floats(0, 10), st.floats(40, 1e8), st.floats(0.1, 1), st.floats(0.1, 2))
def test_contact_time_after_start(s, lam, a, b):
    assert lemma42_t0(s, lam, EXP, a, b) > s
    assert lemma42_t0(s, lam, POW, a, b, "weak", d=2) > s


def test_weak_contact_time_not_earlier_on_grid():
    for lam in L1 * np.array([1, 2, 5, 10, 100, 1e4]):
        for d in (1, 2):
            assert lemma42_t0(0, lam, EXP, 1, 1, "weak", d=d) >= lemma42_t0(0, lam, EXP, 1, 1)


def test_select_lambda_n():
    table = EigenTable.for_ball(2, 10)
    assert select_lambda_n(L1 * 2.5, table) == pytest.approx(2 * L1)
    assert select_lambda_n(L1 * 0.5, table) is None


# --- F iteration --------------------------------------------------------------------


def test_f_examples():
    xs = np.linspace(0, 10, 11)
    assert np.array_equal(F_apply(0.0, 3.0, xs), xs)
    assert F_apply(1.0, 4.0, 1.0) == pytest.approx(1 / math.sqrt(2), rel=1e-15)


@given(st.floats(1e-3, 10), st.floats(2.05, 6))
def test_f_strictly_increasing(a, p):
    xs = np.linspace(0, 10, 2001)
    assert np.all(np.diff(F_apply(a, p, xs)) > 0)


def test_f_composition_identity_and_domination():
    rng = np.random.default_rng(11)
    n = 10_000
    p = rng.uniform(2, 6, n) + 1e-9
    b, c, x0 = (rng.uniform(1e-9, 10, n) for _ in range(3))
    t0, t1, t2 = np.sort(rng.uniform(0, 10, (n, 3)), axis=1).T
    nested = F_apply(c * (t2 - t1), p, F_apply(b * (t1 - t0), p, x0))
    with np.errstate(over="ignore"):
        closed = x0 / ((c * (t2 - t1) + b * (t1 - t0)) * x0 ** (p - 2) + 1) ** (1 / (p - 2))
        closed = np.where(np.isfinite(closed), closed, 0.0)
    assert np.max(np.abs(nested - closed) / np.maximum(1, closed)) <= 1e-12
    assert np.allclose(F_compose(b, c, t0, t1, t2, p, x0), closed, rtol=1e-12, atol=0)
    assert np.all(closed <= F_compose_min(b, c, t0, t1, t2, p, x0) * (1 + 1e-12))


def test_f_guards():
    with pytest.raises(ValueError):
        F_apply(-1.0, 3.0, 1.0)
    with pytest.raises(ValueError):
        F_compose_min(1, 1, 0.0, 2.0, 1.0, 3.0, 1.0)
