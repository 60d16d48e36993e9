import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from concfield.bound import (
    BoundConditionError,
    calibrate_delta0,
    contraction_tau,
    local_budget,
    min_global_radius,
    quad_sup_closed_form,
    sup_bound,
)
from concfield.model import FieldModel

from conftest import spd_matrix, zoom_max


def iso_model(**kw):
    base = dict(
        dim=4,
        d0sq=400.0 * np.eye(4),
        v0sq=400.0 * np.eye(4),
        dstar=16000.0 * np.eye(4),
        nu0=1.0,
        g=20.0,
        eps=0.05,
        omega0=1.0,
        delta0=0.5,
        aa=math.sqrt(2.0),
        r0=1.0,
    )
    base.update(kw)
    return FieldModel(**base)


# --- local_budget ------------------------------------------------------------


def test_local_budget_example():
    lb = local_budget(iso_model(), 1.0, 2.0)
    assert lb.rho == pytest.approx(0.15, rel=1e-15)
    assert lb.delta == pytest.approx(0.025, rel=1e-15)
    assert lb.err_bound == pytest.approx(0.15 * (1 + math.sqrt(14)) ** 2, rel=1e-14)
    assert lb.err_bound == pytest.approx(3.37, abs=5e-3)


def test_local_budget_vanishes_with_r():
    m = iso_model()
    lbs = [local_budget(m, r, 2.0) for r in (1e-2, 1e-4, 1e-8)]
    for a, b in zip(lbs, lbs[1:]):
        assert b.err_bound == pytest.approx(a.err_bound * (b.r / a.r), rel=1e-12)
    assert lbs[-1].delta < 1e-8 and lbs[-1].rho < 1e-8


def test_local_budget_identity_bracket():
    m = iso_model(d0sq=np.eye(4), v0sq=np.eye(4), dstar=np.eye(4))
    lb = local_budget(m, 1.0, 1.0)
    assert lb.delta + lb.rho < 1
    np.testing.assert_allclose(lb.Ddelta_sq, (1 - lb.delta - lb.rho) * np.eye(4), atol=1e-15)
    assert lb.psd_margin > 0


def test_local_budget_bracket_fails():
    m = iso_model(d0sq=np.eye(4), v0sq=np.eye(4), dstar=np.eye(4))
    with pytest.raises(ValueError, match="local quadratic bracket fails"):
        local_budget(m, 20.0, 1.0)


@pytest.mark.parametrize("r,x", [(0.0, 1.0), (1.0, 0.0), (-1.0, 1.0)])
def test_local_budget_rejects(r, x):
    with pytest.raises(ValueError):
        local_budget(iso_model(), r, x)


# --- contraction_tau ---------------------------------------------------------


def test_tau_example(tau_model):
    assert contraction_tau(tau_model, 1.0) == pytest.approx(0.05 * 6.5, rel=1e-14)


def test_tau_linear_in_r0_and_eps(tau_model):
    t1 = contraction_tau(tau_model, 1.0)
    assert contraction_tau(tau_model, 2.0) == pytest.approx(2 * t1, rel=1e-14)
    assert contraction_tau(tau_model.replace(eps=1e-9), 1.0) < 1e-7


def test_tau_fails(tau_model):
    with pytest.raises(BoundConditionError) as ei:
        contraction_tau(tau_model, 4.0)
    assert ei.value.condition == "tau_cond"
    assert "contraction fails" in str(ei.value)


# --- min_global_radius -------------------------------------------------------


def test_global_radius_example():
    # b* = lambda_min(D*) / lambda_max(V0^2) = 0.5
    m = iso_model(dstar=200.0 * np.eye(4))
    assert min_global_radius(m, 2.0) == pytest.approx(6 * math.sqrt(14) / 0.5, rel=1e-14)
    assert min_global_radius(m, 2.0) == pytest.approx(44.9, abs=0.05)


def test_global_radius_scaling():
    m = iso_model(dstar=200.0 * np.eye(4))
    # x + 3p = 14 -> 56
    assert min_global_radius(m, 44.0) == pytest.approx(2 * min_global_radius(m, 2.0), rel=1e-14)
    big = iso_model(dstar=1e12 * np.eye(4))
    assert min_global_radius(big, 2.0) < 1e-7


def test_global_radius_precondition():
    # x + 3p >= 3 for any x >= 0, so only a negative x can violate it
    m = iso_model(dim=1, d0sq=np.eye(1), v0sq=np.eye(1), dstar=np.eye(1))
    with pytest.raises(BoundConditionError) as ei:
        min_global_radius(m, -1.0)
    assert ei.value.condition == "global_cond"


# --- quad_sup_closed_form ----------------------------------------------------


def test_quad_sup_examples():
    assert quad_sup_closed_form(np.zeros(2), np.eye(2)) == 0.0
    assert quad_sup_closed_form(np.array([3.0, 4.0]), np.eye(2)) == pytest.approx(12.5, rel=1e-15)


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 2 * math.pi))
def test_quad_sup_rotation_invariant(phi):
    c, s = math.cos(phi), math.sin(phi)
    xi = np.array([c * 3 - s * 4, s * 3 + c * 4])
    assert quad_sup_closed_form(xi, np.eye(2)) == pytest.approx(12.5, rel=1e-13)


def test_quad_sup_singular():
    with pytest.raises(ValueError, match="singular"):
        quad_sup_closed_form(np.ones(2), np.diag([1.0, 0.0]))


@settings(max_examples=15, deadline=None)
@given(st.data())
def test_quad_sup_matches_grid_search(data):
    dd = data.draw(spd_matrix(lo=0.5, hi=4.0))
    p = dd.shape[0]
    grad = np.array(data.draw(st.lists(st.floats(-3, 3), min_size=p, max_size=p)))
    if np.linalg.norm(grad) < 0.1:
        grad = grad + 1.0
    exact = quad_sup_closed_form(grad, dd)
    xi_norm = math.sqrt(2 * exact)

    def z(u):
        return u @ grad - 0.5 * np.einsum("ni,ij,nj->n", u, dd, u)

    found = zoom_max(z, np.zeros(p), 10 * xi_norm)
    assert found == pytest.approx(exact, rel=1e-6)


# --- sup_bound ---------------------------------------------------------------


def test_sup_bound_example():
    m = iso_model()
    rep = sup_bound(m, 2.0)
    assert all(rep.validity.values())
    # B = I_4: lam0 = 1, p = 4, v = sqrt(8); x = 2 lies on the linear branch z = 6 x
    tau = 0.05 * 1.0 * (0.5 + 3 * 2)
    quant = (4 + 12) / (2 * (1 - tau))
    err = 6 * 0.05 * (1 + math.sqrt(14)) ** 2
    assert rep.r0_used == 1.0
    assert rep.tau == pytest.approx(tau, rel=1e-14)
    assert rep.branch == "linear"
    assert rep.quantile_term == pytest.approx(quant, rel=1e-13)
    assert rep.error_term == pytest.approx(err, rel=1e-13)
    assert rep.total_offset == pytest.approx(quant + err, rel=1e-13)
    c = (quant + err - 2.0) / (math.sqrt(8) * math.sqrt(2) + 2)
    assert rep.implied_c == pytest.approx(c, rel=1e-12)
    assert math.isfinite(rep.implied_c)
    assert rep.failure_probability == pytest.approx(5 * math.exp(-2))


def test_sup_bound_report_invariants():
    m = iso_model(d0sq=np.diag([500.0, 450, 420, 400]), dstar=np.diag([2e4, 2e4, 2e4, 2e4]))
    for x in (0.1, 1.0, 3.0, 7.0):
        r = sup_bound(m, x)
        assert r.total_offset == pytest.approx(r.quantile_term + r.error_term, rel=1e-15)
        c = (r.total_offset - r.lam0 * r.p_norm / 2) / (r.lam0 * (r.v_norm * math.sqrt(x) + x))
        assert r.implied_c == pytest.approx(c, rel=1e-12)


def test_sup_bound_eps_cond():
    with pytest.raises(BoundConditionError) as ei:
        sup_bound(iso_model(eps=0.4), 2.0)
    assert ei.value.condition == "eps_cond"
    assert "ε√(x+3p) < 1" in str(ei.value)
    assert 0.4 * math.sqrt(14) == pytest.approx(1.497, abs=1e-3)


def test_sup_bound_tau_cond():
    with pytest.raises(BoundConditionError) as ei:
        sup_bound(iso_model(r0=4.0), 2.0)
    assert ei.value.condition == "tau_cond"


def test_sup_bound_xc_cond():
    m = iso_model(g=math.sqrt(8.0), eps=0.01)
    with pytest.raises(BoundConditionError) as ei:
        sup_bound(m, 2.0)
    assert ei.value.condition == "xc_cond"


def test_sup_bound_uses_global_radius():
    m = iso_model(dstar=400.0 * np.eye(4), eps=0.005)
    rep = sup_bound(m, 2.0)
    assert rep.r0_used == pytest.approx(6 * math.sqrt(14), rel=1e-14)


def test_prob_multiplier_configurable():
    rep = sup_bound(iso_model(), 2.0, prob_multiplier=1.0)
    assert rep.prob_multiplier == 1.0
    assert rep.failure_probability == pytest.approx(math.exp(-2))


def test_zero_tau_zero_error_shape():
    # omega0 -> 0 and delta0 -> 0 make tau and the error term vanish
    m = iso_model(omega0=1e-300, delta0=1e-300)
    for x in (0.05, 0.5, 2.0, 10.0, 50.0):
        r = sup_bound(m, x)
        assert r.tau < 1e-250 and r.error_term < 1e-250
        assert math.isfinite(r.implied_c) and r.implied_c > 0


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 40.0), st.floats(0.05, 40.0))
def test_total_offset_monotone_in_x_within_branch(x1, x2):
    m = iso_model()
    a, b = sorted((x1, x2))
    ra, rb = sup_bound(m, a), sup_bound(m, b)
    if ra.branch == rb.branch:
        assert rb.total_offset >= ra.total_offset - 1e-12


@settings(max_examples=40, deadline=None)
@given(st.floats(0.001, 0.06), st.floats(0.001, 0.06))
def test_total_offset_monotone_in_eps(e1, e2):
    a, b = sorted((e1, e2))
    ra, rb = sup_bound(iso_model(eps=a), 2.0), sup_bound(iso_model(eps=b), 2.0)
    assert rb.total_offset >= ra.total_offset - 1e-12


@settings(max_examples=30, deadline=None)
@given(st.data(), st.floats(0.01, 100.0))
def test_scale_consistency(data, c):
    d0 = data.draw(spd_matrix(p=3, lo=300.0, hi=900.0))
    v0 = data.draw(spd_matrix(p=3, lo=300.0, hi=900.0))
    m = FieldModel(3, d0, v0, 1e3 * d0, 1.0, 30.0, 0.01, 1.0, 0.5, 2.0, 1.0)
    ms = m.replace(d0sq=c * d0, v0sq=c * v0, dstar=c * 1e3 * d0)
    r, rs = sup_bound(m, 1.5), sup_bound(ms, 1.5)
    assert rs.tau == pytest.approx(r.tau, rel=1e-10)
    assert rs.quantile_term == pytest.approx(r.quantile_term, rel=1e-10)
    assert rs.lam0 == pytest.approx(r.lam0, rel=1e-10)


def test_sup_bound_rejects_nonpositive_x():
    with pytest.raises(ValueError):
        sup_bound(iso_model(), 0.0)


def test_report_as_dict_roundtrip():
    d = sup_bound(iso_model(), 2.0).as_dict()
    assert set(d["validity"]) == {"eps_cond", "global_cond", "tau_cond", "xc_cond"}
    assert d["total_offset"] == pytest.approx(d["quantile_term"] + d["error_term"])


# --- calibrate_delta0 --------------------------------------------------------


def unit_model(eps=0.1, p=3):
    e = np.eye(p)
    return FieldModel(p, e, e, e, 1.0, 10.0, eps, 1.0, 1.0, 1.0, 1.0)


def test_calibrate_quadratic_is_zero():
    m = unit_model()
    d = calibrate_delta0(lambda t: -0.5 * float(t @ t), m, 0.7, 500)
    assert d == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("eps", [0.05, 0.1, 0.3])
def test_calibrate_cubic(eps):
    # |2 M / |theta|^2 + 1| = 2 |theta|, largest on the sphere |theta| = r
    m = unit_model(eps)
    M = lambda t: -0.5 * float(t @ t) - float(np.linalg.norm(t)) ** 3  # noqa: E731
    d = calibrate_delta0(M, m, 0.8, 400)
    assert d == pytest.approx(2.0 / eps, rel=1e-12)


def test_calibrate_approaches_sup_from_below():
    m = unit_model(p=2)
    M = lambda t: -0.5 * float(t @ t) - t[0] ** 3  # noqa: E731
    # |2 M / |t|^2 + 1| = 2 |t_0|^3 / |t|^2, whose sup over |t| <= r is 2 r
    true = 2.0 / m.eps
    vals = [calibrate_delta0(M, m, 0.5, k, seed=3) for k in (10, 100, 2000)]
    assert all(v <= true * (1 + 1e-12) for v in vals)
    assert vals[-1] >= 0.999 * true


def test_calibrate_domain_error():
    m = unit_model()
    M = lambda t: math.log(1.0 - float(t @ t)) if float(t @ t) < 1 else math.nan  # noqa: E731
    with pytest.raises(ValueError, match="domain"):
        calibrate_delta0(M, m, 2.0, 50)
