import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from concfield.model import FieldModel, curvature_rate, effective_dims, minimal_aa, validate_model

from conftest import spd_matrix


def make(d0, v0, dstar, eps=0.5, aa=1.0, **kw):
    p = np.asarray(d0).shape[0]
    args = dict(dim=p, d0sq=d0, v0sq=v0, dstar=dstar, nu0=1.0, g=10.0, eps=eps, omega0=1.0, delta0=1.0, aa=aa, r0=1.0)
    args.update(kw)
    return FieldModel(**args)


def test_identity_model_fails_eps_order_with_margin_minus_three():
    eye = np.eye(2)
    rep = validate_model(make(eye, eye, eye))
    assert not rep.valid
    assert rep["v0sq_ge_eps"].margin == pytest.approx(-3.0)
    assert [c.name for c in rep.failed()] == ["v0sq_ge_eps"]


def test_scaled_identity_model_is_valid():
    m9 = 9 * np.eye(2)
    rep = validate_model(make(m9, m9, m9))
    assert rep.valid
    assert all(c.margin >= 0 for c in rep.checks)


def test_small_eps_needs_large_variance():
    rep = validate_model(make(np.eye(2), 2 * np.eye(2), np.eye(2), eps=0.05, aa=2.0))
    assert not rep["v0sq_ge_eps"].passed
    assert rep["v0sq_ge_eps"].margin == pytest.approx(2.0 - 400.0)


def test_scalar_range_checks():
    m9 = 9 * np.eye(2)
    rep = validate_model(make(m9, m9, m9, nu0=0.5, eps=0.0, r0=-1.0))
    failed = {c.name for c in rep.failed()}
    assert {"nu0_ge_1", "eps_pos", "r0_pos", "v0sq_ge_eps"} <= failed


def test_hard_errors_on_malformed_input():
    with pytest.raises(ValueError, match="dimension mismatch"):
        make(np.eye(2), np.eye(3), np.eye(2))
    with pytest.raises(ValueError, match="not symmetric"):
        make(np.array([[1.0, 0.2], [0.0, 1.0]]), np.eye(2), np.eye(2))


def test_json_round_trip_and_exact_keys():
    m9 = 9 * np.eye(2)
    m = make(m9, m9, m9)
    back = FieldModel.from_json(m.to_json())
    assert back.to_dict() == m.to_dict()
    d = m.to_dict()
    assert set(d) == {"dim", "d0sq", "v0sq", "dstar", "nu0", "g", "eps", "omega0", "delta0", "aa", "r0"}
    d["extra"] = 1
    with pytest.raises(ValueError, match="keys"):
        FieldModel.from_dict(d)


def test_model_is_immutable():
    m9 = 9 * np.eye(2)
    m = make(m9, m9, m9)
    with pytest.raises(ValueError):
        m.d0sq[0, 0] = 1.0


def test_effective_dims_identity():
    for p in (1, 3, 7):
        eff = effective_dims(np.eye(p), np.eye(p))
        assert eff.p_eff == pytest.approx(p)
        assert eff.v_eff == pytest.approx(math.sqrt(2 * p))
        assert eff.lam0 == pytest.approx(1.0)


def test_effective_dims_diagonal():
    eff = effective_dims(np.diag([1.0, 4.0]), np.diag([2.0, 2.0]))
    np.testing.assert_allclose(eff.B, np.diag([2.0, 0.5]), atol=1e-14)
    assert eff.p_eff == pytest.approx(2.5)
    assert eff.v_eff == pytest.approx(math.sqrt(8.5))
    assert eff.lam0 == pytest.approx(2.0)


def test_effective_dims_singular_curvature():
    with pytest.raises(ValueError, match="curvature singular"):
        effective_dims(np.diag([1.0, 0.0]), np.eye(2))


def test_curvature_rate_examples():
    assert curvature_rate(np.eye(2), np.eye(2)) == pytest.approx(1.0)
    assert curvature_rate(np.diag([1.0, 2.0]), np.diag([2.0, 2.0])) == pytest.approx(0.5)
    assert curvature_rate(2 * np.eye(3), 8 * np.eye(3)) == pytest.approx(0.25)


def test_minimal_aa_examples():
    assert minimal_aa(np.eye(3), np.eye(3)) == pytest.approx(1.0)
    assert minimal_aa(np.diag([1.0, 4.0]), np.diag([2.0, 2.0])) == pytest.approx(math.sqrt(2.0))


@settings(max_examples=60, deadline=None)
@given(spd_matrix(p=3), spd_matrix(p=3))
def test_effective_dim_orderings(d0, v0):
    eff = effective_dims(d0, v0)
    assert eff.p_eff >= eff.lam0 * (1 - 1e-12) > 0
    assert eff.v_eff**2 <= 2 * eff.lam0 * eff.p_eff * (1 + 1e-12)
    assert np.linalg.eigvalsh(eff.B)[0] > -1e-12


@settings(max_examples=60, deadline=None)
@given(spd_matrix(p=3), spd_matrix(p=3), st.integers(0, 2**31 - 1))
def test_effective_dims_rotation_invariant(d0, v0, seed):
    q, _ = np.linalg.qr(np.random.default_rng(seed).standard_normal((3, 3)))
    a = effective_dims(d0, v0)
    b = effective_dims(q @ d0 @ q.T, q @ v0 @ q.T)
    assert b.p_eff == pytest.approx(a.p_eff, rel=1e-10)
    assert b.v_eff == pytest.approx(a.v_eff, rel=1e-10)
    assert b.lam0 == pytest.approx(a.lam0, rel=1e-10)


@settings(max_examples=60, deadline=None)
@given(spd_matrix(), st.data())
def test_minimal_aa_is_tight(d0, data):
    p = d0.shape[0]
    v0 = data.draw(spd_matrix(p=p))
    aa = minimal_aa(d0, v0)
    assert aa**2 == pytest.approx(effective_dims(d0, v0).lam0, rel=1e-12)
    gap = np.linalg.eigvalsh(aa**2 * d0 - v0)[0]
    assert gap >= -1e-10 * max(1.0, np.abs(v0).max())
    assert np.linalg.eigvalsh((0.99 * aa) ** 2 * d0 - v0)[0] < 0
