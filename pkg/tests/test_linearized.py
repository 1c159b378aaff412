import numpy as np
import pytest
from hypothesis import given, strategies as st

from thinfb.errors import PoorFit, TraceViolation
from thinfb.linearized import (KAPPA, DFit, annulus_samples, conformal_pull, conformal_push,
                               extract_expansion, solve_linearized_2d)


def family(c0, c1):
    def h(t, s):
        rho = np.hypot(t, s)
        return c0 + c1 * (8 * rho * t - 4 * rho * rho)
    return h


@given(st.floats(-1, 1), st.floats(-1, 1))
def test_conformal_roundtrip(t, s):
    z, y = conformal_push(t, s)
    assert z >= 0
    tt, ss = conformal_pull(z, y)
    assert tt == pytest.approx(t, abs=1e-12) and ss == pytest.approx(s, abs=1e-12)


def test_pull_maps_to_rho_and_U():
    z, y = annulus_samples()
    t, s = conformal_pull(z, y)
    assert np.allclose(np.hypot(t, s), 0.5 * (z * z + y * y))
    assert np.allclose(np.sqrt((np.hypot(t, s) + t) / 2), z / KAPPA)


@pytest.mark.parametrize("c0,c1", [(0.0, 1.0), (0.3, 0.5), (-0.2, -0.25)])
def test_callable_family_exact(c0, c1):
    E = extract_expansion(family(c0, c1))
    assert E.h0 == pytest.approx(c0, abs=1e-12)
    assert E.a0 == pytest.approx(8 * c1, abs=1e-9)
    assert E.b0 == pytest.approx(-8 * c1, abs=1e-9)
    assert abs(E.defect) < 1e-9
    assert not E.d0_rejected()


def test_callable_d0_mode_rejected():
    base = family(0.3, 0.5)
    E = extract_expansion(lambda t, s: base(t, s) + 0.01 * np.hypot(t, s))
    assert E.d0_rejected()


def test_n2_slices_recover_tangential_terms():
    xi = 0.2

    def h(X):
        return xi * X[..., 0] + family(0.1, 0.5)(X[..., 1], X[..., 2])

    E = extract_expansion(h, n=2)
    assert E.xi0[0] == pytest.approx(xi, abs=1e-9)
    assert E.M0[0, 0] == pytest.approx(0.0, abs=1e-7)
    assert E.a0 == pytest.approx(4.0, abs=1e-8)
    assert E.b0 == pytest.approx(-4.0, abs=1e-8)


def test_dfit_synthetic():
    z, y = annulus_samples()
    H = z * (0.01 + 2 * z * z - 3 * y * y)
    fit = DFit(z, y, H)
    assert (fit.d0, fit.d1, fit.d2) == pytest.approx((0.01, 2.0, -3.0), abs=1e-10)
    assert fit.a == pytest.approx(-4 * KAPPA * (2 - 3))
    assert fit.b == pytest.approx(-2 * KAPPA * (2 + 3))


def test_pde_solve_recovers_family():
    F = solve_linearized_2d(family(0.3, 0.5), h=1 / 128)
    E = extract_expansion(F)
    assert E.h0 == pytest.approx(0.3, abs=1e-4)
    assert E.a0 == pytest.approx(4.0, abs=1e-4)
    assert E.b0 == pytest.approx(-4.0, abs=1e-4)
    assert abs(E.defect) < 1e-6


def test_odd_data_rejected():
    with pytest.raises(TraceViolation):
        solve_linearized_2d(lambda t, s: s, h=1 / 32)


def test_poor_fit_raises():
    with pytest.raises(PoorFit):
        extract_expansion(lambda t, s: np.sign(s) * np.abs(t) ** 0.3, max_residual=1e-6)


def test_constant_data_recovered():
    F = solve_linearized_2d(lambda t, s: np.ones_like(t), h=1 / 64)
    assert F.h0 == pytest.approx(1.0, abs=1e-12)
    for t, s in ((0.3, 0.1), (-0.2, 0.3), (0.0, 0.5)):
        assert F.h_at(t, s) == pytest.approx(1.0, abs=1e-10)
    E = extract_expansion(F)
    assert abs(E.a0) < 1e-10 and abs(E.b0) < 1e-10
