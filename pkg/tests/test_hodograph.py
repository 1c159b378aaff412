import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from thinfb.barriers import eval_U
from thinfb.errors import NeverFlat, NonInjective, NotFlat
from thinfb.grid import Grid, GridFunction
from thinfb.hodograph import (compute_hodograph, inverse_hodograph, measure_flatness,
                              ordering_transfer_check, reference_U)

PHIS = {
    "sin": lambda X: np.sin(X[..., -3] if X.shape[-1] > 2 else X[..., 0]) + X[..., -2] ** 2,
    "quadratic": lambda X: 0.5 * X[..., -2] ** 2 - X[..., -1] ** 2 + 0.3,
    "exp": lambda X: np.exp(X[..., -2]) - 1,
}


def _shifted(g, c):
    return GridFunction.from_function(g, lambda X: eval_U(X[..., -2] - c, X[..., -1]))


@pytest.mark.parametrize("k", [-3, -1, 0, 2])
def test_translate_gives_constant_hodograph(k):
    g = Grid.cube(1, 1 / 32)
    c = k * g.h
    H = compute_hodograph(_shifted(g, c), 0.2, radius=0.5)
    assert np.allclose(H.w_min, -c, atol=1e-12) and np.allclose(H.w_max, -c, atol=1e-12)
    assert H.oscillation() == pytest.approx(0.0, abs=1e-12)
    assert measure_flatness(_shifted(g, c), radius=0.5).eps == pytest.approx(abs(c), abs=1e-7)


def test_not_flat_raises():
    g = Grid.cube(1, 1 / 16)
    with pytest.raises(NotFlat):
        compute_hodograph(_shifted(g, 0.25), 0.1, radius=0.5)
    H = compute_hodograph(_shifted(g, 0.25), 0.1, radius=0.5, strict=False)
    assert np.isnan(H.w_min).any()
    with pytest.raises(NeverFlat):
        measure_flatness(_shifted(g, 0.25), radius=0.5, eps_max=0.1)


@settings(max_examples=15, deadline=None)
@given(st.sampled_from(sorted(PHIS)), st.floats(0.005, 0.05), st.integers(0, 1000))
def test_inverse_roundtrip(name, eps, seed):
    phi = PHIS[name]
    f = inverse_hodograph(phi, eps)
    P = np.random.default_rng(seed).uniform(-0.5, 0.5, size=(16, 2))
    P[:, 1] = np.abs(P[:, 1]) + 0.05
    H = compute_hodograph(f, 0.3, points=P)
    assert np.abs(H.mid - eps * phi(P)).max() < 1e-9


def test_inverse_on_grid_and_zero_phi():
    g = Grid.cube(1, 1 / 8)
    out = inverse_hodograph(lambda X: np.zeros(X.shape[:-1]), 0.1, grid=g)
    # root error ~1e-16 at the edge becomes ~1e-8 after the square root
    assert np.abs(out.values - reference_U()(g.coords())).max() < 1e-7


def test_inverse_fold_detected():
    with pytest.raises(NonInjective):
        inverse_hodograph(lambda X: 40 * X[..., -2], 0.1, bound=10)(np.array([[0.1, 0.1]]))


def test_csv_columns():
    g = Grid.cube(2, 1 / 8)
    H = compute_hodograph(_shifted(g, 0.0), 0.1, radius=0.5)
    header = H.to_csv().splitlines()[0]
    assert header == "x1,xn,s,w_min,w_max"


def test_ordering_transfer_for_translates():
    g = Grid.cube(1, 1 / 32)
    v, w = _shifted(g, 2 * g.h), _shifted(g, 0.0)  # v <= w
    assert ordering_transfer_check(v, w, 0.5, 0.1)
