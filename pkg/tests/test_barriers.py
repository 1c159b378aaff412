import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from thinfb.barriers import (BarrierParams, QuadraticSurface, eval_U, eval_U_t, eval_V, eval_v_ab,
                             gamma_V, order_nearby_surfaces, random_barrier, signed_distance,
                             subsolution_check, supersolution_check)
from thinfb.errors import ClassViolation, PreconditionViolation
from thinfb.numerics import fd_laplacian

coord = st.floats(-1, 1, allow_nan=False)


def test_U_on_slit_and_axis():
    t = np.linspace(-1, 0, 11)
    assert np.all(eval_U(t, 0 * t) == 0)
    assert np.allclose(eval_U(np.array([0.25, 1.0, 4.0]), 0.0), [0.5, 1.0, 2.0])
    assert eval_U(0.0, 0.0) == 0.0


def test_U_no_cancellation_far_left():
    # rho + t ~ s^2 / (2|t|) for t << 0
    t, s = -1e8, 1.0
    assert eval_U(t, s) == pytest.approx(s / (2 * np.sqrt(-t)), rel=1e-12)


@given(coord, st.floats(0.05, 1), st.floats(0.01, 100))
def test_U_half_homogeneous(t, s, lam):
    assert eval_U(lam * t, lam * s) == pytest.approx(np.sqrt(lam) * eval_U(t, s), rel=1e-12)


@settings(max_examples=50)
@given(coord, st.floats(0.1, 1))
def test_U_harmonic_off_slit(t, s):
    f = lambda X: eval_U(X[..., 0], X[..., 1])
    assert abs(fd_laplacian(f, np.array([t, s]), 1e-2)) < 1e-5


@given(coord, st.floats(0.05, 1))
def test_U_t_matches_fd(t, s):
    d = 1e-6
    fd = (eval_U(t + d, s) - eval_U(t - d, s)) / (2 * d)
    assert eval_U_t(t, s) == pytest.approx(fd, rel=1e-5, abs=1e-8)


def test_v_ab_reduces_to_U():
    t, s = np.meshgrid(np.linspace(-1, 1, 9), np.linspace(0, 1, 5))
    assert np.array_equal(eval_v_ab(0, 0, t, s), eval_U(t, s))
    rho = np.hypot(t, s)
    assert np.allclose(eval_v_ab(0.3, -0.2, t, s), (1 + 0.075 * rho - 0.1 * t) * eval_U(t, s))


def test_surface_validation():
    with pytest.raises(ValueError):
        QuadraticSurface(np.array([[0, 1], [2, 0]]), np.zeros(2))
    with pytest.raises(ValueError):
        QuadraticSurface(np.zeros((2, 2)), np.zeros(1))
    assert QuadraticSurface.flat(3).is_planar


@given(st.floats(-0.5, 0.5), coord, coord)
def test_signed_distance_plane(xi, x1, xn):
    S = QuadraticSurface(np.zeros((1, 1)), [xi])
    sd = signed_distance(S, np.array([x1, xn]))
    assert sd.t == pytest.approx((xn - xi * x1) / np.sqrt(1 + xi * xi), abs=1e-12)


@settings(max_examples=50)
@given(st.floats(-1, 1), st.floats(-0.3, 0.3), coord, st.floats(-0.5, 0.5))
def test_signed_distance_curved_foot(m, xi, x1, xn):
    S = QuadraticSurface([[m]], [xi])
    x = np.array([x1, xn])
    sd = signed_distance(S, x)
    foot = sd.foot
    assert foot[1] == pytest.approx(S.height(foot[:1]), abs=1e-10)
    # x - foot is normal to the tangent (1, h'(q))
    tangent = np.array([1.0, S.gradient(foot[:1])[0]])
    assert abs((x - foot) @ tangent) < 1e-9
    assert abs(sd.t) == pytest.approx(np.linalg.norm(x - foot), abs=1e-12)
    assert np.sign(sd.t) in (0, np.sign(xn - S.height(np.array([x1]))))


def test_curvature_bound():
    with pytest.raises(PreconditionViolation):
        signed_distance(QuadraticSurface([[2.0]], [0.0]), np.zeros(2))


@pytest.mark.parametrize("n", [1, 2, 3])
def test_planar_barrier_is_shifted_U(n):
    rng = np.random.default_rng(n)
    X = rng.uniform(-1, 1, size=(50, n + 1))
    X[:, -1] = np.abs(X[:, -1])
    V = BarrierParams.make(n=n)
    assert np.allclose(eval_V(V, X), eval_U(X[:, -2], X[:, -1]))
    V = V.translated(0.2)
    assert np.allclose(eval_V(V, X), eval_U(X[:, -2] - 0.2, X[:, -1]))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.25, 4))
def test_rescaling_covariance(seed, lam):
    rng = np.random.default_rng(seed)
    V = random_barrier(rng, 2, 0.1)
    X = rng.uniform(-0.5, 0.5, size=(20, 3))
    X[:, -1] = np.abs(X[:, -1])
    W = V.rescaled(lam)
    assert np.allclose(eval_V(W, X), eval_V(V, lam * X) / np.sqrt(lam), atol=1e-12)


@given(st.integers(0, 10**6), st.sampled_from([1, 2, 3]))
def test_random_barrier_classes(seed, n):
    rng = np.random.default_rng(seed)
    V = random_barrier(rng, n, 0.05)
    assert V.in_class(0.05)
    W = random_barrier(rng, n, 0.05, constrained=True)
    assert W.in_class(0.05, constrained=True)
    assert abs(W.margin) < 1e-12


def test_json_roundtrip():
    V = BarrierParams.make([[0.01, 0.002], [0.002, -0.03]], [0.02, 0.0], 0.05, -0.01).translated(0.1)
    W = BarrierParams.from_json(V.to_json())
    assert W.to_json() == V.to_json()


def test_sub_and_supersolution_checks():
    V = BarrierParams.make(M=[[0.0]], xi=[0.0], a=0.06, b=0.0)
    assert subsolution_check(V, 0.06)
    assert not supersolution_check(V, 0.06)
    W = BarrierParams.make(M=[[0.0]], xi=[0.0], a=-0.06, b=0.0)
    assert supersolution_check(W, 0.06)
    with pytest.raises(ClassViolation):
        subsolution_check(V, 0.2)
    with pytest.raises(ClassViolation):
        subsolution_check(V, 0.05)


def test_gamma_V_planar():
    V = BarrierParams.make(xi=[0.1], a=0.2, b=0.3)
    X = np.array([0.5, 0.3, 0.4])
    r = 0.5
    assert gamma_V(V, X) == pytest.approx(0.1 * r * r + 0.3 * r * 0.3 - 0.05)


def test_order_nearby_surfaces():
    V = BarrierParams.make(xi=[0.0], M=[[0.2]], a=0.1)
    assert order_nearby_surfaces(V, V, 0.5, 0.1) == 0.0
    W = V.translated(-0.01)  # W(X) = V(X + 0.01 e_n) >= V(X)
    assert order_nearby_surfaces(V, W, 0.5, 0.1) == 0.0
    shift = order_nearby_surfaces(W, V, 0.5, 0.1)
    assert 0.01 <= shift <= 0.01 + 0.1 * 0.25 / 20 + 1e-12
    with pytest.raises(PreconditionViolation):
        order_nearby_surfaces(V, BarrierParams.make(xi=[0.0], a=0.5), 0.5, 0.1)
