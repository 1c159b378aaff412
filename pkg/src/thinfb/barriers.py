"""Closed-form profiles U, v_{a,b}, the barrier family V_{S,a,b} and gamma_V.

Points are arrays whose last axis holds ``(x', x_n, s)``; the spatial
dimension ``n`` is the length of ``(x', x_n)``.  All functions broadcast
over leading axes and are pure.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import AuditFailure, ClassViolation, NoConvergence, PreconditionViolation

C0_DEFAULT = 10.0
C1_DEFAULT = 10.0
DELTA0_DEFAULT = 0.1


def _rho_plus_t(t, s):
    """rho + t without cancellation for t < 0."""
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    rho = np.hypot(t, s)
    with np.errstate(divide="ignore", invalid="ignore"):
        neg = s * s / (rho - t)
    return np.where(t >= 0, rho + t, np.where(rho > 0, neg, 0.0))


def eval_U(t, s):
    """U(t, s) = sqrt((rho + t)/2); zero exactly on the slit {t <= 0, s = 0}."""
    out = np.sqrt(0.5 * _rho_plus_t(t, s))
    return out if out.ndim else float(out)


def eval_U_t(t, s):
    """t-derivative of U, equal to U/(2 rho).  Infinite on the edge."""
    t = np.asarray(t, dtype=float)
    rho = np.hypot(t, s)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(rho > 0, eval_U(t, s) / (2 * rho), np.inf)
    return out if out.ndim else float(out)


def eval_v_ab(a, b, t, s):
    """v_{a,b}(t, s) = (1 + a rho/4 + b t/2) U(t, s)."""
    t = np.asarray(t, dtype=float)
    rho = np.hypot(t, s)
    out = (1.0 + 0.25 * a * rho + 0.5 * b * t) * eval_U(t, s)
    return out if np.ndim(out) else float(out)


# ---------------------------------------------------------------------------
# surfaces and barrier parameters


@dataclass(frozen=True)
class QuadraticSurface:
    """Graph S = {x_n = offset + xi.x' + x'^T M x'/2}.

    ``offset`` defaults to zero; it is only used for translated copies.
    """

    M: np.ndarray
    xi: np.ndarray
    offset: float = 0.0

    def __post_init__(self):
        M = np.atleast_2d(np.asarray(self.M, dtype=float))
        xi = np.atleast_1d(np.asarray(self.xi, dtype=float))
        if xi.size == 0:
            M = np.zeros((0, 0))
        if M.shape != (xi.size, xi.size):
            raise ValueError(f"M shape {M.shape} does not match xi of size {xi.size}")
        if not np.array_equal(M, M.T):
            raise ValueError("M must be symmetric")
        M.setflags(write=False)
        xi.setflags(write=False)
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "offset", float(self.offset))

    @classmethod
    def flat(cls, n: int) -> "QuadraticSurface":
        return cls(np.zeros((n - 1, n - 1)), np.zeros(n - 1))

    @property
    def n(self) -> int:
        return self.xi.size + 1

    @property
    def is_planar(self) -> bool:
        return not np.any(self.M)

    def height(self, xp):
        xp = np.asarray(xp, dtype=float)
        return self.offset + xp @ self.xi + 0.5 * np.einsum("...i,ij,...j->...", xp, self.M, xp)

    def gradient(self, xp):
        return np.asarray(xp, dtype=float) @ self.M + self.xi

    def translated(self, c: float) -> "QuadraticSurface":
        return QuadraticSurface(self.M, self.xi, self.offset + c)


class SignedDistance(NamedTuple):
    t: np.ndarray
    foot: np.ndarray
    fallback: np.ndarray  # True where Newton failed and vertical distance was used


def signed_distance(S: QuadraticSurface, x, max_iter: int = 50, tol: float = 1e-12,
                    curvature_bound: float = 1.0, fallback: bool = False) -> SignedDistance:
    """Signed distance from points ``x`` (last axis of length n) to S.

    Newton iteration on the stationarity condition of |x - (q, h(q))|^2,
    started from the vertical projection.  With ``fallback`` the vertical
    distance is returned (and flagged) where Newton does not converge;
    otherwise NoConvergence is raised.
    """
    x = np.asarray(x, dtype=float)
    n = S.n
    if x.shape[-1] != n:
        raise ValueError(f"expected points with {n} coordinates, got {x.shape[-1]}")
    if S.M.size and np.linalg.norm(S.M, 2) > curvature_bound:
        raise PreconditionViolation(f"|M| exceeds the curvature bound {curvature_bound}")
    xp, xn = x[..., :-1], x[..., -1]
    flag = np.zeros(xn.shape, dtype=bool)
    if n == 1:
        t = xn - S.offset
        foot = np.stack([np.full_like(xn, S.offset)], axis=-1)
        return SignedDistance(t, foot, flag)
    if S.is_planar:
        norm = np.sqrt(1.0 + S.xi @ S.xi)
        t = (xn - S.height(xp)) / norm
        nu = np.concatenate([-S.xi, [1.0]]) / norm
        return SignedDistance(t, x - t[..., None] * nu, flag)

    k = n - 1
    q = xp.reshape(-1, k).copy()
    xpf, xnf = xp.reshape(-1, k), xn.reshape(-1)
    active = np.ones(q.shape[0], dtype=bool)
    eye = np.eye(k)
    for _ in range(max_iter):
        if not active.any():
            break
        qa = q[active]
        gh = S.gradient(qa)
        dz = S.height(qa) - xnf[active]
        F = (qa - xpf[active]) + dz[:, None] * gh
        done = np.linalg.norm(F, axis=1) <= tol
        J = eye + gh[:, :, None] * gh[:, None, :] + dz[:, None, None] * S.M
        step = np.linalg.solve(J, F[..., None])[..., 0]
        qa = qa - np.where(done[:, None], 0.0, step)
        q[active] = qa
        idx = np.flatnonzero(active)
        active[idx[done]] = False
    if active.any():
        # final residual check for the last update
        qa = q[active]
        F = (qa - xpf[active]) + (S.height(qa) - xnf[active])[:, None] * S.gradient(qa)
        ok = np.linalg.norm(F, axis=1) <= 10 * tol
        idx = np.flatnonzero(active)
        active[idx[ok]] = False
    bad = active.reshape(xn.shape)
    if bad.any() and not fallback:
        raise NoConvergence(f"signed distance Newton failed at {int(bad.sum())} points")
    q = q.reshape(xp.shape)
    foot = np.concatenate([q, S.height(q)[..., None]], axis=-1)
    vert = xn - S.height(xp)
    t = np.sign(vert) * np.linalg.norm(x - foot, axis=-1)
    t = np.where(bad, vert, t)
    foot = np.where(bad[..., None], np.concatenate([xp, S.height(xp)[..., None]], axis=-1), foot)
    return SignedDistance(t, foot, bad)


@dataclass(frozen=True)
class BarrierParams:
    """Parameters (S, a, b) of the barrier V_{S,a,b}."""

    surface: QuadraticSurface
    a: float = 0.0
    b: float = 0.0

    @classmethod
    def make(cls, M=None, xi=None, a=0.0, b=0.0, n: int | None = None, offset=0.0):
        if xi is None:
            if n is None:
                raise ValueError("need xi or n")
            xi = np.zeros(n - 1)
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        if M is None:
            M = np.zeros((xi.size, xi.size))
        return cls(QuadraticSurface(M, xi, offset), float(a), float(b))

    @property
    def n(self) -> int:
        return self.surface.n

    @property
    def M(self):
        return self.surface.M

    @property
    def xi(self):
        return self.surface.xi

    @property
    def margin(self) -> float:
        """a + b - tr M (the subsolution margin)."""
        return self.a + self.b - float(np.trace(self.M))

    def size(self) -> float:
        """Smallest delta with V in V_delta."""
        mnorm = np.linalg.norm(self.M, 2) if self.M.size else 0.0
        return float(max(mnorm, np.linalg.norm(self.xi), abs(self.a), abs(self.b)))

    def in_class(self, delta: float, constrained: bool = False, tol: float = 1e-12) -> bool:
        ok = self.size() <= delta * (1 + 1e-12)
        if constrained:
            ok = ok and abs(self.margin) <= tol
        return ok

    def rescaled(self, lam: float) -> "BarrierParams":
        """Parameters of lambda^{-1/2} V(lambda X)."""
        S = self.surface
        return BarrierParams(QuadraticSurface(lam * S.M, S.xi, S.offset / lam),
                             lam * self.a, lam * self.b)

    def translated(self, c: float) -> "BarrierParams":
        """Parameters of V(X - c e_n) (surface moved up by c)."""
        return BarrierParams(self.surface.translated(c), self.a, self.b)

    def to_json(self) -> dict:
        d = {"M": self.M.tolist(), "xi": self.xi.tolist(), "a": self.a, "b": self.b}
        if self.surface.offset:
            d["offset"] = self.surface.offset
        return d

    @classmethod
    def from_json(cls, d: dict) -> "BarrierParams":
        xi = np.asarray(d["xi"], dtype=float)
        M = np.asarray(d.get("M", np.zeros((xi.size, xi.size))), dtype=float).reshape(xi.size, xi.size)
        return cls(QuadraticSurface(M, xi, d.get("offset", 0.0)), float(d["a"]), float(d["b"]))


def plane_coords(V: BarrierParams, X, fallback: bool = False):
    """(t, s) coordinates of points X relative to the surface of V."""
    X = np.asarray(X, dtype=float)
    sd = signed_distance(V.surface, X[..., :-1], fallback=fallback)
    return sd.t, X[..., -1]


def eval_V(V: BarrierParams, X, fallback: bool = False):
    """V_{S,a,b}(X) = v_{a,b}(t, s) with t the signed distance to S."""
    t, s = plane_coords(V, X, fallback=fallback)
    return eval_v_ab(V.a, V.b, t, s)


def eval_V_n(V: BarrierParams, X, h: float = 1e-6):
    """Central-difference derivative of V in the e_n direction."""
    X = np.asarray(X, dtype=float)
    e = np.zeros(X.shape[-1])
    e[-2] = h
    return (eval_V(V, X + e) - eval_V(V, X - e)) / (2 * h)


def gamma_V(V: BarrierParams, X):
    """gamma_V = (a/2) r^2 + b r x_n - x'^T M x'/2 - xi.x' - offset."""
    X = np.asarray(X, dtype=float)
    xp, xn, s = X[..., :-2], X[..., -2], X[..., -1]
    r = np.hypot(xn, s)
    S = V.surface
    out = 0.5 * V.a * r * r + V.b * r * xn - S.height(xp)
    return out if np.ndim(out) else float(out)


def subsolution_check(V: BarrierParams, delta: float, C0: float = C0_DEFAULT,
                      delta0: float = DELTA0_DEFAULT) -> bool:
    """True iff a + b - tr M >= C0 delta^2 (for V in V_delta, delta <= delta0)."""
    if delta > delta0:
        raise ClassViolation(f"delta={delta} exceeds delta0={delta0}")
    if not V.in_class(delta):
        raise ClassViolation(f"barrier of size {V.size():.4g} is not in V_{delta}")
    return V.margin >= C0 * delta * delta


def supersolution_check(V: BarrierParams, delta: float, C0: float = C0_DEFAULT,
                        delta0: float = DELTA0_DEFAULT) -> bool:
    """Mirror of subsolution_check: a + b - tr M <= -C0 delta^2."""
    if delta > delta0:
        raise ClassViolation(f"delta={delta} exceeds delta0={delta0}")
    if not V.in_class(delta):
        raise ClassViolation(f"barrier of size {V.size():.4g} is not in V_{delta}")
    return V.margin <= -C0 * delta * delta


def random_barrier(rng: np.random.Generator, n: int, delta: float,
                   constrained: bool = False) -> BarrierParams:
    """A barrier drawn uniformly-ish from V_delta (or V_delta^0)."""
    k = n - 1
    A = rng.uniform(-1, 1, size=(k, k))
    A = 0.5 * (A + A.T)
    if k:
        A /= max(1.0, np.linalg.norm(A, 2))
    xi = rng.uniform(-1, 1, size=k)
    if k:
        xi /= max(1.0, np.linalg.norm(xi))
    a, b = rng.uniform(-1, 1, size=2)
    if constrained:
        # enforce a + b = tr M by adjusting b inside [-1, 1]
        b = float(np.trace(A)) - a
        if abs(b) > 1:
            a, b = a + (b - np.clip(b, -1, 1)), float(np.clip(b, -1, 1))
            if abs(a) > 1:
                return random_barrier(rng, n, delta, constrained)
    return BarrierParams.make(delta * A, delta * xi, delta * a, delta * b)


# ---------------------------------------------------------------------------
# ordering of nearby barriers


def _ball_samples(n: int, radius: float, m: int, rng: np.random.Generator):
    pts = rng.normal(size=(m, n + 1))
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    pts *= radius * rng.uniform(0, 1, size=(m, 1)) ** (1.0 / (n + 1))
    return pts


def order_nearby_surfaces(V1: BarrierParams, V2: BarrierParams, sigma: float, eps: float,
                          C_grid=None, C_max: float = 16.0, c: float = 0.5,
                          n_samples: int = 4000, seed: int = 0, atol: float = 1e-13) -> float:
    """Smallest grid-searched shift C eps sigma^2 with V1(X) <= V2(X + shift e_n) on B_sigma."""
    if V1.n != V2.n:
        raise PreconditionViolation("barriers of different dimension")
    if eps > c or sigma > c:
        raise PreconditionViolation(f"eps and sigma must be <= {c}")
    for V in (V1, V2):
        if abs(V.a) > 2 or abs(V.b) > 2:
            raise PreconditionViolation("|a|, |b| must be <= 2")
    if abs(V1.a - V2.a) > eps * (1 + 1e-12) or abs(V1.b - V2.b) > eps * (1 + 1e-12):
        raise PreconditionViolation("|a1-a2| and |b1-b2| must be <= eps")
    rng = np.random.default_rng(seed)
    n = V1.n
    xs = _ball_samples(n - 1, 2 * sigma, 2000, rng) if n > 1 else np.zeros((1, 0))
    if n > 1:
        xs = xs[:, : n - 1]
        for V in (V1, V2):
            if np.any(np.linalg.norm(V.surface.gradient(xs), axis=-1) > 1):
                raise PreconditionViolation("surface slope exceeds 1 on B_{2 sigma}")
    dh = np.abs(V1.surface.height(xs) - V2.surface.height(xs))
    if np.max(dh) > eps * sigma ** 2 * (1 + 1e-9):
        raise PreconditionViolation("surfaces differ by more than eps sigma^2")
    if C_grid is None:
        C_grid = np.linspace(0, C_max, int(round(C_max * 20)) + 1)
    X = _ball_samples(n, sigma, n_samples, rng)
    # include points on the slit and its edge, where ordering is tightest
    lin = np.linspace(-sigma, sigma, 201)
    extra = np.zeros((lin.size, n + 1))
    extra[:, -2] = lin
    X = np.vstack([X, extra])
    v1 = eval_V(V1, X)
    en = np.zeros(n + 1)
    en[-2] = 1.0
    unit = eps * sigma ** 2
    for C in np.sort(np.asarray(C_grid, dtype=float)):
        if C > C_max:
            break
        if np.all(v1 <= eval_V(V2, X + C * unit * en) + atol):
            return float(C * unit)
    raise AuditFailure(f"no shift <= {C_max} eps sigma^2 orders the barriers")
