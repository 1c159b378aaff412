"""Hodograph transform g -> g~ (U(X) = g(X - w e_n)), its inverse, and flatness.

On grids the transform samples g by linear interpolation along e_n lines, so
the roots are found exactly segment by segment; this interpolation is the
accuracy floor of every hodograph-based number.  Callables are handled by a
sampled bracket search followed by vectorized bisection.
"""
from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .barriers import eval_U
from .errors import NeverFlat, NonInjective, NotFlat
from .grid import Grid, GridFunction
from .numerics import ball_mask


def reference_U(origin=None) -> Callable:
    """The profile U(X - origin) as a callable on points."""

    def ref(X):
        X = np.asarray(X, dtype=float)
        xn = X[..., -2] - (0.0 if origin is None else origin[-2])
        return eval_U(xn, X[..., -1])

    return ref


@dataclass
class HodographField:
    """Interval-valued hodograph [w_min, w_max] at a set of points."""

    points: np.ndarray
    w_min: np.ndarray
    w_max: np.ndarray
    nodes: tuple | None = None  # grid indices of the points, when grid based

    @property
    def mid(self) -> np.ndarray:
        return 0.5 * (self.w_min + self.w_max)

    @property
    def width(self) -> np.ndarray:
        return self.w_max - self.w_min

    def oscillation(self, select=None, use: str = "endpoints") -> float:
        sel = slice(None) if select is None else select
        if use == "midpoint":
            m = self.mid[sel]
            return float(m.max() - m.min()) if m.size else 0.0
        lo, hi = self.w_min[sel], self.w_max[sel]
        return float(hi.max() - lo.min()) if lo.size else 0.0

    def to_csv(self, path=None) -> str:
        d = self.points.shape[-1]
        names = [f"x{k + 1}" for k in range(d - 2)] + ["xn", "s", "w_min", "w_max"]
        table = np.column_stack([self.points, self.w_min, self.w_max])
        buf = io.StringIO()
        np.savetxt(buf, table, fmt="%.12e", delimiter=",", header=",".join(names), comments="")
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


@dataclass
class FlatnessReport:
    center: np.ndarray
    radius: float
    eps: float
    direction: np.ndarray

    def to_json(self) -> dict:
        return {"center": np.asarray(self.center).tolist(), "radius": self.radius,
                "eps": self.eps, "direction": np.asarray(self.direction).tolist()}


# ---------------------------------------------------------------------------
# forward transform


def line_roots(lines: np.ndarray, pos: np.ndarray, target: np.ndarray, h: float, eps: float,
               atol: float = 0.0):
    """Roots of the piecewise-linear interpolant along the last axis.

    ``lines[..., j]`` are samples at coordinates j*h; for each entry of
    ``pos`` (node index along the line, same leading shape as ``target``)
    find all w in [-eps, eps] with f(x_pos - w) = target.  Returns the
    smallest and largest root (NaN where none exists).
    """
    m = lines.shape[-1]
    K = int(np.ceil(eps / h)) + 1
    wmin = np.full(target.shape, np.inf)
    wmax = np.full(target.shape, -np.inf)
    for k in range(-K, K):
        j = pos + k
        ok = (j >= 0) & (j + 1 < m)
        jj = np.clip(j, 0, m - 2)
        f0 = np.take_along_axis(lines, jj, axis=-1)
        f1 = np.take_along_axis(lines, jj + 1, axis=-1)
        d0, d1 = f0 - target, f1 - target
        cross = ok & (((d0 <= atol) & (d1 >= -atol)) | ((d0 >= -atol) & (d1 <= atol)))
        flat = np.abs(f1 - f0) <= 1e-300
        with np.errstate(divide="ignore", invalid="ignore"):
            frac = np.where(flat, 0.0, -d0 / (f1 - f0))
        frac = np.clip(frac, 0.0, 1.0)
        # w = x_pos - y ; y = (j + frac) h ; x_pos = pos h
        wa = (pos - (j + frac)) * h
        wb = np.where(flat, (pos - (j + 1)) * h, wa)
        lo = np.minimum(wa, wb)
        hi = np.maximum(wa, wb)
        inside = cross & (hi >= -eps * (1 + 1e-12)) & (lo <= eps * (1 + 1e-12))
        wmin = np.where(inside, np.minimum(wmin, np.maximum(lo, -eps)), wmin)
        wmax = np.where(inside, np.maximum(wmax, np.minimum(hi, eps)), wmax)
    missing = ~np.isfinite(wmin)
    wmin[missing] = np.nan
    wmax[missing] = np.nan
    return wmin, wmax


def compute_hodograph(g, eps_bound: float, center=None, radius: float | None = None,
                      reference: Callable | None = None, points=None, direction=None,
                      root_tol: float = 1e-10, strict: bool = True) -> HodographField:
    """Hodograph of ``g`` relative to ``reference`` (default U).

    For a GridFunction and the e_n direction the transform is evaluated at the
    grid nodes of B_radius(center) where the reference is positive.  For a
    callable ``g`` (or an oblique ``direction``) pass ``points``.
    """
    ref = reference_U() if reference is None else reference
    if isinstance(g, GridFunction) and direction is None and points is None:
        return _hodograph_grid(g, eps_bound, center, radius, ref, strict)
    if isinstance(g, GridFunction):
        g = g.interpolator()
    if points is None:
        raise ValueError("points are required for callable input")
    P = np.asarray(points, dtype=float)
    d = np.zeros(P.shape[-1])
    d[-2] = 1.0
    if direction is not None:
        d = np.asarray(direction, dtype=float) / np.linalg.norm(direction)
    u = ref(P)
    keep = u > 0
    P, u = P[keep], u[keep]
    wmin, wmax = _bracket_roots(lambda w: g(P - w[:, None] * d) - u, P.shape[0],
                                eps_bound, root_tol)
    _check_missing(wmin, strict)
    return HodographField(P, wmin, wmax)


def _check_missing(wmin, strict):
    bad = np.isnan(wmin)
    if bad.any() and strict:
        raise NotFlat(f"no hodograph root in the bracket at {int(bad.sum())} nodes")


def _hodograph_grid(g: GridFunction, eps, center, radius, ref, strict) -> HodographField:
    grid = g.grid
    X = grid.coords()
    c = np.zeros(grid.n + 1) if center is None else np.asarray(center, dtype=float)
    r = (1.0 - eps) if radius is None else radius
    u = ref(X)
    sel = ball_mask(X, c, r) & (u > 0)
    lines = np.moveaxis(g.values, -2, -1)  # (..., s, xn)
    tgt = np.moveaxis(u, -2, -1)
    pos = np.broadcast_to(np.arange(lines.shape[-1]), lines.shape)
    wmin, wmax = line_roots(lines, pos, tgt, grid.h, eps)
    wmin = np.moveaxis(wmin, -1, -2)[sel]
    wmax = np.moveaxis(wmax, -1, -2)[sel]
    _check_missing(wmin, strict)
    nodes = np.nonzero(sel)
    return HodographField(X[sel], wmin, wmax, nodes)


def _bracket_roots(phi: Callable, m: int, eps: float, tol: float, samples: int = 65):
    """First and last roots of the decreasing-ish functions phi(w) on [-eps, eps]."""
    ws = np.linspace(-eps, eps, samples)
    vals = np.stack([phi(np.full(m, w)) for w in ws], axis=1)  # (m, samples)
    s = np.sign(vals)
    change = (s[:, :-1] * s[:, 1:] <= 0)
    has = change.any(axis=1)
    first = np.argmax(change, axis=1)
    last = samples - 2 - np.argmax(change[:, ::-1], axis=1)
    out = []
    for k in (first, last):
        lo = ws[k].copy()
        hi = ws[k + 1].copy()
        flo = vals[np.arange(m), k]
        for _ in range(200):
            if np.all(hi - lo <= tol):
                break
            mid = 0.5 * (lo + hi)
            fm = phi(mid)
            left = np.sign(fm) * np.sign(flo) <= 0
            hi = np.where(left, mid, hi)
            lo = np.where(left, lo, mid)
            flo = np.where(left, flo, fm)
        root = np.where(vals[np.arange(m), k] == 0, ws[k], 0.5 * (lo + hi))
        out.append(np.where(has, root, np.nan))
    wmin = np.minimum(out[0], out[1])
    wmax = np.maximum(out[0], out[1])
    return wmin, wmax


# ---------------------------------------------------------------------------
# inverse transform


def inverse_hodograph(phi: Callable, eps: float, grid: Grid | None = None, bound: float | None = None,
                      injectivity_h: float = 1e-4):
    """phi_eps with U(X) = phi_eps(X - eps phi(X) e_n).

    Returns a callable Y -> phi_eps(Y); with ``grid`` a GridFunction sampled at
    its nodes is returned instead.  ``bound`` is an upper bound for |phi| used
    for the root bracket (estimated from samples when omitted).
    """

    def f(Y):
        Y = np.asarray(Y, dtype=float)
        shape = Y.shape[:-1]
        Yf = Y.reshape(-1, Y.shape[-1])
        B = bound
        if B is None:
            B = 2.0 * float(np.max(np.abs(phi(Yf)))) + 1e-3
        lo = Yf[:, -2] - eps * B - 1e-12
        hi = Yf[:, -2] + eps * B + 1e-12
        X = Yf.copy()

        def resid(xn):
            X[:, -2] = xn
            return xn - eps * phi(X) - Yf[:, -2]

        rlo, rhi = resid(lo), resid(hi)
        if np.any(rlo > 0) or np.any(rhi < 0):
            raise NonInjective("displacement exceeds the bracket; raise the bound")
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            r = resid(mid)
            lo = np.where(r <= 0, mid, lo)
            hi = np.where(r <= 0, hi, mid)
            if np.all(hi - lo <= 4e-16 * (1 + np.abs(mid))):
                break
        xn = 0.5 * (lo + hi)
        X[:, -2] = xn
        e = np.zeros(X.shape[-1])
        e[-2] = injectivity_h
        dphi = (phi(X + e) - phi(X - e)) / (2 * injectivity_h)
        if np.any(1.0 - eps * dphi <= 0):
            raise NonInjective("X -> X - eps phi(X) e_n folds")
        return eval_U(xn, X[:, -1]).reshape(shape)

    if grid is None:
        return f
    return GridFunction.from_values(grid, f(grid.coords()))


# ---------------------------------------------------------------------------
# flatness and ordering


def measure_flatness(g, center=None, radius: float = 1.0, eps_max: float = 0.5, tol: float = 1e-8,
                     reference: Callable | None = None, points=None, atol: float = 1e-12) -> FlatnessReport:
    """Smallest eps with ref(X - eps e_n) <= g(X) <= ref(X + eps e_n) on the ball nodes."""
    ref = reference_U() if reference is None else reference
    if isinstance(g, GridFunction):
        X = g.grid.coords()
        c = np.zeros(g.grid.n + 1) if center is None else np.asarray(center, dtype=float)
        sel = ball_mask(X, c, radius)
        X, gv = X[sel], g.values[sel]
    else:
        X = np.asarray(points, dtype=float)
        c = np.zeros(X.shape[-1]) if center is None else np.asarray(center, dtype=float)
        X = X[ball_mask(X, c, radius)]
        gv = g(X)
    en = np.zeros(X.shape[-1])
    en[-2] = 1.0

    def trapped(e):
        return (np.all(ref(X - e * en) <= gv + atol) and np.all(gv <= ref(X + e * en) + atol))

    if trapped(0.0):
        return FlatnessReport(c, radius, 0.0, en)
    if not trapped(eps_max):
        raise NeverFlat(f"not trapped at eps_max = {eps_max}")
    lo, hi = 0.0, eps_max
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if trapped(mid):
            hi = mid
        else:
            lo = mid
    return FlatnessReport(c, radius, hi, en)


def ordering_transfer_check(v: GridFunction, g: GridFunction, lam: float, eps: float,
                            sigma: float | None = None, center=None, tol: float = 1e-9) -> bool:
    """Grid audit of both directions of the ordering transfer lemma."""
    grid = v.grid
    c = np.zeros(grid.n + 1) if center is None else np.asarray(center, dtype=float)
    X = grid.coords()
    sigma = lam - eps if sigma is None else sigma
    r_h = max(lam - eps, sigma)
    hv = compute_hodograph(v, eps, c, r_h, strict=False)
    hg = compute_hodograph(g, eps, c, r_h, strict=False)
    r = np.linalg.norm(hv.points - c, axis=-1)
    both = ~np.isnan(hv.w_min) & ~np.isnan(hg.w_min)
    ok = True
    if np.all(v.values[ball_mask(X, c, lam)] <= g.values[ball_mask(X, c, lam)] + tol):
        inner = both & (r <= lam - eps + 1e-12)
        ok &= bool(np.all(hv.w_max[inner] <= hg.w_min[inner] + tol)
                   or np.all(hv.mid[inner] <= hg.mid[inner] + tol))
    inner = both & (r <= sigma + 1e-12)
    if np.all(hv.mid[inner] <= hg.mid[inner] + tol):
        sel = ball_mask(X, c, sigma - eps)
        slack = tol + grid.h ** 2
        ok &= bool(np.all(v.values[sel] <= g.values[sel] + slack))
    return ok
