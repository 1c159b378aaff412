"""Linearized problem Delta(U_t h) = U_t f off the slit, via the map z = w^2/2.

With w = zeta + i y and (t, s) = ((zeta^2 - y^2)/2, zeta y) we have
rho = |w|^2/2, U = zeta/kappa and U_t = zeta/(kappa |w|^2) with kappa = sqrt(2).
The unknown H~ = U_t h (pulled back) is harmonic-with-source on the half disk

    Delta H~ = zeta f~ / kappa,     H~ = 0 on {zeta = 0}.

A nonzero h(0) makes H~ singular (H~ = h(0) zeta/(kappa |w|^2) + regular), so
the solver splits off that singular part: its amplitude is fixed by the edge
condition |grad_r h| = 0 on L, i.e. the regular part has no linear term d0.

Expansion: H~ = zeta (d0 + d1 zeta^2 + d2 y^2 + ...) gives
h = 2 kappa rho (d0 + (d1 + d2) rho + (d1 - d2) t) + ..., hence
a = -4 kappa (d1 + d2), b = -2 kappa (d1 - d2) and 6 d1 + 2 d2 = f~(0)/kappa.
With f = -Delta_{x'} h this reads a + b = tr M.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NoConvergence, PoorFit, TraceViolation
from .grid import Grid, GridFunction

KAPPA = np.sqrt(2.0)
ANNULUS = (0.05, 0.2)
SLICES = (-0.1, -0.05, 0.0, 0.05, 0.1)


def conformal_pull(zeta, y):
    """(zeta, y) -> (t, s) = ((zeta^2 - y^2)/2, zeta y)."""
    zeta = np.asarray(zeta, dtype=float)
    y = np.asarray(y, dtype=float)
    return 0.5 * (zeta * zeta - y * y), zeta * y


def conformal_push(t, s):
    """Inverse of conformal_pull on the slit plane, with zeta >= 0."""
    w = np.sqrt(2.0 * (np.asarray(t, dtype=float) + 1j * np.asarray(s, dtype=float)))
    return w.real, w.imag


# ---------------------------------------------------------------------------
# least-squares Taylor model on an annulus

_MODEL = ((0, 0), (2, 0), (0, 2), (4, 0), (2, 2), (0, 4))  # zeta * zeta^i y^j


class DFit:
    """Weighted least-squares fit of H~ = zeta * sum d_ij zeta^i y^j."""

    def __init__(self, zeta, y, H, weight_power: float = -1.0):
        zeta, y, H = (np.ravel(np.asarray(v, dtype=float)) for v in (zeta, y, H))
        r = np.hypot(zeta, y)
        w = r ** weight_power
        A = np.stack([zeta * zeta ** i * y ** j for i, j in _MODEL], axis=1)
        sw = np.sqrt(w)
        coef, *_ = np.linalg.lstsq(A * sw[:, None], H * sw, rcond=None)
        res = H - A @ coef
        self.coef = coef
        self.d0, self.d1, self.d2 = (float(c) for c in coef[:3])
        # residual in coefficient units: rms(res) / rms(zeta)
        self.residual = float(np.sqrt(np.sum(w * res ** 2) / max(np.sum(w * zeta ** 2), 1e-300)))

    @property
    def a(self) -> float:
        return -4.0 * KAPPA * (self.d1 + self.d2)

    @property
    def b(self) -> float:
        return -2.0 * KAPPA * (self.d1 - self.d2)


def annulus_samples(r_in: float = ANNULUS[0], r_out: float = ANNULUS[1], nr: int = 24, nphi: int = 48):
    """Polar sample points (zeta, y) of the half annulus, zeta > 0."""
    r = np.linspace(r_in, r_out, nr)
    phi = (np.arange(nphi) + 0.5) / nphi * np.pi - 0.5 * np.pi
    R, P = np.meshgrid(r, phi, indexing="ij")
    return (R * np.cos(P)).ravel(), (R * np.sin(P)).ravel()


# ---------------------------------------------------------------------------
# half-disk solver


@dataclass
class HalfDiskField:
    """Regular part of H~ on a Cartesian (y, zeta) grid of the half disk.

    The full field is H~ = h0 * zeta/(kappa |w|^2) + values.  The grid uses
    the shared Grid layout with axes (y, zeta); zeta plays the role of s.
    """

    grid: Grid
    values: np.ndarray
    inside: np.ndarray
    h0: float
    radius: float
    forcing: Callable | None = None
    residual: float = 0.0
    kappa: float = KAPPA

    def axes(self):
        y, zeta = self.grid.axes()
        return zeta, y

    def mesh(self):
        y, zeta = self.grid.axes()
        Y, Z = np.meshgrid(y, zeta, indexing="ij")
        return Z, Y

    def sample(self, zeta, y):
        """Bilinear interpolation of the regular part."""
        from scipy.interpolate import RegularGridInterpolator

        ya, za = self.grid.axes()
        f = RegularGridInterpolator((ya, za), self.values, bounds_error=False, fill_value=np.nan)
        return f(np.stack([np.asarray(y, float), np.asarray(zeta, float)], axis=-1))

    def h_values(self) -> np.ndarray:
        """Recovered h = h0 + kappa |w|^2 H_reg / zeta on the grid (NaN outside)."""
        Z, Y = self.mesh()
        q = strip_zeta(self)
        out = self.h0 + self.kappa * (Z * Z + Y * Y) * q
        return np.where(self.inside, out, np.nan)

    def h_at(self, t, s):
        zeta, y = conformal_push(t, s)
        Hr = self.sample(zeta, y)
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.h0 + self.kappa * (zeta ** 2 + y ** 2) * Hr / zeta

    def to_gridfunction(self) -> GridFunction:
        vals = np.where(self.inside | (self.mesh()[0] == 0), self.values, 0.0)
        return GridFunction(self.grid, vals, mask=np.ones(self.grid.shape[:-1], dtype=bool))


def _disk_nodes(h: float, radius: float):
    R = np.sqrt(2.0 * radius)
    m = int(np.ceil(R / h)) + 2
    grid = Grid(h, (-m * h,), (2 * m + 1, m + 1))
    y, zeta = grid.axes()
    Y, Z = np.meshgrid(y, zeta, indexing="ij")
    inside = (Z > 0) & (Y * Y + Z * Z < R * R)
    return grid, Z, Y, inside, R


def solve_linearized_2d(dirichlet: Callable, f: Callable | None = None, h: float = 1 / 256,
                        radius: float = 1.0, tol: float = 1e-10, even_tol: float = 1e-12,
                        annulus=ANNULUS) -> HalfDiskField:
    """Solve Delta(U_t h) = U_t f in B_radius minus the slit with h = dirichlet on the circle.

    ``dirichlet(t, s)`` is evaluated at the Dirichlet nodes just outside the
    image disk; if it is only meaningful on the circle it should depend on the
    angle alone.  ``f(t, s)`` is the forcing (default 0).
    """
    grid, Z, Y, inside, R = _disk_nodes(h, radius)
    ny, nz = Z.shape
    # Dirichlet layer: outside nodes with a free neighbour
    nb = np.zeros_like(inside)
    nb[1:, :] |= inside[:-1, :]
    nb[:-1, :] |= inside[1:, :]
    nb[:, 1:] |= inside[:, :-1]
    nb[:, :-1] |= inside[:, 1:]
    layer = nb & ~inside & (Z > 0)
    t, s = conformal_pull(Z[layer], Y[layer])
    hd = np.asarray(dirichlet(t, s), dtype=float) * np.ones_like(t)
    hm = np.asarray(dirichlet(t, -s), dtype=float) * np.ones_like(t)
    if np.max(np.abs(hd - hm)) > even_tol * max(1.0, np.max(np.abs(hd))):
        raise TraceViolation("Dirichlet data must be even in s")
    r2 = Z[layer] ** 2 + Y[layer] ** 2
    dataA = np.zeros(Z.shape)
    dataB = np.zeros(Z.shape)
    dataA[layer] = Z[layer] * hd / (KAPPA * r2)
    dataB[layer] = Z[layer] / (KAPPA * r2)

    idx = -np.ones(Z.shape, dtype=int)
    idx[inside] = np.arange(int(inside.sum()))
    N = int(inside.sum())
    rows, cols, vals = [np.arange(N)], [np.arange(N)], [np.full(N, 4.0)]
    rhsA = np.zeros(N)
    rhsB = np.zeros(N)
    ii, jj = np.nonzero(inside)
    for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        ni, nj = ii + di, jj + dj
        nbr = idx[ni, nj]
        fr = nbr >= 0
        rows.append(idx[ii[fr], jj[fr]])
        cols.append(nbr[fr])
        vals.append(-np.ones(int(fr.sum())))
        rhsA[~fr] += dataA[ni[~fr], nj[~fr]]
        rhsB[~fr] += dataB[ni[~fr], nj[~fr]]
    A = sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(N, N))
    if f is not None:
        tf, sf = conformal_pull(Z[inside], Y[inside])
        rhsA -= h * h * Z[inside] * np.asarray(f(tf, sf), dtype=float) / KAPPA
    lu = spla.splu(A)
    xA = lu.solve(rhsA)
    xB = lu.solve(rhsB)
    res = max(np.max(np.abs(A @ xA - rhsA)) / 4, np.max(np.abs(A @ xB - rhsB)) / 4)
    scale = max(np.max(np.abs(rhsA)), np.max(np.abs(rhsB)), 1e-300)
    if res > tol * scale:
        raise NoConvergence(f"half-disk solve residual {res:.3e}")
    HA = np.zeros(Z.shape)
    HB = np.zeros(Z.shape)
    HA[inside] = xA
    HB[inside] = xB
    HA[layer] = dataA[layer]
    HB[layer] = dataB[layer]
    sel = inside & (np.hypot(Z, Y) >= annulus[0]) & (np.hypot(Z, Y) <= annulus[1])
    fa = DFit(Z[sel], Y[sel], HA[sel])
    fb = DFit(Z[sel], Y[sel], HB[sel])
    c = fa.d0 / fb.d0
    H = HA - c * HB
    return HalfDiskField(grid, H, inside, float(c), radius, f, float(res / scale))


# ---------------------------------------------------------------------------
# zeta division


def strip_zeta(field, points=None, zeta_cut: float | None = None, tol: float = 1e-10,
               nodes: int = 8, dz: float = 1e-6):
    """zeta^{-1} H~, by quadrature of d_zeta H~ near zeta = 0 and division elsewhere.

    ``field`` is a HalfDiskField (evaluated on its grid) or a callable
    H(zeta, y) evaluated at ``points = (zeta, y)``.
    """
    if isinstance(field, HalfDiskField):
        Z, Y = field.mesh()
        H = field.values
        h = field.grid.h
        edge = H[:, 0]
        if np.max(np.abs(edge)) > tol * max(1.0, np.max(np.abs(H))):
            raise TraceViolation("field does not vanish on zeta = 0")
        with np.errstate(divide="ignore", invalid="ignore"):
            q = H / Z
        q[:, 0] = (-3 * H[:, 0] + 4 * H[:, 1] - H[:, 2]) / (2 * h)
        return q
    zeta, y = (np.asarray(v, dtype=float) for v in points)
    edge = field(np.zeros_like(y), y)
    if np.max(np.abs(edge)) > tol:
        raise TraceViolation("field does not vanish on zeta = 0")
    cut = 1e-2 if zeta_cut is None else zeta_cut
    x, wq = np.polynomial.legendre.leggauss(nodes)
    tau = 0.5 * (x + 1)
    wq = 0.5 * wq
    acc = np.zeros(np.broadcast(zeta, y).shape)
    for tk, wk in zip(tau, wq):
        zk = tk * zeta
        acc = acc + wk * (field(zk + dz, y) - field(zk - dz, y)) / (2 * dz)
    with np.errstate(divide="ignore", invalid="ignore"):
        direct = field(zeta, y) / zeta
    return np.where(np.abs(zeta) < cut, acc, direct)


def holder_norms(H: Callable, grad: Callable, alpha: float = 0.5, n_pts: int = 400, seed: int = 0):
    """Sampled (||H/zeta||_{C^{0,alpha}}, ||H||_{C^{1,alpha}}) on the unit half disk."""
    rng = np.random.default_rng(seed)
    r = np.sqrt(rng.uniform(0, 1, n_pts))
    th = rng.uniform(-0.5 * np.pi, 0.5 * np.pi, n_pts)
    zeta, y = r * np.cos(th), r * np.sin(th)
    q = strip_zeta(H, (zeta, y))
    g = np.asarray(grad(zeta, y))
    P = np.stack([zeta, y], axis=1)
    dist = np.linalg.norm(P[:, None] - P[None], axis=-1)
    np.fill_diagonal(dist, np.inf)
    semi_q = np.max(np.abs(q[:, None] - q[None]) / dist ** alpha)
    dg = np.linalg.norm(g[:, :, None] - g[:, None, :], axis=0)
    semi_g = np.max(dg / dist ** alpha)
    lhs = np.max(np.abs(q)) + semi_q
    rhs = np.max(np.abs(H(zeta, y))) + np.max(np.linalg.norm(g, axis=0)) + semi_g
    return float(lhs), float(rhs)


# ---------------------------------------------------------------------------
# expansion coefficients


@dataclass
class ExpansionCoeffs:
    h0: float
    xi0: np.ndarray
    M0: np.ndarray
    a0: float
    b0: float
    residual: float
    d: tuple = (0.0, 0.0, 0.0)
    forcing_check: float | None = None  # 6 d1 + 2 d2 - f~(0)/kappa

    @property
    def defect(self) -> float:
        """a0 + b0 - tr M0."""
        tr = float(np.trace(self.M0)) if np.size(self.M0) else 0.0
        return float(self.a0 + self.b0 - tr)

    def d0_rejected(self, factor: float = 10.0, floor: float = 1e-12) -> bool:
        """True when |d0| exceeds factor x residual: the edge condition fails."""
        return abs(self.d[0]) > factor * max(self.residual, floor)

    def to_json(self) -> dict:
        return {"h0": self.h0, "xi0": np.asarray(self.xi0).tolist(),
                "M0": np.asarray(self.M0).tolist(), "a0": self.a0, "b0": self.b0,
                "residual": self.residual, "d": list(self.d), "defect": self.defect}


def _fit_callable_slice(h2: Callable, annulus, n_samples):
    zeta, y = annulus_samples(*annulus, *n_samples)
    t, s = conformal_pull(zeta, y)
    h00 = float(np.asarray(h2(np.array([0.0]), np.array([0.0])))[0])
    H = zeta * (np.asarray(h2(t, s), dtype=float) - h00) / (KAPPA * (zeta ** 2 + y ** 2))
    return h00, DFit(zeta, y, H)


def extract_expansion(field, n: int = 1, annulus=ANNULUS, slices=SLICES, max_residual: float = 1e-3,
                      n_samples=(24, 48)) -> ExpansionCoeffs:
    """Quadratic expansion coefficients of a linearized solution.

    ``field`` is a HalfDiskField (n = 1) or a callable h: for n = 1 it takes
    (t, s), for n = 2 a point array (x1, x_n, s).
    """
    forcing_check = None
    if isinstance(field, HalfDiskField):
        Z, Y = field.mesh()
        r = np.hypot(Z, Y)
        sel = field.inside & (r >= annulus[0]) & (r <= annulus[1])
        fit = DFit(Z[sel], Y[sel], field.values[sel])
        if field.forcing is not None:
            f0 = float(np.asarray(field.forcing(np.array([0.0]), np.array([0.0])))[0])
            forcing_check = 6 * fit.d1 + 2 * fit.d2 - f0 / KAPPA
        out = ExpansionCoeffs(field.h0, np.zeros(0), np.zeros((0, 0)), fit.a, fit.b, fit.residual,
                              (fit.d0, fit.d1, fit.d2), forcing_check)
    elif n == 1:
        h00, fit = _fit_callable_slice(field, annulus, n_samples)
        out = ExpansionCoeffs(h00, np.zeros(0), np.zeros((0, 0)), fit.a, fit.b, fit.residual,
                              (fit.d0, fit.d1, fit.d2))
    elif n == 2:
        c = np.asarray(slices, dtype=float)
        h0s, fits = [], []
        for x1 in c:
            def h2(t, s, x1=x1):
                t = np.asarray(t, dtype=float)
                X = np.stack([np.full_like(t, x1), t, np.asarray(s, dtype=float) * np.ones_like(t)], axis=-1)
                return field(X)
            h00, fit = _fit_callable_slice(h2, annulus, n_samples)
            h0s.append(h00)
            fits.append(fit)
        deg = min(4, c.size - 1)
        p = np.polynomial.polynomial.polyfit(c, h0s, deg)
        pa = np.polynomial.polynomial.polyfit(c, [f.a for f in fits], deg)
        pb = np.polynomial.polynomial.polyfit(c, [f.b for f in fits], deg)
        mid = fits[int(np.argmin(np.abs(c)))]
        out = ExpansionCoeffs(float(p[0]), np.array([p[1]]), np.array([[2 * p[2]]]), float(pa[0]),
                              float(pb[0]), max(f.residual for f in fits),
                              (mid.d0, mid.d1, mid.d2))
    else:
        raise ValueError("n must be 1 or 2")
    if out.residual > max_residual:
        raise PoorFit(f"expansion fit residual {out.residual:.3e} exceeds {max_residual:.1e}")
    return out
