"""Discrete minimization of E(g) = int |grad g|^2 + (pi/2) |{g > 0} cap B_1|.

The state is a positivity mask on the {s = 0} plane; g is always the discrete
harmonic replacement for that mask.  Descent flips single mask nodes on the
free-boundary ring.  Flip energy changes are exact Schur-complement formulas

    pin p:    dE = h^{n-1} g_p^2 / (A^{-1})_pp           - (pi/2) h^n
    unpin q:  dE = -h^{n-1} r_q^2 (A'^{-1})_qq           + (pi/2) h^n

with A the free block of the weighted graph Laplacian, A' the block with q
freed, and r_q the Laplacian row of q applied to g.  Patch solves with zero
outer data bound (A^{-1})_pp from below, which makes them conservative
screens: a flip whose patch estimate lowers the energy lowers it for real.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import least_squares

from .barriers import (BarrierParams, QuadraticSurface, eval_U, eval_V, plane_coords,
                       subsolution_check,
                       supersolution_check)
from .errors import (BudgetExhausted, EmptyBoundary, FitFailure, InsufficientScales, NoContact,
                     NotFlat, NotTrapped, PreconditionViolation)
from .grid import Grid, GridFunction
from .harmonic import FreeBlockSolver, grid_edges, weighted_laplacian
from .hodograph import compute_hodograph, line_roots, reference_U
from .numerics import ball_mask, fit_power_law

AREA_COEFF = 0.5 * np.pi


@dataclass
class EnergyState:
    """Mask, harmonic replacement and discrete energy on a ball."""

    g: GridFunction
    data: np.ndarray
    region: np.ndarray  # free-eligible nodes (inside the ball, off the outer faces)
    energy: float
    history: list = field(default_factory=list)
    flips: int = 0
    converged: bool = False
    budget_exhausted: bool = False

    @property
    def grid(self) -> Grid:
        return self.g.grid

    @property
    def mask(self) -> np.ndarray:
        return self.g.mask

    def summary(self) -> dict:
        return {"energy": self.energy, "flips": self.flips, "converged": self.converged,
                "budget_exhausted": self.budget_exhausted,
                "mask_count": int((self.mask & self.region[..., 0]).sum())}


class _Problem:
    """Fixed structure shared by all masks: edges, Laplacian, energy edges."""

    def __init__(self, grid: Grid, data: np.ndarray, region: np.ndarray, method: str = "auto",
                 tol: float = 1e-10):
        self.grid = grid
        self.h = grid.h
        self.n = grid.n
        self.data = np.asarray(data, dtype=float)
        self.region = region
        self.edges = grid_edges(grid)
        self.L = weighted_laplacian(grid.size, self.edges).tocsr()
        rf = region.ravel()
        self.energy_edges = rf[self.edges.a] | rf[self.edges.b]
        self.method = method
        self.tol = tol
        self.plane_flat = np.zeros(grid.shape, dtype=bool)
        self.plane_flat[..., 0] = True
        self.plane_flat = self.plane_flat.ravel()

    def pinned(self, mask):
        p = np.zeros(self.grid.shape, dtype=bool)
        p[..., 0] = ~mask & self.region[..., 0]
        return p.ravel()

    def free(self, mask):
        return self.region.ravel() & ~self.pinned(mask)

    def solve(self, mask, x0=None):
        """Harmonic replacement for ``mask``; returns values and the block solver."""
        free = self.free(mask)
        F = np.flatnonzero(free)
        vals = self.data.ravel().copy()
        vals[self.pinned(mask)] = 0.0
        plane = vals.reshape(self.grid.shape)[..., 0]
        outside = ~self.region[..., 0]
        plane[outside & ~mask] = 0.0
        vals = vals.reshape(self.grid.shape).ravel()
        if F.size == 0:
            return vals, None, F
        LF = self.L[F]
        A = LF[:, F]
        fixed = np.flatnonzero(~free)
        b = -(LF[:, fixed] @ vals[fixed])
        scale = max(float(np.max(np.abs(self.data))), 1e-300)
        solver = FreeBlockSolver(A, method=self.method, tol=self.tol, n=self.n)
        if np.max(np.abs(b)) == 0:
            x = np.zeros(F.size)
        else:
            x = solver.solve(b, x0=None if x0 is None else x0[F], scale=scale)
        vals[F] = x
        return vals, solver, F

    def energy(self, vals, mask) -> float:
        e = self.edges
        sel = self.energy_edges
        d = vals[e.a[sel]] - vals[e.b[sel]]
        grad = self.h ** (self.n - 1) * float(np.sum(e.w[sel] * d * d))
        count = int((mask & self.region[..., 0]).sum())
        return grad + AREA_COEFF * self.h ** self.n * count


def _plane_neighbors(mask: np.ndarray, ext: np.ndarray):
    """Per plane node: does it have an in-plane neighbour in ``ext``?"""
    out = np.zeros(mask.shape, dtype=bool)
    for k in range(mask.ndim):
        sl_a = [slice(None)] * mask.ndim
        sl_b = [slice(None)] * mask.ndim
        sl_a[k] = slice(1, None)
        sl_b[k] = slice(None, -1)
        out[tuple(sl_a)] |= ext[tuple(sl_b)]
        out[tuple(sl_b)] |= ext[tuple(sl_a)]
    return out


def initial_state(grid: Grid, data, radius: float = 1.0, center=None, method: str = "auto",
                  tol: float = 1e-10, mask=None) -> EnergyState:
    """State with Dirichlet data outside B_radius and mask {data > 0} (or ``mask``)."""
    X = grid.coords()
    vals = np.asarray(data(X) if callable(data) else data, dtype=float)
    if np.any(vals < 0):
        raise PreconditionViolation("Dirichlet data must be nonnegative")
    c = np.zeros(grid.n + 1) if center is None else np.asarray(center, dtype=float)
    region = ball_mask(X, c, radius) & ~grid.outer_boundary()
    if mask is None:
        mask = vals[..., 0] > 0
    prob = _Problem(grid, vals, region, method, tol)
    g, _, _ = prob.solve(mask)
    E = prob.energy(g, mask)
    gf = GridFunction(grid, np.where(_plane_zero(grid, mask), 0.0, g.reshape(grid.shape)), mask)
    return EnergyState(gf, vals, region, E, [E])


def _plane_zero(grid, mask):
    z = np.zeros(grid.shape, dtype=bool)
    z[..., 0] = ~mask
    return z


def _patch(grid: Grid, flat_index: int, R: int):
    """Flat indices of the Chebyshev box of radius R around a node (s >= 0)."""
    idx = np.unravel_index(flat_index, grid.shape)
    rngs = []
    for k, i in enumerate(idx):
        lo = max(0, i - R)
        hi = min(grid.shape[k], i + R + 1)
        rngs.append(np.arange(lo, hi))
    mesh = np.meshgrid(*rngs, indexing="ij")
    return np.ravel_multi_index([m.ravel() for m in mesh], grid.shape)


def minimize_energy(init: EnergyState, budget: int = 2000, local_radius: int | None = None,
                    seed: int | None = None, method: str = "auto", tol: float = 1e-10,
                    exact_band: float = 0.1, verbose: bool = False) -> EnergyState:
    """Harmonic replacement plus single-node flips on the free-boundary ring.

    ``budget`` caps the number of accepted-flip rounds.  Each round screens
    all ring candidates with conservative patch estimates, accepts a batch of
    well separated improving flips (kept only if the full solve confirms the
    decrease, otherwise the single best flip is kept), and when no estimate
    is negative evaluates candidates within ``exact_band`` area quanta exactly
    with the global solver.
    """
    grid = init.grid
    n = grid.n
    h = grid.h
    R = local_radius if local_radius is not None else (8 if n == 1 else 4)
    prob = _Problem(grid, init.data, init.region, method, tol)
    mask = init.mask.copy()
    vals, solver, F = prob.solve(mask)
    E = prob.energy(vals, mask)
    history = list(init.history) + [E]
    quantum = AREA_COEFF * h ** n
    gscale = h ** (n - 1)
    etol = 1e-12 * max(abs(E), 1.0)
    rng = np.random.default_rng(seed) if seed is not None else None
    region_plane = init.region[..., 0]
    data_plane = init.data[..., 0]
    flips = init.flips
    converged = False
    rounds = 0
    L = prob.L

    def candidates(mask):
        ext = np.where(region_plane, mask, data_plane > 0)
        pin = mask & region_plane & _plane_neighbors(mask, ~ext & (region_plane | (data_plane <= 0)))
        unpin = ~mask & region_plane & _plane_neighbors(mask, ext)
        plane_idx = np.arange(grid.size).reshape(grid.shape)[..., 0]
        return plane_idx[pin], plane_idx[unpin]

    def local_delta(p, kind, free_flat, vals):
        patch = _patch(grid, p, R)
        loc = patch[free_flat[patch]]
        if kind == "unpin":
            loc = np.union1d(loc, [p])
        A = L[loc][:, loc].tocsc()
        e = np.zeros(loc.size)
        k = int(np.searchsorted(loc, p))
        e[k] = 1.0
        z = spla.spsolve(A, e)
        if kind == "pin":
            return gscale * vals[p] ** 2 / z[k] - quantum
        r = L[p] @ vals
        return -gscale * float(r[0] if np.ndim(r) else r) ** 2 * z[k] + quantum

    def exact_delta(p, kind, free_flat, vals, solver, F):
        if kind == "pin":
            i = int(np.searchsorted(F, p))
            e = np.zeros(F.size)
            e[i] = 1.0
            z = solver.solve(e, scale=1.0)
            return gscale * vals[p] ** 2 / z[i] - quantum
        col = L[F][:, [p]].toarray().ravel()
        z = solver.solve(col, scale=max(np.max(np.abs(col)), 1.0))
        S = L[p, p] - float(col @ z)
        r = float((L[p] @ vals)[0])
        return -gscale * r * r / S + quantum

    while True:
        if rounds >= budget:
            break
        free_flat = prob.free(mask)
        pins, unpins = candidates(mask)
        cand = [(int(p), "pin") for p in pins] + [(int(q), "unpin") for q in unpins]
        if not cand:
            converged = True
            break
        order = np.arange(len(cand)) if rng is None else rng.permutation(len(cand))
        cand = [cand[i] for i in order]
        est = np.array([local_delta(p, k, free_flat, vals) for p, k in cand])
        ranked = np.argsort(est, kind="stable")
        good = [i for i in ranked if est[i] < -etol]
        accepted = None
        if good:
            # greedy batch of separated candidates
            batch = []
            taken = []
            for i in good:
                p = np.array(np.unravel_index(cand[i][0], grid.shape))
                if all(np.max(np.abs(p - q)) > 2 * R for q in taken):
                    batch.append(i)
                    taken.append(p)
            trial = mask.copy()
            for i in batch:
                _apply(trial, cand[i], grid)
            tv, ts, tF = prob.solve(trial, x0=vals)
            tE = prob.energy(tv, trial)
            if tE < E - etol:
                accepted = (trial, tv, ts, tF, tE, len(batch))
            elif len(batch) > 1:
                trial = mask.copy()
                _apply(trial, cand[good[0]], grid)
                tv, ts, tF = prob.solve(trial, x0=vals)
                tE = prob.energy(tv, trial)
                if tE < E - etol:
                    accepted = (trial, tv, ts, tF, tE, 1)
        if accepted is None:
            # exact evaluation of borderline candidates
            border = [i for i in ranked if est[i] < exact_band * quantum]
            best, best_d = None, -etol
            for i in border:
                d = exact_delta(cand[i][0], cand[i][1], free_flat, vals, solver, F)
                if d < best_d:
                    best, best_d = i, d
            if best is not None:
                trial = mask.copy()
                _apply(trial, cand[best], grid)
                tv, ts, tF = prob.solve(trial, x0=vals)
                tE = prob.energy(tv, trial)
                if tE < E - etol:
                    accepted = (trial, tv, ts, tF, tE, 1)
        if accepted is None:
            converged = True
            break
        mask, vals, solver, F, E, k = accepted
        flips += k
        rounds += 1
        history.append(E)
        if verbose:
            print(f"round {rounds}: {k} flips, E = {E:.10f}")
    gv = np.where(_plane_zero(grid, mask), 0.0, vals.reshape(grid.shape))
    state = EnergyState(GridFunction(grid, gv, mask), init.data, init.region, E, history, flips,
                        converged, not converged)
    if not converged:
        warnings.warn(f"flip budget of {budget} rounds exhausted", BudgetExhausted)
    return state


def _apply(mask, cand, grid):
    p, kind = cand
    idx = np.unravel_index(p, grid.shape)[:-1]
    mask[idx] = kind == "unpin"


def discrete_energy(grid: Grid, values, mask, radius: float = 1.0, center=None) -> float:
    """Discrete energy of arbitrary node values (e.g. sampled U) on B_radius."""
    X = grid.coords()
    c = np.zeros(grid.n + 1) if center is None else np.asarray(center, dtype=float)
    region = ball_mask(X, c, radius) & ~grid.outer_boundary()
    prob = _Problem(grid, values, region)
    return prob.energy(np.asarray(values, dtype=float).ravel(), mask)


# ---------------------------------------------------------------------------
# free boundary and alpha


@dataclass
class FreeBoundary:
    nodes: np.ndarray    # (K, n) plane indices
    points: np.ndarray   # (K, n+1) interface positions (node - h/2 nu)
    normals: np.ndarray  # (K, n+1), pointing into the positivity set
    alpha: np.ndarray    # (K,)

    def __len__(self):
        return self.nodes.shape[0]


def _as_gridfunction(state) -> GridFunction:
    return state.g if isinstance(state, EnergyState) else state


def extract_free_boundary(state, radius: float | None = None, center=None, with_alpha: bool = True,
                          fit_range=None, edge_offset: bool = False) -> FreeBoundary:
    """Mask nodes with a non-mask in-plane neighbour, with normals and alpha."""
    g = _as_gridfunction(state)
    grid = g.grid
    n = grid.n
    mask = g.mask
    P = grid.plane_coords()
    c = np.zeros(n + 1) if center is None else np.asarray(center, dtype=float)
    if isinstance(state, EnergyState):
        inside = state.region[..., 0]
    else:
        inside = ~grid.outer_boundary()[..., 0]
    if radius is not None:
        inside = inside & ball_mask(P, c, radius)
    fb = mask & inside & _plane_neighbors(mask, ~mask & inside)
    nodes = np.argwhere(fb)
    if nodes.shape[0] == 0:
        raise EmptyBoundary("the mask has no boundary inside the region")
    normals = np.zeros((nodes.shape[0], n + 1))
    for i, ix in enumerate(nodes):
        lo = np.maximum(ix - 2, 0)
        hi = np.minimum(ix + 3, np.array(mask.shape))
        win = tuple(slice(a, b) for a, b in zip(lo, hi))
        wm = mask[win]
        wfb = fb[win]
        loc = np.argwhere(np.ones(wm.shape, dtype=bool)) + lo
        wm_f = wm.ravel()
        towards = loc[wm_f].mean(axis=0) - (loc[~wm_f].mean(axis=0) if (~wm_f).any() else ix)
        if n == 1:
            nu = np.sign(towards)
            nu = nu if np.any(nu) else np.array([1.0])
        else:
            pts = np.argwhere(wfb) + lo
            if pts.shape[0] >= 2:
                C = np.cov((pts - pts.mean(axis=0)).T)
                w, v = np.linalg.eigh(np.atleast_2d(C))
                nu = v[:, 0]
                if nu @ towards < 0:
                    nu = -nu
            else:
                nu = towards / max(np.linalg.norm(towards), 1e-300)
        normals[i, :n] = nu / np.linalg.norm(nu)
    points = P[tuple(nodes.T)] - 0.5 * grid.h * normals
    alpha = np.full(nodes.shape[0], np.nan)
    if with_alpha:
        f = g.interpolator()
        for i in range(nodes.shape[0]):
            try:
                alpha[i] = estimate_alpha(f, points[i], normals[i], fit_range=fit_range, h=grid.h,
                                          edge_offset=edge_offset)
            except FitFailure:
                pass
    return FreeBoundary(nodes, points, normals, alpha)


def estimate_alpha(state, fb_point, normal, fit_range=None, h: float | None = None,
                   max_rel_residual: float = 0.1, edge_offset: bool = False) -> float:
    """Least-squares slope of g(x0 + t nu, 0) against sqrt(t).

    With ``edge_offset`` the model is alpha sqrt(t - tau) with tau free
    (a linear fit of g^2 in t), which removes the O(h) uncertainty of the
    interface position that otherwise biases alpha by O(1) at fit ranges
    proportional to h.
    """
    if isinstance(state, (EnergyState, GridFunction)):
        gf = _as_gridfunction(state)
        h = gf.grid.h if h is None else h
        f = gf.interpolator()
    else:
        f = state
    if fit_range is None:
        if h is None:
            raise ValueError("fit_range or h is required")
        fit_range = (4 * h, 16 * h)
    lo, hi = fit_range
    t = lo * 2.0 ** np.arange(0, np.log2(hi / lo) + 1e-9, 0.5)
    x0 = np.asarray(fb_point, dtype=float)
    nu = np.asarray(normal, dtype=float)
    pts = x0[None, :] + t[:, None] * nu[None, :]
    pts[:, -1] = 0.0
    gv = np.asarray(f(pts), dtype=float)
    if np.any(~np.isfinite(gv)):
        raise FitFailure("alpha ray leaves the grid")
    if edge_offset:
        A = np.vstack([t, -np.ones_like(t)]).T
        (a2, a2tau), *_ = np.linalg.lstsq(A, gv * gv, rcond=None)
        if a2 <= 0:
            raise FitFailure("nonpositive alpha^2 in the offset fit")
        alpha = float(np.sqrt(a2))
        model = alpha * np.sqrt(np.maximum(t - a2tau / a2, 0.0))
    else:
        st = np.sqrt(t)
        alpha = float(gv @ st / (st @ st))
        model = alpha * st
    res = np.linalg.norm(gv - model) / max(np.linalg.norm(gv), 1e-300)
    if res > max_rel_residual:
        raise FitFailure(f"alpha fit relative residual {res:.3f}")
    return alpha


def alpha_decay_exponent(state, fb_point, normal, h: float, ranges=None) -> float:
    """Exponent of the alpha sqrt(t - tau) fit residual under shrinking fit ranges.

    A one-sided expansion g = alpha U + o(|X|^{1/2}) shows up as an exponent
    above 1/2; a smooth interface gives about 3/2 until the grid floor.
    """
    f = _as_gridfunction(state).interpolator()
    ranges = ranges or [(4 * h * 2 ** k, 16 * h * 2 ** k) for k in (2, 1, 0)]
    x0 = np.asarray(fb_point, dtype=float)
    nu = np.asarray(normal, dtype=float)
    sizes, res = [], []
    for lo, hi in ranges:
        t = np.linspace(lo, hi, 9)
        gv = f(x0[None] + t[:, None] * nu[None])
        if np.any(~np.isfinite(gv)):
            raise FitFailure("fit range leaves the grid")
        A = np.vstack([t, -np.ones_like(t)]).T
        (a2, a2tau), *_ = np.linalg.lstsq(A, gv * gv, rcond=None)
        model = np.sqrt(max(a2, 0.0)) * np.sqrt(np.maximum(t - a2tau / a2, 0.0))
        sizes.append(hi)
        res.append(np.max(np.abs(gv - model)))
    return fit_power_law(sizes, res).exponent


# ---------------------------------------------------------------------------
# viscosity audit


def viscosity_touch_audit(state, V: BarrierParams, delta: float, C0: float = 10.0,
                          margin: float = 0.1, side: str = "below", slide_range: float = 0.5,
                          radius: float = 0.5, center=None, contact_radius: float | None = None,
                          floor: float = 1e-12) -> bool:
    """Slide V along e_n to first contact and test for a touching violation.

    Below: the positivity set of V(X + tau e_n) grows with tau until it first
    reaches a zero node of g; a violation is g >= alpha V near the contact
    with alpha > 1 + margin.  Above: the positivity set shrinks until it
    first loses a mask node; a violation is g <= alpha V with alpha < 1 - margin.
    """
    g = _as_gridfunction(state)
    grid = g.grid
    if side == "below":
        if not subsolution_check(V, delta, C0):
            raise PreconditionViolation("V is not a strict subsolution")
    elif side == "above":
        if not supersolution_check(V, delta, C0):
            raise PreconditionViolation("V is not a strict supersolution")
    else:
        raise ValueError("side must be 'below' or 'above'")
    c = np.zeros(grid.n + 1) if center is None else np.asarray(center, dtype=float)
    P = grid.plane_coords()
    ball = ball_mask(P, c, radius)
    height = V.surface.height(P[..., :-2]) - P[..., -2]  # tau at which a node enters {V > 0}
    pool = ball & (~g.mask if side == "below" else g.mask)
    if not pool.any():
        raise NoContact("no candidate contact node in the audit ball")
    vals = np.where(pool, height, np.inf if side == "below" else -np.inf)
    flat = int(np.argmin(vals) if side == "below" else np.argmax(vals))
    ix = np.unravel_index(flat, pool.shape)
    tau = float(vals[ix])
    if abs(tau) > slide_range:
        raise NoContact(f"first contact at tau = {tau:.3g} is outside the slide range")
    ring = _plane_neighbors(g.mask, ~g.mask)
    near_fb = ring | _plane_neighbors(ring, ring)
    if not near_fb[ix]:
        return True
    X = grid.coords()
    en = np.zeros(grid.n + 1)
    en[-2] = 1.0
    W = eval_V(V, X + tau * en)
    cr = 8 * grid.h if contact_radius is None else contact_radius
    near = ball_mask(X, P[ix], cr) & (W > floor)
    if not near.any():
        return True
    ratio = g.values[near] / W[near]
    if side == "below":
        return not (ratio.min() > 1.0 + margin)
    return not (ratio.max() < 1.0 - margin)


# ---------------------------------------------------------------------------
# flatness decay and improvement of flatness


class DecayReport(NamedTuple):
    scales: np.ndarray
    oscillation: np.ndarray
    rate: float            # fitted per-step factor (1 - eta_bar)
    eta_bar: float
    holder_exponent: float
    strictly_decreasing: bool

    def to_json(self) -> dict:
        return {"scales": self.scales.tolist(), "oscillation": self.oscillation.tolist(),
                "rate": self.rate, "eta_bar": self.eta_bar,
                "holder_exponent": self.holder_exponent,
                "strictly_decreasing": self.strictly_decreasing}


def flatness_decay_experiment(state, center, scales, eps_bound: float = 0.2, baseline: Callable | None = None,
                              use: str = "endpoints", min_nodes: int = 8, tube: float = 0.0) -> DecayReport:
    """Rescaled oscillation of g~ over B_lambda(center) minus P, per scale.

    With lambda^{-1/2} g(lambda X) the hodograph rescales as g~(lambda X)/lambda,
    so the rescaled oscillation is osc_{B_lambda} g~ / lambda.  Nodes closer
    than ``tube`` (in units of h) to the edge of the reference slit are left
    out when ``tube`` > 0.
    """
    g = _as_gridfunction(state)
    h = g.grid.h
    c = np.asarray(center, dtype=float)
    scales = np.sort(np.asarray(scales, dtype=float))[::-1]
    keep = scales >= min_nodes * h
    if keep.sum() < 3:
        raise InsufficientScales(f"only {int(keep.sum())} scales above {min_nodes} h")
    scales = scales[keep]
    hf = compute_hodograph(g, eps_bound, center=c, radius=float(scales[0]), reference=reference_U(c))
    w_lo, w_hi = hf.w_min, hf.w_max
    if baseline is not None:
        base = baseline(hf.points - c)
        w_lo, w_hi = w_lo - base, w_hi - base
    rel = hf.points - c
    dist = np.linalg.norm(rel, axis=-1)
    edge = np.hypot(rel[:, -2], rel[:, -1])
    osc = []
    for lam in scales:
        sel = (dist <= lam + 1e-12) & (edge >= tube * h)
        if use == "midpoint":
            m = 0.5 * (w_lo[sel] + w_hi[sel])
            o = m.max() - m.min()
        else:
            o = w_hi[sel].max() - w_lo[sel].min()
        osc.append(o / lam)
    osc = np.array(osc)
    dec = bool(np.all(np.diff(osc) < 0))
    if np.all(osc <= 1e-13):
        return DecayReport(scales, osc, 0.0, 1.0, np.inf, False)
    steps = np.log(scales[0] / scales)
    ratio = np.log(scales[0] / scales[1])
    A = np.vstack([steps / ratio, np.ones_like(steps)]).T
    coef, *_ = np.linalg.lstsq(A, np.log(np.maximum(osc, 1e-300)), rcond=None)
    rate = float(np.exp(coef[0]))
    holder = float(-coef[0] / ratio)
    return DecayReport(scales, osc, rate, 1.0 - rate, holder, dec)


class ScaleFit(NamedTuple):
    scale: float
    params: BarrierParams     # fitted in the e_n frame
    curvature: float          # M in the rotated frame where xi = 0 (n = 2), 0 for n = 1
    width: float              # sup of the displacement between g and V on the ball
    defect: float             # a + b - tr M (rotated frame)
    residual_bound: float     # width / scale^2, the trapping width in curvature units
    rms: float


class DriftReport(NamedTuple):
    fits: list
    drift: np.ndarray
    exponent: float
    defect_ok: bool

    def to_json(self) -> dict:
        return {
            "scales": [f.scale for f in self.fits],
            "params": [f.params.to_json() for f in self.fits],
            "curvature": [f.curvature for f in self.fits],
            "width": [f.width for f in self.fits],
            "defect": [f.defect for f in self.fits],
            "residual_bound": [f.residual_bound for f in self.fits],
            "drift": self.drift.tolist(), "exponent": self.exponent, "defect_ok": self.defect_ok,
        }


def _pack(V: BarrierParams, n):
    if n == 1:
        return np.array([V.surface.offset, V.a, V.b])
    return np.array([V.surface.offset, V.xi[0], V.M[0, 0], V.a, V.b])


def _unpack(p, n) -> BarrierParams:
    if n == 1:
        return BarrierParams.make(n=1, a=p[1], b=p[2], offset=p[0])
    return BarrierParams.make(M=[[p[2]]], xi=[p[1]], a=p[3], b=p[4], offset=p[0])


def fit_barrier(g: GridFunction, center, lam: float, init: BarrierParams | None = None,
                eps: float = 0.1, min_s: int = 1, tube: float = 0.0) -> ScaleFit:
    """Least-squares fit of V (in coordinates centred at ``center``) to g on B_lam.

    The residual at a node X (with s >= min_s h) is the displacement w with
    g(X - w e_n) = V(X - center), found exactly on the piecewise-linear
    e_n lines of g.  With ``tube`` > 0 a first fit on all nodes fixes the
    edge of the slit and the refit leaves out nodes within tube*h of it,
    where the staircase mask dominates the discretization error.
    """
    if tube > 0:
        first = fit_barrier(g, center, lam, init, eps, min_s, 0.0)
        return _fit_barrier(g, center, lam, first.params, eps, min_s, tube)
    return _fit_barrier(g, center, lam, init, eps, min_s, 0.0)


def _fit_barrier(g, center, lam, init, eps, min_s, tube) -> ScaleFit:
    grid = g.grid
    n = grid.n
    c = np.asarray(center, dtype=float)
    X = grid.coords()
    sidx = np.indices(grid.shape)[-1]
    sel = ball_mask(X, c, lam) & (sidx >= min_s)
    if tube > 0:
        t, s = plane_coords(init, X - c, fallback=True)
        sel &= np.hypot(t, s) >= tube * grid.h
    lines = np.moveaxis(g.values, -2, -1)
    pos = np.broadcast_to(np.arange(lines.shape[-1]), lines.shape)
    sel_l = np.moveaxis(sel, -2, -1)
    Xl = np.moveaxis(X, -3, -2)[sel_l] - c
    # restrict the line data to the lines that contain selected nodes
    lead = np.nonzero(sel_l.any(axis=-1))
    sub_lines = lines[lead]
    sub_sel = sel_l[lead]
    sub_pos = pos[lead]

    def displacement(p):
        V = _unpack(p, n)
        tgt = np.zeros(sub_lines.shape)
        tgt[sub_sel] = eval_V(V, Xl, fallback=True)
        lo, hi = line_roots(sub_lines, sub_pos, tgt, grid.h, eps)
        w = 0.5 * (lo + hi)[sub_sel]
        return np.where(np.isnan(w), eps, w)

    p0 = _pack(init if init is not None else BarrierParams.make(n=n), n)
    sol = least_squares(displacement, p0, method="trf", x_scale=np.r_[0.01, np.ones(p0.size - 1)],
                        diff_step=1e-4, xtol=1e-10, ftol=1e-10)
    V = _unpack(sol.x, n)
    w = displacement(sol.x)
    width = float(np.max(np.abs(w)))
    if n == 2:
        curv = float(V.M[0, 0] / (1 + V.xi[0] ** 2) ** 1.5)
    else:
        curv = 0.0
    defect = V.a + V.b - curv
    return ScaleFit(lam, V, curv, width, defect, width / lam ** 2, float(np.sqrt(np.mean(w ** 2))))


def improvement_of_flatness_fit(state, lambda0: float = 0.5, eta0: float = 0.5, alpha: float = 0.5,
                                n_scales: int = 3, center=None, init: BarrierParams | None = None,
                                eps: float = 0.1, check_trapped: bool = True,
                                tube: float = 0.0) -> DriftReport:
    """Per-scale barrier fits on B_{lambda_k}, lambda_k = eta0^k lambda0."""
    g = _as_gridfunction(state)
    n = g.grid.n
    c = np.zeros(n + 1) if center is None else np.asarray(center, dtype=float)
    fits = []
    V = init
    for k in range(n_scales):
        lam = lambda0 * eta0 ** k
        if lam < 6 * g.grid.h:
            raise InsufficientScales(f"scale {lam:.3g} is below 6 h")
        sf = fit_barrier(g, c, lam, V, eps=eps, tube=tube)
        if k == 0 and check_trapped and sf.width > lam ** (2 + alpha):
            raise NotTrapped(f"width {sf.width:.3g} exceeds lambda0^(2+alpha) = {lam ** (2 + alpha):.3g}")
        fits.append(sf)
        V = sf.params
    drift = []
    for f0, f1 in zip(fits[:-1], fits[1:]):
        drift.append(max(abs(f0.curvature - f1.curvature), abs(f0.params.a - f1.params.a),
                         abs(f0.params.b - f1.params.b)))
    drift = np.array(drift)
    if drift.size >= 2 and np.all(drift > 0):
        expo = fit_power_law([f.scale for f in fits[1:]], drift).exponent
    elif drift.size and np.all(drift <= 1e-12):
        expo = np.inf
    else:
        expo = float("nan")
    ok = all(abs(f.defect) <= f.residual_bound for f in fits)
    return DriftReport(fits, drift, float(expo), ok)


def tilted_data(eps: float, mode: str = "rotate") -> Callable:
    """Planar data with free boundary {x_n = eps x_1}.

    ``rotate`` gives U in the rotated frame (an exact solution); ``shear``
    gives U(x_1, x_n - eps x_1, s), which is not harmonic, so the minimizer
    carries genuine curvature terms that relax across scales.
    """
    if mode == "rotate":
        V = BarrierParams.make(xi=[eps])
        return lambda X: eval_V(V, X)
    if mode == "shear":
        return lambda X: eval_U(X[..., 1] - eps * X[..., 0], X[..., 2])
    raise ValueError(f"unknown tilt mode {mode!r}")
