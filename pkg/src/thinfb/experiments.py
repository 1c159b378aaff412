"""Experiment drivers shared by the CLI kinds and the selftest criteria.

Every driver returns an Outcome: named values with tolerances, pass/fail
checks against stated bounds, CSV-ready tables and optional grid snapshots.
Floats are rounded to a fixed number of significant digits before they are
serialized so that repeated runs give byte-identical files.
"""
from __future__ import annotations

import functools
import io
import json
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from . import SCHEMA_VERSION
from .barriers import (BarrierParams, eval_U, eval_U_t, eval_V, gamma_V, plane_coords,
                       random_barrier, subsolution_check, supersolution_check)
from .errors import ConfigError, ThinFBError
from .grid import Grid, GridFunction
from .harmonic import SlitProblem, growth_exponent, solve_slit_laplace
from .hodograph import compute_hodograph, inverse_hodograph, measure_flatness
from .linearized import extract_expansion, solve_linearized_2d
from .minimizer import (discrete_energy, extract_free_boundary, flatness_decay_experiment,
                        improvement_of_flatness_fit, initial_state, minimize_energy, tilted_data)
from .numerics import fd_laplacian, fit_power_law

DIGITS = 10


def rnd(x):
    """Round floats (recursively) to DIGITS significant digits."""
    if isinstance(x, (list, tuple)):
        return [rnd(v) for v in x]
    if isinstance(x, np.ndarray):
        return rnd(x.tolist())
    if isinstance(x, dict):
        return {k: rnd(v) for k, v in x.items()}
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if not np.isfinite(x):
            return str(x)
        return float(f"{x:.{DIGITS}g}")
    return x


@dataclass
class Check:
    name: str
    value: Any
    relation: str
    bound: Any
    tolerance: float
    passed: bool

    def to_json(self) -> dict:
        return {"name": self.name, "value": rnd(self.value), "relation": self.relation,
                "bound": rnd(self.bound), "tolerance": rnd(self.tolerance), "passed": self.passed}


def _compare(value, relation, bound) -> bool:
    v = np.asarray(value, dtype=float)
    if np.any(np.isnan(v)):
        return False
    if relation == ">=":
        return bool(np.all(v >= bound))
    if relation == ">":
        return bool(np.all(v > bound))
    if relation == "<=":
        return bool(np.all(v <= bound))
    if relation == "<":
        return bool(np.all(v < bound))
    if relation == "in":
        return bool(np.all((v >= bound[0]) & (v <= bound[1])))
    if relation == "open-in":
        return bool(np.all((v > bound[0]) & (v < bound[1])))
    raise ValueError(f"unknown relation {relation!r}")


@dataclass
class Outcome:
    kind: str
    label: str
    params: dict = field(default_factory=dict)
    values: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)
    snapshots: dict = field(default_factory=dict)

    def value(self, name: str, v, tolerance: float) -> None:
        self.values[name] = {"value": v, "tolerance": tolerance}

    def check(self, name: str, value, relation: str, bound, tolerance: float = 0.0) -> bool:
        ok = _compare(value, relation, bound)
        self.checks.append(Check(name, value, relation, bound, tolerance, ok))
        return ok

    def flag(self, name: str, ok: bool, value=None) -> bool:
        self.checks.append(Check(name, bool(ok) if value is None else value, "true", True, 0.0,
                                 bool(ok)))
        return bool(ok)

    def table(self, name: str, header: list, rows) -> None:
        self.tables[name] = (list(header), [list(r) for r in rows])

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list:
        return [c.to_json() for c in self.checks if not c.passed]

    def to_json(self) -> dict:
        return {"schema": SCHEMA_VERSION, "kind": self.kind, "label": self.label,
                "params": rnd(self.params), "passed": self.passed,
                "values": {k: {"value": rnd(v["value"]), "tolerance": rnd(v["tolerance"])}
                           for k, v in self.values.items()},
                "checks": [c.to_json() for c in self.checks]}


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def table_csv(header, rows) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for r in rows:
        buf.write(",".join(_cell(v) for v in r) + "\n")
    return buf.getvalue()


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.{DIGITS - 1}e}"
    return str(v)


# ---------------------------------------------------------------------------
# barriers


def _scaled(V: BarrierParams, d: float) -> BarrierParams:
    return BarrierParams.make(d * V.M, d * V.xi, d * V.a, d * V.b)


def _half_ball(rng, n: int, radius: float, m: int) -> np.ndarray:
    pts = rng.normal(size=(m, n + 1))
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    pts *= radius * rng.uniform(0, 1, size=(m, 1)) ** (1.0 / (n + 1))
    pts[:, -1] = np.abs(pts[:, -1])
    return pts


def barrier_separation(out: Outcome, n: int = 2, deltas=(0.02, 0.04, 0.08), count: int = 20,
                       samples: int = 2000, seed: int = 0, C1: float = 10.0,
                       exponent_min: float = 1.9) -> None:
    """sup |V~ - gamma_V| over B_1 for fixed normalized draws scaled by delta."""
    rng = np.random.default_rng(seed)
    base = [random_barrier(rng, n, 1.0) for _ in range(count)]
    P = _half_ball(rng, n, 1.0, samples)
    sups = np.zeros((count, len(deltas)))
    in_class = True
    for j, d in enumerate(deltas):
        for i, B in enumerate(base):
            V = _scaled(B, d)
            in_class &= V.in_class(d)
            hf = compute_hodograph(lambda X: eval_V(V, X), 4 * d + 0.01, points=P)
            sups[i, j] = np.max(np.abs(hf.mid - gamma_V(V, hf.points)))
    worst = sups.max(axis=0)
    expo = fit_power_law(deltas, worst).exponent
    per = [fit_power_law(deltas, row).exponent for row in sups]
    out.value("separation_sup", worst, 1e-10)
    out.value("separation_exponent", expo, 0.0)
    out.value("separation_exponent_min_per_barrier", min(per), 0.0)
    out.table("separation", ["delta", "sup_max", "sup_median"],
              [[d, worst[j], float(np.median(sups[:, j]))] for j, d in enumerate(deltas)])
    out.check("separation_exponent", expo, ">=", exponent_min)
    out.check("separation_bound_C1_delta2", worst / np.square(deltas), "<=", C1)
    out.flag("draws_in_class", in_class)


def _dist_to_slit(t, s):
    return np.hypot(np.maximum(t, 0.0), s)


def subsolution_positivity(out: Outcome, n: int = 2, delta: float = 0.05, count: int = 50,
                           points: int = 400, fd_h: float = 1e-2, seed: int = 1, C0: float = 10.0) -> None:
    """FD Laplacian sign of V on B_2 minus a 10h tube around the slit."""
    rng = np.random.default_rng(seed)
    good, bad = [], []
    while len(good) < count or len(bad) < count:
        V = random_barrier(rng, n, delta)
        if subsolution_check(V, delta, C0):
            if len(good) < count:
                good.append(V)
        elif supersolution_check(V, delta, C0):
            if len(bad) < count:
                bad.append(V)
    min_lap, neg_found = [], []
    for group, store in ((good, min_lap), (bad, neg_found)):
        for V in group:
            P = _half_ball(rng, n, 2.0, 4 * points)
            t, s = plane_coords(V, P)
            P = P[_dist_to_slit(t, s) >= 10 * fd_h][:points]
            lap = fd_laplacian(lambda X: eval_V(V, X), P, fd_h)
            store.append(float(lap.min()))
    out.value("subsolution_min_laplacian", min(min_lap), fd_h ** 4)
    out.value("violating_min_laplacian", max(neg_found), fd_h ** 4)
    out.check("subsolution_laplacian_positive", min(min_lap), ">", 0.0)
    out.check("margin_violation_detected", max(neg_found), "<", 0.0)


def barrier_flatness(out: Outcome, n: int = 2, deltas=(0.01, 0.02, 0.05, 0.1), per_delta: int = 5,
                     h: float = 1 / 32, seed: int = 2) -> None:
    """measure_flatness on sampled V in V_delta against 4 delta + 2h."""
    rng = np.random.default_rng(seed)
    grid = Grid.cube(n, h)
    rows, slack = [], []
    for d in deltas:
        for _ in range(per_delta):
            V = random_barrier(rng, n, d)
            g = GridFunction.from_function(grid, lambda X: eval_V(V, X))
            eps = measure_flatness(g, radius=1.0).eps
            rows.append([d, eps, 4 * d + 2 * h])
            slack.append(4 * d + 2 * h - eps)
    out.table("flatness", ["delta", "eps", "bound"], rows)
    out.value("flatness_min_slack", min(slack), 1e-8)
    out.check("flatness_within_4delta_2h", min(slack), ">=", 0.0, 1e-8)


def barrier_audit(params: dict) -> Outcome:
    out = Outcome("barrier-audit", params.get("label", "barrier-audit"), params)
    n = int(params.get("n", 2))
    seed = int(params.get("seed", 0))
    barrier_separation(out, n, tuple(params.get("deltas", (0.02, 0.04, 0.08))),
                       int(params.get("count", 20)), int(params.get("samples", 2000)), seed,
                       float(params.get("C1", 10.0)), float(params.get("exponent_min", 1.9)))
    subsolution_positivity(out, n, float(params.get("positivity_delta", 0.05)),
                           int(params.get("positivity_count", 50)), seed=seed + 1)
    barrier_flatness(out, n, seed=seed + 2)
    return out


# ---------------------------------------------------------------------------
# hodograph


TEST_PHIS: dict[str, Callable] = {
    "sin": lambda X: np.sin(X[..., 0] + 2 * X[..., -2]),
    "quadratic": lambda X: X[..., 0] ** 2 - X[..., -2] * X[..., -1] + 0.5,
    "exp": lambda X: np.exp(0.5 * X[..., -2]) * np.cos(X[..., 0] + X[..., -1]),
}


def hodograph_expansion(out: Outcome, eps=(0.04, 0.02, 0.01), phis=("sin", "quadratic", "exp"),
                        points: int = 300, fd_h: float = 5e-3, seed: int = 3,
                        exponent_min: float = 1.8) -> None:
    """Fitted exponent of sup |Delta phi_eps - eps Delta(U_n phi)| in eps."""
    rng = np.random.default_rng(seed)
    P = _half_ball(rng, 2, 0.5, 20 * points)
    P = P[_dist_to_slit(P[:, -2], P[:, -1]) >= 0.3][:points]
    rows, expos = [], []
    for name in phis:
        phi = TEST_PHIS[name]

        def Unphi(X, phi=phi):
            return eval_U_t(X[..., -2], X[..., -1]) * phi(X)

        lin = fd_laplacian(Unphi, P, fd_h)
        res = []
        for e in eps:
            pe = inverse_hodograph(phi, e)
            # U is harmonic off the slit, so only phi_eps - U needs differencing
            lap = fd_laplacian(lambda X: pe(X) - eval_U(X[..., -2], X[..., -1]), P, fd_h)
            res.append(float(np.max(np.abs(lap - e * lin))))
            rows.append([name, e, res[-1]])
        expos.append(fit_power_law(eps, res).exponent)
    out.table("laplacian_expansion", ["phi", "eps", "residual"], rows)
    out.value("expansion_exponents", expos, 0.0)
    out.check("expansion_exponent", min(expos), ">=", exponent_min)


def hodograph_roundtrip(params: dict) -> Outcome:
    out = Outcome("hodograph-roundtrip", params.get("label", "hodograph-roundtrip"), params)
    seed = int(params.get("seed", 0))
    eps = float(params.get("eps", 0.02))
    rng = np.random.default_rng(seed)
    P = _half_ball(rng, 2, 0.5, 400)
    errs = []
    for name, phi in TEST_PHIS.items():
        pe = inverse_hodograph(phi, eps)
        hf = compute_hodograph(pe, eps * 3.0, points=P)
        errs.append(float(np.max(np.abs(hf.mid - eps * phi(hf.points)))))
    out.value("roundtrip_error", errs, 1e-9)
    out.check("roundtrip_error", max(errs), "<=", float(params.get("roundtrip_tol", 1e-9)))
    hodograph_expansion(out, tuple(params.get("eps_list", (0.04, 0.02, 0.01))), seed=seed + 3,
                        exponent_min=float(params.get("exponent_min", 1.8)))
    return out


# ---------------------------------------------------------------------------
# linearized


def exact_family(c0: float, c1: float) -> Callable:
    def h(t, s):
        rho = np.hypot(t, s)
        return c0 + c1 * (8 * rho * t - 4 * rho * rho)
    return h


def linearized_recovery(out: Outcome, h: float = 1 / 256, c0: float = 0.3, c1: float = 1.0,
                        coeff_tol: float = 1e-4, defect_tol: float = 1e-6,
                        d0_weight: float = 0.01) -> None:
    F = solve_linearized_2d(exact_family(c0, c1), h=h)
    E = extract_expansion(F)
    out.value("a0", E.a0, coeff_tol)
    out.value("b0", E.b0, coeff_tol)
    out.value("h0", E.h0, coeff_tol)
    out.value("defect", E.defect, defect_tol)
    out.value("fit_residual", E.residual, 0.0)
    out.check("a0_error", abs(E.a0 - 8 * c1), "<=", coeff_tol)
    out.check("b0_error", abs(E.b0 + 8 * c1), "<=", coeff_tol)
    out.check("constraint_defect", abs(E.defect), "<=", defect_tol)
    # a field with a synthesized d0 mode (the h = r profile) must be rejected
    base = exact_family(c0, c1)
    Eg = extract_expansion(lambda t, s: base(t, s) + d0_weight * np.hypot(t, s))
    out.value("synthesized_d0", Eg.d[0], 0.0)
    out.value("synthesized_residual", Eg.residual, 0.0)
    out.flag("synthesized_d0_rejected", Eg.d0_rejected(10.0), abs(Eg.d[0]))
    out.flag("clean_d0_accepted", not E.d0_rejected(10.0), abs(E.d[0]))


def linearized_extract(params: dict) -> Outcome:
    out = Outcome("linearized-extract", params.get("label", "linearized-extract"), params)
    linearized_recovery(out, float(params.get("h", 1 / 256)), float(params.get("c0", 0.0)),
                        float(params.get("c1", 1.0)), float(params.get("coeff_tol", 1e-4)),
                        float(params.get("defect_tol", 1e-6)))
    return out


# ---------------------------------------------------------------------------
# slit solver


def slit_convergence(out: Outcome, hs=(1 / 64, 1 / 128, 1 / 256), far: float = 0.1,
                     order_min: float = 1.9) -> None:
    errs = []
    for h in hs:
        grid = Grid.cube(1, h)
        X = grid.coords()
        U = eval_U(X[..., 0], X[..., 1])
        sol = solve_slit_laplace(SlitProblem(grid, U, X[..., 0, 0] <= 0))
        away = np.hypot(X[..., 0], X[..., 1]) >= far
        errs.append(float(np.abs(sol.values - U)[away].max()))
    order = fit_power_law(hs, errs).exponent
    out.table("slit_convergence", ["h", "sup_error"], [[h, e] for h, e in zip(hs, errs)])
    out.value("slit_order", order, 0.0)
    out.check("slit_order", order, ">=", order_min)


# ---------------------------------------------------------------------------
# minimizer


def data_profile(params: dict) -> tuple[Callable, str]:
    """Dirichlet data from a [data] section; returns (function, family)."""
    kind = params.get("profile", "U")
    if kind == "U":
        shift = float(params.get("shift", 0.0))
        return (lambda X: eval_U(X[..., -2] + shift, X[..., -1])), "planar"
    if kind == "perturbed":
        beta = float(params.get("beta", 0.1))
        return (lambda X: eval_U(X[..., -2], X[..., -1]) * (1 + beta * X[..., -2])), "perturbed"
    if kind == "tilted":
        return tilted_data(float(params.get("tilt", 0.1)), params.get("tilt_mode", "rotate")), "tilted"
    if kind == "zero":
        return (lambda X: np.zeros(X.shape[:-1])), "zero"
    raise ConfigError(f"unknown data profile {kind!r}")


def _grid(params: dict) -> Grid:
    return Grid.cube(int(params.get("n", 1)), float(params.get("h", 1 / 128)))


@functools.lru_cache(maxsize=8)
def _converged(n: int, h: float, items: tuple, budget: int, seed):
    params = dict(items)
    grid = Grid.cube(n, h)
    data, _ = data_profile(params)
    return minimize_energy(initial_state(grid, data), budget=budget, seed=seed)


def converged_state(grid_params: dict, data_params: dict, budget: int = 2000, seed=None):
    """Cached minimizer run (shared between criteria in one process)."""
    g = _grid(grid_params)
    items = tuple(sorted((k, str(v)) for k, v in data_params.items()))
    return _converged(g.n, g.h, items, budget, seed)


def minimize_checks(out: Outcome, state, family: str, shift: float = 0.0, alpha_range=(0.9, 1.1),
                    energy_rel: float = 0.01, fb_radius: float = 0.5, growth_range=(0.45, 0.55),
                    data: Callable | None = None) -> None:
    grid = state.grid
    h = grid.h
    out.value("energy", state.energy, 1e-10)
    out.value("flips", state.flips, 0)
    out.flag("converged", state.converged)
    hist = np.asarray(state.history)
    out.flag("energy_non_increasing", bool(np.all(np.diff(hist) <= 0)))
    out.table("energy_history", ["step", "energy"], [[i, e] for i, e in enumerate(hist)])
    if family == "zero":
        out.check("energy_zero", abs(state.energy), "<=", 0.0)
        return
    fb = extract_free_boundary(state, radius=fb_radius)
    cols = [f"x{k + 1}" for k in range(grid.n - 1)] + ["xn"]
    out.table("free_boundary", cols + [f"nu_{c}" for c in cols] + ["alpha"],
              [list(p[:-1]) + list(nu[:-1]) + [a] for p, nu, a in zip(fb.points, fb.normals, fb.alpha)])
    alpha = fb.alpha[np.isfinite(fb.alpha)]
    out.value("alpha_mean", float(alpha.mean()), 0.0)
    out.value("alpha_std", float(alpha.std()), 0.0)
    out.check("alpha_mean", float(alpha.mean()), "in", list(alpha_range))
    gexp = growth_exponent(state.g, center=np.zeros(grid.n + 1))
    out.value("growth_exponent", gexp, 0.0)
    out.check("growth_exponent", gexp, "in", list(growth_range))
    if family == "planar":
        offset = float(np.max(np.abs(fb.points[:, -2] + shift)))
        out.value("fb_offset", offset, h)
        out.check("fb_within_2h", offset, "<=", 2 * h)
        X = grid.coords()
        vals = data(X)
        oracle = discrete_energy(grid, vals, vals[..., 0] > 0)
        rel = abs(state.energy - oracle) / oracle
        out.value("oracle_energy", oracle, 1e-10)
        out.value("energy_rel_error", rel, energy_rel)
        out.check("energy_within_1pct", rel, "<=", energy_rel)


def minimize(params: dict) -> Outcome:
    out = Outcome("minimize", params.get("label", "minimize"), params)
    data, family = data_profile(params)
    flip_seed = params.get("flip_seed")
    state = converged_state(params, params, int(params.get("budget", 2000)),
                            None if flip_seed in (None, "") else int(flip_seed))
    minimize_checks(out, state, family, float(params.get("shift", 0.0)), data=data)
    out.snapshots["state"] = state.g
    return out


def decay_checks(out: Outcome, state, scales, eps_bound: float = 0.1, use: str = "endpoints") -> None:
    fb = extract_free_boundary(state, radius=0.5, with_alpha=False)
    center = fb.points[np.argmin(np.linalg.norm(fb.points, axis=1))]
    rep = flatness_decay_experiment(state, center, scales, eps_bound=eps_bound, use=use)
    out.table("decay", ["scale", "oscillation"], [[s, o] for s, o in zip(rep.scales, rep.oscillation)])
    out.value("decay_rate", rep.rate, 0.0)
    out.value("eta_bar", rep.eta_bar, 0.0)
    out.value("holder_exponent", rep.holder_exponent, 0.0)
    out.value("center", center, state.grid.h)
    out.check("scales_used", len(rep.scales), ">=", 3)
    out.flag("strictly_decreasing", rep.strictly_decreasing)
    out.check("decay_rate", rep.rate, "open-in", [0.0, 1.0])


def flatness_decay(params: dict) -> Outcome:
    out = Outcome("flatness-decay", params.get("label", "flatness-decay"), params)
    state = converged_state(params, params, int(params.get("budget", 2000)))
    scales = params.get("scales", (0.5, 0.25, 0.125, 0.0625, 0.03125))
    decay_checks(out, state, tuple(float(s) for s in scales), float(params.get("eps_bound", 0.1)),
                 params.get("oscillation", "endpoints"))
    out.snapshots["state"] = state.g
    return out


def drift_checks(out: Outcome, state, tilt: float, lambda0: float = 0.5, eta0: float = 0.5,
                 alpha: float = 0.5, n_scales: int = 3, tube: float = 4.0) -> None:
    rep = improvement_of_flatness_fit(state, lambda0, eta0, alpha, n_scales,
                                      init=BarrierParams.make(xi=[tilt]), tube=tube)
    rows = []
    for f in rep.fits:
        rows.append([f.scale, f.params.xi[0], f.curvature, f.params.a, f.params.b, f.width,
                     f.defect, f.residual_bound])
    out.table("drift_fits", ["scale", "xi", "curvature", "a", "b", "width", "defect", "residual_bound"],
              rows)
    out.value("drift", rep.drift, 0.0)
    out.value("drift_exponent", rep.exponent, 0.0)
    out.value("coarse_xi", rep.fits[0].params.xi[0], 0.0)
    out.check("coarse_xi_error", abs(rep.fits[0].params.xi[0] - tilt), "<=", 0.1 * abs(tilt) + 1e-3)
    out.check("drift_exponent", rep.exponent, ">", 0.0)
    out.check("defect_over_residual_bound",
              [abs(f.defect) / f.residual_bound for f in rep.fits], "<=", 1.0)


def improvement_fit(params: dict) -> Outcome:
    out = Outcome("improvement-fit", params.get("label", "improvement-fit"), params)
    p = {"profile": "tilted", **params}
    state = converged_state(p, p, int(params.get("budget", 2000)))
    drift_checks(out, state, float(p.get("tilt", 0.1)), float(p.get("lambda0", 0.5)),
                 float(p.get("eta0", 0.5)), float(p.get("alpha", 0.5)), int(p.get("n_scales", 3)),
                 float(p.get("tube", 4.0)))
    out.snapshots["state"] = state.g
    return out


KINDS: dict[str, Callable[[dict], Outcome]] = {
    "barrier-audit": barrier_audit,
    "hodograph-roundtrip": hodograph_roundtrip,
    "linearized-extract": linearized_extract,
    "minimize": minimize,
    "flatness-decay": flatness_decay,
    "improvement-fit": improvement_fit,
}


# ---------------------------------------------------------------------------
# acceptance criteria


PLANAR = {"n": 1, "h": 1 / 128, "profile": "U"}
TILTED = {"n": 2, "h": 1 / 48, "profile": "tilted", "tilt": 0.1, "tilt_mode": "rotate"}
PERTURBED = {"n": 1, "h": 1 / 256, "profile": "perturbed", "beta": 0.1}


def _state(p):
    return converged_state(p, {k: v for k, v in p.items() if k not in ("n", "h")})


def criterion_1(seed: int = 0) -> Outcome:
    out = Outcome("criterion", "barrier separation scaling", {"seed": seed})
    barrier_separation(out, seed=seed)
    return out


def criterion_2(seed: int = 0) -> Outcome:
    out = Outcome("criterion", "subsolution positivity", {"seed": seed})
    subsolution_positivity(out, seed=seed + 1)
    return out


def criterion_3(seed: int = 0) -> Outcome:
    out = Outcome("criterion", "flatness of barriers", {"seed": seed})
    barrier_flatness(out, seed=seed + 2)
    return out


def criterion_4(seed: int = 0) -> Outcome:
    out = Outcome("criterion", "inverse-hodograph Laplacian expansion", {"seed": seed})
    hodograph_expansion(out, seed=seed + 3)
    return out


def criterion_5(seed: int = 0) -> Outcome:
    out = Outcome("criterion", "linearized exact-solution recovery", {"c0": 0.3, "c1": 0.5})
    linearized_recovery(out, c0=0.3, c1=0.5)
    return out


def criterion_6(seed: int = 0) -> Outcome:
    out = Outcome("criterion", "slit-solver convergence", {})
    slit_convergence(out)
    return out


def criterion_7(seed: int = 0) -> Outcome:
    out = Outcome("criterion", "planar minimizer recovery", dict(PLANAR))
    data, family = data_profile(PLANAR)
    state = _state(PLANAR)
    fb = extract_free_boundary(state, radius=0.5)
    h = PLANAR["h"]
    offset = float(np.max(np.abs(fb.points[:, -2])))
    X = state.grid.coords()
    vals = data(X)
    oracle = discrete_energy(state.grid, vals, vals[..., 0] > 0)
    rel = abs(state.energy - oracle) / oracle
    alpha = float(np.nanmean(fb.alpha))
    out.value("fb_offset", offset, h)
    out.value("energy", state.energy, 1e-10)
    out.value("oracle_energy", oracle, 1e-10)
    out.value("alpha_mean", alpha, 0.0)
    out.flag("converged", state.converged)
    out.flag("energy_non_increasing", bool(np.all(np.diff(state.history) <= 0)))
    out.check("fb_within_2h", offset, "<=", 2 * h)
    out.check("energy_within_1pct", rel, "<=", 0.01)
    out.check("alpha_mean", alpha, "in", [0.9, 1.1])
    return out


def criterion_8(seed: int = 0) -> Outcome:
    out = Outcome("criterion", "optimal-regularity exponent", {"planar": PLANAR, "tilted": TILTED})
    for name, p in (("planar", PLANAR), ("tilted", TILTED)):
        st = _state(p)
        e = growth_exponent(st.g, center=np.zeros(st.grid.n + 1))
        out.value(f"growth_{name}", e, 0.0)
        out.check(f"growth_{name}", e, "in", [0.45, 0.55])
    return out


def criterion_9(seed: int = 0) -> Outcome:
    out = Outcome("criterion", "oscillation decay", dict(PERTURBED))
    decay_checks(out, _state(PERTURBED), (0.5, 0.25, 0.125, 0.0625, 0.03125))
    return out


def criterion_10(seed: int = 0) -> Outcome:
    out = Outcome("criterion", "improvement-of-flatness drift", dict(TILTED))
    drift_checks(out, _state(TILTED), TILTED["tilt"])
    return out


CRITERIA: dict[int, Callable[[int], Outcome]] = {
    1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5,
    6: criterion_6, 7: criterion_7, 8: criterion_8, 9: criterion_9, 10: criterion_10,
}


def run_criterion(k: int, seed: int = 0) -> Outcome:
    try:
        return CRITERIA[k](seed)
    except ThinFBError as exc:
        out = Outcome("criterion", f"criterion {k}", {"seed": seed})
        out.flag(f"raised {type(exc).__name__}", False, str(exc))
        return out
