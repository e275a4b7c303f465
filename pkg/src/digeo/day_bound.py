"""Quantitative uniform convexity of direct integrals.

Given the modulus ``delta_E`` of the lattice and the fiber-uniform modulus
``delta(eps) = min_i delta_{X_i}(eps)``, the composition

    eta   = min(1/2, delta(eps/4))
    alpha = delta_E(3 eta eps / 4)
    omega = min(eps, 2 alpha) / 2
    tau   = min(delta_E(omega), (alpha - omega/2)(1 - slack))

gives ``tau > 0`` such that unit ``f, g`` with ``||f + g|| > 2(1 - tau)`` have
``||f - g|| <= 2 eps``.  This module computes the composition, traces the
intermediate inequalities on concrete pairs, and checks the conclusion by
sampling.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from . import search
from .config import DEFAULT_TOL, Tolerances
from .direct_integral import DirectIntegralSpace, equalize_pointwise_norms
from .modulus import ModulusCurve, certified_lower_bounds, global_modulus_estimate
from .spaces import SpaceError
from .verdict import PropertyVerdict

SEPARATION_FACTOR = 1.01
FEASIBLE_BISECT_ITERS = 32
MODULUS_BUDGET = 20000


class DayPreconditionError(ValueError):
    pass


@dataclass
class DayBoundReport:
    eps: float
    eta: float
    alpha: float
    omega: float
    tau: float
    delta_E_at_omega: float
    vacuous: bool
    fiber_curve: ModulusCurve
    E_curve: ModulusCurve
    source: str = "lower"
    slack: float = DEFAULT_TOL.day_slack
    conclusion_separation: float = field(init=False)

    def __post_init__(self):
        self.conclusion_separation = 2.0 * self.eps

    def constraint_margins(self) -> dict[str, float]:
        """Slack in each constraint the proof puts on (omega, tau); all positive when non-vacuous."""
        return {
            "omega_positive": self.omega,
            "omega_below_eps": self.eps - self.omega,
            "omega_below_2alpha": 2 * self.alpha - self.omega,
            "tau_gap": 2 * (1 - self.tau) - (2 * (1 - self.alpha) + self.omega),
            "tau_below_delta_E": self.delta_E_at_omega - self.tau,
        }

    def to_dict(self) -> dict[str, Any]:
        return {
            "eps": self.eps,
            "eta": self.eta,
            "alpha": self.alpha,
            "omega": self.omega,
            "tau": self.tau,
            "delta_E_at_omega": self.delta_E_at_omega,
            "vacuous": self.vacuous,
            "conclusion_separation": self.conclusion_separation,
            "source": self.source,
            "slack": self.slack,
            "fiber_curve": _curve_dict(self.fiber_curve),
            "E_curve": _curve_dict(self.E_curve),
        }


def _curve_dict(c: ModulusCurve) -> dict:
    return {
        "eps_grid": c.eps_grid.tolist(),
        "upper": c.upper_estimates.tolist(),
        "certified_lower": None if c.certified_lower is None else c.certified_lower.tolist(),
        "budget": c.budget,
        "seed": c.seed,
    }


def compose_day_bound(delta_E: ModulusCurve, delta_fibers: ModulusCurve, eps: float, *,
                      source: str = "lower", slack: float = DEFAULT_TOL.day_slack) -> DayBoundReport:
    """Compose ``tau`` from the two curves; a vacuous bound is reported, not raised."""
    eps = float(eps)
    if not 0 < eps < 2:
        raise ValueError(f"eps must lie in (0, 2), got {eps}")
    eta = min(0.5, delta_fibers(eps / 4, source))
    alpha = delta_E(3 * eta * eps / 4, source)
    omega = min(eps, 2 * alpha) / 2
    dEw = delta_E(omega, source) if omega > 0 else 0.0
    tau = min(dEw, (alpha - omega / 2) * (1 - slack))
    vacuous = not (eta > 0 and alpha > 0 and tau > 0)
    if vacuous:
        tau = 0.0
    return DayBoundReport(eps, eta, alpha, omega, tau, dEw, vacuous, delta_fibers, delta_E, source, slack)


# -- building the input curves --------------------------------------------------------------

def distinct_fibers(Y: DirectIntegralSpace):
    seen = {}
    for X in Y.fibers:
        seen.setdefault(json.dumps(X.to_dict(), sort_keys=True), X)
    return list(seen.values())


def _curve_from_estimates(ests: dict, budget: int, seed: int, label: str, lower=None) -> ModulusCurve:
    grid = np.array(sorted(ests))
    up = np.array([ests[e].value for e in grid])
    wx = np.array([np.asarray(ests[e].witness["x"], dtype=float) for e in grid])
    wy = np.array([np.asarray(ests[e].witness["y"], dtype=float) for e in grid])
    for i in range(len(grid) - 2, -1, -1):
        if up[i + 1] < up[i]:
            up[i], wx[i], wy[i] = up[i + 1], wx[i + 1], wy[i + 1]
    if lower is not None:
        lower = np.maximum.accumulate(np.minimum(lower, up))
    return ModulusCurve(grid, up, lower, wx, wy, budget, seed, label, [ests[e].precision for e in grid])


def fiber_modulus_curve(Y: DirectIntegralSpace, eps_grid: Sequence[float], budget: int = 20000, seed: int = 0,
                        precision="auto", certify: bool = False) -> ModulusCurve:
    """Pointwise minimum over the distinct fibers of their modulus curves."""
    grid = sorted({float(e) for e in eps_grid})
    curves = []
    for X in distinct_fibers(Y):
        ests = {e: global_modulus_estimate(X, e, budget, seed, precision=precision) for e in grid}
        lower = certified_lower_bounds(X, grid) if certify else None
        curves.append(_curve_from_estimates(ests, budget, seed, "fiber", lower))
    if len(curves) == 1:
        return curves[0]
    return ModulusCurve.pointwise_min(curves, "fiber")


DEFAULT_CURVE_GRID: tuple[float, ...] = ()


def day_bound_inputs(Y: DirectIntegralSpace, eps: float, budget: int = 20000, seed: int = 0,
                     grid: Sequence[float] = DEFAULT_CURVE_GRID, precision="auto") -> tuple[ModulusCurve, ModulusCurve]:
    """Curves for ``compose_day_bound`` whose grids contain every argument it evaluates.

    ``eps/4`` is put on the fiber grid; ``3 eta eps / 4`` and ``omega`` on the
    lattice grid, so the composition reads estimates directly and never
    interpolates between them.
    """
    fib = fiber_modulus_curve(Y, list(grid) + [eps / 4], budget, seed, precision)
    eta = min(0.5, fib(eps / 4, "upper"))
    E = Y.E.as_norm_spec()
    ests = {}

    def need(e):
        if e > 0 and e not in ests:
            ests[e] = global_modulus_estimate(E, e, budget, seed, precision=precision)

    for e in grid:
        need(float(e))
    for _ in range(4):
        need(3 * eta * eps / 4)
        curve = _curve_from_estimates(ests, budget, seed, "lattice")
        alpha = curve(3 * eta * eps / 4, "upper")
        omega = min(eps, 2 * alpha) / 2
        if omega <= 0 or omega in ests:
            break
        need(omega)
    return _curve_from_estimates(ests, budget, seed, "lattice"), fib


def day_bound_for_space(Y: DirectIntegralSpace, eps: float, budget: int = 20000, seed: int = 0,
                        **kwargs) -> DayBoundReport:
    E_curve, fib = day_bound_inputs(Y, eps, budget, seed, **kwargs)
    return compose_day_bound(E_curve, fib, eps)


# -- proof trace ------------------------------------------------------------------------------------

@dataclass
class DayWitnessTrace:
    eps: float
    eta: float
    beta: np.ndarray
    gamma: np.ndarray
    R: np.ndarray
    in_A: np.ndarray
    t: np.ndarray
    t_prime: np.ndarray
    t_dprime: np.ndarray
    norms: dict[str, float]
    eq1_margins: np.ndarray
    eq2_margin: float
    eq3_margin: float | None
    conclusion_margin: float | None
    gamma_margin: float
    R_eta_margin: float

    def min_margin(self) -> float:
        vals = [float(self.eq1_margins.min()), self.eq2_margin, self.gamma_margin, self.R_eta_margin]
        if self.eq3_margin is not None:
            vals.append(self.eq3_margin)
        return min(vals)

    def to_dict(self) -> dict:
        out = {}
        for k, v in self.__dict__.items():
            out[k] = v.tolist() if isinstance(v, np.ndarray) else v
        return out


def day_witness_trace(Y: DirectIntegralSpace, f, g, eps: float, delta_fibers: ModulusCurve,
                      delta_E: ModulusCurve | None = None, source: str | None = None,
                      tol: Tolerances = DEFAULT_TOL) -> DayWitnessTrace:
    """Evaluate every inequality of the equal-pointwise-norm step on one pair.

    Fiber moduli are read as left step values of the curve (certified lower
    bounds when the curve has them), which never exceeds the true modulus.
    """
    f, g = Y.flatten(f), Y.flatten(g)
    nf, ng = float(Y.norm(f)), float(Y.norm(g))
    if abs(nf - 1) > tol.unit_input or abs(ng - 1) > tol.unit_input:
        raise DayPreconditionError(f"f and g must be unit vectors (norms {nf!r}, {ng!r})")
    beta = Y.block_norms(f)
    if np.max(np.abs(beta - Y.block_norms(g))) > tol.unit_input:
        raise DayPreconditionError("f and g must have equal pointwise norms")
    sep = float(Y.norm(f - g))
    if sep < eps:
        raise DayPreconditionError(f"separation {sep!r} is below eps = {eps!r}")
    if source is None:
        source = "certified" if delta_fibers.is_certified else "upper"
    E = Y.E
    gamma = Y.block_norms(f - g)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(gamma > 0, gamma / beta, 0.0)
    R = np.array([delta_fibers.step(r, source) if gm > 0 else 0.0 for r, gm in zip(ratio, gamma)])
    eta = min(0.5, delta_fibers.step(eps / 4, source))
    in_A = 4 * gamma > beta * eps
    t = np.where(in_A, 0.0, beta)
    t1 = np.where(in_A, beta, 0.0)
    t2 = (1 - 2 * eta) * t1
    sums = Y.block_norms(f + g)
    eq1 = 2 * (1 - R) * beta - sums
    gA = float(E.norm(np.where(in_A, gamma, 0.0)))
    eq2 = min(gA - (float(E.norm(gamma)) - float(E.norm(np.where(in_A, 0.0, gamma)))),
              gA - (sep - eps / 4), gA - 3 * eps / 4)
    mixed = float(E.norm((1 - eta) * t1 + t))
    eq3 = concl = None
    if delta_E is not None:
        e_src = "certified" if delta_E.is_certified else "upper"
        alpha = delta_E.step(3 * eta * eps / 4, e_src)
        eq3 = (1 - alpha) - mixed
        concl = 2 * (1 - alpha) - float(Y.norm(f + g))
    R_eta = float(np.min(R[in_A] - eta)) if in_A.any() else np.inf
    return DayWitnessTrace(
        eps=float(eps), eta=eta, beta=beta, gamma=gamma, R=R, in_A=in_A, t=t, t_prime=t1, t_dprime=t2,
        norms={"f_minus_g": sep, "f_plus_g": float(Y.norm(f + g)), "gamma_A": gA, "mixed": mixed,
               "gamma_B": float(E.norm(np.where(in_A, 0.0, gamma)))},
        eq1_margins=eq1, eq2_margin=float(eq2), eq3_margin=eq3, conclusion_margin=concl,
        gamma_margin=float(np.min(2 * beta - gamma)), R_eta_margin=R_eta,
    )


def sample_equal_norm_pairs(Y: DirectIntegralSpace, count: int, eps: float, seed: int = 0,
                            max_rounds: int = 200) -> tuple[np.ndarray, np.ndarray]:
    """Unit pairs with identical block norms and separation at least ``eps``."""
    rng = np.random.default_rng([int(seed), search.tag_id("equal-norm-pairs")])
    fs, gs, have = [], [], 0
    m = Y.n_atoms
    for _ in range(max_rounds):
        n = max(64, 2 * (count - have))
        prof = np.abs(rng.standard_normal((n, m))) * rng.uniform(0, 1, (n, m)) ** 2
        prof[rng.uniform(size=(n, m)) < 0.2] = 0.0
        prof[np.all(prof == 0, axis=1), 0] = 1.0
        prof /= Y.E.norm(prof)[:, None]
        F = np.empty((n, Y.dim))
        G = np.empty((n, Y.dim))
        for i, X in enumerate(Y.fibers):
            a, b = Y.offsets[i], Y.offsets[i + 1]
            u = search.unit(X, rng.standard_normal((n, X.dim)))
            v = search.unit(X, rng.standard_normal((n, X.dim)))
            flip = rng.uniform(size=n) < 0.3
            v[flip] = -u[flip]
            F[:, a:b] = prof[:, i:i + 1] * u
            G[:, a:b] = prof[:, i:i + 1] * v
        keep = Y.norm(F - G) >= eps
        fs.append(F[keep])
        gs.append(G[keep])
        have += int(keep.sum())
        if have >= count:
            break
    if have < count:
        raise SpaceError(f"found only {have} equal-norm pairs with separation >= {eps}")
    return np.vstack(fs)[:count], np.vstack(gs)[:count]


# -- sampled verification ------------------------------------------------------------------------

def _closest_feasible(Y, f, g, tau):
    """Move ``g`` toward ``f`` until ``1 - ||(f+g)/2|| < tau``; returns the moved ``g``."""
    def point(lam):
        with np.errstate(all="ignore"):
            return search.unit(Y, f + lam[:, None] * (g - f))

    def feasible(lam):
        gl = point(lam)
        return 1.0 - Y.norm(0.5 * (f + gl)) < tau

    n = f.shape[0]
    lo, hi = np.zeros(n), np.ones(n)
    ok_end = feasible(hi)
    for _ in range(FEASIBLE_BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        ok = feasible(mid)
        lo = np.where(ok, mid, lo)
        hi = np.where(ok, hi, mid)
    lam = np.where(ok_end, 1.0, lo)
    return point(lam)


def verify_day_bound(Y: DirectIntegralSpace, report: DayBoundReport, budget: int = 20000, seed: int = 0,
                     modulus_budget: int | None = None, tol: Tolerances = DEFAULT_TOL) -> PropertyVerdict:
    """Search unit pairs with ``||f + g|| > 2(1 - tau)`` for one with ``||f - g|| > 2 eps``.

    Random pairs are pulled toward each other until they meet the constraint,
    then the separation is pushed up by pattern search.  The conclusion is
    also checked globally: the modulus of ``Y`` at ``2 eps * 1.01`` must be at
    least ``tau``.
    """
    tols = {"separation": tol.day_separation, "modulus": tol.day_modulus}
    if report.vacuous:
        return PropertyVerdict("UC", "skipped", None, None, budget, seed, tols, {"reason": "vacuous"})
    D, tau, limit = Y.dim, report.tau, 2 * report.eps + tol.day_separation

    def realize(P):
        with np.errstate(all="ignore"):
            f = search.unit(Y, P[:, :D])
            g = search.unit(Y, P[:, D:])
        bad = ~(np.all(np.isfinite(f), axis=1) & np.all(np.isfinite(g), axis=1))
        f[bad], g[bad] = 0.0, 0.0
        gm = _closest_feasible(Y, f, g, tau) if f.shape[0] else g
        return f, gm, bad

    def neg_sep(P):
        f, gm, bad = realize(P)
        v = -Y.norm(f - gm)
        v[bad] = np.inf
        return np.where(np.isfinite(v), v, np.inf)

    cands, starts = [], []
    for k, size, full in search.chunk_plan(budget):
        rng = search.chunk_rng(seed, "day-verify", k)
        P = rng.standard_normal((size, 2 * D))
        vals = neg_sep(P)
        cands.append(P[search.top_k(vals, 1)])
        if full:
            starts.append(P[search.top_k(vals, search.STARTS_PER_CHUNK)])
    if starts:
        refined, _ = search.pattern_search(neg_sep, np.vstack(starts), step0=0.1, min_step=1e-8, max_iter=100)
        cands.append(refined)
    C = np.vstack(cands)
    f, gm, _ = realize(C)
    seps = Y.norm(f - gm)
    i = search.lex_argmin(-seps, np.hstack([f, gm]))
    wf, wg = f[i], gm[i]
    max_sep = float(Y.norm(wf - wg))
    plus = float(Y.norm(wf + wg))
    details = {
        "tau": tau,
        "max_separation": max_sep,
        "norm_sum_at_max": plus,
        "limit": 2 * report.eps,
    }
    if max_sep > limit and plus > 2 * (1 - tau):
        return PropertyVerdict("UC", "fail", limit - max_sep, {"f": wf, "g": wg}, budget, seed, tols,
                               {**details, "violated": "separation"})

    target = SEPARATION_FACTOR * 2 * report.eps
    margin = limit - max_sep
    if target > 2:
        details["delta_Y_check"] = "vacuous: separation beyond the diameter of the unit ball"
    else:
        est = global_modulus_estimate(Y, target, modulus_budget or min(budget, MODULUS_BUDGET), seed)
        details["delta_Y_upper"] = est.value
        details["delta_Y_eps"] = target
        m2 = est.value - (tau - tol.day_modulus)
        if m2 < 0:
            return PropertyVerdict("UC", "fail", m2, {"f": est.witness["x"], "g": est.witness["y"]}, budget, seed,
                                   tols, {**details, "violated": "modulus"})
        margin = min(margin, m2)
    return PropertyVerdict("UC", "pass", margin, {"f": wf, "g": wg}, budget, seed, tols, details)


def equalization_bridge(Y: DirectIntegralSpace, f, g, report: DayBoundReport) -> dict[str, float]:
    """Quantities of the reduction from arbitrary pairs to equal-pointwise-norm pairs."""
    f, g = Y.flatten(f), Y.flatten(g)
    h = equalize_pointwise_norms(Y, f, g)
    gap = float(Y.E.norm(Y.block_norms(f) - Y.block_norms(g)))
    return {
        "profile_gap": gap,
        "h_minus_g": float(Y.norm(h - g)),
        "f_plus_h": float(Y.norm(f + h)),
        "f_minus_h": float(Y.norm(f - h)),
        "omega": report.omega,
        "two_one_minus_alpha": 2 * (1 - report.alpha),
    }
