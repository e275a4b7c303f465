"""Estimators for the modulus of convexity and its pointwise relatives.

Every estimator returns an *upper* estimate of an infimum: the objective value
at the best feasible point found, together with that point (the witness).
Re-evaluating the objective at the witness reproduces the reported value.

* global:   inf{ 1 - ||(x+y)/2|| : x, y in B_X, ||x - y|| >= eps }
* local:    inf{ 1 - ||(x+y)/2|| : y in B_X, ||x - y|| >= eps }          (x fixed)
* midpoint: inf{ max(||x+z||, ||x-z||) : ||z|| = eps } - 1              (x fixed)
* strong:   inf{ 1 - <x*, y> : y in S_X, ||y - x|| >= eps }             (x, x* fixed)

Positivity of these quantities at every scale is, in finite dimension, the
same as uniform / local uniform / midpoint local uniform / strong convexity.

``global_modulus_estimate`` can additionally produce a certified lower bound
from an exhaustive grid over sphere pairs with a Lipschitz error term, when
the sphere pair search space has dimension at most 4 (``dim <= 3``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import mpmath as mp
import numpy as np

from . import search
from .config import DEFAULT_TOL
from .spaces import SpaceError


class ModulusError(ValueError):
    pass


@dataclass
class Estimate:
    kind: str
    eps: float
    value: float
    witness: dict[str, Any]
    budget: int
    seed: int
    certified_lower: float | None = None
    precision: int | None = None  # decimal digits when computed with mpmath

    @property
    def upper(self) -> float:
        return self.value


# -- objective realisations (batched over parameter rows) ------------------------------

def _global_pairs(space, P: np.ndarray, eps: float):
    D = space.dim
    n = P.shape[0]
    u, w = P[:, :D], P[:, D:]
    with np.errstate(all="ignore"):
        x = search.unit(space, u)
        val = np.full(n, np.inf)
        y = np.full((n, D), np.nan)
        if D >= 2:
            wp = search.perpendicular(x, w)
            ok = np.all(np.isfinite(x), axis=1) & np.all(np.isfinite(wp), axis=1)
            if ok.any():
                xo, wo = x[ok], wp[ok]
                _, hi = search.bisect_path(space, xo, wo, lambda yy: space.norm(xo - yy) >= eps)
                yo = search.path_point(space, xo, wo, hi)
                y[ok] = yo
                val[ok] = 1.0 - space.norm(0.5 * (xo + yo))
        # interior partner at exact distance eps
        v = search.unit(space, w)
        yb = x + eps * v
        inside = space.norm(yb) <= 1.0
        vb = np.where(inside, 1.0 - space.norm(0.5 * (x + yb)), np.inf)
        vb = np.where(np.isnan(vb), np.inf, vb)
        take = vb < val
        y[take] = yb[take]
        val = np.where(take, vb, val)
    return val, x, y


def _local_pairs(space, x: np.ndarray, P: np.ndarray, eps: float):
    n, D = P.shape
    X = np.broadcast_to(x, (n, D)).copy()
    val = np.full(n, np.inf)
    y = np.full((n, D), np.nan)
    with np.errstate(all="ignore"):
        if D >= 2:
            wp = search.perpendicular(X, P)
            ok = np.all(np.isfinite(wp), axis=1)
            if ok.any():
                xo, wo = X[ok], wp[ok]
                _, hi = search.bisect_path(space, xo, wo, lambda yy: space.norm(xo - yy) >= eps)
                yo = search.path_point(space, xo, wo, hi)
                y[ok] = yo
                val[ok] = 1.0 - space.norm(0.5 * (xo + yo))
        v = search.unit(space, P)
        yb = X + eps * v
        inside = space.norm(yb) <= 1.0
        vb = np.where(inside, 1.0 - space.norm(0.5 * (X + yb)), np.inf)
        vb = np.where(np.isnan(vb), np.inf, vb)
        take = vb < val
        y[take] = yb[take]
        val = np.where(take, vb, val)
    return val, X, y


def _midpoint_dirs(space, x: np.ndarray, P: np.ndarray, eps: float):
    with np.errstate(all="ignore"):
        z = eps * search.unit(space, P)
        val = np.maximum(space.norm(x + z), space.norm(x - z)) - 1.0
    val = np.where(np.isfinite(val), val, np.inf)
    return val, z


def _strong_pairs(space, x: np.ndarray, xstar: np.ndarray, P: np.ndarray, eps: float):
    n, D = P.shape
    X = np.broadcast_to(x, (n, D)).copy()
    val = np.full(n, np.inf)
    y = np.full((n, D), np.nan)
    if D < 2:
        # the sphere of a line is {x, -x}
        y[:] = -x
        ok = space.norm(x - y) >= eps - DEFAULT_TOL.feasibility
        val[ok] = 1.0 - space.pair(xstar, y[ok])
        return val, y
    with np.errstate(all="ignore"):
        wp = search.perpendicular(X, P)
        ok = np.all(np.isfinite(wp), axis=1)
        if ok.any():
            xo, wo = X[ok], wp[ok]
            _, hi = search.bisect_path(space, xo, wo, lambda yy: space.norm(xo - yy) >= eps)
            yo = search.path_point(space, xo, wo, hi)
            y[ok] = yo
            val[ok] = 1.0 - space.pair(xstar, yo)
    return val, y


def _run_search(evaluate, n_params: int, budget: int, seed: int, tag: str, structured: np.ndarray,
                refine: bool = True, max_iter: int = 400):
    """Sample, pick starts from full chunks, refine; returns candidate parameter rows."""
    if budget < 1:
        raise ModulusError("budget must be >= 1")
    cands = [structured] if structured.size else []
    starts = []
    for k, size, full in search.chunk_plan(budget):
        rng = search.chunk_rng(seed, tag, k)
        P = rng.standard_normal((size, n_params))
        vals = evaluate(P)
        best = search.top_k(vals, 1)
        cands.append(P[best])
        if full:
            starts.append(P[search.top_k(vals, search.STARTS_PER_CHUNK)])
    if structured.size:
        sv = evaluate(structured)
        starts.append(structured[search.top_k(sv, search.STARTS_PER_CHUNK)])
    if refine and starts:
        S = np.vstack(starts)
        norms = np.linalg.norm(S, axis=1, keepdims=True)
        S = S / np.where(norms > 0, norms, 1.0)
        refined, _ = search.pattern_search(evaluate, S, max_iter=max_iter)
        cands.append(refined)
    return np.vstack(cands)


def _seed_pairs(D: int, eps: float) -> np.ndarray:
    """Coordinate seeds plus mirror pairs (e_i + s e_j, e_i - s e_j) with s = eps / 2."""
    rows = [search.structured_pairs(D)]
    eye = np.eye(D)
    for i in range(D):
        for j in range(D):
            if i != j:
                rows.append(np.concatenate([eye[i] + 0.5 * eps * eye[j], -eye[j]])[None, :])
    return np.vstack(rows)


def _check_eps(eps: float, upper: float = 2.0):
    if not (0 < eps <= upper):
        raise ModulusError(f"eps must lie in (0, {upper}], got {eps}")


def _check_unit(space, x, name="x"):
    x = np.asarray(x, dtype=float)
    if x.shape != (space.dim,):
        raise SpaceError(f"{name} must have shape ({space.dim},)")
    if abs(float(space.norm(x)) - 1.0) > DEFAULT_TOL.unit_input:
        raise ModulusError(f"{name} must be a unit vector (norm {float(space.norm(x))!r})")
    return x


# -- global modulus ----------------------------------------------------------------------

def global_modulus_estimate(space, eps: float, budget: int = 20000, seed: int = 0, *, certify: bool = False,
                            precision: int | str | None = None, resolution: int | None = None) -> Estimate:
    """Upper estimate of ``delta_X(eps)`` with its witness pair.

    ``precision=None`` searches in float64.  ``precision="auto"`` escalates to
    mpmath when the float64 value is too small to be resolved (below 1e-10);
    an integer forces that many decimal digits.
    """
    eps = float(eps)
    _check_eps(eps)
    if isinstance(precision, int):
        return _hp_global(space, eps, budget, seed, precision, certify, resolution)
    D = space.dim

    def evaluate(P):
        return _global_pairs(space, P, eps)[0]

    cands = _run_search(evaluate, 2 * D, budget, seed, "global", _seed_pairs(D, eps))
    val, x, y = _global_pairs(space, cands, eps)
    val = np.where(np.isfinite(val), val, np.inf)
    i = search.lex_argmin(val, np.hstack([np.nan_to_num(x, nan=np.inf), np.nan_to_num(y, nan=np.inf)]))
    if not np.isfinite(val[i]):
        raise ModulusError("no feasible pair found")
    wx, wy = x[i], y[i]
    value = float(1.0 - space.norm(0.5 * (wx + wy)))
    if precision == "auto" and value < 1e-10:
        digits = 30 + int(math.ceil(4 * max(0.0, -math.log10(eps))))
        return _hp_global(space, eps, budget, seed, digits, certify, resolution)
    lower = None
    if certify:
        cl = certified_lower_bounds(space, [eps], resolution)
        lower = None if cl is None else float(cl[0])
    return Estimate("global", eps, min(max(value, 0.0), 1.0), {"x": wx, "y": wy}, budget, seed, lower)


def witness_objective(space, est: Estimate) -> tuple[float, dict[str, float]]:
    """Recompute the objective at an estimate's witness, plus constraint slacks."""
    w = est.witness
    if est.precision is not None:
        with mp.workdps(est.precision):
            x = [mp.mpf(s) for s in w["x_mp"]]
            y = [mp.mpf(s) for s in w["y_mp"]]
            val = 1 - space.norm_mp([(a + b) / 2 for a, b in zip(x, y)])
            sep = space.norm_mp([a - b for a, b in zip(x, y)])
            return float(val), {"sep_slack": float(sep - mp.mpf(est.eps)),
                                "x_slack": float(1 - space.norm_mp(x)), "y_slack": float(1 - space.norm_mp(y))}
    if est.kind == "global":
        x, y = w["x"], w["y"]
        val = 1.0 - space.norm(0.5 * (x + y))
        return float(val), {"sep_slack": float(space.norm(x - y) - est.eps),
                            "x_slack": float(1 - space.norm(x)), "y_slack": float(1 - space.norm(y))}
    if est.kind == "local":
        x, y = w["x"], w["y"]
        val = 1.0 - space.norm(0.5 * (x + y))
        return float(val), {"sep_slack": float(space.norm(x - y) - est.eps), "y_slack": float(1 - space.norm(y))}
    if est.kind == "midpoint":
        x, z = w["x"], w["z"]
        val = max(float(space.norm(x + z)), float(space.norm(x - z))) - 1.0
        return float(val), {"z_slack": float(space.norm(z) - est.eps)}
    if est.kind == "strong":
        x, y, xs = w["x"], w["y"], w["xstar"]
        val = 1.0 - float(space.pair(xs, y))
        return val, {"sep_slack": float(space.norm(y - x) - est.eps), "y_slack": float(1 - space.norm(y))}
    raise ModulusError(f"unknown estimate kind {est.kind!r}")


# -- certified lower bounds -----------------------------------------------------------------

DEFAULT_RESOLUTION = {1: 1, 2: 2048, 3: 24}


def _sphere_grid(D: int, n: int):
    """Euclidean unit-sphere grid points and per-point cell radius bound."""
    if D == 2:
        th = (np.arange(n) + 0.5) * 2 * np.pi / n
        U = np.stack([np.cos(th), np.sin(th)], axis=1)
        return U, np.full(n, np.pi / n)
    nt, nf = n, 2 * n
    th = (np.arange(nt) + 0.5) * np.pi / nt
    ph = (np.arange(nf) + 0.5) * 2 * np.pi / nf
    T, F = np.meshgrid(th, ph, indexing="ij")
    U = np.stack([np.sin(T) * np.cos(F), np.sin(T) * np.sin(F), np.cos(T)], axis=-1).reshape(-1, 3)
    r = math.hypot(np.pi / (2 * nt), np.pi / nf)
    return U, np.full(U.shape[0], r)


def certified_lower_bounds(space, eps_list: Sequence[float], resolution: int | None = None):
    """Certified lower bounds for ``delta_X`` at each eps, or ``None`` when ``dim > 3``.

    Sphere pairs suffice for ``dim >= 2``.  Around a grid pair ``(u, v)`` the
    radially projected points move by at most ``2 C r / ||u||`` in norm
    (Massera-Schaeffer, with ``||z|| <= C |z|_2``), which bounds both the
    objective change and the separation change inside the cell.
    """
    eps_arr = np.asarray(eps_list, dtype=float)
    D = space.dim
    if D == 1:
        return eps_arr / 2.0  # exact: delta(eps) = eps / 2 on a line
    if D > 3:
        return None
    n = resolution or DEFAULT_RESOLUTION[D]
    U, r = _sphere_grid(D, n)
    _, C = space.euclidean_bounds()
    nu = space.norm(U)
    X = U / nu[:, None]
    K = 2.0 * C * r / nu
    best = np.full(eps_arr.size, np.inf)
    rows = max(1, 2_000_000 // X.shape[0])
    for a in range(0, X.shape[0], rows):
        xa = X[a:a + rows, None, :]
        phi = 1.0 - space.norm(0.5 * (xa + X[None, :, :]))
        sep = space.norm(xa - X[None, :, :])
        kk = K[a:a + rows, None] + K[None, :]
        reach = sep + kk
        lb = phi - 0.5 * kk
        for j, e in enumerate(eps_arr):
            m = reach >= e
            if m.any():
                best[j] = min(best[j], float(lb[m].min()))
    best = np.where(np.isfinite(best), best, 1.0)
    return np.clip(best - 1e-13, 0.0, 1.0)


# -- pointwise moduli --------------------------------------------------------------------------

def local_modulus_estimate(space, x, eps: float, budget: int = 4000, seed: int = 0) -> Estimate:
    x = _check_unit(space, x)
    eps = float(eps)
    _check_eps(eps)

    def evaluate(P):
        return _local_pairs(space, x, P, eps)[0]

    cands = _run_search(evaluate, space.dim, budget, seed, "local", search.structured_directions(space.dim))
    val, X, y = _local_pairs(space, x, cands, eps)
    i = search.lex_argmin(val, np.nan_to_num(y, nan=np.inf))
    if not np.isfinite(val[i]):
        raise ModulusError("no feasible partner found")
    value = float(1.0 - space.norm(0.5 * (x + y[i])))
    return Estimate("local", eps, min(max(value, 0.0), 1.0), {"x": x, "y": y[i]}, budget, seed)


def midpoint_modulus_estimate(space, x, eps: float, budget: int = 4000, seed: int = 0) -> Estimate:
    x = _check_unit(space, x)
    eps = float(eps)
    if not eps > 0:
        raise ModulusError("eps must be positive")

    def evaluate(P):
        return _midpoint_dirs(space, x, P, eps)[0]

    cands = _run_search(evaluate, space.dim, budget, seed, "midpoint", search.structured_directions(space.dim))
    val, z = _midpoint_dirs(space, x, cands, eps)
    i = search.lex_argmin(val, z)
    value = max(float(space.norm(x + z[i])), float(space.norm(x - z[i]))) - 1.0
    return Estimate("midpoint", eps, max(value, 0.0), {"x": x, "z": z[i]}, budget, seed)


def strong_modulus_estimate(space, x, xstar, eps: float, budget: int = 4000, seed: int = 0) -> Estimate:
    x = _check_unit(space, x)
    xstar = np.asarray(xstar, dtype=float)
    eps = float(eps)
    _check_eps(eps)
    tol = DEFAULT_TOL.unit_input
    if abs(float(space.dual_norm(xstar)) - 1.0) > tol:
        raise ModulusError("xstar must have unit dual norm")
    if abs(float(space.pair(xstar, x)) - 1.0) > tol:
        raise ModulusError("xstar does not norm x")

    def evaluate(P):
        return _strong_pairs(space, x, xstar, P, eps)[0]

    cands = _run_search(evaluate, space.dim, budget, seed, "strong", search.structured_directions(space.dim))
    val, y = _strong_pairs(space, x, xstar, cands, eps)
    i = search.lex_argmin(val, np.nan_to_num(y, nan=np.inf))
    if not np.isfinite(val[i]):
        raise ModulusError("no feasible partner found")
    value = 1.0 - float(space.pair(xstar, y[i]))
    return Estimate("strong", eps, max(value, 0.0), {"x": x, "y": y[i], "xstar": xstar}, budget, seed)


# -- curves ---------------------------------------------------------------------------------------

@dataclass
class ModulusCurve:
    eps_grid: np.ndarray
    upper_estimates: np.ndarray
    certified_lower: np.ndarray | None = None
    witnesses_x: np.ndarray | None = None
    witnesses_y: np.ndarray | None = None
    budget: int = 0
    seed: int = 0
    label: str = ""
    precision: list = field(default_factory=list)

    def __post_init__(self):
        self.eps_grid = np.asarray(self.eps_grid, dtype=float)
        self.upper_estimates = np.asarray(self.upper_estimates, dtype=float)
        if self.certified_lower is not None:
            self.certified_lower = np.asarray(self.certified_lower, dtype=float)
        if np.any(np.diff(self.eps_grid) <= 0):
            raise ModulusError("eps_grid must be strictly increasing")

    @property
    def is_certified(self) -> bool:
        return self.certified_lower is not None

    def values(self, source: str = "lower") -> np.ndarray:
        if source == "upper":
            return self.upper_estimates
        if source == "certified":
            if self.certified_lower is None:
                raise ModulusError("curve carries no certified lower bounds")
            return self.certified_lower
        if source == "lower":
            return self.certified_lower if self.certified_lower is not None else self.upper_estimates
        raise ModulusError(f"unknown source {source!r}")

    def __call__(self, eps: float, source: str = "lower") -> float:
        """Piecewise-linear interpolant; 0 below the first grid point."""
        eps = float(eps)
        if eps < self.eps_grid[0]:
            return 0.0
        return float(np.interp(eps, self.eps_grid, self.values(source)))

    def step(self, eps: float, source: str = "lower") -> float:
        """Value at the largest grid point not above ``eps`` (0 below the grid).

        For a nondecreasing modulus this never exceeds the true value when the
        grid values are lower bounds, unlike linear interpolation.
        """
        i = int(np.searchsorted(self.eps_grid, float(eps), side="right")) - 1
        return 0.0 if i < 0 else float(self.values(source)[i])

    def csv_rows(self) -> list[dict]:
        rows = []
        for i, e in enumerate(self.eps_grid):
            rows.append({
                "eps": repr(float(e)),
                "upper": repr(float(self.upper_estimates[i])),
                "certified_lower": "" if self.certified_lower is None else repr(float(self.certified_lower[i])),
                "witness_x": "" if self.witnesses_x is None else " ".join(repr(float(v)) for v in self.witnesses_x[i]),
                "witness_y": "" if self.witnesses_y is None else " ".join(repr(float(v)) for v in self.witnesses_y[i]),
                "budget": str(self.budget),
                "seed": str(self.seed),
            })
        return rows

    @staticmethod
    def pointwise_min(curves: Sequence["ModulusCurve"], label: str = "") -> "ModulusCurve":
        grid = curves[0].eps_grid
        for c in curves[1:]:
            if not np.array_equal(c.eps_grid, grid):
                raise ModulusError("curves must share the eps grid")
        uppers = np.vstack([c.upper_estimates for c in curves])
        arg = np.argmin(uppers, axis=0)
        cols = np.arange(grid.size)
        lower = None
        if all(c.certified_lower is not None for c in curves):
            lower = np.min(np.vstack([c.certified_lower for c in curves]), axis=0)
        wx = wy = None
        if all(c.witnesses_x is not None for c in curves) and len({c.witnesses_x.shape[1] for c in curves}) == 1:
            wx = np.stack([c.witnesses_x for c in curves])[arg, cols]
            wy = np.stack([c.witnesses_y for c in curves])[arg, cols]
        return ModulusCurve(grid, uppers[arg, cols], lower, wx, wy, curves[0].budget, curves[0].seed, label)


def modulus_curve(space, eps_grid: Sequence[float], budget: int = 20000, seed: int = 0, *, certify: bool = True,
                  precision: int | str | None = None, resolution: int | None = None, label: str = "") -> ModulusCurve:
    """Global modulus over a grid, with monotone post-processing.

    ``delta`` is nondecreasing, so an upper estimate at a larger eps bounds all
    smaller ones (reverse cumulative minimum, the witness carries over), and a
    certified lower bound at a smaller eps bounds all larger ones (cumulative
    maximum).
    """
    grid = np.asarray(sorted(float(e) for e in eps_grid))
    ests = [global_modulus_estimate(space, e, budget, seed, precision=precision) for e in grid]
    up = np.array([e.value for e in ests])
    wx = np.array([np.asarray(e.witness["x"], dtype=float) for e in ests])
    wy = np.array([np.asarray(e.witness["y"], dtype=float) for e in ests])
    for i in range(len(grid) - 2, -1, -1):
        if up[i + 1] < up[i]:
            up[i], wx[i], wy[i] = up[i + 1], wx[i + 1], wy[i + 1]
    lower = None
    if certify:
        lower = certified_lower_bounds(space, grid, resolution)
        if lower is not None:
            lower = np.maximum.accumulate(np.minimum(lower, up + 0.0))
    return ModulusCurve(grid, up, lower, wx, wy, budget, seed, label, [e.precision for e in ests])


# -- high precision path ---------------------------------------------------------------------------

HP_SAMPLES = 192
HP_STARTS = 3


def _hp_pair(space, row: np.ndarray, eps):
    D = space.dim
    u = [mp.mpf(float(v)) for v in row[:D]]
    w = [mp.mpf(float(v)) for v in row[D:]]
    nu = space.norm_mp(u)
    if nu == 0:
        return None
    x = [a / nu for a in u]
    best = None
    xx = mp.fsum(a * a for a in x)
    coef = mp.fsum(a * b for a, b in zip(w, x)) / xx
    wp = [b - coef * a for a, b in zip(x, w)]
    nwp = mp.sqrt(mp.fsum(a * a for a in wp))
    if D >= 2 and nwp > mp.mpf(10) ** (-10) * mp.sqrt(mp.fsum(b * b for b in w)):
        t = eps / space.norm_mp(wp)
        for _ in range(12):
            z = [a + t * b for a, b in zip(x, wp)]
            nz = space.norm_mp(z)
            y = [a / nz for a in z]
            s = space.norm_mp([a - b for a, b in zip(x, y)])
            if s >= eps and s <= eps * (1 + mp.mpf(10) ** -6):
                break
            t = t * 2 if s == 0 else t * (eps / s) * (1 + mp.mpf(10) ** -9)
        if s >= eps:
            best = (1 - space.norm_mp([(a + b) / 2 for a, b in zip(x, y)]), x, y)
    nw = space.norm_mp(w)
    if nw > 0:
        yb = [a + eps * b / nw for a, b in zip(x, w)]
        if space.norm_mp(yb) <= 1:
            vb = 1 - space.norm_mp([(a + b) / 2 for a, b in zip(x, yb)])
            if best is None or vb < best[0]:
                best = (vb, x, yb)
    return best


def _hp_global(space, eps: float, budget: int, seed: int, digits: int, certify: bool, resolution):
    D = space.dim
    rng = search.chunk_rng(seed, "hp-global", 0)
    rows = np.vstack([_seed_pairs(D, eps), rng.standard_normal((min(budget, HP_SAMPLES), 2 * D))])
    with mp.workdps(digits):
        em = mp.mpf(eps)

        def evaluate(P):
            out = np.full(P.shape[0], np.inf)
            for i, row in enumerate(P):
                r = _hp_pair(space, row, em)
                if r is not None:
                    out[i] = float(r[0])
            return out

        vals = evaluate(rows)
        starts = rows[search.top_k(vals, HP_STARTS)]
        refined, _ = search.pattern_search(evaluate, starts, step0=0.1, min_step=1e-6, max_iter=60)
        cands = np.vstack([rows[search.top_k(vals, 1)], refined])
        results = [_hp_pair(space, row, em) for row in cands]
        results = [r for r in results if r is not None]
        if not results:
            raise ModulusError("no feasible pair found at high precision")
        val, x, y = min(results, key=lambda r: r[0])
        if val < mp.mpf(10) ** (-(digits - 20)) and digits < 2000:
            return _hp_global(space, eps, budget, seed, 2 * digits, certify, resolution)
        witness = {
            "x": np.array([float(a) for a in x]),
            "y": np.array([float(a) for a in y]),
            "x_mp": [mp.nstr(a, digits) for a in x],
            "y_mp": [mp.nstr(a, digits) for a in y],
        }
        value = float(max(val, 0))
    lower = None
    if certify:
        cl = certified_lower_bounds(space, [eps], resolution)
        lower = None if cl is None else float(cl[0])
    return Estimate("global", eps, value, witness, budget, seed, lower, digits)
