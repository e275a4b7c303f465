"""Searches for failures of strict, pointwise and strong convexity.

Every suite returns a :class:`PropertyVerdict`.  A failing verdict stores the
offending vectors together with the violated quantity, and
:func:`revalidate` recomputes that quantity from the stored vectors alone.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from . import search
from .config import DEFAULT_TOL, Tolerances
from .direct_integral import DirectIntegralSpace, construct_norming_functional
from .modulus import local_modulus_estimate, midpoint_modulus_estimate
from .spaces import INF, SpaceError, sphere_sample
from .verdict import PropertyVerdict

HUDZIK_PROPERTIES = {
    "extreme": "HUDZIK_EXTREME",
    "strongly_extreme": "HUDZIK_STRONG_EXTREME",
    "LUR": "HUDZIK_LUR",
}
# Radii / scales at which the pointwise conditions are probed.  Kept away from 0
# so that moduli of order eps^4 still clear the positivity tolerance.
HUDZIK_SCALES = (0.05, 0.1, 0.25, 0.5, 1.0)
STRONG_EPS = (0.25, 0.5, 1.0, 1.5, 2.0)
STRONG_STARTS = 32  # the pairing has local maxima on the separation sphere
ZERO_BLOCK_CENTERS = 3


# -- strict convexity -------------------------------------------------------------------

def _sc_pairs(space, P: np.ndarray, sep_floor: float):
    D = space.dim
    with np.errstate(all="ignore"):
        x = search.unit(space, P[:, :D])
        y = np.full_like(x, np.nan)
        if D >= 2:
            wp = search.perpendicular(x, P[:, D:])
            ok = np.all(np.isfinite(x), axis=1) & np.all(np.isfinite(wp), axis=1)
            if ok.any():
                xo, wo = x[ok], wp[ok]
                _, hi = search.bisect_path(space, xo, wo, lambda yy: space.norm(xo - yy) >= sep_floor)
                y[ok] = search.path_point(space, xo, wo, hi)
        else:
            y = -x
        s = space.norm(x + y)
        feas = space.norm(x - y) >= sep_floor
    s = np.where(feas & np.isfinite(s), s, -np.inf)
    return s, x, y


def sc_search(space, budget: int = 20000, seed: int = 0, sep_floor: float = 1e-3,
              tol: Tolerances = DEFAULT_TOL) -> PropertyVerdict:
    """Look for unit ``x, y`` with ``||x - y|| >= sep_floor`` and ``||x + y|| >= 2 - tol``.

    ``y`` is taken at the first point of a great-circle-like path from ``x``
    that reaches the required separation; ``||x + y||`` is maximised by
    sampling and pattern search.  A modulus below ``sc_gap / 2`` at
    ``sep_floor`` is indistinguishable from a flat segment at this resolution.
    """
    if sep_floor <= 0:
        raise ValueError("sep_floor must be positive")
    D = space.dim

    def evaluate(P):
        return -_sc_pairs(space, P, sep_floor)[0]

    starts, cands = [], [search.structured_pairs(D)]
    for k, size, full in search.chunk_plan(budget):
        rng = search.chunk_rng(seed, "sc", k)
        P = rng.standard_normal((size, 2 * D))
        vals = evaluate(P)
        cands.append(P[search.top_k(vals, 1)])
        if full:
            starts.append(P[search.top_k(vals, search.STARTS_PER_CHUNK)])
    starts.append(cands[0])
    refined, _ = search.pattern_search(evaluate, np.vstack(starts), max_iter=300)
    cands.append(refined)
    C = np.vstack(cands)
    s, x, y = _sc_pairs(space, C, sep_floor)
    i = search.lex_argmin(-s, np.nan_to_num(np.hstack([x, y]), nan=np.inf))
    wx, wy = x[i], y[i]
    best = float(space.norm(wx + wy))
    threshold = 2.0 - tol.sc_gap
    tols = {"sc_gap": tol.sc_gap, "sep_floor": sep_floor}
    details = {"max_sum_norm": best, "separation": float(space.norm(wx - wy)), "threshold": threshold}
    margin = threshold - best
    if best >= threshold:
        return PropertyVerdict("SC", "fail", margin, {"x": wx, "y": wy}, budget, seed, tols,
                               {**details, "violation_value": best})
    return PropertyVerdict("SC", "pass", margin, {"x": wx, "y": wy}, budget, seed, tols, details)


# -- Hudzik point conditions ----------------------------------------------------------------

def _centers(Y: DirectIntegralSpace, f: np.ndarray, seed: int):
    """Per-atom unit centres: ``f_i / ||f_i||`` or sampled ones for zero blocks."""
    out = []
    for i, (X, b) in enumerate(zip(Y.fibers, Y.blocks(f))):
        nb = float(X.norm(b))
        if nb > 0:
            out.append((i, b / nb, False))
        else:
            for c in sphere_sample(X, [int(seed), search.tag_id("zero-block"), i], ZERO_BLOCK_CENTERS):
                out.append((i, c, True))
    return out


def _segment_defect(X, c: np.ndarray, Z: np.ndarray) -> np.ndarray:
    return np.maximum(np.abs(X.norm(c + Z) - 1.0), np.abs(X.norm(c - Z) - 1.0))


def _extreme_search(X, c: np.ndarray, rho: float, budget: int, seed: int, tag: str):
    def evaluate(P):
        with np.errstate(all="ignore"):
            Z = rho * search.unit(X, P)
            v = _segment_defect(X, c, Z)
        return np.where(np.isfinite(v), v, np.inf)

    starts, cands = [], [search.structured_directions(X.dim)]
    for k, size, full in search.chunk_plan(budget):
        P = search.chunk_rng(seed, tag, k).standard_normal((size, X.dim))
        vals = evaluate(P)
        cands.append(P[search.top_k(vals, 1)])
        if full:
            starts.append(P[search.top_k(vals, search.STARTS_PER_CHUNK)])
    starts.append(cands[0])
    refined, _ = search.pattern_search(evaluate, np.vstack(starts), max_iter=300)
    cands.append(refined)
    C = np.vstack(cands)
    Z = rho * search.unit(X, C)
    v = _segment_defect(X, c, Z)
    v = np.where(np.isfinite(v), v, np.inf)
    i = search.lex_argmin(v, Z)
    return float(_segment_defect(X, c, Z[i:i + 1])[0]), Z[i]


def hudzik_point_check(Y: DirectIntegralSpace, f, prop: str, budget: int = 20000, seed: int = 0,
                       scales: Sequence[float] = HUDZIK_SCALES, tol: Tolerances = DEFAULT_TOL) -> PropertyVerdict:
    """Pointwise condition on ``S(f)(s) = ||f(s)||_s`` at ``f``, atom by atom.

    * ``extreme``: no ``z != 0`` with ``||c +- z|| = 1`` (searched on spheres of radius ``rho``)
    * ``strongly_extreme``: positive midpoint modulus at ``c``
    * ``LUR``: positive local modulus at ``c``

    where ``c`` runs over the normalised nonzero blocks of ``f`` and over
    sampled unit centres for zero blocks.
    """
    if prop not in HUDZIK_PROPERTIES:
        raise ValueError(f"property must be one of {sorted(HUDZIK_PROPERTIES)}")
    tag = HUDZIK_PROPERTIES[prop]
    f = Y.flatten(f)
    centers = _centers(Y, f, seed)
    per = max(search.FIRST_CHUNK, budget // max(1, len(centers) * len(scales)))
    tols = {"positivity": tol.positivity}
    rows = []
    worst = None
    for i, c, sampled in centers:
        X = Y.fibers[i]
        for rho in scales:
            if prop == "extreme":
                val, z = _extreme_search(X, c, rho, per, seed, f"extreme-{i}")
                wit = {"atom": i, "center": c, "z": z}
            elif prop == "strongly_extreme":
                est = midpoint_modulus_estimate(X, c, rho, per, seed)
                val, wit = est.value, {"atom": i, "center": c, "z": est.witness["z"]}
            else:
                if rho > 2:
                    continue
                est = local_modulus_estimate(X, c, rho, per, seed)
                val, wit = est.value, {"atom": i, "center": c, "y": est.witness["y"]}
            rows.append({"atom": i, "sampled_center": sampled, "scale": rho, "value": val})
            if worst is None or val < worst[0]:
                worst = (val, wit, rho)
    margin = worst[0] - tol.positivity
    details = {"rows": rows, "scale_at_min": worst[2]}
    if worst[0] <= tol.positivity:
        return PropertyVerdict(tag, "fail", margin, worst[1], budget, seed, tols,
                               {**details, "violation_value": worst[0]})
    return PropertyVerdict(tag, "pass", margin, None, budget, seed, tols, details)


# -- strong convexity -------------------------------------------------------------------------

def _boundary_point(Y, f, D_dirs, eps, iters: int = 60):
    """``g = r(f + s d)`` with ``||g - f|| = eps`` (NaN where the ray never gets that far)."""
    def point(s):
        with np.errstate(all="ignore"):
            return search.unit(Y, f[None, :] + s[:, None] * D_dirs)

    eps = eps - 1e-12  # the antipode sits at separation 2 only up to rounding
    n = D_dirs.shape[0]
    far = point(np.full(n, 1e12))
    reach = Y.norm(far - f) >= eps
    lo, hi = np.zeros(n), np.full(n, 2.0)
    # grow until the separation is reached
    for _ in range(50):
        short = reach & (Y.norm(point(hi) - f) < eps)
        if not short.any():
            break
        hi = np.where(short, hi * 4, hi)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        ok = Y.norm(point(mid) - f) >= eps
        hi = np.where(ok, mid, hi)
        lo = np.where(ok, lo, mid)
    g = point(hi)
    g[~reach] = np.nan
    return g


def _two_level_directions(Y: DirectIntegralSpace, f: np.ndarray, rng, n: int) -> np.ndarray:
    """Directions ``g - f`` for ``g`` drawn as a random profile times random fiber directions."""
    prof = np.abs(rng.standard_normal((n, Y.n_atoms)))
    prof[rng.uniform(size=prof.shape) < 0.25] = 0.0
    prof[np.all(prof == 0, axis=1), 0] = 1.0
    prof /= Y.E.norm(prof)[:, None]
    G = np.empty((n, Y.dim))
    for i, X in enumerate(Y.fibers):
        a, b = Y.offsets[i], Y.offsets[i + 1]
        G[:, a:b] = prof[:, i:i + 1] * search.unit(X, rng.standard_normal((n, X.dim)))
    return G - f


def strong_convexity_check(Y: DirectIntegralSpace, f, budget: int = 20000, seed: int = 0,
                           eps_grid: Sequence[float] = STRONG_EPS, tol: Tolerances = DEFAULT_TOL) -> PropertyVerdict:
    """Quantified strong convexity at a unit ``f``.

    With ``F`` the norming functional of ``f``, for each ``eps`` the largest
    ``<F, g>`` over unit ``g`` with ``||g - f|| >= eps`` is searched; the
    margin ``1 - max <F, g>`` must be positive.  At the best ``g`` the margin
    splits as (alignment defect) + (Hölder gap of the profiles), both
    nonnegative:

        1 - <F, g> = sum_i mu_i (||F_i|| ||g_i|| - <F_i, g_i>) + (1 - sum_i mu_i ||F_i|| ||g_i||)
    """
    f = Y.flatten(f)
    nf = float(Y.norm(f))
    if abs(nf - 1.0) > tol.unit_input:
        raise SpaceError(f"f must be a unit vector (norm {nf!r})")
    if Y.E.p in (1.0, INF):
        raise SpaceError("strong convexity check needs 1 < p < inf for the lattice")
    F = construct_norming_functional(Y, f, tol)
    mu = Y.E.mu
    rows = []
    worst = None
    per_eps = max(search.FIRST_CHUNK, budget // len(eps_grid))
    for j, eps in enumerate(eps_grid):
        eps = float(eps)
        rng = np.random.default_rng([int(seed), search.tag_id("strong-check"), j])
        dirs = [_two_level_directions(Y, f, rng, per_eps // 2), rng.standard_normal((per_eps - per_eps // 2, Y.dim)),
                -f[None, :]]
        Dd = np.vstack(dirs)
        G = _boundary_point(Y, f, Dd, eps)
        vals = np.where(np.all(np.isfinite(G), axis=1), Y.pair(F, np.nan_to_num(G)), -np.inf)
        order = search.top_k(-vals, STRONG_STARTS)

        def neg_batch(P):
            G = _boundary_point(Y, f, P, eps, iters=48)
            v = -Y.pair(F, np.nan_to_num(G))
            return np.where(np.all(np.isfinite(G), axis=1), v, np.inf)

        P, pv = search.pattern_search(neg_batch, Dd[order], step0=0.1, min_step=1e-9, max_iter=200)
        k = int(np.argmin(pv))
        best_d, best_v = (P[k], -pv[k]) if -pv[k] > vals[order[0]] else (Dd[order[0]], vals[order[0]])

        g = _boundary_point(Y, f, best_d[None, :], eps)[0]
        value = float(Y.pair(F, g))
        margin = 1.0 - value
        dn = Y.block_dual_norms(F)
        gn = Y.block_norms(g)
        inner = np.array([float(np.dot(a, b)) for a, b in zip(Y.blocks(F), Y.blocks(g))])
        align = float(np.sum(mu * (dn * gn - inner)))
        holder = float(1.0 - np.sum(mu * dn * gn))
        row = {"eps": eps, "max_pairing": value, "margin": margin, "alignment_defect": align,
               "holder_gap": holder, "separation": float(Y.norm(g - f)),
               "identity_residual": abs(align + holder - margin)}
        rows.append(row)
        if worst is None or margin < worst[0]:
            worst = (margin, g, eps)
    tols = {"positivity": tol.positivity}
    details = {"rows": rows, "F": F, "label": "strong (hence very) convexity at f"}
    facts_ok = all(r["alignment_defect"] >= -tol.norming and r["holder_gap"] >= -tol.norming
                   and r["identity_residual"] <= tol.norming for r in rows)
    details["decomposition_ok"] = facts_ok
    if worst[0] <= tol.positivity:
        return PropertyVerdict("STRONG", "fail", worst[0] - tol.positivity, {"f": f, "g": worst[1], "F": F},
                               budget, seed, tols, {**details, "violation_value": 1.0 - worst[0],
                                                    "eps": worst[2]})
    status = "pass" if facts_ok else "fail"
    return PropertyVerdict("STRONG", status, worst[0] - tol.positivity, None, budget, seed, tols, details)


# -- witness re-validation -----------------------------------------------------------------------

def revalidate(space, verdict: PropertyVerdict, tol: Tolerances = DEFAULT_TOL) -> tuple[bool, float]:
    """Recompute a failing verdict's violated quantity from its witness.

    Returns ``(still_violated, |recomputed - stored|)``.
    """
    if not verdict.failed or verdict.witness is None:
        raise ValueError("only failing verdicts with a witness can be re-validated")
    w = {k: (np.asarray(v, dtype=float) if not isinstance(v, int) else v) for k, v in verdict.witness.items()}
    d = verdict.details
    tag = verdict.property
    if tag == "SC":
        val = float(space.norm(w["x"] + w["y"]))
        ok = (val >= 2 - verdict.tolerances["sc_gap"]
              and float(space.norm(w["x"] - w["y"])) >= verdict.tolerances["sep_floor"] - tol.feasibility)
        return ok, abs(val - d["violation_value"])
    if tag in ("HUDZIK_EXTREME", "HUDZIK_STRONG_EXTREME", "HUDZIK_LUR"):
        X = space.fibers[int(w["atom"])]
        c = w["center"]
        if tag == "HUDZIK_EXTREME":
            val = float(_segment_defect(X, c, w["z"][None, :])[0])
        elif tag == "HUDZIK_STRONG_EXTREME":
            val = max(float(X.norm(c + w["z"])), float(X.norm(c - w["z"]))) - 1.0
        else:
            val = 1.0 - float(X.norm(0.5 * (c + w["y"])))
        return val <= tol.positivity, abs(val - d["violation_value"])
    if tag == "STRONG":
        val = float(space.pair(w["F"], w["g"]))
        ok = val >= 1 - tol.positivity and float(space.norm(w["g"] - w["f"])) >= d["eps"] - tol.feasibility
        return ok, abs(val - d["violation_value"])
    if tag == "UC":
        plus = float(space.norm(w["f"] + w["g"]))
        minus = float(space.norm(w["f"] - w["g"]))
        if d.get("violated") == "modulus":
            val = 1.0 - plus / 2
            return val < d["tau"] - verdict.tolerances["modulus"], abs(val - d["delta_Y_upper"])
        return plus > 2 * (1 - d["tau"]) and minus > d["limit"] + verdict.tolerances["separation"], \
            abs(minus - d["max_separation"])
    if tag == "DUALITY_ISOMETRY":
        val = float(space.pair(w["F"], w["f"]))
        closed = float(space.dual_norm(w["F"]))
        over = val - closed
        ok = over > verdict.tolerances["holder"] or over < -verdict.tolerances["gap"]
        return ok, abs(val - d["sup_found"])
    if tag == "LATTICE":
        nf, ng = float(space.norm(w["f"])), float(space.norm(w["g"]))
        return ng - nf > tol.lattice, abs(ng - d["norm_g"])
    raise ValueError(f"no re-validation rule for {tag}")
