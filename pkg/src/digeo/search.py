"""Seeded multistart search machinery shared by the estimators.

Sampling is split into chunks of geometrically growing size (256, 512, ...).
Chunk ``k`` draws from its own generator ``default_rng([seed, tag, k])``, so a
larger budget always explores a superset of the samples of a smaller one, and
only *full* chunks contribute refinement starts.  Together this makes reported
minima nonincreasing in the budget.
"""

from __future__ import annotations

import zlib
from typing import Callable, Iterator

import numpy as np

FIRST_CHUNK = 256
STARTS_PER_CHUNK = 8
BISECT_ITERS = 48


def tag_id(tag: str) -> int:
    return zlib.crc32(tag.encode())


def chunk_plan(budget: int) -> Iterator[tuple[int, int, bool]]:
    """Yield ``(index, size, is_full)`` covering exactly ``budget`` samples."""
    done, k = 0, 0
    while done < budget:
        full = FIRST_CHUNK << k
        size = min(full, budget - done)
        yield k, size, size == full
        done += size
        k += 1


def chunk_rng(seed: int, tag: str, k: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), tag_id(tag), k])


def lex_argmin(values: np.ndarray, witnesses: np.ndarray) -> int:
    """Index of the smallest value; ties go to the lexicographically smallest witness row."""
    values = np.asarray(values)
    best = np.min(values)
    idx = np.flatnonzero(values == best)
    if idx.size == 1:
        return int(idx[0])
    rows = witnesses[idx]
    order = np.lexsort(rows.T[::-1])
    return int(idx[order[0]])


def top_k(values: np.ndarray, k: int) -> np.ndarray:
    finite = np.flatnonzero(np.isfinite(values))
    if finite.size == 0:
        return finite
    order = np.argsort(values[finite], kind="stable")
    return finite[order[:k]]


# -- sphere paths -----------------------------------------------------------------

def unit(space, u: np.ndarray) -> np.ndarray:
    n = space.norm(u)
    with np.errstate(divide="ignore", invalid="ignore"):
        return u / n[:, None]


def perpendicular(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Euclidean component of ``w`` orthogonal to ``x``, rescaled to ``|x|_2``.

    Rows where ``w`` is (numerically) parallel to ``x`` come back as NaN.
    """
    xx = np.sum(x * x, axis=1)
    wp = w - (np.sum(w * x, axis=1) / xx)[:, None] * x
    n = np.sqrt(np.sum(wp * wp, axis=1))
    bad = n <= 1e-10 * np.sqrt(np.sum(w * w, axis=1))
    with np.errstate(divide="ignore", invalid="ignore"):
        wp = wp * (np.sqrt(xx) / n)[:, None]
    wp[bad] = np.nan
    return wp


def path_point(space, x: np.ndarray, wp: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Point at parameter ``t`` on the sphere path from ``x`` (t=0) to ``-x`` (t=1)."""
    ang = np.pi * t
    z = np.cos(ang)[:, None] * x + np.sin(ang)[:, None] * wp
    return unit(space, z)


def bisect_path(space, x, wp, pred: Callable[[np.ndarray], np.ndarray], iters: int = BISECT_ITERS):
    """Bisect ``t`` for a switch of ``pred`` along the path; returns ``(t_lo, t_hi)``.

    ``pred`` is assumed false at ``t = 0`` and true at ``t = 1``; ``t_hi`` always
    satisfies it unless it is false at the endpoint as well.
    """
    n = x.shape[0]
    lo = np.zeros(n)
    hi = np.ones(n)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        ok = pred(path_point(space, x, wp, mid))
        hi = np.where(ok, mid, hi)
        lo = np.where(ok, lo, mid)
    return lo, hi


# -- pattern search ------------------------------------------------------------------

def pattern_search(
    evaluate: Callable[[np.ndarray], np.ndarray],
    starts: np.ndarray,
    step0: float = 0.25,
    min_step: float = 1e-10,
    max_iter: int = 400,
) -> tuple[np.ndarray, np.ndarray]:
    """Batched compass search minimising ``evaluate`` from every start.

    Each iteration tries ``+-step`` along every coordinate, keeps the best
    strict improvement, otherwise halves the step.  Starts are independent of
    one another, so the result for a start does not depend on its batch mates.
    """
    P = np.array(starts, dtype=float)
    if P.size == 0:
        return P, np.empty(0)
    S, n = P.shape
    vals = evaluate(P)
    step = np.full(S, step0)
    dirs = np.vstack([np.eye(n), -np.eye(n)])
    for _ in range(max_iter):
        active = np.flatnonzero((step >= min_step) & np.isfinite(vals))
        if active.size == 0:
            break
        cand = P[active, None, :] + step[active, None, None] * dirs[None, :, :]
        cv = evaluate(cand.reshape(-1, n)).reshape(active.size, 2 * n)
        cv = np.where(np.isnan(cv), np.inf, cv)
        j = np.argmin(cv, axis=1)
        best = cv[np.arange(active.size), j]
        better = best < vals[active]
        moved = active[better]
        P[moved] = cand[better, j[better]]
        vals[moved] = best[better]
        step[active[~better]] *= 0.5
    return P, vals


def structured_pairs(dim: int) -> np.ndarray:
    """Deterministic (u, w) seeds built from coordinate directions."""
    eye = np.eye(dim)
    rows = []
    for i in range(dim):
        for j in range(dim):
            if i != j:
                rows.append(np.concatenate([eye[i], eye[j]]))
                rows.append(np.concatenate([eye[i] + eye[j], eye[i] - eye[j]]))
    if not rows:
        rows.append(np.concatenate([eye[0], eye[0]]))
    return np.array(rows)


def structured_directions(dim: int) -> np.ndarray:
    eye = np.eye(dim)
    rows = list(eye) + list(-eye)
    for i in range(dim):
        for j in range(i + 1, dim):
            rows.append(eye[i] + eye[j])
            rows.append(eye[i] - eye[j])
    return np.array(rows)
