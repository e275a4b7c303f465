"""Finite-dimensional normed spaces.

A fiber is described by a :class:`NormSpec`, one of three closed families:

* ``weighted_p``: ``||x|| = (sum_i w_i |x_i|^p)^(1/p)``, or ``max_i w_i |x_i|``
  for ``p = inf``;
* ``polyhedral``: ``||x|| = max_i |<a_i, x>|`` for a full-rank matrix of
  functionals;
* ``ellipsoid``: ``||x|| = sqrt(x^T Q x)`` for a positive definite ``Q``.

Keeping the family closed (no user callbacks) is what makes dual norms,
norming functionals and norm-equivalence constants computable.

All functions accept batches: the last axis is the coordinate axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import mpmath as mp
import numpy as np
from scipy.optimize import linprog

INF = math.inf
FAMILIES = ("weighted_p", "polyhedral", "ellipsoid")


class SpaceError(ValueError):
    """Invalid space descriptor or incompatible input."""


class DimensionMismatch(SpaceError):
    pass


def _as_vector(x, dim: int, name: str = "x") -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.shape[-1:] != (dim,):
        raise DimensionMismatch(f"{name} has trailing dimension {arr.shape[-1:]} but the space has dim {dim}")
    if not np.all(np.isfinite(arr)):
        raise SpaceError(f"{name} has non-finite coordinates")
    return arr


def _parse_p(p) -> float:
    if isinstance(p, str):
        if p.lower() in ("inf", "infinity"):
            return INF
        p = float(p)
    return float(p)


@dataclass(frozen=True)
class MeasureSpace:
    """Finite atomic measure space; ``weights[i]`` is the mass of atom ``i``."""

    weights: tuple[float, ...]

    def __post_init__(self):
        w = tuple(float(v) for v in self.weights)
        if len(w) < 1:
            raise SpaceError("a measure space needs at least one atom")
        if not all(math.isfinite(v) and v > 0 for v in w):
            raise SpaceError("weights must be strictly positive")
        object.__setattr__(self, "weights", w)

    @property
    def n_atoms(self) -> int:
        return len(self.weights)

    @property
    def mu(self) -> np.ndarray:
        return np.asarray(self.weights)

    @classmethod
    def counting(cls, n: int) -> "MeasureSpace":
        return cls((1.0,) * n)


@dataclass(frozen=True, eq=False)
class NormSpec:
    family: str
    dim: int
    p: float = 2.0
    weights: np.ndarray | None = field(default=None, repr=False)
    functionals: np.ndarray | None = field(default=None, repr=False)
    form: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise SpaceError(f"family must be one of {FAMILIES}, got {self.family!r}")
        if int(self.dim) < 1:
            raise SpaceError("dim must be >= 1")
        object.__setattr__(self, "dim", int(self.dim))
        if self.family == "weighted_p":
            p = _parse_p(self.p)
            if not (p >= 1):
                raise SpaceError(f"p must satisfy p >= 1 (or 'inf'), got {p}")
            w = np.ones(self.dim) if self.weights is None else np.asarray(self.weights, dtype=float)
            if w.shape != (self.dim,):
                raise SpaceError(f"weights has length {w.size}, expected dim={self.dim}")
            if not np.all(np.isfinite(w) & (w > 0)):
                raise SpaceError("weights must be strictly positive")
            object.__setattr__(self, "p", p)
            object.__setattr__(self, "weights", _frozen(w))
        elif self.family == "polyhedral":
            a = np.atleast_2d(np.asarray(self.functionals, dtype=float))
            if a.shape[1] != self.dim:
                raise SpaceError(f"functionals have {a.shape[1]} columns, expected dim={self.dim}")
            if not np.all(np.isfinite(a)):
                raise SpaceError("functionals must be finite")
            if np.linalg.matrix_rank(a) < self.dim:
                raise SpaceError("functionals must have full rank (otherwise the gauge vanishes off the origin)")
            object.__setattr__(self, "functionals", _frozen(a))
            object.__setattr__(self, "p", INF)
        else:
            q = np.asarray(self.form, dtype=float)
            if q.shape != (self.dim, self.dim):
                raise SpaceError(f"form must be {self.dim}x{self.dim}")
            if not np.allclose(q, q.T, rtol=0, atol=1e-12 * max(1.0, np.abs(q).max())):
                raise SpaceError("form must be symmetric")
            q = 0.5 * (q + q.T)
            try:
                np.linalg.cholesky(q)
            except np.linalg.LinAlgError:
                raise SpaceError("form must be positive definite") from None
            object.__setattr__(self, "form", _frozen(q))
            object.__setattr__(self, "_form_inv", _frozen(np.linalg.inv(q)))
            object.__setattr__(self, "p", 2.0)

    @classmethod
    def unchecked(cls, family: str, dim: int, **fields) -> "NormSpec":
        """Build a descriptor without validation (test fixtures for broken gauges)."""
        obj = object.__new__(cls)
        values = {"p": 2.0, "weights": None, "functionals": None, "form": None, **fields}
        object.__setattr__(obj, "family", family)
        object.__setattr__(obj, "dim", int(dim))
        for key, val in values.items():
            if key == "p":
                val = _parse_p(val)
            elif val is not None:
                val = np.asarray(val, dtype=float)
            object.__setattr__(obj, key, val)
        if family == "ellipsoid":
            object.__setattr__(obj, "_form_inv", np.linalg.inv(obj.form))
        return obj

    # -- evaluation -------------------------------------------------------

    def norm(self, x) -> np.ndarray | float:
        x = np.asarray(x, dtype=float)
        if self.family == "weighted_p":
            p, w = self.p, self.weights
            ax = np.abs(x)
            if p == INF:
                return np.max(w * ax, axis=-1)
            if p == 1:
                return np.sum(w * ax, axis=-1)
            if p == 2:
                return np.sqrt(np.sum(w * (x * x), axis=-1))
            return np.sum(w * ax**p, axis=-1) ** (1.0 / p)
        if self.family == "polyhedral":
            return np.max(np.abs(np.einsum("...j,ij->...i", x, self.functionals)), axis=-1)
        q = self.form
        val = np.einsum("...i,ij,...j->...", x, q, x)
        return np.sqrt(np.maximum(val, 0.0))

    def pair(self, phi, x):
        """Duality pairing; plain dot product on ``R^d``."""
        return np.sum(np.asarray(phi) * np.asarray(x), axis=-1)

    def dual_norm(self, phi) -> float:
        phi = np.asarray(phi, dtype=float)
        if self.family == "weighted_p":
            return self.dual_spec().norm(phi)
        if self.family == "ellipsoid":
            val = np.einsum("...i,ij,...j->...", phi, self._form_inv, phi)
            return np.sqrt(np.maximum(val, 0.0))
        if phi.ndim > 1:
            return np.array([self.dual_norm(row) for row in phi.reshape(-1, self.dim)]).reshape(phi.shape[:-1])
        if not np.any(phi):
            return 0.0
        return float(np.dot(phi, self._polyhedral_argmax(phi)))

    def dual_spec(self) -> "NormSpec":
        """Dual of a weighted_p space, again a weighted_p space."""
        if self.family != "weighted_p":
            raise SpaceError("closed-form dual descriptor exists only for weighted_p")
        p, w = self.p, self.weights
        if p == INF:
            return NormSpec("weighted_p", self.dim, 1.0, 1.0 / w)
        if p == 1:
            return NormSpec("weighted_p", self.dim, INF, 1.0 / w)
        q = p / (p - 1.0)
        return NormSpec("weighted_p", self.dim, q, w ** (1.0 - q))

    def norming_functional(self, x) -> np.ndarray:
        """Unit dual vector ``x*`` with ``<x*, x> = ||x||`` (ties: first index)."""
        x = _as_vector(x, self.dim)
        nx = float(self.norm(x))
        if nx == 0.0:
            e = np.zeros(self.dim)
            e[0] = 1.0
            return self.norming_functional(e)
        if self.family == "weighted_p":
            p, w = self.p, self.weights
            if p == INF:
                i = int(np.argmax(w * np.abs(x)))
                phi = np.zeros(self.dim)
                phi[i] = np.sign(x[i]) * w[i]
                return phi
            if p == 1:
                return w * np.sign(x)
            u = x / nx
            return w * np.sign(u) * np.abs(u) ** (p - 1.0)
        if self.family == "polyhedral":
            vals = self.functionals @ x
            i = int(np.argmax(np.abs(vals)))
            return np.sign(vals[i]) * self.functionals[i]
        return self.form @ x / nx

    def dual_maximizer(self, phi) -> np.ndarray:
        """Unit vector ``x`` attaining ``<phi, x> = ||phi||_*``."""
        phi = _as_vector(phi, self.dim, "phi")
        if not np.any(phi):
            e = np.zeros(self.dim)
            e[0] = 1.0
            return radial_project(self, e)
        if self.family == "weighted_p":
            p, w = self.p, self.weights
            if p == INF:
                return np.where(phi >= 0, 1.0, -1.0) / w
            if p == 1:
                r = np.abs(phi) / w
                i = int(np.argmax(r))
                x = np.zeros(self.dim)
                x[i] = np.sign(phi[i]) / w[i]
                return x
            q = p / (p - 1.0)
            v = phi * w ** (-1.0 / p)
            u = np.sign(v) * (np.abs(v) / np.sum(np.abs(v) ** q) ** (1.0 / q)) ** (q - 1.0)
            return radial_project(self, u * w ** (-1.0 / p))
        if self.family == "ellipsoid":
            return radial_project(self, self._form_inv @ phi)
        return self._polyhedral_argmax(phi)

    def _polyhedral_argmax(self, phi: np.ndarray) -> np.ndarray:
        a = self.functionals
        a_ub = np.vstack([a, -a])
        b_ub = np.ones(2 * a.shape[0])
        res = linprog(-phi, A_ub=a_ub, b_ub=b_ub, bounds=[(None, None)] * self.dim, method="highs")
        if res.status != 0:
            raise SpaceError(f"dual-norm linear program failed: {res.message}")
        return np.asarray(res.x)

    def euclidean_bounds(self) -> tuple[float, float]:
        """Constants ``(c, C)`` with ``c |z|_2 <= ||z|| <= C |z|_2``.

        These are safe bounds, not necessarily sharp.
        """
        d = self.dim
        if self.family == "weighted_p":
            p, w = self.p, self.weights
            if p == INF:
                return float(w.min()) / math.sqrt(d), float(w.max())
            lo = w.min() ** (1 / p) * min(1.0, d ** (1 / p - 0.5))
            hi = w.max() ** (1 / p) * max(1.0, d ** (1 / p - 0.5))
            return float(lo), float(hi)
        if self.family == "ellipsoid":
            ev = np.linalg.eigvalsh(self.form)
            return float(math.sqrt(ev.min())), float(math.sqrt(ev.max()))
        a = self.functionals
        sv = np.linalg.svd(a, compute_uv=False)
        return float(sv.min() / math.sqrt(a.shape[0])), float(np.linalg.norm(a, axis=1).max())

    def norm_mp(self, x: Sequence) -> mp.mpf:
        """Norm at the current mpmath working precision."""
        if self.family == "weighted_p":
            p = self.p
            w = [mp.mpf(float(v)) for v in self.weights]
            if p == INF:
                return max(wi * abs(xi) for wi, xi in zip(w, x))
            if p == 2:
                return mp.sqrt(mp.fsum(wi * xi * xi for wi, xi in zip(w, x)))
            pm = mp.mpf(p)
            return mp.fsum(wi * abs(xi) ** pm for wi, xi in zip(w, x)) ** (1 / pm)
        if self.family == "polyhedral":
            return max(abs(mp.fsum(mp.mpf(float(a)) * xi for a, xi in zip(row, x))) for row in self.functionals)
        q = self.form
        return mp.sqrt(
            mp.fsum(mp.mpf(float(q[i, j])) * x[i] * x[j] for i in range(self.dim) for j in range(self.dim))
        )

    def pair_mp(self, phi, x):
        return mp.fsum(a * b for a, b in zip(phi, x))

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        out: dict = {"family": self.family, "dim": self.dim}
        if self.family == "weighted_p":
            out["p"] = "inf" if self.p == INF else self.p
            out["weights"] = [float(v) for v in self.weights]
        elif self.family == "polyhedral":
            out["functionals"] = [[float(v) for v in row] for row in self.functionals]
        else:
            out["form"] = [[float(v) for v in row] for row in self.form]
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "NormSpec":
        family = data.get("family")
        if family is None:
            raise SpaceError("fiber descriptor is missing field 'family'")
        if family == "weighted_p":
            weights = data.get("weights")
            dim = data.get("dim", len(weights) if weights is not None else None)
            if dim is None:
                raise SpaceError("weighted_p descriptor needs 'dim' or 'weights'")
            if "p" not in data:
                raise SpaceError("weighted_p descriptor is missing field 'p'")
            return cls("weighted_p", dim, _parse_p(data["p"]), weights)
        if family == "polyhedral":
            if "functionals" not in data:
                raise SpaceError("polyhedral descriptor is missing field 'functionals'")
            a = np.atleast_2d(np.asarray(data["functionals"], dtype=float))
            return cls("polyhedral", data.get("dim", a.shape[1]), functionals=a)
        if family == "ellipsoid":
            if "form" not in data:
                raise SpaceError("ellipsoid descriptor is missing field 'form'")
            q = np.asarray(data["form"], dtype=float)
            return cls("ellipsoid", data.get("dim", q.shape[0]), form=q)
        raise SpaceError(f"unknown fiber family {family!r}")


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


# -- constructors -------------------------------------------------------------

def weighted_p(p, weights) -> NormSpec:
    w = np.asarray(weights, dtype=float)
    return NormSpec("weighted_p", w.size, _parse_p(p), w)


def lp(p, dim: int) -> NormSpec:
    return NormSpec("weighted_p", dim, _parse_p(p), np.ones(dim))


def euclidean(dim: int) -> NormSpec:
    return lp(2, dim)


def polyhedral(functionals) -> NormSpec:
    a = np.atleast_2d(np.asarray(functionals, dtype=float))
    return NormSpec("polyhedral", a.shape[1], functionals=a)


def ellipsoid(form) -> NormSpec:
    q = np.asarray(form, dtype=float)
    return NormSpec("ellipsoid", q.shape[0], form=q)


# -- operations ----------------------------------------------------------------

def norm_eval(space, x) -> float:
    x = _as_vector(x, space.dim)
    return space.norm(x)


def dual_norm_eval(space, phi) -> float:
    phi = _as_vector(phi, space.dim, "phi")
    return space.dual_norm(phi)


def radial_project(space, x) -> np.ndarray:
    x = _as_vector(x, space.dim)
    n = np.asarray(space.norm(x))
    if np.any(n == 0):
        raise SpaceError("cannot radially project the zero vector")
    return x / n[..., None]


def sphere_sample(space, rng_seed, count: int) -> np.ndarray:
    """``count`` unit vectors: Gaussian directions pushed onto the unit sphere."""
    if count < 1:
        raise SpaceError("count must be >= 1")
    rng = np.random.default_rng(rng_seed)
    out = np.empty((count, space.dim))
    filled = 0
    while filled < count:
        g = rng.standard_normal((count - filled, space.dim))
        g = g[np.any(g != 0, axis=1)]
        out[filled:filled + len(g)] = g / space.norm(g)[:, None]
        filled += len(g)
    return out
