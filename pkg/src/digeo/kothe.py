"""Köthe function spaces over a finite atomic measure space.

The lattice norms supported are the weighted ``l^p`` family

    ||f||_E = (sum_i mu_i c_i |f_i|^p)^(1/p),     ||f||_E = max_i c_i |f_i|  (p = inf)

where ``mu`` is the measure and ``c`` an optional extra weight (default 1), so
``p = 1`` reproduces ``int |f| dmu``.  On finitely many atoms every member of
the family is order continuous, hence ``E* = E'`` and the Köthe dual is again a
member of the family.
"""

from __future__ import annotations

import mpmath as mp
import numpy as np
from scipy.optimize import linprog, minimize

from .config import DEFAULT_TOL, Tolerances
from .spaces import INF, DimensionMismatch, MeasureSpace, NormSpec, SpaceError, _parse_p
from .verdict import PropertyVerdict


class KotheSpace:
    def __init__(self, measure: MeasureSpace | list | tuple, p=2.0, extra_weights=None):
        if not isinstance(measure, MeasureSpace):
            measure = MeasureSpace(tuple(measure))
        p = _parse_p(p)
        if not p >= 1:
            raise SpaceError(f"p must satisfy p >= 1 (or 'inf'), got {p}")
        m = measure.n_atoms
        c = np.ones(m) if extra_weights is None else np.asarray(extra_weights, dtype=float)
        if c.shape != (m,):
            raise SpaceError(f"extra_weights has length {c.size}, expected {m} atoms")
        if not np.all(np.isfinite(c) & (c > 0)):
            raise SpaceError("extra_weights must be strictly positive")
        self._init(measure, p, c)

    def _init(self, measure, p, c):
        self.measure = measure
        self.p = p
        self.extra_weights = np.array(c, dtype=float)
        self.extra_weights.setflags(write=False)
        self.mu = measure.mu

    @classmethod
    def unchecked(cls, mu, p, extra_weights) -> "KotheSpace":
        """Skip validation; used to build deliberately broken fixtures."""
        obj = object.__new__(cls)
        meas = object.__new__(MeasureSpace)
        object.__setattr__(meas, "weights", tuple(float(v) for v in mu))
        obj._init(meas, _parse_p(p), np.asarray(extra_weights, dtype=float))
        return obj

    def __repr__(self):
        p = "inf" if self.p == INF else self.p
        return f"KotheSpace(p={p}, mu={list(self.measure.weights)}, extra_weights={self.extra_weights.tolist()})"

    @property
    def n_atoms(self) -> int:
        return self.measure.n_atoms

    @property
    def lattice_weights(self) -> np.ndarray:
        """Coordinate weights of the equivalent weighted_p descriptor."""
        if self.p == INF:
            return self.extra_weights
        return self.mu * self.extra_weights

    def as_norm_spec(self) -> NormSpec:
        # goes through the unchecked path so corrupted fixtures stay corrupted
        return NormSpec.unchecked("weighted_p", self.n_atoms, p=self.p, weights=self.lattice_weights)

    def _check(self, f, name="f") -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if f.shape[-1:] != (self.n_atoms,):
            raise DimensionMismatch(f"{name} has {f.shape[-1:]} values but the measure has {self.n_atoms} atoms")
        return f

    def norm(self, f):
        f = np.asarray(f, dtype=float)
        v, p = self.lattice_weights, self.p
        af = np.abs(f)
        if p == INF:
            return np.max(v * af, axis=-1)
        if p == 1:
            return np.sum(v * af, axis=-1)
        if p == 2:
            return np.sqrt(np.sum(v * (f * f), axis=-1))
        return np.sum(v * af**p, axis=-1) ** (1.0 / p)

    def norm_mp(self, f):
        v = [mp.mpf(float(x)) for x in self.lattice_weights]
        if self.p == INF:
            return max(vi * abs(fi) for vi, fi in zip(v, f))
        pm = mp.mpf(self.p)
        return mp.fsum(vi * abs(fi) ** pm for vi, fi in zip(v, f)) ** (1 / pm)

    def dual(self) -> "KotheSpace":
        """The Köthe dual ``E'`` as a member of the same family."""
        c, p = self.extra_weights, self.p
        if p == INF:
            return KotheSpace(self.measure, 1.0, 1.0 / c)
        if p == 1:
            return KotheSpace(self.measure, INF, 1.0 / c)
        q = p / (p - 1.0)
        return KotheSpace(self.measure, q, c ** (1.0 - q))

    def pairing(self, f, g):
        return np.sum(self.mu * np.asarray(f, dtype=float) * np.asarray(g, dtype=float), axis=-1)

    def dual_norm(self, g):
        return self.dual().norm(g)

    def norming_element(self, b) -> np.ndarray:
        """``g`` in the unit sphere of ``E'`` with ``int b g dmu = ||b||_E`` (for ``b >= 0``)."""
        b = np.abs(self._check(b, "b"))
        nb = float(self.norm(b))
        if nb == 0:
            raise SpaceError("zero function has no norming element")
        c, p = self.extra_weights, self.p
        u = b / nb
        if p == INF:
            i = int(np.argmax(c * u))
            g = np.zeros(self.n_atoms)
            g[i] = c[i] / self.mu[i]
            return g
        if p == 1:
            return c.copy()
        return c * u ** (p - 1.0)

    def indicator_norm(self, i: int) -> float:
        e = np.zeros(self.n_atoms)
        e[i] = 1.0
        return float(self.norm(e))

    def to_dict(self) -> dict:
        return {
            "p": "inf" if self.p == INF else self.p,
            "mu": list(self.measure.weights),
            "extra_weights": self.extra_weights.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "KotheSpace":
        for key in ("p", "mu"):
            if key not in data:
                raise SpaceError(f"kothe descriptor is missing field {key!r}")
        return cls(MeasureSpace(tuple(data["mu"])), data["p"], data.get("extra_weights"))


def kothe_norm(E: KotheSpace, f) -> float:
    return E.norm(E._check(f))


def kothe_duality_pairing(E: KotheSpace, f, g) -> float:
    return E.pairing(E._check(f), E._check(g, "g"))


def kothe_dual_norm(E: KotheSpace, g, cross_check: bool = False, tol: Tolerances = DEFAULT_TOL) -> float:
    """``sup{ int |f g| dmu : ||f||_E <= 1 }``.

    The closed form uses the conjugate exponent.  With ``cross_check=True`` the
    supremum is also computed by direct maximisation over ``B_E`` and the two
    are required to agree within ``tol.dual_cross_check``.
    """
    g = E._check(g, "g")
    closed = float(E.dual_norm(g))
    if cross_check:
        direct = kothe_dual_norm_direct(E, g)
        if abs(direct - closed) > tol.dual_cross_check * max(1.0, closed):
            raise ArithmeticError(f"Köthe dual norm mismatch: closed form {closed!r}, direct {direct!r}")
    return closed


def kothe_dual_norm_direct(E: KotheSpace, g) -> float:
    """Direct maximisation of ``int f |g| dmu`` over ``f >= 0`` in ``B_E``."""
    a = E.mu * np.abs(np.asarray(g, dtype=float))
    if not np.any(a):
        return 0.0
    m, v, p = E.n_atoms, E.lattice_weights, E.p
    if p == 1:
        res = linprog(-a, A_ub=v[None, :], b_ub=[1.0], bounds=[(0, None)] * m, method="highs")
        return float(-res.fun)
    if p == INF:
        return float(np.sum(a / v))
    # scale so the optimum is O(1) and polish onto the sphere afterwards
    scale = float(np.max(a))
    an = a / scale
    cons = {"type": "ineq", "fun": lambda f: 1.0 - np.sum(v * np.abs(f) ** p),
            "jac": lambda f: -p * v * np.abs(f) ** (p - 1.0) * np.sign(f)}
    best = 0.0
    for start in (np.full(m, 0.5 / m), an / max(np.sum(v * an**p) ** (1 / p), 1e-300)):
        res = minimize(lambda f: -an @ f, start, jac=lambda f: -an, bounds=[(0, None)] * m,
                       constraints=[cons], method="SLSQP", options={"ftol": 1e-15, "maxiter": 500})
        f = np.maximum(res.x, 0.0)
        nf = E.norm(f)
        if nf > 0:
            best = max(best, float(an @ (f / nf)))
    return best * scale


def check_lattice_monotone(E: KotheSpace, samples: int, seed: int, tol: Tolerances = DEFAULT_TOL) -> PropertyVerdict:
    """Sample pairs with ``|g| <= |f|`` pointwise and test ``||g|| <= ||f||``."""
    rng = np.random.default_rng(seed)
    m = E.n_atoms
    f = rng.standard_normal((samples, m)) * np.exp(rng.uniform(-2, 2, (samples, 1)))
    shrink = rng.uniform(-1, 1, (samples, m))
    # a quarter of the pairs only shrink one coordinate, which is what exposes a bad weight
    k = samples // 4
    if k:
        shrink[:k] = 1.0
        idx = rng.integers(0, m, k)
        shrink[np.arange(k), idx] = rng.uniform(-1, 1, k)
    shrink[0] = 1.0  # g = f
    g = f * shrink
    with np.errstate(invalid="ignore"):
        nf, ng = E.norm(f), E.norm(g)
    # a corrupted weight can make some norms undefined; judge the pairs where both exist
    excess = np.where(np.isfinite(nf) & np.isfinite(ng), ng - nf, -np.inf)
    worst = int(np.argmax(excess))
    margin = float(-excess[worst])
    tols = {"lattice": tol.lattice}
    if excess[worst] > tol.lattice:
        return PropertyVerdict("LATTICE", "fail", margin, {"f": f[worst], "g": g[worst]}, samples, seed, tols,
                               {"norm_f": float(nf[worst]), "norm_g": float(ng[worst])})
    return PropertyVerdict("LATTICE", "pass", margin, None, samples, seed, tols)


def is_order_continuous(E: KotheSpace) -> bool:
    # finite atoms: every lattice norm of the family is order continuous
    return True


def hoelder_conjugate(p: float) -> float:
    if p == 1:
        return INF
    if p == INF:
        return 1.0
    return p / (p - 1.0)


__all__ = [
    "KotheSpace",
    "kothe_norm",
    "kothe_dual_norm",
    "kothe_dual_norm_direct",
    "kothe_duality_pairing",
    "check_lattice_monotone",
    "is_order_continuous",
    "hoelder_conjugate",
]
