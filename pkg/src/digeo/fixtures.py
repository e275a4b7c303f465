"""Bundled exemplar spaces, addressable as ``fixture:<name>``."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .direct_integral import DirectIntegralSpace
from .kothe import KotheSpace
from .spaces import INF, NormSpec, ellipsoid, euclidean, lp, polyhedral


@dataclass(frozen=True)
class Fixture:
    name: str
    group: str
    description: str
    build: Callable[[], DirectIntegralSpace]
    # expected behaviour, used by the test-suite and shown by --list-fixtures
    strictly_convex: bool | None = None
    uniformly_convex: bool | None = None


def _Y(p, mu, fibers) -> DirectIntegralSpace:
    return DirectIntegralSpace(KotheSpace(mu, p), fibers)


def hexagon() -> NormSpec:
    ang = np.pi / 3 * np.arange(3)
    return polyhedral(np.stack([np.cos(ang), np.sin(ang)], axis=1))


def nonconvex_gauge(dim: int = 2) -> NormSpec:
    """``(sum |x_i|^(1/2))^2``: positively homogeneous but its unit ball is not convex."""
    return NormSpec.unchecked("weighted_p", dim, p=0.5, weights=np.ones(dim))


def corrupted_dual(dim: int = 2) -> NormSpec:
    """Ellipsoid whose stored inverse form is off by a factor, so its dual norm is wrong."""
    q = np.diag(np.arange(1.0, dim + 1.0))
    spec = NormSpec.unchecked("ellipsoid", dim, form=q)
    object.__setattr__(spec, "_form_inv", 0.5 * np.linalg.inv(q))
    return spec


_FIXTURES = [
    # single spaces, seen as a direct integral over one atom of mass 1
    Fixture("euclidean2", "basic", "Euclidean plane", lambda: _Y(2, [1.0], [euclidean(2)]), True, True),
    Fixture("euclidean3", "basic", "Euclidean 3-space", lambda: _Y(2, [1.0], [euclidean(3)]), True, True),
    Fixture("l1_2", "basic", "l^1 plane", lambda: _Y(2, [1.0], [lp(1, 2)]), False, False),
    Fixture("linf_2", "basic", "l^inf plane", lambda: _Y(2, [1.0], [lp(INF, 2)]), False, False),
    Fixture("l4_2", "basic", "l^4 plane", lambda: _Y(2, [1.0], [lp(4, 2)]), True, True),
    Fixture("l1_counting", "basic", "l^1 over two atoms, fibers R", lambda: _Y(1, [1.0, 1.0], [lp(2, 1)] * 2),
            False, False),
    Fixture("linf_counting", "basic", "l^inf over two atoms, fibers R",
            lambda: _Y(INF, [1.0, 1.0], [lp(2, 1)] * 2), False, False),
    # strict / pointwise convexity of direct integrals
    Fixture("sc_euclid", "strict-convexity", "l^2(1,2) of Euclidean fibers of dims 2, 3",
            lambda: _Y(2, [1.0, 2.0], [euclidean(2), euclidean(3)]), True, True),
    Fixture("sc_mixed", "strict-convexity", "l^1.5(0.5,1,2) of Euclidean, ellipsoid and l^1.8 fibers",
            lambda: _Y(1.5, [0.5, 1.0, 2.0], [euclidean(2), ellipsoid([[2.0, 0.5], [0.5, 1.0]]), lp(1.8, 2)]),
            True, True),
    Fixture("sc_p13", "strict-convexity", "l^1.3(1,1) of l^2.5 and Euclidean fibers",
            lambda: _Y(1.3, [1.0, 1.0], [lp(2.5, 2), euclidean(2)]), True, True),
    Fixture("sc_l1_lattice", "strict-convexity", "l^1(1,2) of Euclidean fibers",
            lambda: _Y(1, [1.0, 2.0], [euclidean(2), euclidean(2)]), False, False),
    Fixture("sc_linf_lattice", "strict-convexity", "l^inf(1,1) of Euclidean fibers",
            lambda: _Y(INF, [1.0, 1.0], [euclidean(2), euclidean(2)]), False, False),
    Fixture("sc_linf_fiber", "strict-convexity", "l^2(1,1) with one l^inf fiber",
            lambda: _Y(2, [1.0, 1.0], [euclidean(2), lp(INF, 2)]), False, False),
    Fixture("sc_l1_fiber", "strict-convexity", "l^1.5(1,2) with one l^1 fiber",
            lambda: _Y(1.5, [1.0, 2.0], [lp(1, 2), euclidean(2)]), False, False),
    Fixture("sc_hexagon_fiber", "strict-convexity", "l^2(1,1) with a hexagonal fiber",
            lambda: _Y(2, [1.0, 1.0], [euclidean(2), hexagon()]), False, False),
    # uniform convexity with explicit bounds
    Fixture("uc_p2_euclid", "uniform-convexity", "l^2(1,2) of Euclidean fibers of dims 2, 3",
            lambda: _Y(2, [1.0, 2.0], [euclidean(2), euclidean(3)]), True, True),
    Fixture("uc_p2_l4", "uniform-convexity", "l^2(0.5,1.5,1) of l^4, l^4, Euclidean fibers",
            lambda: _Y(2, [0.5, 1.5, 1.0], [lp(4, 2), lp(4, 3), euclidean(2)]), True, True),
    Fixture("uc_p15_euclid", "uniform-convexity", "l^1.5(2,1) of Euclidean fibers of dims 3, 2",
            lambda: _Y(1.5, [2.0, 1.0], [euclidean(3), euclidean(2)]), True, True),
    Fixture("uc_p15_l4", "uniform-convexity", "l^1.5(0.7,1.3,0.4,1) of l^4 and Euclidean fibers",
            lambda: _Y(1.5, [0.7, 1.3, 0.4, 1.0], [lp(4, 2), euclidean(2), lp(4, 2), euclidean(2)]), True, True),
    Fixture("uc_p3_euclid", "uniform-convexity", "l^3(1,3) of Euclidean planes",
            lambda: _Y(3, [1.0, 3.0], [euclidean(2), euclidean(2)]), True, True),
    Fixture("uc_p3_l4", "uniform-convexity", "l^3(1,0.5,2) of l^4, l^4, Euclidean fibers",
            lambda: _Y(3, [1.0, 0.5, 2.0], [lp(4, 2), lp(4, 3), euclidean(2)]), True, True),
    Fixture("uc_l1_lattice", "uniform-convexity", "l^1(1,1) of Euclidean planes (no bound)",
            lambda: _Y(1, [1.0, 1.0], [euclidean(2), euclidean(2)]), False, False),
    # deliberately broken descriptors (not loadable from JSON)
    Fixture("broken_gauge", "broken", "l^2(1,1) with a non-convex fiber gauge",
            lambda: _Y(2, [1.0, 1.0], [euclidean(2), nonconvex_gauge(2)])),
    Fixture("broken_dual", "broken", "l^2(1,1) with a fiber whose dual norm is misreported",
            lambda: _Y(2, [1.0, 1.0], [euclidean(2), corrupted_dual(2)])),
]

FIXTURES: dict[str, Fixture] = {f.name: f for f in _FIXTURES}


def get_fixture(name: str) -> DirectIntegralSpace:
    try:
        return FIXTURES[name].build()
    except KeyError:
        raise KeyError(f"unknown fixture {name!r}; available: {', '.join(FIXTURES)}") from None


def fixtures_in(group: str) -> list[Fixture]:
    return [f for f in _FIXTURES if f.group == group]
