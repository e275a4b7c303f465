import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from digeo.spaces import (
    INF,
    DimensionMismatch,
    MeasureSpace,
    NormSpec,
    SpaceError,
    dual_norm_eval,
    ellipsoid,
    euclidean,
    lp,
    norm_eval,
    polyhedral,
    radial_project,
    sphere_sample,
    weighted_p,
)

AXES = polyhedral([[1.0, 0.0], [0.0, 1.0]])

SPACES = {
    "euclid3": euclidean(3),
    "l1": lp(1, 3),
    "linf": lp(INF, 3),
    "l3w": weighted_p(3, [1.0, 2.0, 0.5]),
    "l1.4w": weighted_p(1.4, [0.3, 1.0, 4.0]),
    "ellipsoid": ellipsoid([[2.0, 0.3, 0.0], [0.3, 1.0, 0.2], [0.0, 0.2, 0.7]]),
    "polyhedral": polyhedral([[1, 0, 0], [0, 1, 0], [0, 0, 1], [1, 1, 1], [1, -1, 0.5]]),
}

coords = st.floats(-50, 50, allow_nan=False)
vec3 = st.lists(coords, min_size=3, max_size=3).map(np.array)
space_names = st.sampled_from(sorted(SPACES))


# -- examples ------------------------------------------------------------------

def test_pythagorean_norm():
    assert norm_eval(weighted_p(2, [1, 1]), [3, 4]) == pytest.approx(5, abs=1e-15)


@pytest.mark.parametrize("name", sorted(SPACES))
def test_zero_has_zero_norm_and_dual_norm(name):
    sp = SPACES[name]
    assert norm_eval(sp, np.zeros(sp.dim)) == 0
    assert dual_norm_eval(sp, np.zeros(sp.dim)) == 0


def test_polyhedral_axes_is_max_norm():
    assert norm_eval(AXES, [1, -2]) == 2


def test_euclidean_self_dual():
    assert dual_norm_eval(weighted_p(2, [1, 1]), [3, 4]) == pytest.approx(5, abs=1e-15)


def test_l1_dual_is_max_against_sampled_sup():
    phi = np.array([2.0, -3.0])
    # oracle: sup over a dense sampling of the cross-polytope boundary
    t = np.linspace(-1, 1, 20001)
    pts = np.concatenate([np.stack([t, 1 - np.abs(t)], 1), np.stack([t, np.abs(t) - 1], 1)])
    oracle = float((pts @ phi).max())
    assert oracle == pytest.approx(3.0, abs=1e-9)
    assert dual_norm_eval(lp(1, 2), phi) == pytest.approx(oracle, abs=1e-12)


@pytest.mark.parametrize(
    "space, x, expected",
    [
        (euclidean(2), [0, 2], [0, 1]),
        (lp(INF, 2), [2, 1], [1, 0.5]),
        (AXES, [-3, 0], [-1, 0]),
    ],
)
def test_radial_project_examples(space, x, expected):
    np.testing.assert_allclose(radial_project(space, x), expected, atol=1e-15)


def test_radial_project_rejects_zero():
    with pytest.raises(SpaceError):
        radial_project(euclidean(2), [0, 0])


def test_sphere_sample_single_and_deterministic():
    one = sphere_sample(SPACES["l3w"], 7, 1)
    assert one.shape == (1, 3)
    assert SPACES["l3w"].norm(one[0]) == pytest.approx(1, abs=1e-12)
    a = sphere_sample(SPACES["polyhedral"], 11, 50)
    b = sphere_sample(SPACES["polyhedral"], 11, 50)
    assert np.array_equal(a, b)


@pytest.mark.parametrize("name", sorted(SPACES))
def test_sphere_sample_unit_norm(name):
    sp = SPACES[name]
    xs = sphere_sample(sp, 3, 500)
    np.testing.assert_allclose(sp.norm(xs), 1.0, atol=1e-12)


def test_sphere_sample_euclidean_mean_near_zero():
    xs = sphere_sample(euclidean(3), 0, 10_000)
    assert np.abs(xs.mean(axis=0)).max() < 0.05


def test_sphere_sample_rejects_zero_count():
    with pytest.raises(SpaceError):
        sphere_sample(euclidean(2), 0, 0)


# -- errors --------------------------------------------------------------------

def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        norm_eval(euclidean(2), [1, 2, 3])
    with pytest.raises(DimensionMismatch):
        dual_norm_eval(euclidean(2), [1])


def test_non_finite_rejected():
    with pytest.raises(SpaceError, match="non-finite"):
        norm_eval(euclidean(2), [np.nan, 1])


@pytest.mark.parametrize(
    "build, msg",
    [
        (lambda: weighted_p(2, [1, 0]), "strictly positive"),
        (lambda: weighted_p(0.5, [1, 1]), "p >= 1"),
        (lambda: polyhedral([[1, 1], [2, 2]]), "full rank"),
        (lambda: ellipsoid([[1, 0], [0, -1]]), "positive definite"),
        (lambda: ellipsoid([[1, 0.5], [0, 1]]), "symmetric"),
        (lambda: MeasureSpace((1.0, 0.0)), "strictly positive"),
        (lambda: MeasureSpace(()), "at least one atom"),
        (lambda: NormSpec("banana", 2), "family"),
    ],
)
def test_invalid_descriptors(build, msg):
    with pytest.raises(SpaceError, match=msg):
        build()


# -- serialization -------------------------------------------------------------

@pytest.mark.parametrize("name", sorted(SPACES))
def test_dict_round_trip(name):
    sp = SPACES[name]
    back = NormSpec.from_dict(sp.to_dict())
    xs = np.random.default_rng(1).standard_normal((200, sp.dim))
    np.testing.assert_allclose(back.norm(xs), sp.norm(xs), rtol=0, atol=1e-12)


def test_inf_serialized_as_string():
    assert lp(INF, 2).to_dict()["p"] == "inf"
    assert NormSpec.from_dict({"family": "weighted_p", "p": "inf", "weights": [1, 1], "dim": 2}).p == INF


# -- invariants ----------------------------------------------------------------

@given(space_names, vec3, st.floats(-20, 20, allow_nan=False))
def test_homogeneity(name, x, lam):
    sp = SPACES[name]
    assert sp.norm(lam * x) == pytest.approx(abs(lam) * sp.norm(x), rel=1e-12, abs=1e-12)


@given(space_names, vec3, vec3)
def test_triangle_inequality(name, x, y):
    sp = SPACES[name]
    assert sp.norm(x + y) <= sp.norm(x) + sp.norm(y) + 1e-12 * (1 + sp.norm(x) + sp.norm(y))


@given(space_names, vec3, vec3)
def test_duality_consistency(name, x, phi):
    sp = SPACES[name]
    assert phi @ x <= sp.dual_norm(phi) * sp.norm(x) + 1e-9 * (1 + abs(phi) @ abs(x))


@pytest.mark.parametrize("name", sorted(SPACES))
def test_closed_form_maximizer_attains_dual_norm(name):
    sp = SPACES[name]
    rng = np.random.default_rng(5)
    for phi in rng.standard_normal((30, sp.dim)):
        x = sp.dual_maximizer(phi)
        assert sp.norm(x) == pytest.approx(1, abs=1e-9)
        assert phi @ x == pytest.approx(sp.dual_norm(phi), rel=1e-9)


@pytest.mark.parametrize("name", sorted(SPACES))
def test_norming_functional(name):
    sp = SPACES[name]
    for x in sphere_sample(sp, 9, 30):
        phi = sp.norming_functional(x)
        assert sp.dual_norm(phi) == pytest.approx(1, abs=1e-9)
        assert phi @ x == pytest.approx(1, abs=1e-9)


@pytest.mark.parametrize("p", [1.2, 1.5, 2.0, 3.0, 7.0])
def test_dual_of_dual_recovers_norm(p):
    sp = weighted_p(p, [0.5, 1.0, 3.0])
    dd = sp.dual_spec()
    xs = np.random.default_rng(2).standard_normal((300, 3))
    np.testing.assert_allclose([dd.dual_norm(x) for x in xs], sp.norm(xs), rtol=1e-9)


def test_euclidean_bounds_bracket_norm():
    rng = np.random.default_rng(4)
    for sp in SPACES.values():
        lo, hi = sp.euclidean_bounds()
        xs = rng.standard_normal((500, sp.dim))
        r = sp.norm(xs) / np.linalg.norm(xs, axis=1)
        assert np.all(r >= lo - 1e-12) and np.all(r <= hi + 1e-12)


def test_mp_norm_matches_float():
    for sp in SPACES.values():
        x = np.random.default_rng(8).standard_normal(sp.dim)
        assert float(sp.norm_mp(x)) == pytest.approx(sp.norm(x), rel=1e-13)
