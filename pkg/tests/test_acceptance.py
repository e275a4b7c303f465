"""Exit criteria.  Each test prints one ``ACCEPTANCE <n> PASS|FAIL`` line."""

import time

import numpy as np
import pytest

from digeo import io as dio
from digeo.convexity import hudzik_point_check, revalidate, sc_search, strong_convexity_check
from digeo.day_bound import (
    compose_day_bound,
    day_bound_inputs,
    day_witness_trace,
    sample_equal_norm_pairs,
    verify_day_bound,
)
from digeo.direct_integral import (
    DirectIntegralSpace,
    construct_norming_functional,
    embed_fiber,
    norming_residuals,
    verify_duality_isometry,
)
from digeo.fixtures import FIXTURES, get_fixture
from digeo.kothe import KotheSpace
from digeo.modulus import global_modulus_estimate, strong_modulus_estimate
from digeo.spaces import INF, euclidean, lp

from oracles import modulus_pair_grid, pnorm

pytestmark = pytest.mark.acceptance

UC_CONFIGS = ["uc_p2_euclid", "uc_p2_l4", "uc_p15_euclid", "uc_p15_l4", "uc_p3_euclid", "uc_p3_l4"]
UC_EPS = (0.25, 0.5, 1.0)
CURVE_BUDGET = 20_000


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\nACCEPTANCE {n} {'PASS' if ok else 'FAIL'}: {detail}")
        assert ok, detail

    return emit


@pytest.fixture(scope="module")
def day_inputs():
    cache = {}

    def get(name, eps):
        if (name, eps) not in cache:
            cache[(name, eps)] = day_bound_inputs(get_fixture(name), eps, CURVE_BUDGET, 0)
        return cache[(name, eps)]

    return get


def test_1_modulus_oracle_agreement(report):
    e2 = euclidean(2)
    worst_err, worst_time = 0.0, 0.0
    for eps in (0.5, 1.0, 1.5, 2.0):
        oracle = modulus_pair_grid(lambda z: pnorm(z, 2), eps)
        t0 = time.perf_counter()
        est = global_modulus_estimate(e2, eps, budget=100_000, seed=0)
        worst_time = max(worst_time, time.perf_counter() - t0)
        worst_err = max(worst_err, abs(est.value - oracle))
    report(1, worst_err <= 2e-3 and worst_time < 10,
           f"max |estimate - oracle| = {worst_err:.2e} (<= 2e-3), slowest eps {worst_time:.2f}s (< 10s)")


def test_2_flat_face_zeros(report):
    grid = np.arange(0.125, 2.0, 0.125)
    worst = max(global_modulus_estimate(X, e, budget=20_000).value for X in (lp(INF, 2), lp(1, 2)) for e in grid)
    report(2, worst <= 1e-9, f"max upper estimate over l^inf, l^1 and {grid.size} eps values = {worst:.2e} (<= 1e-9)")


def test_3_uniform_convexity_bound(report, day_inputs):
    t0 = time.perf_counter()
    bad = []
    min_tau = np.inf
    for name in UC_CONFIGS:
        Y = get_fixture(name)
        for eps in UC_EPS:
            E_curve, fib = day_inputs(name, eps)
            rep = compose_day_bound(E_curve, fib, eps)
            v = verify_day_bound(Y, rep, budget=100_000, seed=0)
            min_tau = min(min_tau, rep.tau)
            if not (rep.tau > 0 and v.status == "pass"):
                bad.append((name, eps, rep.tau, v.status, v.details))
    elapsed = time.perf_counter() - t0
    report(3, not bad and elapsed < 300,
           f"{len(UC_CONFIGS) * len(UC_EPS) - len(bad)}/{len(UC_CONFIGS) * len(UC_EPS)} configurations tau > 0 and "
           f"verified (min tau {min_tau:.2e}), {elapsed:.0f}s (< 300s)" + (f"; failures {bad}" if bad else ""))


def test_4_proof_trace_inequalities(report, day_inputs):
    eps = 0.5
    worst = np.inf
    for name in UC_CONFIGS:
        Y = get_fixture(name)
        E_curve, fib = day_inputs(name, eps)
        F, G = sample_equal_norm_pairs(Y, 10_000, eps, seed=0)
        for f, g in zip(F, G):
            tr = day_witness_trace(Y, f, g, eps, fib, E_curve)
            worst = min(worst, float(tr.eq1_margins.min()), tr.eq2_margin, tr.eq3_margin)
    report(4, worst >= -1e-9, f"min margin of the three inequalities over 6 x 10^4 pairs = {worst:.2e} (>= -1e-9)")


# centre of a flat face of the non-strictly-convex fiber, per fixture
FACE_CENTERS = {
    "sc_linf_fiber": (1, [1.0, 0.0]),
    "sc_l1_fiber": (0, [0.5, 0.5]),
    "sc_hexagon_fiber": (1, [1.0, 0.0]),
    "l1_2": (0, [0.5, 0.5]),
    "linf_2": (0, [1.0, 0.0]),
}
HUDZIK = ("extreme", "strongly_extreme", "LUR")


def _flat_component(fx):
    Y = fx.build()
    flat_E = Y.E.p in (1.0, INF)
    flat_fiber = any(X.family == "polyhedral" or X.p in (1.0, INF) and X.dim > 1 for X in Y.fibers)
    return flat_E or flat_fiber


def test_5_strict_and_pointwise_suites(report):
    positive = [fx for fx in FIXTURES.values() if fx.group == "strict-convexity" and fx.strictly_convex]
    negative = [fx for fx in FIXTURES.values() if fx.group != "broken" and _flat_component(fx)]
    problems = []
    for fx in positive:
        Y = fx.build()
        if sc_search(Y, budget=100_000, seed=0).status != "pass":
            problems.append(f"{fx.name}: SC")
        rng = np.random.default_rng(1)
        for k in range(2):
            f = rng.standard_normal(Y.dim)
            for prop in HUDZIK:
                if hudzik_point_check(Y, f, prop, budget=100_000, seed=k).status != "pass":
                    problems.append(f"{fx.name}: {prop}")
    for fx in negative:
        Y = fx.build()
        v = sc_search(Y, budget=100_000, seed=0)
        still, diff = revalidate(Y, v) if v.failed else (False, np.inf)
        if not (v.failed and still and diff <= 1e-12):
            problems.append(f"{fx.name}: SC did not fail with a valid witness")
        if fx.name in FACE_CENTERS:
            i, c = FACE_CENTERS[fx.name]
            f = embed_fiber(Y, i, c)
            for prop in HUDZIK:
                v = hudzik_point_check(Y, f, prop, budget=100_000, seed=0)
                still, diff = revalidate(Y, v) if v.failed else (False, np.inf)
                if not (v.failed and still and diff <= 1e-12):
                    problems.append(f"{fx.name}: {prop} did not fail with a valid witness")
    report(5, not problems,
           f"{len(positive)} positive fixtures pass, {len(negative)} fixtures with a flat component fail "
           f"({len(FACE_CENTERS)} also at a face centre)" + (f"; problems {problems}" if problems else ""))


def test_6_duality_isometry(report):
    spaces = [fx.build() for fx in FIXTURES.values() if fx.group != "broken"]
    spaces = [Y for Y in spaces if Y.dim <= 8]
    worst_gap, worst_res, failures = 0.0, 0.0, 0
    for s, Y in enumerate(spaces):
        rng = np.random.default_rng(s)
        for k in range(20):
            v = verify_duality_isometry(Y, rng.standard_normal(Y.dim), budget=20_000, seed=k)
            failures += v.status != "pass"
            worst_gap = max(worst_gap, v.details["gap"])
        for f in rng.standard_normal((5, Y.dim)):
            f = f / Y.norm(f)
            r = norming_residuals(Y, construct_norming_functional(Y, f), f)
            worst_res = max(worst_res, abs(r["profile"]), float(np.abs(r["alignment"]).max()))
    report(6, failures == 0 and worst_gap <= 5e-3 and worst_res <= 1e-8,
           f"{len(spaces)} configurations x 20 functionals: max gap {worst_gap:.2e} (<= 5e-3), "
           f"max blockwise norming residual {worst_res:.2e} (<= 1e-8), failing verdicts {failures}")


def test_7_strong_convexity(report):
    worst_diff, failures, n = 0.0, [], 0
    for p in (1.5, 2.0, 3.0):
        Y = DirectIntegralSpace(KotheSpace([1.0, 0.5, 2.0], p), [euclidean(2), euclidean(3), euclidean(2)])
        rng = np.random.default_rng(int(10 * p))
        for c in range(8):
            f = rng.standard_normal(Y.dim)
            f /= Y.norm(f)
            v = strong_convexity_check(Y, f, budget=20_000, seed=c)
            n += 1
            if v.status != "pass":
                failures.append((p, c))
            for row in v.details["rows"]:
                ref = strong_modulus_estimate(Y, f, v.details["F"], row["eps"], budget=20_000, seed=c).value
                worst_diff = max(worst_diff, abs(row["margin"] - ref))
    report(7, not failures and worst_diff <= 2e-3,
           f"{n - len(failures)}/{n} centres pass, max |margin - strong modulus| = {worst_diff:.2e} (<= 2e-3)")


def test_8_reduction_identities(report):
    rng = np.random.default_rng(0)
    mu = np.array([0.5, 2.0, 1.0])
    X = lp(3, 2)
    Y = DirectIntegralSpace(KotheSpace(mu, 1.5), [X] * 3)
    f = rng.standard_normal((10_000, 6))
    prof = np.stack([X.norm(f[:, 2 * i:2 * i + 2]) for i in range(3)], 1)
    err1 = float(np.abs(Y.norm(f) - (mu * prof**1.5).sum(1) ** (1 / 1.5)).max())
    err2 = 0.0
    for p in (1.0, 2.0, 3.5, INF):
        Z = DirectIntegralSpace(KotheSpace([1.0, 1.0, 1.0], p), [euclidean(2), lp(4, 3), lp(1, 2)])
        g = rng.standard_normal((10_000, 7))
        blocks = np.stack([pnorm(g[:, :2], 2), pnorm(g[:, 2:5], 4), pnorm(g[:, 5:], 1)], 1)
        err2 = max(err2, float(np.abs(Z.norm(g) - pnorm(blocks, p)).max()))
    report(8, err1 <= 1e-12 and err2 <= 1e-12,
           f"Bochner reduction max error {err1:.1e}, counting p-sum max error {err2:.1e} (both <= 1e-12)")


def test_9_determinism(report, tmp_path):
    mismatched = []
    for task, fmt in [("modulus", "csv"), ("day-bound", "json"), ("check", "json"), ("dual", "csv"),
                      ("report", "json")]:
        outs = []
        for k in range(2):
            out = tmp_path / f"{task}-{k}.{fmt}"
            cfg = dio.ExperimentConfig("fixture:uc_p2_euclid", task, [0.5, 1.0], budget=2000, seed=3, fmt=fmt,
                                       out=str(out), results_dir=str(tmp_path / "results"), functionals=3)
            dio.run_experiment(cfg)
            outs.append(out.read_bytes())
        if outs[0] != outs[1]:
            mismatched.append(task)
    report(9, not mismatched, "reruns of modulus, day-bound, check, dual, report are byte-identical"
           if not mismatched else f"differing outputs: {mismatched}")
