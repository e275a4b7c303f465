import json
import os

import numpy as np
import pytest
from click.testing import CliRunner

from digeo import io as dio
from digeo.cli import main
from digeo.fixtures import FIXTURES, get_fixture

MINIMAL = {
    "kothe": {"p": 2, "mu": [1.0]},
    "fibers": [{"family": "weighted_p", "p": 2, "weights": [1.0], "dim": 1}],
}


def write(tmp_path, data, name="space.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return p


# -- loading ---------------------------------------------------------------------------

def test_minimal_descriptor_loads(tmp_path):
    Y = dio.load_space(write(tmp_path, MINIMAL))
    assert Y.n_atoms == 1 and Y.dim == 1
    assert Y.norm(np.array([-3.0])) == 3


def test_zero_weight_rejected(tmp_path):
    bad = json.loads(json.dumps(MINIMAL))
    bad["kothe"]["mu"] = [0.0]
    with pytest.raises(dio.SchemaError, match="weights must be strictly positive"):
        dio.load_space(write(tmp_path, bad))


def test_fiber_count_mismatch_names_both(tmp_path):
    bad = json.loads(json.dumps(MINIMAL))
    bad["kothe"]["mu"] = [1.0, 1.0, 1.0]
    with pytest.raises(dio.SchemaError) as exc:
        dio.load_space(write(tmp_path, bad))
    assert "1" in str(exc.value) and "3" in str(exc.value)


@pytest.mark.parametrize(
    "mutate, field",
    [
        (lambda d: d.pop("fibers"), "fibers"),
        (lambda d: d["kothe"].pop("mu"), "mu"),
        (lambda d: d["fibers"][0].update(family="round"), "family"),
        (lambda d: d["fibers"][0].update(dim=2), "weights"),
    ],
)
def test_schema_errors_name_field(tmp_path, mutate, field):
    bad = json.loads(json.dumps(MINIMAL))
    mutate(bad)
    with pytest.raises(dio.SchemaError, match=field):
        dio.load_space(write(tmp_path, bad))


def test_invalid_json_and_missing_file(tmp_path):
    p = tmp_path / "broken.json"
    p.write_text("{not json")
    with pytest.raises(dio.SchemaError, match="invalid JSON"):
        dio.load_space(p)
    with pytest.raises(FileNotFoundError):
        dio.load_space(tmp_path / "absent.json")


def test_fixture_prefix():
    assert dio.load_space("fixture:euclidean2").dim == 2
    with pytest.raises(dio.SchemaError, match="unknown fixture"):
        dio.load_space("fixture:nope")


@pytest.mark.parametrize("name", [n for n, fx in FIXTURES.items() if fx.group != "broken"])
def test_round_trip_reproduces_norms(tmp_path, name):
    Y = get_fixture(name)
    path = tmp_path / f"{name}.json"
    dio.save_space(Y, path)
    back = dio.load_space(path)
    f = np.random.default_rng(0).standard_normal((1000, Y.dim))
    np.testing.assert_allclose(back.norm(f), Y.norm(f), rtol=0, atol=1e-12)
    assert dio.space_hash(back) == dio.space_hash(Y)


def test_space_hash_ignores_formatting(tmp_path):
    a = write(tmp_path, MINIMAL, "a.json")
    b = tmp_path / "b.json"
    b.write_text(json.dumps(MINIMAL, indent=7, sort_keys=True))
    assert dio.space_hash(dio.load_space(a)) == dio.space_hash(dio.load_space(b))


# -- grids and config ---------------------------------------------------------------------

@pytest.mark.parametrize(
    "text, grid",
    [
        ("0.25:2:0.25", [0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0]),
        ("0.1:0.3:0.1", [0.1, 0.2, 0.3]),
        ("1.0,0.5,0.5", [0.5, 1.0]),
        ("2", [2.0]),
    ],
)
def test_parse_eps_grid(text, grid):
    assert dio.parse_eps_grid(text) == pytest.approx(grid, abs=1e-12)


@pytest.mark.parametrize("text", ["0:1:0.5", "0.5:1:0", "1:0.5:0.1", "0.5:3:0.5", "1:2", "", "-1"])
def test_parse_eps_grid_rejects(text):
    with pytest.raises(ValueError):
        dio.parse_eps_grid(text)


@pytest.mark.parametrize(
    "kwargs",
    [{"task": "nope"}, {"task": "modulus", "fmt": "xml"}, {"task": "modulus", "budget": 0},
     {"task": "modulus", "eps_grid": []}, {"task": "modulus", "eps_grid": [2.5]}],
)
def test_config_invariants(kwargs):
    with pytest.raises(ValueError):
        dio.ExperimentConfig(space="fixture:euclidean2", **kwargs)


# -- atomic writes and the result store ------------------------------------------------------------

def test_atomic_write_replaces(tmp_path):
    p = tmp_path / "out.csv"
    dio.atomic_write(p, "a\n")
    dio.atomic_write(p, "b\n")
    assert p.read_text() == "b\n"
    assert [q.name for q in tmp_path.iterdir()] == ["out.csv"]


def test_interrupted_write_leaves_no_partial_file(tmp_path, monkeypatch):
    p = tmp_path / "out.csv"
    dio.atomic_write(p, "old\n")

    def boom(*args):
        raise KeyboardInterrupt

    monkeypatch.setattr(os, "replace", boom)
    with pytest.raises(KeyboardInterrupt):
        dio.atomic_write(p, "new content that must not appear\n")
    assert p.read_text() == "old\n"
    assert [q.name for q in tmp_path.iterdir()] == ["out.csv"]


def test_result_store_same_key_same_payload(tmp_path):
    store = dio.ResultStore(tmp_path)
    key = dio.ResultStore.key("h", "modulus", 0, 10, "d")
    store.append(key, {"a": 1}, '{"x": 1}')
    store.append(key, {"a": 1}, '{"x": 1}')
    assert len(store.records()) == 1
    with pytest.raises(dio.DeterminismError):
        store.append(key, {"a": 1}, '{"x": 2}')
    assert dio.exit_code_for(dio.DeterminismError("x")) == dio.EXIT_DETERMINISM


def test_result_store_env_default(tmp_path, monkeypatch):
    monkeypatch.setenv(dio.RESULTS_ENV, str(tmp_path / "env-results"))
    assert dio.ResultStore().dir == tmp_path / "env-results"


@pytest.mark.parametrize(
    "exc, code",
    [(dio.SchemaError("x"), dio.EXIT_SCHEMA), (FileNotFoundError("x"), dio.EXIT_SCHEMA),
     (ArithmeticError("x"), dio.EXIT_NUMERICAL), (ValueError("x"), dio.EXIT_USAGE)],
)
def test_exit_codes_distinct(exc, code):
    assert dio.exit_code_for(exc) == code
    assert len({dio.EXIT_OK, dio.EXIT_USAGE, dio.EXIT_PROPERTY_FAILED, dio.EXIT_SCHEMA, dio.EXIT_DETERMINISM,
                dio.EXIT_NUMERICAL}) == 6


# -- experiments -----------------------------------------------------------------------------------

def test_modulus_experiment_monotone_csv(tmp_path):
    cfg = dio.ExperimentConfig("fixture:euclidean2", "modulus", [0.5, 1.0, 1.5, 2.0], budget=4000,
                               out=str(tmp_path / "m.csv"), results_dir=str(tmp_path / "r"))
    res = dio.run_experiment(cfg)
    assert res.exit_code == 0
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0] == "eps,upper,certified_lower,witness_x,witness_y,budget,seed"
    upper = [float(line.split(",")[1]) for line in lines[1:]]
    assert upper == sorted(upper)
    assert upper[1] == pytest.approx(0.13449866974698055, abs=2e-3)  # frozen pair-grid oracle


def test_check_on_l1_fails_with_witness(tmp_path):
    cfg = dio.ExperimentConfig("fixture:l1_2", "check", budget=2000, out=str(tmp_path / "c.csv"),
                               results_dir=str(tmp_path / "r"))
    res = dio.run_experiment(cfg)
    assert res.exit_code == dio.EXIT_PROPERTY_FAILED
    w = json.loads(res.witness_path.read_text())
    assert w["revalidated"] is True and w["revalidation_diff"] <= 1e-12


@pytest.mark.parametrize("task, fmt", [("modulus", "csv"), ("report", "json"), ("dual", "json"), ("check", "csv")])
def test_rerun_byte_identical(tmp_path, task, fmt):
    outs = []
    for k in range(2):
        out = tmp_path / f"{task}{k}.{fmt}"
        cfg = dio.ExperimentConfig("fixture:sc_euclid", task, [0.5, 1.0], budget=1500, fmt=fmt, out=str(out),
                                   results_dir=str(tmp_path / "r"), functionals=2)
        dio.run_experiment(cfg)
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    assert len(dio.ResultStore(tmp_path / "r").records()) == 1


def test_report_flags_duality_hypotheses(tmp_path):
    cfg = dio.ExperimentConfig("fixture:linf_counting", "report", fmt="json", results_dir=str(tmp_path))
    assert dio.run_experiment(cfg).payload["within_duality_hypotheses"] is False


# -- CLI ---------------------------------------------------------------------------------------------

@pytest.fixture
def runner(tmp_path, monkeypatch):
    monkeypatch.setenv(dio.RESULTS_ENV, str(tmp_path / "results"))
    return CliRunner()


def test_cli_list_fixtures(runner):
    res = runner.invoke(main, ["--list-fixtures"])
    assert res.exit_code == 0
    assert "euclidean2" in res.output and "uc_p2_euclid" in res.output


def test_cli_modulus_to_stdout(runner):
    res = runner.invoke(main, ["modulus", "--space", "fixture:euclidean2", "--eps-grid", "1.0", "--budget", "2000"])
    assert res.exit_code == 0
    assert res.stdout.startswith("eps,upper")


def test_cli_check_exit_code_and_witness(runner, tmp_path):
    out = tmp_path / "c.json"
    res = runner.invoke(main, ["check", "--space", "fixture:l1_2", "--budget", "1000", "--format", "json",
                               "--out", str(out)])
    assert res.exit_code == dio.EXIT_PROPERTY_FAILED
    assert (tmp_path / "c.json.witness.json").exists()
    assert json.loads(out.read_text())["rows"][0]["status"] == "fail"


def test_cli_usage_errors(runner):
    assert runner.invoke(main, ["modulus", "--space", "fixture:euclidean2", "--eps-grid", "0:1:0.5"]).exit_code == 2
    assert runner.invoke(main, ["modulus", "--space", "fixture:euclidean2", "--budget", "0"]).exit_code == 2
    assert runner.invoke(main, ["frobnicate"]).exit_code == 2


def test_cli_schema_error(runner, tmp_path):
    p = write(tmp_path, {"kothe": {"p": 2, "mu": [0.0]}, "fibers": MINIMAL["fibers"]})
    res = runner.invoke(main, ["report", "--space", str(p)])
    assert res.exit_code == dio.EXIT_SCHEMA
    assert "strictly positive" in res.output


def test_cli_determinism_error(runner, tmp_path):
    args = ["report", "--space", "fixture:euclidean2", "--format", "json"]
    assert runner.invoke(main, args).exit_code == 0
    log = tmp_path / "results" / "records.jsonl"
    rec = json.loads(log.read_text())
    rec["payload_sha256"] = "0" * 64
    log.write_text(json.dumps(rec) + "\n")
    assert runner.invoke(main, args).exit_code == dio.EXIT_DETERMINISM


def test_cli_day_bound_summary(runner, tmp_path):
    out = tmp_path / "d.csv"
    res = runner.invoke(main, ["day-bound", "--space", "fixture:uc_p2_euclid", "--eps-grid", "1.0", "--budget", "2000",
                               "--out", str(out)])
    assert res.exit_code == 0, res.output
    header, row = out.read_text().splitlines()
    assert header == "eps,eta,alpha,omega,tau,measured_delta_upper,verdict"
    assert row.endswith(",pass")
    assert "tau=" in res.output
