"""Descriptor loading, experiment dispatch and result persistence."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .convexity import hudzik_point_check, revalidate, sc_search, strong_convexity_check
from .day_bound import compose_day_bound, day_bound_inputs, verify_day_bound
from .direct_integral import DirectIntegralSpace, construct_norming_functional, norming_residuals, \
    verify_duality_isometry
from .fixtures import get_fixture
from .modulus import ModulusError, modulus_curve
from .spaces import INF, SpaceError
from .verdict import PropertyVerdict

TASKS = ("modulus", "day-bound", "check", "dual", "report")
FORMATS = ("csv", "json")
RESULTS_ENV = "DIGEO_RESULTS_DIR"

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_PROPERTY_FAILED = 3
EXIT_SCHEMA = 4
EXIT_DETERMINISM = 5
EXIT_NUMERICAL = 6


class SchemaError(SpaceError):
    pass


class DeterminismError(RuntimeError):
    pass


# -- spaces ------------------------------------------------------------------------------

def load_space(path: str | os.PathLike) -> DirectIntegralSpace:
    """Load a descriptor file, or a bundled space given as ``fixture:<name>``."""
    text = str(path)
    if text.startswith("fixture:"):
        try:
            return get_fixture(text.split(":", 1)[1])
        except KeyError as exc:
            raise SchemaError(str(exc.args[0])) from None
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"space descriptor {p} does not exist")
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{p}: invalid JSON ({exc})") from None
    return space_from_dict(data)


def space_from_dict(data) -> DirectIntegralSpace:
    try:
        return DirectIntegralSpace.from_dict(data)
    except SchemaError:
        raise
    except (SpaceError, TypeError, KeyError) as exc:
        raise SchemaError(str(exc)) from None


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def space_hash(Y: DirectIntegralSpace) -> str:
    return hashlib.sha256(canonical_json(Y.to_dict()).encode()).hexdigest()


def save_space(Y: DirectIntegralSpace, path) -> None:
    atomic_write(path, json.dumps(Y.to_dict(), indent=2, sort_keys=True) + "\n")


def parse_eps_grid(text: str) -> list[float]:
    """``start:stop:step`` (stop included when hit) or a comma separated list."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"eps grid must look like start:stop:step, got {text!r}")
        a, b, c = (float(v) for v in parts)
        if not c > 0:
            raise ValueError("eps grid step must be positive")
        if b < a:
            raise ValueError("eps grid stop must not be below start")
        n = int(math.floor((b - a) / c + 1e-9)) + 1
        grid = [round(a + k * c, 12) for k in range(n)]
    else:
        grid = [float(v) for v in text.split(",") if v.strip()]
    if not grid:
        raise ValueError("eps grid is empty")
    for e in grid:
        if not 0 < e <= 2:
            raise ValueError(f"eps values must lie in (0, 2], got {e}")
    return sorted(set(grid))


# -- files -------------------------------------------------------------------------------

def atomic_write(path, text: str) -> None:
    """Write via a temporary file in the target directory and rename over the target."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def to_csv(rows: list[dict], columns: list[str]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow({k: _cell(r.get(k, "")) for k in columns})
    return buf.getvalue()


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (list, np.ndarray)):
        return " ".join(repr(float(x)) for x in np.ravel(v))
    return "" if v is None else str(v)


# -- result store -----------------------------------------------------------------------------

class ResultStore:
    """Append-only JSON-lines log; a repeated key must carry the identical payload."""

    def __init__(self, directory=None):
        directory = directory or os.environ.get(RESULTS_ENV) or "digeo-results"
        self.dir = Path(directory)
        self.log = self.dir / "records.jsonl"

    def records(self) -> list[dict]:
        if not self.log.exists():
            return []
        return [json.loads(line) for line in self.log.read_text().splitlines() if line.strip()]

    @staticmethod
    def key(space_id: str, task: str, seed: int, budget: int, config_digest: str) -> str:
        return f"{space_id}:{task}:{seed}:{budget}:{config_digest}"

    def append(self, key: str, config: dict, payload_text: str) -> dict:
        digest = hashlib.sha256(payload_text.encode()).hexdigest()
        for rec in self.records():
            if rec["key"] == key:
                if rec["payload_sha256"] != digest:
                    raise DeterminismError(f"key {key} was recorded with a different payload")
                return rec
        rec = {"key": key, "config": config, "version": __version__, "payload_sha256": digest,
               "payload": json.loads(payload_text) if payload_text.lstrip().startswith(("{", "[")) else payload_text}
        self.dir.mkdir(parents=True, exist_ok=True)
        line = canonical_json(rec) + "\n"
        with open(self.log, "a") as fh:
            fh.write(line)
        return rec


# -- experiments ---------------------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    space: str
    task: str
    eps_grid: list[float] = field(default_factory=lambda: [0.25, 0.5, 1.0, 1.5, 2.0])
    budget: int = 20000
    seed: int = 0
    fmt: str = "csv"
    out: str | None = None
    results_dir: str | None = None
    functionals: int = 20

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}")
        if self.fmt not in FORMATS:
            raise ValueError(f"format must be one of {FORMATS}")
        if self.budget < 1:
            raise ValueError("budget must be >= 1")
        if not self.eps_grid:
            raise ValueError("eps grid is empty")
        for e in self.eps_grid:
            if not 0 < e <= 2:
                raise ValueError(f"eps values must lie in (0, 2], got {e}")

    def echo(self) -> dict:
        d = asdict(self)
        d.pop("out")
        d.pop("results_dir")
        return d


@dataclass
class ExperimentResult:
    exit_code: int
    payload: dict
    text: str
    out: Path | None = None
    witness_path: Path | None = None
    lines: list[str] = field(default_factory=list)


def _verdict_row(v: PropertyVerdict, space_id: str, ref: str) -> dict:
    return {"property": v.property, "status": v.status, "margin": v.margin, "space_id": space_id,
            "witness_ref": ref if v.failed else ""}


def _task_modulus(Y, cfg, sid):
    curve = modulus_curve(Y, cfg.eps_grid, cfg.budget, cfg.seed, certify=True)
    rows = curve.csv_rows()
    lines = [f"eps={r['eps']} upper={r['upper']} certified_lower={r['certified_lower'] or '-'}" for r in rows]
    payload = {"rows": rows, "space_id": sid}
    cols = ["eps", "upper", "certified_lower", "witness_x", "witness_y", "budget", "seed"]
    return EXIT_OK, payload, rows, cols, lines, None


def _task_day_bound(Y, cfg, sid):
    rows, lines, reports, failed = [], [], [], None
    for eps in cfg.eps_grid:
        if eps >= 2:
            lines.append(f"eps={eps!r} skipped: the bound needs eps < 2")
            continue
        E_curve, fib = day_bound_inputs(Y, eps, cfg.budget, cfg.seed)
        rep = compose_day_bound(E_curve, fib, eps)
        v = verify_day_bound(Y, rep, cfg.budget, cfg.seed)
        measured = v.details.get("delta_Y_upper", "")
        rows.append({"eps": eps, "eta": rep.eta, "alpha": rep.alpha, "omega": rep.omega, "tau": rep.tau,
                     "measured_delta_upper": measured, "verdict": v.status})
        reports.append({"report": rep.to_dict(), "verdict": v.to_dict()})
        lines.append(f"eps={eps!r} tau={rep.tau!r} verdict={v.status}")
        if v.failed and failed is None:
            failed = v
    payload = {"rows": rows, "reports": reports, "space_id": sid,
               "within_duality_hypotheses": Y.within_duality_hypotheses}
    cols = ["eps", "eta", "alpha", "omega", "tau", "measured_delta_upper", "verdict"]
    return (EXIT_PROPERTY_FAILED if failed else EXIT_OK), payload, rows, cols, lines, failed


def _task_check(Y, cfg, sid):
    rng = np.random.default_rng([cfg.seed, 7])
    f = rng.standard_normal(Y.dim)
    f = f / float(Y.norm(f))
    verdicts = [sc_search(Y, cfg.budget, cfg.seed)]
    for prop in ("extreme", "strongly_extreme", "LUR"):
        verdicts.append(hudzik_point_check(Y, f, prop, cfg.budget, cfg.seed))
    if 1 < Y.E.p < INF:
        verdicts.append(strong_convexity_check(Y, f, cfg.budget, cfg.seed))
    rows, lines, failed = [], [], None
    for v in verdicts:
        rows.append(_verdict_row(v, sid, "witness"))
        lines.append(f"{v.property} {v.status} margin={v.margin!r}")
        if v.failed and failed is None:
            failed = v
    payload = {"rows": rows, "verdicts": [v.to_dict() for v in verdicts], "center": f, "space_id": sid}
    cols = ["property", "space_id", "status", "margin", "witness_ref"]
    return (EXIT_PROPERTY_FAILED if failed else EXIT_OK), payload, rows, cols, lines, failed


def _task_dual(Y, cfg, sid):
    rng = np.random.default_rng([cfg.seed, 11])
    rows, lines, verdicts, failed = [], [], [], None
    for k in range(cfg.functionals):
        F = rng.standard_normal(Y.dim)
        v = verify_duality_isometry(Y, F, cfg.budget, cfg.seed + k)
        verdicts.append(v.to_dict())
        rows.append({"index": k, "sup_found": v.details["sup_found"], "closed_form": v.details["closed_form"],
                     "gap": v.details["gap"], "status": v.status})
        lines.append(f"functional {k}: gap={v.details['gap']!r} {v.status}")
        if v.failed and failed is None:
            failed = v
    f = rng.standard_normal(Y.dim)
    f = f / float(Y.norm(f))
    res = None
    try:
        res = norming_residuals(Y, construct_norming_functional(Y, f), f)
    except ArithmeticError as exc:
        lines.append(f"norming functional: {exc}")
    payload = {"rows": rows, "verdicts": verdicts, "norming_residuals": res, "space_id": sid,
               "within_duality_hypotheses": Y.within_duality_hypotheses}
    cols = ["index", "sup_found", "closed_form", "gap", "status"]
    return (EXIT_PROPERTY_FAILED if failed else EXIT_OK), payload, rows, cols, lines, failed


def _task_report(Y, cfg, sid):
    c, C = Y.euclidean_bounds()
    info = {
        "space_id": sid,
        "atoms": Y.n_atoms,
        "dim": Y.dim,
        "lattice_p": "inf" if Y.E.p == INF else Y.E.p,
        "fiber_families": ",".join(X.family for X in Y.fibers),
        "fiber_dims": ",".join(str(d) for d in Y.dims),
        "euclidean_lower": c,
        "euclidean_upper": C,
        "within_duality_hypotheses": Y.within_duality_hypotheses,
    }
    rows = [{"key": k, "value": v} for k, v in info.items()]
    lines = [f"{k}: {v}" for k, v in info.items()]
    return EXIT_OK, {"rows": rows, "space": Y.to_dict(), **info}, rows, ["key", "value"], lines, None


_DISPATCH = {
    "modulus": _task_modulus,
    "day-bound": _task_day_bound,
    "check": _task_check,
    "dual": _task_dual,
    "report": _task_report,
}


def run_experiment(cfg: ExperimentConfig, echo: Callable[[str], None] | None = None) -> ExperimentResult:
    """Run one task, write its output atomically and log it in the result store."""
    Y = load_space(cfg.space)
    sid = space_hash(Y)
    code, payload, rows, cols, lines, failed = _DISPATCH[cfg.task](Y, cfg, sid)
    payload = {"config": cfg.echo(), "version": __version__, **payload}
    text = dumps(payload) if cfg.fmt == "json" else to_csv(rows, cols)
    out = witness_path = None
    if cfg.out:
        out = Path(cfg.out)
        atomic_write(out, text)
        if failed is not None:
            witness_path = out.with_name(out.name + ".witness.json")
            ok, diff = revalidate(Y, failed)
            atomic_write(witness_path, dumps({"verdict": failed.to_dict(), "revalidated": ok,
                                              "revalidation_diff": diff}))
    store = ResultStore(cfg.results_dir)
    digest = hashlib.sha256(canonical_json(_jsonable(cfg.echo())).encode()).hexdigest()[:16]
    store.append(ResultStore.key(sid, cfg.task, cfg.seed, cfg.budget, digest), _jsonable(cfg.echo()), dumps(payload))
    if echo:
        for line in lines:
            echo(line)
    return ExperimentResult(code, payload, text, out, witness_path, lines)


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, DeterminismError):
        return EXIT_DETERMINISM
    if isinstance(exc, (SchemaError, SpaceError, FileNotFoundError, json.JSONDecodeError)):
        return EXIT_SCHEMA
    if isinstance(exc, (ArithmeticError, ModulusError, FloatingPointError)):
        return EXIT_NUMERICAL
    if isinstance(exc, ValueError):
        return EXIT_USAGE
    raise exc
