"""JSON-configured experiment runner with CSV output and a results manifest.

A config looks like::

    {
      "schema_version": 1,
      "seed": 42,
      "out_dir": "results",
      "device": {"kappa": 3.0},
      "initial_x": 0.5,
      "experiments": [
        {"name": "pair10", "protocol": {"kind": "PAIR", "dt_ms": 10}},
        {"name": "window", "protocol": {"kind": "PAIR"},
         "sweep": {"param": "dt_ms", "values": [-10, 10]}}
      ],
      "rcb": [{"name": "states", "rows": 8, "cols": 8,
               "targets_ohm": [2e3, 2e4, 2e5], "cycles": 200}],
      "fit": [{"name": "rule", "dataset": "data.csv"}]
    }

``initial_x`` may instead be ``{"program_to": <siemens>}`` to write the
device to a conductance before every run. Sweep points are independent
runs; with ``workers > 1`` they execute in a process pool and the output
is identical to a sequential run.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import jsonschema
import numpy as np

from .device import DeviceParams, DeviceState, conductance_of
from .experiments import Bench, program_device, run_from_state
from .fitting import fit_triplet, load_dataset_csv
from .protocols import ProtocolError, ProtocolKind, ProtocolSpec
from .rcb import R_OFF, R_ON, cycle_states, synthesize_state

SCHEMA_VERSION = 1

_NUM = {"type": "number"}
_PROTOCOL = {
    "type": "object",
    "required": ["kind"],
    "properties": {
        "kind": {"enum": [k.value for k in ProtocolKind]},
        "dt_ms": _NUM, "dt1_ms": _NUM, "dt2_ms": _NUM, "T_ms": _NUM,
        "order": {"enum": ["PRE_POST_PRE", "POST_PRE_POST"]},
        "n_reps": {"type": "integer", "minimum": 1},
        "rep_freq": {"type": "number", "exclusiveMinimum": 0},
        "amp": {"type": "number", "exclusiveMinimum": 0},
        "width": {"type": "number", "exclusiveMinimum": 0},
        "n_spikes": {"type": "integer", "minimum": 1},
        "period": {"type": "number", "exclusiveMinimum": 0},
    },
    "additionalProperties": False,
}
_NAME = {"type": "string", "pattern": "^[A-Za-z0-9_.-]+$"}

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["schema_version", "experiments"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "seed": {"type": "integer", "minimum": 0},
        "out_dir": {"type": "string"},
        "workers": {"type": "integer", "minimum": 1},
        "device": {"type": "object", "additionalProperties": _NUM},
        "bench": {"type": "object"},
        "initial_x": {
            "oneOf": [
                {"type": "number", "minimum": 0, "maximum": 1},
                {"type": "object", "required": ["program_to"],
                 "properties": {"program_to": {"type": "number", "exclusiveMinimum": 0}},
                 "additionalProperties": False},
            ]
        },
        "experiments": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "protocol"],
                "properties": {
                    "name": _NAME,
                    "protocol": _PROTOCOL,
                    "initial_x": {"type": "number", "minimum": 0, "maximum": 1},
                    "sweep": {
                        "type": "object",
                        "required": ["param", "values"],
                        "properties": {
                            "param": {"enum": ["dt_ms", "dt1_ms", "dt2_ms", "T_ms", "rep_freq",
                                               "amp", "width", "period", "n_reps", "initial_x"]},
                            "values": {"type": "array", "minItems": 1, "items": _NUM},
                        },
                        "additionalProperties": False,
                    },
                },
                "additionalProperties": False,
            },
        },
        "rcb": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "targets_ohm"],
                "properties": {
                    "name": _NAME,
                    "rows": {"type": "integer", "minimum": 1},
                    "cols": {"type": "integer", "minimum": 1},
                    "r_on": {"type": "number", "exclusiveMinimum": 0},
                    "r_off": {"type": "number", "exclusiveMinimum": 0},
                    "targets_ohm": {"type": "array", "minItems": 1, "items": _NUM},
                    "cycles": {"type": "integer", "minimum": 0},
                },
                "additionalProperties": False,
            },
        },
        "fit": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "dataset"],
                "properties": {"name": _NAME, "dataset": {"type": "string"},
                               "restarts": {"type": "integer", "minimum": 1}},
                "additionalProperties": False,
            },
        },
    },
    "additionalProperties": False,
}


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending JSON path."""


def _json_path(err: jsonschema.ValidationError) -> str:
    path = "$"
    for part in err.absolute_path:
        path += f"[{part}]" if isinstance(part, int) else f".{part}"
    return path


@dataclass
class ExperimentConfig:
    device: DeviceParams
    experiments: list[dict]
    initial_x: float | dict = 0.5
    bench: Bench = field(default_factory=Bench)
    rcb: list[dict] = field(default_factory=list)
    fit: list[dict] = field(default_factory=list)
    seed: int = 42
    out_dir: Path = Path("results")
    workers: int = 1
    source: dict = field(default_factory=dict)
    base_dir: Path = Path(".")

    @classmethod
    def from_dict(cls, raw: dict, base_dir: Path | str = ".") -> "ExperimentConfig":
        validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
        errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
        if errors:
            e = errors[0]
            raise ConfigError(f"{_json_path(e)}: {e.message}")
        base_dir = Path(base_dir)
        try:
            device = DeviceParams.from_dict(raw.get("device", {}))
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"$.device: {exc}") from None
        try:
            bench = Bench.from_dict(raw.get("bench", {}))
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"$.bench: {exc}") from None
        names = [e["name"] for e in raw["experiments"]]
        names += [j["name"] for j in raw.get("rcb", [])] + [j["name"] for j in raw.get("fit", [])]
        dup = sorted({n for n in names if names.count(n) > 1})
        if dup:
            raise ConfigError(f"$: duplicate job name(s) {', '.join(dup)}")
        for k, job in enumerate(raw.get("fit", [])):
            if not (base_dir / job["dataset"]).exists():
                raise ConfigError(f"$.fit[{k}].dataset: file not found: {job['dataset']}")
        for k, exp in enumerate(raw["experiments"]):
            try:
                for spec, _ in expand(exp):
                    spec.build()
            except ProtocolError as exc:
                raise ConfigError(f"$.experiments[{k}].protocol: {exc}") from None
        return cls(device=device, experiments=list(raw["experiments"]),
                   initial_x=raw.get("initial_x", bench.stdp_x0), bench=bench,
                   rcb=list(raw.get("rcb", [])), fit=list(raw.get("fit", [])),
                   seed=int(raw.get("seed", 42)), out_dir=Path(raw.get("out_dir", "results")),
                   workers=int(raw.get("workers", 1)), source=raw, base_dir=base_dir)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"config file not found: {path}")
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from None
        return cls.from_dict(raw, path.parent)


def expand(exp: dict) -> list[tuple[ProtocolSpec, float | None]]:
    """Protocol specs of one experiment entry; a sweep gives one per value."""
    base = dict(exp["protocol"])
    sweep = exp.get("sweep")
    if sweep is None:
        return [(ProtocolSpec.from_dict(base), exp.get("initial_x"))]
    out = []
    for v in sweep["values"]:
        if sweep["param"] == "initial_x":
            out.append((ProtocolSpec.from_dict(base), float(v)))
            continue
        d = dict(base)
        d[sweep["param"]] = int(v) if sweep["param"] == "n_reps" else v
        out.append((ProtocolSpec.from_dict(d), exp.get("initial_x")))
    return out


def point_seed(master: int, index: int) -> int:
    """Seed of sweep point ``index``, independent of execution order."""
    return int(np.random.SeedSequence([master, index]).generate_state(1, np.uint64)[0])


@dataclass
class ResultRecord:
    name: str
    index: int
    inputs: dict
    g_initial: float
    dG_percent: float
    trajectory: str
    seed: int
    wall_time: float = 0.0

    def to_dict(self) -> dict:
        # wall time is a diagnostic only; it is kept out of written files
        return {"name": self.name, "index": self.index, "inputs": self.inputs,
                "g_initial": self.g_initial, "dG_percent": self.dG_percent,
                "trajectory": self.trajectory, "seed": self.seed}


def _initial_state(init, params: DeviceParams, bench: Bench) -> DeviceState:
    if isinstance(init, dict):
        return program_device(float(init["program_to"]), params, bench)[0]
    return DeviceState(float(init))


def _run_point(args):
    spec, init, params, bench = args
    t0 = time.perf_counter()
    state = _initial_state(init, params, bench)
    g0 = conductance_of(state, params)
    dg, _, traj = run_from_state(spec.build(), state, params)
    if not math.isfinite(dg):
        raise RuntimeError(f"non-finite conductance change for {spec}")
    return g0, dg, traj, time.perf_counter() - t0


def fmt(v: Any) -> str:
    """CSV cell: shortest round-trip repr for floats, empty for ``None``."""
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def emit_csv(records: Iterable[dict | Sequence], schema: Sequence[str], path) -> Path:
    """Header then one row per record, in input order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(schema)
        for rec in records:
            row = [rec.get(c) for c in schema] if isinstance(rec, dict) else list(rec)
            if len(row) != len(schema):
                raise ValueError(f"record has {len(row)} fields, schema has {len(schema)}")
            w.writerow([fmt(v) for v in row])
    return path


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class Outputs:
    """Tracks every file written under ``out_dir`` for the manifest."""

    def __init__(self, out_dir: Path):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.files: list[str] = []

    def path(self, name: str) -> Path:
        if name in self.files:
            raise ValueError(f"output {name} written twice")
        self.files.append(name)
        return self.out_dir / name

    def csv(self, name, records, schema) -> Path:
        return emit_csv(records, schema, self.path(name))

    def json(self, name, obj) -> Path:
        p = self.path(name)
        p.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
        return p

    def svg(self, name, series, **kw) -> Path:
        from .plotting import emit_svg
        return emit_svg(series, self.path(name), **kw)

    def manifest(self, command: str, inputs: dict, seed: int, extra: dict | None = None) -> Path:
        entries = [{"path": f, "sha256": _sha256(self.out_dir / f)} for f in self.files]
        doc = {"schema_version": SCHEMA_VERSION, "command": command, "seed": seed,
               "inputs": inputs, "outputs": entries}
        if extra:
            doc.update(extra)
        p = self.out_dir / "manifest.json"
        p.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        return p


def map_points(fn, items: list, workers: int = 1) -> list:
    """``[fn(i) for i in items]``, optionally on a process pool (order preserved)."""
    if workers > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


def run_experiment(config: ExperimentConfig, out_dir: Path | None = None
                   ) -> tuple[list[ResultRecord], Path]:
    """Run every job of ``config``; returns the records and the manifest path."""
    out = Outputs(out_dir or config.out_dir)
    records: list[ResultRecord] = []
    extra: dict = {}
    for exp in config.experiments:
        points = expand(exp)
        jobs = [(spec, config.initial_x if init is None else init, config.device, config.bench)
                for spec, init in points]
        results = map_points(_run_point, jobs, config.workers)
        traj_name = f"{exp['name']}_trajectory.csv"
        traj_rows = []
        exp_records = []
        for k, ((spec, _), job, (g0, dg, traj, wall)) in enumerate(zip(points, jobs, results)):
            inputs = {"protocol": spec.to_dict(), "initial_x": job[1]}
            rec = ResultRecord(exp["name"], k, inputs, g0, dg, traj_name,
                               point_seed(config.seed, len(records)), wall)
            records.append(rec)
            exp_records.append(rec)
            traj_rows += [(k, t, g) for t, g in traj]
        rows = []
        for rec in exp_records:
            p = rec.inputs["protocol"]
            rows.append({"index": rec.index, "kind": p["kind"], "order": p.get("order"),
                         "dt_ms": p.get("dt_ms"), "dt1_ms": p.get("dt1_ms"),
                         "dt2_ms": p.get("dt2_ms"), "T_ms": p.get("T_ms"),
                         "freq_hz": p["rep_freq"], "n_reps": p["n_reps"],
                         "initial_x": rec.inputs["initial_x"] if not isinstance(rec.inputs["initial_x"], dict) else None,
                         "g_initial_s": rec.g_initial, "dG_percent": rec.dG_percent})
        out.csv(f"{exp['name']}.csv", rows, EXPERIMENT_COLUMNS)
        out.csv(traj_name, traj_rows, ["index", "t_s", "g_s"])
    for k, job in enumerate(config.rcb):
        log, lattices = rcb_cycling(job)
        out.csv(f"{job['name']}.csv", log, ["cycle", "state_index", "resistance_ohm"])
        out.json(f"{job['name']}_lattices.json", [lat.to_dict() for lat in lattices])
    for k, job in enumerate(config.fit):
        data = load_dataset_csv(config.base_dir / job["dataset"])
        seed = point_seed(config.seed, 10_000 + k)
        res = fit_triplet(data, seed=seed, restarts=job.get("restarts", 4))
        out.json(f"{job['name']}.json", res.to_dict())
    extra["records"] = [r.to_dict() for r in records]
    manifest = out.manifest("run", config.source, config.seed, extra)
    return records, manifest


EXPERIMENT_COLUMNS = ["index", "kind", "order", "dt_ms", "dt1_ms", "dt2_ms", "T_ms", "freq_hz",
                      "n_reps", "initial_x", "g_initial_s", "dG_percent"]


def rcb_cycling(job: dict):
    """Synthesize the target states of an RCB job and cycle through them."""
    rows, cols = job.get("rows", 8), job.get("cols", 8)
    r_on, r_off = job.get("r_on", R_ON), job.get("r_off", R_OFF)
    lattices = [synthesize_state(float(t), rows, cols, r_on, r_off) for t in job["targets_ohm"]]
    return cycle_states(lattices, job.get("cycles", 200)), lattices
