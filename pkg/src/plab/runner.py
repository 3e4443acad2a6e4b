"""Experiment orchestration: JSON config parsing, seeded sweep execution,
and CSV/SVG artifact emission.

A config names one experiment kind, a parameter block for that kind, a seed
list, and optionally a ``sweep`` object mapping dotted parameter paths to
value lists.  The sweep axes and seeds expand into a Cartesian product of
independent runs, each identified by a hash of its resolved parameters.
"""

from __future__ import annotations

import concurrent.futures
import copy
import csv
import hashlib
import itertools
import json
import os
import shutil
import time
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import capacity, dynamics, infer, nn, tasks
from .rl import agent as rl_agent
from .rl import gridworld as gw

KINDS = ("seqfit", "rl-train", "capacity-probe", "td-sim", "rank")
ENV_OUT_VAR = "PLAB_OUT"
DEFAULT_OUT = "plab_out"


class ConfigError(ValueError):
    """A config failed validation; the message names the offending path."""


# Field schemas.  Every leaf carries a JSON-native default so that a parsed
# config re-serializes to an identical object (round-trip property).

_INFER_SCHEMA = {
    "k": {"type": "int", "default": 10},
    "beta": {"type": "float", "default": 100.0},
    "alpha": {"type": "float", "default": 0.1},
    "head_seed": {"type": "int", "default": 0},
}

_DATASET_SCHEMA = {
    "kind": {"type": "str", "default": "synthetic", "choices": ("synthetic", "idx")},
    "n": {"type": "int", "default": 1000},
    "dim": {"type": "int", "default": 64},
    "num_clusters": {"type": "int", "default": 10},
    "seed": {"type": "int", "default": 0},
    "images_path": {"type": "str", "default": ""},
    "labels_path": {"type": "str", "default": ""},
}

_SEQFIT_SCHEMA = {
    "task_kind": {"type": "str", "default": "random_net", "choices": tasks.TARGET_KINDS},
    "dataset": {"type": "block", "schema": _DATASET_SCHEMA},
    "learner_widths": {"type": "int_list", "default": [64, 32, 32, 1]},
    "num_iterations": {"type": "int", "default": 30},
    # 0 means the per-task default step budget.
    "steps_per_iteration": {"type": "int", "default": 0},
    "batch_size": {"type": "int", "default": 64},
    "learning_rate": {"type": "float", "default": 1e-3},
    "optimizer": {"type": "str", "default": "adam", "choices": ("adam", "sgd")},
    "infer": {"type": "optional_block", "schema": _INFER_SCHEMA},
    "rank_epsilon": {"type": "float", "default": 0.01},
    "rank_delta": {"type": "float", "default": 0.01},
    "task_seed": {"type": "int", "default": 0},
}

_ENV_SCHEMA = {
    "layout": {"type": "str", "default": "open", "choices": ("open", "four_rooms")},
    "size": {"type": "int", "default": 8},
    "reward_mode": {"type": "str", "default": "sparse", "choices": gw.REWARD_MODES},
    "gamma": {"type": "float", "default": 0.99},
    "horizon": {"type": "int", "default": 100},
}

_RC_SCHEMA = {
    "num_heads": {"type": "int", "default": 5},
    "cumulant_scale": {"type": "float", "default": 10.0},
    "loss_weight": {"type": "float", "default": 1.0},
    "seed": {"type": "int", "default": 0},
}

_AGENT_SCHEMA = {
    "algorithm": {"type": "str", "default": "dqn", "choices": rl_agent.ALGORITHMS},
    "hidden": {"type": "int_list", "default": [64, 64]},
    "width_multiplier": {"type": "int", "default": 1},
    "learning_rate": {"type": "float", "default": 1e-3},
    "epsilon_start": {"type": "float", "default": 1.0},
    "epsilon_end": {"type": "float", "default": 0.05},
    "epsilon_decay_steps": {"type": "int", "default": 10_000},
    "target_update_period": {"type": "int", "default": 1000},
    "learn_start": {"type": "int", "default": 1000},
    "buffer_capacity": {"type": "int", "default": 50_000},
    "batch_size": {"type": "int", "default": 32},
    "num_steps": {"type": "int", "default": 50_000},
    "checkpoint_period": {"type": "int", "default": 5000},
    "rank_probe_samples": {"type": "int", "default": 5000},
    "rank_epsilon": {"type": "float", "default": 0.01},
    "infer": {"type": "optional_block", "schema": _INFER_SCHEMA},
    "rc_aux": {"type": "optional_block", "schema": _RC_SCHEMA},
    "concat_random_features": {"type": "bool", "default": False},
}

_RL_SCHEMA = {
    "env": {"type": "block", "schema": _ENV_SCHEMA},
    "agent": {"type": "block", "schema": _AGENT_SCHEMA},
}

_PROBE_SCHEMA = {
    "checkpoint": {"type": "str", "required": True},
    "num_target_seeds": {"type": "int", "default": 10},
    "budget_steps": {"type": "int", "default": 2000},
    "batch_size": {"type": "int", "default": 32},
    "oldest_fraction": {"type": "float", "default": 0.1},
}

_TDSIM_SCHEMA = {
    "num_states": {"type": "int", "default": 5},
    "feature_dim": {"type": "int", "default": 4},
    "gamma": {"type": "float", "default": 0.9},
    "num_heads": {"type": "int", "default": 512},
    # 0 means 1 / num_heads.
    "alpha": {"type": "float", "default": 0.0},
    "beta": {"type": "float", "default": 1.0},
    "sigma_m_sq": {"type": "float", "default": 1.0},
    "fixed_weights": {"type": "bool", "default": False},
    "reward_scale": {"type": "float", "default": 0.0},
    "dt": {"type": "float", "default": 1e-3},
    "T": {"type": "float", "default": 5.0},
    "snapshot_stride": {"type": "int", "default": 1000},
    "phi0_scale": {"type": "float", "default": 1.0},
    "rank_epsilon": {"type": "float", "default": 0.01},
}

_RANK_SCHEMA = {
    "widths": {"type": "int_list", "default": [64, 64, 64, 1]},
    "num_inputs": {"type": "int", "default": 5000},
    "num_clusters": {"type": "int", "default": 10},
    "epsilon": {"type": "float", "default": 0.01},
    "delta": {"type": "float", "default": 0.01},
}

_PARAM_SCHEMAS = {
    "seqfit": _SEQFIT_SCHEMA,
    "rl-train": _RL_SCHEMA,
    "capacity-probe": _PROBE_SCHEMA,
    "td-sim": _TDSIM_SCHEMA,
    "rank": _RANK_SCHEMA,
}


def _check_scalar(value, fspec: dict, path: str):
    t = fspec["type"]
    if t == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected integer, got {type(value).__name__}")
        out = int(value)
    elif t == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected number, got {type(value).__name__}")
        out = float(value)
    elif t == "bool":
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected boolean, got {type(value).__name__}")
        out = value
    elif t == "str":
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected string, got {type(value).__name__}")
        out = value
    elif t == "int_list":
        if (not isinstance(value, list) or not value
                or any(isinstance(v, bool) or not isinstance(v, int) for v in value)):
            raise ConfigError(f"{path}: expected non-empty list of integers")
        out = [int(v) for v in value]
    else:
        raise AssertionError(f"unhandled schema type {t}")
    choices = fspec.get("choices")
    if choices is not None and out not in choices:
        raise ConfigError(f"{path}: expected one of {list(choices)}, got {out!r}")
    return out


def _validate_block(schema: dict, obj, path: str) -> dict:
    if not isinstance(obj, dict):
        raise ConfigError(f"{path or 'config'}: expected object, got {type(obj).__name__}")
    unknown = sorted(set(obj) - set(schema))
    if unknown:
        where = path or "config"
        raise ConfigError(f"{where}: unknown key(s) {unknown}")
    out = {}
    for key, fspec in schema.items():
        p = f"{path}.{key}" if path else key
        present = key in obj and obj[key] is not None
        if fspec["type"] == "block":
            out[key] = _validate_block(fspec["schema"], obj.get(key, {}) or {}, p)
        elif fspec["type"] == "optional_block":
            out[key] = _validate_block(fspec["schema"], obj[key], p) if present else None
        elif present:
            out[key] = _check_scalar(obj[key], fspec, p)
        elif fspec.get("required"):
            raise ConfigError(f"missing required field: {p}")
        else:
            out[key] = copy.deepcopy(fspec["default"])
    return out


def _schema_field(schema: dict, dotted: str):
    parts = dotted.split(".")
    node = schema
    for i, part in enumerate(parts):
        if part not in node:
            raise ConfigError(f"sweep: unknown parameter path {dotted!r}")
        fspec = node[part]
        last = i == len(parts) - 1
        if fspec["type"] in ("block", "optional_block"):
            if last:
                raise ConfigError(f"sweep: {dotted!r} names a block, not a value")
            node = fspec["schema"]
        elif not last:
            raise ConfigError(f"sweep: unknown parameter path {dotted!r}")
        else:
            return fspec
    raise ConfigError(f"sweep: unknown parameter path {dotted!r}")


@dataclass
class ExperimentConfig:
    kind: str
    params: dict
    seeds: list
    output_dir: str = ""
    sweep: dict = field(default_factory=dict)


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a JSON experiment config, filling all defaults."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}") from e
    if not isinstance(raw, dict):
        raise ConfigError("config: expected a top-level object")
    allowed = {"kind", "params", "seeds", "output_dir", "sweep"}
    unknown = sorted(set(raw) - allowed)
    if unknown:
        raise ConfigError(f"config: unknown key(s) {unknown}")
    if "kind" not in raw:
        raise ConfigError("missing required field: kind")
    kind = raw["kind"]
    if kind not in KINDS:
        raise ConfigError(f"kind: expected one of {list(KINDS)}, got {kind!r}")

    schema = _PARAM_SCHEMAS[kind]
    params = _validate_block(schema, raw.get("params", {}) or {}, "params")

    seeds = raw.get("seeds", [0])
    if (not isinstance(seeds, list) or not seeds
            or any(isinstance(s, bool) or not isinstance(s, int) for s in seeds)):
        raise ConfigError("seeds: expected non-empty list of integers")

    output_dir = raw.get("output_dir", "")
    if not isinstance(output_dir, str):
        raise ConfigError("output_dir: expected string")

    sweep_raw = raw.get("sweep", {}) or {}
    if not isinstance(sweep_raw, dict):
        raise ConfigError("sweep: expected object mapping parameter paths to lists")
    sweep = {}
    for dotted, values in sweep_raw.items():
        fspec = _schema_field(schema, dotted)
        if not isinstance(values, list) or not values:
            raise ConfigError(f"sweep.{dotted}: expected non-empty list")
        sweep[dotted] = [_check_scalar(v, fspec, f"sweep.{dotted}") for v in values]

    return ExperimentConfig(kind=kind, params=params, seeds=[int(s) for s in seeds],
                            output_dir=output_dir, sweep=sweep)


def serialize_config(cfg: ExperimentConfig) -> str:
    """Canonical JSON form; parsing it back yields an identical config."""
    payload = {
        "kind": cfg.kind,
        "params": cfg.params,
        "seeds": cfg.seeds,
        "output_dir": cfg.output_dir,
        "sweep": cfg.sweep,
    }
    return json.dumps(payload, sort_keys=True, indent=2)


def _apply_override(schema: dict, params: dict, dotted: str, value) -> None:
    parts = dotted.split(".")
    node_schema, node = schema, params
    for part in parts[:-1]:
        fspec = node_schema[part]
        if fspec["type"] == "optional_block" and node[part] is None:
            node[part] = _validate_block(fspec["schema"], {}, dotted)
        node_schema = fspec["schema"]
        node = node[part]
    node[parts[-1]] = value


def run_id_for(kind: str, params: dict, seed: int) -> str:
    """First 16 hex chars of a hash over the canonicalized run description."""
    blob = json.dumps({"kind": kind, "params": params, "seed": seed},
                      sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("ascii")).hexdigest()[:16]


@dataclass
class RunRecord:
    run_id: str
    kind: str
    seed: int
    params: dict
    overrides: dict = field(default_factory=dict)
    status: str = "planned"
    wall_time: float = 0.0
    outputs: list = field(default_factory=list)
    header: list = field(default_factory=list)
    rows: list = field(default_factory=list)
    error: Optional[str] = None


def plan_runs(cfg: ExperimentConfig) -> list[RunRecord]:
    """Cartesian product of sorted sweep axes and seeds, in deterministic order."""
    schema = _PARAM_SCHEMAS[cfg.kind]
    axes = sorted(cfg.sweep.items())
    paths = [p for p, _ in axes]
    combos = list(itertools.product(*[vals for _, vals in axes])) if axes else [()]
    records = []
    for combo in combos:
        params = copy.deepcopy(cfg.params)
        for dotted, value in zip(paths, combo):
            _apply_override(schema, params, dotted, value)
        for seed in cfg.seeds:
            records.append(RunRecord(
                run_id=run_id_for(cfg.kind, params, seed),
                kind=cfg.kind,
                seed=seed,
                params=copy.deepcopy(params),
                overrides=dict(zip(paths, combo)),
            ))
    return records


def resolve_output_dir(cfg: ExperimentConfig, override=None) -> str:
    """Precedence: explicit override, config output_dir, PLAB_OUT, ./plab_out."""
    if override:
        return str(override)
    if cfg.output_dir:
        return cfg.output_dir
    return os.environ.get(ENV_OUT_VAR) or DEFAULT_OUT


def _write_csv(path, header: list, rows: list) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _child_seed(seed: int, tag: int) -> int:
    return int(np.random.SeedSequence((seed, tag)).generate_state(1)[0])


def _build_dataset(d: dict) -> tasks.Dataset:
    if d["kind"] == "synthetic":
        return tasks.synth_inputs(d["seed"], d["n"], d["dim"], d["num_clusters"])
    if not d["images_path"]:
        raise ConfigError("dataset.images_path: required when dataset.kind is 'idx'")
    return tasks.load_idx(d["images_path"], d["labels_path"] or None)


def _build_infer(block: Optional[dict]) -> Optional[infer.InferConfig]:
    if block is None:
        return None
    return infer.InferConfig(k=block["k"], beta=block["beta"],
                             alpha=block["alpha"], head_seed=block["head_seed"])


def _run_seqfit(params: dict, seed: int, run_dir: Path):
    ds = _build_dataset(params["dataset"])
    widths = tuple(params["learner_widths"])
    if widths[0] != ds.dim:
        raise ConfigError(
            f"learner_widths[0]={widths[0]} does not match dataset dim {ds.dim}")
    result = tasks.run_sequence(
        nn.MlpSpec(widths),
        learner_seed=seed,
        task_kind=params["task_kind"],
        dataset=ds,
        num_iterations=params["num_iterations"],
        steps_per_iter=params["steps_per_iteration"] or None,
        batch_size=params["batch_size"],
        optimizer=nn.make_optimizer(params["optimizer"], params["learning_rate"]),
        infer_cfg=_build_infer(params["infer"]),
        task_seed=params["task_seed"],
        rank_epsilon=params["rank_epsilon"],
        rank_delta=params["rank_delta"],
    )
    path = run_dir / "sequence.csv"
    rows = result.csv_rows()
    _write_csv(path, tasks.SequenceResult.CSV_HEADER, rows)
    return tasks.SequenceResult.CSV_HEADER, rows, [path]


def _build_env(envp: dict) -> gw.GridWorld:
    if envp["layout"] == "four_rooms":
        return gw.make_four_rooms(horizon=envp["horizon"], gamma=envp["gamma"],
                                  reward_mode=envp["reward_mode"])
    return gw.make_open_grid(size=envp["size"], horizon=envp["horizon"],
                             gamma=envp["gamma"], reward_mode=envp["reward_mode"])


def _run_rl(params: dict, seed: int, run_dir: Path):
    env = _build_env(params["env"])
    a = params["agent"]
    cfg = rl_agent.AgentConfig(
        algorithm=a["algorithm"],
        hidden=tuple(a["hidden"]),
        width_multiplier=a["width_multiplier"],
        learning_rate=a["learning_rate"],
        epsilon_start=a["epsilon_start"],
        epsilon_end=a["epsilon_end"],
        epsilon_decay_steps=a["epsilon_decay_steps"],
        target_update_period=a["target_update_period"],
        learn_start=a["learn_start"],
        buffer_capacity=a["buffer_capacity"],
        batch_size=a["batch_size"],
        num_steps=a["num_steps"],
        checkpoint_period=a["checkpoint_period"],
        rank_probe_samples=a["rank_probe_samples"],
        rank_epsilon=a["rank_epsilon"],
        infer_cfg=_build_infer(a["infer"]),
        rc_aux=(rl_agent.RandomCumulantConfig(**a["rc_aux"])
                if a["rc_aux"] is not None else None),
        concat_random_features=a["concat_random_features"],
    )
    log = rl_agent.train_agent(env, cfg, seed, out_dir=run_dir)
    outputs = [run_dir / "log.csv"] + [Path(p) for p in log.checkpoint_dirs]
    return rl_agent.TrainingLog.CSV_HEADER, log.csv_rows(), outputs


def _run_probe(params: dict, seed: int, run_dir: Path):
    result = rl_agent.probe_checkpoint_capacity(
        params["checkpoint"],
        num_target_seeds=params["num_target_seeds"],
        budget_steps=params["budget_steps"],
        batch_size=params["batch_size"],
        oldest_fraction=params["oldest_fraction"],
        batch_seed=seed,
    )
    header = ["target_seed", "final_mse"]
    rows = [[str(i), format(v, ".17g")] for i, v in enumerate(result.per_seed)]
    path = run_dir / "probe.csv"
    _write_csv(path, header, rows)
    return header, rows, [path]


def _run_tdsim(params: dict, seed: int, run_dir: Path):
    mrp = dynamics.random_mrp(_child_seed(seed, 0), params["num_states"],
                              gamma=params["gamma"],
                              reward_scale=params["reward_scale"])
    rng = np.random.default_rng(_child_seed(seed, 1))
    phi0 = params["phi0_scale"] * rng.standard_normal(
        (params["num_states"], params["feature_dim"]))
    alpha = params["alpha"] or 1.0 / params["num_heads"]
    state = dynamics.init_flow_state(_child_seed(seed, 2), phi0,
                                     params["num_heads"], alpha,
                                     params["beta"], params["sigma_m_sq"])
    trajectory = dynamics.simulate_ensemble_flow(
        mrp, state, params["dt"], params["T"],
        fixed_weights=params["fixed_weights"],
        snapshot_stride=params["snapshot_stride"])
    rows = dynamics.trajectory_csv_rows(trajectory, params["rank_epsilon"])
    path = run_dir / "trajectory.csv"
    _write_csv(path, dynamics.TRAJECTORY_CSV_HEADER, rows)
    return dynamics.TRAJECTORY_CSV_HEADER, rows, [path]


def _run_rank(params: dict, seed: int, run_dir: Path):
    widths = tuple(params["widths"])
    spec = nn.MlpSpec(widths)
    net = nn.init_params(spec, _child_seed(seed, 0))
    ds = tasks.synth_inputs(_child_seed(seed, 1), params["num_inputs"],
                            widths[0], params["num_clusters"])
    fm = capacity.build_feature_matrix(net, spec, ds.inputs)
    report = capacity.rank_report(fm, epsilon=params["epsilon"], delta=params["delta"])
    rows = [report.csv_row()]
    path = run_dir / "rank.csv"
    _write_csv(path, capacity.RANK_CSV_HEADER, rows)
    return capacity.RANK_CSV_HEADER, rows, [path]


_EXECUTORS = {
    "seqfit": _run_seqfit,
    "rl-train": _run_rl,
    "capacity-probe": _run_probe,
    "td-sim": _run_tdsim,
    "rank": _run_rank,
}


def _execute_run(kind: str, params: dict, seed: int, run_id: str,
                 run_dir_str: str) -> dict:
    run_dir = Path(run_dir_str)
    run_dir.mkdir(parents=True, exist_ok=True)
    header, rows, outputs = _EXECUTORS[kind](params, seed, run_dir)
    rel_outputs = [os.path.relpath(str(p), str(run_dir)) for p in outputs]
    payload = {"run_id": run_id, "kind": kind, "seed": seed,
               "header": header, "rows": rows, "outputs": rel_outputs}
    tmp = run_dir / ".done.json.tmp"
    tmp.write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")
    os.replace(tmp, run_dir / "done.json")
    return payload


def run_experiment(cfg: ExperimentConfig, jobs: int = 1, dry_run: bool = False,
                   force: bool = False, out_dir=None) -> list[RunRecord]:
    """Execute (or plan) every run in the sweep; failures do not stop the rest.

    A run whose ``done.json`` marker already exists is loaded from disk
    instead of recomputed, unless ``force`` is set.
    """
    if jobs < 1:
        raise ValueError("jobs must be >= 1")
    records = plan_runs(cfg)
    if dry_run:
        return records

    out = Path(resolve_output_dir(cfg, out_dir))
    out.mkdir(parents=True, exist_ok=True)

    pending = []
    for rec in records:
        run_dir = out / f"run_{rec.run_id}"
        marker = run_dir / "done.json"
        if marker.exists() and not force:
            data = json.loads(marker.read_text(encoding="utf-8"))
            rec.status = "cached"
            rec.header = data["header"]
            rec.rows = data["rows"]
            rec.outputs = [str(run_dir / p) for p in data["outputs"]]
            continue
        if force and run_dir.exists():
            shutil.rmtree(run_dir)
        pending.append(rec)

    def finish(rec: RunRecord, started: float, payload=None, exc: Exception = None):
        rec.wall_time = time.monotonic() - started
        run_dir = out / f"run_{rec.run_id}"
        if exc is not None:
            rec.status = "failed"
            rec.error = f"{type(exc).__name__}: {exc}"
        else:
            rec.status = "completed"
            rec.header = payload["header"]
            rec.rows = payload["rows"]
            rec.outputs = [str(run_dir / p) for p in payload["outputs"]]

    if jobs == 1 or len(pending) <= 1:
        for rec in pending:
            started = time.monotonic()
            try:
                payload = _execute_run(rec.kind, rec.params, rec.seed, rec.run_id,
                                       str(out / f"run_{rec.run_id}"))
                finish(rec, started, payload)
            except Exception as exc:
                finish(rec, started, exc=exc)
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            started = time.monotonic()
            futures = {
                pool.submit(_execute_run, rec.kind, rec.params, rec.seed,
                            rec.run_id, str(out / f"run_{rec.run_id}")): rec
                for rec in pending
            }
            for fut, rec in futures.items():
                try:
                    finish(rec, started, fut.result())
                except Exception as exc:
                    finish(rec, started, exc=exc)
    return records


def write_outputs(records: list, fmt: str, out_dir) -> list:
    """Aggregate artifacts: a combined sweep CSV or per-metric SVG charts."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    done = [r for r in records if r.status in ("completed", "cached") and r.rows]
    if fmt == "csv":
        header = ["run_id", "seed"] + (list(done[0].header) if done else [])
        rows = [[r.run_id, str(r.seed), *row] for r in done for row in r.rows]
        path = out / "sweep.csv"
        _write_csv(path, header, rows)
        return [path]
    if fmt == "svg":
        if not done:
            return []
        header = list(done[0].header)
        kind = records[0].kind
        paths = []
        for col in range(1, len(header)):
            series = {}
            for rec in done:
                pts = []
                for row in rec.rows:
                    try:
                        x, y = float(row[0]), float(row[col])
                    except (TypeError, ValueError):
                        continue
                    if np.isfinite(x) and np.isfinite(y):
                        pts.append((x, y))
                series[f"run_{rec.run_id}/s{rec.seed}"] = pts
            path = out / f"{kind}_{header[col]}.svg"
            _svg_line_chart(path, f"{kind}: {header[col]} vs {header[0]}",
                            header[0], header[col], series)
            paths.append(path)
        return paths
    raise ValueError(f"unknown output format {fmt!r}, expected 'csv' or 'svg'")


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd",
            "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")


def _svg_line_chart(path, title: str, x_label: str, y_label: str,
                    series: dict) -> None:
    """Minimal standalone SVG line chart; emitted via the XML tree builder."""
    W, H = 640, 420
    ml, mr, mt, mb = 64, 20, 36, 48
    points = [p for pts in series.values() for p in pts]
    if points:
        xs, ys = zip(*points)
        x_lo, x_hi, y_lo, y_hi = min(xs), max(xs), min(ys), max(ys)
    else:
        x_lo, x_hi, y_lo, y_hi = 0.0, 1.0, 0.0, 1.0
    if x_hi == x_lo:
        x_lo, x_hi = x_lo - 0.5, x_hi + 0.5
    if y_hi == y_lo:
        y_lo, y_hi = y_lo - 0.5, y_hi + 0.5

    def sx(x):
        return ml + (x - x_lo) / (x_hi - x_lo) * (W - ml - mr)

    def sy(y):
        return H - mb - (y - y_lo) / (y_hi - y_lo) * (H - mt - mb)

    svg = ET.Element("svg", {
        "xmlns": "http://www.w3.org/2000/svg",
        "width": str(W), "height": str(H), "viewBox": f"0 0 {W} {H}",
    })
    ET.SubElement(svg, "rect", {"x": "0", "y": "0", "width": str(W),
                                "height": str(H), "fill": "white"})
    ET.SubElement(svg, "text", {
        "x": str(W / 2), "y": "22", "text-anchor": "middle",
        "font-family": "sans-serif", "font-size": "14"}).text = title

    axis_style = {"stroke": "#333333", "stroke-width": "1"}
    ET.SubElement(svg, "line", {"x1": str(ml), "y1": str(H - mb),
                                "x2": str(W - mr), "y2": str(H - mb), **axis_style})
    ET.SubElement(svg, "line", {"x1": str(ml), "y1": str(mt),
                                "x2": str(ml), "y2": str(H - mb), **axis_style})
    for i in range(5):
        fx = x_lo + (x_hi - x_lo) * i / 4
        fy = y_lo + (y_hi - y_lo) * i / 4
        ET.SubElement(svg, "text", {
            "x": format(sx(fx), ".2f"), "y": str(H - mb + 18),
            "text-anchor": "middle", "font-family": "sans-serif",
            "font-size": "10"}).text = format(fx, ".4g")
        ET.SubElement(svg, "text", {
            "x": str(ml - 6), "y": format(sy(fy) + 3, ".2f"),
            "text-anchor": "end", "font-family": "sans-serif",
            "font-size": "10"}).text = format(fy, ".4g")
    ET.SubElement(svg, "text", {
        "x": str((ml + W - mr) / 2), "y": str(H - 10), "text-anchor": "middle",
        "font-family": "sans-serif", "font-size": "12"}).text = x_label
    y_text = ET.SubElement(svg, "text", {
        "x": "16", "y": str((mt + H - mb) / 2), "text-anchor": "middle",
        "font-family": "sans-serif", "font-size": "12",
        "transform": f"rotate(-90 16 {(mt + H - mb) / 2})"})
    y_text.text = y_label

    for i, (name, pts) in enumerate(sorted(series.items())):
        color = _PALETTE[i % len(_PALETTE)]
        if len(pts) > 1:
            coords = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in pts)
            ET.SubElement(svg, "polyline", {
                "points": coords, "fill": "none", "stroke": color,
                "stroke-width": "1.5"})
        for x, y in pts:
            ET.SubElement(svg, "circle", {
                "cx": f"{sx(x):.2f}", "cy": f"{sy(y):.2f}", "r": "2",
                "fill": color})
        if i < 8:
            label = ET.SubElement(svg, "text", {
                "x": str(W - mr - 4), "y": str(mt + 14 + 13 * i),
                "text-anchor": "end", "font-family": "sans-serif",
                "font-size": "9", "fill": color})
            label.text = name
    ET.ElementTree(svg).write(path, encoding="utf-8", xml_declaration=True)
