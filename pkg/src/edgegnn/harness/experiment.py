"""YAML-declared experiment grids (GNN configs x seeds) with an on-disk manifest.

An experiment file looks like::

    experiment: ls_vanilla
    problem: ls
    data: {K: 10, n_train: 500, n_val: 200, n_test: 500, seed: 0}
    train: {epochs: 200, batch_size: 64, patience: 20}
    loss: {w1: 0.1, w2: 0.0001}
    baseline: exhaustive
    seeds: [0, 1, 2, 3, 4]
    configs:
      edge: {family: edge, graph_kind: ls_het, dims: [8, 8, 8, 8, 8, 1], lr: 0.01}

Per-config ``lr`` (and any other train field) overrides the ``train`` section.
Finished cells are recorded in ``manifest.json``; a rerun only computes cells
that are missing, then rewrites ``results.csv`` and ``summary.csv`` from the
manifest.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import time
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np
import yaml

from edgegnn.errors import ConfigError, ContractError
from edgegnn.gnn import GnnConfig, validate_dims
from edgegnn.harness import io
from edgegnn.harness.training import (
    BASELINES, DEFAULT_BASELINE, PROBLEMS, LossConfig, TrainConfig, evaluate, make_dataset, train,
)

log = logging.getLogger(__name__)

RESULT_COLUMNS = ["experiment", "config", "config_hash", "seed", "metric", "value"]
SUMMARY_COLUMNS = ["experiment", "config", "metric", "mean", "std", "n"]
TOP_KEYS = {"experiment", "problem", "data", "train", "loss", "baseline", "seeds", "configs", "strict_dims"}
DATA_KEYS = {"K", "N", "n_train", "n_val", "n_test", "tx_power_dbm", "snr_db", "seed", "scenario"}
TRAIN_KEYS = {f.name for f in fields(TrainConfig)} - {"gnn", "seed"}
GNN_KEYS = {f.name for f in fields(GnnConfig)}


@dataclass
class ExperimentSpec:
    name: str
    problem: str
    data: dict
    train: dict
    loss: LossConfig
    baseline: str
    seeds: list
    configs: dict  # name -> (GnnConfig, train overrides)
    strict_dims: bool = False

    def data_hash(self) -> str:
        return _digest(self.data)


@dataclass
class RunSummary:
    n_cells: int
    n_computed: int
    n_skipped: int
    results_csv: Path
    summary_csv: Path


def _digest(obj) -> str:
    return hashlib.sha1(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()[:12]


def _line_of(root, path):
    """1-based line of the YAML node at ``path`` (keys), or None."""
    node = root
    line = None
    for key in path:
        if not isinstance(node, yaml.MappingNode):
            break
        for k, v in node.value:
            if k.value == key:
                line, node = k.start_mark.line + 1, v
                break
        else:
            break
    return line


def _fail(root, path, msg):
    where = ".".join(str(p) for p in path)
    line = _line_of(root, path) if root is not None else None
    raise ConfigError(f"{where}: {msg}" + (f" (line {line})" if line else ""))


def parse_spec(text: str) -> ExperimentSpec:
    try:
        root = yaml.compose(text)
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"experiment file is not valid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("experiment file must be a mapping")
    for k in raw:
        if k not in TOP_KEYS:
            _fail(root, [k], f"unknown section; expected one of {sorted(TOP_KEYS)}")
    problem = raw.get("problem")
    if problem not in PROBLEMS:
        _fail(root, ["problem"], f"must be one of {PROBLEMS}")
    name = str(raw.get("experiment") or "experiment")

    data = dict(raw.get("data") or {})
    for k in data:
        if k not in DATA_KEYS:
            _fail(root, ["data", k], f"unknown field; expected one of {sorted(DATA_KEYS)}")
    data.setdefault("K", 2 if problem == "pr" else 10)
    data.setdefault("N", 4)
    data.setdefault("n_train", 500)
    data.setdefault("n_val", 200)
    data.setdefault("n_test", 500)
    data.setdefault("seed", 0)
    data.setdefault("tx_power_dbm", 40.0)
    data.setdefault("snr_db", 10.0)
    data.setdefault("scenario", {})
    for k in ("n_train", "n_test"):
        if not isinstance(data[k], int) or data[k] < 1:
            _fail(root, ["data", k], "must be a positive integer")
    if not isinstance(data["n_val"], int) or data["n_val"] < 0:
        _fail(root, ["data", "n_val"], "must be a non-negative integer")

    train_sec = dict(raw.get("train") or {})
    for k in train_sec:
        if k not in TRAIN_KEYS:
            _fail(root, ["train", k], f"unknown field; expected one of {sorted(TRAIN_KEYS)}")

    try:
        loss = LossConfig(problem=problem, **(raw.get("loss") or {}))
    except (TypeError, ConfigError) as exc:
        _fail(root, ["loss"], str(exc))

    baseline = raw.get("baseline", DEFAULT_BASELINE[problem])
    if baseline not in BASELINES[problem]:
        _fail(root, ["baseline"], f"must be one of {BASELINES[problem]} for problem {problem!r}")

    seeds = raw.get("seeds", [0])
    if isinstance(seeds, int):
        seeds = list(range(seeds))
    if not isinstance(seeds, list) or not all(isinstance(s, int) for s in seeds):
        _fail(root, ["seeds"], "must be a list of integers or a count")

    configs = {}
    for cname, body in (raw.get("configs") or {}).items():
        if not isinstance(body, dict):
            _fail(root, ["configs", cname], "must be a mapping")
        gnn_part = {k: v for k, v in body.items() if k in GNN_KEYS}
        over = {k: v for k, v in body.items() if k in TRAIN_KEYS}
        for k in set(body) - GNN_KEYS - TRAIN_KEYS:
            _fail(root, ["configs", cname, k], "unknown field")
        try:
            cfg = GnnConfig(**gnn_part)
            TrainConfig(gnn=cfg, **{**train_sec, **over})
        except (TypeError, ConfigError) as exc:
            _fail(root, ["configs", cname], str(exc))
        if (cfg.graph_kind == "p_het") != (problem == "pr"):
            _fail(root, ["configs", cname, "graph_kind"], f"{cfg.graph_kind} does not fit problem {problem!r}")
        configs[str(cname)] = (cfg, over)
    return ExperimentSpec(name, problem, data, train_sec, loss, baseline, seeds, configs,
                          bool(raw.get("strict_dims", False)))


def load_spec(path) -> ExperimentSpec:
    return parse_spec(Path(path).read_text())


def _datasets(spec: ExperimentSpec, out: Path):
    d = spec.data
    n = d["n_train"] + d["n_val"] + d["n_test"]
    path = out / "data" / f"{spec.problem}_{spec.data_hash()}.npz"
    if path.exists():
        full = io.load_dataset(path)
    else:
        full = make_dataset(spec.problem, n, d["seed"], K=d["K"], N=d["N"], tx_power_dbm=d["tx_power_dbm"],
                            snr_db=d["snr_db"], scenario=d["scenario"] or None)
        io.save_dataset(path, full)
    tr, rest = full.split(d["n_train"])
    val, test = rest.split(d["n_val"])
    return tr, (val if len(val) else None), test


def _cell_id(spec, cname, cfg, over, seed):
    key = {"experiment": spec.name, "config": cname, "gnn": cfg.to_dict(), "train": {**spec.train, **over},
           "loss": [spec.loss.w1, spec.loss.w2], "baseline": spec.baseline, "data": spec.data, "seed": seed}
    return _digest(key)


def _read_manifest(path: Path) -> dict:
    if path.exists():
        return json.loads(path.read_text())
    return {}


def _write_json(path: Path, obj):
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(obj, indent=1, sort_keys=True))
    tmp.replace(path)


def run_experiment(spec, out_dir) -> RunSummary:
    """Run every (config, seed) cell not already in the manifest; rewrite the CSVs."""
    if not isinstance(spec, ExperimentSpec):
        spec = load_spec(spec)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest_path = out / "manifest.json"
    manifest = _read_manifest(manifest_path)
    cells = [(cname, cfg, over, seed) for cname, (cfg, over) in spec.configs.items() for seed in spec.seeds]
    computed = 0
    data = None
    for cname, cfg, over, seed in cells:
        cid = _cell_id(spec, cname, cfg, over, seed)
        if cid in manifest:
            continue
        if data is None:
            data = _datasets(spec, out)
        tr, val, test = data
        rows = _run_cell(spec, cname, cfg, over, seed, tr, val, test, out)
        manifest[cid] = {"config": cname, "seed": seed, "rows": rows}
        _write_json(manifest_path, manifest)
        computed += 1
    if not manifest_path.exists():
        _write_json(manifest_path, manifest)
    results = []
    for cname, cfg, over, seed in cells:
        results += manifest[_cell_id(spec, cname, cfg, over, seed)]["rows"]
    res_csv = out / "results.csv"
    _write_csv(res_csv, RESULT_COLUMNS, results)
    sum_csv = out / "summary.csv"
    _write_csv(sum_csv, SUMMARY_COLUMNS, summarize(results))
    return RunSummary(len(cells), computed, len(cells) - computed, res_csv, sum_csv)


def _run_cell(spec, cname, cfg, over, seed, tr, val, test, out):
    dims_ok = None
    if cfg.graph_kind == "p_het":
        dims_ok = validate_dims(cfg, spec.data["N"], spec.data["K"])["pass"]
        if not dims_ok:
            if spec.strict_dims:
                raise ConfigError(f"configs.{cname}: dimension conditions fail")
            log.warning("config %s violates the dimension conditions", cname)
    tc = TrainConfig(gnn=cfg, seed=seed, **{**spec.train, **over})
    t0 = time.perf_counter()
    model, hist = train(tc, spec.loss, tr, val, spec.baseline)
    seconds = time.perf_counter() - t0
    res = evaluate(model, test, spec.baseline, hist["norm"])
    ckpt = out / "checkpoints" / f"{cname}_{cfg.hash()}_s{seed}.npz"
    io.save_checkpoint(ckpt, model, hist["norm"], {"experiment": spec.name, "seed": seed,
                                                   "train": tc.to_dict()})
    metrics = {
        "sum_rate_ratio": res.sum_rate_ratio,
        "best_val_ratio": max(hist["val_ratio"]) if hist["val_ratio"] else float("nan"),
        "epochs_run": len(hist["epoch"]),
        "final_train_loss": hist["train_loss"][-1] if hist["train_loss"] else float("nan"),
        "n_params": model.n_params(),
        "train_seconds": seconds,
    }
    if dims_ok is not None:
        metrics["dims_ok"] = int(dims_ok)
    log.info("%s seed %d: ratio %.4f in %.1fs", cname, seed, res.sum_rate_ratio, seconds)
    return [{"experiment": spec.name, "config": cname, "config_hash": cfg.hash(), "seed": seed,
             "metric": k, "value": float(v)} for k, v in metrics.items()]


def summarize(rows) -> list[dict]:
    groups: dict = {}
    for r in rows:
        groups.setdefault((r["experiment"], r["config"], r["metric"]), []).append(float(r["value"]))
    out = []
    for (exp, cfg, metric), vals in groups.items():
        v = np.array(vals)
        out.append({"experiment": exp, "config": cfg, "metric": metric, "mean": float(v.mean()),
                    "std": float(v.std(ddof=1)) if len(v) > 1 else 0.0, "n": len(v)})
    return out


def _write_csv(path, columns, rows):
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=columns)
        w.writeheader()
        for r in rows:
            w.writerow({c: r[c] for c in columns})


def read_results(path) -> list[dict]:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def report(results_csv, out_dir=None) -> list[dict]:
    """Summary rows for a results CSV; with ``out_dir`` also write summary and per-metric pivot files."""
    rows = read_results(results_csv)
    summary = summarize(rows)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(out / "summary.csv", SUMMARY_COLUMNS, summary)
        for metric in sorted({r["metric"] for r in rows}):
            sub = [r for r in rows if r["metric"] == metric]
            seeds = sorted({int(r["seed"]) for r in sub})
            table = {}
            for r in sub:
                table.setdefault(r["config"], {})[int(r["seed"])] = r["value"]
            with open(out / f"plot_{metric}.csv", "w", newline="") as f:
                w = csv.writer(f)
                w.writerow(["config"] + [f"seed{s}" for s in seeds])
                for cfg, vals in table.items():
                    w.writerow([cfg] + [vals.get(s, "") for s in seeds])
    return summary


PROBE_KEYS = {"problem", "sizes", "levels", "probe", "seed"}
PROBE_DEFAULTS = {
    "ls": ([3, 4, 5, 6], [0.0, 10.0, 20.0, 30.0, 40.0]),
    "pc": ([3, 4, 5, 6], [0.0, 10.0, 20.0, 30.0, 40.0]),
    "pr": ([[4, 2]], [0.0, 10.0, 20.0]),
}


def parse_probe_spec(text: str, problem: str | None = None) -> dict:
    """Probe sweep description: problem, sizes, levels and a ProbeConfig."""
    from edgegnn.expressivity import ProbeConfig

    root = yaml.compose(text) if text.strip() else None
    raw = yaml.safe_load(text) if text.strip() else {}
    if not isinstance(raw, dict):
        raise ConfigError("probe file must be a mapping")
    for k in raw:
        if k not in PROBE_KEYS:
            _fail(root, [k], f"unknown section; expected one of {sorted(PROBE_KEYS)}")
    problem = problem or raw.get("problem", "ls")
    if problem not in PROBLEMS:
        _fail(root, ["problem"], f"must be one of {PROBLEMS}")
    sizes, levels = PROBE_DEFAULTS[problem]
    sizes = raw.get("sizes", sizes)
    if problem == "pr":
        sizes = [tuple(s) for s in sizes]
    levels = [float(v) for v in raw.get("levels", levels)]
    body = dict(raw.get("probe") or {})
    if "eps_grid" in body:
        body["eps_grid"] = tuple(body["eps_grid"])
    try:
        cfg = ProbeConfig(**body)
    except (TypeError, ContractError) as exc:
        _fail(root, ["probe"], str(exc))
    return {"problem": problem, "sizes": sizes, "levels": levels, "config": cfg, "seed": raw.get("seed", 0)}
