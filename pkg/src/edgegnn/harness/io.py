"""Versioned .npz containers for checkpoints and datasets.

Arrays are stored raw, so a save/load round trip is bit-exact.  Structured
fields (configs, metadata) travel as a JSON string inside the archive.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from edgegnn.errors import ConfigError
from edgegnn.gnn import GnnConfig, GnnModel
from edgegnn.harness.training import Dataset, InputNorm

CHECKPOINT_FORMAT = 1
DATASET_FORMAT = 1


def _atomic_savez(path, **arrays):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".npz")
    os.close(fd)
    try:
        np.savez(tmp, **arrays)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _header(z, kind, version):
    if "header" not in z.files:
        raise ConfigError("not an edgegnn container (missing header)")
    head = json.loads(str(z["header"]))
    if head.get("kind") != kind:
        raise ConfigError(f"expected a {kind} file, got {head.get('kind')!r}")
    if head.get("format_version") != version:
        raise ConfigError(f"unsupported {kind} format_version {head.get('format_version')!r}")
    return head


def save_checkpoint(path, model: GnnModel, norm: InputNorm | None = None, extra: dict | None = None) -> None:
    names = sorted(model.params)
    head = {
        "kind": "checkpoint",
        "format_version": CHECKPOINT_FORMAT,
        "config": model.config.to_dict(),
        "names": names,
        "shapes": [list(model.params[k].shape) for k in names],
        "norm": norm.to_dict() if norm is not None else None,
        "extra": extra or {},
    }
    arrays = {f"p{i}": model.params[k] for i, k in enumerate(names)}
    _atomic_savez(path, header=np.array(json.dumps(head)), **arrays)


def load_checkpoint(path):
    """Returns (model, norm or None, extra dict)."""
    with np.load(path, allow_pickle=False) as z:
        head = _header(z, "checkpoint", CHECKPOINT_FORMAT)
        params = {k: z[f"p{i}"] for i, k in enumerate(head["names"])}
    for k, s in zip(head["names"], head["shapes"]):
        if list(params[k].shape) != s:
            raise ConfigError(f"checkpoint tensor {k} has shape {params[k].shape}, header says {s}")
    model = GnnModel(GnnConfig.from_dict(head["config"]), params)
    norm = InputNorm(**head["norm"]) if head["norm"] else None
    return model, norm, head["extra"]


def save_dataset(path, dataset: Dataset) -> None:
    head = {
        "kind": "dataset",
        "format_version": DATASET_FORMAT,
        "problem": dataset.problem,
        "p_max": dataset.p_max,
        "noise": dataset.noise,
        "meta": dataset.meta,
    }
    _atomic_savez(path, header=np.array(json.dumps(head)), channels=dataset.channels)


def load_dataset(path) -> Dataset:
    with np.load(path, allow_pickle=False) as z:
        head = _header(z, "dataset", DATASET_FORMAT)
        channels = z["channels"]
    return Dataset(head["problem"], channels, head["p_max"], head["noise"], head["meta"])
