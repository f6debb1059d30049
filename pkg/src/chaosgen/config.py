"""JSON run configuration: schema, validation and data loading.

Validation never stops at the first problem; every issue is collected and
raised together in a :class:`ConfigError`. Relative paths are resolved
against the directory holding the config file.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import jsonschema

from . import dataio
from .dynamics import SimConfig
from .errors import ConfigError, FormatError, InvalidArgument
from .training import TrainConfig

_positive_int = {"type": "integer", "minimum": 1}
_count = {"type": "integer", "minimum": 0}

DATA_SOURCE_SCHEMA = {
    "type": "object",
    "oneOf": [
        {
            "required": ["idx"],
            "properties": {
                "idx": {"type": "string"},
                "labels": {"type": "string"},
                "limit": _positive_int,
            },
            "additionalProperties": False,
        },
        {
            "required": ["synthetic", "n_s"],
            "properties": {
                "synthetic": {"enum": list(dataio.SYNTHETIC_KINDS)},
                "n_s": _positive_int,
                "seed": _count,
                "noise": {"type": "number", "minimum": 0},
                "images": {"type": "string"},
            },
            "additionalProperties": False,
        },
    ],
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "chaosgen run configuration",
    "type": "object",
    "required": ["architecture", "dimensions", "g", "sim", "train", "data", "seed", "output_dir"],
    "additionalProperties": False,
    "properties": {
        "architecture": {"enum": ["unrestricted", "restricted", "deep"]},
        "dimensions": {
            "type": "object",
            "required": ["n_v"],
            "properties": {k: _positive_int for k in ("n_v", "n_h", "n_h1", "n_h2")},
            "additionalProperties": False,
        },
        "g": {"type": "number", "minimum": 0},
        "sim": {
            "type": "object",
            "required": ["dt", "tau", "T"],
            "properties": {
                "dt": {"type": "number", "exclusiveMinimum": 0},
                "tau": {"type": "number", "exclusiveMinimum": 0},
                "T": {"type": "number", "minimum": 0},
            },
            "additionalProperties": False,
        },
        "train": {
            "type": "object",
            "required": ["k", "M", "epochs"],
            "properties": {
                "k": {"type": "number", "exclusiveMinimum": 0},
                "M": _positive_int,
                "epochs": _count,
                "eval_every": _count,
                "checkpoint_every": _count,
                "n_eval": {"type": "integer", "minimum": 2},
                "workers": _positive_int,
            },
            "additionalProperties": False,
        },
        "data": {
            "type": "object",
            "required": ["train"],
            "properties": {"train": DATA_SOURCE_SCHEMA, "test": DATA_SOURCE_SCHEMA},
            "additionalProperties": False,
        },
        "seed": _count,
        "output_dir": {"type": "string"},
    },
}

REQUIRED_DIMS = {
    "unrestricted": ("n_v",),
    "restricted": ("n_v", "n_h"),
    "deep": ("n_v", "n_h1", "n_h2"),
}


@dataclass
class RunConfig:
    architecture: str
    dimensions: dict
    g: float
    sim: SimConfig
    train: TrainConfig
    data: dict
    seed: int
    output_dir: Path
    base_dir: Path

    def resolve(self, p):
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p


def _where(err):
    path = "/".join(str(p) for p in err.absolute_path)
    return path or "<root>"


def _source_rows_and_width(src, base_dir, problems, label):
    """Peek at a data source without loading it; returns (rows, width) or None."""
    if "idx" in src:
        path = Path(src["idx"])
        path = path if path.is_absolute() else base_dir / path
        if not path.is_file():
            problems.append(f"data/{label}/idx: file not found: {path}")
            return None
        try:
            magic, dims = dataio.idx_header(path)
        except (FormatError, OSError) as exc:
            problems.append(f"data/{label}/idx: {exc}")
            return None
        if magic != dataio.IDX_IMAGES_MAGIC:
            problems.append(f"data/{label}/idx: magic 0x{magic:08x} is not an image file")
            return None
        if "labels" in src:
            lpath = Path(src["labels"])
            lpath = lpath if lpath.is_absolute() else base_dir / lpath
            if not lpath.is_file():
                problems.append(f"data/{label}/labels: file not found: {lpath}")
        rows = dims[0] if "limit" not in src else min(dims[0], src["limit"])
        return rows, math.prod(dims[1:])
    if "images" in src:
        path = Path(src["images"])
        path = path if path.is_absolute() else base_dir / path
        if not path.is_file():
            problems.append(f"data/{label}/images: file not found: {path}")
    return src["n_s"], None


def validate(raw: dict, base_dir=".") -> RunConfig:
    """Check ``raw`` (a parsed JSON document) and build a :class:`RunConfig`."""
    base_dir = Path(base_dir)
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    problems = [f"{_where(e)}: {e.message}" for e in sorted(validator.iter_errors(raw), key=str)]
    if problems:
        raise ConfigError(problems)

    arch = raw["architecture"]
    dims = raw["dimensions"]
    for name in REQUIRED_DIMS[arch]:
        if name not in dims:
            problems.append(f"dimensions: {arch} architecture requires {name}")
    for name in dims:
        if name not in REQUIRED_DIMS[arch]:
            problems.append(f"dimensions/{name}: not used by the {arch} architecture")

    sim = None
    s = raw["sim"]
    try:
        sim = SimConfig(float(s["dt"]), float(s["tau"]), float(s["T"]))
    except InvalidArgument as exc:
        problems.append(f"sim: {exc}")

    t = raw["train"]
    m = t["M"]
    n_eval = t.get("n_eval", m)
    train_rows = _source_rows_and_width(raw["data"]["train"], base_dir, problems, "train")
    test_src = raw["data"].get("test")
    test_rows = _source_rows_and_width(test_src, base_dir, problems, "test") if test_src else train_rows
    for label, info in (("train", train_rows), ("test", test_rows if test_src else None)):
        if info is None:
            continue
        rows, width = info
        if width is None:
            src = raw["data"][label]
            if src["synthetic"] in ("bars-and-stripes", "downscaled-digits") and math.isqrt(dims["n_v"]) ** 2 != dims["n_v"]:
                problems.append(f"data/{label}: {src['synthetic']} needs a square n_v, got {dims['n_v']}")
        elif width != dims["n_v"]:
            problems.append(f"data/{label}: samples have {width} values but n_v={dims['n_v']}")
    if train_rows is not None and m > train_rows[0]:
        problems.append(f"train/M: minibatch size {m} exceeds the {train_rows[0]} training samples")
    if test_rows is not None and n_eval > test_rows[0]:
        problems.append(f"train/n_eval: {n_eval} exceeds the {test_rows[0]} evaluation samples")

    if problems:
        raise ConfigError(problems)
    train = TrainConfig(
        k=float(t["k"]), m_batch=m, epochs=t["epochs"], sim=sim,
        eval_every=t.get("eval_every", 0), checkpoint_every=t.get("checkpoint_every", 0),
        seed=raw["seed"], n_eval=n_eval, workers=t.get("workers", 1),
    )
    out = Path(raw["output_dir"])
    return RunConfig(
        architecture=arch, dimensions=dict(dims), g=float(raw["g"]), sim=sim, train=train,
        data=raw["data"], seed=raw["seed"], output_dir=out if out.is_absolute() else base_dir / out,
        base_dir=base_dir,
    )


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        with open(path) as f:
            raw = json.load(f)
    except FileNotFoundError:
        raise ConfigError([f"config file not found: {path}"])
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{path}: invalid JSON: {exc}"])
    return validate(raw, path.parent)


def load_source(src: dict, base_dir) -> dataio.Dataset:
    base_dir = Path(base_dir)

    def res(p):
        p = Path(p)
        return p if p.is_absolute() else base_dir / p

    if "idx" in src:
        labels = res(src["labels"]) if "labels" in src else None
        return dataio.load_idx(res(src["idx"]), labels, limit=src.get("limit"))
    options = {}
    if "noise" in src:
        options["noise"] = src["noise"]
    if "images" in src:
        options["images_path"] = res(src["images"])
    return dataio.synthetic_dataset(src["synthetic"], src["n_s"], src.get("n_v"), src.get("seed", 0), **options)


def load_data(cfg: RunConfig):
    """``(train, test)`` datasets; test falls back to the training set."""
    n_v = cfg.dimensions["n_v"]
    train = load_source({**cfg.data["train"], "n_v": n_v}, cfg.base_dir)
    test_src = cfg.data.get("test")
    test = load_source({**test_src, "n_v": n_v}, cfg.base_dir) if test_src else train
    return train, test


def mnist_config(output_dir="runs/mnist", train_idx="train-images-idx3-ubyte", test_idx="t10k-images-idx3-ubyte",
                 architecture="restricted"):
    """Configuration dict with the full-scale MNIST hyper-parameters."""
    dims = {"unrestricted": {"n_v": 784},
            "restricted": {"n_v": 784, "n_h": 500},
            "deep": {"n_v": 784, "n_h1": 500, "n_h2": 100}}[architecture]
    return {
        "architecture": architecture,
        "dimensions": dims,
        "g": 1.5,
        "sim": {"dt": 1, "tau": 10, "T": 100},
        "train": {"k": 0.01, "M": 500, "epochs": 300_000, "eval_every": 1000,
                  "checkpoint_every": 10_000, "n_eval": 10_000},
        "data": {"train": {"idx": train_idx}, "test": {"idx": test_idx}},
        "seed": 0,
        "output_dir": output_dir,
    }
