"""Experiment configuration and artifact persistence.

One JSON config drives every CLI command. Validation is strict: unknown keys
are rejected so a typo cannot silently fall back to a default. All artifacts
(config echo, model JSON, CSV tables, report JSON) are written
deterministically; rerunning a command with the same config and seed
reproduces every byte.
"""

from __future__ import annotations

import json
import os
from typing import Mapping

import numpy as np

from . import attacks
from .data import Dataset, gen_digits8x8, gen_gmm, gen_moons, load_csv, load_idx
from .errors import ConfigError, MigrationError, ParseError
from .nn import Model, init_model, load_model, save_model

CONFIG_SCHEMA_VERSION = 1
REPORT_SCHEMA_VERSION = 1


# ---------------------------------------------------------------------------
# Validation helpers
# ---------------------------------------------------------------------------


def _check_keys(section: Mapping, allowed: set[str], path: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown key '{sorted(unknown)[0]}' in {path}")


def _require(section: Mapping, key: str, path: str):
    if key not in section:
        raise ConfigError(f"missing required key '{key}' in {path}")
    return section[key]


def _as_int(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{path} must be an integer, got {value!r}")
    return value


def _as_num(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path} must be a number, got {value!r}")
    return float(value)


_ATTACK_KEYS = {"name", "epsilon", "alpha", "iterations", "mu", "target", "theta", "upsilon"}
_SQUEEZE_KEYS = {"op", "bits", "search_window", "patch_size", "strength", "sigma", "rank"}
_DETECTOR_KEYS = {
    "name", "pipeline", "layer_index", "hidden", "epochs", "lr", "batch_size",
    "pool", "ae_hidden", "ae_epochs", "ae_lr", "bandwidth", "t_div",
}

_SECTION_KEYS = {
    "dataset": {"kind", "n", "noise", "means", "sigma", "eval_n", "images", "labels", "path", "label_column"},
    "model": {"hidden", "activation", "temperature"},
    "train": {"mode", "epochs", "lr", "batch_size", "mix_ratio", "attack"},
    "distill": {"temperature", "teacher_epochs", "student_epochs", "lr"},
    "defense": {"pipeline", "attack"},
    "detect": {"detectors", "attack", "fpr"},
    "natadv": {
        "z_dim", "hidden", "n_critic", "clip_c", "steps", "lr", "batch_size",
        "inverter_lambda", "inverter_steps", "inverter_lr",
        "delta_r", "n_per_ring", "max_radius", "r_hi", "n_per_iter", "iters", "n_eval",
    },
}

_TOP_KEYS = {"schema_version", "experiment_id", "seed"} | set(_SECTION_KEYS) | {"attacks"}


def validate_config(cfg: dict) -> dict:
    """Strict structural validation; returns the config unchanged on success."""
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    _check_keys(cfg, _TOP_KEYS, "config")
    version = _require(cfg, "schema_version", "config")
    if version != CONFIG_SCHEMA_VERSION:
        raise MigrationError(f"config schema_version {version!r} is not supported (expected {CONFIG_SCHEMA_VERSION})")
    if "seed" in cfg:
        _as_int(cfg["seed"], "config.seed")
    for name, allowed in _SECTION_KEYS.items():
        if name in cfg:
            if not isinstance(cfg[name], dict):
                raise ConfigError(f"config.{name} must be an object")
            _check_keys(cfg[name], allowed, f"config.{name}")
    if "attacks" in cfg:
        if not isinstance(cfg["attacks"], list):
            raise ConfigError("config.attacks must be a list")
        for i, spec in enumerate(cfg["attacks"]):
            _check_keys(spec, _ATTACK_KEYS, f"config.attacks[{i}]")
            _require(spec, "name", f"config.attacks[{i}]")
    if "train" in cfg and "attack" in cfg["train"]:
        _check_keys(cfg["train"]["attack"], _ATTACK_KEYS, "config.train.attack")
    for owner in ("defense", "detect"):
        if owner in cfg and "attack" in cfg[owner]:
            _check_keys(cfg[owner]["attack"], _ATTACK_KEYS, f"config.{owner}.attack")
    if "defense" in cfg:
        for i, spec in enumerate(cfg["defense"].get("pipeline", [])):
            _check_keys(spec, _SQUEEZE_KEYS, f"config.defense.pipeline[{i}]")
    if "detect" in cfg:
        for i, spec in enumerate(cfg["detect"].get("detectors", [])):
            _check_keys(spec, _DETECTOR_KEYS, f"config.detect.detectors[{i}]")
            _require(spec, "name", f"config.detect.detectors[{i}]")
            for j, sq in enumerate(spec.get("pipeline", [])):
                _check_keys(sq, _SQUEEZE_KEYS, f"config.detect.detectors[{i}].pipeline[{j}]")
    return cfg


def load_config(path) -> dict:
    path = str(path)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc})") from exc
    return validate_config(cfg)


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------


def build_dataset(cfg: dict, seed: int) -> tuple[Dataset, Dataset]:
    """(train split, held-out split) from a dataset section.

    Generators draw ``n + eval_n`` points from one seed and split in order;
    file-backed datasets take the held-out rows from the tail.
    """
    ds = cfg.get("dataset")
    if not ds:
        raise ConfigError("config has no dataset section")
    kind = _require(ds, "kind", "config.dataset")
    eval_n = _as_int(ds.get("eval_n", 0), "config.dataset.eval_n")
    if kind == "moons":
        n = _as_int(_require(ds, "n", "config.dataset"), "config.dataset.n")
        noise = _as_num(ds.get("noise", 0.1), "config.dataset.noise")
        return gen_moons(n + eval_n, noise, seed).split(n)
    if kind == "gmm":
        n = _as_int(_require(ds, "n", "config.dataset"), "config.dataset.n")
        means = _require(ds, "means", "config.dataset")
        sigma = _as_num(ds.get("sigma", 0.05), "config.dataset.sigma")
        return gen_gmm(means, sigma, n + eval_n, seed).split(n)
    if kind == "digits8x8":
        n = _as_int(_require(ds, "n", "config.dataset"), "config.dataset.n")
        return gen_digits8x8(n + eval_n, seed).split(n)
    if kind == "idx":
        images = _require(ds, "images", "config.dataset")
        labels = _require(ds, "labels", "config.dataset")
        if not os.path.exists(str(images)) or not os.path.exists(str(labels)):
            raise ConfigError(f"dataset file missing: {images if not os.path.exists(str(images)) else labels}")
        full = load_idx(images, labels)
        return full.split(len(full) - eval_n)
    if kind == "csv":
        path = _require(ds, "path", "config.dataset")
        if not os.path.exists(str(path)):
            raise ConfigError(f"dataset file missing: {path}")
        full = load_csv(path, _require(ds, "label_column", "config.dataset"))
        return full.split(len(full) - eval_n)
    raise ConfigError(f"unknown dataset kind '{kind}'")


def build_model(cfg: dict, input_dim: int, class_count: int, seed: int) -> Model:
    section = cfg.get("model", {})
    hidden = section.get("hidden", [16, 16])
    activation = section.get("activation", "relu")
    temperature = _as_num(section.get("temperature", 1.0), "config.model.temperature")
    return init_model((input_dim, *hidden, class_count), activation=activation,
                      temperature=temperature, seed=seed)


def attack_from_spec(spec: dict, seed: int = 0) -> tuple[str, attacks.AttackConfig]:
    name = spec.get("name")
    if name not in attacks.ATTACK_NAMES:
        raise ConfigError(f"unknown attack '{name}' (expected one of {attacks.ATTACK_NAMES})")
    config = attacks.AttackConfig(
        epsilon=_as_num(spec.get("epsilon", 0.1), "attack.epsilon"),
        alpha=_as_num(spec.get("alpha", 0.02), "attack.alpha"),
        iterations=_as_int(spec.get("iterations", 10), "attack.iterations"),
        momentum_decay=_as_num(spec.get("mu", 0.0), "attack.mu"),
        target=spec.get("target"),
        theta=_as_num(spec.get("theta", 1.0), "attack.theta"),
        upsilon=_as_num(spec.get("upsilon", 0.1429), "attack.upsilon"),
        seed=seed,
    )
    return name, config


# ---------------------------------------------------------------------------
# Deterministic writers
# ---------------------------------------------------------------------------


def _cell(value) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path, header, rows) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_cell(v) for v in row) + "\n")


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, "r", encoding="ascii") as fh:
        lines = [line.rstrip("\n") for line in fh]
    if not lines:
        raise ParseError(f"{path}: empty CSV")
    return lines[0].split(","), [line.split(",") for line in lines[1:] if line]


def write_config_echo(cfg: dict, out_dir) -> str:
    path = os.path.join(out_dir, "config.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(cfg, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def update_report(out_dir, experiment_id: str, metrics: dict, tables: dict) -> str:
    """Merge metrics and table paths into the experiment's report.json."""
    path = os.path.join(out_dir, "report.json")
    doc = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "experiment_id": experiment_id,
        "metrics": {},
        "tables": {},
    }
    if os.path.exists(path):
        doc = read_report(path)
        if doc.get("experiment_id") != experiment_id:
            doc["experiment_id"] = experiment_id
    doc["metrics"].update({k: float(v) for k, v in metrics.items()})
    doc["tables"].update({k: str(v) for k, v in tables.items()})
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def read_report(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc})") from exc
    version = doc.get("schema_version")
    if version != REPORT_SCHEMA_VERSION:
        raise MigrationError(f"{path}: report schema_version {version!r} is not supported")
    return doc


def save_experiment(config: dict, out_dir, models: dict[str, Model] | None = None,
                    tables: dict[str, tuple[list[str], list]] | None = None,
                    metrics: dict | None = None) -> list[str]:
    """Write the standard artifact set and return the written paths.

    ``models`` maps file stem to Model (model.json and friends); ``tables``
    maps file stem to (header, rows) CSVs; ``metrics`` lands in report.json.
    """
    os.makedirs(out_dir, exist_ok=True)
    written = [write_config_echo(config, out_dir)]
    for stem, model in (models or {}).items():
        path = os.path.join(out_dir, f"{stem}.json")
        save_model(model, path)
        written.append(path)
    table_paths = {}
    for stem, (header, rows) in (tables or {}).items():
        path = os.path.join(out_dir, f"{stem}.csv")
        write_csv(path, header, rows)
        table_paths[stem] = f"{stem}.csv"
        written.append(path)
    written.append(update_report(out_dir, config.get("experiment_id", "experiment"),
                                 metrics or {}, table_paths))
    return written
