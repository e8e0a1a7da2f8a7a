"""Run configuration: one YAML document, strict schema, defaults filled in.

Every section is optional; unknown keys anywhere are rejected. A run
manifest (JSON) is also accepted wherever a config is, in which case its
``config`` snapshot is used.
"""
from __future__ import annotations

import copy
import json
from pathlib import Path

import jsonschema
import yaml

from .training import TrainConfig

DEFAULTS = {
    "seed": 0,
    "model": {
        "layer_sizes": [1, 40, 40, 1],
        "n_channels": 40,
        "skip_pairs": [[0, 2], [1, 3]],
        "dan_hidden": [15, 8],
        "mode": "shared",
    },
    "train": {
        "alpha": 0.001,
        "gamma": 0.0001,
        "inner_steps": 100,
        "meta_epochs": 300,
        "optimizer": "adam",
    },
    "deploy": {
        "n_functions": 4,
        "grid_n": 500,
        "plastic_phi": False,
        "seed": 1000,
    },
    "baselines": {
        "n_functions": 20,
        "seeds": [0, 1, 2],
        "grid_n": 500,
    },
    "ablation": {
        "channel_counts": [1, 5, 10, 20, 40],
        "meta_epochs": 150,
        "seeds": [0, 1, 2],
    },
    "output": {
        "record_wall_ms": False,
    },
}

_int = {"type": "integer"}
_pos_int = {"type": "integer", "minimum": 1}
_num = {"type": "number"}


def _obj(props: dict) -> dict:
    return {"type": "object", "properties": props, "additionalProperties": False}


SCHEMA = _obj({
    "seed": _int,
    "model": _obj({
        "layer_sizes": {"type": "array", "items": _pos_int, "minItems": 3},
        "n_channels": _pos_int,
        "skip_pairs": {
            "type": "array",
            "items": {"type": "array", "items": _int, "minItems": 2, "maxItems": 2},
        },
        "dan_hidden": {"type": "array", "items": _pos_int, "minItems": 2, "maxItems": 2},
        "mode": {"enum": ["shared", "per_layer", "per_node"]},
    }),
    "train": _obj({
        "alpha": {"type": "number", "exclusiveMinimum": 0},
        "gamma": {"type": "number", "minimum": 0},
        "inner_steps": _pos_int,
        "meta_epochs": {"type": "integer", "minimum": 0},
        "optimizer": {"enum": ["adam", "sgd"]},
    }),
    "deploy": _obj({
        "n_functions": _pos_int,
        "grid_n": {"type": "integer", "minimum": 2},
        "plastic_phi": {"type": "boolean"},
        "seed": _int,
    }),
    "baselines": _obj({
        "n_functions": _pos_int,
        "seeds": {"type": "array", "items": _int, "minItems": 1},
        "grid_n": {"type": "integer", "minimum": 2},
    }),
    "ablation": _obj({
        "channel_counts": {"type": "array", "items": _pos_int, "minItems": 1},
        "meta_epochs": {"type": "integer", "minimum": 0},
        "seeds": {"type": "array", "items": _int, "minItems": 1},
    }),
    "output": _obj({"record_wall_ms": {"type": "boolean"}}),
})


class ConfigError(ValueError):
    pass


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def validate(raw: dict) -> dict:
    """Validate a (possibly partial) config and return it merged over the defaults."""
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    errors = sorted(jsonschema.Draft202012Validator(SCHEMA).iter_errors(raw), key=lambda e: list(e.path))
    if errors:
        e = errors[0]
        where = "/".join(str(p) for p in e.path) or "<root>"
        raise ConfigError(f"config error at {where}: {e.message}")
    cfg = _merge(DEFAULTS, raw)
    try:
        train_config(cfg)
    except ValueError as exc:
        raise ConfigError(f"config error at model: {exc}") from exc
    return cfg


def load(path) -> dict:
    text = Path(path).read_text()
    if str(path).endswith(".json"):
        doc = json.loads(text)
        if isinstance(doc, dict) and "config" in doc and "manifest_version" in doc:
            doc = doc["config"]
    else:
        doc = yaml.safe_load(text)
    return validate(doc)


def dump(cfg: dict) -> str:
    return yaml.safe_dump(cfg, sort_keys=True)


def train_config(cfg: dict, **overrides) -> TrainConfig:
    m, t = cfg["model"], cfg["train"]
    kw = dict(
        alpha=t["alpha"],
        gamma=t["gamma"],
        inner_steps=t["inner_steps"],
        meta_epochs=t["meta_epochs"],
        optimizer=t["optimizer"],
        seed=cfg["seed"],
        mode=m["mode"],
        layer_sizes=tuple(m["layer_sizes"]),
        n_channels=m["n_channels"],
        skip_pairs=tuple(tuple(p) for p in m["skip_pairs"]),
        dan_hidden=tuple(m["dan_hidden"]),
    )
    kw.update(overrides)
    tc = TrainConfig(**kw)
    tc.topology  # raises on an invalid topology
    return tc
