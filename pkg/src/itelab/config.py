"""Versioned JSON configuration for the command-line experiments.

Each subcommand has a schema with ``additionalProperties: false`` so a typo
in a key is an error rather than a silently ignored setting.  Missing keys
take the defaults below.
"""
from __future__ import annotations

import copy
import json
from pathlib import Path

import jsonschema

from .errors import ConfigError, InvalidInput
from .operators import EnsembleSpec

__all__ = ["SCHEMA_VERSION", "COMMANDS", "DEFAULTS", "load_config", "validate_config", "ensemble_from_config"]

SCHEMA_VERSION = 1

_num = {"type": "number"}
_pos_int = {"type": "integer", "minimum": 1}
_num_list = {"type": "array", "items": _num, "minItems": 1}
_int_list = {"type": "array", "items": {"type": "integer"}, "minItems": 1}

ENSEMBLE_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["variant"],
    "properties": {
        "variant": {"enum": ["GUE", "RLHComplete", "RLHChain", "RLHLattice", "HeisenbergTwoField", "KickedTop"]},
        "n": {"type": "integer", "minimum": 2},
        "D": {"type": "integer", "minimum": 2},
        "rows": _pos_int,
        "cols": _pos_int,
        "j": {"type": "number", "exclusiveMinimum": 0},
        "sigma2": {"type": "number", "exclusiveMinimum": 0},
        "alpha": {"type": "array", "items": _num, "minItems": 3, "maxItems": 3},
        "tau": {"type": "array", "items": _num, "minItems": 3, "maxItems": 3},
        "normalize": {"type": "boolean"},
        "torsion_scaling": {"enum": ["2j+1", "none"]},
        "master_seed": {"type": "integer", "minimum": 0},
    },
}


def _command_schema(props: dict) -> dict:
    base = {
        "schema_version": {"const": SCHEMA_VERSION},
        "master_seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
    }
    base.update(props)
    return {"type": "object", "additionalProperties": False, "required": ["schema_version"], "properties": base}


SCHEMAS = {
    "spread": _command_schema({
        "ensemble": ENSEMBLE_SCHEMA,
        "n_values": _int_list,
        "n_trials": {"type": "integer", "minimum": 2},
        "x": {"type": "integer", "minimum": 0},
        "t_max": {"type": "number", "exclusiveMinimum": 0},
        "n_grid": {"type": "integer", "minimum": 16},
        "window": _pos_int,
        "t_eq_max": _num,
        "min_r_squared": _num,
    }),
    "scaling": _command_schema({
        "ensemble": ENSEMBLE_SCHEMA,
        "n_values": _int_list,
        "j_values": _num_list,
        "n_kicks": _int_list,
        "n_trials": {"type": "integer", "minimum": 2},
        "x": {"type": "integer", "minimum": 0},
        "all_x": {"type": "boolean"},
        "eval_times": _num_list,
        "expected_mean_exponent": _num,
        "mean_exponent_tol": _num,
        "max_var_exponent": {"type": ["number", "null"]},
    }),
    "formfactor": _command_schema({
        "D": {"type": "integer", "minimum": 4},
        "n_samples": {"type": "integer", "minimum": 100},
        "t_max": {"type": "number", "exclusiveMinimum": 0},
        "n_grid": {"type": "integer", "minimum": 2},
        "c": {"type": "number", "exclusiveMinimum": 0},
        "teq_D_exponents": _int_list,
        "delta_D": _int_list,
        "n_sigma": _num,
    }),
    "haar-verify": _command_schema({
        "D_table": {"type": "integer", "minimum": 2, "maximum": 8},
        "t": _num,
        "D_mc": _int_list,
        "n_samples": {"type": "integer", "minimum": 100},
        "n_sigma": _num,
    }),
    "distinguish": _command_schema({
        "M_exponents": _int_list,
        "n_trials": {"type": "integer", "minimum": 100},
        "x_max": {"type": "number", "exclusiveMinimum": 0},
        "n_points": {"type": "integer", "minimum": 2},
        "c0": {"type": "number", "exclusiveMinimum": 0},
        "max_spread": _num,
        "accuracy_cap": _num,
    }),
    "dump-hamiltonian": _command_schema({
        "ensemble": ENSEMBLE_SCHEMA,
        "trial": {"type": "integer", "minimum": 0},
    }),
}

COMMANDS = tuple(SCHEMAS)

DEFAULTS = {
    "spread": {
        "ensemble": {"variant": "RLHComplete", "normalize": True},
        "n_values": [5, 6, 7, 8],
        "n_trials": 20,
        "x": 0,
        "t_max": 10.0,
        "n_grid": 401,
        "window": 5,
        "t_eq_max": 3.0,
        "min_r_squared": 0.8,
    },
    "scaling": {
        "ensemble": {"variant": "RLHComplete", "normalize": True},
        "n_values": [5, 6, 7, 8],
        "j_values": [32, 64, 128, 256],
        "n_kicks": [10],
        "n_trials": 20,
        "x": 0,
        "all_x": False,
        "eval_times": [10.0],
        "expected_mean_exponent": -2.0,
        "mean_exponent_tol": 0.2,
        "max_var_exponent": None,
    },
    "formfactor": {
        "D": 64,
        "n_samples": 500,
        "t_max": 25.0,
        "n_grid": 250,
        "c": 1.0,
        "teq_D_exponents": list(range(4, 15)),
        "delta_D": [32, 64, 128],
        "n_sigma": 4.0,
    },
    "haar-verify": {
        "D_table": 4,
        "t": 1.3,
        "D_mc": [8, 32],
        "n_samples": 10000,
        "n_sigma": 4.0,
    },
    "distinguish": {
        "M_exponents": [10, 12, 14],
        "n_trials": 2000,
        "x_max": 4.0,
        "n_points": 14,
        "c0": 1.0,
        "max_spread": 0.05,
        "accuracy_cap": 0.8,
    },
    "dump-hamiltonian": {
        "ensemble": {"variant": "RLHComplete", "n": 4, "normalize": True},
        "trial": 0,
    },
}


def _path_of(err: jsonschema.ValidationError) -> str:
    p = "$"
    for part in err.absolute_path:
        p += f"[{part}]" if isinstance(part, int) else f".{part}"
    if err.validator == "additionalProperties":
        extra = sorted(set(err.instance) - set(err.schema.get("properties", {})))
        if extra:
            p += f".{extra[0]}"
    return p


def validate_config(command: str, cfg: dict) -> dict:
    """Validate and fill defaults; raises ConfigError with a JSON path."""
    if command not in SCHEMAS:
        raise ConfigError(f"unknown command {command!r}")
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    validator = jsonschema.Draft202012Validator(SCHEMAS[command])
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        raise ConfigError(e.message, _path_of(e))
    merged = copy.deepcopy(DEFAULTS[command])
    for k, v in cfg.items():
        merged[k] = copy.deepcopy(v)
    if "ensemble" in merged:
        try:
            ensemble_from_config(merged["ensemble"], merged.get("n_values", [None])[0] if "n_values" in merged else None)
        except InvalidInput as exc:
            raise ConfigError(str(exc), "$.ensemble") from exc
    return merged


def ensemble_from_config(ens: dict, n=None, **overrides) -> EnsembleSpec:
    """EnsembleSpec from a config block, with ``n`` (or other fields) filled in."""
    d = dict(ens)
    variant = d.get("variant")
    if variant in ("RLHComplete", "RLHChain", "RLHLattice", "HeisenbergTwoField") and n is not None:
        d["n"] = n
        if variant == "RLHLattice" and "rows" not in ens:
            d.pop("rows", None)
            d.pop("cols", None)
    if variant == "GUE" and "D" not in d:
        d["D"] = 2 ** (n or 4)
    if variant == "KickedTop" and "j" not in d:
        d["j"] = 32
    if variant in ("RLHComplete", "RLHChain", "RLHLattice", "HeisenbergTwoField") and "n" not in d:
        d["n"] = 4
    d.update(overrides)
    for key in ("alpha", "tau"):
        if key in d:
            d[key] = tuple(d[key])
    return EnsembleSpec.from_dict(d)


def load_config(command: str, path: str | None) -> dict:
    if path is None:
        return validate_config(command, {"schema_version": SCHEMA_VERSION})
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from exc
    return validate_config(command, cfg)
