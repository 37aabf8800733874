"""Versioned experiment configuration: defaults and JSON schemas per command."""

from __future__ import annotations

import copy
import json

import jsonschema

CONFIG_VERSION = 1

_GRID = {
    "type": "object",
    "properties": {
        "d": {"enum": [1, 2]},
        "half_width": {"type": "number", "exclusiveMinimum": 0},
        "n_per_axis": {"type": "integer", "minimum": 8, "multipleOf": 2},
    },
    "required": ["d", "half_width", "n_per_axis"],
    "additionalProperties": False,
}

_THICK = {
    "type": "object",
    "properties": {
        "period": {"type": "number", "exclusiveMinimum": 0},
        "filled": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
        "windows": {"type": "number", "exclusiveMinimum": 0},
        "density": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
    },
    "required": ["period", "filled"],
    "additionalProperties": False,
}

_CORPUS = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["band_limited", "gaussian_bumps", "mixed"]},
        "count": {"type": "integer", "minimum": 1},
        "lam_max": {"type": "number", "exclusiveMinimum": 0},
        "width_range": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0},
                        "minItems": 2, "maxItems": 2},
        "center_range": {"type": "number", "exclusiveMinimum": 0},
    },
    "required": ["kind", "count"],
    "additionalProperties": False,
}


def _numbers(minimum=None, exclusive=True, min_items=1):
    item = {"type": "number"}
    if minimum is not None:
        item["exclusiveMinimum" if exclusive else "minimum"] = minimum
    return {"type": "array", "items": item, "minItems": min_items}


_POS = {"type": "number", "exclusiveMinimum": 0}
_MATRIX = {"type": "array", "items": {"type": "array", "items": {"type": "number"}}, "minItems": 1}

_SYSTEM = {
    "type": "object",
    "properties": {"A": _MATRIX, "B": _MATRIX, "T": _POS, "N_t": {"type": "integer", "minimum": 1}},
    "required": ["A", "B", "T", "N_t"],
    "additionalProperties": False,
}

_COMMAND_PROPS = {
    "verify-kernels": {
        "grid": _GRID,
        "times": _numbers(0),
        "ou_times": _numbers(0),
        "tol": _POS,
        "ou_tol": _POS,
    },
    "verify-up": {
        "grid": _GRID,
        "thick_set": _THICK,
        "lambdas": _numbers(0, min_items=2),
        "corpus": _CORPUS,
        "concentrated_per_lambda": {"type": "integer", "minimum": 0},
        "min_r2": {"type": "number"},
        "full_mask_control": {"type": "boolean"},
        "control_tol": _POS,
    },
    "verify-diss": {
        "grid": _GRID,
        "semigroup": {"enum": ["GW", "OU"]},
        "lambdas": _numbers(0, min_items=2),
        "times": _numbers(0, min_items=2),
        "holdout_lambdas": _numbers(0, min_items=0),
        "holdout_times": _numbers(0, min_items=0),
        "T": _POS,
        "corpus": _CORPUS,
        "extremal": {"type": "boolean"},
        "inflation": {"type": "number", "minimum": 0},
        "min_r2": {"type": "number"},
    },
    "verify-lemma-l1": {
        "grid": _GRID,
        "lambdas": _numbers(0, min_items=2),
        "s_values": _numbers(0, min_items=1),
        "holdout_lambdas": _numbers(0, min_items=0),
        "holdout_s": _numbers(0, min_items=0),
        "inflation": {"type": "number", "minimum": 0},
        "limit_check": {"type": "boolean"},
        "limit_lambdas": _numbers(0),
        "limit_s": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "limit_tol": _POS,
    },
    "estimate-cobs": {
        "grid": _GRID,
        "semigroup": {"enum": ["GW", "OU"]},
        "thick_set": _THICK,
        "T_values": _numbers(0),
        "r": {"anyOf": [{"type": "number", "minimum": 1}, {"const": "inf"}]},
        "n_steps": {"type": "integer", "minimum": 32},
        "corpus": _CORPUS,
        "concentrated_lambdas": _numbers(0, min_items=0),
    },
    "fit-cobs": {
        "gamma": {"type": "array", "items": _POS, "minItems": 3, "maxItems": 3},
        "r": {"anyOf": [{"type": "number", "minimum": 1}, {"const": "inf"}]},
        "measured": {
            "type": "object",
            "properties": {"T_values": _numbers(0, min_items=4), "values": _numbers(0, min_items=4)},
            "required": ["T_values", "values"],
            "additionalProperties": False,
        },
        "estimate": {"type": "object"},
        "min_r2": {"type": "number"},
    },
    "duality-check": {
        "system": _SYSTEM,
        "random_systems": {
            "type": "object",
            "properties": {
                "count": {"type": "integer", "minimum": 1},
                "max_n": {"type": "integer", "minimum": 1, "maximum": 5},
                "max_m": {"type": "integer", "minimum": 1, "maximum": 3},
                "T": _POS,
                "N_t": {"type": "integer", "minimum": 1, "maximum": 64},
            },
            "required": ["count"],
            "additionalProperties": False,
        },
        "eps": _numbers(0),
        "tol": _POS,
        "sample_count": {"type": "integer", "minimum": 0},
        "obs_samples": {"type": "integer", "minimum": 0},
        "reference": _POS,
        "reference_tol": _POS,
    },
}

COMMANDS = tuple(_COMMAND_PROPS)

_D1_SMALL = {"d": 1, "half_width": 12.0, "n_per_axis": 512}
_D1_UP = {"d": 1, "half_width": 16.0, "n_per_axis": 1024}
_SLAB = {"period": 2.0, "filled": [0.0, 1.0], "windows": 2.0, "density": 0.5}

DEFAULTS = {
    "verify-kernels": {
        "grid": _D1_SMALL, "times": [0.1, 0.5, 1.0], "ou_times": [0.25, 1.0],
        "tol": 1e-6, "ou_tol": 1e-8,
    },
    "verify-up": {
        "grid": _D1_UP, "thick_set": _SLAB,
        "lambdas": [1, 2, 3, 4, 5, 6, 8, 10, 12, 16],
        "corpus": {"kind": "mixed", "count": 20, "lam_max": 16.0},
        "concentrated_per_lambda": 2, "min_r2": 0.9,
        "full_mask_control": True, "control_tol": 1e-3,
    },
    "verify-diss": {
        "grid": _D1_SMALL, "semigroup": "GW",
        "lambdas": [4, 8, 16], "times": [0.05, 0.1, 0.2, 0.3, 0.4, 0.5],
        "holdout_lambdas": [6, 12], "holdout_times": [0.075, 0.15, 0.25, 0.35, 0.45],
        "T": 1.0, "corpus": {"kind": "mixed", "count": 20, "lam_max": 20.0},
        "extremal": True, "inflation": 0.10, "min_r2": 0.99,
    },
    "verify-lemma-l1": {
        "grid": _D1_SMALL,
        "lambdas": [2, 4, 6, 8, 10], "s_values": [0.1, 0.3, 0.5, 0.7, 0.9],
        "holdout_lambdas": [3, 4.5, 5.5, 7, 9], "holdout_s": [0.2, 0.4, 0.6, 0.8, 0.85],
        "inflation": 0.10, "limit_check": True,
        "limit_lambdas": [0.4, 0.2, 0.1, 0.05], "limit_s": 0.5, "limit_tol": 1e-4,
    },
    "estimate-cobs": {
        "grid": _D1_UP, "semigroup": "GW", "thick_set": _SLAB,
        "T_values": [0.25, 0.5, 1.0, 2.0], "r": "inf", "n_steps": 32,
        "corpus": {"kind": "mixed", "count": 40, "lam_max": 16.0, "width_range": [0.05, 1.0]},
        "concentrated_lambdas": [4, 8, 16, 24],
    },
    "fit-cobs": {"gamma": [1.0, 2.0, 1.0], "r": "inf", "min_r2": 0.9},
    "duality-check": {
        "system": {"A": [[1.0]], "B": [[1.0]], "T": 1.0, "N_t": 64},
        "eps": [1e-2, 1e-3, 1e-4], "tol": 0.02, "sample_count": 0, "obs_samples": 200,
        "reference": 0.5819767068693265, "reference_tol": 0.02,
    },
}


def schema(command: str) -> dict:
    return {
        "type": "object",
        "properties": {"version": {"const": CONFIG_VERSION}, **_COMMAND_PROPS[command]},
        "required": ["version"],
        "additionalProperties": False,
    }


class ConfigError(ValueError):
    pass


def validate(command: str, cfg: dict) -> None:
    validator = jsonschema.Draft202012Validator(schema(command))
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        lines = [f"{'/'.join(str(p) for p in e.absolute_path) or '<root>'}: {e.message}" for e in errors]
        raise ConfigError("; ".join(lines))


def load(command: str, path=None) -> dict:
    """Read, validate and merge a config over the command defaults."""
    if command not in DEFAULTS:
        raise ConfigError(f"unknown command {command!r}")
    if path is None:
        user = {"version": CONFIG_VERSION}
    else:
        try:
            with open(path, encoding="utf-8") as fh:
                user = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
    if not isinstance(user, dict):
        raise ConfigError("<root>: config must be a JSON object")
    validate(command, user)
    merged = copy.deepcopy(DEFAULTS[command])
    merged.update({k: v for k, v in user.items() if k != "version"})
    if command == "duality-check" and ("system" in user or "random_systems" in user) \
            and "reference" not in user:
        merged.pop("reference", None)
    if command == "duality-check" and "random_systems" in user and "system" not in user:
        merged.pop("system", None)
    return merged
