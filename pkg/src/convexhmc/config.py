"""Experiment configuration: JSON schema, builders and deterministic file IO.

Every run is a pure function of (config, seed): the schema pins the
admissible fields, and all CSV/JSON writers format numbers via repr so
identical configs produce byte-identical artifacts.
"""

from __future__ import annotations

import json
import os
from typing import Any

import numpy as np
from jsonschema import Draft202012Validator

from .integrators import IntegratorSpec
from .kernels import KernelSpec, default_integration_time
from .potentials import (Potential, make_gaussian, make_perturbed_quadratic,
                         make_ridge_logistic, make_separable)


class ConfigError(ValueError):
    pass


_TARGET_SCHEMA = {
    "type": "object",
    "oneOf": [
        {
            "properties": {
                "kind": {"const": "gaussian"},
                "eigenvalues": {"type": "array", "items": {"type": "number",
                                                           "exclusiveMinimum": 0},
                                "minItems": 1},
            },
            "required": ["kind", "eigenvalues"],
            "additionalProperties": False,
        },
        {
            "properties": {
                "kind": {"const": "perturbed"},
                "dim": {"type": "integer", "minimum": 1},
                "amplitude": {"type": "number", "minimum": 0, "exclusiveMaximum": 0.25},
                "seed": {"type": "integer"},
            },
            "required": ["kind", "dim", "amplitude", "seed"],
            "additionalProperties": False,
        },
        {
            "properties": {
                "kind": {"const": "logistic"},
                "data_csv": {"type": "string"},
                "ridge": {"type": "number", "exclusiveMinimum": 0},
            },
            "required": ["kind", "data_csv", "ridge"],
            "additionalProperties": False,
        },
        {
            "properties": {
                "kind": {"const": "separable"},
                "block": {"$dynamicRef": "#target"},
                "copies": {"type": "integer", "minimum": 1},
            },
            "required": ["kind", "block", "copies"],
            "additionalProperties": False,
        },
    ],
}

_INTEGRATOR_SCHEMA = {
    "type": "object",
    "properties": {
        "scheme": {"enum": ["exact_gaussian", "euler", "leapfrog", "reference", "guarded"]},
        "theta": {"type": "number", "exclusiveMinimum": 0},
        "T": {"type": "number", "minimum": 0},
        "k": {"enum": [1, 2]},
    },
    "required": ["scheme"],
    "additionalProperties": False,
}

_KERNEL_SCHEMA = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["ideal", "unadjusted", "metropolis"]},
        "integrator": _INTEGRATOR_SCHEMA,
    },
    "required": ["kind", "integrator"],
    "additionalProperties": False,
}

_RUN_SCHEMA = {
    "type": "object",
    "properties": {
        "steps": {"type": "integer", "minimum": 0},
        "replicas": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer"},
    },
    "required": ["seed"],
    "additionalProperties": False,
}

EXPERIMENT_SCHEMA = {
    "$defs": {"target": {"$dynamicAnchor": "target", **_TARGET_SCHEMA}},
    "type": "object",
    "properties": {
        "task": {"enum": ["sample", "couple", "certify", "drift", "goodset",
                          "distance", "precondition", "verify_rounding", "scaling"]},
        "target": {"$dynamicRef": "#target"},
        "kernel": _KERNEL_SCHEMA,
        "run": _RUN_SCHEMA,
        "metric": {
            "type": "object",
            "properties": {
                "epsilon": {"type": "number", "exclusiveMinimum": 0},
                "reference_samples": {"type": "integer", "minimum": 1},
            },
            "additionalProperties": False,
        },
        "couple": {
            "type": "object",
            "properties": {
                "x0": {"type": "array", "items": {"type": "number"}},
                "y0": {"type": "array", "items": {"type": "number"}},
            },
            "additionalProperties": False,
        },
        "certify": {
            "type": "object",
            "properties": {
                "T": {"type": "number", "minimum": 0},
                "trials": {"type": "integer", "minimum": 1},
                "tol": {"type": "number", "exclusiveMinimum": 0},
            },
            "required": ["trials"],
            "additionalProperties": False,
        },
        "drift": {
            "type": "object",
            "properties": {
                "radii": {"type": "array", "items": {"type": "number", "minimum": 0},
                          "minItems": 1},
            },
            "required": ["radii"],
            "additionalProperties": False,
        },
        "goodset": {
            "type": "object",
            "properties": {
                "g_inf": {"type": "number", "exclusiveMinimum": 0},
                "g_2": {"type": "number", "minimum": 0},
                "block_dim": {"type": "integer", "minimum": 1},
            },
            "required": ["block_dim"],
            "additionalProperties": False,
        },
        "precondition": {
            "type": "object",
            "properties": {
                "anchor": {"type": "array", "items": {"type": "number"}},
                "points_csv": {"type": "string"},
            },
            "additionalProperties": False,
        },
        "distance": {
            "type": "object",
            "properties": {
                "a_csv": {"type": "string"},
                "b_csv": {"type": "string"},
                "method": {"enum": ["assignment", "sliced", "exact_1d"]},
                "directions": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer"},
            },
            "required": ["a_csv", "b_csv"],
            "additionalProperties": False,
        },
        "scaling": {
            "type": "object",
            "properties": {
                "family": {"enum": ["standard_gaussian"]},
                "kernel": {"enum": ["unadjusted", "metropolis"]},
                "scheme": {"enum": ["euler", "leapfrog"]},
                "dims": {"type": "array", "items": {"type": "integer", "minimum": 1},
                         "minItems": 1},
                "epsilon": {"type": "number", "exclusiveMinimum": 0},
                "replicas": {"type": "integer", "minimum": 2, "maximum": 2048},
            },
            "required": ["scheme", "dims"],
            "additionalProperties": False,
        },
    },
    "required": ["task"],
    "additionalProperties": False,
}

_VALIDATOR = Draft202012Validator(EXPERIMENT_SCHEMA)
_TARGET_VALIDATOR = Draft202012Validator(
    {"$defs": {"target": {"$dynamicAnchor": "target", **_TARGET_SCHEMA}},
     "$dynamicRef": "#target"})


def validate_config(config: dict) -> None:
    errors = sorted(_VALIDATOR.iter_errors(config), key=lambda e: e.json_path)
    if errors:
        lines = [f"{e.json_path}: {e.message}" for e in errors]
        raise ConfigError("invalid experiment config:\n  " + "\n  ".join(lines))


def validate_target(target: dict) -> None:
    errors = sorted(_TARGET_VALIDATOR.iter_errors(target), key=lambda e: e.json_path)
    if errors:
        lines = [f"{e.json_path}: {e.message}" for e in errors]
        raise ConfigError("invalid target config:\n  " + "\n  ".join(lines))


def load_json(path: str) -> Any:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: malformed JSON ({exc})") from exc


def load_logistic_csv(path: str) -> tuple[np.ndarray, np.ndarray]:
    """CSV rows are (label, feature_1, ..., feature_d); header optional."""
    data = np.loadtxt(path, delimiter=",", ndmin=2, skiprows=_header_rows(path))
    if data.shape[1] < 2:
        raise ConfigError(f"{path}: need a label column plus at least one feature column")
    return data[:, 1:], data[:, 0]


def build_potential(target: dict, base_dir: str = ".") -> Potential:
    validate_target(target)
    kind = target["kind"]
    if kind == "gaussian":
        return make_gaussian(target["eigenvalues"])
    if kind == "perturbed":
        return make_perturbed_quadratic(target["dim"], target["amplitude"], target["seed"])
    if kind == "logistic":
        path = target["data_csv"]
        if not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        features, labels = load_logistic_csv(path)
        return make_ridge_logistic(features, labels, target["ridge"])
    block = build_potential(target["block"], base_dir)
    return make_separable([block] * target["copies"])


def build_kernel_spec(kernel: dict, pot: Potential) -> KernelSpec:
    integ = dict(kernel["integrator"])
    scheme = integ["scheme"]
    T = integ.get("T", default_integration_time(pot))
    theta = integ.get("theta", 1e-10 if scheme in ("reference", "exact_gaussian") else 1e-3)
    spec = IntegratorSpec(scheme=scheme, theta=theta, T=T, order=integ.get("k"))
    return KernelSpec(kind=kernel["kind"], integrator=spec)


def format_number(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_csv(path: str, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(format_number(v) for v in row) + "\n")


def write_json(path: str, obj: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(obj))


def dumps(obj: dict) -> str:
    return json.dumps(_plain(obj), sort_keys=True, indent=2) + "\n"


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def save_trajectory_csv(path: str, pot, times, qs, ps) -> None:
    """Dump an integrated trajectory as rows (t, q..., p..., H)."""
    times = np.asarray(times, dtype=float)
    qs = np.asarray(qs, dtype=float)
    ps = np.asarray(ps, dtype=float)
    d = qs.shape[-1]
    header = (["t"] + [f"q{j}" for j in range(d)] + [f"p{j}" for j in range(d)] + ["H"])
    energies = pot.value(qs) + 0.5 * np.sum(ps * ps, axis=-1)
    rows = ([times[i]] + list(qs[i]) + list(ps[i]) + [energies[i]]
            for i in range(len(times)))
    write_csv(path, header, rows)


def load_points_csv(path: str) -> np.ndarray:
    pts = np.loadtxt(path, delimiter=",", ndmin=2, skiprows=_header_rows(path))
    return pts


def _header_rows(path: str) -> int:
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline()
    try:
        [float(tok) for tok in first.strip().split(",") if tok]
        return 0
    except ValueError:
        return 1
