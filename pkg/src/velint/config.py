"""Experiment configuration: JSON schema, defaults and object construction.

A config holds shared ``system``/``discretization``/``family``/``solver``
sections plus a list of ``studies``; each study may override any shared
section.  :func:`load_config` validates (unknown keys are errors) and returns
the config with every default written out, which is what the run manifest
echoes.
"""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from .analysis import sample_states
from .discrete_lagrangian import DiscreteLagrangianTQ, family_from_config
from .discretization import discretization_from_config
from .fitting import geometric_grid
from .lagrangian import TangentVector
from .solver import NewtonSettings
from .systems import BUILTIN_SYSTEMS, system_from_config

STUDY_KINDS = ("simulate", "order-local", "order-global", "a-term", "symmetry", "verify-exact",
               "blowup-trace", "conjugation", "contact-order", "identity-limit")


class ConfigError(ValueError):
    """Invalid experiment configuration (CLI exit code 2)."""


_NUM = {"type": "number"}
_VEC = {"type": "array", "items": _NUM, "minItems": 1}
_TANGENT = {"type": "object", "additionalProperties": False, "required": ["q", "v"],
            "properties": {"q": _VEC, "v": _VEC}}
_SAMPLED = {"type": "object", "additionalProperties": False, "required": ["count"],
            "properties": {"count": {"type": "integer", "minimum": 1},
                           "seed": {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1, "default": 0},
                           "q_box": {"type": "number", "exclusiveMinimum": 0, "default": 1.0},
                           "v_box": {"type": "number", "exclusiveMinimum": 0, "default": 1.0}}}
_STATES = {"oneOf": [{"type": "array", "items": _TANGENT, "minItems": 1}, _SAMPLED]}
_GEOMETRIC = {"type": "object", "additionalProperties": False,
              "properties": {"h0": {"type": "number", "exclusiveMinimum": 0, "default": 0.1},
                             "count": {"type": "integer", "minimum": 5, "default": 8},
                             "ratio": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1,
                                       "default": 0.5}}}
_POSITIVE_GRID = {"oneOf": [{"type": "array", "items": {"type": "number", "exclusiveMinimum": 0},
                             "minItems": 5}, _GEOMETRIC]}
_CONSTRAINT = {"type": "object", "additionalProperties": False, "minProperties": 1,
               "properties": {"max": _NUM, "min": _NUM, "target": _NUM, "band": _NUM,
                              "equals": {"type": ["boolean", "number", "integer"]}},
               "dependentRequired": {"target": ["band"], "band": ["target"]}}
_EXPECT = {"type": "object", "additionalProperties": _CONSTRAINT, "default": {}}

_SECTION = {
    "system": {"type": "object", "required": ["name"],
               "properties": {"name": {"enum": sorted(BUILTIN_SYSTEMS)}}},
    "discretization": {"type": "object", "additionalProperties": False,
                       "properties": {"kind": {"enum": ["linear", "exact"], "default": "linear"},
                                      "beta": {"type": "number", "minimum": 0, "maximum": 1, "default": 0.0},
                                      "tol": {"type": "number", "exclusiveMinimum": 0}}},
    "family": {"type": "object", "additionalProperties": False, "required": ["family"],
               "properties": {"family": {"enum": ["left_rectangle", "midpoint", "trapezoid", "exact"]},
                              "a": _NUM, "tol": {"type": "number", "exclusiveMinimum": 0}}},
    "solver": {"type": "object", "additionalProperties": False,
               "properties": {"newton_tol": {"type": "number", "exclusiveMinimum": 0, "default": 1e-11},
                              "max_iter": {"type": "integer", "minimum": 1, "default": 50},
                              "damping": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1,
                                          "default": 0.5}}},
}


def _study_schema(kind: str, props: dict, required=()) -> dict:
    base = {"kind": {"const": kind}, "name": {"type": "string", "pattern": "^[A-Za-z0-9_.-]+$"},
            "expect": _EXPECT, **_SECTION}
    return {"type": "object", "additionalProperties": False, "required": ["kind", *required],
            "properties": {**base, **props}}


STUDY_SCHEMAS = {
    "simulate": _study_schema("simulate", {
        "v0": _TANGENT,
        "h_grid": {"type": "array", "items": _NUM, "minItems": 1},
        "nsteps": {"type": "integer", "minimum": 0}}, ["v0", "h_grid", "nsteps"]),
    "order-local": _study_schema("order-local", {"v0": _TANGENT, "h_grid": _POSITIVE_GRID}, ["v0"]),
    "order-global": _study_schema("order-global", {
        "v0": _TANGENT, "T": {"type": "number", "exclusiveMinimum": 0, "default": 1.0},
        "h_grid": _POSITIVE_GRID}, ["v0"]),
    "a-term": _study_schema("a-term", {
        "a_values": {"type": "array", "items": _NUM, "minItems": 1},
        "states": _STATES, "h": {"type": "number", "exclusiveMinimum": 0},
        "mismatch": {"type": "object", "additionalProperties": False, "required": ["v0"],
                     "properties": {"a_plus": {"type": "number", "default": 5.0},
                                    "a_minus": {"type": "number", "default": 0.0},
                                    "v0": _TANGENT, "h_grid": _POSITIVE_GRID}}},
        ["a_values", "states", "h"]),
    "symmetry": _study_schema("symmetry", {"states": _STATES, "h_grid": _POSITIVE_GRID}, ["states"]),
    "verify-exact": _study_schema("verify-exact", {
        "states": _STATES, "h_values": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0},
                                        "minItems": 1}}, ["states", "h_values"]),
    "blowup-trace": _study_schema("blowup-trace", {
        "q_bar": _VEC, "z": _VEC,
        "h_grid": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 6},
        "zero_samples": {**_SAMPLED, "properties": {**_SAMPLED["properties"],
                                                    "count": {"type": "integer", "minimum": 0}}}},
        ["q_bar", "z", "h_grid"]),
    "conjugation": _study_schema("conjugation", {
        "states": _STATES, "h": {"type": "number", "exclusiveMinimum": 0}}, ["states", "h"]),
    "contact-order": _study_schema("contact-order", {
        "states": _STATES, "h_grid": _POSITIVE_GRID,
        "reference_tol": {"type": "number", "exclusiveMinimum": 0, "default": 1e-12}}, ["states"]),
    "identity-limit": _study_schema("identity-limit", {"states": _STATES, "h_grid": _POSITIVE_GRID},
                                    ["states"]),
}

TOP_SCHEMA = {
    "type": "object", "additionalProperties": False,
    "properties": {
        **_SECTION,
        "description": {"type": "string"},
        "study": {"type": "object", "required": ["kind"]},
        "studies": {"type": "array", "items": {"type": "object", "required": ["kind"]}, "minItems": 1},
        "output": {"type": "object", "additionalProperties": False,
                   "properties": {"dir": {"type": "string", "default": "velint-out"}}},
    },
    "oneOf": [{"required": ["study"]}, {"required": ["studies"]}],
}

_DEFAULTS = {"discretization": {"kind": "linear", "beta": 0.0}, "family": {"family": "midpoint"},
             "solver": {"newton_tol": 1e-11, "max_iter": 50, "damping": 0.5},
             "system": {"name": "harmonic"}}
_SYSTEM_DEFAULTS = {"harmonic": {"omega": 1.0, "dim": 1}, "free": {"dim": 1}, "pendulum": {"k": 1.0},
                    "mechanical_1d": {}}


def _fill_defaults(schema: dict, instance: Any) -> None:
    """Write schema ``default`` values into ``instance`` in place."""
    if not isinstance(instance, dict):
        return
    for key, sub in schema.get("properties", {}).items():
        if key not in instance and "default" in sub:
            instance[key] = copy.deepcopy(sub["default"])
        if key in instance:
            _fill_branch(sub, instance[key])


def _fill_branch(sub: dict, value: Any) -> None:
    if "oneOf" in sub:
        for alt in sub["oneOf"]:
            if alt.get("type") == "object" and isinstance(value, dict):
                _fill_defaults(alt, value)
            elif alt.get("type") == "array" and isinstance(value, list) and "items" in alt:
                for item in value:
                    _fill_defaults(alt["items"], item)
    elif isinstance(value, list) and "items" in sub:
        for item in value:
            _fill_defaults(sub["items"], item)
    else:
        _fill_defaults(sub, value)


def _validate(schema: dict, instance: Any, where: str) -> None:
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(instance), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        path = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {path}: {err.message}")


def _check_simulate(study: dict, where: str) -> None:
    if any(h <= 0 for h in study.get("h_grid", [])):
        raise ConfigError(f"{where}: simulate needs h > 0 in h_grid; the h = 0 limit is handled by "
                          "the blowup-trace study (desingularized principle)")


def resolve(raw: dict) -> dict:
    """Validate ``raw`` and return a fully materialized copy."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    cfg = copy.deepcopy(raw)
    if "manifest_version" in cfg:
        cfg = copy.deepcopy(cfg.get("config", {}))
    for i, st in enumerate(cfg.get("studies", [cfg.get("study")] if "study" in cfg else [])):
        if isinstance(st, dict) and st.get("kind") == "simulate":
            _check_simulate(st, f"studies[{i}]")
    _validate(TOP_SCHEMA, cfg, "config")
    if "study" in cfg:
        cfg["studies"] = [cfg.pop("study")]
    for key, default in _DEFAULTS.items():
        cfg.setdefault(key, copy.deepcopy(default))
    cfg.setdefault("output", {})
    _fill_defaults(TOP_SCHEMA, cfg)
    names = set()
    for i, st in enumerate(cfg["studies"]):
        where = f"studies[{i}]"
        kind = st.get("kind")
        if kind not in STUDY_SCHEMAS:
            raise ConfigError(f"{where}: unknown study kind {kind!r}; choose from {list(STUDY_KINDS)}")
        _validate(STUDY_SCHEMAS[kind], st, where)
        _fill_defaults(STUDY_SCHEMAS[kind], st)
        if "h_grid" in STUDY_SCHEMAS[kind]["properties"] and "h_grid" not in st:
            st["h_grid"] = {"h0": 0.1, "count": 8, "ratio": 0.5}
        if kind == "a-term" and "mismatch" in st:
            st["mismatch"].setdefault("h_grid", {"h0": 0.1, "count": 7, "ratio": 0.5})
        if kind == "blowup-trace":
            st.setdefault("zero_samples", {"count": 0, "seed": 0, "q_box": 1.0, "v_box": 1.0})
        st.setdefault("name", f"{i:02d}-{kind}")
        if st["name"] in names:
            raise ConfigError(f"{where}: duplicate study name {st['name']!r}")
        names.add(st["name"])
        for section in _SECTION:
            merged = copy.deepcopy(cfg[section]) if section not in st else copy.deepcopy(st[section])
            if section == "system":
                merged = {**_SYSTEM_DEFAULTS.get(merged["name"], {}), **merged}
            if section == "discretization" and merged.get("kind") == "exact":
                merged.setdefault("tol", 1e-10)
            if section == "family":
                fam = merged["family"]
                if fam == "left_rectangle":
                    merged.setdefault("a", 0.0)
                if fam == "exact":
                    merged.setdefault("tol", 1e-10)
            st[section] = merged
        try:
            build_study(st)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{where}: {exc}") from exc
    for section in _SECTION:
        if section == "system":
            cfg[section] = {**_SYSTEM_DEFAULTS.get(cfg[section]["name"], {}), **cfg[section]}
    return cfg


def load_config(path) -> dict:
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    return resolve(raw)


@dataclass
class StudyObjects:
    dl: DiscreteLagrangianTQ
    settings: NewtonSettings


def build_study(st: dict) -> StudyObjects:
    """Construct the discrete Lagrangian and solver settings of a resolved study."""
    sys = system_from_config(st["system"])
    d = discretization_from_config(st["discretization"], sys)
    dl = family_from_config(st["family"], sys, d)
    if st["kind"] == "verify-exact" and dl.family != "exact":
        raise ValueError("verify-exact needs the exact family")
    if st["kind"] == "a-term" and dl.family != "left_rectangle":
        raise ValueError("the a-term study needs the left_rectangle family")
    for key in ("v0",):
        if key in st:
            tangent(st[key], sys.dim)
    return StudyObjects(dl, NewtonSettings.from_config(st["solver"]))


def tangent(spec: dict, dim: int) -> TangentVector:
    x = TangentVector(spec["q"], spec["v"])
    if x.dim != dim:
        raise ValueError(f"tangent vector has dimension {x.dim}, system has {dim}")
    return x


def states_from(spec, dim: int) -> list[TangentVector]:
    if isinstance(spec, list):
        return [tangent(s, dim) for s in spec]
    return sample_states(dim, spec["count"], spec["seed"], spec["q_box"], spec["v_box"])


def grid_from(spec) -> np.ndarray:
    if isinstance(spec, list):
        return np.asarray(spec, dtype=float)
    return geometric_grid(spec["h0"], spec["count"], spec["ratio"])
