"""Run configuration: schema, defaults and grid expansion."""

from __future__ import annotations

import copy
import hashlib
import json
from typing import Any

import jsonschema
import numpy as np

ANALYSES = ["validate", "triples", "fit-eta", "lipschitz", "holder", "ell-eta", "eccentricity",
            "qc-check", "comparability", "ahlfors", "lemma", "chain"]


class ConfigError(ValueError):
    """The configuration cannot be parsed or violates the schema."""


_GRID = {
    "oneOf": [
        {"type": "array", "minItems": 1},
        {"type": "object", "required": ["start", "stop", "num"], "additionalProperties": False,
         "properties": {"start": {"type": "number"}, "stop": {"type": "number"},
                        "num": {"type": "integer", "minimum": 1}}},
        {"type": "object", "required": ["product"], "additionalProperties": False,
         "properties": {"product": {"type": "array", "minItems": 1}}},
    ]
}

_SECTION = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["graph_of_function", "perturbed", "random"]},
        "function": {"enum": ["zero", "abs", "linear", "sine"]},
        "table": {"type": ["array", "object"]},
        "scale": {"type": "number", "exclusiveMinimum": 0},
        "seed": {"type": "integer"},
        "slope": {}, "offset": {"type": "number"},
        "amplitude": {"type": "number"}, "frequency": {"type": "number"},
    },
    "additionalProperties": False,
}

SCHEMA: dict[str, Any] = {
    "type": "object",
    "required": ["model", "analyses"],
    "additionalProperties": False,
    "properties": {
        "model": {"enum": ["euclidean", "heisenberg", "document"]},
        "base_grid": _GRID,
        "fiber_grid": _GRID,
        "structure": {"type": "object"},
        "section": _SECTION,
        "test_section": _SECTION,
        "seed": {"type": "integer"},
        "analyses": {"type": "array", "items": {"enum": ANALYSES}, "uniqueItems": True},
        "tau": {"type": "number", "minimum": 0},
        "chain_tau": {"type": "number", "minimum": 0},
        "delta": {"type": "number", "exclusiveMinimum": 0},
        "qc_H": {"type": "number", "exclusiveMinimum": 0},
        "holder_alpha": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "eta": {
            "type": "object", "additionalProperties": False,
            "properties": {"kind": {"enum": ["fitted", "lipschitz", "power"]},
                           "coefficient": {"type": "number", "exclusiveMinimum": 0},
                           "exponent": {"type": "number", "exclusiveMinimum": 0}},
        },
        "radius_grid": {
            "oneOf": [
                {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
                {"type": "object", "required": ["min", "max"], "additionalProperties": False,
                 "properties": {"min": {"type": "number", "exclusiveMinimum": 0},
                                "max": {"type": "number", "exclusiveMinimum": 0},
                                "count": {"type": "integer", "minimum": 1}}},
            ]
        },
        "centers": {
            "oneOf": [
                {"const": "all"},
                {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
                {"type": "object", "required": ["start", "stop"], "additionalProperties": False,
                 "properties": {"start": {"type": "integer"}, "stop": {"type": "integer"},
                                "step": {"type": "integer", "minimum": 1}}},
            ]
        },
        "probes": {
            "oneOf": [
                {"enum": ["all", "section"]},
                {"type": "object", "required": ["count"], "additionalProperties": False,
                 "properties": {"count": {"type": "integer", "minimum": 1}}},
            ]
        },
        "eccentricity": {
            "type": "object", "additionalProperties": False,
            "properties": {"bases": {"type": "array", "items": {"type": "integer", "minimum": 0}},
                           "radii": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}}},
        },
        "comparability_pairs": {
            "type": "array",
            "items": {"type": "array", "items": {"type": "integer", "minimum": 0},
                      "minItems": 2, "maxItems": 2},
        },
        "validate_max_points": {"type": "integer", "minimum": 1},
        "eta_ceiling": {"type": "number", "exclusiveMinimum": 0},
        "csv": {"type": "boolean"},
    },
    "allOf": [
        {"if": {"properties": {"model": {"const": "document"}}},
         "then": {"required": ["structure"]},
         "else": {"required": ["base_grid", "fiber_grid"]}},
    ],
}

DEFAULTS: dict[str, Any] = {
    "section": {"kind": "graph_of_function", "function": "zero"},
    "seed": 0,
    "tau": 1e-9,
    "chain_tau": 0.05,
    "delta": 1.0,
    "qc_H": 2.0,
    "holder_alpha": 0.5,
    "eta": {"kind": "fitted"},
    "radius_grid": {"min": 2.0, "max": 16.0, "count": 16},
    "centers": "all",
    "probes": "all",
    "validate_max_points": 1000,
    "eta_ceiling": 1e12,
    "csv": True,
}


def parse_config(text: str) -> dict:
    """Parse and validate config text; raise :class:`ConfigError` with locations."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        lines = [f"{'/'.join(str(p) for p in e.absolute_path) or '<root>'}: {e.message}"
                 for e in errors]
        raise ConfigError("; ".join(lines))
    if "chain" in doc["analyses"] and "test_section" not in doc:
        raise ConfigError("analyses/chain: requires a test_section")
    if doc.get("eta", {}).get("kind") == "power" and "coefficient" not in doc["eta"]:
        raise ConfigError("eta/coefficient: required for a power modulus")
    return resolve(doc)


def resolve(doc: dict) -> dict:
    out = copy.deepcopy(DEFAULTS)
    for k, v in doc.items():
        out[k] = copy.deepcopy(v)
    return out


def config_hash(config: dict) -> str:
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def expand_grid(spec) -> np.ndarray:
    if isinstance(spec, dict) and "product" in spec:
        axes = [expand_grid(g).ravel() for g in spec["product"]]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)
    if isinstance(spec, dict):
        return np.linspace(spec["start"], spec["stop"], spec["num"])
    return np.asarray(spec, dtype=float)


def expand_radii(spec) -> np.ndarray:
    if isinstance(spec, dict):
        return np.geomspace(spec["min"], spec["max"], spec.get("count", 16))
    return np.asarray(spec, dtype=float)
