"""JSON file formats, schema validation and the raw-binary density escape hatch.

Every file carries ``"version": "1"``. Writers emit sorted keys with a fixed
indent so that write -> read -> write is byte-identical.
"""

from __future__ import annotations

import json
from pathlib import Path

import jsonschema
import numpy as np

from .errors import SchemaError, VersionMismatch

VERSION = "1"

_number = {"type": "number"}
_vector = {"type": "array", "items": _number}
_matrix = {"type": "array", "items": _vector}
_atom = {
    "type": "object",
    "required": ["Z", "r"],
    "properties": {"Z": {"type": "integer", "minimum": 1}, "r": {**_vector, "minItems": 3, "maxItems": 3}},
}
_config = {"type": "object", "required": ["atoms"],
           "properties": {"atoms": {"type": "array", "items": _atom, "minItems": 1}}}

_forces = {"type": "array", "items": {"anyOf": [_number, {**_vector, "minItems": 3, "maxItems": 3}]}}


def _record(required):
    return {"type": "object", "required": required,
            "properties": {"config": _config, "energy": _number, "forces": _forces}}


def _records_file(required, min_items=0):
    recs = {"type": "array", "items": _record(required), "minItems": min_items}
    return {"anyOf": [recs, {"type": "object", "required": ["records"],
                             "properties": {"version": {"type": "string"}, "records": recs}}]}


SCHEMAS = {
    "scalar_dataset": {
        "anyOf": [
            {"type": "object", "required": ["X", "y"],
             "properties": {"version": {"type": "string"},
                            "X": {"type": "array", "items": {"anyOf": [_number, _vector]}},
                            "y": _vector}},
            _records_file(["config"]),
        ]
    },
    "force_dataset": _records_file(["config", "forces"], min_items=1),
    "configs": {
        "type": "object",
        "required": ["configs"],
        "properties": {"configs": {"type": "array", "items": _config}},
    },
    "inputs": {
        "type": "object",
        "required": ["X"],
        "properties": {"X": {"type": "array", "items": {"anyOf": [_number, _vector]}}},
    },
    "density_dataset": {
        "type": "object",
        "required": ["inputs", "P"],
        "properties": {
            "version": {"type": "string"},
            "grid": _matrix,
            "inputs": {"type": "array", "items": {"anyOf": [_number, _vector]}},
            "P": {"anyOf": [_matrix, {"type": "object", "required": ["binary"],
                                      "properties": {"binary": {"type": "string"}}}]},
            "loadings": _matrix,
        },
    },
    "binary_sidecar": {
        "type": "object",
        "required": ["k", "n", "layout"],
        "properties": {"k": {"type": "integer", "minimum": 1}, "n": {"type": "integer", "minimum": 0},
                       "layout": {"const": "row-major"}},
    },
    "model": {
        "type": "object",
        "required": ["version"],
        "properties": {"version": {"type": "string"}},
    },
    "manifest": {
        "type": "object",
        "required": ["version", "command", "argv", "config"],
        "properties": {"version": {"type": "string"}, "argv": {"type": "array", "items": {"type": "string"}},
                       "command": {"type": "string"}, "config": {"type": "object"}},
    },
}


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(obj, path) -> None:
    Path(path).write_text(dumps(obj))


def read_json(path, schema: str = None, check_version: bool = True):
    text = Path(path).read_text()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: malformed JSON ({exc})") from exc
    if schema is not None:
        validate(obj, schema, path)
    if check_version and isinstance(obj, dict) and "version" in obj and str(obj["version"]) != VERSION:
        raise VersionMismatch(f"{path}: version {obj['version']!r}, expected {VERSION!r}")
    return obj


def validate(obj, schema: str, where="input") -> None:
    try:
        jsonschema.validate(obj, SCHEMAS[schema])
    except jsonschema.ValidationError as exc:
        raise SchemaError(f"{where}: {exc.message}") from exc


def records(obj) -> list:
    """Records of a dataset given either as a bare array or as ``{"records": [...]}``."""
    return obj if isinstance(obj, list) else obj["records"]


def as_inputs(rows) -> np.ndarray:
    """List of scalars or of vectors -> (n x p) float array (n may be 0)."""
    X = np.asarray(rows, dtype=float)
    if X.size == 0:
        return X.reshape(0, 0)
    return X[:, None] if X.ndim == 1 else X


# -- density matrices -------------------------------------------------------------


def write_density_binary(P, path) -> None:
    """Raw little-endian float64, row-major, with ``<path>.json`` sidecar."""
    P = np.asarray(P, dtype="<f8")
    Path(path).write_bytes(np.ascontiguousarray(P).tobytes(order="C"))
    write_json({"k": int(P.shape[0]), "n": int(P.shape[1]), "layout": "row-major"}, str(path) + ".json")


def read_density_binary(path) -> np.ndarray:
    side = read_json(str(path) + ".json", "binary_sidecar", check_version=False)
    raw = np.fromfile(path, dtype="<f8")
    k, n = side["k"], side["n"]
    if raw.size != k * n:
        raise SchemaError(f"{path}: {raw.size} values, sidecar declares {k}x{n}")
    return raw.reshape(k, n).astype(float)


def load_density_matrix(obj: dict, base_dir) -> np.ndarray:
    P = obj["P"]
    if isinstance(P, dict):
        return read_density_binary(Path(base_dir) / P["binary"])
    return np.asarray(P, dtype=float)
