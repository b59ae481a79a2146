"""
JSON interchange for states, tangent vectors, parity structures and gauges.

Complex numbers are written as ``[re, im]`` pairs and matrices as nested
row-major lists.  Reading accepts plain real numbers wherever a complex entry
is expected.  Every validation failure names the offending field, for
instance ``R_samples[1][4]``.

Output is deterministic: keys keep insertion order and floats are written
with 17 significant digits.
"""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .core import BOSON, FERMION, FiniteCMPS, UniformCMPS, build_species_table, construct_left_orthonormal
from .errors import CMPSError, ParseError, ShapeError, ValidationError
from .regularity import ParityStructure
from .tangent import TangentFinite, TangentUniform

FLOAT_FORMAT = ".17g"


# --------------------------------------------------------------------------- deterministic output


def format_float(x: float) -> str:
    if not math.isfinite(x):
        return "null"
    text = format(x, FLOAT_FORMAT)
    if text in ("-0", "0"):
        return "0.0" if text == "0" else "-0.0"
    return text


def _emit(obj, indent: int, level: int, out: list):
    pad = "\n" + " " * (indent * (level + 1)) if indent else ""
    end = "\n" + " " * (indent * level) if indent else ""
    sep = "," if indent else ", "
    if isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{")
        for i, (k, v) in enumerate(obj.items()):
            out.append((sep if i else "") + pad + json.dumps(str(k)) + ": ")
            _emit(v, indent, level + 1, out)
        out.append(end + "}")
    elif isinstance(obj, (list, tuple)):
        if not obj:
            out.append("[]")
            return
        flat = all(not isinstance(v, (dict, list, tuple)) for v in obj)
        out.append("[")
        for i, v in enumerate(obj):
            out.append((", " if flat else sep + pad) if i else ("" if flat else pad))
            _emit(v, indent, level + 1, out)
        out.append("]" if flat else end + "]")
    elif isinstance(obj, (bool, np.bool_)):
        out.append("true" if obj else "false")
    elif obj is None:
        out.append("null")
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(format_float(float(obj)))
    elif isinstance(obj, (complex, np.complexfloating)):
        _emit([float(obj.real), float(obj.imag)], indent, level, out)
    elif isinstance(obj, np.ndarray):
        _emit(encode_array(obj), indent, level, out)
    else:
        out.append(json.dumps(str(obj)))


def dumps(obj, indent: int = 2) -> str:
    """Serialize with fixed key order and 17-digit floats."""
    out: list = []
    _emit(obj, indent, 0, out)
    return "".join(out) + "\n"


def encode_array(a) -> list:
    """Nested lists with ``[re, im]`` leaves."""
    a = np.asarray(a, dtype=complex)
    if a.ndim == 0:
        return [float(a.real), float(a.imag)]
    return [encode_array(x) for x in a]


# --------------------------------------------------------------------------- parsing helpers


def _complex(value, path: str) -> complex:
    if isinstance(value, bool):
        raise ShapeError(f"{path}: expected a number or [re, im]", path)
    if isinstance(value, (int, float)):
        return complex(value)
    if isinstance(value, list) and len(value) == 2 and all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
        return complex(value[0], value[1])
    raise ShapeError(f"{path}: expected a number or [re, im]", path)


def decode_array(value, path: str, shape: tuple) -> np.ndarray:
    """Decode nested lists into a complex array of the given shape."""
    if not shape:
        return np.array(_complex(value, path))
    if not isinstance(value, list) or len(value) != shape[0]:
        got = len(value) if isinstance(value, list) else type(value).__name__
        raise ShapeError(f"{path}: expected a list of length {shape[0]}, got {got}", path)
    out = np.empty(shape, dtype=complex)
    for i, item in enumerate(value):
        out[i] = decode_array(item, f"{path}[{i}]", shape[1:])
    if not np.all(np.isfinite(out)):
        raise ShapeError(f"{path}: entries must be finite", path)
    return out


def _require(doc: dict, key: str, path: str = ""):
    if key not in doc:
        where = f"{path}.{key}" if path else key
        raise ShapeError(f"{where}: required field is missing", where)
    return doc[key]


def _positive_int(value, path: str, minimum: int = 1) -> int:
    if not isinstance(value, int) or isinstance(value, bool) or value < minimum:
        raise ShapeError(f"{path}: expected an integer >= {minimum}", path)
    return value


def _positive_float(value, path: str) -> float:
    if not isinstance(value, (int, float)) or isinstance(value, bool) or not value > 0:
        raise ShapeError(f"{path}: expected a positive number", path)
    return float(value)


def _species(doc: dict):
    entries = _require(doc, "species")
    if not isinstance(entries, list) or not entries:
        raise ShapeError("species: expected a nonempty list", "species")
    pairs = []
    for i, e in enumerate(entries):
        if not isinstance(e, dict):
            raise ShapeError(f"species[{i}]: expected an object", f"species[{i}]")
        name = _require(e, "name", f"species[{i}]")
        stats = _require(e, "statistics", f"species[{i}]")
        if stats not in (BOSON, FERMION):
            raise ShapeError(f"species[{i}].statistics: must be 'boson' or 'fermion'", f"species[{i}].statistics")
        pairs.append((str(name), stats))
    try:
        return build_species_table(pairs)
    except ValidationError as exc:
        raise type(exc)(str(exc), "species") from None


def _load_json(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ParseError(f"{path}: top level must be a JSON object")
    return doc


# --------------------------------------------------------------------------- states


def _species_doc(species) -> list:
    return [{"name": n, "statistics": s} for n, s in zip(species.names, species.statistics)]


def state_to_dict(state: UniformCMPS | FiniteCMPS) -> dict:
    if isinstance(state, UniformCMPS):
        return {"D": state.D, "species": _species_doc(state.species),
                "Q": encode_array(state.Q), "R": encode_array(state.R)}
    doc = {"D": state.D, "species": _species_doc(state.species), "L": state.L, "N": state.N,
           "Q_samples": encode_array(state.Q), "R_samples": encode_array(state.R),
           "vL": encode_array(state.vL), "vR": encode_array(state.vR), "boundary": state.boundary}
    if state.boundary == "periodic":
        doc["B"] = encode_array(state.B)
    return doc


def _wrap(build, path: str):
    try:
        return build()
    except ValidationError as exc:
        if exc.path is None:
            exc.path = path
        raise


def state_from_dict(doc: dict) -> UniformCMPS | FiniteCMPS:
    """Build and validate a state; a uniform state may give the Hermitian ``K`` instead of ``Q``."""
    if not isinstance(doc, dict):
        raise ParseError("state document must be a JSON object")
    D = _positive_int(_require(doc, "D"), "D")
    species = _species(doc)
    q = species.q
    if "Q_samples" in doc or "L" in doc or "N" in doc:
        L = _positive_float(_require(doc, "L"), "L")
        N = _positive_int(_require(doc, "N"), "N", 2)
        Q = decode_array(_require(doc, "Q_samples"), "Q_samples", (N + 1, D, D))
        R = decode_array(_require(doc, "R_samples"), "R_samples", (q, N + 1, D, D))
        vL = decode_array(_require(doc, "vL"), "vL", (D,))
        vR = decode_array(_require(doc, "vR"), "vR", (D,))
        boundary = doc.get("boundary", "open")
        if boundary not in ("open", "periodic"):
            raise ShapeError("boundary: must be 'open' or 'periodic'", "boundary")
        B = decode_array(doc["B"], "B", (D, D)) if "B" in doc else None
        return _wrap(lambda: FiniteCMPS(L, Q, R, vL, vR, species, boundary, B), "Q_samples")
    R = decode_array(_require(doc, "R"), "R", (q, D, D))
    if "K" in doc and "Q" not in doc:
        K = decode_array(doc["K"], "K", (D, D))
        return _wrap(lambda: construct_left_orthonormal(K, R, species), "K")
    Q = decode_array(_require(doc, "Q"), "Q", (D, D))
    return _wrap(lambda: UniformCMPS(Q, R, species), "Q")


def read_state(path) -> UniformCMPS | FiniteCMPS:
    return state_from_dict(_load_json(path))


def write_state(state, path) -> None:
    Path(path).write_text(dumps(state_to_dict(state)))


# --------------------------------------------------------------------------- tangents, parity, gauges


def tangent_to_dict(t: TangentFinite | TangentUniform) -> dict:
    if isinstance(t, TangentUniform):
        return {"V": encode_array(t.V), "W": encode_array(t.W), "p": t.p}
    return {"V_samples": encode_array(t.V), "W_samples": encode_array(t.W), "wR": encode_array(t.wR)}


def tangent_from_dict(doc: dict, base: UniformCMPS | FiniteCMPS):
    """Tangent data shaped after ``base``; uniform tangents may carry a momentum ``p``."""
    if not isinstance(doc, dict):
        raise ParseError("tangent document must be a JSON object")
    D, q = base.D, base.q
    if isinstance(base, UniformCMPS):
        V = decode_array(_require(doc, "V"), "V", (D, D))
        W = decode_array(_require(doc, "W"), "W", (q, D, D))
        p = doc.get("p", 0.0)
        if not isinstance(p, (int, float)) or isinstance(p, bool) or not math.isfinite(p):
            raise ShapeError("p: expected a real number", "p")
        return TangentUniform(V, W, float(p))
    n1 = base.N + 1
    V = decode_array(_require(doc, "V_samples"), "V_samples", (n1, D, D))
    W = decode_array(_require(doc, "W_samples"), "W_samples", (q, n1, D, D))
    wR = decode_array(_require(doc, "wR"), "wR", (D,))
    return TangentFinite(V, W, wR)


def read_tangent(path, base):
    return tangent_from_dict(_load_json(path), base)


def parity_from_dict(doc: dict) -> ParityStructure:
    """``{"Dplus": int, "Dminus": int}``: even sector first, then odd."""
    if not isinstance(doc, dict):
        raise ParseError("parity document must be a JSON object")
    plus = _positive_int(_require(doc, "Dplus"), "Dplus", 0)
    minus = _positive_int(_require(doc, "Dminus"), "Dminus", 0)
    if plus + minus == 0:
        raise ShapeError("Dplus: sector sizes must not both vanish", "Dplus")
    return ParityStructure(plus, minus)


def read_parity(path) -> ParityStructure:
    return parity_from_dict(_load_json(path))


def gauge_to_dict(g) -> dict:
    g = np.asarray(g)
    return {"g": encode_array(g)} if g.ndim == 2 else {"g_samples": encode_array(g)}


def read_potential(path, n_points: int) -> np.ndarray:
    """Potential samples from ``{"v": number | [numbers]}``."""
    doc = _load_json(path)
    v = _require(doc, "v")
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return np.full(n_points, float(v))
    if not isinstance(v, list) or len(v) != n_points or not all(
            isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
        raise ShapeError(f"v: expected a number or a list of {n_points} real samples", "v")
    return np.array(v, dtype=float)


def read_document(path) -> dict:
    """Raw JSON object, raising ``ParseError`` on malformed input."""
    return _load_json(path)


def error_document(exc: BaseException) -> dict:
    """Machine-readable description of a failure."""
    doc = {"error": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, CMPSError):
        doc["exit_code"] = exc.exit_code
    path = getattr(exc, "path", None)
    if path:
        doc["path"] = path
    return doc
