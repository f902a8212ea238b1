"""JSON model manifest and CSV sequence files.

A manifest describes the layer stack, per-tensor fixed-point formats, the gate
order, and optionally a hardware profile, reuse factors and weights. Weights
are stored as base-10 raw integers in their tensor's format, so a manifest
reproduces the fixed-point datapath bit for bit.
"""
from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from . import fixedpoint as fp
from .fixedpoint import FixedFormat
from .lstm import (
    DEFAULT_FORMATS,
    GATE_ORDER,
    LayerSpec,
    LstmWeights,
    ModelSpec,
    SpecError,
    nominal_autoencoder,
    small_autoencoder,
)
from .perf import HwProfile, ReuseFactors, get_profile

SCHEMA = 1
BUILTIN_MODELS = {"small": small_autoencoder, "nominal": nominal_autoencoder}


class ManifestError(ValueError):
    pass


def _fail(where: str, msg: str):
    raise ManifestError(f"{where}: {msg}")


def _get(d: dict, key: str, where: str, kind=None):
    if not isinstance(d, dict) or key not in d:
        _fail(where, f"missing field '{key}'")
    v = d[key]
    if kind is not None and not isinstance(v, kind) or (kind is int and isinstance(v, bool)):
        _fail(f"{where}.{key}", f"expected {getattr(kind, '__name__', kind)}, got {type(v).__name__}")
    return v


def model_to_manifest(model: ModelSpec, profile: HwProfile | None = None, rfs=None) -> dict:
    doc = {
        "schema": SCHEMA,
        "gate_order": list(GATE_ORDER),
        "TS": model.TS,
        "layers": [
            {"Lx": s.Lx, "Lh": s.Lh, "return_sequences": s.return_sequences} for s in model.layers
        ],
        "repeat_vector_after": model.repeat_vector_after,
        "dense_out": model.dense_out,
        "formats": {k: str(v) for k, v in sorted(model.formats.items())},
    }
    if profile is not None:
        doc["profile"] = profile.to_dict()
    if rfs is not None:
        doc["reuse_factors"] = [{"Rx": r.Rx, "Rh": r.Rh, "Rt": r.Rt} for r in rfs]
    if model.has_weights:
        f = model.formats
        doc["weights"] = {
            "encoding": "raw",
            "layers": [
                {
                    "Wx": fp.quantize_raw(w.Wx, f["weight"]).tolist(),
                    "Wh": fp.quantize_raw(w.Wh, f["weight"]).tolist(),
                    "b": fp.quantize_raw(w.b, f["bias"]).tolist(),
                }
                for w in model.weights
            ],
        }
        if model.dense_w is not None:
            doc["weights"]["dense"] = {
                "W": fp.quantize_raw(model.dense_w, f["weight"]).tolist(),
                "b": fp.quantize_raw(model.dense_b, f["bias"]).tolist(),
            }
    return doc


def _raw_array(v, fmt: FixedFormat, shape, where: str) -> np.ndarray:
    try:
        arr = np.array(v, dtype=object)
        if arr.shape != tuple(shape):
            _fail(where, f"shape {arr.shape}, expected {tuple(shape)}")
        if not all(isinstance(x, int) and not isinstance(x, bool) for x in arr.flat):
            _fail(where, "raw weights must be integers")
        ints = arr.astype(np.int64)
    except (TypeError, ValueError, OverflowError) as exc:
        if isinstance(exc, ManifestError):
            raise
        _fail(where, str(exc))
    if ints.size and (ints.min() < fmt.min_raw or ints.max() > fmt.max_raw):
        _fail(where, f"raw values outside {fmt}")
    return fp.dequantize_raw(ints, fmt)


def manifest_to_model(doc: dict) -> ModelSpec:
    if not isinstance(doc, dict):
        _fail("$", "manifest must be a JSON object")
    schema = _get(doc, "schema", "$", int)
    if schema != SCHEMA:
        _fail("$.schema", f"unsupported schema {schema}, expected {SCHEMA}")
    order = doc.get("gate_order", list(GATE_ORDER))
    if list(order) != list(GATE_ORDER):
        _fail("$.gate_order", f"only {list(GATE_ORDER)} is supported, got {order}")
    ts = _get(doc, "TS", "$", int)
    layers_doc = _get(doc, "layers", "$", list)
    formats = dict(DEFAULT_FORMATS)
    for k, v in doc.get("formats", {}).items():
        try:
            formats[k] = FixedFormat.parse(v) if isinstance(v, str) else FixedFormat(**v)
        except (ValueError, TypeError) as exc:
            _fail(f"$.formats.{k}", str(exc))
    specs = []
    for i, ld in enumerate(layers_doc):
        where = f"$.layers[{i}]"
        try:
            specs.append(
                LayerSpec(
                    _get(ld, "Lx", where, int),
                    _get(ld, "Lh", where, int),
                    bool(ld.get("return_sequences", True)),
                    ts,
                )
            )
        except SpecError as exc:
            _fail(where, str(exc))
    dense_out = doc.get("dense_out")
    weights = dense_w = dense_b = None
    wdoc = doc.get("weights")
    if wdoc is not None:
        if wdoc.get("encoding", "raw") != "raw":
            _fail("$.weights.encoding", "only 'raw' is supported")
        lw = _get(wdoc, "layers", "$.weights", list)
        if len(lw) != len(specs):
            _fail("$.weights.layers", f"{len(lw)} entries for {len(specs)} layers")
        weights = []
        for i, (s, d) in enumerate(zip(specs, lw)):
            where = f"$.weights.layers[{i}]"
            weights.append(
                LstmWeights(
                    _raw_array(_get(d, "Wx", where), formats["weight"], (4 * s.Lh, s.Lx), where + ".Wx"),
                    _raw_array(_get(d, "Wh", where), formats["weight"], (4 * s.Lh, s.Lh), where + ".Wh"),
                    _raw_array(_get(d, "b", where), formats["bias"], (4 * s.Lh,), where + ".b"),
                )
            )
        if dense_out:
            dd = _get(wdoc, "dense", "$.weights", dict)
            lh = specs[-1].Lh
            dense_w = _raw_array(_get(dd, "W", "$.weights.dense"), formats["weight"], (dense_out, lh), "$.weights.dense.W")
            dense_b = _raw_array(_get(dd, "b", "$.weights.dense"), formats["bias"], (dense_out,), "$.weights.dense.b")
    try:
        return ModelSpec(specs, weights, doc.get("repeat_vector_after"), dense_out, dense_w, dense_b, formats)
    except SpecError as exc:
        _fail("$", str(exc))


def manifest_profile(doc: dict) -> HwProfile | None:
    p = doc.get("profile")
    if p is None:
        return None
    if isinstance(p, str):
        return get_profile(p)
    base = p.get("base")
    fields = {k: v for k, v in p.items() if k != "base"}
    try:
        return get_profile(base, **fields) if base else HwProfile(**fields)
    except (TypeError, ValueError, KeyError) as exc:
        _fail("$.profile", str(exc))


def manifest_reuse(doc: dict) -> list[ReuseFactors] | None:
    rf = doc.get("reuse_factors")
    if rf is None:
        return None
    out = []
    for i, d in enumerate(rf):
        try:
            out.append(ReuseFactors(int(d["Rx"]), int(d["Rh"]), int(d.get("Rt", 1))))
        except (KeyError, TypeError, ValueError) as exc:
            _fail(f"$.reuse_factors[{i}]", str(exc))
    return out


def load_manifest(source: str) -> dict:
    """Read a manifest from a path, or ``builtin:<name>`` for the reference models."""
    if source.startswith("builtin:"):
        name = source.split(":", 1)[1]
        if name not in BUILTIN_MODELS:
            raise ManifestError(f"unknown builtin model {name!r}; known: {sorted(BUILTIN_MODELS)}")
        return model_to_manifest(BUILTIN_MODELS[name]())
    path = Path(source)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ManifestError(f"{source}: {exc.strerror or exc}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{source}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def read_sequence_csv(text: str) -> np.ndarray:
    """One row per timestep, one column per feature; a non-numeric header row is skipped."""
    rows = [r for r in csv.reader(io.StringIO(text)) if r]
    out = []
    for lineno, row in enumerate(rows, start=1):
        try:
            out.append([float(v) for v in row])
        except ValueError:
            if lineno == 1:
                continue
            raise ManifestError(f"line {lineno}: non-numeric value in {row}") from None
    if not out or len({len(r) for r in out}) != 1:
        raise ManifestError("sequence CSV must hold a rectangular block of numbers")
    return np.array(out)


def write_sequence_csv(seq) -> str:
    seq = np.asarray(seq)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"x{i}" for i in range(seq.shape[-1])])
    for row in seq:
        w.writerow([repr(float(v)) for v in row])
    return buf.getvalue()
