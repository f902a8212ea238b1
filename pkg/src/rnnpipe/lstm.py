"""LSTM cells, layers and the repeat-vector autoencoder in float and fixed point.

Gate blocks are stacked in the order (i, f, g, o) along the first axis of
``Wx``, ``Wh`` and ``b``. All forward functions accept a leading batch
dimension: sequences are ``[..., TS, Lx]``.

Fixed-point mode quantizes inputs and weights on entry, runs the whole datapath
on raw integers (see :mod:`rnnpipe.fixedpoint`) and dequantizes on exit, so the
public API is float-in/float-out in both modes.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import fixedpoint as fp
from .fixedpoint import FixedFormat

GATE_ORDER = ("i", "f", "g", "o")

DEFAULT_FORMATS: dict[str, FixedFormat] = {
    "input": fp.Q4_12,
    "weight": fp.Q4_12,
    "hidden": fp.Q4_12,
    "gate": fp.Q4_12,
    "output": fp.Q4_12,
    "bias": fp.Q8_24,
    "cell": fp.Q8_24,
}


class SpecError(ValueError):
    """Inconsistent dimensions or model structure."""


@dataclass(frozen=True)
class LayerSpec:
    Lx: int
    Lh: int
    return_sequences: bool = True
    TS: int = 8

    def __post_init__(self):
        if self.Lx < 1 or self.Lh < 1 or self.TS < 1:
            raise SpecError(f"layer dimensions must be >= 1: {self}")


@dataclass
class LstmWeights:
    Wx: np.ndarray
    Wh: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.Wx = np.asarray(self.Wx, dtype=float)
        self.Wh = np.asarray(self.Wh, dtype=float)
        self.b = np.asarray(self.b, dtype=float)

    def check(self, spec: LayerSpec):
        want = {"Wx": (4 * spec.Lh, spec.Lx), "Wh": (4 * spec.Lh, spec.Lh), "b": (4 * spec.Lh,)}
        for name, shape in want.items():
            if getattr(self, name).shape != shape:
                raise SpecError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")

    @classmethod
    def zeros(cls, spec: LayerSpec) -> "LstmWeights":
        return cls(
            np.zeros((4 * spec.Lh, spec.Lx)), np.zeros((4 * spec.Lh, spec.Lh)), np.zeros(4 * spec.Lh)
        )

    @classmethod
    def uniform(cls, spec: LayerSpec, rng: np.random.Generator, scale: float = 1.0) -> "LstmWeights":
        return cls(
            rng.uniform(-scale, scale, (4 * spec.Lh, spec.Lx)),
            rng.uniform(-scale, scale, (4 * spec.Lh, spec.Lh)),
            rng.uniform(-scale, scale, 4 * spec.Lh),
        )

    def copy(self) -> "LstmWeights":
        return LstmWeights(self.Wx.copy(), self.Wh.copy(), self.b.copy())


@dataclass
class CellState:
    h: np.ndarray
    c: np.ndarray

    @classmethod
    def zeros(cls, Lh: int, batch_shape=()) -> "CellState":
        return cls(np.zeros((*batch_shape, Lh)), np.zeros((*batch_shape, Lh)))


@dataclass
class ModelSpec:
    """Stack of LSTM layers with an optional repeat-vector bottleneck and dense head.

    ``weights`` and the dense tensors may be left as ``None`` for models that
    are only used for performance estimation.
    """

    layers: list[LayerSpec]
    weights: list[LstmWeights] | None = None
    repeat_vector_after: int | None = None
    dense_out: int | None = None
    dense_w: np.ndarray | None = None
    dense_b: np.ndarray | None = None
    formats: dict[str, FixedFormat] = field(default_factory=lambda: dict(DEFAULT_FORMATS))

    def __post_init__(self):
        self.validate()

    @property
    def TS(self) -> int:
        return self.layers[0].TS if self.layers else 0

    @property
    def has_weights(self) -> bool:
        return self.weights is not None and (self.dense_out is None or self.dense_w is not None)

    def validate(self):
        layers = self.layers
        if not layers:
            return
        r = self.repeat_vector_after
        for k, spec in enumerate(layers):
            if spec.TS != layers[0].TS:
                raise SpecError("all layers must share the same TS")
            last_only = not spec.return_sequences
            if r is not None:
                if not 0 <= r < len(layers) - 1:
                    raise SpecError(f"repeat_vector_after={r} must point at an encoder layer")
                if last_only != (k == r):
                    raise SpecError(
                        f"layer {k}: only the encoder's last layer (index {r}) may return the last vector only"
                    )
            elif last_only and k != len(layers) - 1:
                raise SpecError(f"layer {k} returns the last vector only but feeds another layer")
            if k and spec.Lx != layers[k - 1].Lh:
                raise SpecError(
                    f"layer {k} expects Lx={spec.Lx} but layer {k - 1} produces Lh={layers[k - 1].Lh}"
                )
        if self.weights is not None:
            if len(self.weights) != len(layers):
                raise SpecError("one LstmWeights per layer required")
            for spec, w in zip(layers, self.weights):
                w.check(spec)
        if self.dense_w is not None:
            self.dense_w = np.asarray(self.dense_w, dtype=float)
            self.dense_b = np.asarray(self.dense_b, dtype=float)
            if self.dense_out is None:
                self.dense_out = self.dense_w.shape[0]
            if self.dense_w.shape != (self.dense_out, layers[-1].Lh) or self.dense_b.shape != (
                self.dense_out,
            ):
                raise SpecError(
                    f"dense head shape {self.dense_w.shape} does not match ({self.dense_out}, {layers[-1].Lh})"
                )

    def with_weights(self, weights, dense_w=None, dense_b=None) -> "ModelSpec":
        return replace(self, weights=weights, dense_w=dense_w, dense_b=dense_b)

    def init_weights(self, rng: np.random.Generator, scale: float | None = None) -> "ModelSpec":
        """Uniform random weights; ``scale=None`` uses 1/sqrt(Lh) per layer."""
        ws = []
        for spec in self.layers:
            s = scale if scale is not None else 1.0 / np.sqrt(spec.Lh)
            ws.append(LstmWeights.uniform(spec, rng, s))
        dw = db = None
        if self.dense_out is not None:
            lh = self.layers[-1].Lh
            s = scale if scale is not None else 1.0 / np.sqrt(lh)
            dw = rng.uniform(-s, s, (self.dense_out, lh))
            db = rng.uniform(-s, s, self.dense_out)
        return self.with_weights(ws, dw, db)


def small_autoencoder(TS: int = 8, hidden: int = 9, features: int = 1) -> ModelSpec:
    """Two-layer autoencoder (one encoder and one decoder LSTM) with a dense head."""
    return ModelSpec(
        layers=[LayerSpec(features, hidden, False, TS), LayerSpec(hidden, hidden, True, TS)],
        repeat_vector_after=0,
        dense_out=features,
    )


def nominal_autoencoder(TS: int = 8, features: int = 1) -> ModelSpec:
    """Four-layer autoencoder with hidden sizes 32, 8, 8, 32 and a dense head."""
    dims = [(features, 32, True), (32, 8, False), (8, 8, True), (8, 32, True)]
    return ModelSpec(
        layers=[LayerSpec(lx, lh, seq, TS) for lx, lh, seq in dims],
        repeat_vector_after=1,
        dense_out=features,
    )


# -- float datapath --

def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def _cell_float(x, h, c, w: LstmWeights):
    z = x @ w.Wx.T + h @ w.Wh.T + w.b
    zi, zf, zg, zo = np.split(z, 4, axis=-1)
    i, f, g, o = _sigmoid(zi), _sigmoid(zf), np.tanh(zg), _sigmoid(zo)
    c = f * c + i * g
    return o * np.tanh(c), c


# -- fixed datapath --

class _FixedLayer:
    """Quantized copy of one layer's weights plus the tables it needs."""

    def __init__(self, w: LstmWeights, formats: dict[str, FixedFormat]):
        self.f = formats
        self.Wx = fp.quantize_raw(w.Wx, formats["weight"])
        self.Wh = fp.quantize_raw(w.Wh, formats["weight"])
        self.b = fp.quantize_raw(w.b, formats["bias"])
        self.tables = _tables_for(formats["gate"], formats["hidden"])

    def step(self, x, h, c):
        f = self.f
        ax, fx = fp.matvec_raw(self.Wx, f["weight"], x, f["input"])
        ah, fh = fp.matvec_raw(self.Wh, f["weight"], h, f["hidden"])
        frac = max(fx, fh, f["bias"].frac_bits)
        acc = (
            fp.round_shift(ax, fx - frac)
            + fp.round_shift(ah, fh - frac)
            + fp.round_shift(self.b, f["bias"].frac_bits - frac)
        )
        # accumulator clamps at the wide format, then one rounding into the gate format
        acc = fp.requantize_raw(acc, frac, _at_frac(f["cell"], frac))
        z = np.asarray(fp.requantize_raw(acc, frac, f["gate"]), dtype=np.int64)
        zi, zf, zg, zo = np.split(z, 4, axis=-1)
        act = self.tables.out_fmt
        i = fp.sigmoid_lut_raw(zi, self.tables)
        fg = fp.sigmoid_lut_raw(zf, self.tables)
        g = fp.tanh_pwl_raw(zg, self.tables)
        o = fp.sigmoid_lut_raw(zo, self.tables)
        c = fp.add_raw(
            fp.mul_raw(fg, act, c, f["cell"], f["cell"]), fp.mul_raw(i, act, g, act, f["cell"]), f["cell"]
        )
        tc = fp.tanh_pwl_raw(fp.requantize_raw(c, f["cell"].frac_bits, f["gate"]), self.tables)
        h = fp.mul_raw(o, act, tc, act, f["hidden"])
        return h, c


def _at_frac(fmt: FixedFormat, frac: int) -> FixedFormat:
    # same real-valued range as fmt, expressed with `frac` fraction bits
    return FixedFormat(fmt.int_bits + frac, frac)


_TABLE_CACHE: dict[tuple, fp.ActTables] = {}


def _tables_for(in_fmt: FixedFormat, out_fmt: FixedFormat) -> fp.ActTables:
    key = (in_fmt, out_fmt)
    if key not in _TABLE_CACHE:
        _TABLE_CACHE[key] = fp.build_act_tables(in_fmt, out_fmt)
    return _TABLE_CACHE[key]


def _check_numerics(numerics: str):
    if numerics not in ("float", "fixed"):
        raise ValueError(f"numerics must be 'float' or 'fixed', got {numerics!r}")


def cell_step(
    x_t, state: CellState, w: LstmWeights, numerics: str = "float", formats=None
) -> CellState:
    """One LSTM timestep. In fixed mode ``x_t`` and ``state`` are quantized on entry."""
    _check_numerics(numerics)
    x_t = np.asarray(x_t, dtype=float)
    lh = w.Wh.shape[1]
    if x_t.shape[-1] != w.Wx.shape[1] or state.h.shape[-1] != lh or state.c.shape[-1] != lh:
        raise SpecError("cell_step dimension mismatch")
    if numerics == "float":
        h, c = _cell_float(x_t, np.asarray(state.h, float), np.asarray(state.c, float), w)
        return CellState(h, c)
    f = formats or DEFAULT_FORMATS
    layer = _FixedLayer(w, f)
    h, c = layer.step(
        fp.quantize_raw(x_t, f["input"]), fp.quantize_raw(state.h, f["hidden"]), fp.quantize_raw(state.c, f["cell"])
    )
    return CellState(fp.dequantize_raw(h, f["hidden"]), fp.dequantize_raw(c, f["cell"]))


def layer_forward(xs, spec: LayerSpec, w: LstmWeights, numerics: str = "float", formats=None):
    """Run one layer from zero state; returns ``[..., TS, Lh]`` or ``[..., Lh]``."""
    _check_numerics(numerics)
    w.check(spec)
    xs = np.asarray(xs, dtype=float)
    if xs.ndim < 2 or xs.shape[-2] != spec.TS or xs.shape[-1] != spec.Lx:
        raise SpecError(f"input shape {xs.shape} does not match TS={spec.TS}, Lx={spec.Lx}")
    if numerics == "float":
        return _layer_float(xs, spec, w)
    f = formats or DEFAULT_FORMATS
    out = _layer_fixed(fp.quantize_raw(xs, f["input"]), spec, _FixedLayer(w, f))
    return fp.dequantize_raw(out, f["hidden"])


def _layer_float(xs, spec, w):
    batch = xs.shape[:-2]
    h = np.zeros((*batch, spec.Lh))
    c = np.zeros((*batch, spec.Lh))
    hs = []
    for t in range(spec.TS):
        h, c = _cell_float(xs[..., t, :], h, c, w)
        hs.append(h)
    return np.stack(hs, axis=-2) if spec.return_sequences else h


def _layer_fixed(xs, spec, layer: _FixedLayer):
    batch = xs.shape[:-2]
    h = np.zeros((*batch, spec.Lh), dtype=np.int64)
    c = np.zeros((*batch, spec.Lh), dtype=np.int64)
    hs = []
    for t in range(spec.TS):
        h, c = layer.step(xs[..., t, :], h, c)
        hs.append(h)
    return np.stack(hs, axis=-2) if spec.return_sequences else h


def model_forward(inputs, model: ModelSpec, numerics: str = "float"):
    """Encoder, repeat-vector, decoder, then the per-timestep dense head.

    ``inputs`` is ``[..., TS, Lx]``; the output has the same number of timesteps.
    """
    _check_numerics(numerics)
    if not model.has_weights:
        raise SpecError("model has no weights")
    xs = np.asarray(inputs, dtype=float)
    first = model.layers[0]
    if xs.ndim < 2 or xs.shape[-2] != first.TS or xs.shape[-1] != first.Lx:
        raise SpecError(f"input shape {xs.shape} does not match TS={first.TS}, Lx={first.Lx}")
    f = model.formats
    if numerics == "fixed":
        seq = fp.quantize_raw(xs, f["input"])
    else:
        seq = xs
    for k, (spec, w) in enumerate(zip(model.layers, model.weights)):
        if numerics == "float":
            seq = _layer_float(seq, spec, w)
        else:
            seq = _layer_fixed(seq, spec, _FixedLayer(w, f))
        if k == model.repeat_vector_after:
            seq = np.repeat(seq[..., None, :], spec.TS, axis=-2)
    if model.dense_w is None:
        return seq if numerics == "float" else fp.dequantize_raw(seq, f["hidden"])
    if numerics == "float":
        return seq @ model.dense_w.T + model.dense_b
    return fp.dequantize_raw(_dense_fixed(seq, model), f["output"])


def _dense_fixed(seq, model: ModelSpec):
    f = model.formats
    w = fp.quantize_raw(model.dense_w, f["weight"])
    b = fp.quantize_raw(model.dense_b, f["bias"])
    acc, frac = fp.matvec_raw(w, f["weight"], seq, f["hidden"])
    frac_out = max(frac, f["bias"].frac_bits)
    acc = fp.round_shift(acc, frac - frac_out) + fp.round_shift(b, f["bias"].frac_bits - frac_out)
    acc = fp.requantize_raw(acc, frac_out, _at_frac(f["cell"], frac_out))
    return np.asarray(fp.requantize_raw(acc, frac_out, f["output"]), dtype=np.int64)
