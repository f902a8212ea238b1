"""Two's-complement fixed-point arithmetic and hardware-style activations.

Scalars are :class:`FixedValue` objects backed by Python integers, so every
operation is exact before the final round/saturate step. The array helpers
(``*_raw``) work on ``int64`` numpy arrays and are what the LSTM datapath uses;
the scalar ops are thin wrappers around the same rounding code.

Rounding is round-to-nearest-even everywhere and overflow saturates.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.optimize import linprog


@dataclass(frozen=True)
class FixedFormat:
    word_bits: int
    frac_bits: int

    def __post_init__(self):
        if not (1 <= self.frac_bits < self.word_bits <= 64):
            raise ValueError(
                f"invalid fixed format: word_bits={self.word_bits}, frac_bits={self.frac_bits}"
            )

    @property
    def int_bits(self) -> int:
        return self.word_bits - self.frac_bits

    @property
    def min_raw(self) -> int:
        return -(1 << (self.word_bits - 1))

    @property
    def max_raw(self) -> int:
        return (1 << (self.word_bits - 1)) - 1

    @property
    def lsb(self) -> float:
        return 2.0 ** -self.frac_bits

    @property
    def min_value(self) -> float:
        return self.min_raw * self.lsb

    @property
    def max_value(self) -> float:
        return self.max_raw * self.lsb

    def __str__(self):
        return f"Q{self.int_bits}.{self.frac_bits}"

    @classmethod
    def parse(cls, text: str) -> "FixedFormat":
        """Parse ``"Q4.12"`` (integer bits incl. sign, fraction bits)."""
        if not text.upper().startswith("Q") or "." not in text:
            raise ValueError(f"cannot parse fixed format {text!r}")
        ib, fb = text[1:].split(".", 1)
        return cls(int(ib) + int(fb), int(fb))

    def to_dict(self) -> dict:
        return {"word_bits": self.word_bits, "frac_bits": self.frac_bits}


Q4_12 = FixedFormat(16, 12)
Q8_24 = FixedFormat(32, 24)


@dataclass(frozen=True)
class FixedValue:
    raw: int
    fmt: FixedFormat

    def __post_init__(self):
        if not (self.fmt.min_raw <= self.raw <= self.fmt.max_raw):
            raise ValueError(f"raw {self.raw} does not fit in {self.fmt}")

    @property
    def value(self) -> float:
        return self.raw * self.fmt.lsb

    def __float__(self):
        return self.value

    def __repr__(self):
        return f"FixedValue({self.value!r}, {self.fmt}, raw={self.raw})"


# -- rounding primitives (work on Python ints and on integer numpy arrays) --

def round_shift(v, shift: int):
    """Divide ``v`` by ``2**shift`` with round-half-to-even; negative shift scales up."""
    if shift <= 0:
        return v * (1 << -shift)
    q = v >> shift
    r = v - (q << shift)
    half = 1 << (shift - 1)
    up = (r > half) | ((r == half) & ((q & 1) == 1))
    if isinstance(up, np.ndarray):
        return q + up.astype(q.dtype)
    return q + int(up)


def saturate_raw(v, fmt: FixedFormat):
    if isinstance(v, np.ndarray):
        return np.clip(v, fmt.min_raw, fmt.max_raw)
    return min(max(v, fmt.min_raw), fmt.max_raw)


def requantize_raw(v, from_frac: int, fmt: FixedFormat):
    """Rescale raw integers carrying ``from_frac`` fraction bits into ``fmt``."""
    return saturate_raw(round_shift(v, from_frac - fmt.frac_bits), fmt)


def _wide(a: np.ndarray, b_bits: int) -> np.ndarray:
    # int64 holds any product of two words whose widths sum to <= 62 bits plus
    # a few accumulation guard bits; beyond that fall back to exact Python ints.
    if b_bits > 58:
        return np.asarray(a).astype(object)
    return np.asarray(a, dtype=np.int64)


# -- scalar operations --

def quantize(x: float, fmt: FixedFormat) -> tuple[FixedValue, bool]:
    """Round ``x`` to ``fmt``; returns the value and whether it saturated."""
    scaled = float(x) * (1 << fmt.frac_bits)
    if np.isnan(scaled):
        raise ValueError("cannot quantize NaN")
    if scaled >= fmt.max_raw + 0.5:
        return FixedValue(fmt.max_raw, fmt), True
    if scaled <= fmt.min_raw - 0.5:
        return FixedValue(fmt.min_raw, fmt), True
    raw = int(round(scaled))  # Python round() is half-to-even
    clipped = saturate_raw(raw, fmt)
    return FixedValue(clipped, fmt), clipped != raw


def to_fixed(x: float, fmt: FixedFormat) -> FixedValue:
    return quantize(x, fmt)[0]


def dequantize(v: FixedValue) -> float:
    return v.value


def fx_mul(a: FixedValue, b: FixedValue, out_fmt: FixedFormat) -> FixedValue:
    prod = a.raw * b.raw
    raw = requantize_raw(prod, a.fmt.frac_bits + b.fmt.frac_bits, out_fmt)
    return FixedValue(int(raw), out_fmt)


def fx_add(a: FixedValue, b: FixedValue) -> FixedValue:
    if a.fmt != b.fmt:
        raise ValueError(f"fx_add format mismatch: {a.fmt} vs {b.fmt}")
    return FixedValue(saturate_raw(a.raw + b.raw, a.fmt), a.fmt)


def fx_convert(a: FixedValue, out_fmt: FixedFormat) -> FixedValue:
    return FixedValue(int(requantize_raw(a.raw, a.fmt.frac_bits, out_fmt)), out_fmt)


# -- array operations --

def quantize_raw(x, fmt: FixedFormat) -> np.ndarray:
    """Vectorized :func:`quantize`, returning raw ``int64`` values."""
    scaled = np.asarray(x, dtype=np.float64) * float(1 << fmt.frac_bits)
    if np.isnan(scaled).any():
        raise ValueError("cannot quantize NaN")
    scaled = np.clip(scaled, fmt.min_raw, fmt.max_raw)
    return np.rint(scaled).astype(np.int64)


def dequantize_raw(raw, fmt: FixedFormat) -> np.ndarray:
    return np.asarray(raw, dtype=np.float64) * fmt.lsb


def mul_raw(a, a_fmt: FixedFormat, b, b_fmt: FixedFormat, out_fmt: FixedFormat) -> np.ndarray:
    """Elementwise product of raw arrays, rescaled into ``out_fmt``."""
    bits = a_fmt.word_bits + b_fmt.word_bits
    prod = _wide(a, bits) * _wide(b, bits)
    out = requantize_raw(prod, a_fmt.frac_bits + b_fmt.frac_bits, out_fmt)
    return np.asarray(out, dtype=np.int64)


def add_raw(a, b, fmt: FixedFormat) -> np.ndarray:
    return saturate_raw(np.asarray(a, dtype=np.int64) + np.asarray(b, dtype=np.int64), fmt)


def matvec_raw(w, w_fmt: FixedFormat, x, x_fmt: FixedFormat) -> tuple[np.ndarray, int]:
    """Exact dot products ``x @ w.T``; returns the sums and their fraction bits.

    ``w`` is ``[out, in]`` and ``x`` is ``[..., in]``. No rounding happens here:
    the caller clamps/rescales the accumulator once per dot product.
    """
    guard = int(np.ceil(np.log2(np.shape(w)[-1] + 1)))
    bits = w_fmt.word_bits + x_fmt.word_bits + guard
    acc = _wide(x, bits) @ _wide(w, bits).T
    return acc, w_fmt.frac_bits + x_fmt.frac_bits


# -- activation tables --

SIGMOID_ENTRIES = 1024
SIGMOID_RANGE = (-8.0, 8.0)
# knots on x >= 0; the last one is where the output saturates at 1.0
TANH_KNOTS = tuple(k / 8 for k in range(1, 33))
# compact variant: three linear pieces per side plus saturation, 7 segments total
TANH_KNOTS_7 = (0.625, 1.25, 2.375)


def _fit_tanh_knots(knots) -> np.ndarray:
    """Minimax values at ``knots`` for a continuous PWL tanh that saturates at 1.

    Solved as a small linear program on a dense grid over [0, 8]; the value at
    the origin is pinned to 0 so the fit is odd.
    """
    k = np.concatenate(([0.0], knots))
    x = np.linspace(0.0, 8.0, 8001)
    t = np.tanh(x)
    inner = len(knots) - 1
    basis = []
    for j in range(1, inner + 1):
        e = np.zeros(len(k))
        e[j] = 1.0
        basis.append(np.where(x < k[-1], np.interp(x, k, e), 0.0))
    e = np.zeros(len(k))
    e[-1] = 1.0
    fixed = np.where(x < k[-1], np.interp(x, k, e), 1.0)
    B = np.array(basis).T
    n = len(x)
    A = np.vstack([np.c_[B, -np.ones(n)], np.c_[-B, -np.ones(n)]])
    b = np.concatenate([t - fixed, fixed - t])
    res = linprog(
        np.r_[np.zeros(inner), 1.0],
        A_ub=A,
        b_ub=b,
        bounds=[(None, None)] * inner + [(0, None)],
        method="highs",
    )
    if not res.success:
        raise RuntimeError(f"tanh fit failed: {res.message}")
    return np.concatenate(([0.0], res.x[:inner], [1.0]))


@dataclass
class ActTables:
    """Sigmoid lookup table and tanh segments for one input format.

    ``tanh_segments`` holds ``(start_raw, slope_raw, intercept_raw)`` sorted by
    start; a segment covers inputs from its start up to the next start. Slopes
    and intercepts are stored at ``coef_fmt``.
    """

    in_fmt: FixedFormat
    out_fmt: FixedFormat
    coef_fmt: FixedFormat
    sigmoid_table: np.ndarray
    sigmoid_range: tuple[float, float]
    tanh_segments: list[tuple[int, int, int]] = field(default_factory=list)

    @property
    def sigmoid_step_raw(self) -> int:
        lo, hi = self.sigmoid_range
        span = round((hi - lo) * (1 << self.in_fmt.frac_bits))
        return span // len(self.sigmoid_table)

    def to_dict(self) -> dict:
        return {
            "in_fmt": self.in_fmt.to_dict(),
            "out_fmt": self.out_fmt.to_dict(),
            "coef_fmt": self.coef_fmt.to_dict(),
            "sigmoid_range": list(self.sigmoid_range),
            "sigmoid_table": [int(v) for v in self.sigmoid_table],
            "tanh_segments": [[int(a), int(b), int(c)] for a, b, c in self.tanh_segments],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ActTables":
        return cls(
            in_fmt=FixedFormat(**d["in_fmt"]),
            out_fmt=FixedFormat(**d["out_fmt"]),
            coef_fmt=FixedFormat(**d["coef_fmt"]),
            sigmoid_table=np.asarray(d["sigmoid_table"], dtype=np.int64),
            sigmoid_range=tuple(d["sigmoid_range"]),
            tanh_segments=[tuple(int(v) for v in s) for s in d["tanh_segments"]],
        )


def build_act_tables(
    in_fmt: FixedFormat = Q4_12,
    out_fmt: FixedFormat | None = None,
    coef_fmt: FixedFormat = Q8_24,
    entries: int = SIGMOID_ENTRIES,
    sigmoid_range: tuple[float, float] = SIGMOID_RANGE,
    tanh_knots=TANH_KNOTS,
) -> ActTables:
    out_fmt = out_fmt or in_fmt
    lo, hi = sigmoid_range
    span_raw = round((hi - lo) * (1 << in_fmt.frac_bits))
    if span_raw % entries:
        raise ValueError("sigmoid range must split into an integer number of input LSBs per entry")
    grid = lo + np.arange(entries) * (hi - lo) / entries
    table = quantize_raw(1.0 / (1.0 + np.exp(-grid)), out_fmt)

    knots = np.asarray(tanh_knots, dtype=float)
    values = _fit_tanh_knots(knots)
    xr = [int(quantize_raw(v, in_fmt)) for v in np.concatenate(([0.0], knots))]
    yr = [int(quantize_raw(v, out_fmt)) for v in values]
    # slope * x is formed at coef_frac + in_frac fraction bits
    up = coef_fmt.frac_bits - out_fmt.frac_bits + in_fmt.frac_bits
    positive = []
    for k in range(len(xr) - 1):
        slope = round(Fraction((yr[k + 1] - yr[k]) << up, xr[k + 1] - xr[k]))
        icpt = round_shift((yr[k] << up) - slope * xr[k], in_fmt.frac_bits)
        positive.append((xr[k], slope, int(icpt)))
    positive.append((xr[-1], 0, yr[-1] << (coef_fmt.frac_bits - out_fmt.frac_bits)))
    segments = _mirror_segments(positive, in_fmt)
    return ActTables(in_fmt, out_fmt, coef_fmt, table, (float(lo), float(hi)), segments)


def _mirror_segments(positive, in_fmt):
    # center segment spans [-x1, x1); negative segments are exact mirrors
    neg = []
    for k in range(len(positive) - 1, 0, -1):
        start, slope, icpt = positive[k]
        end = positive[k + 1][0] if k + 1 < len(positive) else None
        neg_start = -end if end is not None else in_fmt.min_raw
        neg.append((neg_start, slope, -icpt))
    center = (-positive[1][0], positive[0][1], positive[0][2])
    return neg + [center] + positive[1:]


def sigmoid_lut_raw(raw, tables: ActTables) -> np.ndarray:
    """Nearest-entry table lookup on raw inputs at ``tables.in_fmt``."""
    raw = np.asarray(raw, dtype=np.int64)
    n = len(tables.sigmoid_table)
    lo_raw = round(tables.sigmoid_range[0] * (1 << tables.in_fmt.frac_bits))
    step = tables.sigmoid_step_raw
    idx = round_shift(raw - lo_raw, 0) if step == 1 else _div_nearest(raw - lo_raw, step)
    one = 1 << tables.out_fmt.frac_bits
    out = tables.sigmoid_table[np.clip(idx, 0, n - 1)]
    out = np.where(idx >= n, min(one, tables.out_fmt.max_raw), out)
    return np.where(idx < 0, 0, out).astype(np.int64)


def _div_nearest(v, d: int):
    if d & (d - 1) == 0:
        return round_shift(v, d.bit_length() - 1)
    q, r = np.divmod(v, d)
    up = (2 * r > d) | ((2 * r == d) & (q % 2 == 1))
    return q + up


def tanh_pwl_raw(raw, tables: ActTables) -> np.ndarray:
    """Piecewise-linear tanh on raw inputs, odd-symmetric by construction."""
    raw = np.asarray(raw, dtype=np.int64)
    mag = np.abs(raw)
    first = max(i for i, s in enumerate(tables.tanh_segments) if s[0] <= 0)
    pos = tables.tanh_segments[first:]
    starts = np.array([s[0] for s in pos], dtype=np.int64)
    slopes = np.array([s[1] for s in pos], dtype=np.int64)
    icpts = np.array([s[2] for s in pos], dtype=np.int64)
    # the centre segment straddles zero; its positive half starts at 0
    starts[0] = 0
    seg = np.searchsorted(starts, mag, side="right") - 1
    in_frac = tables.in_fmt.frac_bits
    acc = slopes[seg] * mag + (icpts[seg] << in_frac)
    y = requantize_raw(acc, tables.coef_fmt.frac_bits + in_frac, tables.out_fmt)
    return np.where(raw < 0, -y, y).astype(np.int64)


def sigmoid_lut(x: FixedValue, tables: ActTables) -> FixedValue:
    if x.fmt != tables.in_fmt:
        raise ValueError(f"tables built for {tables.in_fmt}, got {x.fmt}")
    return FixedValue(int(sigmoid_lut_raw(x.raw, tables)), tables.out_fmt)


def tanh_pwl(x: FixedValue, tables: ActTables) -> FixedValue:
    if x.fmt != tables.in_fmt:
        raise ValueError(f"tables built for {tables.in_fmt}, got {x.fmt}")
    return FixedValue(int(tanh_pwl_raw(x.raw, tables)), tables.out_fmt)


_DEFAULT_TABLES: ActTables | None = None


def default_tables() -> ActTables:
    """Q4.12 tables with the default sizes, built once per process."""
    global _DEFAULT_TABLES
    if _DEFAULT_TABLES is None:
        _DEFAULT_TABLES = build_act_tables()
    return _DEFAULT_TABLES
