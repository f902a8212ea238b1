"""Closed-form timing and DSP model of a layer-wise LSTM accelerator.

Each LSTM layer is split into an ``mvm_x`` sub-layer (input-vector MVM, no
feedback) and a recurrent body (``mvm_h``, activations, tail). With rewind
enabled the body accepts a new timestep every ``ii`` cycles, so a layer
accepts a new inference every ``ii * TS`` cycles and the whole pipeline every
``max`` of those.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field

from .lstm import LayerSpec, ModelSpec


@dataclass(frozen=True)
class HwProfile:
    LT_mult: int = 1
    II_mult: int = 1
    LT_sigma: int = 3
    LT_tail: int = 5
    dsp_total: int = 900
    freq_mhz: float = 100.0
    name: str = "custom"

    def __post_init__(self):
        if min(self.LT_mult, self.II_mult, self.LT_sigma) < 1 or self.LT_tail < 0:
            raise ValueError(f"invalid latency constants in {self}")
        if self.dsp_total < 0:
            raise ValueError("dsp_total must be >= 0")

    @property
    def slack(self) -> int:
        """Cycles the recurrent body spends outside mvm_h (activation + tail)."""
        return self.LT_sigma + self.LT_tail

    def to_dict(self) -> dict:
        return asdict(self)


PROFILES = {
    "zynq7045-100MHz": HwProfile(1, 1, 3, 5, 900, 100.0, "zynq7045-100MHz"),
    # LT_mult chosen so the fully unrolled layer runs at ii=12
    "u250-300MHz": HwProfile(4, 1, 3, 5, 12288, 300.0, "u250-300MHz"),
}


def get_profile(name_or_profile, **overrides) -> HwProfile:
    if isinstance(name_or_profile, HwProfile):
        base = name_or_profile
    else:
        try:
            base = PROFILES[name_or_profile]
        except KeyError:
            raise KeyError(f"unknown profile {name_or_profile!r}; known: {sorted(PROFILES)}") from None
    if not overrides:
        return base
    d = base.to_dict()
    d.update(overrides)
    return HwProfile(**d)


@dataclass(frozen=True)
class ReuseFactors:
    Rx: int
    Rh: int
    Rt: int = 1

    def __post_init__(self):
        if min(self.Rx, self.Rh, self.Rt) < 1:
            raise ValueError(f"reuse factors must be >= 1: {self}")


@dataclass
class ResourceEstimate:
    dsp_per_layer: list[int]
    dsp_dense: int
    dsp_model: int = field(init=False)

    def __post_init__(self):
        self.dsp_model = sum(self.dsp_per_layer) + self.dsp_dense


@dataclass
class TimingEstimate:
    ii_per_layer: list[int]
    II_per_layer: list[int]
    II_sys: int
    latency_cycles: int


def mvm_latency(R: int, hw: HwProfile) -> int:
    """Latency of one MVM whose multipliers are each reused ``R`` times."""
    if R < 1:
        raise ValueError(f"reuse factor must be >= 1, got {R}")
    return hw.LT_mult + (R - 1) * hw.II_mult


def balanced_rx(Rh: int, hw: HwProfile) -> int:
    """Input-MVM reuse that makes mvm_x exactly as long as the recurrent body.

    Assumes single-cycle multiplier II, as in both built-in profiles.
    """
    return Rh + hw.LT_sigma + hw.LT_tail


def layer_ii(Rh: int, hw: HwProfile) -> int:
    """Timestep-loop II of a layer: mvm_h, then activation, then tail."""
    return mvm_latency(Rh, hw) + hw.LT_sigma + hw.LT_tail


def effective_ii(rf: ReuseFactors, hw: HwProfile) -> int:
    # an over-reused mvm_x becomes the slower of the two coupled sub-layers
    return max(layer_ii(rf.Rh, hw), mvm_latency(rf.Rx, hw))


def layer_interval(ii: int, TS: int) -> int:
    if ii < 1 or TS < 1:
        raise ValueError("ii and TS must be >= 1")
    return ii * TS


def system_interval(IIs) -> int:
    IIs = list(IIs)
    if not IIs:
        raise ValueError("system_interval of an empty pipeline")
    return max(IIs)


def dsp_layer(spec: LayerSpec, rf: ReuseFactors) -> int:
    """DSPs for one layer; ceilings model the leftover multipliers of uneven reuse.

    The tail has 2*Lh wide (32-bit) products at 2 DSPs each, i.e. 4*Lh DSPs
    when Rt = 1.
    """
    lx, lh = spec.Lx, spec.Lh
    return (
        math.ceil(4 * lx * lh / rf.Rx)
        + math.ceil(4 * lh * lh / rf.Rh)
        + math.ceil(4 * lh / rf.Rt)
    )


def dsp_dense(model: ModelSpec) -> int:
    if not model.dense_out or not model.layers:
        return 0
    return model.dense_out * model.layers[-1].Lh


def _check_rfs(model: ModelSpec, rfs) -> list[ReuseFactors]:
    rfs = list(rfs)
    if len(rfs) != len(model.layers):
        raise ValueError(f"{len(rfs)} reuse-factor sets given for {len(model.layers)} layers")
    return rfs


def dsp_model(model: ModelSpec, rfs) -> ResourceEstimate:
    rfs = _check_rfs(model, rfs)
    per = [dsp_layer(s, rf) for s, rf in zip(model.layers, rfs)]
    return ResourceEstimate(per, dsp_dense(model))


DENSE_II = 1


def pipeline_latency(model: ModelSpec, rfs, hw: HwProfile) -> int:
    """Cycles from one inference's arrival to its last output, on an idle pipeline.

    Evaluates the single-inference dependency recurrence: mvm_x of timestep t
    waits for its input, the body waits for mvm_x and for h_{t-1}, a consumer
    of a sequence-returning layer starts per timestep and a consumer of a
    last-only layer waits for the final hidden vector.
    """
    rfs = _check_rfs(model, rfs)
    ts = model.TS
    ready = [0] * ts  # when each timestep's input is available
    done = ready
    for spec, rf in zip(model.layers, rfs):
        ii = effective_ii(rf, hw)
        mx = mvm_latency(rf.Rx, hw)
        x_fin, body_fin = [], []
        for t in range(ts):
            x_start = max(ready[t], x_fin[-1]) if t else ready[t]
            x_fin.append(x_start + mx)
            h_start = max(x_fin[t], body_fin[-1]) if t else x_fin[t]
            body_fin.append(h_start + ii)
        done = body_fin
        ready = body_fin if spec.return_sequences else [body_fin[-1]] * ts
    if dsp_dense(model):
        out, prev = [], 0
        for t in range(ts):
            start = max(ready[t], prev)
            prev = start + DENSE_II
            out.append(prev)
        done = out
    return done[-1]


def timing(model: ModelSpec, rfs, hw: HwProfile) -> TimingEstimate:
    rfs = _check_rfs(model, rfs)
    iis = [effective_ii(rf, hw) for rf in rfs]
    IIs = [layer_interval(ii, s.TS) for ii, s in zip(iis, model.layers)]
    stages = IIs + ([layer_interval(DENSE_II, model.TS)] if dsp_dense(model) else [])
    return TimingEstimate(iis, IIs, system_interval(stages), pipeline_latency(model, rfs, hw))


def estimate(model: ModelSpec, rfs, hw: HwProfile) -> dict:
    """Flat report of timing and DSP figures for one configuration."""
    rfs = _check_rfs(model, rfs)
    res = dsp_model(model, rfs)
    tim = timing(model, rfs, hw)
    layers = []
    for k, (spec, rf) in enumerate(zip(model.layers, rfs)):
        layers.append(
            {
                "layer": k,
                "Lx": spec.Lx,
                "Lh": spec.Lh,
                "TS": spec.TS,
                "return_sequences": spec.return_sequences,
                "Rx": rf.Rx,
                "Rh": rf.Rh,
                "Rt": rf.Rt,
                "balanced": rf.Rx == balanced_rx(rf.Rh, hw),
                "mvm_x_latency": mvm_latency(rf.Rx, hw),
                "ii": tim.ii_per_layer[k],
                "II_layer": tim.II_per_layer[k],
                "dsp": res.dsp_per_layer[k],
            }
        )
    return {
        "profile": hw.to_dict(),
        "layers": layers,
        "dsp_dense": res.dsp_dense,
        "dsp_model": res.dsp_model,
        "dsp_total": hw.dsp_total,
        "fits": res.dsp_model <= hw.dsp_total,
        "II_sys": tim.II_sys,
        "latency_cycles": tim.latency_cycles,
        "latency_us": tim.latency_cycles / hw.freq_mhz,
    }


LAYER_CSV_FIELDS = [
    "layer", "Lx", "Lh", "TS", "return_sequences", "Rx", "Rh", "Rt",
    "balanced", "mvm_x_latency", "ii", "II_layer", "dsp",
]


def layers_csv(report: dict) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=LAYER_CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    for row in report["layers"]:
        w.writerow(row)
    return buf.getvalue()
