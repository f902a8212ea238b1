"""Discrete-event simulation of the coarse-grained LSTM pipeline.

The unit of work is one loop iteration: one timestep of one sub-layer for one
inference. Every layer has two units, ``mvm_x`` (input MVM, no feedback) and
``body`` (mvm_h + activations + tail, which feeds h_t back to itself), followed
by an optional dense head. Each unit works through its items in order and may
start a new item ``interval`` cycles after the previous one (loop rewind: there
is no drain between the last timestep of one inference and the first of the
next).

Dependencies:

* body (n, t) needs mvm_x (n, t) and body (n, t-1) to have finished;
* mvm_x of layer k needs its input: the arrival of inference n for layer 0,
  producer timestep t if the producer returns sequences, or the producer's
  last timestep if it returns only its final hidden vector;
* dense (n, t) needs the last layer's body (n, t).
"""
from __future__ import annotations

import csv
import heapq
import io
from dataclasses import dataclass, field

from .lstm import ModelSpec
from .perf import DENSE_II, HwProfile, effective_ii, mvm_latency


@dataclass(frozen=True)
class StageLayer:
    ii: int
    body_latency: int
    TS: int
    return_sequences: bool
    mvmx_ii: int

    def __post_init__(self):
        if self.ii < 1 or self.mvmx_ii < 1 or self.TS < 1 or self.body_latency < 1:
            raise ValueError(f"invalid stage parameters: {self}")


@dataclass(frozen=True)
class StageConfig:
    layers: tuple[StageLayer, ...]
    dense_ii: int | None = DENSE_II

    def with_ii(self, k: int, ii: int) -> "StageConfig":
        """Copy with layer ``k``'s loop II (and body latency) set to ``ii``."""
        ls = list(self.layers)
        old = ls[k]
        ls[k] = StageLayer(ii, ii, old.TS, old.return_sequences, old.mvmx_ii)
        return StageConfig(tuple(ls), self.dense_ii)


@dataclass(frozen=True)
class Event:
    inference: int
    layer: int
    timestep: int
    issue: int
    finish: int
    unit: str


@dataclass
class ScheduleTrace:
    events: list[Event]
    n_layers: int

    def completion_times(self) -> list[int]:
        done: dict[int, int] = {}
        for e in self.events:
            done[e.inference] = max(done.get(e.inference, 0), e.finish)
        return [done[n] for n in sorted(done)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["inference", "layer", "timestep", "issue", "finish", "unit"])
        for e in self.events:
            w.writerow([e.inference, e.layer, e.timestep, e.issue, e.finish, e.unit])
        return buf.getvalue()


@dataclass
class SimReport:
    latency_first: int
    steady_II: int | None
    stall_cycles: list[int]
    completions: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "latency_first": self.latency_first,
            "steady_II": self.steady_II,
            "stall_cycles": self.stall_cycles,
            "completions": self.completions,
        }


def derive_stage_config(model: ModelSpec, rfs, hw: HwProfile) -> StageConfig:
    rfs = list(rfs)
    if len(rfs) != len(model.layers):
        raise ValueError(f"{len(rfs)} reuse-factor sets given for {len(model.layers)} layers")
    layers = []
    for spec, rf in zip(model.layers, rfs):
        ii = effective_ii(rf, hw)
        layers.append(StageLayer(ii, ii, spec.TS, spec.return_sequences, mvm_latency(rf.Rx, hw)))
    return StageConfig(tuple(layers), DENSE_II if model.dense_out else None)


class _Unit:
    def __init__(self, name, layer, interval, latency, items):
        self.name = name
        self.layer = layer
        self.interval = interval
        self.latency = latency
        self.items = items  # [(inference, timestep)] in processing order
        self.pos = 0
        self.free_at = 0
        self.last_issue = None
        self.stall = 0


def simulate(cfg: StageConfig, num_inferences: int, arrival_gap: int = 0) -> tuple[ScheduleTrace, SimReport]:
    """Run ``num_inferences`` inferences arriving every ``arrival_gap`` cycles."""
    if num_inferences < 1:
        raise ValueError("num_inferences must be >= 1")
    if arrival_gap < 0:
        raise ValueError("arrival_gap must be >= 0")
    nl = len(cfg.layers)
    ts = cfg.layers[0].TS if nl else 1
    if any(s.TS != ts for s in cfg.layers):
        raise ValueError("all layers must share TS")
    seq_items = [(n, t) for n in range(num_inferences) for t in range(ts)]

    units: list[_Unit] = []
    for k, s in enumerate(cfg.layers):
        units.append(_Unit("mvm_x", k, s.mvmx_ii, s.mvmx_ii, seq_items))
        units.append(_Unit("body", k, s.ii, s.body_latency, seq_items))
    if cfg.dense_ii:
        if nl and not cfg.layers[-1].return_sequences:
            items = [(n, ts - 1) for n in range(num_inferences)]
        else:
            items = seq_items
        units.append(_Unit("dense", nl, cfg.dense_ii, cfg.dense_ii, items))

    finish: dict[tuple[str, int, int, int], int] = {}

    def deps(u: _Unit, n: int, t: int):
        if u.name == "mvm_x":
            if u.layer == 0:
                return [n * arrival_gap]
            prod = cfg.layers[u.layer - 1]
            src_t = t if prod.return_sequences else ts - 1
            return [finish.get(("body", u.layer - 1, n, src_t))]
        if u.name == "body":
            d = [finish.get(("mvm_x", u.layer, n, t))]
            if t:
                d.append(finish.get(("body", u.layer, n, t - 1)))
            return d
        return [finish.get(("body", nl - 1, n, t))] if nl else [n * arrival_gap]

    def ready_time(u: _Unit):
        if u.pos >= len(u.items):
            return None
        n, t = u.items[u.pos]
        d = deps(u, n, t)
        if any(x is None for x in d):
            return None
        return max([u.free_at] + d)

    events: list[Event] = []
    # event queue of (time, unit index); a unit is (re)queued whenever it or
    # one of its producers changes state
    queue: list[tuple[int, int]] = []
    for i, u in enumerate(units):
        rt = ready_time(u)
        if rt is not None:
            heapq.heappush(queue, (rt, i))
    while queue:
        time, i = heapq.heappop(queue)
        u = units[i]
        rt = ready_time(u)
        if rt is None or rt != time:
            if rt is not None:
                heapq.heappush(queue, (rt, i))
            continue
        n, t = u.items[u.pos]
        fin = time + u.latency
        finish[(u.name, u.layer, n, t)] = fin
        if u.last_issue is not None:
            u.stall += time - (u.last_issue + u.interval)
        u.last_issue = time
        u.free_at = time + u.interval
        u.pos += 1
        events.append(Event(n, u.layer, t, time, fin, u.name))
        for j in range(len(units)):
            rj = ready_time(units[j])
            if rj is not None:
                heapq.heappush(queue, (rj, j))

    unit_rank = {"mvm_x": 0, "body": 1, "dense": 2}
    events.sort(key=lambda e: (e.issue, e.layer, e.timestep, unit_rank[e.unit], e.inference))
    trace = ScheduleTrace(events, nl)
    comp = trace.completion_times()
    report = SimReport(
        latency_first=comp[0],
        steady_II=comp[-1] - comp[-2] if len(comp) >= 2 else None,
        stall_cycles=[u.stall for u in units if u.name == "body"],
        completions=comp,
    )
    return trace, report


def steady_interval(trace: ScheduleTrace) -> int:
    """Gap between the last two inference completions of a saturated stream."""
    comp = trace.completion_times()
    if len(comp) < 3:
        raise ValueError(f"steady_interval needs at least 3 inferences, trace has {len(comp)}")
    return comp[-1] - comp[-2]


def gantt(trace: ScheduleTrace, cycles_per_char: int = 1, max_width: int = 160) -> str:
    """ASCII timeline: one row per unit, each busy cycle marked with the inference id."""
    if not trace.events:
        return ""
    end = max(e.finish for e in trace.events)
    scale = max(cycles_per_char, -(-end // max_width))
    width = -(-end // scale)
    rows: dict[tuple[int, int], list[str]] = {}
    labels = {}
    rank = {"mvm_x": 0, "body": 1, "dense": 2}
    for e in trace.events:
        key = (e.layer, rank[e.unit])
        if key not in rows:
            rows[key] = ["."] * width
            labels[key] = "dense" if e.unit == "dense" else f"L{e.layer}.{'x' if e.unit == 'mvm_x' else 'h'}"
        mark = "0123456789abcdefghijklmnopqrstuvwxyz"[e.inference % 36]
        for c in range(e.issue // scale, -(-e.finish // scale)):
            rows[key][c] = mark
    out = [f"# {scale} cycle(s) per column, {end} cycles total"]
    for key in sorted(rows):
        out.append(f"{labels[key]:>6} |{''.join(rows[key])}|")
    return "\n".join(out)
