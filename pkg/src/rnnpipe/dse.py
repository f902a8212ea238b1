"""Reuse-factor search: budget-constrained minimum Rh, II balancing, Pareto sweeps."""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .lstm import LayerSpec, ModelSpec
from .perf import (
    HwProfile,
    ResourceEstimate,
    ReuseFactors,
    TimingEstimate,
    balanced_rx,
    dsp_layer,
    dsp_model,
    layer_ii,
    timing,
)


class InfeasibleDesign(Exception):
    """No reuse-factor assignment fits the DSP budget."""


@dataclass
class DesignPoint:
    rfs: list[ReuseFactors]
    resources: ResourceEstimate
    timing: TimingEstimate
    balanced: bool

    @classmethod
    def evaluate(cls, model: ModelSpec, rfs, hw: HwProfile) -> "DesignPoint":
        rfs = list(rfs)
        return cls(
            rfs,
            dsp_model(model, rfs),
            timing(model, rfs, hw),
            all(rf.Rx == balanced_rx(rf.Rh, hw) for rf in rfs),
        )

    @property
    def II_sys(self) -> int:
        return self.timing.II_sys

    @property
    def dsp(self) -> int:
        return self.resources.dsp_model

    def dominates(self, other: "DesignPoint") -> bool:
        return (
            self.II_sys <= other.II_sys
            and self.dsp <= other.dsp
            and (self.II_sys < other.II_sys or self.dsp < other.dsp)
        )

    def to_dict(self) -> dict:
        return {
            "reuse_factors": [{"Rx": r.Rx, "Rh": r.Rh, "Rt": r.Rt} for r in self.rfs],
            "dsp_per_layer": self.resources.dsp_per_layer,
            "dsp_dense": self.resources.dsp_dense,
            "dsp_model": self.dsp,
            "ii_per_layer": self.timing.ii_per_layer,
            "II_per_layer": self.timing.II_per_layer,
            "II_sys": self.II_sys,
            "latency_cycles": self.timing.latency_cycles,
            "balanced": self.balanced,
        }


@dataclass
class ParetoSet:
    points: list[DesignPoint]

    def __iter__(self):
        return iter(self.points)

    def __len__(self):
        return len(self.points)


def _search_bound(specs) -> int:
    return max(4 * s.Lh * max(s.Lx, s.Lh) for s in specs)


def min_rh_for_budget(spec: LayerSpec, budget: int, hw: HwProfile) -> int:
    """Smallest Rh whose balanced layer (Rx = Rh + slack) fits in ``budget`` DSPs.

    The real-valued cost 4LxLh/(Rh+s) + 4Lh^2/Rh + 4Lh <= budget is a quadratic
    inequality in Rh; its positive root is a lower bound for the integer answer
    because the ceilings only add DSPs, so the scan starts there.
    """
    tail = 4 * spec.Lh
    if budget <= tail:
        raise InfeasibleDesign(
            f"budget {budget} does not exceed the tail floor of {tail} DSPs (Lh={spec.Lh})"
        )
    a = 4 * spec.Lx * spec.Lh
    c = 4 * spec.Lh * spec.Lh
    d = budget - tail
    s = balanced_rx(1, hw) - 1
    # d*R^2 + (d*s - a - c)*R - c*s >= 0
    bq = d * s - a - c
    root = (-bq + math.sqrt(bq * bq + 4 * d * c * s)) / (2 * d)
    rh = max(1, math.ceil(root - 1e-9))
    bound = _search_bound([spec])
    while rh <= bound:
        if dsp_layer(spec, ReuseFactors(balanced_rx(rh, hw), rh)) <= budget:
            return rh
        rh += 1
    raise InfeasibleDesign(f"no Rh <= {bound} fits {budget} DSPs for {spec}")


def rh_for_ii(target_ii: int, hw: HwProfile) -> int:
    """Largest Rh whose recurrent body still meets ``target_ii`` (at least 1)."""
    return max(1, (target_ii - layer_ii(1, hw)) // hw.II_mult + 1)


def balance_model(model: ModelSpec, hw: HwProfile, budget: int | None = None) -> DesignPoint:
    """Smallest common layer ii whose balanced reuse factors fit the DSP budget.

    Since ii depends only on Rh and all layers share TS, equal layer IIs mean a
    common Rh; for each candidate ii the largest such Rh (fewest DSPs) is tried,
    with every layer's Rx set by the balance rule.
    """
    if not model.layers:
        raise ValueError("balance_model needs at least one layer")
    budget = hw.dsp_total if budget is None else budget
    bound = _search_bound(model.layers)
    t = layer_ii(1, hw)
    while True:
        rh = rh_for_ii(t, hw)
        if rh > bound:
            break
        if layer_ii(rh, hw) == t:
            rfs = [ReuseFactors(balanced_rx(rh, hw), rh)] * len(model.layers)
            if dsp_model(model, rfs).dsp_model <= budget:
                return DesignPoint.evaluate(model, rfs, hw)
        t += 1
    raise InfeasibleDesign(
        f"no balanced configuration with Rh <= {bound} fits {budget} DSPs"
    )


def _pareto_filter(points: list[DesignPoint]) -> ParetoSet:
    keep = [p for p in points if not any(q.dominates(p) for q in points)]
    # identical coordinates: keep the first (smallest Rh)
    seen, uniq = set(), []
    for p in keep:
        key = (p.II_sys, p.dsp)
        if key not in seen:
            seen.add(key)
            uniq.append(p)
    uniq.sort(key=lambda p: (p.II_sys, p.dsp))
    return ParetoSet(uniq)


def sweep_points(model: ModelSpec, hw: HwProfile, rh_range, variant: str, jobs: int = 1) -> list[DesignPoint]:
    """Uniform-Rh configurations with Rx = Rh (``naive``) or balanced Rx."""
    if variant not in ("naive", "balanced"):
        raise ValueError(f"unknown variant {variant!r}")
    n = len(model.layers)

    def point(rh):
        rx = rh if variant == "naive" else balanced_rx(rh, hw)
        return DesignPoint.evaluate(model, [ReuseFactors(rx, rh)] * n, hw)

    rhs = list(rh_range)
    if jobs > 1:
        with ThreadPoolExecutor(jobs) as ex:
            return list(ex.map(point, rhs))
    return [point(rh) for rh in rhs]


def pareto_sweep(model: ModelSpec, hw: HwProfile, rh_range, jobs: int = 1) -> tuple[ParetoSet, ParetoSet]:
    """Frontiers of the naive (Rx = Rh) and balanced sweeps over ``rh_range``."""
    rhs = list(rh_range)
    if not rhs:
        raise ValueError("empty Rh range")
    return (
        _pareto_filter(sweep_points(model, hw, rhs, "naive", jobs)),
        _pareto_filter(sweep_points(model, hw, rhs, "balanced", jobs)),
    )


FRONTIER_FIELDS = ["variant", "Rh", "Rx", "ii", "II_layer", "II_sys", "dsp_model", "balanced"]


def frontier_rows(variant: str, frontier: ParetoSet) -> list[dict]:
    rows = []
    for p in frontier:
        rows.append(
            {
                "variant": variant,
                "Rh": p.rfs[0].Rh,
                "Rx": p.rfs[0].Rx,
                "ii": max(p.timing.ii_per_layer),
                "II_layer": max(p.timing.II_per_layer),
                "II_sys": p.II_sys,
                "dsp_model": p.dsp,
                "balanced": p.balanced,
            }
        )
    return rows


def frontier_csv(naive: ParetoSet, balanced: ParetoSet) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=FRONTIER_FIELDS, lineterminator="\n")
    w.writeheader()
    for row in frontier_rows("naive", naive) + frontier_rows("balanced", balanced):
        w.writerow(row)
    return buf.getvalue()
