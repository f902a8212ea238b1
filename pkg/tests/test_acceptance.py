"""Acceptance criteria, one test per criterion.

Each test records a ``PASS``/``FAIL`` line with the measured value and its
tolerance; the lines are printed together at the end of the pytest run.
"""
import json
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from rnnpipe.anomaly import gen_dataset, roc_auc, score, stack_windows
from rnnpipe.cli import main
from rnnpipe.dse import DesignPoint, balance_model, sweep_points
from rnnpipe.lstm import LayerSpec, ModelSpec, model_forward, nominal_autoencoder, small_autoencoder
from rnnpipe.perf import (
    PROFILES,
    ReuseFactors,
    balanced_rx,
    dsp_layer,
    dsp_model,
    layer_interval,
    system_interval,
    timing,
)
from rnnpipe.sim import StageConfig, StageLayer, derive_stage_config, simulate, steady_interval
from rnnpipe.train import loss_and_grads, train_autoencoder

ZYNQ = PROFILES["zynq7045-100MHz"]
U250 = PROFILES["u250-300MHz"]


def record(n: int, ok: bool, detail: str):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {n:>2}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def test_c01_interval_exactness():
    table = {9: 72, 10: 80, 12: 96, 13: 104}
    got = {ii: layer_interval(ii, 8) for ii in table}
    equal_layers = all(system_interval([layer_interval(ii, 8)] * k) == table[ii] for ii in table for k in (1, 2, 4))
    record(1, got == table and equal_layers, f"layer_interval(ii, 8) = {got}, equal-layer system interval exact (tol 0)")


# (model, reuse factors, DSP count after synthesis)
DESIGNS = {
    "Z1": (small_autoencoder, ReuseFactors(1, 1), 1058),
    "Z2": (small_autoencoder, ReuseFactors(2, 2), 578),
    "Z3": (small_autoencoder, ReuseFactors(9, 1), 744),
    "U1": (nominal_autoencoder, ReuseFactors(1, 1), 11123),
    "U2": (nominal_autoencoder, ReuseFactors(9, 1), 9021),
    "U3": (nominal_autoencoder, ReuseFactors(12, 4), 2713),
}


def test_c02_dsp_vs_synthesized():
    rel = {}
    for name, (build, rf, synthesized) in DESIGNS.items():
        m = build()
        ours = dsp_model(m, [rf] * len(m.layers)).dsp_model
        rel[name] = (ours, abs(ours - synthesized) / synthesized)
    worst = max(r for _, r in rel.values())
    detail = ", ".join(f"{k} {v[0]} ({v[1]:.1%})" for k, v in rel.items())
    record(2, worst <= 0.05, f"{detail}; worst {worst:.2%} (tol 5%)")


def test_c03_balanced_rx():
    a, b = balanced_rx(1, ZYNQ), balanced_rx(4, U250)
    record(3, (a, b) == (9, 12), f"balanced_rx(1) = {a}, balanced_rx(4) = {b} (expected 9, 12 exactly)")


def test_c04_dsp_reduction():
    spec = LayerSpec(9, 9)
    naive = dsp_layer(spec, ReuseFactors(1, 1))
    bal = dsp_layer(spec, ReuseFactors(balanced_rx(1, ZYNQ), 1))
    cut = 1 - bal / naive
    same_ii = timing(ModelSpec([spec]), [ReuseFactors(1, 1)], ZYNQ).ii_per_layer == timing(
        ModelSpec([spec]), [ReuseFactors(9, 1)], ZYNQ
    ).ii_per_layer
    record(4, abs(cut - 0.421) <= 0.01 and same_ii, f"naive {naive} -> balanced {bal} DSPs, reduction {cut:.2%} at equal ii (target 42.1% +- 1%)")


def test_c05_dse_feasibility():
    m = small_autoencoder()
    p = balance_model(m, ZYNQ, 900)
    full = DesignPoint.evaluate(m, [ReuseFactors(1, 1)] * 2, ZYNQ).dsp
    t0 = time.perf_counter()
    balance_model(nominal_autoencoder(), U250)
    for variant in ("naive", "balanced"):
        sweep_points(nominal_autoencoder(), U250, range(1, 65), variant)
    elapsed = time.perf_counter() - t0
    ok = p.balanced and p.dsp <= 900 and p.II_sys == 72 and full > 900 and elapsed < 10
    record(5, ok, f"balanced point {p.dsp} DSPs, II_sys {p.II_sys}; unrolled {full} > 900; U250 explore {elapsed:.2f}s (< 10s)")


def test_c06_model_sim_equivalence():
    checked, mismatches = 0, []
    for build in (small_autoencoder, nominal_autoencoder):
        m = build()
        for hw in (ZYNQ, U250):
            for rh in range(1, 11):
                for rx in (rh, balanced_rx(rh, hw)):
                    rfs = [ReuseFactors(rx, rh)] * len(m.layers)
                    trace, _ = simulate(derive_stage_config(m, rfs, hw), 6)
                    sim, model = steady_interval(trace), timing(m, rfs, hw).II_sys
                    checked += 1
                    if sim != model:
                        mismatches.append((build.__name__, hw.name, rh, rx, sim, model))
    record(6, not mismatches, f"{checked} configurations, {len(mismatches)} mismatches (tol 0)")


def test_c07_overlap_semantics():
    rng = np.random.default_rng(7)
    worst_ratio, barrier_ok = 0.0, True
    for _ in range(200):
        ts = int(rng.integers(2, 12))
        ii0, ii1 = (int(v) for v in rng.integers(1, 20, 2))
        mx0, mx1 = (int(v) for v in rng.integers(1, 20, 2))
        seq = StageConfig((StageLayer(ii0, ii0, ts, True, mx0), StageLayer(ii1, ii1, ts, True, mx1)), None)
        _, rep = simulate(seq, 1)
        serial = (mx0 + max(ii0, mx0) * ts) + (mx1 + max(ii1, mx1) * ts)
        worst_ratio = max(worst_ratio, rep.latency_first / serial)
        last = StageConfig((StageLayer(ii0, ii0, ts, False, mx0), StageLayer(ii1, ii1, ts, True, mx1)), None)
        trace, _ = simulate(last, 3)
        for n in range(3):
            prod = max(e.finish for e in trace.events if e.inference == n and e.layer == 0)
            cons = min(e.issue for e in trace.events if e.inference == n and e.layer == 1)
            barrier_ok &= cons >= prod
    record(7, worst_ratio < 1 and barrier_ok, f"cascaded latency / serial latency <= {worst_ratio:.3f} (< 1), last-only barrier held in all cases")


def test_c08_numerics():
    rng = np.random.default_rng(11)
    m = ModelSpec([LayerSpec(2, 3, False, 4), LayerSpec(3, 3, True, 4)], repeat_vector_after=0, dense_out=2)
    m = m.init_weights(rng, 0.8)
    X = rng.normal(size=(5, 4, 2))
    _, g = loss_and_grads(m, X)
    tensors = [t for w in m.weights for t in (w.Wx, w.Wh, w.b)] + [m.dense_w, m.dense_b]
    eps, grad_err = 1e-6, 0.0
    for p, gp in zip(tensors, g.arrays()):
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + eps
            lp = loss_and_grads(m, X)[0]
            p[idx] = old - eps
            lm = loss_and_grads(m, X)[0]
            p[idx] = old
            num = (lp - lm) / (2 * eps)
            grad_err = max(grad_err, abs(num - gp[idx]) / max(abs(num) + abs(gp[idx]), 1e-7))

    fx_err = 0.0
    for seed in range(40):
        r = np.random.default_rng(seed)
        model = small_autoencoder(TS=8).init_weights(r, 1.0)
        xs = r.uniform(-1, 1, (64, 8, 1))
        fx_err = max(fx_err, float(np.max(np.abs(model_forward(xs, model) - model_forward(xs, model, "fixed")))))
    ok = grad_err <= 1e-4 and fx_err <= 2**-5
    record(8, ok, f"gradient rel. error {grad_err:.2e} (<= 1e-4); fixed vs float max {fx_err:.4f} (<= {2**-5})")


def test_c09_anomaly_pipeline():
    t0 = time.perf_counter()
    train = gen_dataset(2000, 0, 42)
    model = train_autoencoder(stack_windows(train, 8), small_autoencoder()).model
    held = gen_dataset(500, 500, 43)
    auc_float = roc_auc(score(held, model, "float"))[0]
    auc_fixed = roc_auc(score(held, model, "fixed"))[0]
    elapsed = time.perf_counter() - t0
    ok = auc_float >= 0.8 and abs(auc_fixed - auc_float) <= 0.02 and elapsed <= 300
    record(9, ok, f"AUC float {auc_float:.4f} (>= 0.8), fixed {auc_fixed:.4f}, gap {abs(auc_fixed - auc_float):.4f} (<= 0.02), {elapsed:.1f}s")


COMMANDS = [
    ["estimate", "--rh", "1"],
    ["explore", "--manifest", "builtin:nominal", "--profile", "u250-300MHz"],
    ["simulate", "--rh", "1", "-n", "8"],
    ["bench", "--n-train", "300", "--n-background", "200", "--n-signal", "200", "--epochs", "3"],
]


def test_c10_determinism(tmp_path, capsys):
    manifest = tmp_path / "model.json"
    differing = []
    for argv in COMMANDS + [["infer", "--manifest", str(manifest), "--input", str(tmp_path / "seq.csv")]]:
        if argv[0] == "infer":
            (tmp_path / "seq.csv").write_text("\n".join(str(np.sin(t)) for t in range(8)) + "\n")
        snaps = []
        for _ in range(2):
            out = tmp_path / argv[0]
            assert main(argv + ["--out-dir", str(out), "--seed", "7"]) == 0
            snaps.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
        if snaps[0] != snaps[1]:
            differing.append(argv[0])
        if argv[0] == "bench":
            manifest.write_bytes(snaps[0]["model_trained.json"])
    capsys.readouterr()
    record(10, not differing, f"5 commands run twice, byte-identical outputs" + (f"; differ: {differing}" if differing else ""))


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
