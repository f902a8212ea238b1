import pytest
from hypothesis import given
from hypothesis import strategies as st

from rnnpipe.lstm import LayerSpec, ModelSpec, nominal_autoencoder, small_autoencoder
from rnnpipe.perf import PROFILES, ReuseFactors, balanced_rx, pipeline_latency, timing
from rnnpipe.sim import StageConfig, StageLayer, derive_stage_config, gantt, simulate, steady_interval

ZYNQ = PROFILES["zynq7045-100MHz"]
U250 = PROFILES["u250-300MHz"]


def one_layer(ii, ts, seq=True, mx=None):
    return StageLayer(ii, ii, ts, seq, mx or ii)


def test_derive():
    cfg = derive_stage_config(small_autoencoder(), [ReuseFactors(9, 1)] * 2, ZYNQ)
    assert [(s.ii, s.mvmx_ii) for s in cfg.layers] == [(9, 9), (9, 9)]
    cfg = derive_stage_config(small_autoencoder(), [ReuseFactors(10, 2)] * 2, ZYNQ)
    assert cfg.layers[0].ii == 10
    one = ModelSpec([LayerSpec(1, 4)])
    assert derive_stage_config(one, [ReuseFactors(1, 1)], ZYNQ).layers[0].ii == ZYNQ.LT_mult + 8
    with pytest.raises(ValueError):
        derive_stage_config(small_autoencoder(), [ReuseFactors(9, 1)], ZYNQ)


def test_back_to_back_single_layer():
    trace, rep = simulate(StageConfig((one_layer(9, 3),), None), 2)
    assert rep.completions[1] - rep.completions[0] == 27
    assert rep.steady_II == 27


def test_single_inference():
    trace, rep = simulate(StageConfig((one_layer(9, 3),), None), 1)
    assert rep.steady_II is None
    with pytest.raises(ValueError):
        steady_interval(trace)


def test_z3_stream():
    cfg = derive_stage_config(small_autoencoder(), [ReuseFactors(9, 1)] * 2, ZYNQ)
    trace, rep = simulate(cfg, 8)
    assert steady_interval(trace) == 72


def test_max_layer_dominates():
    cfg = StageConfig((one_layer(9, 8), one_layer(10, 8)), None)
    trace, _ = simulate(cfg, 6)
    assert steady_interval(trace) == 80


def test_timestep_overlap():
    cfg = StageConfig((one_layer(9, 8), one_layer(9, 8)), None)
    trace, rep = simulate(cfg, 1)
    body = {(e.layer, e.timestep): e for e in trace.events if e.unit == "body"}
    for t in range(8):
        # layer 1 timestep t follows layer 0's t by one input MVM, not by all of layer 0
        assert body[(1, t)].issue == body[(0, t)].finish + 9
    assert rep.latency_first < 2 * 9 * 8 + 2 * 9


def test_last_only_barrier():
    cfg = StageConfig((one_layer(9, 8, seq=False), one_layer(9, 8)), None)
    trace, _ = simulate(cfg, 3)
    for n in range(3):
        prod = max(e.finish for e in trace.events if e.inference == n and e.layer == 0)
        cons = min(e.issue for e in trace.events if e.inference == n and e.layer == 1)
        assert cons >= prod


def test_arrival_gap_limits_throughput():
    cfg = StageConfig((one_layer(9, 8),), None)
    _, rep = simulate(cfg, 5, arrival_gap=200)
    assert rep.steady_II == 200
    with pytest.raises(ValueError):
        simulate(cfg, 2, arrival_gap=-1)
    with pytest.raises(ValueError):
        simulate(cfg, 0)


def test_with_ii():
    cfg = StageConfig((one_layer(9, 8), one_layer(9, 8)), None).with_ii(1, 12)
    assert cfg.layers[1].ii == 12 and cfg.layers[0].ii == 9
    _, rep = simulate(cfg, 4)
    assert rep.steady_II == 96


@pytest.mark.parametrize("variant", ["naive", "balanced"])
@pytest.mark.parametrize("name", ["small", "nominal"])
def test_sweep_matches_model(variant, name):
    model = small_autoencoder() if name == "small" else nominal_autoencoder()
    for hw in (ZYNQ, U250):
        for rh in range(1, 11):
            rx = rh if variant == "naive" else balanced_rx(rh, hw)
            rfs = [ReuseFactors(rx, rh)] * len(model.layers)
            trace, rep = simulate(derive_stage_config(model, rfs, hw), 4)
            tm = timing(model, rfs, hw)
            assert steady_interval(trace) == tm.II_sys
            assert rep.latency_first == tm.latency_cycles


layer_st = st.tuples(st.integers(1, 12), st.integers(1, 6), st.integers(1, 24))


@given(st.lists(layer_st, min_size=1, max_size=3), st.integers(1, 6), st.booleans(), st.sampled_from([ZYNQ, U250]))
def test_random_models_match(layers, ts, enc_last_only, hw):
    specs, lx = [], 2
    for k, (lh, _, _) in enumerate(layers):
        specs.append(LayerSpec(lx, lh, not (enc_last_only and k == 0 and len(layers) > 1), ts))
        lx = lh
    rva = 0 if enc_last_only and len(layers) > 1 else None
    model = ModelSpec(specs, repeat_vector_after=rva, dense_out=1)
    rfs = [ReuseFactors(rx, rh) for _, rh, rx in layers]
    trace, rep = simulate(derive_stage_config(model, rfs, hw), 4)
    tm = timing(model, rfs, hw)
    assert steady_interval(trace) == tm.II_sys
    assert rep.latency_first == pipeline_latency(model, rfs, hw)


@given(st.integers(1, 12), st.integers(1, 12), st.integers(1, 8))
def test_cascade_overlap_property(ii0, ii1, ts):
    cfg = StageConfig((one_layer(ii0, ts), one_layer(ii1, ts)), None)
    _, rep = simulate(cfg, 1)
    serial = (ii0 + ii0 * ts) + (ii1 + ii1 * ts)
    if ts > 1:
        assert rep.latency_first < serial
    cfg_lo = StageConfig((one_layer(ii0, ts, seq=False), one_layer(ii1, ts)), None)
    trace, _ = simulate(cfg_lo, 2)
    for n in range(2):
        prod = max(e.finish for e in trace.events if e.inference == n and e.layer == 0)
        cons = min(e.issue for e in trace.events if e.inference == n and e.layer == 1)
        assert cons >= prod


def test_trace_outputs():
    cfg = derive_stage_config(small_autoencoder(), [ReuseFactors(9, 1)] * 2, ZYNQ)
    trace, rep = simulate(cfg, 3)
    lines = trace.to_csv().splitlines()
    assert lines[0] == "inference,layer,timestep,issue,finish,unit"
    assert len(lines) == 1 + len(trace.events)
    chart = gantt(trace, max_width=80)
    rows = chart.splitlines()
    assert len(rows) == 1 + 5  # header, two units per layer, dense
    assert all(len(r) <= 80 + 10 for r in rows[1:])
    assert rep.to_dict()["steady_II"] == 72
