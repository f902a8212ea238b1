"""
Watching timesteps overlap across layers
========================================

The simulator issues one loop iteration at a time. A layer that returns its
whole sequence lets the next layer start on timestep ``t`` as soon as ``h_t``
exists. A layer that returns only its last vector holds the consumer back
until it has finished.
"""

# %%
from rnnpipe.lstm import small_autoencoder
from rnnpipe.perf import PROFILES, ReuseFactors, timing
from rnnpipe.sim import StageConfig, StageLayer, derive_stage_config, gantt, simulate

# %%
# Two sequence-returning layers with ii = 9 and TS = 8.
seq = StageConfig((StageLayer(9, 9, 8, True, 9), StageLayer(9, 9, 8, True, 9)), None)
trace, rep = simulate(seq, 1)
print("overlapped latency", rep.latency_first, "cycles; serial would be", 2 * (9 + 72))
print(gantt(trace, cycles_per_char=2))

# %%
# The same pair with a last-only producer.
barrier = StageConfig((StageLayer(9, 9, 8, False, 9), StageLayer(9, 9, 8, True, 9)), None)
trace, rep = simulate(barrier, 1)
print("latency with a last-only producer", rep.latency_first)
print(gantt(trace, cycles_per_char=2))

# %%
# A stream of inferences on the Z3 design settles at the predicted interval.
hw = PROFILES["zynq7045-100MHz"]
model = small_autoencoder()
rfs = [ReuseFactors(9, 1)] * 2
trace, rep = simulate(derive_stage_config(model, rfs, hw), 6)
print("completions", rep.completions)
print("simulated steady II", rep.steady_II, "model", timing(model, rfs, hw).II_sys)
print(gantt(trace, max_width=120))
