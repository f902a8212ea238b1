"""
Estimating timing and DSPs for an LSTM pipeline
===============================================

Every LSTM layer is a loop over timesteps. The input product ``W_x x_t`` has
no loop-carried dependency, while ``W_h h_{t-1}`` and everything after it
form the recurrent body. The loop's initiation interval ``ii`` is set by the
body, and a layer needs ``ii * TS`` cycles per inference.
"""

# %%
# Two built-in hardware profiles describe multiplier latency, activation and
# tail latency, and the DSP budget.
from rnnpipe.lstm import nominal_autoencoder, small_autoencoder
from rnnpipe.perf import PROFILES, ReuseFactors, estimate

for name, hw in PROFILES.items():
    print(name, hw.to_dict())

# %%
# Six configurations: fully unrolled, uniformly reused, and balanced, where
# the input MVM gets extra reuse so it takes exactly as long as the body.
designs = [
    ("Z1", small_autoencoder(), "zynq7045-100MHz", ReuseFactors(1, 1)),
    ("Z2", small_autoencoder(), "zynq7045-100MHz", ReuseFactors(2, 2)),
    ("Z3", small_autoencoder(), "zynq7045-100MHz", ReuseFactors(9, 1)),
    ("U1", nominal_autoencoder(), "u250-300MHz", ReuseFactors(1, 1)),
    ("U2", nominal_autoencoder(), "u250-300MHz", ReuseFactors(9, 1)),
    ("U3", nominal_autoencoder(), "u250-300MHz", ReuseFactors(12, 4)),
]

print(f"{'design':<7}{'Rx':>4}{'Rh':>4}{'ii':>5}{'II':>6}{'DSP':>8}{'fits':>6}{'latency us':>12}")
for name, model, prof, rf in designs:
    rep = estimate(model, [rf] * len(model.layers), PROFILES[prof])
    ii = max(l["ii"] for l in rep["layers"])
    print(
        f"{name:<7}{rf.Rx:>4}{rf.Rh:>4}{ii:>5}{rep['II_sys']:>6}{rep['dsp_model']:>8}"
        f"{str(rep['fits']):>6}{rep['latency_us']:>12.2f}"
    )

# %%
# Z1 and Z3 run at the same interval, but Z3 saves a third of the DSPs and
# fits the 900-DSP device. The saving comes entirely from the input MVM.
z1 = estimate(small_autoencoder(), [ReuseFactors(1, 1)] * 2, PROFILES["zynq7045-100MHz"])
z3 = estimate(small_autoencoder(), [ReuseFactors(9, 1)] * 2, PROFILES["zynq7045-100MHz"])
for a, b in zip(z1["layers"], z3["layers"]):
    print(f"layer {a['layer']}: {a['dsp']} -> {b['dsp']} DSPs ({1 - b['dsp'] / a['dsp']:.1%} fewer)")
