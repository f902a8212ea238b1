"""
Fixed-point activations and the LSTM datapath
=============================================

Sigmoid is a 1024-entry table over [-8, 8). Tanh is piecewise linear with
integer slopes and intercepts and exact odd symmetry. This demo measures both
against numpy and then compares a whole fixed-point autoencoder to its float
twin.
"""

# %%
import numpy as np

from rnnpipe import fixedpoint as fp
from rnnpipe.lstm import model_forward, small_autoencoder

x = np.arange(fp.Q4_12.min_raw, fp.Q4_12.max_raw + 1)
xf = x * fp.Q4_12.lsb

# %%
tables = fp.default_tables()
sig = fp.dequantize_raw(fp.sigmoid_lut_raw(x, tables), fp.Q4_12)
print("sigmoid max error", np.max(np.abs(sig - 1 / (1 + np.exp(-xf)))))

for label, knots in (("32 segments", fp.TANH_KNOTS), ("7 segments", fp.TANH_KNOTS_7)):
    t = fp.build_act_tables(tanh_knots=knots)
    y = fp.dequantize_raw(fp.tanh_pwl_raw(x, t), fp.Q4_12)
    inner = np.abs(xf) <= 4
    print(f"tanh {label}: max error {np.max(np.abs(y - np.tanh(xf))[inner]):.5f} on [-4, 4]")

# %%
# Scalar arithmetic rounds half to even and saturates.
a = fp.to_fixed(-1.0, fp.Q4_12)
b = fp.to_fixed(7.9999, fp.Q4_12)
print(a, "*", b, "=", fp.fx_mul(a, b, fp.Q4_12))
print(fp.quantize(1000.0, fp.Q4_12))

# %%
# End-to-end divergence for random weights in [-1, 1].
rng = np.random.default_rng(0)
worst = []
for seed in range(20):
    m = small_autoencoder().init_weights(np.random.default_rng(seed), 1.0)
    xs = rng.uniform(-1, 1, (128, 8, 1))
    worst.append(np.max(np.abs(model_forward(xs, m) - model_forward(xs, m, "fixed"))))
print(f"fixed vs float: median {np.median(worst):.4f}, worst {max(worst):.4f}, bound {2**-5}")
