"""
Searching reuse factors under a DSP budget
==========================================

Reuse trades DSPs for cycles. For a fixed ``Rh`` the balance rule picks the
largest ``Rx`` that does not slow the loop down, so the balanced sweep
reaches every interval of the naive sweep with fewer DSPs.
"""

# %%
from rnnpipe.dse import balance_model, frontier_rows, min_rh_for_budget, pareto_sweep
from rnnpipe.lstm import LayerSpec, nominal_autoencoder, small_autoencoder
from rnnpipe.perf import PROFILES

zynq = PROFILES["zynq7045-100MHz"]
u250 = PROFILES["u250-300MHz"]

# %%
# Smallest Rh that lets a single 32x32 layer fit various budgets.
spec = LayerSpec(32, 32)
for budget in (9000, 5000, 2000, 1000, 500):
    print(f"budget {budget:>5}: Rh >= {min_rh_for_budget(spec, budget, zynq)}")

# %%
# Best common interval for each model on its device.
for model, hw in ((small_autoencoder(), zynq), (nominal_autoencoder(), u250)):
    p = balance_model(model, hw)
    print(hw.name, [(r.Rx, r.Rh) for r in p.rfs], "II_sys", p.II_sys, "DSP", p.dsp)

# %%
# Shrinking the budget pushes the balanced design to larger Rh.
for budget in (900, 500, 300, 200):
    p = balance_model(small_autoencoder(), zynq, budget)
    print(f"budget {budget:>4}: Rh={p.rfs[0].Rh} Rx={p.rfs[0].Rx} II_sys={p.II_sys} DSP={p.dsp}")

# %%
# Both frontiers side by side, one row per interval.
naive, balanced = pareto_sweep(small_autoencoder(), zynq, range(1, 11))
nb = {r["II_sys"]: r for r in frontier_rows("naive", naive)}
print(f"{'II_sys':>7}{'naive DSP':>11}{'balanced DSP':>14}")
for row in frontier_rows("balanced", balanced):
    n = nb.get(row["II_sys"])
    print(f"{row['II_sys']:>7}{n['dsp_model'] if n else '-':>11}{row['dsp_model']:>14}")
