"""
Detecting chirps with a small LSTM autoencoder
==============================================

Train on background noise only, then flag windows whose reconstruction error
is unusually large. Harder signals (lower SNR) give lower AUC, and the
fixed-point model tracks the float model closely.
"""

# %%
import numpy as np

from rnnpipe.anomaly import (
    BACKGROUND,
    ChirpConfig,
    empirical_fpr,
    gen_dataset,
    roc_auc,
    score,
    stack_windows,
    threshold_from_fpr,
)
from rnnpipe.lstm import small_autoencoder
from rnnpipe.train import train_autoencoder

train = gen_dataset(2000, 0, seed=42)
result = train_autoencoder(stack_windows(train, 8), small_autoencoder(), epochs=30)
print("training loss", " ".join(f"{v:.3f}" for v in result.history[::5]))
model = result.model

# %%
for snr in (1, 2, 4, 8):
    held = gen_dataset(500, 500, seed=43, cfg=ChirpConfig(snr=snr))
    row = []
    for numerics in ("float", "fixed"):
        row.append(roc_auc(score(held, model, numerics))[0])
    print(f"SNR {snr}: AUC float {row[0]:.3f}, fixed {row[1]:.3f}")

# %%
# Choosing a threshold for a 10% false-positive rate on background.
held = gen_dataset(500, 500, seed=43)
scored = score(held, model, "fixed")
bg = [s.loss for s in scored if s.label == BACKGROUND]
sig = np.array([s.loss for s in scored if s.label != BACKGROUND])
thr = threshold_from_fpr(bg, 0.1)
print(f"threshold {thr:.4f}: FPR {empirical_fpr(bg, thr):.3f}, TPR {np.mean(sig > thr):.3f}")
