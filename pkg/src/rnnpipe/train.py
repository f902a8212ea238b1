"""Float training of the LSTM autoencoder by backpropagation through time.

The trainer is deliberately plain: minibatch gradient descent on the mean
squared reconstruction error, global-norm gradient clipping and a fixed seed.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .lstm import LstmWeights, ModelSpec, SpecError

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"training diverged at epoch {epoch} (loss={loss})")
        self.epoch = epoch
        self.loss = loss


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


@dataclass
class Grads:
    """Gradients with the same layout as the model parameters."""

    layers: list[LstmWeights]
    dense_w: np.ndarray | None = None
    dense_b: np.ndarray | None = None

    def arrays(self) -> list[np.ndarray]:
        out = []
        for g in self.layers:
            out += [g.Wx, g.Wh, g.b]
        if self.dense_w is not None:
            out += [self.dense_w, self.dense_b]
        return out

    def norm(self) -> float:
        return float(np.sqrt(sum(np.sum(a * a) for a in self.arrays())))


def _layer_fwd(xs, w: LstmWeights):
    """Forward over ``xs [B, TS, Lx]``; returns all h and the per-step cache."""
    B, TS, _ = xs.shape
    lh = w.Wh.shape[1]
    h = np.zeros((B, lh))
    c = np.zeros((B, lh))
    hs, cache = [], []
    for t in range(TS):
        z = xs[:, t] @ w.Wx.T + h @ w.Wh.T + w.b
        i = _sigmoid(z[:, :lh])
        f = _sigmoid(z[:, lh:2 * lh])
        g = np.tanh(z[:, 2 * lh:3 * lh])
        o = _sigmoid(z[:, 3 * lh:])
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        h_new = o * tc
        cache.append((xs[:, t], h, c, i, f, g, o, tc))
        h, c = h_new, c_new
        hs.append(h)
    return np.stack(hs, axis=1), cache


def _layer_bwd(dhs, cache, w: LstmWeights):
    """Backward pass; ``dhs [B, TS, Lh]`` is the loss gradient w.r.t. every h_t."""
    B, TS, lh = dhs.shape
    gWx = np.zeros_like(w.Wx)
    gWh = np.zeros_like(w.Wh)
    gb = np.zeros_like(w.b)
    dxs = np.zeros((B, TS, w.Wx.shape[1]))
    dh_next = np.zeros((B, lh))
    dc_next = np.zeros((B, lh))
    for t in reversed(range(TS)):
        x, h_prev, c_prev, i, f, g, o, tc = cache[t]
        dh = dhs[:, t] + dh_next
        do = dh * tc
        dc = dh * o * (1.0 - tc * tc) + dc_next
        di = dc * g
        df = dc * c_prev
        dg = dc * i
        dz = np.concatenate(
            [di * i * (1 - i), df * f * (1 - f), dg * (1 - g * g), do * o * (1 - o)], axis=1
        )
        gWx += dz.T @ x
        gWh += dz.T @ h_prev
        gb += dz.sum(axis=0)
        dxs[:, t] = dz @ w.Wx
        dh_next = dz @ w.Wh
        dc_next = dc * f
    return LstmWeights(gWx, gWh, gb), dxs


def loss_and_grads(model: ModelSpec, X) -> tuple[float, Grads]:
    """Mean squared reconstruction error of ``X [B, TS, F]`` and its gradient."""
    X = np.asarray(X, dtype=float)
    if model.dense_w is None:
        raise SpecError("training needs a dense output head")
    seq = X
    caches = []
    for k, (spec, w) in enumerate(zip(model.layers, model.weights)):
        hs, cache = _layer_fwd(seq, w)
        caches.append((cache, spec))
        seq = hs if spec.return_sequences else hs[:, -1]
        if k == model.repeat_vector_after:
            seq = np.repeat(seq[:, None, :], spec.TS, axis=1)
    Y = seq @ model.dense_w.T + model.dense_b
    diff = Y - X
    loss = float(np.mean(diff * diff))

    dY = 2.0 * diff / diff.size
    gdw = np.einsum("bto,bth->oh", dY, seq)
    gdb = dY.sum(axis=(0, 1))
    dseq = dY @ model.dense_w
    grads: list[LstmWeights] = [None] * len(model.layers)
    for k in reversed(range(len(model.layers))):
        cache, spec = caches[k]
        if k == model.repeat_vector_after:
            dseq = dseq.sum(axis=1)
        if spec.return_sequences:
            dhs = dseq
        else:
            dhs = np.zeros((dseq.shape[0], spec.TS, spec.Lh))
            dhs[:, -1] = dseq
        grads[k], dseq = _layer_bwd(dhs, cache, model.weights[k])
    return loss, Grads(grads, gdw, gdb)


@dataclass
class TrainResult:
    model: ModelSpec
    history: list[float] = field(default_factory=list)


def train_autoencoder(
    data,
    model: ModelSpec,
    epochs: int = 30,
    lr: float = 0.2,
    seed: int = 42,
    batch_size: int = 32,
    clip_norm: float = 1.0,
) -> TrainResult:
    """Fit ``model`` (float weights, initialised if absent) to reconstruct ``data``.

    ``data`` is ``[N, TS, F]``. ``history`` holds the full-data loss before
    training followed by the loss after each epoch.
    """
    X = np.asarray(data, dtype=float)
    if X.ndim != 3 or len(X) == 0:
        raise ValueError("training data must be a nonempty [N, TS, F] array")
    rng = np.random.default_rng(seed)
    if not model.has_weights:
        model = model.init_weights(rng)
    model = model.with_weights(
        [w.copy() for w in model.weights], model.dense_w.copy(), model.dense_b.copy()
    )
    history = [loss_and_grads(model, X)[0]]
    for epoch in range(1, epochs + 1):
        order = rng.permutation(len(X))
        for start in range(0, len(X), batch_size):
            _, g = loss_and_grads(model, X[order[start:start + batch_size]])
            scale = lr
            norm = g.norm()
            if clip_norm and norm > clip_norm:
                scale *= clip_norm / norm
            for w, gw in zip(model.weights, g.layers):
                w.Wx -= scale * gw.Wx
                w.Wh -= scale * gw.Wh
                w.b -= scale * gw.b
            model.dense_w -= scale * g.dense_w
            model.dense_b -= scale * g.dense_b
        loss = loss_and_grads(model, X)[0]
        if not np.isfinite(loss):
            raise TrainingDiverged(epoch, loss)
        history.append(loss)
        log.debug("epoch %d loss %.6f", epoch, loss)
    return TrainResult(model, history)
