"""Memorization auto-encoder for latent-space supervision.

A separate encoder/decoder pair (same CNN specs as the node networks)
is overfit to the training frames with BCE on the object masks. Its
frozen encoder then supplies latent targets: a predictor's latent for a
future step is regressed onto the frozen encoding of the ground-truth
future frame.
"""

from __future__ import annotations

import warnings

import numpy as np

from ..errors import DomainError, ShapeError
from ..tensor import (
    AdamState,
    DiffRecord,
    Network,
    Tensor,
    adam_step,
    backward,
    bce_loss,
    no_grad,
    zero_grads,
)
from ..tensor.core import Array
from .presets import PresetSpec


class LatentTargetEncoder:
    """Frozen encoder; exposes `encode` only, never gradients."""

    def __init__(self, net: Network):
        self._net = net
        self.width = int(np.prod(net.out_shape))

    def encode(self, visuals: Array) -> Array:
        """(M, C, H, W) visual stacks -> (M, width) latents, no tape."""
        x = np.asarray(visuals)
        if x.ndim != 4 or x.shape[1:] != self._net.in_shape:
            raise ShapeError(
                f"expected (M, {', '.join(map(str, self._net.in_shape))}), got {x.shape}"
            )
        with no_grad():
            z = self._net(Tensor(x.astype(np.float32, copy=False)), training=False)
        return z.data.reshape(x.shape[0], self.width).copy()


def _mean_rounded_iou(pred: Array, truth: Array) -> float:
    # per-sample IoU of the thresholded reconstruction, both-empty = 1
    p = pred >= 0.5
    t = truth >= 0.5
    axes = tuple(range(1, p.ndim))
    inter = np.logical_and(p, t).sum(axis=axes)
    union = np.logical_or(p, t).sum(axis=axes)
    vals = np.where(union > 0, inter / np.maximum(union, 1), 1.0)
    return float(vals.mean())


def pretrain_memorization_ae(
    visuals: Array,
    masks: Array,
    preset: PresetSpec,
    rng: np.random.Generator,
    lr: float = 1e-3,
    batch: int = 30,
    max_steps: int = 2000,
    target_iou: float = 0.95,
    eval_every: int = 50,
) -> LatentTargetEncoder:
    """Overfit an auto-encoder on (visuals, masks) pairs; return the
    frozen encoder once train mean IoU reaches `target_iou` or the step
    budget runs out (the best-so-far weights win, with a warning)."""
    visuals = np.asarray(visuals, dtype=np.float32)
    masks = np.asarray(masks, dtype=np.float32)
    if visuals.ndim != 4 or masks.ndim != 4:
        raise ShapeError("visuals and masks must be (M, C, H, W) stacks")
    if visuals.shape[0] != masks.shape[0]:
        raise ShapeError("visuals and masks disagree on sample count")
    m = visuals.shape[0]
    if m < 2:
        raise DomainError("memorization needs at least 2 samples (batch norm)")
    batch = max(2, min(batch, m))

    channels = visuals.shape[1]
    w, h = preset.frame
    enc = Network("mem_encoder", preset.node_encoder, (channels, h, w), rng)
    gh, gw = preset.node_grid
    c0 = preset.node_latent // (gh * gw)
    dec = Network("mem_decoder", preset.node_decoder, (c0, gh, gw), rng)
    params = {**enc.params(), **dec.params()}
    adam = AdamState()

    def reconstruct(x: Tensor, training: bool) -> Tensor:
        z = enc(x, training)
        grid = z.reshape(x.shape[0], c0, gh, gw)
        return dec(grid, training)

    def train_iou() -> float:
        with no_grad():
            rec = reconstruct(Tensor(visuals), False)
        return _mean_rounded_iou(rec.data, masks)

    best = -1.0
    best_state = None
    order = np.arange(m)
    cursor = m  # forces a reshuffle on first use
    for step in range(1, max_steps + 1):
        if cursor + batch > m:
            order = rng.permutation(m)
            cursor = 0
        idx = order[cursor : cursor + batch]
        cursor += batch
        zero_grads(params)
        with DiffRecord():
            rec = reconstruct(Tensor(visuals[idx]), True)
            loss = bce_loss(Tensor(masks[idx]), rec)
            backward(loss)
        adam_step(params, adam, lr=lr)
        if step % eval_every == 0 or step == max_steps:
            score = train_iou()
            if score > best:
                best = score
                best_state = {k: v.data.copy() for k, v in params.items()}
            if score >= target_iou:
                return LatentTargetEncoder(enc)

    if best_state is not None:
        for k, v in params.items():
            v.data = best_state[k]
    warnings.warn(
        f"memorization stopped at mean IoU {best:.3f} < {target_iou} "
        f"after {max_steps} steps; returning best weights",
        stacklevel=2,
    )
    return LatentTargetEncoder(enc)
