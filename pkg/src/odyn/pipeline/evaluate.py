"""Rollout prediction and mask-overlap scoring.

Scoring protocol: predictions stay continuous through the rollout and
are thresholded at 0.5 only when compared against ground truth. The
dataset score is the flat mean over every (episode, step, object)
triple, with per-step and per-object-count breakdowns on the side.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..errors import DomainError, ShapeError
from ..graphnet import AttributedGraph
from ..models import PredictorNets, StepPrediction
from ..models.predictors import forward
from ..models.variants import MASK_CHANNEL_INDEX
from ..sim import Episode
from ..tensor import Tensor, get_default_dtype, no_grad
from ..tensor.core import Array
from .graphs import frame_graph, window_controls

MaskStub = Callable[[Episode, int, int], Sequence[Array]]


def iou(a: Array, b: Array) -> float:
    """Intersection over union of two binary masks.

    Two empty masks agree perfectly and score 1.0.
    """
    x = np.asarray(a)
    y = np.asarray(b)
    if x.shape != y.shape:
        raise ShapeError(f"mask shapes differ: {x.shape} vs {y.shape}")
    for m in (x, y):
        if m.dtype != np.bool_ and not np.isin(m, (0, 1)).all():
            raise DomainError("masks must be binary")
    x = x.astype(bool)
    y = y.astype(bool)
    union = np.logical_or(x, y).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(x, y).sum() / union)


def rollout(
    nets: PredictorNets,
    ep: Episode,
    t: int,
    horizon: int,
    re_encode: bool = False,
) -> list[StepPrediction]:
    """Predict frames t+1 .. t+horizon from frame t, in inference mode.

    Drives the model with the episode's recorded controls. With
    `re_encode` the residual-update families swap the predicted mask
    into the visual stack and encode again each step instead of carrying
    the latent forward; other families reject the flag.
    """
    if horizon < 1:
        raise DomainError(f"horizon must be positive, got {horizon}")
    if t < 0 or t + horizon > ep.num_steps:
        raise DomainError(
            f"rollout from {t} over {horizon} steps overruns "
            f"{ep.num_steps}-step episode"
        )
    variant = nets.variant
    ds = nets.preset.segm_downsample
    if not re_encode:
        g = frame_graph(ep, t, variant, ds)
        controls = [Tensor(c) for c in window_controls(ep, t, horizon)]
        with no_grad():
            return forward(nets, g, controls, training=False)

    if variant.family != "ap":
        raise DomainError(
            f"re-encoding rollout only applies to residual-update models, "
            f"not {variant.value}"
        )
    g = frame_graph(ep, t, variant, ds)
    visual = g.visual.data
    preds: list[StepPrediction] = []
    for k in range(horizon):
        c = Tensor(ep.control[t + k].astype(get_default_dtype())[None])
        with no_grad():
            step = forward(nets, g, [c], training=False)[0]
        preds.append(step)
        if k + 1 < horizon:
            visual = visual.copy()
            visual[:, MASK_CHANNEL_INDEX : MASK_CHANNEL_INDEX + 1] = step.masks.data
            g = AttributedGraph.single(
                Tensor(ep.control[t + k + 1].astype(get_default_dtype())[None]),
                visual=Tensor(visual),
                senders=g.senders,
                receivers=g.receivers,
            )
    return preds


@dataclass
class EvalReport:
    """Flattened mean mask overlap plus breakdowns."""

    mean_iou: float
    n_items: int
    horizon: int
    per_step: dict[int, float] = field(default_factory=dict)
    per_objects: dict[int, float] = field(default_factory=dict)


def _predicted_masks(
    predictor: PredictorNets | MaskStub,
    ep: Episode,
    t: int,
    horizon: int,
    re_encode: bool,
) -> list[np.ndarray]:
    """Continuous (N, H, W) masks for steps t+1 .. t+horizon."""
    if isinstance(predictor, PredictorNets):
        preds = rollout(predictor, ep, t, horizon, re_encode)
        return [p.masks.data[:, 0] for p in preds]
    steps = [np.asarray(m, dtype=np.float64) for m in predictor(ep, t, horizon)]
    if len(steps) != horizon:
        raise ShapeError(f"stub returned {len(steps)} steps, expected {horizon}")
    out = []
    for m in steps:
        if m.ndim == 4 and m.shape[1] == 1:
            m = m[:, 0]
        if m.shape != (ep.n_objects, *ep.masks.shape[2:]):
            raise ShapeError(f"stub mask step has shape {m.shape}")
        out.append(m)
    return out


def evaluate(
    predictor: PredictorNets | MaskStub,
    episodes: Sequence[Episode],
    horizon: int,
    all_starts: bool = True,
    re_encode: bool = False,
    threshold: float = 0.5,
) -> EvalReport:
    """Score a predictor over a dataset.

    Every start with `horizon` ground-truth frames ahead counts once per
    episode when `all_starts` is set; otherwise only the opening frame.
    Predicted masks round at `threshold` (ties count as filled), and the
    report mean flattens over episodes, steps, and objects alike.
    """
    if horizon < 1:
        raise DomainError(f"horizon must be positive, got {horizon}")
    if not episodes:
        raise DomainError("cannot evaluate an empty dataset")
    scores: list[float] = []
    by_step: dict[int, list[float]] = defaultdict(list)
    by_objects: dict[int, list[float]] = defaultdict(list)
    for ep in episodes:
        last_start = ep.num_steps - horizon
        if last_start < 0:
            continue
        starts = range(last_start + 1) if all_starts else range(1)
        for t in starts:
            step_masks = _predicted_masks(predictor, ep, t, horizon, re_encode)
            for k, masks in enumerate(step_masks):
                rounded = masks >= threshold
                truth = ep.masks[t + k + 1].astype(bool)
                for i in range(ep.n_objects):
                    v = iou(rounded[i], truth[i])
                    scores.append(v)
                    by_step[k + 1].append(v)
                    by_objects[ep.n_objects].append(v)
    if not scores:
        raise DomainError(
            f"no episode offers a {horizon}-step window to evaluate"
        )
    return EvalReport(
        mean_iou=float(np.mean(scores)),
        n_items=len(scores),
        horizon=horizon,
        per_step={k: float(np.mean(v)) for k, v in sorted(by_step.items())},
        per_objects={n: float(np.mean(v)) for n, v in sorted(by_objects.items())},
    )
