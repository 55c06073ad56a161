"""Training losses.

The step loss averages over prediction steps; within a step the mask
term is mean binary cross-entropy over objects and the pose/edge terms
are mean squared error over objects/edges. Squared-error terms average
over vector components by default; `component_mean=False` switches them
to component sums (both conventions read the same summation formula).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from ..errors import DomainError, ShapeError
from ..tensor import Tensor, add, bce_loss, mse_loss, scale
from .predictors import StepPrediction
from .variants import ModelVariant

POSE_COMPONENTS = 6
EDGE_COMPONENTS = 9


@dataclass
class StepTargets:
    """Ground truth for one prediction step.

    masks: (N, mask_channels, H, W) binary object masks.
    poses: (N, 6) position and velocity, graph-network variants.
    edges: (E, 9) vectors or (E, 1, eh, ew) masks, edge variants.
    """

    masks: Tensor
    poses: Tensor | None = None
    edges: Tensor | None = None


def loss_eq1(
    targets: Sequence[StepTargets],
    preds: Sequence[StepPrediction],
    variant: ModelVariant,
    component_mean: bool = True,
) -> Tensor:
    """Mean over steps of (edge error + mask BCE + pose error).

    Edge and pose terms apply only to graph-network variants; for the
    mask-edge variants the edge term is BCE on edge masks, otherwise
    squared error on edge vectors. Steps without edges contribute no
    edge term.
    """
    if len(targets) != len(preds):
        raise DomainError(
            f"{len(targets)} target steps vs {len(preds)} predicted steps"
        )
    if not targets:
        raise DomainError("loss needs at least one step")

    terms: list[Tensor] = []
    for t, p in zip(targets, preds):
        step = bce_loss(t.masks, p.masks)
        if variant.family == "gn":
            if t.poses is None or p.poses is None:
                raise DomainError("graph-network loss needs pose targets and predictions")
            pose = mse_loss(t.poses, p.poses)
            if not component_mean:
                pose = scale(pose, float(POSE_COMPONENTS))
            step = add(step, pose)
            if variant.edge_kind is not None:
                if t.edges is None or p.edges is None:
                    raise DomainError("edge variant loss needs edge targets and predictions")
                if t.edges.shape[0] != p.edges.shape[0]:
                    raise ShapeError(
                        f"edge count mismatch: {t.edges.shape[0]} vs {p.edges.shape[0]}"
                    )
                if t.edges.shape[0] > 0:
                    if variant.edge_kind == "segm":
                        e = bce_loss(t.edges, p.edges)
                    else:
                        e = mse_loss(t.edges, p.edges)
                        if not component_mean:
                            e = scale(e, float(EDGE_COMPONENTS))
                    step = add(step, e)
        terms.append(step)

    total = terms[0]
    for t in terms[1:]:
        total = add(total, t)
    return scale(total, 1.0 / len(terms))


def latent_loss(
    pred_latents: Sequence[Tensor],
    target_latents: Sequence[Tensor],
) -> Tensor:
    """Mean over steps of the squared error between predicted node
    latents and the frozen target encoder's latents."""
    if len(pred_latents) != len(target_latents):
        raise DomainError(
            f"{len(pred_latents)} latent steps vs {len(target_latents)} targets"
        )
    if not pred_latents:
        raise DomainError("latent loss needs at least one step")
    total = mse_loss(target_latents[0], pred_latents[0])
    for t, p in zip(target_latents[1:], pred_latents[1:]):
        total = add(total, mse_loss(t, p))
    return scale(total, 1.0 / len(pred_latents))
