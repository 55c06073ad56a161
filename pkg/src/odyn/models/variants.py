"""Predictor variants and what each one consumes and produces.

Three families share the visual encoder/decoder pair: graph-network
predictors (message passing over object nodes), auto-predictors
(residual latent updates with optional pairwise interaction terms), and
a dynamics-free per-object baseline. The graph variants differ in what
rides on the nodes and edges: full pose information, segmentation-mask
edges, mask-only nodes, or no edges at all.
"""

from __future__ import annotations

from enum import Enum

from ..errors import DomainError

# [RGB, mask, depth] channel stack
FULL_CHANNELS = 5
MASK_ONLY_CHANNELS = 1
MASK_CHANNEL_INDEX = 3


class ModelVariant(Enum):
    GN_POS_VEL = "gn_pos_vel"
    GN_SEGM = "gn_segm"
    GN_SEGM_NO_RGBD = "gn_segm_no_rgbd"
    GN_NO_EDGES = "gn_no_edges"
    AP = "ap"
    AP_NO_INTERACT = "ap_no_interact"
    BASELINE = "baseline"

    @property
    def family(self) -> str:
        if self in (ModelVariant.AP, ModelVariant.AP_NO_INTERACT):
            return "ap"
        if self is ModelVariant.BASELINE:
            return "baseline"
        return "gn"

    @property
    def visual_channels(self) -> int:
        return (
            MASK_ONLY_CHANNELS
            if self is ModelVariant.GN_SEGM_NO_RGBD
            else FULL_CHANNELS
        )

    @property
    def uses_pose(self) -> bool:
        """Node pose vectors enter the encoder (the mask-edge variants
        strip position/velocity from the inputs entirely)."""
        return self in (ModelVariant.GN_POS_VEL, ModelVariant.GN_NO_EDGES)

    @property
    def edge_kind(self) -> str | None:
        if self is ModelVariant.GN_POS_VEL:
            return "pose"
        if self in (ModelVariant.GN_SEGM, ModelVariant.GN_SEGM_NO_RGBD):
            return "segm"
        return None

    @property
    def interactions(self) -> bool:
        return self is ModelVariant.AP


def variant_from_name(name: str) -> ModelVariant:
    try:
        return ModelVariant(name.lower())
    except ValueError:
        valid = ", ".join(v.value for v in ModelVariant)
        raise DomainError(f"unknown model variant {name!r}; expected one of {valid}")
