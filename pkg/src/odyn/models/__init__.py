"""Predictor models: variants, network construction, forward passes,
losses, latent-target pretraining, and checkpointing."""

from .checkpoint import load_checkpoint, save_checkpoint
from .losses import StepTargets, latent_loss, loss_eq1
from .memorize import LatentTargetEncoder, pretrain_memorization_ae
from .networks import PredictorNets, build_nets
from .predictors import (
    StepPrediction,
    ap_forward,
    baseline_forward,
    forward,
    gn_forward,
)
from .presets import (
    CONTROL_WIDTH,
    POSE_EDGE_WIDTH,
    POSE_WIDTH,
    PresetSpec,
    desk_preset,
    get_preset,
    paper_preset,
    plan_tconv_pads,
    test_preset,
)
from .variants import (
    FULL_CHANNELS,
    MASK_CHANNEL_INDEX,
    MASK_ONLY_CHANNELS,
    ModelVariant,
    variant_from_name,
)

__all__ = [
    "CONTROL_WIDTH",
    "FULL_CHANNELS",
    "MASK_CHANNEL_INDEX",
    "MASK_ONLY_CHANNELS",
    "POSE_EDGE_WIDTH",
    "POSE_WIDTH",
    "LatentTargetEncoder",
    "ModelVariant",
    "PredictorNets",
    "PresetSpec",
    "StepPrediction",
    "StepTargets",
    "ap_forward",
    "baseline_forward",
    "build_nets",
    "desk_preset",
    "forward",
    "get_preset",
    "gn_forward",
    "latent_loss",
    "load_checkpoint",
    "loss_eq1",
    "paper_preset",
    "plan_tconv_pads",
    "pretrain_memorization_ae",
    "save_checkpoint",
    "test_preset",
    "variant_from_name",
]
