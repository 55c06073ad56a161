"""Curriculum training loop.

A run with prediction horizon n and curriculum enabled splits its epoch
budget over n stages; stage k trains k-step windows, so the model sees
short rollouts before long ones. Every stage ends with a checkpoint, and
a run can resume from the last one present.
"""

from __future__ import annotations

import math
import os
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..errors import DomainError, NumericalError
from ..models import (
    LatentTargetEncoder,
    PredictorNets,
    build_nets,
    get_preset,
    latent_loss,
    load_checkpoint,
    loss_eq1,
    pretrain_memorization_ae,
    save_checkpoint,
    variant_from_name,
)
from ..models.predictors import forward
from ..sim import Episode
from ..tensor import (
    AdamState,
    DiffRecord,
    Tensor,
    adam_step,
    add,
    backward,
    scale,
    zero_grads,
)
from .evaluate import evaluate
from .graphs import batch_windows, visual_stack

Log = Callable[[str], None]


@dataclass
class TrainConfig:
    variant: str = "ap"
    preset: str = "desk"
    horizon: int = 1
    epochs: int = 13
    lr: float = 1e-3
    batch: int = 30
    curriculum: bool = True
    component_mean: bool = True
    use_latent: bool = False
    latent_weight: float = 1.0
    seed: int = 0
    max_steps: int | None = None
    target_iou: float | None = None
    eval_every: int = 200

    def validate(self) -> None:
        variant = variant_from_name(self.variant)
        get_preset(self.preset)
        if self.horizon < 1:
            raise DomainError(f"horizon must be positive, got {self.horizon}")
        if self.epochs < 1:
            raise DomainError(f"epochs must be positive, got {self.epochs}")
        if self.curriculum and self.epochs < self.horizon:
            raise DomainError(
                f"{self.epochs} epochs cannot cover {self.horizon} curriculum stages"
            )
        if self.lr <= 0:
            raise DomainError(f"learning rate must be positive, got {self.lr}")
        if self.batch < 2:
            raise DomainError(
                f"batch must be at least 2 (batch norm), got {self.batch}"
            )
        if self.use_latent and variant.family != "ap":
            raise DomainError(
                f"latent loss applies to residual-update models, not {self.variant}"
            )
        if self.latent_weight < 0:
            raise DomainError("latent weight must be non-negative")
        if self.max_steps is not None and self.max_steps < 1:
            raise DomainError(f"max_steps must be positive, got {self.max_steps}")


@dataclass
class TrainResult:
    nets: PredictorNets
    adam: AdamState
    config: TrainConfig
    losses: list[float] = field(default_factory=list)
    steps: int = 0
    stages_run: list[int] = field(default_factory=list)
    stopped: str | None = None  # "max_steps" | "target_iou" | None
    train_iou: float | None = None


def split_epochs(total: int, stages: int) -> list[int]:
    """Spread an epoch budget over stages, extras to the earliest."""
    if stages < 1 or total < stages:
        raise DomainError(f"cannot split {total} epochs over {stages} stages")
    base, rem = divmod(total, stages)
    return [base + 1] * rem + [base] * (stages - rem)


def make_batches(
    episodes: Sequence[Episode],
    perm: np.ndarray,
    batch: int,
    rng: np.random.Generator,
) -> list[list[int]]:
    """Same-object-count mini-batches in shuffled order.

    Leftover chunks of one episode are dropped: a single scene breaks
    batch statistics.
    """
    groups: dict[int, list[int]] = {}
    for i in perm:
        groups.setdefault(episodes[int(i)].n_objects, []).append(int(i))
    batches = []
    for n in sorted(groups):
        idxs = groups[n]
        for j in range(0, len(idxs), batch):
            chunk = idxs[j : j + batch]
            if len(chunk) >= 2:
                batches.append(chunk)
    if not batches:
        raise DomainError(
            "no trainable mini-batch: need at least two episodes with the "
            "same object count"
        )
    order = rng.permutation(len(batches))
    return [batches[int(i)] for i in order]


def _stage_path(out_dir: str, stage: int) -> str:
    return os.path.join(out_dir, f"stage_{stage}.odck")


def _find_resume_stage(out_dir: str, stages: int) -> int:
    """Highest stage with a checkpoint on disk, 0 when none."""
    done = 0
    for k in range(1, stages + 1):
        if os.path.exists(_stage_path(out_dir, k)):
            done = k
    return done


def _batch_latent_targets(
    lt: LatentTargetEncoder,
    episodes: Sequence[Episode],
    starts: Sequence[int],
    horizon: int,
    variant,
) -> list[Tensor]:
    out = []
    for k in range(1, horizon + 1):
        stacks = np.concatenate(
            [visual_stack(ep, t + k, variant) for ep, t in zip(episodes, starts)],
            axis=0,
        )
        out.append(Tensor(lt.encode(stacks)))
    return out


def train(
    episodes: Sequence[Episode],
    config: TrainConfig,
    out_dir: str | None = None,
    resume: bool = False,
    latent_encoder: LatentTargetEncoder | None = None,
    log: Log | None = None,
) -> TrainResult:
    """Run the full curriculum; returns the trained networks.

    Deterministic for a fixed config seed: initialisation draws from the
    run generator and every stage reshuffles from its own seed-derived
    generator, so an interrupted run resumed from its last stage
    checkpoint retraces the uninterrupted one.
    """
    config.validate()
    if not episodes:
        raise DomainError("cannot train on an empty episode list")
    variant = variant_from_name(config.variant)
    preset = get_preset(config.preset)
    say = log if log is not None else (lambda s: None)

    short = min(ep.num_steps for ep in episodes)
    if config.horizon > short:
        raise DomainError(
            f"horizon {config.horizon} exceeds shortest episode ({short} steps)"
        )
    for ep in episodes:
        if ep.frame_size != preset.frame:
            raise DomainError(
                f"episode frames {ep.frame_size} do not match preset "
                f"{config.preset!r} frames {preset.frame}"
            )

    rng = np.random.default_rng(config.seed)
    nets = build_nets(variant, preset, rng)
    adam = AdamState()
    stages = config.horizon if config.curriculum else 1
    per_stage = split_epochs(config.epochs, stages)

    first_stage = 1
    if resume:
        if out_dir is None:
            raise DomainError("resume needs an output directory to scan")
        done = _find_resume_stage(out_dir, stages)
        if done:
            nets, adam, _, _ = load_checkpoint(_stage_path(out_dir, done))
            first_stage = done + 1
            say(f"resuming after stage {done}/{stages}")

    if config.use_latent and latent_encoder is None:
        say("pretraining latent target encoder")
        stacks = np.concatenate(
            [
                visual_stack(ep, t, variant)
                for ep in episodes
                for t in range(ep.num_steps + 1)
            ],
            axis=0,
        )
        masks = np.concatenate(
            [
                ep.masks[t].astype(np.float32)[:, None]
                for ep in episodes
                for t in range(ep.num_steps + 1)
            ],
            axis=0,
        )
        latent_encoder = pretrain_memorization_ae(
            stacks, masks, preset, np.random.default_rng([config.seed, 977])
        )

    params = nets.params()
    result = TrainResult(nets=nets, adam=adam, config=config)
    result.steps = adam.step

    for stage in range(first_stage, stages + 1):
        horizon = stage if config.curriculum else config.horizon
        say(f"stage {stage}/{stages}")
        stage_rng = np.random.default_rng([config.seed, stage])
        final_stage = stage == stages
        for epoch in range(per_stage[stage - 1]):
            perm = stage_rng.permutation(len(episodes))
            for batch_idx, batch in enumerate(
                make_batches(episodes, perm, config.batch, stage_rng)
            ):
                eps = [episodes[i] for i in batch]
                starts = [
                    int(stage_rng.integers(0, ep.num_steps - horizon + 1))
                    for ep in eps
                ]
                g, controls, targets = batch_windows(
                    eps, starts, horizon, variant, preset.segm_downsample
                )
                zero_grads(params)
                with DiffRecord():
                    preds = forward(nets, g, controls, training=True)
                    loss = loss_eq1(
                        targets, preds, variant, component_mean=config.component_mean
                    )
                    if config.use_latent:
                        lat = latent_loss(
                            [p.latents for p in preds],
                            _batch_latent_targets(
                                latent_encoder, eps, starts, horizon, variant
                            ),
                        )
                        loss = add(loss, scale(lat, config.latent_weight))
                    value = float(loss.data)
                    if not math.isfinite(value):
                        raise NumericalError(
                            f"non-finite loss {value} at stage {stage} "
                            f"epoch {epoch + 1} batch {batch_idx} "
                            f"(optimizer step {adam.step})"
                        )
                    backward(loss)
                adam_step(params, adam, lr=config.lr)
                result.losses.append(value)
                result.steps = adam.step
                if result.steps % 25 == 0:
                    say(f"  step {result.steps}  loss {value:.5f}")

                if (
                    final_stage
                    and config.target_iou is not None
                    and result.steps % config.eval_every == 0
                ):
                    report = evaluate(nets, episodes, horizon)
                    result.train_iou = report.mean_iou
                    say(f"  step {result.steps}  train iou {report.mean_iou:.4f}")
                    if report.mean_iou >= config.target_iou:
                        result.stopped = "target_iou"
                        break
                if config.max_steps is not None and result.steps >= config.max_steps:
                    result.stopped = "max_steps"
                    break
            if result.stopped:
                break
        result.stages_run.append(stage)
        if out_dir is not None:
            os.makedirs(out_dir, exist_ok=True)
            save_checkpoint(
                _stage_path(out_dir, stage), nets, adam, stage, asdict(config)
            )
        if result.stopped:
            break
    return result
