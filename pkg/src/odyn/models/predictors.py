"""Forward passes for the three predictor families.

All of them consume an AttributedGraph for the current step plus one
raw control vector per prediction step, and emit one StepPrediction per
step. Controls are (num_scenes, 6) rows; predictions for step k use
controls[k].
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from ..errors import DomainError, ShapeError
from ..graphnet import (
    AttributedGraph,
    EncodeProcessDecode,
    NodeAttr,
    encode_process_decode,
)
from ..tensor import (
    Tensor,
    add,
    concat,
    gather_rows,
    reshape,
    segment_sum,
    slice_channels,
    zeros,
)
from .networks import PredictorNets
from .presets import CONTROL_WIDTH
from .variants import MASK_CHANNEL_INDEX, ModelVariant


@dataclass
class StepPrediction:
    """One prediction step.

    masks: (N, mask_channels, H, W) sigmoid outputs.
    poses: (N, 6) position and velocity, graph-network family only.
    edges: (E, 9) vectors or (E, 1, eh, ew) masks, edge variants only.
    control_out: (G, 6) decoded global, graph-network family only.
    latents: (N, L) node latents after this step.
    """

    masks: Tensor
    poses: Tensor | None
    edges: Tensor | None
    control_out: Tensor | None
    latents: Tensor


def _flat(x: Tensor) -> Tensor:
    n = 1
    for s in x.shape[1:]:
        n *= s
    return reshape(x, (x.shape[0], n))


def _check_controls(g: AttributedGraph, controls: Sequence[Tensor]) -> None:
    if len(controls) == 0:
        raise DomainError("need at least one control vector to predict a step")
    for k, c in enumerate(controls):
        if c.ndim != 2 or c.shape != (g.num_graphs, CONTROL_WIDTH):
            raise ShapeError(
                f"control {k} has shape {c.shape}, expected "
                f"({g.num_graphs}, {CONTROL_WIDTH})"
            )


def _check_visual(variant: ModelVariant, g: AttributedGraph) -> None:
    if g.visual is None or g.visual.ndim != 4:
        raise DomainError(f"{variant.value} needs (N, C, H, W) visual node attributes")
    if g.visual.shape[1] != variant.visual_channels:
        raise DomainError(
            f"{variant.value} expects {variant.visual_channels} visual channels, "
            f"graph carries {g.visual.shape[1]}"
        )


def gn_forward(
    nets: PredictorNets,
    g0: AttributedGraph,
    controls: Sequence[Tensor],
    training: bool = False,
) -> list[StepPrediction]:
    """Graph-network rollout: encode once, run the message-passing core
    once per control, decode masks, poses, edges, and the global."""
    variant = nets.variant
    if variant.family != "gn":
        raise DomainError(f"gn_forward cannot run variant {variant.value}")
    _check_visual(variant, g0)
    _check_controls(g0, controls)
    if variant.uses_pose and g0.pose is None:
        raise DomainError(f"{variant.value} needs pose node attributes")
    if variant.edge_kind is None:
        if g0.num_edges != 0:
            raise DomainError(f"{variant.value} runs on edge-free graphs")
    elif g0.edge is None:
        raise DomainError(f"{variant.value} needs edge attributes")
    if g0.u is None or g0.u.shape != (g0.num_graphs, CONTROL_WIDTH):
        raise ShapeError("graph global must carry the current raw control")

    p = nets.preset

    def encode_node(na: NodeAttr) -> NodeAttr:
        z = _flat(nets.node_encoder(na.visual, training))
        if nets.pose_encoder is not None:
            z = concat([z, nets.pose_encoder(na.pose, training)], axis=1)
        return NodeAttr(latent=z)

    def encode_global(c: Tensor) -> Tensor:
        return nets.control_encoder(c, training)

    encode_edge = None
    decode_edge = None
    if variant.edge_kind == "pose":
        def encode_edge(e: Tensor) -> Tensor:
            if e.shape[0] == 0:
                return zeros((0, p.edge_latent), dtype=e.dtype)
            return nets.edge_encoder(e, training)

        def decode_edge(e: Tensor) -> Tensor:
            if e.shape[0] == 0:
                return zeros((0, 9), dtype=e.dtype)
            return nets.edge_decoder(e, training)

    elif variant.edge_kind == "segm":
        eh, ew = p.edge_mask_size
        ec0 = p.core_edge_out // (p.edge_grid[0] * p.edge_grid[1])

        def encode_edge(e: Tensor) -> Tensor:
            if e.shape[0] == 0:
                return zeros((0, p.segm_edge_latent), dtype=e.dtype)
            return _flat(nets.edge_encoder(e, training))

        def decode_edge(e: Tensor) -> Tensor:
            if e.shape[0] == 0:
                return zeros((0, 1, eh, ew), dtype=e.dtype)
            grid = reshape(e, (e.shape[0], ec0, *p.edge_grid))
            return nets.edge_decoder(grid, training)

    gh, gw = p.node_grid
    c0 = p.core_node_out // (gh * gw)

    def decode_node(na: NodeAttr) -> NodeAttr:
        z = na.latent
        masks = nets.node_decoder(reshape(z, (z.shape[0], c0, gh, gw)), training)
        poses = nets.pose_decoder(z, training)
        return NodeAttr(visual=masks, pose=poses, latent=z)

    epd = EncodeProcessDecode(
        encode_node=encode_node,
        encode_global=encode_global,
        core_node=nets.core_node,
        core_global=nets.core_global,
        encode_edge=encode_edge,
        core_edge=nets.core_edge,
        decode_node=decode_node,
        decode_edge=decode_edge,
        decode_global=lambda u: nets.global_decoder(u, training),
        training=training,
    )
    steps = encode_process_decode(g0, controls, epd)
    return [
        StepPrediction(
            masks=s.visual,
            poses=s.pose,
            edges=s.edge,
            control_out=s.u,
            latents=s.latent,
        )
        for s in steps
    ]


def ap_forward(
    nets: PredictorNets,
    g0: AttributedGraph,
    controls: Sequence[Tensor],
    training: bool = False,
) -> list[StepPrediction]:
    """Residual latent update rollout.

    Each node is encoded once; per step the control-conditioned latent
    is advanced by a self-dynamics term plus (for the interacting
    variant) a sum of pairwise terms over incoming edges, and the mask
    is decoded from the updated latent. The latent feeds the next step;
    pixels are never re-encoded.
    """
    variant = nets.variant
    if variant.family != "ap":
        raise DomainError(f"ap_forward cannot run variant {variant.value}")
    _check_visual(variant, g0)
    _check_controls(g0, controls)

    gh, gw = nets.preset.node_grid
    c0 = nets.node_grid_channels
    n = g0.num_nodes

    v = _flat(nets.node_encoder(g0.visual, training))
    out = []
    for c in controls:
        c_node = gather_rows(nets.control_encoder(c, training), g0.node_graph)
        vbar = concat([v, c_node], axis=1)
        upd = nets.f_trans(vbar, training)
        if variant.interactions and g0.num_edges > 0:
            pair = concat(
                [gather_rows(vbar, g0.receivers), gather_rows(vbar, g0.senders)],
                axis=1,
            )
            msg = nets.f_interact(pair, training)
            upd = add(upd, segment_sum(msg, g0.receivers, n))
        v = add(v, upd)
        dec_in = concat([v, c_node], axis=1)
        masks = nets.node_decoder(reshape(dec_in, (n, c0, gh, gw)), training)
        out.append(
            StepPrediction(masks=masks, poses=None, edges=None, control_out=None, latents=v)
        )
    return out


def baseline_forward(
    nets: PredictorNets,
    g0: AttributedGraph,
    controls: Sequence[Tensor],
    training: bool = False,
) -> list[StepPrediction]:
    """Per-object auto-encoder conditioned on the control.

    No dynamics networks: every step re-encodes the visual stack with
    the previous prediction looped back into the mask channel (RGB and
    depth stay frozen), so multi-step prediction is still differentiable
    end to end.
    """
    variant = nets.variant
    if variant.family != "baseline":
        raise DomainError(f"baseline_forward cannot run variant {variant.value}")
    _check_visual(variant, g0)
    _check_controls(g0, controls)

    gh, gw = nets.preset.node_grid
    c0 = nets.node_grid_channels
    n = g0.num_nodes
    channels = g0.visual.shape[1]

    visual = g0.visual
    out = []
    for k, c in enumerate(controls):
        v = _flat(nets.node_encoder(visual, training))
        c_node = gather_rows(nets.control_encoder(c, training), g0.node_graph)
        dec_in = concat([v, c_node], axis=1)
        masks = nets.node_decoder(reshape(dec_in, (n, c0, gh, gw)), training)
        out.append(
            StepPrediction(masks=masks, poses=None, edges=None, control_out=None, latents=v)
        )
        if k + 1 < len(controls):
            before = slice_channels(visual, 0, MASK_CHANNEL_INDEX)
            after = slice_channels(visual, MASK_CHANNEL_INDEX + 1, channels)
            visual = concat([before, masks, after], axis=1)
    return out


_FORWARDS = {"gn": gn_forward, "ap": ap_forward, "baseline": baseline_forward}


def forward(
    nets: PredictorNets,
    g0: AttributedGraph,
    controls: Sequence[Tensor],
    training: bool = False,
) -> list[StepPrediction]:
    """Dispatch to the family's forward pass."""
    return _FORWARDS[nets.variant.family](nets, g0, controls, training)
