"""Network construction for every predictor variant.

`build_nets` turns a (variant, preset) pair into the concrete set of
Networks the forward passes need, with all concatenation widths
computed here so a mismatch fails at build time, not mid-forward.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from ..errors import ShapeError
from ..tensor import Network, Tensor
from ..tensor.core import Array
from .presets import CONTROL_WIDTH, POSE_EDGE_WIDTH, POSE_WIDTH, PresetSpec
from .variants import ModelVariant


@dataclass
class PredictorNets:
    """All trainable networks for one predictor; unused slots are None."""

    variant: ModelVariant
    preset: PresetSpec
    node_encoder: Network
    node_decoder: Network
    control_encoder: Network
    pose_encoder: Network | None = None
    pose_decoder: Network | None = None
    edge_encoder: Network | None = None
    edge_decoder: Network | None = None
    core_node: Network | None = None
    core_edge: Network | None = None
    core_global: Network | None = None
    global_decoder: Network | None = None
    f_trans: Network | None = None
    f_interact: Network | None = None

    def networks(self) -> list[Network]:
        out = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, Network):
                out.append(v)
        return out

    def params(self) -> dict[str, Tensor]:
        merged: dict[str, Tensor] = {}
        for net in self.networks():
            merged.update(net.params())
        return merged

    def buffers(self) -> dict[str, Array]:
        merged: dict[str, Array] = {}
        for net in self.networks():
            merged.update(net.buffers())
        return merged

    @property
    def node_grid_channels(self) -> int:
        """Channel count the node decoder expects at its grid input."""
        gh, gw = self.preset.node_grid
        c, h, w = self.node_decoder.in_shape
        if (h, w) != (gh, gw):
            raise ShapeError(f"node decoder grid {(h, w)} vs preset {(gh, gw)}")
        return c


def _grid_channels(width: int, grid: tuple[int, int], what: str) -> int:
    gh, gw = grid
    if width % (gh * gw) != 0:
        raise ShapeError(
            f"{what}: width {width} does not tile a {gh}x{gw} decoder grid"
        )
    return width // (gh * gw)


def build_nets(
    variant: ModelVariant,
    preset: PresetSpec,
    rng: np.random.Generator,
) -> PredictorNets:
    """Instantiate and wire every network the variant needs.

    Residual update networks (f_trans / f_interact) get zero-initialized
    final layers so the update rule starts as the identity.
    """
    p = preset
    w, h = p.frame
    channels = variant.visual_channels

    node_encoder = Network("node_encoder", p.node_encoder, (channels, h, w), rng)
    flat = int(np.prod(node_encoder.out_shape))
    if flat != p.node_latent:
        raise ShapeError(
            f"node encoder output {node_encoder.out_shape} flattens to {flat}, "
            f"preset declares {p.node_latent}"
        )
    control_encoder = Network("control_encoder", p.control_encoder, (CONTROL_WIDTH,), rng)
    if control_encoder.out_width != p.control_latent:
        raise ShapeError("control encoder width disagrees with preset")

    if variant.family in ("ap", "baseline"):
        dec_in = p.node_latent + p.control_latent
        c0 = _grid_channels(dec_in, p.node_grid, "node decoder input")
        node_decoder = Network("node_decoder", p.node_decoder, (c0, *p.node_grid), rng)
        nets = PredictorNets(
            variant=variant,
            preset=p,
            node_encoder=node_encoder,
            node_decoder=node_decoder,
            control_encoder=control_encoder,
        )
        if variant.family == "ap":
            nets.f_trans = Network(
                "f_trans", p.f_trans, (dec_in,), rng, zero_init_last=True
            )
            if nets.f_trans.out_width != p.node_latent:
                raise ShapeError("f_trans must map back to the node latent width")
            if variant.interactions:
                nets.f_interact = Network(
                    "f_interact", p.f_interact, (2 * dec_in,), rng, zero_init_last=True
                )
                if nets.f_interact.out_width != p.node_latent:
                    raise ShapeError("f_interact must map back to the node latent width")
        return nets

    # graph-network family
    enc_lat = p.node_latent + (p.pose_latent if variant.uses_pose else 0)
    vlat = enc_lat + p.core_node_out  # encoded nodes ++ previous core output
    ulat = p.control_latent + p.core_global_out

    pose_encoder = None
    if variant.uses_pose:
        pose_encoder = Network("pose_encoder", p.pose_encoder, (POSE_WIDTH,), rng)
        if pose_encoder.out_width != p.pose_latent:
            raise ShapeError("pose encoder width disagrees with preset")

    edge_encoder = edge_decoder = core_edge = None
    if variant.edge_kind == "pose":
        edge_encoder = Network("edge_encoder", p.edge_encoder, (POSE_EDGE_WIDTH,), rng)
        edge_enc_lat = edge_encoder.out_width
        if edge_enc_lat != p.edge_latent:
            raise ShapeError("edge encoder width disagrees with preset")
    elif variant.edge_kind == "segm":
        eh, ew = p.edge_mask_size
        edge_encoder = Network("edge_encoder", p.segm_edge_encoder, (1, eh, ew), rng)
        edge_enc_lat = int(np.prod(edge_encoder.out_shape))
        if edge_enc_lat != p.segm_edge_latent:
            raise ShapeError("mask edge encoder width disagrees with preset")

    if variant.edge_kind is not None:
        elat = edge_enc_lat + p.core_edge_out
        core_edge = Network(
            "core_edge", p.core_edge, (elat + 2 * vlat + ulat,), rng
        )
        if core_edge.out_width != p.core_edge_out:
            raise ShapeError("core edge width disagrees with preset")
        core_node_in = p.core_edge_out + vlat + ulat
        core_global_in = p.core_edge_out + p.core_node_out + ulat
    else:
        core_node_in = vlat + ulat
        core_global_in = p.core_node_out + ulat

    core_node = Network("core_node", p.core_node, (core_node_in,), rng)
    if core_node.out_width != p.core_node_out:
        raise ShapeError("core node width disagrees with preset")
    core_global = Network("core_global", p.core_global, (core_global_in,), rng)
    if core_global.out_width != p.core_global_out:
        raise ShapeError("core global width disagrees with preset")

    c0 = _grid_channels(p.core_node_out, p.node_grid, "node decoder input")
    node_decoder = Network("node_decoder", p.node_decoder, (c0, *p.node_grid), rng)
    pose_decoder = Network("pose_decoder", p.pose_decoder, (p.core_node_out,), rng)
    if pose_decoder.out_width != POSE_WIDTH:
        raise ShapeError("pose decoder must end at width 6")

    if variant.edge_kind == "pose":
        edge_decoder = Network("edge_decoder", p.edge_decoder, (p.core_edge_out,), rng)
        if edge_decoder.out_width != POSE_EDGE_WIDTH:
            raise ShapeError("edge decoder must end at width 9")
    elif variant.edge_kind == "segm":
        ec0 = _grid_channels(p.core_edge_out, p.edge_grid, "mask edge decoder input")
        edge_decoder = Network(
            "edge_decoder", p.segm_edge_decoder, (ec0, *p.edge_grid), rng
        )

    global_decoder = Network("global_decoder", p.global_decoder, (p.core_global_out,), rng)
    if global_decoder.out_width != CONTROL_WIDTH:
        raise ShapeError("global decoder must end at the control width")

    return PredictorNets(
        variant=variant,
        preset=p,
        node_encoder=node_encoder,
        node_decoder=node_decoder,
        control_encoder=control_encoder,
        pose_encoder=pose_encoder,
        pose_decoder=pose_decoder,
        edge_encoder=edge_encoder,
        edge_decoder=edge_decoder,
        core_node=core_node,
        core_edge=core_edge,
        core_global=core_global,
        global_decoder=global_decoder,
    )
