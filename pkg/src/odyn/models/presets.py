"""Network size presets.

Every predictor is assembled from the same catalogue of sequential
stacks (visual encoder/decoder CNNs, control and pose MLPs, edge
encoders/decoders, message-passing core MLPs, residual update MLPs).
A preset fixes the frame size and all layer widths:

  * "paper": full-size stacks at 160x120 frames. The transpose-conv
    decoders need per-layer padding for their output to land exactly on
    the frame size; `plan_tconv_pads` solves for those pads.
  * "desk": the same topology scaled down roughly 16x in feature maps
    and run at 32x24 frames, small enough to train on a CPU in minutes.
  * "test": a micro preset at 8x6 for fast finite-difference tests.

Hidden layers are ReLU + batch-norm; each stack's final layer is linear
(mask decoders append a sigmoid).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..errors import DomainError, ShapeError
from ..tensor import LayerSpec, bn, conv, fc, mp, tconv
from ..tensor import relu_spec as relu
from ..tensor import sigmoid_spec as sigmoid

CONTROL_WIDTH = 6  # pusher position (3) + velocity (3)
POSE_WIDTH = 6
POSE_EDGE_WIDTH = 9  # sender velocity, previous position, position


def mlp(widths: list[int]) -> list[LayerSpec]:
    """FC stack: ReLU + batch-norm after every layer but the last."""
    specs: list[LayerSpec] = []
    for i, w in enumerate(widths):
        specs.append(fc(w))
        if i < len(widths) - 1:
            specs += [relu(), bn()]
    return specs


def plan_tconv_pads(
    kernels: list[tuple[int, int]],
    strides: list[tuple[int, int]],
    start_hw: tuple[int, int],
    target_hw: tuple[int, int],
    cap: int = 4,
) -> list[tuple[tuple[int, int], tuple[int, int]]]:
    """Solve per-layer output trims so a transpose-conv stack lands
    exactly on target_hw.

    A total pad of P at layer L shrinks the final extent by P times the
    product of all downstream strides, so trims are assigned greedily
    front to back (largest leverage first), never exceeding `cap` per
    layer and never collapsing an intermediate extent below 1.
    """

    def solve(axis: int) -> list[int]:
        ks = [k[axis] for k in kernels]
        ss = [s[axis] for s in strides]
        n = len(ks)

        def trajectory(pads: list[int]) -> list[int]:
            sizes = [start_hw[axis]]
            for i in range(n):
                nxt = (sizes[-1] - 1) * ss[i] + ks[i] - pads[i]
                sizes.append(nxt)
            return sizes

        pads = [0] * n
        sizes = trajectory(pads)
        if min(sizes) < 1:
            raise ShapeError(f"stack collapses before padding: {sizes}")
        rem = sizes[-1] - target_hw[axis]
        if rem < 0:
            raise DomainError(
                f"target extent {target_hw[axis]} exceeds reachable {sizes[-1]}"
            )
        lever = [1] * n
        for i in range(n - 2, -1, -1):
            lever[i] = lever[i + 1] * ss[i + 1]
        for i in range(n):
            take = min(cap, rem // lever[i], sizes[i + 1] - 1)
            while take > 0:
                trial = pads.copy()
                trial[i] = pads[i] + take
                tsz = trajectory(trial)
                if min(tsz[1:]) >= 1:
                    pads, sizes, rem = trial, tsz, rem - take * lever[i]
                    break
                take -= 1
        if rem != 0:
            raise DomainError(
                f"cannot trim stack to {target_hw[axis]} (residual {rem}); raise cap"
            )
        return pads

    ph = solve(0)
    pw = solve(1)
    return [
        ((h // 2, h - h // 2), (w // 2, w - w // 2)) for h, w in zip(ph, pw)
    ]


@dataclass(frozen=True)
class PresetSpec:
    name: str
    frame: tuple[int, int]  # (W, H)
    node_latent: int  # flattened visual encoder output
    control_latent: int
    pose_latent: int
    edge_latent: int  # pose-edge MLP output
    segm_edge_latent: int  # flattened mask-edge CNN output
    core_node_out: int
    core_edge_out: int
    core_global_out: int
    node_grid: tuple[int, int]  # decoder input spatial grid (h, w)
    edge_grid: tuple[int, int]
    segm_downsample: int  # mask shrink factor for edge masks

    node_encoder: list[LayerSpec] = field(repr=False, default_factory=list)
    node_decoder: list[LayerSpec] = field(repr=False, default_factory=list)
    control_encoder: list[LayerSpec] = field(repr=False, default_factory=list)
    pose_encoder: list[LayerSpec] = field(repr=False, default_factory=list)
    pose_decoder: list[LayerSpec] = field(repr=False, default_factory=list)
    edge_encoder: list[LayerSpec] = field(repr=False, default_factory=list)
    edge_decoder: list[LayerSpec] = field(repr=False, default_factory=list)
    segm_edge_encoder: list[LayerSpec] = field(repr=False, default_factory=list)
    segm_edge_decoder: list[LayerSpec] = field(repr=False, default_factory=list)
    core_node: list[LayerSpec] = field(repr=False, default_factory=list)
    core_edge: list[LayerSpec] = field(repr=False, default_factory=list)
    core_global: list[LayerSpec] = field(repr=False, default_factory=list)
    global_decoder: list[LayerSpec] = field(repr=False, default_factory=list)
    f_trans: list[LayerSpec] = field(repr=False, default_factory=list)
    f_interact: list[LayerSpec] = field(repr=False, default_factory=list)

    @property
    def mask_size(self) -> tuple[int, int]:
        return self.frame[1], self.frame[0]  # (H, W)

    @property
    def edge_mask_size(self) -> tuple[int, int]:
        return (
            self.frame[1] // self.segm_downsample,
            self.frame[0] // self.segm_downsample,
        )


def _conv_block(ch: int, n: int = 1, stride: int = 1) -> list[LayerSpec]:
    out: list[LayerSpec] = []
    for _ in range(n):
        out += [conv(ch, (3, 3), stride, 1), relu(), bn()]
    return out


def desk_preset(mask_channels: int = 1) -> PresetSpec:
    """32x24 frames; trains to high train-set IoU in a couple thousand
    steps on one CPU core."""
    node_encoder = (
        _conv_block(8)
        + [mp()]
        + _conv_block(16)
        + [mp()]
        + _conv_block(16, stride=2)
    )  # (C,24,32) -> (16,3,4), flat 192
    node_decoder = [
        tconv(16, (2, 2), 2), relu(), bn(),
        tconv(8, (2, 2), 2), relu(), bn(),
        tconv(8, (2, 2), 2), relu(), bn(),
        conv(mask_channels, (3, 3), 1, 1), sigmoid(),
    ]  # (c0,3,4) -> (mask,24,32)
    segm_edge_encoder = (
        _conv_block(8, stride=2) + _conv_block(8, stride=2)
    )  # (1,12,16) -> (8,3,4), flat 96
    segm_edge_decoder = [
        tconv(4, (2, 2), 2), relu(), bn(),
        tconv(4, (2, 2), 2), relu(), bn(),
        conv(mask_channels, (3, 3), 1, 1), sigmoid(),
    ]  # (2,3,4) -> (mask,12,16)
    return PresetSpec(
        name="desk",
        frame=(32, 24),
        node_latent=192,
        control_latent=24,
        pose_latent=16,
        edge_latent=24,
        segm_edge_latent=96,
        core_node_out=192,
        core_edge_out=24,
        core_global_out=16,
        node_grid=(3, 4),
        edge_grid=(3, 4),
        segm_downsample=2,
        node_encoder=node_encoder,
        node_decoder=node_decoder,
        control_encoder=mlp([24, 24, 24]),
        pose_encoder=mlp([16, 16]),
        pose_decoder=mlp([16, 16, POSE_WIDTH]),
        edge_encoder=mlp([24, 24, 24]),
        edge_decoder=mlp([24, 24, POSE_EDGE_WIDTH]),
        segm_edge_encoder=segm_edge_encoder,
        segm_edge_decoder=segm_edge_decoder,
        core_node=mlp([64, 64, 192]),
        core_edge=mlp([24, 24, 24]),
        core_global=mlp([16, 16, 16]),
        global_decoder=mlp([6, 6, CONTROL_WIDTH]),
        f_trans=mlp([64, 192]),
        f_interact=mlp([64, 192]),
    )


def paper_preset(mask_channels: int = 1) -> PresetSpec:
    """Full-width stacks at 160x120. Far too slow to train here; kept so
    the published layer sizes shape-check end to end."""
    node_encoder = (
        _conv_block(128, 2)
        + [mp()]
        + _conv_block(256, 2)
        + [mp()]
        + _conv_block(256, 2)
        + [mp()]
        + _conv_block(256, 2)
        + [mp()]
        + [conv(256, (3, 3), 2, 1), relu(), bn()]
        + [conv(256, (3, 3), 2, ((0, 1), (0, 0))), relu(), bn()]
        + [mp()]
    )  # (C,120,160) -> (256,1,1)

    dec_kernels = [
        (2, 2), (2, 2), (4, 4), (2, 3), (2, 2), (2, 2),
        (2, 2), (3, 3), (3, 3), (3, 3), (3, 3), (3, 3),
    ]
    dec_strides = [
        (1, 1), (2, 2), (2, 1), (2, 2), (1, 1), (1, 1),
        (2, 2), (1, 1), (2, 2), (1, 1), (2, 2), (1, 1),
    ]
    dec_channels = [256, 256, 256, 256, 256, 128, 128, 128, 128, 128, 128, mask_channels]
    dec_pads = plan_tconv_pads(dec_kernels, dec_strides, (1, 2), (120, 160))
    node_decoder: list[LayerSpec] = []
    for i, (k, s, c, p) in enumerate(zip(dec_kernels, dec_strides, dec_channels, dec_pads)):
        node_decoder.append(tconv(c, k, s, p))
        if i < len(dec_kernels) - 1:
            node_decoder += [relu(), bn()]
    node_decoder.append(sigmoid())

    segm_edge_encoder = (
        _conv_block(32, stride=2)
        + _conv_block(32, stride=2)
        + _conv_block(16, stride=2)
        + _conv_block(5, stride=2)
    )  # (1,60,80) -> (5,4,5), flat 100

    se_kernels = [(2, 2), (2, 2), (4, 4), (2, 3), (2, 2), (2, 3), (2, 3)]
    se_strides = [(1, 1), (2, 2), (2, 1), (2, 2), (2, 2), (2, 2), (2, 2)]
    se_channels = [64, 64, 32, 16, 8, 2, mask_channels]
    se_pads = plan_tconv_pads(se_kernels, se_strides, (1, 2), (60, 80))
    segm_edge_decoder: list[LayerSpec] = []
    for i, (k, s, c, p) in enumerate(zip(se_kernels, se_strides, se_channels, se_pads)):
        segm_edge_decoder.append(tconv(c, k, s, p))
        if i < len(se_kernels) - 1:
            segm_edge_decoder += [relu(), bn()]
    segm_edge_decoder.append(sigmoid())

    return PresetSpec(
        name="paper",
        frame=(160, 120),
        node_latent=256,
        control_latent=32,
        pose_latent=32,
        edge_latent=64,
        segm_edge_latent=100,
        core_node_out=256,
        core_edge_out=64,
        core_global_out=32,
        node_grid=(1, 2),
        edge_grid=(1, 2),
        segm_downsample=2,
        node_encoder=node_encoder,
        node_decoder=node_decoder,
        control_encoder=mlp([32, 32, 32]),
        pose_encoder=mlp([32, 32]),
        pose_decoder=mlp([32, 32, POSE_WIDTH]),
        edge_encoder=mlp([64, 64, 64]),
        edge_decoder=mlp([64, 64, POSE_EDGE_WIDTH]),
        segm_edge_encoder=segm_edge_encoder,
        segm_edge_decoder=segm_edge_decoder,
        core_node=mlp([256, 256, 256]),
        core_edge=mlp([64, 64, 64]),
        core_global=mlp([32, 32, 32]),
        global_decoder=mlp([6, 6, CONTROL_WIDTH]),
        f_trans=mlp([256, 256]),
        f_interact=mlp([256, 256]),
    )


def test_preset(mask_channels: int = 1) -> PresetSpec:
    """Micro networks on 8x6 frames for finite-difference tests."""
    node_encoder = _conv_block(4) + [mp()] + _conv_block(4, stride=2)
    # (C,6,8) -> (4,2,2), flat 16
    node_decoder = [
        tconv(4, (2, 2), 2), relu(), bn(),
        tconv(2, (3, 2), (3, 2)), relu(), bn(),
        conv(mask_channels, (3, 3), 1, 1), sigmoid(),
    ]  # (c0,1,2) -> (mask,6,8)
    segm_edge_encoder = _conv_block(4, stride=2)  # (1,3,4) -> (4,2,2), flat 16
    segm_edge_decoder = [
        tconv(2, (2, 2), 2), relu(), bn(),
        tconv(mask_channels, (2, 1), 1), sigmoid(),
    ]  # (4,1,2) -> (mask,3,4)
    return PresetSpec(
        name="test",
        frame=(8, 6),
        node_latent=16,
        control_latent=8,
        pose_latent=8,
        edge_latent=8,
        segm_edge_latent=16,
        core_node_out=16,
        core_edge_out=8,
        core_global_out=8,
        node_grid=(1, 2),
        edge_grid=(1, 2),
        segm_downsample=2,
        node_encoder=node_encoder,
        node_decoder=node_decoder,
        control_encoder=mlp([8, 8]),
        pose_encoder=mlp([8, 8]),
        pose_decoder=mlp([8, POSE_WIDTH]),
        edge_encoder=mlp([8, 8]),
        edge_decoder=mlp([8, POSE_EDGE_WIDTH]),
        segm_edge_encoder=segm_edge_encoder,
        segm_edge_decoder=segm_edge_decoder,
        core_node=mlp([8, 16]),
        core_edge=mlp([8, 8]),
        core_global=mlp([8, 8]),
        global_decoder=mlp([6, CONTROL_WIDTH]),
        f_trans=mlp([8, 16]),
        f_interact=mlp([8, 16]),
    )


_PRESETS = {"desk": desk_preset, "paper": paper_preset, "test": test_preset}


def get_preset(name: str, mask_channels: int = 1) -> PresetSpec:
    if name not in _PRESETS:
        raise DomainError(
            f"unknown preset {name!r}; expected one of {sorted(_PRESETS)}"
        )
    return _PRESETS[name](mask_channels)
