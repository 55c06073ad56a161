"""Episodes to attributed graphs and training windows.

Each frame of an episode becomes one graph: a node per object holding
its visual stack (frame RGB, the object's own mask, frame depth), a
6-vector pose where the variant wants one, fully connected directed
edges carrying either sender pose history or the sender's downsampled
mask, and the recorded control as the global. Training windows pair a
start graph with per-step controls and per-step targets.
"""

from __future__ import annotations

import numpy as np

from ..errors import DomainError, ShapeError
from ..graphnet import AttributedGraph, fully_connected_edges
from ..models import StepTargets, get_preset
from ..models.variants import ModelVariant
from ..sim import Episode
from ..tensor import Tensor, get_default_dtype


def downsample_mask(mask: np.ndarray, factor: int) -> np.ndarray:
    """Block-mean shrink of an (H, W) mask by an integer factor."""
    h, w = mask.shape
    if h % factor or w % factor:
        raise ShapeError(f"mask {mask.shape} not divisible by {factor}")
    return (
        mask.reshape(h // factor, factor, w // factor, factor)
        .mean(axis=(1, 3))
        .astype(get_default_dtype())
    )


def visual_stack(ep: Episode, t: int, variant: ModelVariant) -> np.ndarray:
    """(N, C, H, W) per-object input stacks for frame t."""
    n = ep.n_objects
    masks = ep.masks[t].astype(get_default_dtype())[:, None]  # (N, 1, H, W)
    if variant.visual_channels == 1:
        return masks
    rgb = np.moveaxis(ep.rgb[t], -1, 0).astype(get_default_dtype())  # (3, H, W)
    depth = ep.depth[t].astype(get_default_dtype())[None]  # (1, H, W)
    shared_rgb = np.broadcast_to(rgb, (n, *rgb.shape))
    shared_depth = np.broadcast_to(depth, (n, *depth.shape))
    return np.concatenate([shared_rgb, masks, shared_depth], axis=1)


def pose_vectors(ep: Episode, t: int) -> np.ndarray:
    """(N, 6) position and velocity rows for frame t."""
    return np.concatenate([ep.pos[t], ep.vel[t]], axis=1).astype(get_default_dtype())


def edge_vectors(ep: Episode, t: int, senders: np.ndarray) -> np.ndarray:
    """(E, 9) sender rows: velocity, previous position, position.

    The first frame has no predecessor, so its previous position is the
    current one.
    """
    prev = max(t - 1, 0)
    return np.concatenate(
        [ep.vel[t][senders], ep.pos[prev][senders], ep.pos[t][senders]], axis=1
    ).astype(get_default_dtype())


def edge_masks(
    ep: Episode, t: int, senders: np.ndarray, factor: int
) -> np.ndarray:
    """(E, 1, eh, ew) downsampled sender masks for frame t."""
    small = np.stack(
        [
            downsample_mask(ep.masks[t, s].astype(get_default_dtype()), factor)
            for s in senders
        ]
    ) if len(senders) else np.zeros(
        (0, ep.masks.shape[2] // factor, ep.masks.shape[3] // factor),
        dtype=get_default_dtype(),
    )
    return small[:, None]


def frame_graph(
    ep: Episode,
    t: int,
    variant: ModelVariant,
    segm_downsample: int = 2,
) -> AttributedGraph:
    """The variant's input graph for frame t of an episode."""
    if not 0 <= t <= ep.num_steps:
        raise DomainError(f"frame {t} outside episode of {ep.num_steps} steps")
    n = ep.n_objects
    senders, receivers = fully_connected_edges(n)
    vis = Tensor(visual_stack(ep, t, variant))
    pose = Tensor(pose_vectors(ep, t)) if variant.uses_pose else None
    edge = None
    if variant.edge_kind == "pose":
        edge = Tensor(edge_vectors(ep, t, senders))
    elif variant.edge_kind == "segm":
        edge = Tensor(edge_masks(ep, t, senders, segm_downsample))
    elif variant.family == "gn":  # edge-free graph variant
        senders = receivers = np.zeros(0, dtype=np.int64)
    u = Tensor(ep.control[t].astype(get_default_dtype())[None])
    return AttributedGraph.single(
        u, visual=vis, pose=pose, edge=edge, senders=senders, receivers=receivers
    )


def episode_to_graphs(
    ep: Episode, variant: ModelVariant, segm_downsample: int = 2
) -> list[AttributedGraph]:
    """One input graph per frame, in time order."""
    ep.validate()
    return [
        frame_graph(ep, t, variant, segm_downsample)
        for t in range(ep.num_steps + 1)
    ]


def window_controls(ep: Episode, t: int, horizon: int) -> list[np.ndarray]:
    """Raw control rows driving predictions t+1 .. t+horizon."""
    if t < 0 or t + horizon > ep.num_steps:
        raise DomainError(
            f"window start {t} with horizon {horizon} overruns "
            f"{ep.num_steps} steps"
        )
    return [ep.control[t + k].astype(get_default_dtype())[None] for k in range(horizon)]


def window_targets(
    ep: Episode,
    t: int,
    horizon: int,
    variant: ModelVariant,
    segm_downsample: int = 2,
) -> list[StepTargets]:
    """Ground truth for predictions t+1 .. t+horizon as raw arrays."""
    if t < 0 or t + horizon > ep.num_steps:
        raise DomainError(
            f"window start {t} with horizon {horizon} overruns "
            f"{ep.num_steps} steps"
        )
    n = ep.n_objects
    senders, _ = fully_connected_edges(n)
    out = []
    for k in range(1, horizon + 1):
        s = t + k
        masks = Tensor(ep.masks[s].astype(get_default_dtype())[:, None])
        poses = edges = None
        if variant.family == "gn":
            poses = Tensor(pose_vectors(ep, s))
            if variant.edge_kind == "pose":
                edges = Tensor(edge_vectors(ep, s, senders))
            elif variant.edge_kind == "segm":
                edges = Tensor(edge_masks(ep, s, senders, segm_downsample))
        out.append(StepTargets(masks=masks, poses=poses, edges=edges))
    return out


def batch_windows(
    episodes: list[Episode],
    starts: list[int],
    horizon: int,
    variant: ModelVariant,
    segm_downsample: int = 2,
) -> tuple[AttributedGraph, list[Tensor], list[StepTargets]]:
    """Merge per-episode windows into one disjoint graph batch.

    Node and edge target stacks concatenate in batch order, matching the
    layout AttributedGraph.batch produces for the inputs.
    """
    if len(episodes) != len(starts) or not episodes:
        raise DomainError("need one start per episode and at least one episode")
    graphs = []
    controls_per_ep = []
    targets_per_ep = []
    for ep, t in zip(episodes, starts):
        graphs.append(frame_graph(ep, t, variant, segm_downsample))
        controls_per_ep.append(window_controls(ep, t, horizon))
        targets_per_ep.append(window_targets(ep, t, horizon, variant, segm_downsample))
    g = AttributedGraph.batch(graphs)
    controls = [
        Tensor(np.concatenate([c[k] for c in controls_per_ep], axis=0))
        for k in range(horizon)
    ]
    targets = []
    for k in range(horizon):
        masks = Tensor(
            np.concatenate([t[k].masks.data for t in targets_per_ep], axis=0)
        )
        poses = edges = None
        if variant.family == "gn":
            poses = Tensor(
                np.concatenate([t[k].poses.data for t in targets_per_ep], axis=0)
            )
            if variant.edge_kind is not None:
                edges = Tensor(
                    np.concatenate([t[k].edges.data for t in targets_per_ep], axis=0)
                )
        targets.append(StepTargets(masks=masks, poses=poses, edges=edges))
    return g, controls, targets


def preset_downsample(preset_name: str) -> int:
    return get_preset(preset_name).segm_downsample
