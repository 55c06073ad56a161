from .evaluate import EvalReport, evaluate, iou, rollout
from .graphs import (
    batch_windows,
    downsample_mask,
    edge_masks,
    edge_vectors,
    episode_to_graphs,
    frame_graph,
    pose_vectors,
    visual_stack,
    window_controls,
    window_targets,
)
from .report import CSV_COLUMNS, ResultRow, format_table, read_csv, write_csv
from .train import TrainConfig, TrainResult, make_batches, split_epochs, train

__all__ = [
    "CSV_COLUMNS",
    "EvalReport",
    "ResultRow",
    "TrainConfig",
    "TrainResult",
    "batch_windows",
    "downsample_mask",
    "edge_masks",
    "edge_vectors",
    "episode_to_graphs",
    "evaluate",
    "format_table",
    "frame_graph",
    "iou",
    "make_batches",
    "pose_vectors",
    "read_csv",
    "rollout",
    "split_epochs",
    "train",
    "visual_stack",
    "window_controls",
    "window_targets",
    "write_csv",
]
