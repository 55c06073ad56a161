from .episodes import (
    ROLES,
    Episode,
    RoleSpec,
    generate_dataset,
    generate_episode,
    load_dataset,
    load_episode,
    load_manifest,
    resolve_threads,
    save_episode,
)
from .policy import COMMAND_DIRS, ScriptedPolicy, pick_target, push_direction
from .render import pixel_centers, polygon_mask, render
from .shapes import (
    KNOWN_IDS,
    NOVEL_IDS,
    PALETTE,
    PUSHER_COLOR,
    PUSHER_HEIGHT,
    bounding_radius,
    polygon_area,
    shape_height,
    shape_vertices,
)
from .world import ObjectState, SimParams, WorldState, max_penetration, step

__all__ = [
    "ROLES",
    "Episode",
    "RoleSpec",
    "generate_dataset",
    "generate_episode",
    "load_dataset",
    "load_episode",
    "load_manifest",
    "resolve_threads",
    "save_episode",
    "COMMAND_DIRS",
    "ScriptedPolicy",
    "pick_target",
    "push_direction",
    "pixel_centers",
    "polygon_mask",
    "render",
    "KNOWN_IDS",
    "NOVEL_IDS",
    "PALETTE",
    "PUSHER_COLOR",
    "PUSHER_HEIGHT",
    "bounding_radius",
    "polygon_area",
    "shape_height",
    "shape_vertices",
    "ObjectState",
    "SimParams",
    "WorldState",
    "max_penetration",
    "step",
]
