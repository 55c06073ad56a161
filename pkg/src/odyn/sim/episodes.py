"""Episode generation and the on-disk episode format.

An episode holds T transitions as T+1 recorded steps. Step arrays:

    rgb     (T+1, H, W, 3) float32
    depth   (T+1, H, W)    float32
    masks   (T+1, N, H, W) uint8
    pos     (T+1, N, 3)    float32, z is half the body height
    vel     (T+1, N, 3)    float32, z always 0
    control (T+1, 6)       float32

control[t] is the pusher pose and velocity that produced step t+1 from
step t: (x, y, 0.5, vx, vy, 0). The final row duplicates the previous
one so every step has a control attached.

Files use a little-endian binary layout (magic "ODYN", version 1):
header fields T, N, W, H as u32, then N shape ids as u32, then the six
arrays above in order, each contiguous. Anything malformed raises
DataError.
"""

from __future__ import annotations

import json
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import DataError, DomainError
from . import shapes as shp
from .policy import ScriptedPolicy, pick_target, push_direction
from .render import render
from .world import (
    ObjectState,
    SimParams,
    WorldState,
    _circle_polygon,
    _sat_polygons,
    step,
)

_MAGIC = b"ODYN"
_VERSION = 1
_HEADER = struct.Struct("<4sIIIII")


@dataclass(frozen=True)
class RoleSpec:
    n_known: int
    n_novel: int
    t_range: tuple[int, int]


ROLES: dict[str, RoleSpec] = {
    "train3": RoleSpec(3, 0, (7, 15)),
    "test3": RoleSpec(3, 0, (7, 15)),
    "test5_2novel": RoleSpec(3, 2, (7, 50)),
    "test5_5novel": RoleSpec(0, 5, (7, 50)),
}


@dataclass
class Episode:
    rgb: np.ndarray
    depth: np.ndarray
    masks: np.ndarray
    pos: np.ndarray
    vel: np.ndarray
    control: np.ndarray
    shape_ids: tuple[int, ...]

    @property
    def num_steps(self) -> int:
        """Number of transitions T (arrays hold T+1 rows)."""
        return self.rgb.shape[0] - 1

    @property
    def n_objects(self) -> int:
        return self.masks.shape[1]

    @property
    def frame_size(self) -> tuple[int, int]:
        return self.rgb.shape[2], self.rgb.shape[1]  # (W, H)

    def validate(self) -> None:
        tp1, h, w, _ = self.rgb.shape
        n = self.masks.shape[1]
        if self.depth.shape != (tp1, h, w):
            raise DataError("depth shape mismatch")
        if self.masks.shape != (tp1, n, h, w):
            raise DataError("masks shape mismatch")
        if self.pos.shape != (tp1, n, 3) or self.vel.shape != (tp1, n, 3):
            raise DataError("pose shape mismatch")
        if self.control.shape != (tp1, 6):
            raise DataError("control shape mismatch")
        if len(self.shape_ids) != n:
            raise DataError("shape id count mismatch")


def _choose_ids(spec: RoleSpec, rng: np.random.Generator) -> tuple[int, ...]:
    ids: list[int] = []
    if spec.n_known:
        perm = rng.permutation(len(shp.KNOWN_IDS))[: spec.n_known]
        ids += [shp.KNOWN_IDS[int(i)] for i in perm]
    if spec.n_novel:
        perm = rng.permutation(len(shp.NOVEL_IDS))[: spec.n_novel]
        ids += [shp.NOVEL_IDS[int(i)] for i in perm]
    return tuple(ids)


def _place_scene(
    ids: tuple[int, ...], params: SimParams, rng: np.random.Generator
) -> list[ObjectState] | None:
    bw, bh = params.bounds
    objs: list[ObjectState] = []
    for sid in ids:
        placed = False
        for _ in range(200):
            angle = float(rng.uniform(0.0, 2.0 * np.pi))
            cand = ObjectState.place(sid, (0.0, 0.0), angle)
            m = cand.radius + 0.05
            if 2 * m >= min(bw, bh):
                break
            cand.pos = rng.uniform([m, m], [bw - m, bh - m])
            ok = True
            for o in objs:
                if np.linalg.norm(o.pos - cand.pos) > o.radius + cand.radius:
                    continue
                if _sat_polygons(o.world_verts(), cand.world_verts()) is not None:
                    ok = False
                    break
            if ok:
                objs.append(cand)
                placed = True
                break
        if not placed:
            return None
    return objs


def _spawn_pusher(
    objs: list[ObjectState], params: SimParams, rng: np.random.Generator
) -> np.ndarray | None:
    """Drop the pusher just behind the separation target so that pushing
    along the scripted direction makes contact within a few steps."""
    tmp = WorldState(params, objs, pusher_pos=np.zeros(2))
    ti = pick_target(tmp)
    d = push_direction(tmp, ti)
    tgt = objs[ti]
    r = params.pusher_radius
    bw, bh = params.bounds
    for k in (1.0, 1.2, 1.5, 2.0, 3.0):
        b = tgt.pos - d * (tgt.radius + r + 0.05) * k
        if not (r < b[0] < bw - r and r < b[1] < bh - r):
            continue
        clear = True
        for o in objs:
            if np.linalg.norm(b - o.pos) > o.radius + r:
                continue
            if _circle_polygon(b, r, o.world_verts()) is not None:
                clear = False
                break
        if clear:
            return b
    return None


def _pose_rows(w: WorldState) -> tuple[np.ndarray, np.ndarray]:
    pos = np.array(
        [[o.pos[0], o.pos[1], o.height / 2.0] for o in w.objects], dtype=np.float32
    )
    vel = np.array(
        [[o.vel[0], o.vel[1], 0.0] for o in w.objects], dtype=np.float32
    )
    return pos, vel


def generate_episode(
    role: str,
    seed: int,
    params: SimParams | None = None,
    width: int = 32,
    height: int = 24,
    policy: ScriptedPolicy | None = None,
) -> Episode:
    if role not in ROLES:
        raise DomainError(f"unknown role {role!r}, expected one of {sorted(ROLES)}")
    spec = ROLES[role]
    params = params or SimParams()
    policy = policy or ScriptedPolicy()
    rng = np.random.default_rng(seed)

    for _ in range(50):
        ids = _choose_ids(spec, rng)
        objs = _place_scene(ids, params, rng)
        if objs is None:
            continue
        spawn = _spawn_pusher(objs, params, rng)
        if spawn is not None:
            break
    else:
        raise DataError(f"could not place a {role} scene for seed {seed}")

    w = WorldState(params, objs, pusher_pos=spawn)
    t_total = int(rng.integers(spec.t_range[0], spec.t_range[1] + 1))

    rgbs, depths, maskss = [], [], []
    poss, vels, controls = [], [], []
    r, d, m = render(w, width, height)
    rgbs.append(r), depths.append(d), maskss.append(m)
    p, v = _pose_rows(w)
    poss.append(p), vels.append(v)
    for _ in range(t_total):
        a = policy.act(w, rng)
        w = step(w, a)
        r, d, m = render(w, width, height)
        rgbs.append(r), depths.append(d), maskss.append(m)
        p, v = _pose_rows(w)
        poss.append(p), vels.append(v)
        controls.append(
            np.array(
                [w.pusher_pos[0], w.pusher_pos[1], 0.5, w.pusher_vel[0], w.pusher_vel[1], 0.0],
                dtype=np.float32,
            )
        )
    controls.append(controls[-1].copy())

    ep = Episode(
        rgb=np.stack(rgbs),
        depth=np.stack(depths),
        masks=np.stack(maskss),
        pos=np.stack(poss),
        vel=np.stack(vels),
        control=np.stack(controls),
        shape_ids=ids,
    )
    ep.validate()
    return ep


def save_episode(ep: Episode, path) -> None:
    ep.validate()
    tp1, h, w, _ = ep.rgb.shape
    n = ep.n_objects
    blob = bytearray()
    blob += _HEADER.pack(_MAGIC, _VERSION, tp1 - 1, n, w, h)
    blob += np.asarray(ep.shape_ids, dtype="<u4").tobytes()
    for arr, dt in (
        (ep.rgb, "<f4"),
        (ep.depth, "<f4"),
        (ep.masks, "u1"),
        (ep.pos, "<f4"),
        (ep.vel, "<f4"),
        (ep.control, "<f4"),
    ):
        blob += np.ascontiguousarray(arr, dtype=dt).tobytes()
    Path(path).write_bytes(bytes(blob))


def _take(buf: memoryview, off: int, dt: str, shape) -> tuple[np.ndarray, int]:
    count = int(np.prod(shape))
    nbytes = count * np.dtype(dt).itemsize
    if off + nbytes > len(buf):
        raise DataError("episode file truncated")
    arr = np.frombuffer(buf, dtype=dt, count=count, offset=off).reshape(shape)
    return arr.copy(), off + nbytes


def load_episode(path) -> Episode:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise DataError(f"{path}: not an episode file (too short)")
    magic, ver, t, n, w, h = _HEADER.unpack_from(raw, 0)
    if magic != _MAGIC:
        raise DataError(f"{path}: bad magic {magic!r}")
    if ver != _VERSION:
        raise DataError(f"{path}: unsupported version {ver}")
    if not (1 <= t <= 100_000 and 1 <= n <= 64 and 2 <= w <= 4096 and 2 <= h <= 4096):
        raise DataError(f"{path}: implausible header T={t} N={n} W={w} H={h}")
    buf = memoryview(raw)
    off = _HEADER.size
    ids, off = _take(buf, off, "<u4", (n,))
    tp1 = t + 1
    rgb, off = _take(buf, off, "<f4", (tp1, h, w, 3))
    depth, off = _take(buf, off, "<f4", (tp1, h, w))
    masks, off = _take(buf, off, "u1", (tp1, n, h, w))
    pos, off = _take(buf, off, "<f4", (tp1, n, 3))
    vel, off = _take(buf, off, "<f4", (tp1, n, 3))
    control, off = _take(buf, off, "<f4", (tp1, 6))
    if off != len(raw):
        raise DataError(f"{path}: {len(raw) - off} trailing bytes")
    ep = Episode(rgb, depth, masks, pos, vel, control, tuple(int(i) for i in ids))
    ep.validate()
    return ep


def resolve_threads(explicit: int | None = None) -> int:
    if explicit is not None:
        return max(1, explicit)
    raw = os.environ.get("ODYN_THREADS", "").strip()
    if not raw:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        raise DomainError(f"ODYN_THREADS must be an integer, got {raw!r}")


def generate_dataset(
    out_dir,
    role: str,
    count: int,
    base_seed: int = 0,
    params: SimParams | None = None,
    width: int = 32,
    height: int = 24,
    threads: int | None = None,
) -> dict:
    """Write `count` episodes plus a dataset.json manifest; episode i uses
    seed base_seed + i so any slice is reproducible in isolation."""
    if count < 1:
        raise DomainError("count must be positive")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    nthreads = resolve_threads(threads)

    def one(i: int) -> dict:
        ep = generate_episode(role, base_seed + i, params, width, height)
        name = f"ep_{i:05d}.odyn"
        save_episode(ep, out / name)
        return {
            "file": name,
            "seed": base_seed + i,
            "steps": ep.num_steps,
            "objects": ep.n_objects,
            "shape_ids": list(ep.shape_ids),
        }

    if nthreads == 1:
        rows = [one(i) for i in range(count)]
    else:
        with ThreadPoolExecutor(max_workers=nthreads) as ex:
            rows = list(ex.map(one, range(count)))

    manifest = {
        "format": "odyn-v1",
        "role": role,
        "count": count,
        "base_seed": base_seed,
        "width": width,
        "height": height,
        "episodes": rows,
    }
    (out / "dataset.json").write_text(json.dumps(manifest, indent=1))
    return manifest


def load_manifest(dataset_dir) -> dict:
    path = Path(dataset_dir) / "dataset.json"
    if not path.is_file():
        raise DataError(f"{dataset_dir}: no dataset.json manifest")
    try:
        man = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise DataError(f"{path}: invalid manifest ({e})")
    if man.get("format") != "odyn-v1":
        raise DataError(f"{path}: unknown dataset format {man.get('format')!r}")
    return man


def load_dataset(dataset_dir) -> list[Episode]:
    man = load_manifest(dataset_dir)
    return [load_episode(Path(dataset_dir) / row["file"]) for row in man["episodes"]]
