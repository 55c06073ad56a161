"""Top-down rigid body world: convex objects, a kinematic pusher disc,
and a rectangular container.

Integration is semi-implicit with velocity damping applied before the
contact solve, and contacts are resolved at the velocity level against
the PREDICTED positions (pos + vel * dt). Positions then integrate with
the solved velocities, so pos(t+1) = pos(t) + vel(t+1) * dt holds exactly
on the normal path.

The pusher is commanded, not simulated: when a command would wedge it
through geometry faster than contacts can resolve, its velocity is
scaled down through a fixed ladder (ending at a full stall) until the
residual penetration is within tolerance. Object orientations are fixed
at placement; there is no angular motion.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import DomainError, NumericalError, ShapeError
from . import shapes as shp

Vec = np.ndarray

_PUSHER_SCALES = (1.0, 0.5, 0.25, 0.1, 0.0)
_DETECT_ROUNDS = 3


@dataclass(frozen=True)
class SimParams:
    dt: float = 0.1
    damping: float = 0.3  # fraction of velocity removed per second
    restitution: float = 0.0
    v_max: float = 5.0
    bounds: tuple[float, float] = (6.4, 4.8)
    pusher_radius: float = 0.22
    solver_iters: int = 12
    bias: float = 0.4  # Baumgarte depth correction fraction per step
    slop: float = 5e-4
    penetration_tol: float = 1e-3


@dataclass
class ObjectState:
    shape_id: int
    verts: Vec  # local vertices after placement rotation, (k, 2)
    pos: Vec
    vel: Vec
    height: float
    mass: float
    radius: float

    def world_verts(self, pos: Vec | None = None) -> Vec:
        return self.verts + (self.pos if pos is None else pos)

    @classmethod
    def place(cls, shape_id: int, pos, angle: float = 0.0) -> "ObjectState":
        """Instantiate a library shape at a position with a fixed rotation."""
        v = shp.shape_vertices(shape_id)
        if angle:
            c, s = np.cos(angle), np.sin(angle)
            v = v @ np.array([[c, s], [-s, c]])
        area = shp.polygon_area(v)
        return cls(
            shape_id=shape_id,
            verts=v,
            pos=np.asarray(pos, dtype=np.float64).copy(),
            vel=np.zeros(2),
            height=shp.shape_height(shape_id),
            mass=area * 1.0,
            radius=shp.bounding_radius(v),
        )


@dataclass
class WorldState:
    params: SimParams
    objects: list[ObjectState]
    pusher_pos: Vec
    pusher_vel: Vec = field(default_factory=lambda: np.zeros(2))
    t: int = 0


@dataclass
class _Contact:
    a: int  # object index, or PUSHER, or WALL
    b: int
    normal: Vec  # unit, points from a toward b
    depth: float
    bias_vel: float = 0.0
    rest_target: float = 0.0
    acc: float = 0.0


PUSHER = -1
WALL = -2


def _sat_polygons(va: Vec, vb: Vec) -> tuple[float, Vec] | None:
    """Min-overlap axis between convex CCW polygons; normal points a->b."""
    best_depth = np.inf
    best_n: Vec | None = None
    for poly in (va, vb):
        k = len(poly)
        for i in range(k):
            e = poly[(i + 1) % k] - poly[i]
            n = np.array([e[1], -e[0]])
            ln = np.hypot(n[0], n[1])
            if ln < 1e-12:
                continue
            n /= ln
            pa = va @ n
            pb = vb @ n
            overlap = min(pa.max(), pb.max()) - max(pa.min(), pb.min())
            if overlap <= 0.0:
                return None
            if overlap < best_depth:
                best_depth = overlap
                best_n = n
    d = vb.mean(axis=0) - va.mean(axis=0)
    if best_n is None:
        return None
    if d @ best_n < 0:
        best_n = -best_n
    return float(best_depth), best_n


def _circle_polygon(center: Vec, r: float, verts: Vec) -> tuple[float, Vec] | None:
    """Overlap of a disc with a convex CCW polygon; normal points
    polygon -> circle."""
    k = len(verts)
    signed = np.empty(k)
    normals = np.empty((k, 2))
    for i in range(k):
        e = verts[(i + 1) % k] - verts[i]
        n = np.array([e[1], -e[0]])
        n /= np.hypot(n[0], n[1])
        normals[i] = n
        signed[i] = (center - verts[i]) @ n
    if np.all(signed <= 0.0):
        i = int(np.argmax(signed))
        return float(r - signed[i]), normals[i]
    # outside: closest point on the boundary
    best_d2 = np.inf
    best_pt: Vec | None = None
    for i in range(k):
        p1 = verts[i]
        p2 = verts[(i + 1) % k]
        e = p2 - p1
        tt = np.clip(((center - p1) @ e) / (e @ e), 0.0, 1.0)
        q = p1 + tt * e
        d2 = ((center - q) ** 2).sum()
        if d2 < best_d2:
            best_d2 = d2
            best_pt = q
    dist = float(np.sqrt(best_d2))
    if dist >= r:
        return None
    if dist > 1e-9:
        n = (center - best_pt) / dist
    else:
        n = normals[int(np.argmax(signed))]
    return float(r - dist), n


def _wall_contacts(lo_x, hi_x, lo_y, hi_y, bounds) -> list[tuple[float, Vec]]:
    """Penetration depth and outward normal per container wall."""
    bw, bh = bounds
    out = []
    if lo_x < 0.0:
        out.append((-lo_x, np.array([-1.0, 0.0])))
    if hi_x > bw:
        out.append((hi_x - bw, np.array([1.0, 0.0])))
    if lo_y < 0.0:
        out.append((-lo_y, np.array([0.0, -1.0])))
    if hi_y > bh:
        out.append((hi_y - bh, np.array([0.0, 1.0])))
    return out


def _detect(
    w: WorldState, pos: list[Vec], ppos: Vec
) -> list[_Contact]:
    """All contacts (depth > 0) at the given object/pusher positions, in a
    fixed deterministic order: walls, pusher-object, object pairs."""
    p = w.params
    n = len(w.objects)
    contacts: list[_Contact] = []
    wv = [o.world_verts(pos[i]) for i, o in enumerate(w.objects)]

    for i, o in enumerate(w.objects):
        v = wv[i]
        for depth, nrm in _wall_contacts(
            v[:, 0].min(), v[:, 0].max(), v[:, 1].min(), v[:, 1].max(), p.bounds
        ):
            contacts.append(_Contact(i, WALL, nrm, depth))
    r = p.pusher_radius
    for depth, nrm in _wall_contacts(
        ppos[0] - r, ppos[0] + r, ppos[1] - r, ppos[1] + r, p.bounds
    ):
        contacts.append(_Contact(PUSHER, WALL, nrm, depth))
    for i, o in enumerate(w.objects):
        if np.hypot(*(ppos - pos[i])) > o.radius + r:
            continue
        hit = _circle_polygon(ppos, r, wv[i])
        if hit is not None:
            depth, nrm = hit
            contacts.append(_Contact(i, PUSHER, nrm, depth))  # normal obj -> pusher
    for i in range(n):
        for j in range(i + 1, n):
            if np.hypot(*(pos[j] - pos[i])) > w.objects[i].radius + w.objects[j].radius:
                continue
            hit = _sat_polygons(wv[i], wv[j])
            if hit is not None:
                depth, nrm = hit
                contacts.append(_Contact(i, j, nrm, depth))
    return contacts


def _solve(
    contacts: list[_Contact],
    vel: np.ndarray,
    pusher_vel: Vec,
    inv_m: np.ndarray,
    p: SimParams,
) -> None:
    """Sequential impulses with accumulated-impulse clamping, in place.

    The pusher and walls have zero inverse mass; the pusher still
    contributes its commanded velocity to the relative speed.
    """

    def vel_of(b: int) -> Vec:
        if b >= 0:
            return vel[b]
        if b == PUSHER:
            return pusher_vel
        return np.zeros(2)

    def inv_of(b: int) -> float:
        return float(inv_m[b]) if b >= 0 else 0.0

    for c in contacts:
        c.bias_vel = p.bias * max(c.depth - p.slop, 0.0) / p.dt
        if p.restitution > 0.0:
            s0 = (vel_of(c.b) - vel_of(c.a)) @ c.normal
            c.rest_target = -p.restitution * min(s0, 0.0)
        c.acc = 0.0

    for _ in range(p.solver_iters):
        for c in contacts:
            k = inv_of(c.a) + inv_of(c.b)
            if k == 0.0:
                continue
            s = (vel_of(c.b) - vel_of(c.a)) @ c.normal
            target = max(c.bias_vel, c.rest_target)
            dl = (target - s) / k
            new_acc = max(c.acc + dl, 0.0)
            dl = new_acc - c.acc
            c.acc = new_acc
            if dl == 0.0:
                continue
            if c.a >= 0:
                vel[c.a] -= dl * inv_m[c.a] * c.normal
            if c.b >= 0:
                vel[c.b] += dl * inv_m[c.b] * c.normal


def _max_depth(w: WorldState, pos: list[Vec], ppos: Vec) -> float:
    cs = _detect(w, pos, ppos)
    return max((c.depth for c in cs), default=0.0)


def _predict(w: WorldState, vel: np.ndarray, pusher_vel: Vec) -> tuple[list[Vec], Vec]:
    dt = w.params.dt
    return (
        [w.objects[i].pos + vel[i] * dt for i in range(len(w.objects))],
        w.pusher_pos + pusher_vel * dt,
    )


def step(w: WorldState, action) -> WorldState:
    """Advance one tick under a pusher velocity command.

    Raises DomainError when the command exceeds v_max and NumericalError
    if the state goes non-finite.
    """
    a = np.asarray(action, dtype=np.float64)
    if a.shape != (2,):
        raise ShapeError(f"pusher command must be a 2-vector, got shape {a.shape}")
    if np.hypot(a[0], a[1]) > w.params.v_max * (1 + 1e-9):
        raise DomainError(
            f"pusher command speed {np.hypot(a[0], a[1]):.3f} exceeds v_max {w.params.v_max}"
        )
    p = w.params
    n = len(w.objects)
    damp = max(0.0, 1.0 - p.damping * p.dt)
    v0 = np.array([o.vel * damp for o in w.objects]).reshape(n, 2)
    inv_m = np.array([1.0 / o.mass for o in w.objects])

    chosen_v: np.ndarray | None = None
    chosen_pv: Vec | None = None
    for scale in _PUSHER_SCALES:
        vel = v0.copy()
        pv = a * scale
        for _ in range(_DETECT_ROUNDS):
            pos, ppos = _predict(w, vel, pv)
            contacts = _detect(w, pos, ppos)
            if not contacts:
                break
            _solve(contacts, vel, pv, inv_m, p)
        pos, ppos = _predict(w, vel, pv)
        if _max_depth(w, pos, ppos) <= p.penetration_tol:
            chosen_v, chosen_pv = vel, pv
            break

    project = False
    if chosen_v is None:
        # full stall still penetrates (dense pile-up): integrate the solved
        # stall velocities then push positions apart directly
        vel = v0.copy()
        pv = a * 0.0
        for _ in range(_DETECT_ROUNDS):
            pos, ppos = _predict(w, vel, pv)
            contacts = _detect(w, pos, ppos)
            if not contacts:
                break
            _solve(contacts, vel, pv, inv_m, p)
        chosen_v, chosen_pv = vel, pv
        project = True

    new_pos = [w.objects[i].pos + chosen_v[i] * p.dt for i in range(n)]
    new_ppos = w.pusher_pos + chosen_pv * p.dt

    if project:
        for _ in range(40):
            contacts = _detect(w, new_pos, new_ppos)
            worst = max((c.depth for c in contacts), default=0.0)
            if worst <= p.penetration_tol:
                break
            for c in contacts:
                push = c.depth - p.slop
                if push <= 0.0:
                    continue
                ia = inv_m[c.a] if c.a >= 0 else 0.0
                ib = inv_m[c.b] if c.b >= 0 else 0.0
                k = ia + ib
                if k == 0.0:
                    continue
                if c.a >= 0:
                    new_pos[c.a] = new_pos[c.a] - c.normal * (push * ia / k)
                if c.b >= 0:
                    new_pos[c.b] = new_pos[c.b] + c.normal * (push * ib / k)

    objs = []
    for i, o in enumerate(w.objects):
        objs.append(replace(o, pos=new_pos[i], vel=chosen_v[i].copy()))
    out = WorldState(
        params=p,
        objects=objs,
        pusher_pos=new_ppos,
        pusher_vel=chosen_pv.copy(),
        t=w.t + 1,
    )
    flat = np.concatenate([np.concatenate([o.pos, o.vel]) for o in objs] + [new_ppos, chosen_pv])
    if not np.all(np.isfinite(flat)):
        raise NumericalError(f"non-finite state after step {w.t}")
    return out


def max_penetration(w: WorldState) -> float:
    """Worst current overlap depth across all contact kinds."""
    return _max_depth(w, [o.pos for o in w.objects], w.pusher_pos)
