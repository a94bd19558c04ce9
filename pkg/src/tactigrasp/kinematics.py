"""Serial arm-hand kinematics: forward kinematics, geometric Jacobians, and
signed-distance collision pairs.

The robot is a tree of revolute/prismatic joints described in JSON (schema 1);
fingertips are spherical pads attached to named links. Jacobians use the
spatial convention: J_R maps joint velocity to the world angular velocity
omega with R_dot R^T = [omega]. Collision geometry is spheres and capsules
attached to links plus world half-spaces; distances and their configuration
gradients come from witness points (exact away from witness switches).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import SchemaError
from .surfaces import Pose

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class Joint:
    name: str
    kind: str                 # "revolute" | "prismatic"
    axis: np.ndarray          # unit vector in the joint frame
    parent: int               # joint index, -1 for the base
    origin: Pose              # fixed transform from parent frame


@dataclass(frozen=True)
class Fingertip:
    name: str
    link: int                 # joint index the tip is rigidly attached to
    offset: Pose              # tip frame in the link frame
    radius: float             # tip sphere radius
    reference_direction: np.ndarray  # valid-contact-cone axis, tip frame, unit


@dataclass(frozen=True)
class CollisionGeom:
    name: str
    type: str                 # "sphere" | "capsule" | "halfspace"
    link: int = -1            # -1: fixed in the world
    center: np.ndarray | None = None   # sphere
    a: np.ndarray | None = None        # capsule endpoints (link frame)
    b: np.ndarray | None = None
    radius: float = 0.0
    normal: np.ndarray | None = None   # halfspace, world frame, unit
    offset: float = 0.0                # halfspace plane offset


@dataclass
class RobotModel:
    name: str
    joints: list[Joint]
    fingertips: list[Fingertip]
    q_min: np.ndarray
    q_max: np.ndarray
    qd_min: np.ndarray
    qd_max: np.ndarray
    geoms: list[CollisionGeom]
    collision_pairs: list[tuple[int, int]]
    chains: list[list[int]] = field(default_factory=list)  # per joint: root..self

    @property
    def n(self) -> int:
        return len(self.joints)

    @property
    def k(self) -> int:
        return len(self.collision_pairs)

    def __post_init__(self):
        self.chains = []
        for j, joint in enumerate(self.joints):
            if joint.parent < 0:
                self.chains.append([j])
            else:
                self.chains.append(self.chains[joint.parent] + [j])
        n = len(self.joints)
        self._chain_mask = np.zeros((n, n), dtype=bool)
        for l, chain in enumerate(self.chains):
            self._chain_mask[l, chain] = True
        self._revolute = np.array([j.kind == "revolute" for j in self.joints])

    def geom_index(self, name: str) -> int:
        for i, g in enumerate(self.geoms):
            if g.name == name:
                return i
        raise KeyError(name)


@dataclass
class KinematicState:
    q: np.ndarray
    joint_R: list[np.ndarray]       # world rotation of each joint frame (post-motion)
    joint_p: list[np.ndarray]       # world position of each joint origin
    joint_axis_w: list[np.ndarray]  # world joint axis
    tip_x: list[np.ndarray]         # fingertip positions
    tip_R: list[np.ndarray]         # fingertip rotations
    tip_Jx: list[np.ndarray]        # 3 x n linear Jacobians
    tip_JR: list[np.ndarray]        # 3 x n angular Jacobians


def _rot_axis_angle(axis: np.ndarray, angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    x, y, z = axis
    # Axis-aligned fast paths (the common case for chain models).
    if x == 1.0 and y == 0.0 and z == 0.0:
        return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])
    if y == 1.0 and x == 0.0 and z == 0.0:
        return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
    if z == 1.0 and x == 0.0 and y == 0.0:
        return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    C = 1.0 - c
    return np.array([
        [c + x * x * C, x * y * C - z * s, x * z * C + y * s],
        [y * x * C + z * s, c + y * y * C, y * z * C - x * s],
        [z * x * C - y * s, z * y * C + x * s, c + z * z * C],
    ])


def forward_kinematics(model: RobotModel, q: np.ndarray) -> KinematicState:
    """Fingertip poses and geometric Jacobians at configuration q."""
    q = np.asarray(q, dtype=float)
    n = model.n
    joint_R: list[np.ndarray] = [None] * n
    joint_p: list[np.ndarray] = [None] * n
    axis_w: list[np.ndarray] = [None] * n
    for j, joint in enumerate(model.joints):
        if joint.parent < 0:
            R_pre = joint.origin.rotation
            p_pre = joint.origin.translation
        else:
            Rp, pp = joint_R[joint.parent], joint_p[joint.parent]
            R_pre = Rp @ joint.origin.rotation
            p_pre = Rp @ joint.origin.translation + pp
        axis_w[j] = R_pre @ joint.axis
        if joint.kind == "revolute":
            joint_R[j] = R_pre @ _rot_axis_angle(joint.axis, q[j])
            joint_p[j] = p_pre
        else:  # prismatic
            joint_R[j] = R_pre
            joint_p[j] = p_pre + axis_w[j] * q[j]

    tip_x, tip_R, tip_Jx, tip_JR = [], [], [], []
    for tip in model.fingertips:
        Rl, pl = joint_R[tip.link], joint_p[tip.link]
        R = Rl @ tip.offset.rotation
        x = Rl @ tip.offset.translation + pl
        Jx = np.zeros((3, n))
        JR = np.zeros((3, n))
        for j in model.chains[tip.link]:
            z = axis_w[j]
            if model.joints[j].kind == "revolute":
                Jx[:, j] = np.cross(z, x - joint_p[j])
                JR[:, j] = z
            else:
                Jx[:, j] = z
        tip_x.append(x)
        tip_R.append(R)
        tip_Jx.append(Jx)
        tip_JR.append(JR)
    return KinematicState(q.copy(), joint_R, joint_p, axis_w, tip_x, tip_R, tip_Jx, tip_JR)


def jacobians(model: RobotModel, q: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Per-fingertip (J_x, J_R); convenience wrapper over forward_kinematics."""
    st = forward_kinematics(model, q)
    return list(zip(st.tip_Jx, st.tip_JR))


def point_jacobian(model: RobotModel, state: KinematicState, link: int,
                   w: np.ndarray) -> np.ndarray:
    """3 x n Jacobian of a world point w rigidly attached to a link."""
    J = np.zeros((3, model.n))
    if link < 0:
        return J
    for j in model.chains[link]:
        z = state.joint_axis_w[j]
        if model.joints[j].kind == "revolute":
            J[:, j] = np.cross(z, w - state.joint_p[j])
        else:
            J[:, j] = z
    return J


# ---------------------------------------------------------------------------
# Collision distances
# ---------------------------------------------------------------------------

def _geom_world(g: CollisionGeom, state: KinematicState):
    """World-frame primitive: ('sphere', c, r) | ('capsule', a, b, r) | ('half', n, d)."""
    if g.type == "halfspace":
        return ("half", g.normal, g.offset)
    if g.link < 0:
        R, p = np.eye(3), np.zeros(3)
    else:
        R, p = state.joint_R[g.link], state.joint_p[g.link]
    if g.type == "sphere":
        return ("sphere", R @ g.center + p, g.radius)
    return ("capsule", R @ g.a + p, R @ g.b + p, g.radius)


def _closest_on_segment(a, b, p):
    d = b - a
    dd = float(d @ d)
    if dd < 1e-18:
        return a
    t = float((p - a) @ d) / dd
    return a + min(1.0, max(0.0, t)) * d


def _closest_segment_segment(p1, q1, p2, q2):
    d1 = q1 - p1
    d2 = q2 - p2
    r = p1 - p2
    a = float(d1 @ d1)
    e = float(d2 @ d2)
    f = float(d2 @ r)
    eps = 1e-18
    if a < eps and e < eps:
        return p1, p2
    if a < eps:
        s = 0.0
        t = min(1.0, max(0.0, f / e))
    else:
        c = float(d1 @ r)
        if e < eps:
            t = 0.0
            s = min(1.0, max(0.0, -c / a))
        else:
            b = float(d1 @ d2)
            denom = a * e - b * b
            s = min(1.0, max(0.0, (b * f - c * e) / denom)) if denom > eps else 0.0
            t = (b * s + f) / e
            if t < 0.0:
                t = 0.0
                s = min(1.0, max(0.0, -c / a))
            elif t > 1.0:
                t = 1.0
                s = min(1.0, max(0.0, (b - c) / a))
    return p1 + s * d1, p2 + t * d2


def _pair_distance(ga, gb):
    """(distance, witness_a, witness_b, unit a->b ... actually b->a direction)."""
    kinds = (ga[0], gb[0])
    if kinds == ("half", "half"):
        raise ValueError("halfspace-halfspace pairs are not meaningful")
    if ga[0] == "half":
        d, wb, wa, u = _pair_distance(gb, ga)
        return d, wa, wb, -u
    if gb[0] == "half":
        nrm, off = gb[1], gb[2]
        if ga[0] == "sphere":
            c, r = ga[1], ga[2]
            return float(nrm @ c) - off - r, c, c - nrm * (float(nrm @ c) - off), nrm
        a, b, r = ga[1], ga[2], ga[3]
        da, db = float(nrm @ a) - off, float(nrm @ b) - off
        w = a if da <= db else b
        d = min(da, db)
        return d - r, w, w - nrm * d, nrm
    if kinds == ("sphere", "sphere"):
        ca, ra = ga[1], ga[2]
        cb, rb = gb[1], gb[2]
        wa, wb = ca, cb
    elif kinds == ("sphere", "capsule"):
        ca, ra = ga[1], ga[2]
        wb = _closest_on_segment(gb[1], gb[2], ca)
        rb = gb[3]
        wa = ca
    elif kinds == ("capsule", "sphere"):
        cb, rb = gb[1], gb[2]
        wa = _closest_on_segment(ga[1], ga[2], cb)
        ra = ga[3]
        wb = cb
    else:
        wa, wb = _closest_segment_segment(ga[1], ga[2], gb[1], gb[2])
        ra, rb = ga[3], gb[3]
    diff = wa - wb
    dist = float(np.linalg.norm(diff))
    u = diff / dist if dist > 1e-12 else np.array([1.0, 0.0, 0.0])
    return dist - ra - rb, wa, wb, u


def _point_jac_row(model, axis_arr, p_arr, link, w, u):
    """Row u . d(w)/dq for a world point w attached to a link (vectorized)."""
    if link < 0:
        return 0.0
    rows = np.cross(axis_arr, w - p_arr) @ u          # revolute columns
    rows = np.where(model._revolute, rows, axis_arr @ u)
    return np.where(model._chain_mask[link], rows, 0.0)


def collision_values(model: RobotModel, q: np.ndarray,
                     state: KinematicState | None = None
                     ) -> tuple[np.ndarray, np.ndarray]:
    """Signed distances of all collision pairs and their gradient d(dist)/dq.

    Witness points are treated as frozen material points: by the envelope
    theorem this yields the exact derivative wherever the witness pair is
    unique; finite-difference agreement is therefore checked at 1e-4 rather
    than 1e-5.
    """
    if state is None:
        state = forward_kinematics(model, q)
    k = model.k
    gamma = np.zeros(k)
    dgamma = np.zeros((k, model.n))
    axis_arr = np.asarray(state.joint_axis_w)
    p_arr = np.asarray(state.joint_p)
    world = [_geom_world(g, state) for g in model.geoms]
    for i, (ia, ib) in enumerate(model.collision_pairs):
        gA, gB = model.geoms[ia], model.geoms[ib]
        dist, wa, wb, u = _pair_distance(world[ia], world[ib])
        gamma[i] = dist
        row = _point_jac_row(model, axis_arr, p_arr,
                             gA.link if gA.type != "halfspace" else -1, wa, u)
        row = row - _point_jac_row(model, axis_arr, p_arr,
                                   gB.link if gB.type != "halfspace" else -1, wb, u)
        dgamma[i] = row
    return gamma, dgamma


# ---------------------------------------------------------------------------
# JSON model loading (schema 1)
# ---------------------------------------------------------------------------

def _require(d: dict, key: str, ctx: str):
    if key not in d:
        raise SchemaError(f"{ctx} missing required field {key!r}")
    return d[key]


def _pose_from(d: dict | None, ctx: str) -> Pose:
    if d is None:
        return Pose.identity()
    return Pose.from_quat_xyzw(_require(d, "quaternion", ctx), _require(d, "translation", ctx))


def model_from_dict(doc: dict) -> RobotModel:
    schema = _require(doc, "schema", "robot model")
    if schema != SCHEMA_VERSION:
        raise SchemaError(f"robot model field 'schema' is {schema!r}; "
                          f"this build reads schema {SCHEMA_VERSION}")
    joints = []
    names = {}
    for i, jd in enumerate(_require(doc, "joints", "robot model")):
        ctx = f"joints[{i}]"
        kind = _require(jd, "kind", ctx)
        if kind not in ("revolute", "prismatic"):
            raise SchemaError(f"{ctx} field 'kind' must be revolute|prismatic, got {kind!r}")
        axis = np.asarray(_require(jd, "axis", ctx), dtype=float)
        na = np.linalg.norm(axis)
        if abs(na - 1.0) > 1e-6:
            raise SchemaError(f"{ctx} field 'axis' must be a unit vector")
        parent = jd.get("parent", i - 1)
        if parent >= i:
            raise SchemaError(f"{ctx} field 'parent' must precede the joint")
        joints.append(Joint(jd.get("name", f"j{i}"), kind, axis / na, parent,
                            _pose_from(jd.get("origin"), ctx)))
        names[joints[-1].name] = i

    n = len(joints)
    limits = {}
    for key in ("q_min", "q_max", "qd_min", "qd_max"):
        arr = np.asarray(_require(doc, key, "robot model"), dtype=float)
        if arr.shape != (n,):
            raise SchemaError(f"robot model field {key!r} must have length {n}")
        limits[key] = arr
    if np.any(limits["q_min"] >= limits["q_max"]):
        raise SchemaError("robot model field 'q_min' must be strictly below 'q_max'")

    tips = []
    for i, td in enumerate(_require(doc, "fingertips", "robot model")):
        ctx = f"fingertips[{i}]"
        link = _require(td, "link", ctx)
        link = names[link] if isinstance(link, str) else int(link)
        if not 0 <= link < n:
            raise SchemaError(f"{ctx} field 'link' out of range")
        radius = float(_require(td, "radius", ctx))
        if radius <= 0:
            raise SchemaError(f"{ctx} field 'radius' must be positive")
        rd = np.asarray(_require(td, "reference_direction", ctx), dtype=float)
        tips.append(Fingertip(td.get("name", f"tip{i}"), link,
                              _pose_from(td.get("offset"), ctx), radius,
                              rd / np.linalg.norm(rd)))

    geoms = []
    for i, gd in enumerate(doc.get("collision_geoms", [])):
        ctx = f"collision_geoms[{i}]"
        gtype = _require(gd, "type", ctx)
        gname = _require(gd, "name", ctx)
        if gtype == "sphere":
            link = gd.get("link", -1)
            link = names[link] if isinstance(link, str) else int(link)
            geoms.append(CollisionGeom(gname, "sphere", link,
                                       center=np.asarray(_require(gd, "center", ctx), dtype=float),
                                       radius=float(_require(gd, "radius", ctx))))
        elif gtype == "capsule":
            link = gd.get("link", -1)
            link = names[link] if isinstance(link, str) else int(link)
            geoms.append(CollisionGeom(gname, "capsule", link,
                                       a=np.asarray(_require(gd, "a", ctx), dtype=float),
                                       b=np.asarray(_require(gd, "b", ctx), dtype=float),
                                       radius=float(_require(gd, "radius", ctx))))
        elif gtype == "halfspace":
            nrm = np.asarray(_require(gd, "normal", ctx), dtype=float)
            geoms.append(CollisionGeom(gname, "halfspace",
                                       normal=nrm / np.linalg.norm(nrm),
                                       offset=float(gd.get("offset", 0.0))))
        else:
            raise SchemaError(f"{ctx} field 'type' must be sphere|capsule|halfspace")

    gnames = {g.name: i for i, g in enumerate(geoms)}
    pairs = []
    for i, pd in enumerate(doc.get("collision_pairs", [])):
        ctx = f"collision_pairs[{i}]"
        if len(pd) != 2:
            raise SchemaError(f"{ctx} must name exactly two geoms")
        try:
            pairs.append((gnames[pd[0]], gnames[pd[1]]))
        except KeyError as e:
            raise SchemaError(f"{ctx} references unknown geom {e.args[0]!r}") from e

    return RobotModel(doc.get("name", "robot"), joints, tips,
                      limits["q_min"], limits["q_max"],
                      limits["qd_min"], limits["qd_max"], geoms, pairs)


def load_model(path: str | Path) -> RobotModel:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise SchemaError(f"robot model JSON does not parse: {e}") from e
    return model_from_dict(doc)


def default_model() -> RobotModel:
    """The 15-DoF test model shipped with the package (7-DoF arm, two 4-DoF
    fingers). Link lengths are plausible but invented; this is not any
    specific hardware."""
    return load_model(Path(__file__).parent / "data" / "arm_hand_15dof.json")
