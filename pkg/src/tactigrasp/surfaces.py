"""Implicit-surface object models.

Each surface kind exposes an implicit function F with F < 0 inside, F = 0 on
the boundary, and F > 0 outside, together with outward normals (normalized
gradient), closest-point projection, and seeded random boundary sampling.
Box and cylinder use exact signed distance functions; ellipsoid, superquadric
and torus use standard inside-outside forms that are cheap to differentiate.

All public entry points take and return world-frame coordinates; the rigid
pose of the surface frame is applied internally.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateNormal, ProjectionDiverged, SchemaError

# Tolerances, relative to the characteristic object size.
TOL_SURFACE_REL = 1e-8
MAX_PROJ_ITERS = 100
_GRAD_EPS = 1e-9


def _unit(v: np.ndarray) -> np.ndarray:
    n = float(np.linalg.norm(v))
    if n < 1e-15:
        raise DegenerateNormal("cannot normalize near-zero vector")
    return v / n


@dataclass(frozen=True)
class Pose:
    """Rigid transform of the surface frame in the world frame."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    @staticmethod
    def identity() -> "Pose":
        return Pose()

    @staticmethod
    def from_quat_xyzw(quat, translation) -> "Pose":
        x, y, z, w = (float(q) for q in quat)
        n = math.sqrt(x * x + y * y + z * z + w * w)
        if n < 1e-12:
            raise SchemaError("pose.quaternion has near-zero norm")
        x, y, z, w = x / n, y / n, z / n, w / n
        R = np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
                [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
                [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
            ]
        )
        return Pose(R, np.asarray(translation, dtype=float).reshape(3))

    @staticmethod
    def from_axis_angle(axis, angle: float, translation=(0.0, 0.0, 0.0)) -> "Pose":
        axis = _unit(np.asarray(axis, dtype=float))
        half = 0.5 * float(angle)
        x, y, z = math.sin(half) * axis
        return Pose.from_quat_xyzw((x, y, z, math.cos(half)), translation)

    def to_quat_xyzw(self) -> tuple[list[float], list[float]]:
        """Return (quaternion [x,y,z,w], translation) for serialization."""
        R = self.rotation
        tr = R[0, 0] + R[1, 1] + R[2, 2]
        if tr > 0:
            s = math.sqrt(tr + 1.0) * 2
            w = 0.25 * s
            x = (R[2, 1] - R[1, 2]) / s
            y = (R[0, 2] - R[2, 0]) / s
            z = (R[1, 0] - R[0, 1]) / s
        elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
            s = math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2
            w = (R[2, 1] - R[1, 2]) / s
            x = 0.25 * s
            y = (R[0, 1] + R[1, 0]) / s
            z = (R[0, 2] + R[2, 0]) / s
        elif R[1, 1] > R[2, 2]:
            s = math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2]) * 2
            w = (R[0, 2] - R[2, 0]) / s
            x = (R[0, 1] + R[1, 0]) / s
            y = 0.25 * s
            z = (R[1, 2] + R[2, 1]) / s
        else:
            s = math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1]) * 2
            w = (R[1, 0] - R[0, 1]) / s
            x = (R[0, 2] + R[2, 0]) / s
            y = (R[1, 2] + R[2, 1]) / s
            z = 0.25 * s
        return [x, y, z, w], [float(v) for v in self.translation]

    def world_to_local(self, p: np.ndarray) -> np.ndarray:
        return self.rotation.T @ (np.asarray(p, dtype=float) - self.translation)

    def local_to_world(self, p: np.ndarray) -> np.ndarray:
        return self.rotation @ np.asarray(p, dtype=float) + self.translation

    def rotate_to_world(self, v: np.ndarray) -> np.ndarray:
        return self.rotation @ np.asarray(v, dtype=float)

    def compose(self, other: "Pose") -> "Pose":
        """self then other applied on top (other ∘ self)."""
        return Pose(other.rotation @ self.rotation,
                    other.rotation @ self.translation + other.translation)


@dataclass(frozen=True)
class SurfacePoint:
    """A point on an object boundary with its outward unit normal (world frame)."""

    position: np.ndarray
    outward_normal: np.ndarray


class Surface:
    """Base class: a rigid implicit surface placed in the world by a pose."""

    kind = "surface"

    def __init__(self, pose: Pose | None = None):
        self.pose = pose if pose is not None else Pose.identity()

    # -- local-frame interface implemented by subclasses ------------------

    def _implicit_local(self, p: np.ndarray) -> float:
        raise NotImplementedError

    def _gradient_local(self, p: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def char_size(self) -> float:
        """Characteristic length used to scale tolerances and step sizes."""
        raise NotImplementedError

    def bounding_radius(self) -> float:
        """Radius of a local-frame sphere that contains the surface."""
        raise NotImplementedError

    def _params_dict(self) -> dict:
        raise NotImplementedError

    # -- world-frame API ---------------------------------------------------

    @property
    def tol_surface(self) -> float:
        return TOL_SURFACE_REL * self.char_size()

    def implicit_value(self, p: np.ndarray) -> float:
        return self._implicit_local(self.pose.world_to_local(p))

    def outward_normal(self, p: np.ndarray) -> np.ndarray:
        g = self._gradient_local(self.pose.world_to_local(p))
        n = float(np.linalg.norm(g))
        if n < _GRAD_EPS:
            raise DegenerateNormal(
                f"gradient norm {n:.2e} below {_GRAD_EPS} on {self.kind}")
        return self.pose.rotate_to_world(g / n)

    def project(self, p: np.ndarray) -> SurfacePoint:
        local = self._project_local(self.pose.world_to_local(p))
        pos = self.pose.local_to_world(local)
        return SurfacePoint(pos, self.outward_normal(pos))

    def sample_surface(self, rng) -> SurfacePoint:
        """Seeded boundary sample: a random bounding-sphere point pushed
        through the closest-point projection (not area-uniform)."""
        rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
        d = rng.normal(size=3)
        while np.linalg.norm(d) < 1e-12:
            d = rng.normal(size=3)
        start = self.pose.local_to_world(1.2 * self.bounding_radius() * d / np.linalg.norm(d))
        return self.project(start)

    # -- generic projection (subclasses with closed forms override) -------

    def _project_local(self, p: np.ndarray) -> np.ndarray:
        tol = self.tol_surface
        char = self.char_size()
        x = self._newton_to_surface(np.array(p, dtype=float), tol, char)
        # Foot-point refinement: slide tangentially toward p, keeping |F| <= tol.
        # The closest point satisfies (p - x) parallel to the normal.
        best = x
        best_d = float(np.linalg.norm(p - x))
        for _ in range(MAX_PROJ_ITERS):
            g = self._gradient_local(x)
            gn = float(np.linalg.norm(g))
            if gn < _GRAD_EPS:
                break
            n = g / gn
            r = p - x
            t = r - n * float(r @ n)
            tn = float(np.linalg.norm(t))
            if tn < 1e-10 * char:
                break
            scale = 1.0
            moved = False
            for _ in range(6):
                cand = self._newton_to_surface(x + scale * t, tol, char)
                if float(np.linalg.norm(p - cand)) <= best_d + 1e-14 * char:
                    x = cand
                    d = float(np.linalg.norm(p - x))
                    if d < best_d:
                        best, best_d = x, d
                    moved = True
                    break
                scale *= 0.5
            if not moved:
                break
        return best

    def _newton_to_surface(self, x: np.ndarray, tol: float, char: float) -> np.ndarray:
        """Damped Newton walk along the gradient onto the F = 0 level set.

        Steps larger than a fraction of the object size are halved rather
        than hard-clamped, so convergence from far away stays geometric."""
        x = np.array(x, dtype=float)
        for _ in range(MAX_PROJ_ITERS):
            f = self._implicit_local(x)
            if abs(f) <= tol:
                return x
            g = self._gradient_local(x)
            g2 = float(g @ g)
            if g2 < 1e-18:
                # Degenerate interior point (e.g. torus tube center): nudge and retry.
                x = x + np.array([1e-3 * char, 0.0, 0.0])
                continue
            step = -(f / g2) * g
            sn = float(np.linalg.norm(step))
            limit = max(0.25 * char, 0.5 * sn)
            if sn > limit:
                step *= limit / sn
            x = x + step
        raise ProjectionDiverged(
            f"|F| = {abs(self._implicit_local(x)):.3e} > {tol:.3e} "
            f"after {MAX_PROJ_ITERS} Newton iterations on {self.kind}")

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        quat, trans = self.pose.to_quat_xyzw()
        d = {"kind": self.kind}
        d.update(self._params_dict())
        d["pose"] = {"translation": trans, "quaternion": quat}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


class Ellipsoid(Surface):
    """Axis-aligned ellipsoid: sum((x_k / a_k)^2) - 1."""

    kind = "ellipsoid"

    def __init__(self, a1: float, a2: float, a3: float, pose: Pose | None = None):
        super().__init__(pose)
        if min(a1, a2, a3) <= 0:
            raise ValueError("ellipsoid semi-axes must be positive")
        self.a = np.array([a1, a2, a3], dtype=float)

    def _implicit_local(self, p):
        q = p / self.a
        return float(q @ q) - 1.0

    def _gradient_local(self, p):
        return 2.0 * p / (self.a * self.a)

    def char_size(self):
        return float(np.max(self.a))

    def bounding_radius(self):
        return float(np.max(self.a))

    def _params_dict(self):
        return {"a1": self.a[0], "a2": self.a[1], "a3": self.a[2]}


class Superquadric(Surface):
    """Superquadric inside-outside function.

    F = (|x/a1|^(2/e2) + |y/a2|^(2/e2))^(e2/e1) + |z/a3|^(2/e1) - 1

    Exponents are restricted to (0.1, 2.0] to keep normals finite away from
    the coordinate planes; e1 = e2 = 1 reproduces the ellipsoid exactly.
    """

    kind = "superquadric"

    def __init__(self, a1, a2, a3, e1, e2, pose: Pose | None = None):
        super().__init__(pose)
        if min(a1, a2, a3) <= 0:
            raise ValueError("superquadric semi-axes must be positive")
        if not (0.1 < e1 <= 2.0 and 0.1 < e2 <= 2.0):
            raise ValueError("superquadric exponents must lie in (0.1, 2.0]")
        self.a = np.array([a1, a2, a3], dtype=float)
        self.e1 = float(e1)
        self.e2 = float(e2)

    def _implicit_local(self, p):
        ax, ay, az = self.a
        gxy = abs(p[0] / ax) ** (2.0 / self.e2) + abs(p[1] / ay) ** (2.0 / self.e2)
        return gxy ** (self.e2 / self.e1) + abs(p[2] / az) ** (2.0 / self.e1) - 1.0

    def _gradient_local(self, p):
        ax, ay, az = self.a
        e1, e2 = self.e1, self.e2
        ux, uy, uz = abs(p[0]) / ax, abs(p[1]) / ay, abs(p[2]) / az
        gxy = ux ** (2.0 / e2) + uy ** (2.0 / e2)
        g = np.zeros(3)
        if gxy > 1e-300:
            outer = (e2 / e1) * gxy ** (e2 / e1 - 1.0)
            g[0] = outer * (2.0 / e2) * ux ** (2.0 / e2 - 1.0) * np.sign(p[0]) / ax
            g[1] = outer * (2.0 / e2) * uy ** (2.0 / e2 - 1.0) * np.sign(p[1]) / ay
        g[2] = (2.0 / e1) * uz ** (2.0 / e1 - 1.0) * np.sign(p[2]) / az
        return g

    def char_size(self):
        return float(np.max(self.a))

    def bounding_radius(self):
        # Contained in the box [-a1,a1] x [-a2,a2] x [-a3,a3] for e <= 2.
        return float(np.linalg.norm(self.a))

    def _params_dict(self):
        return {"a1": self.a[0], "a2": self.a[1], "a3": self.a[2],
                "e1": self.e1, "e2": self.e2}


class Torus(Surface):
    """Torus around the local z axis: (sqrt(x^2 + y^2) - R)^2 + z^2 - r^2."""

    kind = "torus"

    def __init__(self, major_radius: float, minor_radius: float, pose: Pose | None = None):
        super().__init__(pose)
        if not (major_radius > minor_radius > 0):
            raise ValueError("torus requires R > r > 0")
        self.R = float(major_radius)
        self.r = float(minor_radius)

    def _implicit_local(self, p):
        rho = math.hypot(p[0], p[1])
        return (rho - self.R) ** 2 + p[2] ** 2 - self.r ** 2

    def _gradient_local(self, p):
        rho = math.hypot(p[0], p[1])
        if rho < 1e-12:
            return np.zeros(3)  # on the symmetry axis; caught by the norm guard
        k = 2.0 * (rho - self.R) / rho
        return np.array([k * p[0], k * p[1], 2.0 * p[2]])

    def char_size(self):
        return self.R + self.r

    def bounding_radius(self):
        return self.R + self.r

    def _project_local(self, p):
        rho = math.hypot(p[0], p[1])
        if rho < 1e-12:
            ring_dir = np.array([1.0, 0.0, 0.0])  # axis point: azimuth non-unique
        else:
            ring_dir = np.array([p[0] / rho, p[1] / rho, 0.0])
        ring = self.R * ring_dir
        d = p - ring
        dn = float(np.linalg.norm(d))
        if dn < 1e-12:
            d, dn = ring_dir, 1.0  # tube center: radial direction non-unique
        return ring + self.r * d / dn

    def _params_dict(self):
        return {"R": self.R, "r": self.r}


class Box(Surface):
    """Axis-aligned box (exact SDF) with half-extents (hx, hy, hz)."""

    kind = "box"

    def __init__(self, hx: float, hy: float, hz: float, pose: Pose | None = None):
        super().__init__(pose)
        if min(hx, hy, hz) <= 0:
            raise ValueError("box half-extents must be positive")
        self.h = np.array([hx, hy, hz], dtype=float)

    def _implicit_local(self, p):
        q = np.abs(p) - self.h
        outside = float(np.linalg.norm(np.maximum(q, 0.0)))
        inside = float(min(np.max(q), 0.0))
        return outside + inside

    def _gradient_local(self, p):
        q = np.abs(p) - self.h
        if np.any(q > 0):
            v = np.sign(p) * np.maximum(q, 0.0)
            n = float(np.linalg.norm(v))
            return v / n if n > 0 else np.zeros(3)
        # Inside or on a face: active face = largest q term; ties pick the
        # lexicographically first axis (np.argmax convention).
        k = int(np.argmax(q))
        n = np.zeros(3)
        n[k] = 1.0 if p[k] >= 0 else -1.0
        return n

    def char_size(self):
        return float(np.max(self.h))

    def bounding_radius(self):
        return float(np.linalg.norm(self.h))

    def _project_local(self, p):
        q = np.abs(p) - self.h
        if np.any(q > 0):
            return np.clip(p, -self.h, self.h)
        k = int(np.argmax(q))
        out = np.array(p, dtype=float)
        out[k] = self.h[k] if p[k] >= 0 else -self.h[k]
        return out

    def _params_dict(self):
        return {"hx": self.h[0], "hy": self.h[1], "hz": self.h[2]}


class Cylinder(Surface):
    """Capped cylinder (exact SDF) along the local z axis."""

    kind = "cylinder"

    def __init__(self, radius: float, half_height: float, pose: Pose | None = None):
        super().__init__(pose)
        if radius <= 0 or half_height <= 0:
            raise ValueError("cylinder radius and half-height must be positive")
        self.radius = float(radius)
        self.half_height = float(half_height)

    def _implicit_local(self, p):
        dr = math.hypot(p[0], p[1]) - self.radius
        dz = abs(p[2]) - self.half_height
        outside = math.hypot(max(dr, 0.0), max(dz, 0.0))
        return outside + min(max(dr, dz), 0.0)

    def _gradient_local(self, p):
        rho = math.hypot(p[0], p[1])
        dr = rho - self.radius
        dz = abs(p[2]) - self.half_height
        radial = (np.array([p[0] / rho, p[1] / rho, 0.0]) if rho > 1e-12
                  else np.zeros(3))
        zdir = np.array([0.0, 0.0, 1.0 if p[2] >= 0 else -1.0])
        if dr > 0 or dz > 0:
            v = max(dr, 0.0) * radial + max(dz, 0.0) * zdir
            n = float(np.linalg.norm(v))
            return v / n if n > 0 else np.zeros(3)
        # Inside or on the boundary: lateral face wins ties deterministically.
        return radial if dr >= dz else zdir

    def char_size(self):
        return max(self.radius, self.half_height)

    def bounding_radius(self):
        return math.hypot(self.radius, self.half_height)

    def _project_local(self, p):
        rho = math.hypot(p[0], p[1])
        radial = (np.array([p[0] / rho, p[1] / rho, 0.0]) if rho > 1e-12
                  else np.array([1.0, 0.0, 0.0]))
        zs = 1.0 if p[2] >= 0 else -1.0
        dr = rho - self.radius
        dz = abs(p[2]) - self.half_height
        if dr > 0 and dz > 0:
            return self.radius * radial + np.array([0.0, 0.0, zs * self.half_height])
        if dr > 0:
            return self.radius * radial + np.array([0.0, 0.0, p[2]])
        if dz > 0:
            return np.array([p[0], p[1], zs * self.half_height])
        if -dr <= -dz:  # closer to the lateral surface (tie -> lateral)
            return self.radius * radial + np.array([0.0, 0.0, p[2]])
        return np.array([p[0], p[1], zs * self.half_height])

    def _params_dict(self):
        return {"radius": self.radius, "half_height": self.half_height}


_KINDS = {
    "ellipsoid": (Ellipsoid, ("a1", "a2", "a3")),
    "superquadric": (Superquadric, ("a1", "a2", "a3", "e1", "e2")),
    "torus": (Torus, ("R", "r")),
    "box": (Box, ("hx", "hy", "hz")),
    "cylinder": (Cylinder, ("radius", "half_height")),
}


def surface_from_dict(d: dict) -> Surface:
    """Build a surface from its JSON object form; raises SchemaError on problems."""
    if "kind" not in d:
        raise SchemaError("surface object missing required field 'kind'")
    kind = d["kind"]
    if kind not in _KINDS:
        raise SchemaError(f"unknown surface kind {kind!r}; "
                          f"expected one of {sorted(_KINDS)}")
    cls, fields = _KINDS[kind]
    args = []
    for name in fields:
        if name not in d:
            raise SchemaError(f"surface kind {kind!r} missing field {name!r}")
        args.append(float(d[name]))
    pose = Pose.identity()
    if "pose" in d and d["pose"] is not None:
        pd = d["pose"]
        for name in ("translation", "quaternion"):
            if name not in pd:
                raise SchemaError(f"surface pose missing field {name!r}")
        pose = Pose.from_quat_xyzw(pd["quaternion"], pd["translation"])
    try:
        return cls(*args, pose=pose)
    except ValueError as e:
        raise SchemaError(f"invalid {kind} parameters: {e}") from e


def surface_from_json(text: str) -> Surface:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as e:
        raise SchemaError(f"surface JSON does not parse: {e}") from e
    return surface_from_dict(d)
