"""Standalone contact-point descent experiments on implicit surfaces.

Two surface points are iterated with PGD or CFGD steps: compute pressing
normals from the surface, move each point a bounded step along its tangent
direction, re-project onto the boundary, refresh normals. Outcomes are
classified as converged (antipodal within tolerance), stalled at a local
minimum, stalled at the right-angle failure geometry, or out of budget.

Step rule: a fixed step length along the normalized direction, linearly
tapered once the direction magnitude falls below a small fraction of its
natural scale (1 / object size). The taper makes stalls detectable: near a
cancellation or failure configuration the movement shrinks with the
direction, so the stall test on per-iteration movement can fire. Without it,
fixed-length steps orbit minima forever and every stuck run would exhaust
the iteration budget instead of reporting a stall.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import AngleSingular
from .stability import StabilityEval, _directions_raw, _phi_raw
from .surfaces import Ellipsoid, Superquadric, Surface, SurfacePoint, Torus


class Method(str, Enum):
    PGD = "pgd"
    CFGD = "cfgd"


class DescentStatus(str, Enum):
    CONVERGED = "converged"
    LOCAL_MINIMUM = "local_minimum"
    RIGHT_ANGLE_FAILURE = "right_angle_failure"
    ITER_LIMIT = "iter_limit"


# Fraction of the natural direction scale (1/char_size) below which steps
# shrink proportionally with the direction magnitude.
TAPER_FRACTION = 0.05
ZERO_DIR = 1e-12
# Near convergence the step is additionally capped at this multiple of
# (residual angle) * (contact separation), so iterates land inside the
# convergence ball instead of orbiting it. Matters for grasps whose
# separation is much smaller than the object size (e.g. across a torus tube).
ANGLE_STEP_CAP = 0.25


@dataclass
class DescentConfig:
    method: Method = Method.CFGD
    step_size: float | None = None      # default 0.01 * char_size
    max_iters: int = 800
    converge_tol: float = math.radians(2.0)   # threshold on f = phi1 + phi2
    stall_tol: float | None = None      # default 1e-6 * char_size
    right_angle_tol: float = math.radians(3.0)
    seed: int = 0

    def resolved(self, surface: Surface) -> "DescentConfig":
        char = surface.char_size()
        return DescentConfig(
            method=Method(self.method),
            step_size=self.step_size if self.step_size is not None else 0.01 * char,
            max_iters=self.max_iters,
            converge_tol=self.converge_tol,
            stall_tol=self.stall_tol if self.stall_tol is not None else 1e-6 * char,
            right_angle_tol=self.right_angle_tol,
            seed=self.seed,
        )


@dataclass
class DescentOutcome:
    status: DescentStatus
    final: StabilityEval
    iters: int
    final_c1: np.ndarray
    final_c2: np.ndarray
    final_n1: np.ndarray
    final_n2: np.ndarray
    trajectory: list[tuple[np.ndarray, np.ndarray, float, float]] | None = None


def run_descent(surface: Surface, init1: SurfacePoint, init2: SurfacePoint,
                cfg: DescentConfig, record_trajectory: bool = False) -> DescentOutcome:
    cfg = cfg.resolved(surface)
    char = surface.char_size()
    taper_scale = TAPER_FRACTION / char

    c1 = np.array(init1.position, dtype=float)
    c2 = np.array(init2.position, dtype=float)
    n1 = -np.asarray(init1.outward_normal, dtype=float)
    n2 = -np.asarray(init2.outward_normal, dtype=float)

    traj: list | None = [] if record_trajectory else None
    is_pgd = cfg.method == Method.PGD
    phi1, phi2, sep = _phi_raw(c1, c2, n1, n2)

    for it in range(cfg.max_iters):
        phi1, phi2, sep = _phi_raw(c1, c2, n1, n2)
        f = phi1 + phi2
        if traj is not None:
            traj.append((c1.copy(), c2.copy(), phi1, phi2))
        if f < cfg.converge_tol:
            return _outcome(DescentStatus.CONVERGED, phi1, phi2, it, c1, c2, n1, n2, traj)
        try:
            d1, d2 = _directions_raw(is_pgd, c1, c2, n1, n2)
        except AngleSingular:
            # phi at exactly pi (the near-0 side converges first): nudge one
            # point tangentially and keep going; deterministic per iteration.
            t = _any_tangent(n1)
            c1 = surface.project(c1 + 1e-3 * char * t).position
            n1 = -surface.outward_normal(c1)
            continue

        cap = max(cfg.step_size * 1e-4, ANGLE_STEP_CAP * f * sep)
        c1, n1, m1 = _step_point(surface, c1, d1, cfg.step_size, taper_scale, cap)
        c2, n2, m2 = _step_point(surface, c2, d2, cfg.step_size, taper_scale, cap)
        if max(m1, m2) < cfg.stall_tol:
            phi1, phi2, sep = _phi_raw(c1, c2, n1, n2)
            status = _classify_stall(phi1, phi2, cfg)
            return _outcome(status, phi1, phi2, it + 1, c1, c2, n1, n2, traj)

    return _outcome(DescentStatus.ITER_LIMIT, phi1, phi2, cfg.max_iters, c1, c2, n1, n2, traj)


def _outcome(status, phi1, phi2, iters, c1, c2, n1, n2, traj) -> DescentOutcome:
    ev = StabilityEval(phi1, phi2, phi1 + phi2, math.degrees(0.5 * (phi1 + phi2)))
    return DescentOutcome(status, ev, iters, c1, c2, n1, n2, traj)


def _step_point(surface, c, d, step_size, taper_scale, cap):
    dn = float(np.linalg.norm(d))
    if dn < ZERO_DIR:
        return c, -surface.outward_normal(c), 0.0
    length = min(step_size * min(1.0, dn / taper_scale), cap)
    sp = surface.project(c + (length / dn) * d)
    movement = float(np.linalg.norm(sp.position - c))
    return sp.position, -sp.outward_normal, movement


def _classify_stall(phi1: float, phi2: float, cfg: DescentConfig) -> DescentStatus:
    half_pi = 0.5 * math.pi
    if (abs(phi1 - half_pi) < cfg.right_angle_tol
            and abs(phi2 - half_pi) < cfg.right_angle_tol):
        return DescentStatus.RIGHT_ANGLE_FAILURE
    return DescentStatus.LOCAL_MINIMUM


def _any_tangent(n: np.ndarray) -> np.ndarray:
    k = int(np.argmin(np.abs(n)))
    e = np.zeros(3)
    e[k] = 1.0
    t = np.cross(n, e)
    return t / np.linalg.norm(t)


# ---------------------------------------------------------------------------
# Randomized shape campaign (convergence-rate table)
# ---------------------------------------------------------------------------

DEFAULT_SHAPE_RANGES = {
    "ellipsoid": {"axes": (0.5, 2.0)},
    "superquadric": {"axes": (0.5, 2.0), "exponents": (0.3, 1.8)},
    "torus": {"major": (1.0, 2.0), "minor_frac": (0.2, 0.45)},
}


def sample_shape(family: str, rng: np.random.Generator,
                 ranges: dict | None = None) -> Surface:
    ranges = ranges or DEFAULT_SHAPE_RANGES
    r = ranges[family]
    if family == "ellipsoid":
        a = rng.uniform(*r["axes"], size=3)
        return Ellipsoid(*a)
    if family == "superquadric":
        a = rng.uniform(*r["axes"], size=3)
        e = rng.uniform(*r["exponents"], size=2)
        return Superquadric(a[0], a[1], a[2], e[0], e[1])
    if family == "torus":
        R = rng.uniform(*r["major"])
        minor = rng.uniform(r["minor_frac"][0], r["minor_frac"][1] * R)
        return Torus(R, minor)
    raise ValueError(f"unknown shape family {family!r}")


@dataclass
class TrialRow:
    family: str
    trial: int
    shape_params: dict
    method: str
    status: str
    final_f_rad: float
    iters: int
    seed: int
    final_c1: np.ndarray = field(repr=False, default=None)
    final_c2: np.ndarray = field(repr=False, default=None)
    final_n1: np.ndarray = field(repr=False, default=None)
    final_n2: np.ndarray = field(repr=False, default=None)


def run_table1(n_trials: int, cfg: DescentConfig, rng_seed: int,
               families: tuple[str, ...] = ("ellipsoid", "superquadric", "torus"),
               shape_ranges: dict | None = None) -> tuple[list[TrialRow], dict]:
    """Paired PGD/CFGD convergence-rate experiment over random shapes.

    Both methods run from identical shapes and identical initial surface
    points; each trial owns an RNG stream derived from (rng_seed, family,
    trial), so results do not depend on execution order.
    """
    rows: list[TrialRow] = []
    rates: dict[str, dict[str, float]] = {}
    for fi, family in enumerate(families):
        converged = {Method.PGD: 0, Method.CFGD: 0}
        for t in range(n_trials):
            ss = np.random.SeedSequence(entropy=rng_seed, spawn_key=(fi, t))
            rng = np.random.default_rng(ss)
            surface = sample_shape(family, rng, shape_ranges)
            p1 = surface.sample_surface(rng)
            p2 = surface.sample_surface(rng)
            while np.linalg.norm(p2.position - p1.position) < 1e-3 * surface.char_size():
                p2 = surface.sample_surface(rng)
            for method in (Method.PGD, Method.CFGD):
                run_cfg = DescentConfig(
                    method=method, step_size=cfg.step_size, max_iters=cfg.max_iters,
                    converge_tol=cfg.converge_tol, stall_tol=cfg.stall_tol,
                    right_angle_tol=cfg.right_angle_tol, seed=rng_seed)
                out = run_descent(surface, p1, p2, run_cfg)
                if out.status == DescentStatus.CONVERGED:
                    converged[method] += 1
                rows.append(TrialRow(
                    family=family, trial=t, shape_params=surface._params_dict(),
                    method=method.value, status=out.status.value,
                    final_f_rad=out.final.f, iters=out.iters, seed=rng_seed,
                    final_c1=out.final_c1, final_c2=out.final_c2,
                    final_n1=out.final_n1, final_n2=out.final_n2))
        rates[family] = {m.value: converged[m] / n_trials for m in (Method.PGD, Method.CFGD)}
    return rows, rates
