"""Hierarchical tactile-reactive grasp controller.

Two alternating modes drive the fingertips from tactile input alone:
closing (move toward the fingertip centroid, then along latched pressing
normals once touched) and adjustment (tangent-space descent of the
two-finger stability angles, plus a fingertip rotation that keeps the
contact inside the sensing cone). A joint-space QP tracks the commanded
fingertip velocities under collision, position and velocity constraints.
The controller terminates in a stable mode once all fingertips are in
contact and the stability sum stays below threshold for a debounce window.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from enum import Enum

import numpy as np

from .errors import AngleSingular, CentroidDegenerate, ZeroVector
from .kinematics import KinematicState, RobotModel, collision_values
from .qp import QpSolver, QpStatus, assemble_tracking_qp
from .stability import ContactPair, StabilityEval, cfgd_direction, evaluate, pgd_direction


class Mode(str, Enum):
    CLOSING = "closing"
    ADJUSTING = "adjusting"
    STABLE = "stable"


@dataclass
class ContactState:
    """One fingertip's tactile sample: flag, contact point, pressing normal."""
    in_contact: bool
    c: np.ndarray | None = None
    n: np.ndarray | None = None


@dataclass
class ControllerParams:
    v_close: float = 0.05            # m/s, closing speed
    v_adjust: float = 0.04           # m/s, tangential adjustment speed
    v_normal_bleed: float = 0.0      # m/s, retreat along the pressing normal
    w_rotate: float = 1.0            # rad/s, cone-correction speed
    cone_delta: float = math.radians(45.0)   # valid-contact cone half-angle
    f_stable: float = math.radians(20.0)     # threshold on phi1 + phi2
    horizon: float = 0.1             # s, constraint linearization horizon
    eps_gamma: float = 0.005         # m, collision safety margin
    method: str = "cfgd"             # "pgd" | "cfgd"
    sensor_rate: int = 200           # Hz
    control_rate: int = 200          # Hz
    n_hold: int = 5                  # consecutive stable samples before stopping
    angular_weight: float = 1.0      # orientation-term weight when alpha = 1
    qp_tol: float = 1e-6
    qp_max_iters: int = 4000

    def __post_init__(self):
        if min(self.v_close, self.v_adjust, self.w_rotate) < 0 or self.v_normal_bleed < 0:
            raise ValueError("speeds must be nonnegative")
        if not 0 < self.cone_delta < math.pi / 2:
            raise ValueError("cone_delta must lie in (0, pi/2)")
        if self.f_stable <= 0:
            raise ValueError("f_stable must be positive")
        if self.control_rate > self.sensor_rate:
            raise ValueError("control_rate must not exceed sensor_rate")
        if self.method not in ("pgd", "cfgd"):
            raise ValueError("method must be 'pgd' or 'cfgd'")

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(d: dict) -> "ControllerParams":
        return ControllerParams(**d)

    @staticmethod
    def from_json(text: str) -> "ControllerParams":
        return ControllerParams.from_dict(json.loads(text))


@dataclass
class FingertipCommand:
    linear: np.ndarray
    angular: np.ndarray
    alpha: int


@dataclass
class ControllerState:
    mode: Mode = Mode.CLOSING
    latched_normals: list = field(default_factory=lambda: [None, None])
    last_sensor: list | None = None
    stability: StabilityEval | None = None
    theta: list = field(default_factory=lambda: [float("nan"), float("nan")])
    hold_count: int = 0
    fail_count: int = 0
    last_qdot: np.ndarray | None = None
    qp_warm_x: np.ndarray | None = None
    qp_warm_y: np.ndarray | None = None
    last_qp_status: str = ""
    last_qp_iters: int = 0


def _sensor_stability(sensor) -> StabilityEval | None:
    try:
        cp = ContactPair(sensor[0].c, sensor[1].c, sensor[0].n, sensor[1].n)
        return evaluate(cp)
    except (ValueError, ZeroVector):
        return None


def step_mode(state: ControllerState, sensor, params: ControllerParams) -> Mode:
    """Advance the discrete mode. Stable is terminal; contact loss reverts to
    closing; all-contact with a sustained stable reading terminates."""
    if state.mode == Mode.STABLE:
        return Mode.STABLE
    if not all(cs.in_contact for cs in sensor):
        state.hold_count = 0
        state.stability = None
        return Mode.CLOSING
    ev = _sensor_stability(sensor)
    state.stability = ev
    if ev is not None and ev.f < params.f_stable:
        state.hold_count += 1
        if state.hold_count >= params.n_hold:
            return Mode.STABLE
    else:
        state.hold_count = 0
    return Mode.ADJUSTING


def closing_velocities(state: ControllerState, tip_positions,
                       params: ControllerParams) -> list[FingertipCommand]:
    """Centroid-directed closing; fingertips that have touched this phase
    keep pressing along their latched normals."""
    xs = [np.asarray(x, dtype=float) for x in tip_positions]
    centroid = np.mean(xs, axis=0)
    cmds = []
    for i, x in enumerate(xs):
        latched = state.latched_normals[i]
        if latched is not None:
            lin = params.v_close * latched
        else:
            d = centroid - x
            nd = float(np.linalg.norm(d))
            if nd < 1e-9:
                raise CentroidDegenerate(f"fingertip {i} coincides with the centroid")
            lin = params.v_close * d / nd
        cmds.append(FingertipCommand(lin, np.zeros(3), 0))
    return cmds


def rotate_to_cone(x, R, r_local, c, params: ControllerParams):
    """Cone angle between the reference pad direction and the contact
    direction, and the angular velocity that shrinks it.

    The command W * normalize(u x v) is exactly the negative rotation-group
    gradient of the angle: perturbing the fingertip rotation by delta changes
    cos(theta) by delta . (u x v), so d(theta)/d(delta) = -normalize(u x v).
    Antiparallel u, v (axis undefined) fall back to a deterministic
    perpendicular axis.
    """
    x = np.asarray(x, dtype=float)
    c = np.asarray(c, dtype=float)
    v = c - x
    nv = float(np.linalg.norm(v))
    if nv < 1e-9:
        raise ValueError("contact point coincides with the fingertip center")
    vh = v / nv
    u = np.asarray(R, dtype=float) @ np.asarray(r_local, dtype=float)
    u = u / np.linalg.norm(u)
    theta = math.acos(min(1.0, max(-1.0, float(u @ vh))))
    if theta < 1e-9:
        return theta, np.zeros(3)
    axis = np.cross(u, vh)
    na = float(np.linalg.norm(axis))
    if na < 1e-9:
        # Antiparallel: any perpendicular axis reduces theta; pick the one
        # built from the least-aligned basis vector for determinism.
        k = int(np.argmin(np.abs(u)))
        e = np.zeros(3)
        e[k] = 1.0
        axis = np.cross(u, e)
        na = float(np.linalg.norm(axis))
    return theta, params.w_rotate * axis / na


def adjustment_velocities(state: ControllerState, kin: KinematicState,
                          model: RobotModel,
                          params: ControllerParams) -> list[FingertipCommand]:
    """Tangential descent of the stability angles plus the cone-correcting
    rotation; the normal-bleed term retreats along each pressing normal."""
    sensor = state.last_sensor
    cp = ContactPair(sensor[0].c, sensor[1].c, sensor[0].n, sensor[1].n)
    try:
        if params.method == "pgd":
            dirs = pgd_direction(cp)
        else:
            dirs = cfgd_direction(cp)
    except AngleSingular:
        dirs = (np.zeros(3), np.zeros(3))  # at/near antipodal: nothing to adjust
    cmds = []
    for i in range(2):
        d = dirs[i]
        nd = float(np.linalg.norm(d))
        tangential = params.v_adjust * d / nd if nd > 1e-12 else np.zeros(3)
        lin = tangential - params.v_normal_bleed * sensor[i].n
        tip = model.fingertips[i]
        theta, omega = rotate_to_cone(kin.tip_x[i], kin.tip_R[i],
                                      tip.reference_direction, sensor[i].c, params)
        state.theta[i] = theta
        alpha = 1 if theta > params.cone_delta else 0
        cmds.append(FingertipCommand(lin, omega, alpha))
    return cmds


def reach_velocity(x1, x2, x_star) -> np.ndarray:
    """Common fingertip velocity that drives the tip midpoint to the target."""
    mid = 0.5 * (np.asarray(x1, dtype=float) + np.asarray(x2, dtype=float))
    return np.asarray(x_star, dtype=float) - mid


class ReflexController:
    """Single-owner controller: one instance per simulated robot."""

    def __init__(self, model: RobotModel, params: ControllerParams):
        self.model = model
        self.params = params
        self.state = ControllerState()
        self.solver = QpSolver()

    def reset(self):
        self.state = ControllerState()

    def control_tick(self, sensor, kin: KinematicState) -> np.ndarray:
        """One sensor-sample-to-joint-velocity update."""
        st = self.state
        params = self.params
        prev_mode = st.mode
        st.mode = step_mode(st, sensor, params)
        st.last_sensor = sensor

        if st.mode == Mode.CLOSING:
            if prev_mode != Mode.CLOSING:
                st.latched_normals = [None, None]  # new closing phase
            for i, cs in enumerate(sensor):
                if cs.in_contact:
                    st.latched_normals[i] = np.asarray(cs.n, dtype=float)
        elif prev_mode == Mode.CLOSING:
            st.latched_normals = [None, None]      # left the closing phase

        st.theta = [float("nan"), float("nan")]
        if st.mode == Mode.STABLE:
            st.last_qdot = np.zeros(self.model.n)
            st.last_qp_status = ""
            st.last_qp_iters = 0
            return st.last_qdot

        if st.mode == Mode.CLOSING:
            cmds = closing_velocities(st, kin.tip_x, params)
        else:
            cmds = adjustment_velocities(st, kin, self.model, params)
        return self.track_commands(cmds, kin)

    def track_commands(self, cmds, kin: KinematicState) -> np.ndarray:
        """Solve the velocity-tracking QP with the safety-margin clamp and
        the bounded-staleness fallback."""
        st = self.state
        params = self.params
        gamma, dgamma = collision_values(self.model, kin.q, kin)
        eps_eff = min(params.eps_gamma, float(np.min(gamma)) if gamma.size else params.eps_gamma)
        prob = assemble_tracking_qp(kin, cmds, self.model, gamma, dgamma,
                                    params.horizon, eps_eff, params.angular_weight)
        sol = self.solver.solve(prob, warm_start=st.qp_warm_x,
                                warm_start_dual=st.qp_warm_y,
                                tol=params.qp_tol, max_iters=params.qp_max_iters)
        st.last_qp_status = sol.status.value
        st.last_qp_iters = sol.iterations
        if sol.status == QpStatus.SOLVED:
            st.fail_count = 0
            st.qp_warm_x, st.qp_warm_y = sol.x, sol.y
            st.last_qdot = sol.x
            return sol.x
        # Hold the previous command for at most 3 ticks, then stop.
        st.fail_count += 1
        if st.fail_count <= 3 and st.last_qdot is not None:
            return st.last_qdot
        st.last_qdot = np.zeros(self.model.n)
        return st.last_qdot

    def reach_tick(self, x_star, kin: KinematicState) -> np.ndarray:
        """Pre-closure reaching: both fingertips track the common
        midpoint-to-target velocity under the same constraint set."""
        v = reach_velocity(kin.tip_x[0], kin.tip_x[1], x_star)
        cmds = [FingertipCommand(v, np.zeros(3), 0) for _ in range(2)]
        return self.track_commands(cmds, kin)
