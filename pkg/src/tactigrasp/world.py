"""Quasi-static kinematic world and tactile synthesis.

Joint velocities integrate by explicit Euler at the integration rate with a
zero-order hold between control ticks; the object never moves. Tactile
readings are synthesized from sphere-tip/implicit-surface geometry at the
sensor rate, with optional Gaussian contact-point noise and dropout. The
reference execution is single-threaded and bit-deterministic; an optional
two-thread mode exercises the sensor-thread/control-thread split with
statistical (not bitwise) repeatability.
"""

from __future__ import annotations

import math
import threading
import time as _time
from dataclasses import dataclass, field

import numpy as np

from .controller import ContactState, ControllerParams, Mode, ReflexController
from .errors import SchemaError
from .kinematics import RobotModel, forward_kinematics
from .surfaces import Pose, Surface, surface_from_dict

CONTACT_TOL = 1e-4     # m, sensing band beyond the tip radius
_PROTECT_BAND = 2e-3   # m, gap below which rigid-contact blocking is armed

TRACE_COLUMNS = ("time_s", "mode", "phi1_rad", "phi2_rad", "f_rad",
                 "tip1_contact", "tip2_contact", "theta1_rad", "theta2_rad",
                 "qp_status", "qp_iters")


@dataclass
class NoiseParams:
    sigma_c: float = 0.0      # m, Gaussian noise on the contact point
    dropout: float = 0.0      # probability an in-contact sample reads no-contact


@dataclass
class Rates:
    integration: int = 1000
    sensor: int = 200
    control: int = 200

    def __post_init__(self):
        if self.integration % self.sensor or self.integration % self.control:
            raise ValueError("integration rate must be an integer multiple of "
                             "sensor and control rates")
        if self.control > self.sensor:
            raise ValueError("control rate must not exceed the sensor rate")


@dataclass
class TactileReading:
    tips: list[ContactState]
    probabilities: list[float]

    @property
    def all_contact(self) -> bool:
        return all(t.in_contact for t in self.tips)


def detect_contact(tip_center, tip_radius: float, surface: Surface,
                   contact_tol: float = CONTACT_TOL):
    """Sphere-tip contact against an implicit surface.

    Returns (contact point, pressing normal) or None. The contact point sits
    on the tip sphere along the center-to-surface direction; the pressing
    normal is that direction (sphere geometry).
    """
    x = np.asarray(tip_center, dtype=float)
    proj = surface.project(x)
    d = proj.position - x
    dist = float(np.linalg.norm(d))
    inside = surface.implicit_value(x) < 0
    signed = -dist if inside else dist
    if signed > tip_radius + contact_tol:
        return None
    if dist < 1e-12:
        direction = -proj.outward_normal  # center exactly on the boundary
    else:
        direction = d / dist if not inside else -d / dist
    return x + tip_radius * direction, direction


@dataclass
class Perturbation:
    kind: str = "none"        # none | box_yaw | cylinder_offset | ellipsoid_offset
    magnitude: float = 0.0

    def apply(self, pose: Pose, x_star: np.ndarray, rng: np.random.Generator):
        """Returns (object pose, reach target). Yaw is sampled in
        [-magnitude, magnitude]; offsets shift the target by exactly the
        (signed) magnitude, mimicking a perception error."""
        if self.kind == "none" or self.magnitude == 0.0:
            return pose, x_star
        if self.kind == "box_yaw":
            yaw = rng.uniform(-self.magnitude, self.magnitude)
            spin = Pose.from_axis_angle([0, 0, 1], yaw)
            return Pose(spin.rotation @ pose.rotation, pose.translation), x_star
        if self.kind == "cylinder_offset":
            return pose, x_star + np.array([self.magnitude, 0.0, 0.0])
        if self.kind == "ellipsoid_offset":
            return pose, x_star + np.array([0.0, 0.0, self.magnitude])
        raise ValueError(f"unknown perturbation kind {self.kind!r}")


@dataclass
class Scenario:
    name: str
    surface: Surface
    controller: ControllerParams
    q_start: np.ndarray
    seed: int = 0
    rates: Rates = field(default_factory=Rates)
    noise: NoiseParams = field(default_factory=NoiseParams)
    perturbation: Perturbation = field(default_factory=Perturbation)
    x_target: np.ndarray | None = None   # reach target; default: object center
    max_time: float = 10.0               # s, reflex-phase budget
    reach_time: float = 3.0              # s, reaching-phase budget
    reach_tol: float = 0.005             # m
    meta: dict = field(default_factory=dict)  # campaign bookkeeping (family, size, ...)


@dataclass
class ScenarioResult:
    outcome: str                  # stable | timeout | error
    final_mean_angle_deg: float
    time_to_stop: float
    mode_transitions: int
    rows: list[tuple]
    integration_steps: int
    sensor_samples: int
    qp_solves: int
    error: str = ""


class World:
    """Single robot, single fixed object, rate-scheduled simulation."""

    def __init__(self, model: RobotModel, scenario: Scenario):
        self.model = model
        self.sc = scenario
        self.rng = np.random.default_rng(np.random.SeedSequence(scenario.seed))
        self.surface = scenario.surface
        self.q = np.asarray(scenario.q_start, dtype=float).copy()
        self.time = 0.0
        self.dt = 1.0 / scenario.rates.integration
        self.sensor_every = scenario.rates.integration // scenario.rates.sensor
        self.control_every = scenario.rates.integration // scenario.rates.control
        self.controller = ReflexController(model, scenario.controller)
        self.qdot_held = np.zeros(model.n)
        self.integration_steps = 0
        self.sensor_samples = 0
        self.qp_solves = 0
        self.mode_transitions = 0
        # Rigid-contact rows (n_press' J_tip) and remaining gaps, refreshed
        # each sensor tick and zero-order held, like the commanded velocity.
        self._contact_rows: np.ndarray | None = None
        self._contact_gaps: np.ndarray | None = None
        self._object_pose_snapshot = (self.surface.pose.rotation.copy(),
                                      self.surface.pose.translation.copy())

    # -- sensing -----------------------------------------------------------

    def sense(self, kin) -> TactileReading:
        tips = []
        probs = []
        rows = []
        gaps = []
        for i, tip in enumerate(self.model.fingertips):
            x = kin.tip_x[i]
            # Bounding-sphere early out: far tips cannot touch.
            coarse = (float(np.linalg.norm(x - self.surface.pose.translation))
                      - self.surface.bounding_radius() - tip.radius)
            if coarse > _PROTECT_BAND:
                tips.append(ContactState(False))
                probs.append(0.0)
                continue
            proj = self.surface.project(x)
            d = proj.position - x
            dist = float(np.linalg.norm(d))
            if self.surface.implicit_value(x) < 0:
                dist = -dist
            gap = dist - tip.radius
            direction = d / dist if dist > 1e-12 else -proj.outward_normal
            if gap < _PROTECT_BAND:
                # Rigid-contact row: the object blocks normal approach beyond
                # the remaining gap (zero-order-held between sensor ticks).
                rows.append(direction @ kin.tip_Jx[i])
                gaps.append(max(gap, 0.0))
            in_contact = gap <= CONTACT_TOL
            dropped = (in_contact and self.sc.noise.dropout > 0.0
                       and self.rng.uniform() < self.sc.noise.dropout)
            if not in_contact or dropped:
                tips.append(ContactState(False))
                probs.append(0.0)
                continue
            c = x + tip.radius * direction
            n = direction
            if self.sc.noise.sigma_c > 0.0:
                c_noisy = c + self.rng.normal(scale=self.sc.noise.sigma_c, size=3)
                n = (c_noisy - x) / np.linalg.norm(c_noisy - x)
                c = x + tip.radius * n
            tips.append(ContactState(True, c, n))
            probs.append(1.0)
        self.sensor_samples += 1
        self._contact_rows = np.asarray(rows) if rows else None
        self._contact_gaps = np.asarray(gaps) if gaps else None
        return TactileReading(tips, probs)

    # -- stepping ----------------------------------------------------------

    def _integrate(self):
        qd = self.qdot_held
        if self._contact_rows is not None:
            # Quasi-static rigid contact: each near-contact tip may approach
            # the surface no faster than closes its remaining gap this step;
            # tangential sliding is free.
            A = self._contact_rows
            for _ in range(2):  # second pass settles tip-tip coupling
                excess = A @ qd - self._contact_gaps / self.dt
                active = excess > 1e-12
                if not np.any(active):
                    break
                Aa = A[active]
                corr = np.linalg.solve(Aa @ Aa.T + 1e-10 * np.eye(Aa.shape[0]),
                                       excess[active])
                qd = qd - Aa.T @ corr
            self._contact_gaps = np.maximum(self._contact_gaps - (A @ qd) * self.dt, 0.0)
        self.q = np.clip(self.q + qd * self.dt,
                         self.model.q_min, self.model.q_max)
        self.time += self.dt
        self.integration_steps += 1

    def run_reach(self):
        """Drive the fingertip midpoint to the scenario target; same QP and
        constraint set as the reflex phase, alpha = 0."""
        steps = int(round(self.sc.reach_time / self.dt))
        x_star = self.sc.x_target
        rows = []
        for k in range(steps):
            if k % self.sensor_every == 0:
                kin = forward_kinematics(self.model, self.q)
                self.sense(kin)  # sensor runs during reach too (counted, unused)
                mid = 0.5 * (kin.tip_x[0] + kin.tip_x[1])
                if float(np.linalg.norm(x_star - mid)) < self.sc.reach_tol:
                    return rows, True
                if k % self.control_every == 0:
                    self.qdot_held = self.controller.reach_tick(x_star, kin)
                    self.qp_solves += 1
                    rows.append(self._row("reaching", None, (False, False),
                                          self.controller.state))
            self._integrate()
        return rows, False

    def run_reflex(self, stop_at_first_all_contact: bool = False):
        """Run the mode machine until stable / timeout. Returns trace rows,
        outcome string, and the final stability evaluation."""
        steps = int(round(self.sc.max_time / self.dt))
        ctrl = self.controller
        rows = []
        outcome = "timeout"
        final_eval = None
        for k in range(steps):
            if k % self.sensor_every == 0:
                kin = forward_kinematics(self.model, self.q)
                reading = self.sense(kin)
                if k % self.control_every == 0:
                    prev_mode = ctrl.state.mode
                    solved_before = ctrl.state.last_qp_status
                    self.qdot_held = ctrl.control_tick(reading.tips, kin)
                    if ctrl.state.mode != Mode.STABLE:
                        self.qp_solves += 1
                    if ctrl.state.mode != prev_mode:
                        self.mode_transitions += 1
                    rows.append(self._row(ctrl.state.mode.value, ctrl.state.stability,
                                          tuple(t.in_contact for t in reading.tips),
                                          ctrl.state))
                    if ctrl.state.mode == Mode.STABLE:
                        outcome = "stable"
                        final_eval = ctrl.state.stability
                        break
                    if stop_at_first_all_contact and reading.all_contact:
                        outcome = "stable"
                        final_eval = ctrl.state.stability
                        break
            self._integrate()
        if final_eval is None:
            final_eval = self.controller.state.stability
        return rows, outcome, final_eval

    def _row(self, mode: str, ev, contacts, state) -> tuple:
        phi1 = ev.phi1 if ev else float("nan")
        phi2 = ev.phi2 if ev else float("nan")
        f = ev.f if ev else float("nan")
        return (self.time, mode, phi1, phi2, f,
                int(contacts[0]), int(contacts[1]),
                state.theta[0], state.theta[1],
                state.last_qp_status, state.last_qp_iters)

    def object_pose_unchanged(self) -> bool:
        R0, t0 = self._object_pose_snapshot
        return (np.array_equal(R0, self.surface.pose.rotation)
                and np.array_equal(t0, self.surface.pose.translation))


def run_scenario(model: RobotModel, scenario: Scenario,
                 variant: str = "cfgd") -> ScenarioResult:
    """Execute reach + reflex phases for one controller variant.

    variant: "cfgd" | "pgd" run the full reflexive controller with that
    descent method; "vanilla" closes and stops at the first all-contact
    sample, recording the angle there (no adjustment).
    """
    sc = scenario
    params = sc.controller
    if variant in ("cfgd", "pgd"):
        params = ControllerParams.from_dict({**params.to_dict(), "method": variant})
    sc = Scenario(**{**sc.__dict__, "controller": params})
    world = World(model, sc)
    try:
        reach_rows, _reached = world.run_reach()
        rows, outcome, ev = world.run_reflex(
            stop_at_first_all_contact=(variant == "vanilla"))
    except Exception as e:  # propagate message, flush partial rows
        return ScenarioResult("error", float("nan"), world.time,
                              world.mode_transitions, [], world.integration_steps,
                              world.sensor_samples, world.qp_solves, error=str(e))
    assert world.object_pose_unchanged(), "quasi-static object moved"
    mean_angle = ev.mean_angle_deg if ev else float("nan")
    return ScenarioResult(outcome, mean_angle, world.time, world.mode_transitions,
                          reach_rows + rows, world.integration_steps,
                          world.sensor_samples, world.qp_solves)


# ---------------------------------------------------------------------------
# Optional two-thread execution (integration thread + control thread with
# latest-value exchange). Statistically equivalent to the reference mode,
# not bit-identical.
# ---------------------------------------------------------------------------

def run_scenario_threaded(model: RobotModel, scenario: Scenario,
                          variant: str = "cfgd") -> ScenarioResult:
    sc = scenario
    params = sc.controller
    if variant in ("cfgd", "pgd"):
        params = ControllerParams.from_dict({**params.to_dict(), "method": variant})
    sc = Scenario(**{**sc.__dict__, "controller": params})
    world = World(model, sc)
    reach_rows, _ = world.run_reach()

    lock = threading.Lock()
    latest = {"reading": None, "kin": None, "qdot": np.zeros(model.n),
              "stop": False, "mode": Mode.CLOSING}
    ctrl = world.controller

    def control_loop():
        seen = None
        while True:
            with lock:
                if latest["stop"]:
                    return
                reading, kin = latest["reading"], latest["kin"]
            if reading is None or reading is seen:
                _time.sleep(1e-5)
                continue
            seen = reading
            qdot = ctrl.control_tick(reading.tips, kin)
            world.qp_solves += 1
            with lock:
                latest["qdot"] = qdot
                latest["mode"] = ctrl.state.mode

    t = threading.Thread(target=control_loop)
    t.start()
    steps = int(round(sc.max_time / world.dt))
    rows = []
    outcome = "timeout"
    try:
        for k in range(steps):
            if k % world.sensor_every == 0:
                kin = forward_kinematics(model, world.q)
                reading = world.sense(kin)
                with lock:
                    latest["reading"], latest["kin"] = reading, kin
                    world.qdot_held = latest["qdot"]
                    mode = latest["mode"]
                rows.append((world.time, mode.value) + (float("nan"),) * 7)
                if mode == Mode.STABLE:
                    outcome = "stable"
                    break
            world._integrate()
    finally:
        with lock:
            latest["stop"] = True
        t.join()
    ev = ctrl.state.stability
    return ScenarioResult(outcome, ev.mean_angle_deg if ev else float("nan"),
                          world.time, world.mode_transitions, reach_rows + rows,
                          world.integration_steps, world.sensor_samples,
                          world.qp_solves)
