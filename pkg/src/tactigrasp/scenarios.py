"""Scenario construction: object families, size lists, perturbation
protocols, and the default simulation campaign.

Objects are parameterized by a single grasp width s (the object's extent
along the closing axis); five sizes span 0.5x to 1.5x the gripper's resting
aperture. The object sits at the fingertip midpoint of the ready pose; the
reach target equals the object center plus the scenario's perception-error
offset. The object is quasi-static, so placement needs no support surface;
the table half-space below only constrains the robot.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .controller import ControllerParams
from .kinematics import RobotModel, forward_kinematics
from .surfaces import Box, Cylinder, Ellipsoid, Pose, Surface
from .world import NoiseParams, Perturbation, Rates, Scenario

# Ready pose for the shipped 15-DoF model: arm pitched over the workspace,
# fingers spread. Tips come out near (0.53, +-0.10, 0.19) pointing down.
READY_Q = np.array([0.0, 0.9, 0.0, 0.9, 0.0, 1.3415926535897932, 0.0,
                    0.0, -0.45, 0.0, 0.0,
                    0.0, 0.45, 0.0, 0.0])

# Resting aperture (tip separation at zero finger flex) of the shipped hand.
APERTURE = 0.10
SIZE_LIST = tuple(APERTURE * f for f in (0.5, 0.75, 1.0, 1.25, 1.5))

FAMILIES = ("box", "cylinder", "ellipsoid")

# Perturbation magnitudes per family: yaw bounds for boxes (rad), signed
# target offsets for cylinders/ellipsoids (m).
DEFAULT_PERTURBATIONS = {
    "box": tuple(("box_yaw", math.radians(d)) for d in (5.0, 15.0, 25.0, 30.0)),
    "cylinder": tuple(("cylinder_offset", v) for v in (-0.02, -0.01, 0.01, 0.02)),
    "ellipsoid": tuple(("ellipsoid_offset", v) for v in (-0.02, -0.01, 0.01, 0.02)),
}


def make_object(family: str, size: float, pose: Pose) -> Surface:
    """Family shape with grasp width `size` along the closing (y) axis."""
    if family == "box":
        return Box(0.9 * size / 2, size / 2, 0.8 * size / 2, pose=pose)
    if family == "cylinder":
        return Cylinder(size / 2, 1.1 * size / 2, pose=pose)
    if family == "ellipsoid":
        return Ellipsoid(1.2 * size / 2, size / 2, 1.1 * size / 2, pose=pose)
    raise ValueError(f"unknown object family {family!r}")


def ready_tip_midpoint(model: RobotModel, q=None) -> np.ndarray:
    kin = forward_kinematics(model, READY_Q if q is None else q)
    return 0.5 * (kin.tip_x[0] + kin.tip_x[1])


def build_scenario(model: RobotModel, family: str, size: float,
                   perturbation: Perturbation, seed: int,
                   params: ControllerParams | None = None,
                   rates: Rates | None = None,
                   noise: NoiseParams | None = None,
                   max_time: float = 10.0) -> Scenario:
    params = params if params is not None else ControllerParams()
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    center = ready_tip_midpoint(model)
    pose = Pose(np.eye(3), center)
    pose, x_target = perturbation.apply(pose, center.copy(), rng)
    surface = make_object(family, size, pose)
    name = f"{family}_s{size:.3f}_{perturbation.kind}{perturbation.magnitude:+.3f}_seed{seed}"
    return Scenario(name=name, surface=surface, controller=params,
                    q_start=READY_Q.copy(), seed=seed,
                    rates=rates if rates is not None else Rates(),
                    noise=noise if noise is not None else NoiseParams(),
                    perturbation=perturbation, x_target=x_target,
                    max_time=max_time,
                    meta={"family": family, "size": size,
                          "perturbation": perturbation.kind,
                          "magnitude": perturbation.magnitude})


def default_campaign(model: RobotModel, base_seed: int = 0,
                     params: ControllerParams | None = None,
                     families=FAMILIES, sizes=SIZE_LIST,
                     perturbations=None) -> list[Scenario]:
    """3 families x 5 sizes x 4 perturbations = 60 seeded scenarios."""
    perturbations = perturbations or DEFAULT_PERTURBATIONS
    scenarios = []
    idx = 0
    for family in families:
        for size in sizes:
            for kind, mag in perturbations[family]:
                seed = base_seed * 100_000 + idx
                scenarios.append(build_scenario(
                    model, family, size, Perturbation(kind, mag), seed, params))
                idx += 1
    return scenarios
