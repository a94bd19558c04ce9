"""Kinematics tests: FK against an independent product-of-exponentials
oracle, Jacobians and collision gradients against central finite
differences, and schema validation."""

import math

import numpy as np
import pytest

from tactigrasp.errors import SchemaError
from tactigrasp.kinematics import (
    Joint, RobotModel, Fingertip, collision_values, default_model,
    forward_kinematics, jacobians, model_from_dict,
)
from tactigrasp.surfaces import Pose


# ---------------------------------------------------------------------------
# Independent FK oracle: product of exponentials on screw axes taken from
# the zero configuration (exp coordinates, not the recursive chain).
# ---------------------------------------------------------------------------

def _skew(w):
    return np.array([[0, -w[2], w[1]], [w[2], 0, -w[0]], [-w[1], w[0], 0.0]])


def _exp_twist(S, th):
    w, v = S[:3], S[3:]
    if np.linalg.norm(w) < 1e-12:
        T = np.eye(4)
        T[:3, 3] = v * th
        return T
    W = _skew(w)
    R = np.eye(3) + math.sin(th) * W + (1 - math.cos(th)) * W @ W
    G = np.eye(3) * th + (1 - math.cos(th)) * W + (th - math.sin(th)) * W @ W
    T = np.eye(4)
    T[:3, :3] = R
    T[:3, 3] = G @ v
    return T


def poe_tip_pose(model, tip_index, q):
    """Space-form PoE: T(q) = prod_j exp([S_j] q_j) * M, screws at q = 0."""
    zero = forward_kinematics(model, np.zeros(model.n))
    tip = model.fingertips[tip_index]
    M = np.eye(4)
    M[:3, :3] = zero.tip_R[tip_index]
    M[:3, 3] = zero.tip_x[tip_index]
    T = np.eye(4)
    for j in model.chains[tip.link]:
        w = zero.joint_axis_w[j]
        p = zero.joint_p[j]
        if model.joints[j].kind == "revolute":
            S = np.concatenate([w, -np.cross(w, p)])
        else:
            S = np.concatenate([np.zeros(3), w])
        T = T @ _exp_twist(S, q[j])
    return T @ M


def planar_two_link() -> RobotModel:
    """2-DoF planar arm with unit links along +x, revolute about z."""
    joints = [
        Joint("j0", "revolute", np.array([0.0, 0, 1]), -1, Pose.identity()),
        Joint("j1", "revolute", np.array([0.0, 0, 1]), 0,
              Pose(np.eye(3), np.array([1.0, 0, 0]))),
    ]
    tip = Fingertip("tip", 1, Pose(np.eye(3), np.array([1.0, 0, 0])), 0.01,
                    np.array([1.0, 0, 0]))
    return RobotModel("planar2", joints, [tip],
                      q_min=np.array([-3.0, -3.0]), q_max=np.array([3.0, 3.0]),
                      qd_min=np.array([-1.0, -1.0]), qd_max=np.array([1.0, 1.0]),
                      geoms=[], collision_pairs=[])


class TestForwardKinematics:
    def test_planar_straight(self):
        m = planar_two_link()
        st = forward_kinematics(m, [0.0, 0.0])
        np.testing.assert_allclose(st.tip_x[0], [2, 0, 0], atol=1e-12)
        np.testing.assert_allclose(st.tip_R[0], np.eye(3), atol=1e-12)

    def test_planar_quarter_turn(self):
        m = planar_two_link()
        st = forward_kinematics(m, [math.pi / 2, 0.0])
        np.testing.assert_allclose(st.tip_x[0], [0, 2, 0], atol=1e-12)

    def test_full_model_matches_poe_oracle(self):
        m = default_model()
        rng = np.random.default_rng(3)
        for _ in range(25):
            q = rng.uniform(m.q_min, m.q_max)
            st = forward_kinematics(m, q)
            for ti in range(2):
                T = poe_tip_pose(m, ti, q)
                assert np.linalg.norm(st.tip_x[ti] - T[:3, 3]) < 1e-9
                assert np.linalg.norm(st.tip_R[ti] - T[:3, :3]) < 1e-9

    def test_rotations_orthonormal(self):
        m = default_model()
        rng = np.random.default_rng(4)
        for _ in range(100):
            st = forward_kinematics(m, rng.uniform(m.q_min, m.q_max))
            for R in st.tip_R + st.joint_R:
                np.testing.assert_allclose(R.T @ R, np.eye(3), atol=1e-10)
                assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-10)


class TestJacobians:
    def test_planar_base_column(self):
        # Base revolute about z with the tip at (2,0,0): column is z x r = (0,2,0).
        m = planar_two_link()
        (Jx, JR), = jacobians(m, [0.0, 0.0])
        np.testing.assert_allclose(Jx[:, 0], [0, 2, 0], atol=1e-12)
        np.testing.assert_allclose(Jx[:, 1], [0, 1, 0], atol=1e-12)
        np.testing.assert_allclose(JR[:, 0], [0, 0, 1], atol=1e-12)

    def test_off_chain_columns_zero(self):
        m = default_model()
        st = forward_kinematics(m, np.zeros(m.n))
        chain_a = set(m.chains[m.fingertips[0].link])
        for j in range(m.n):
            if j not in chain_a:
                assert np.all(st.tip_Jx[0][:, j] == 0)
                assert np.all(st.tip_JR[0][:, j] == 0)

    def test_finite_difference_match_100_configs(self):
        m = default_model()
        rng = np.random.default_rng(7)
        h = 1e-6
        worst_x = worst_r = 0.0
        for _ in range(100):
            q = rng.uniform(0.9 * m.q_min, 0.9 * m.q_max)
            qd = rng.normal(size=m.n)
            qd /= np.linalg.norm(qd)
            st = forward_kinematics(m, q)
            stp = forward_kinematics(m, q + h * qd)
            stm = forward_kinematics(m, q - h * qd)
            for ti in range(2):
                v_fd = (stp.tip_x[ti] - stm.tip_x[ti]) / (2 * h)
                v_j = st.tip_Jx[ti] @ qd
                worst_x = max(worst_x, np.linalg.norm(v_fd - v_j) / max(np.linalg.norm(v_fd), 1e-9))
                A = stp.tip_R[ti] @ stm.tip_R[ti].T
                w_fd = np.array([A[2, 1] - A[1, 2], A[0, 2] - A[2, 0],
                                 A[1, 0] - A[0, 1]]) / (2 * 2 * h)
                w_j = st.tip_JR[ti] @ qd
                denom = max(np.linalg.norm(w_fd), 1e-9)
                worst_r = max(worst_r, np.linalg.norm(w_fd - w_j) / denom)
        assert worst_x < 1e-5
        assert worst_r < 1e-5


class TestCollisionValues:
    def test_two_spheres(self):
        m = default_model()
        st = forward_kinematics(m, np.zeros(m.n))
        from tactigrasp.kinematics import _pair_distance
        d, wa, wb, u = _pair_distance(("sphere", np.zeros(3), 0.1),
                                      ("sphere", np.array([0.5, 0, 0]), 0.1))
        assert d == pytest.approx(0.3)

    def test_sphere_over_table(self):
        from tactigrasp.kinematics import _pair_distance
        d, *_ = _pair_distance(("sphere", np.array([0, 0, 0.4]), 0.1),
                               ("half", np.array([0.0, 0, 1]), 0.0))
        assert d == pytest.approx(0.3)

    def test_capsule_capsule_crossing(self):
        from tactigrasp.kinematics import _pair_distance
        d, *_ = _pair_distance(
            ("capsule", np.array([-1.0, 0, 0]), np.array([1.0, 0, 0]), 0.1),
            ("capsule", np.array([0.0, -1, 0.5]), np.array([0.0, 1, 0.5]), 0.1))
        assert d == pytest.approx(0.3)

    def test_gradient_finite_difference(self):
        m = default_model()
        rng = np.random.default_rng(11)
        h = 1e-6
        worst = 0.0
        for _ in range(100):
            q = rng.uniform(0.9 * m.q_min, 0.9 * m.q_max)
            g0, dg = collision_values(m, q)
            qd = rng.normal(size=m.n)
            qd /= np.linalg.norm(qd)
            gp, _ = collision_values(m, q + h * qd)
            gm, _ = collision_values(m, q - h * qd)
            fd = (gp - gm) / (2 * h)
            an = dg @ qd
            rel = np.abs(fd - an) / np.maximum(np.abs(fd), 1.0)
            worst = max(worst, float(np.max(rel)))
        assert worst < 1e-4

    def test_gamma_continuity_along_paths(self):
        m = default_model()
        rng = np.random.default_rng(13)
        for _ in range(5):
            qa = rng.uniform(0.5 * m.q_min, 0.5 * m.q_max)
            qb = rng.uniform(0.5 * m.q_min, 0.5 * m.q_max)
            prev = None
            for t in np.linspace(0, 1, 1001):
                g, _ = collision_values(m, qa + t * (qb - qa))
                if prev is not None:
                    assert np.max(np.abs(g - prev)) < 0.05  # ~10x speed bound at 1e-3 res
                prev = g


class TestSchema:
    def test_default_model_shape(self):
        m = default_model()
        assert m.n == 15
        assert len(m.fingertips) == 2
        assert m.k == 19
        assert all(t.radius > 0 for t in m.fingertips)

    def test_schema_version_checked(self):
        with pytest.raises(SchemaError, match="schema"):
            model_from_dict({"schema": 99})

    def test_bad_axis_named(self):
        doc = {"schema": 1, "joints": [
            {"name": "a", "kind": "revolute", "axis": [0, 0, 2], "parent": -1}]}
        with pytest.raises(SchemaError, match="axis"):
            model_from_dict(doc)

    def test_limit_length_checked(self):
        doc = {"schema": 1,
               "joints": [{"name": "a", "kind": "revolute", "axis": [0, 0, 1], "parent": -1}],
               "q_min": [0.0, 0.0], "q_max": [1.0], "qd_min": [-1.0], "qd_max": [1.0]}
        with pytest.raises(SchemaError, match="q_min"):
            model_from_dict(doc)

    def test_unknown_pair_geom_named(self):
        doc = {"schema": 1,
               "joints": [{"name": "a", "kind": "revolute", "axis": [0, 0, 1], "parent": -1}],
               "q_min": [-1.0], "q_max": [1.0], "qd_min": [-1.0], "qd_max": [1.0],
               "fingertips": [],
               "collision_geoms": [],
               "collision_pairs": [["ghost", "ghost2"]]}
        with pytest.raises(SchemaError, match="ghost"):
            model_from_dict(doc)
