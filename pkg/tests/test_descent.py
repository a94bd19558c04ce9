"""Descent-lab tests: outcomes on the sphere grid, failure-case geometry,
stall diagnostics of plain projected descent, and campaign determinism."""

import math

import numpy as np
import pytest

from tactigrasp.descent import (
    DescentConfig, DescentStatus, Method, run_descent, run_table1, sample_shape,
)
from tactigrasp.stability import ContactPair, grad_phi, pgd_direction
from tactigrasp.surfaces import Box, Ellipsoid, SurfacePoint, Torus


def fibonacci_sphere(n: int) -> np.ndarray:
    golden = math.pi * (3.0 - math.sqrt(5.0))
    pts = np.zeros((n, 3))
    for i in range(n):
        z = 1.0 - 2.0 * (i + 0.5) / n
        r = math.sqrt(1.0 - z * z)
        th = golden * i
        pts[i] = [r * math.cos(th), r * math.sin(th), z]
    return pts


def surface_point(s, p):
    p = np.asarray(p, dtype=float)
    return SurfacePoint(p, s.outward_normal(p))


class TestRunDescent:
    def test_cfgd_converges_on_sphere_grid(self):
        # Exhaustive 20 x 20 grid of initial-point pairs on the unit sphere.
        s = Ellipsoid(1, 1, 1)
        grid = fibonacci_sphere(20)
        cfg = DescentConfig(method=Method.CFGD)
        failures = []
        for i, a in enumerate(grid):
            for j, b in enumerate(grid):
                if np.linalg.norm(b - a) < 1e-6 or np.linalg.norm(b + a) < 1e-6:
                    continue
                out = run_descent(s, surface_point(s, a), surface_point(s, b), cfg)
                if out.status != DescentStatus.CONVERGED:
                    failures.append((i, j, out.status, out.final.f))
        assert not failures, failures[:5]

    def test_pgd_stalls_on_sphere(self):
        s = Ellipsoid(1, 1, 1)
        out = run_descent(s, surface_point(s, [1, 0, 0]),
                          surface_point(s, [0, 1, 0]),
                          DescentConfig(method=Method.PGD))
        assert out.status == DescentStatus.LOCAL_MINIMUM
        assert out.final.f > 0.3

    def test_right_angle_failure_on_box_face(self):
        # Two contacts on the same box face: both pressing normals are
        # perpendicular to the chord, the exact failure geometry.
        s = Box(1, 1, 1)
        out = run_descent(s, surface_point(s, [1, 0.3, 0.2]),
                          surface_point(s, [1, -0.4, -0.1]),
                          DescentConfig(method=Method.CFGD))
        assert out.status == DescentStatus.RIGHT_ANGLE_FAILURE
        assert abs(out.final.phi1 - math.pi / 2) < math.radians(3)
        assert abs(out.final.phi2 - math.pi / 2) < math.radians(3)

    def test_boundary_maintained_along_trajectory(self):
        s = Torus(2, 0.5)
        rng = np.random.default_rng(5)
        p1 = s.sample_surface(rng)
        p2 = s.sample_surface(rng)
        out = run_descent(s, p1, p2, DescentConfig(method=Method.CFGD),
                          record_trajectory=True)
        for c1, c2, _, _ in out.trajectory:
            assert abs(s.implicit_value(c1)) <= s.tol_surface
            assert abs(s.implicit_value(c2)) <= s.tol_surface

    def test_cfgd_statistical_monotonicity(self):
        # f decreases over 10-step windows in the large majority of sampled
        # intervals (per-step monotonicity is not promised). Runs that pass
        # near a wide-separation antipodal saddle show a genuine transient
        # rise before reconverging, so the pooled fraction sits near 0.88
        # for these shape ranges; the typical run is fully monotone.
        rng = np.random.default_rng(9)
        good = bad = 0
        fracs = []
        for seed in range(12):
            fam = ("ellipsoid", "superquadric", "torus")[seed % 3]
            s = sample_shape(fam, rng)
            out = run_descent(s, s.sample_surface(rng), s.sample_surface(rng),
                              DescentConfig(method=Method.CFGD), record_trajectory=True)
            if out.status != DescentStatus.CONVERGED:
                continue
            fs = [p1 + p2 for _, _, p1, p2 in out.trajectory]
            g = sum(1 for k in range(len(fs) - 10) if fs[k + 10] < fs[k])
            b = max(len(fs) - 10, 0) - g
            good += g
            bad += b
            if g + b:
                fracs.append(g / (g + b))
        assert good / (good + bad) >= 0.80
        assert np.median(fracs) >= 0.95

    def test_converged_means_f_below_tol(self):
        s = Ellipsoid(1, 1, 1)
        cfg = DescentConfig(method=Method.CFGD)
        out = run_descent(s, surface_point(s, [1, 0, 0]), surface_point(s, [0, 1, 0]), cfg)
        assert out.status == DescentStatus.CONVERGED
        assert out.final.f < cfg.converge_tol


class TestCancellationDiagnostics:
    def test_stuck_pgd_runs_show_gradient_cancellation(self):
        rows, _ = run_table1(20, DescentConfig(), rng_seed=7)
        stuck = [r for r in rows if r.method == "pgd" and r.status == "local_minimum"]
        assert len(stuck) >= 10
        for r in stuck:
            char = (r.shape_params["R"] + r.shape_params["r"] if r.family == "torus"
                    else max(r.shape_params[k] for k in ("a1", "a2", "a3")))
            cp = ContactPair(r.final_c1, r.final_c2, r.final_n1, r.final_n2)
            assert r.final_f_rad > 0.3
            d1, d2 = pgd_direction(cp)
            tangential_f = max(np.linalg.norm(d1), np.linalg.norm(d2)) * char
            g1 = grad_phi(cp, 1, "c1")
            tangential_phi1 = np.linalg.norm(g1 - cp.n1 * (cp.n1 @ g1)) * char
            assert tangential_f < 1e-4
            assert tangential_phi1 > 1e-2


class TestTable1Campaign:
    def test_rates_small_campaign(self):
        # Reduced-size sanity check; the full 100-trial reproduction with the
        # published bounds runs in the acceptance suite.
        rows, rates = run_table1(30, DescentConfig(), rng_seed=2024)
        for fam in ("ellipsoid", "superquadric", "torus"):
            assert rates[fam]["cfgd"] >= 0.9, (fam, rates[fam])
            assert rates[fam]["pgd"] <= 0.25, (fam, rates[fam])

    def test_paired_initializations(self):
        rows, _ = run_table1(3, DescentConfig(), rng_seed=1)
        by_trial = {}
        for r in rows:
            by_trial.setdefault((r.family, r.trial), []).append(r)
        for (fam, t), pair in by_trial.items():
            assert {p.method for p in pair} == {"pgd", "cfgd"}
            assert pair[0].shape_params == pair[1].shape_params

    def test_deterministic_given_seed(self):
        rows_a, rates_a = run_table1(2, DescentConfig(), rng_seed=77)
        rows_b, rates_b = run_table1(2, DescentConfig(), rng_seed=77)
        assert rates_a == rates_b
        for a, b in zip(rows_a, rows_b):
            assert a.status == b.status and a.iters == b.iters
            assert a.final_f_rad == b.final_f_rad
            np.testing.assert_array_equal(a.final_c1, b.final_c1)

    def test_different_seeds_differ(self):
        rows_a, _ = run_table1(2, DescentConfig(), rng_seed=1)
        rows_b, _ = run_table1(2, DescentConfig(), rng_seed=2)
        assert any(not np.array_equal(a.final_c1, b.final_c1)
                   for a, b in zip(rows_a, rows_b))
