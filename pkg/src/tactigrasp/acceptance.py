"""Acceptance suite: every exit criterion with its pinned tolerance.

Each criterion is a function returning (passed, details). The runner
executes them in order, shares the convergence-table rows between the two
criteria that need them, prints one PASS/FAIL line per criterion, and can
serialize the outcome as JSON. The same functions back tests/test_acceptance.py
and the `accept` CLI subcommand.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, asdict

import numpy as np

from .controller import ContactState, ControllerParams, ControllerState, Mode, step_mode
from .descent import DescentConfig, run_table1
from .kinematics import collision_values, default_model, forward_kinematics
from .qp import QpSolver, QpStatus
from .scenarios import build_scenario, default_campaign
from .stability import ContactPair, evaluate, grad_phi, pgd_direction
from .surfaces import Pose
from .world import NoiseParams, Perturbation, Scenario, World, run_scenario

TABLE1_SEED = 12345
CAMPAIGN_SEED = 1


@dataclass
class CriterionResult:
    name: str
    passed: bool
    details: str
    seconds: float

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        return f"[{mark}] {self.name}: {self.details} ({self.seconds:.1f}s)"


def _char_size(row) -> float:
    ps = row.shape_params
    if row.family == "torus":
        return ps["R"] + ps["r"]
    return max(ps[k] for k in ("a1", "a2", "a3"))


def criterion_table1(ctx) -> tuple[bool, str]:
    """CFGD rate >= 95% and PGD rate <= 20% per family, 100 trials, < 60 s."""
    t0 = time.perf_counter()
    rows, rates = run_table1(100, DescentConfig(), rng_seed=TABLE1_SEED)
    elapsed = time.perf_counter() - t0
    ctx["table1_rows"] = rows
    ok = True
    parts = []
    for fam in ("ellipsoid", "superquadric", "torus"):
        c, p = rates[fam]["cfgd"], rates[fam]["pgd"]
        ok &= c >= 0.95 and p <= 0.20
        parts.append(f"{fam}: cfgd {100 * c:.0f}%, pgd {100 * p:.0f}%")
    ok &= elapsed < 60.0
    return ok, "; ".join(parts) + f"; runtime {elapsed:.1f}s (< 60s)"


def criterion_cancellation(ctx) -> tuple[bool, str]:
    """>= 10 stalled plain-descent runs show the gradient-cancellation
    signature: tiny tangential total gradient, large per-angle gradient."""
    rows = ctx.get("table1_rows")
    if rows is None:
        rows, _ = run_table1(100, DescentConfig(), rng_seed=TABLE1_SEED)
    count = 0
    for r in rows:
        if r.method != "pgd" or r.status != "local_minimum" or r.final_f_rad <= 0.3:
            continue
        char = _char_size(r)
        cp = ContactPair(r.final_c1, r.final_c2, r.final_n1, r.final_n2)
        try:
            d1, d2 = pgd_direction(cp)
            g1 = grad_phi(cp, 1, "c1")
        except Exception:
            continue
        tan_f = max(float(np.linalg.norm(d1)), float(np.linalg.norm(d2))) * char
        t1 = g1 - cp.n1 * float(cp.n1 @ g1)
        tan_phi1 = float(np.linalg.norm(t1)) * char
        if tan_f < 1e-4 and tan_phi1 > 1e-2:
            count += 1
    return count >= 10, f"{count} cancellation witnesses (need >= 10)"


def criterion_gradient_oracles(ctx) -> tuple[bool, str]:
    """Analytic gradients vs central finite differences: contact-pair
    gradients < 1e-5 rel (1000 pairs); J_x, J_R < 1e-5 and dGamma < 1e-4
    over 100 robot configurations."""
    rng = np.random.default_rng(2718)
    worst_cp = 0.0
    checked = 0
    while checked < 1000:
        c1 = rng.uniform(-1, 1, size=3)
        c2 = rng.uniform(-1, 1, size=3)
        if np.linalg.norm(c2 - c1) < 0.1:
            continue
        n1 = rng.normal(size=3)
        n2 = rng.normal(size=3)
        n1 /= np.linalg.norm(n1)
        n2 /= np.linalg.norm(n2)
        cp = ContactPair(c1, c2, n1, n2)
        ev = evaluate(cp)
        if not (0.1 < ev.phi1 < math.pi - 0.1 and 0.1 < ev.phi2 < math.pi - 0.1):
            continue
        checked += 1
        h = 1e-6
        for which, wrt in itertools.product((1, 2), ("c1", "c2")):
            g = grad_phi(cp, which, wrt)
            fd = np.zeros(3)
            for k in range(3):
                d = np.zeros(3)
                d[k] = h
                args_p = {"c1": c1 + d if wrt == "c1" else c1,
                          "c2": c2 + d if wrt == "c2" else c2}
                args_m = {"c1": c1 - d if wrt == "c1" else c1,
                          "c2": c2 - d if wrt == "c2" else c2}
                ev_p = evaluate(ContactPair(args_p["c1"], args_p["c2"], n1, n2))
                ev_m = evaluate(ContactPair(args_m["c1"], args_m["c2"], n1, n2))
                fd[k] = ((ev_p.phi1 if which == 1 else ev_p.phi2)
                         - (ev_m.phi1 if which == 1 else ev_m.phi2)) / (2 * h)
            rel = float(np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-12))
            worst_cp = max(worst_cp, rel)

    model = default_model()
    worst_jx = worst_jr = worst_g = 0.0
    h = 1e-6
    for _ in range(100):
        q = rng.uniform(0.9 * model.q_min, 0.9 * model.q_max)
        qd = rng.normal(size=model.n)
        qd /= np.linalg.norm(qd)
        st = forward_kinematics(model, q)
        stp = forward_kinematics(model, q + h * qd)
        stm = forward_kinematics(model, q - h * qd)
        for ti in range(2):
            v_fd = (stp.tip_x[ti] - stm.tip_x[ti]) / (2 * h)
            v = st.tip_Jx[ti] @ qd
            worst_jx = max(worst_jx, float(np.linalg.norm(v - v_fd))
                           / max(float(np.linalg.norm(v_fd)), 1e-9))
            A = stp.tip_R[ti] @ stm.tip_R[ti].T
            w_fd = np.array([A[2, 1] - A[1, 2], A[0, 2] - A[2, 0],
                             A[1, 0] - A[0, 1]]) / (4 * h)
            w = st.tip_JR[ti] @ qd
            worst_jr = max(worst_jr, float(np.linalg.norm(w - w_fd))
                           / max(float(np.linalg.norm(w_fd)), 1e-9))
        g0, dg = collision_values(model, q, st)
        gp, _ = collision_values(model, q + h * qd)
        gm, _ = collision_values(model, q - h * qd)
        fd = (gp - gm) / (2 * h)
        rel = np.abs(dg @ qd - fd) / np.maximum(np.abs(fd), 1.0)
        worst_g = max(worst_g, float(np.max(rel)))
    ok = worst_cp < 1e-5 and worst_jx < 1e-5 and worst_jr < 1e-5 and worst_g < 1e-4
    return ok, (f"contact grads {worst_cp:.1e} (<1e-5); Jx {worst_jx:.1e}, "
                f"JR {worst_jr:.1e} (<1e-5); dGamma {worst_g:.1e} (<1e-4)")


def criterion_qp(ctx) -> tuple[bool, str]:
    """50 random small QPs match active-set enumeration within 1e-6 in
    objective; solutions feasible within 1e-5."""
    rng = np.random.default_rng(314)
    solver = QpSolver()
    worst_gap = 0.0
    worst_viol = 0.0
    for _ in range(50):
        n = int(rng.integers(2, 7))
        p = int(rng.integers(1, 9))
        prob = _random_qp(rng, n, p)
        x_star, obj_star = _active_set_oracle(prob)
        if x_star is None:
            return False, "oracle found no feasible candidate"
        sol = solver.solve(prob, tol=1e-9)
        if sol.status != QpStatus.SOLVED:
            return False, f"solver status {sol.status.value}"
        ax = prob.A @ sol.x
        viol = max(float(np.max(prob.lb - ax, initial=0.0)),
                   float(np.max(ax - prob.ub, initial=0.0)))
        worst_viol = max(worst_viol, viol)
        worst_gap = max(worst_gap, abs(prob.objective(sol.x) - obj_star))
    ok = worst_gap < 1e-6 and worst_viol < 1e-5
    return ok, f"max objective gap {worst_gap:.1e} (<1e-6); max violation {worst_viol:.1e} (<1e-5)"


def _random_qp(rng, n, p):
    from .qp import QpProblem
    M = rng.normal(size=(n, n))
    H = M.T @ M + 0.1 * np.eye(n)
    g = rng.normal(size=n)
    A = rng.normal(size=(p, n))
    x0 = rng.normal(size=n)
    ax = A @ x0
    lb = ax - np.abs(rng.normal(size=p)) - 0.1
    ub = ax + np.abs(rng.normal(size=p)) + 0.1
    for i in range(p):
        r = rng.uniform()
        if r < 0.15:
            ub[i] = np.inf
        elif r < 0.25:
            lb[i] = ub[i] = ax[i]
    return QpProblem(H, g, A, lb, ub)


def _active_set_oracle(prob, feas_tol=1e-8):
    n, p = prob.n, prob.p
    best_x, best_obj = None, np.inf
    for assignment in itertools.product((0, 1, 2), repeat=p):
        rows = [i for i, a in enumerate(assignment) if a != 0]
        vals = [prob.lb[i] if assignment[i] == 1 else prob.ub[i] for i in rows]
        if any(not np.isfinite(v) for v in vals):
            continue
        if rows:
            Aa = prob.A[rows]
            m = len(rows)
            K = np.block([[prob.H, Aa.T], [Aa, np.zeros((m, m))]])
            rhs = np.concatenate([-prob.g, np.array(vals)])
            try:
                sol = np.linalg.solve(K, rhs)
            except np.linalg.LinAlgError:
                continue
            x = sol[:n]
        else:
            try:
                x = np.linalg.solve(prob.H, -prob.g)
            except np.linalg.LinAlgError:
                continue
        ax = prob.A @ x
        if np.all(ax >= prob.lb - feas_tol) and np.all(ax <= prob.ub + feas_tol):
            obj = prob.objective(x)
            if obj < best_obj:
                best_obj, best_x = obj, x
    return best_x, best_obj


def criterion_end_to_end(ctx) -> tuple[bool, str]:
    """60 seeded scenarios: the cross-finger controller reaches stable
    (mean angle < 10 deg) within 10 s in >= 90%, and never ends worse than
    the no-reflex baseline in more than 10% of paired seeds."""
    t0 = time.perf_counter()
    model = default_model()
    scenarios = default_campaign(model, base_seed=CAMPAIGN_SEED)
    stable = 0
    paired_wins = 0
    for sc in scenarios:
        rc = run_scenario(model, sc, "cfgd")
        rv = run_scenario(model, sc, "vanilla")
        if rc.outcome == "stable" and rc.final_mean_angle_deg < 10.0:
            stable += 1
        if rc.final_mean_angle_deg <= rv.final_mean_angle_deg + 1e-9:
            paired_wins += 1
    elapsed = time.perf_counter() - t0
    n = len(scenarios)
    ok = stable >= 0.9 * n and paired_wins >= 0.9 * n and elapsed < 300.0
    return ok, (f"stable<10deg {stable}/{n} (>=54); paired cfgd<=vanilla "
                f"{paired_wins}/{n} (>=54); runtime {elapsed:.0f}s (<300s)")


def criterion_state_machine(ctx) -> tuple[bool, str]:
    """Exhaustive (mode x contact pattern x stability) transition check plus
    contact-dropout injection: every lost contact while adjusting reverts to
    closing on the next tick."""
    stable_pair = [ContactState(True, np.array([0.05, 0, 0]), np.array([-1.0, 0, 0])),
                   ContactState(True, np.array([-0.05, 0, 0]), np.array([1.0, 0, 0]))]
    unstable_pair = [ContactState(True, np.array([0.05, 0, 0]), np.array([-1.0, 0, 0])),
                     ContactState(True, np.array([0, 0.05, 0]), np.array([0, -1.0, 0]))]
    params = ControllerParams(n_hold=1)
    bad = 0
    total = 0
    for mode in Mode:
        for pat in itertools.product([False, True], repeat=2):
            for stable_now in (False, True):
                sensor = [(stable_pair if stable_now else unstable_pair)[i]
                          if flag else ContactState(False)
                          for i, flag in enumerate(pat)]
                st = ControllerState(mode=mode)
                new = step_mode(st, sensor, params)
                total += 1
                if mode == Mode.STABLE:
                    expect = Mode.STABLE
                elif not all(pat):
                    expect = Mode.CLOSING
                elif stable_now:
                    expect = Mode.STABLE
                else:
                    expect = Mode.ADJUSTING
                if new != expect:
                    bad += 1

    model = default_model()
    injected = reverted = 0
    for seed in (41, 42, 43):
        sc = build_scenario(model, "ellipsoid", 0.1, Perturbation("none", 0.0),
                            seed, noise=NoiseParams(dropout=0.08))
        res = run_scenario(model, sc, "cfgd")
        rows = res.rows
        for prev, cur in zip(rows, rows[1:]):
            if prev[1] == "adjusting" and not (cur[5] and cur[6]):
                injected += 1
                if cur[1] == "closing":
                    reverted += 1
    ok = bad == 0 and injected > 0 and reverted == injected
    return ok, (f"transition table {total - bad}/{total} correct; dropout "
                f"reversion {reverted}/{injected}")


def criterion_determinism(ctx) -> tuple[bool, str]:
    """Identical configs/seeds give byte-identical CSV output."""
    from .harness import table1_rows_to_csv, trace_rows_to_csv

    texts = []
    for _ in range(2):
        rows, _rates = run_table1(5, DescentConfig(), rng_seed=999)
        texts.append(table1_rows_to_csv(rows))
    t1_ok = texts[0] == texts[1]

    model = default_model()
    traces = []
    for _ in range(2):
        sc = build_scenario(model, "box", 0.1,
                            Perturbation("box_yaw", math.radians(15)), seed=7)
        res = run_scenario(model, sc, "cfgd")
        traces.append(trace_rows_to_csv(res.rows))
    sim_ok = traces[0] == traces[1]
    ok = t1_ok and sim_ok
    return ok, f"table1 byte-identical: {t1_ok}; sim trace byte-identical: {sim_ok}"


def criterion_rate_contract(ctx) -> tuple[bool, str]:
    """A 1 s run at 1000/200/200 Hz: exactly 1000 integration steps, 200
    sensor samples, <= 200 QP solves."""
    model = default_model()
    sc = build_scenario(model, "ellipsoid", 0.1, Perturbation("none", 0.0), seed=0,
                        max_time=1.0)
    # Move the object out of reach so the run cannot stop early.
    sc.surface.pose = Pose(np.eye(3), np.array([10.0, 0.0, 0.0]))
    sc = Scenario(**{**sc.__dict__, "reach_time": 0.0})
    world = World(model, sc)
    rows, outcome, _ = world.run_reflex()
    ok = (world.integration_steps == 1000 and world.sensor_samples == 200
          and world.qp_solves <= 200 and len(rows) == 200)
    return ok, (f"{world.integration_steps} integration steps (=1000), "
                f"{world.sensor_samples} sensor samples (=200), "
                f"{world.qp_solves} qp solves (<=200), {len(rows)} trace rows")


CRITERIA = (
    ("table1", criterion_table1),
    ("cancellation_witness", criterion_cancellation),
    ("gradient_oracles", criterion_gradient_oracles),
    ("qp_oracle", criterion_qp),
    ("end_to_end", criterion_end_to_end),
    ("state_machine", criterion_state_machine),
    ("determinism", criterion_determinism),
    ("rate_contract", criterion_rate_contract),
)


def run_acceptance(name_filter: str | None = None, echo=print):
    """Run all (or filtered) criteria; returns (results, all_passed)."""
    ctx: dict = {}
    results: list[CriterionResult] = []
    for name, fn in CRITERIA:
        if name_filter and name_filter not in name:
            continue
        t0 = time.perf_counter()
        try:
            passed, details = fn(ctx)
        except Exception as e:
            passed, details = False, f"raised {type(e).__name__}: {e}"
        res = CriterionResult(name, passed, details, time.perf_counter() - t0)
        results.append(res)
        if echo:
            echo(res.line())
    return results, all(r.passed for r in results)


def results_to_dict(results) -> dict:
    return {"schema": 1,
            "all_passed": all(r.passed for r in results),
            "criteria": [asdict(r) for r in results]}
