"""Dense convex QP solver (operator splitting) and the velocity-tracking
problem assembly.

Problem form:  minimize 0.5 x'Hx + g'x  subject to  lb <= Ax <= ub.

The solver is ADMM in the OSQP style: Ruiz equilibration, a cached dense
Cholesky of H + sigma*I + A' diag(rho) A, over-relaxation, residual-based
rho adaptation, a primal-infeasibility certificate, and an active-set polish
step on convergence. Everything is dense; the target regime is n ~ 15 with a
few dozen rows at a 200 Hz control rate, where a solve costs well under a
millisecond.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class QpStatus(str, Enum):
    SOLVED = "solved"
    MAX_ITERS = "max_iters"
    INFEASIBLE = "infeasible"


@dataclass
class QpProblem:
    H: np.ndarray
    g: np.ndarray
    A: np.ndarray
    lb: np.ndarray
    ub: np.ndarray

    def __post_init__(self):
        self.H = np.asarray(self.H, dtype=float)
        self.g = np.asarray(self.g, dtype=float).ravel()
        n = self.g.shape[0]
        if self.H.shape != (n, n):
            raise ValueError(f"H must be {n}x{n}")
        if np.max(np.abs(self.H - self.H.T)) > 1e-10:
            raise ValueError("H must be symmetric within 1e-10")
        if self.A is None or np.size(self.A) == 0:
            self.A = np.zeros((0, n))
            self.lb = np.zeros(0)
            self.ub = np.zeros(0)
        else:
            self.A = np.asarray(self.A, dtype=float).reshape(-1, n)
            self.lb = np.asarray(self.lb, dtype=float).ravel()
            self.ub = np.asarray(self.ub, dtype=float).ravel()
        if self.lb.shape != (self.A.shape[0],) or self.ub.shape != (self.A.shape[0],):
            raise ValueError("lb/ub must match the constraint row count")
        if np.any(self.lb > self.ub):
            raise ValueError("lb must be <= ub componentwise")

    @property
    def n(self) -> int:
        return self.g.shape[0]

    @property
    def p(self) -> int:
        return self.A.shape[0]

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ self.H @ x + self.g @ x)

    def to_json(self) -> str:
        """Offline-repro dump."""
        return json.dumps({
            "H": self.H.tolist(), "g": self.g.tolist(), "A": self.A.tolist(),
            "lb": [None if v == -np.inf else v for v in self.lb],
            "ub": [None if v == np.inf else v for v in self.ub]})

    @staticmethod
    def from_json(text: str) -> "QpProblem":
        d = json.loads(text)
        lb = np.array([-np.inf if v is None else v for v in d["lb"]])
        ub = np.array([np.inf if v is None else v for v in d["ub"]])
        return QpProblem(np.array(d["H"]), np.array(d["g"]), np.array(d["A"]), lb, ub)


@dataclass
class QpSolution:
    x: np.ndarray
    status: QpStatus
    iterations: int
    primal_residual: float
    dual_residual: float
    y: np.ndarray = field(default=None, repr=False)  # constraint multipliers


_REG = 1e-9          # PSD safeguard added to H
_SIGMA = 1e-6
_ALPHA = 1.6
_RHO_EQ_SCALE = 1e3
_RUIZ_ITERS = 10
_CHECK_EVERY = 25
_EPS_INF = 1e-8


class QpSolver:
    """Operator-splitting QP solver; instances own their scratch state and
    must not be shared between threads mid-solve."""

    def solve(self, prob: QpProblem, warm_start: np.ndarray | None = None,
              tol: float = 1e-6, max_iters: int = 4000,
              warm_start_dual: np.ndarray | None = None) -> QpSolution:
        n, p = prob.n, prob.p
        H0 = prob.H + _REG * np.eye(n)
        g0, A0, lb0, ub0 = prob.g, prob.A, prob.lb, prob.ub

        if p == 0:
            x = np.linalg.solve(H0, -g0)
            r_d = float(np.max(np.abs(H0 @ x + g0))) if n else 0.0
            return QpSolution(x, QpStatus.SOLVED, 0, 0.0, r_d, np.zeros(0))

        # Ruiz equilibration of the KKT block [[H, A'], [A, 0]].
        d = np.ones(n)
        e = np.ones(p)
        H, A, g, lb, ub = H0.copy(), A0.copy(), g0.copy(), lb0.copy(), ub0.copy()
        for _ in range(_RUIZ_ITERS):
            cn = np.sqrt(np.maximum(np.max(np.abs(H), axis=0),
                                    np.max(np.abs(A), axis=0) if p else 0.0))
            cp = np.sqrt(np.max(np.abs(A), axis=1))
            cn[cn < 1e-10] = 1.0
            cp[cp < 1e-10] = 1.0
            Dn, Ep = 1.0 / cn, 1.0 / cp
            H = H * Dn[:, None] * Dn[None, :]
            A = A * Ep[:, None] * Dn[None, :]
            d *= Dn
            e *= Ep
        g = d * g0
        lb = e * lb0
        ub = e * ub0
        cost_scale = 1.0 / max(1.0, float(np.max(np.abs(H))), float(np.max(np.abs(g))))
        H = H * cost_scale
        g = g * cost_scale

        eq = (ub0 - lb0) < 1e-12
        rho_bar = 0.1
        rho = np.where(eq, _RHO_EQ_SCALE * rho_bar, rho_bar)

        x = np.zeros(n) if warm_start is None else np.asarray(warm_start, dtype=float) / d
        y = (np.zeros(p) if warm_start_dual is None
             else np.asarray(warm_start_dual, dtype=float) * cost_scale / e)
        z = np.clip(A @ x, lb, ub)

        L = np.linalg.cholesky(H + _SIGMA * np.eye(n) + (A.T * rho) @ A)

        status = QpStatus.MAX_ITERS
        r_prim = r_dual = np.inf
        it = 0
        for it in range(1, max_iters + 1):
            rhs = _SIGMA * x - g + A.T @ (rho * z - y)
            x_t = np.linalg.solve(L.T, np.linalg.solve(L, rhs))
            z_t = A @ x_t
            x_new = _ALPHA * x_t + (1 - _ALPHA) * x
            z_rel = _ALPHA * z_t + (1 - _ALPHA) * z
            z_new = np.clip(z_rel + y / rho, lb, ub)
            dy = rho * (z_rel - z_new)
            y_new = y + dy
            x, z = x_new, z_new
            y_prev, y = y, y_new

            if it % _CHECK_EVERY == 0 or it == max_iters:
                xu = d * x
                zu = z / e
                yu = y * e / cost_scale
                r_prim = float(np.max(np.abs(A0 @ xu - zu))) if p else 0.0
                r_dual = float(np.max(np.abs(H0 @ xu + g0 + A0.T @ yu)))
                if r_prim <= tol and r_dual <= tol:
                    status = QpStatus.SOLVED
                    break
                dyu = (y - y_prev) * e / cost_scale
                if self._primal_infeasible(A0, lb0, ub0, dyu):
                    return QpSolution(d * x, QpStatus.INFEASIBLE, it, r_prim, r_dual,
                                      y * e / cost_scale)
                # Residual-balancing rho adaptation.
                denom_p = max(float(np.max(np.abs(A0 @ xu))), float(np.max(np.abs(zu))), 1e-12)
                denom_d = max(float(np.max(np.abs(H0 @ xu))), float(np.max(np.abs(g0))),
                              float(np.max(np.abs(A0.T @ yu))) if p else 0.0, 1e-12)
                ratio = (r_prim / denom_p) / max(r_dual / denom_d, 1e-12)
                scale = float(np.sqrt(ratio))
                if scale > 5.0 or scale < 0.2:
                    rho_bar = float(np.clip(rho_bar * scale, 1e-6, 1e6))
                    rho = np.where(eq, _RHO_EQ_SCALE * rho_bar, rho_bar)
                    L = np.linalg.cholesky(H + _SIGMA * np.eye(n) + (A.T * rho) @ A)

        x_out = d * x
        y_out = y * e / cost_scale
        if status == QpStatus.SOLVED:
            x_p, y_p = self._polish(H0, g0, A0, lb0, ub0, x_out, y_out)
            if x_p is not None:
                rp = float(np.max(np.abs(np.clip(A0 @ x_p, lb0, ub0) - A0 @ x_p)))
                rd = float(np.max(np.abs(H0 @ x_p + g0 + A0.T @ y_p)))
                if max(rp, rd) <= max(r_prim, r_dual):
                    x_out, y_out, r_prim, r_dual = x_p, y_p, rp, rd
        return QpSolution(x_out, status, it, r_prim, r_dual, y_out)

    @staticmethod
    def _primal_infeasible(A, lb, ub, dy) -> bool:
        nrm = float(np.max(np.abs(dy))) if dy.size else 0.0
        if nrm < _EPS_INF:
            return False
        dy = dy / nrm
        if float(np.max(np.abs(A.T @ dy))) > _EPS_INF:
            return False
        pos = np.maximum(dy, 0.0)
        neg = np.minimum(dy, 0.0)
        if np.any(pos[np.isinf(ub)] > _EPS_INF) or np.any(neg[np.isinf(lb)] < -_EPS_INF):
            return False
        finite_u = np.where(np.isinf(ub), 0.0, ub)
        finite_l = np.where(np.isinf(lb), 0.0, lb)
        support = float(finite_u @ pos + finite_l @ neg)
        return support < -_EPS_INF

    @staticmethod
    def _polish(H, g, A, lb, ub, x, y, eps_active: float = 1e-7):
        """Equality-solve on the active set implied by the multiplier signs."""
        lo = y < -eps_active
        hi = y > eps_active
        act = lo | hi
        if not np.any(act):
            try:
                return np.linalg.solve(H, -g), np.zeros_like(y)
            except np.linalg.LinAlgError:
                return None, None
        Aa = A[act]
        ba = np.where(lo[act], lb[act], ub[act])
        m = Aa.shape[0]
        K = np.block([[H, Aa.T], [Aa, -1e-12 * np.eye(m)]])
        rhs = np.concatenate([-g, ba])
        try:
            sol = np.linalg.solve(K, rhs)
        except np.linalg.LinAlgError:
            sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
        x_p = sol[:H.shape[0]]
        y_p = np.zeros_like(y)
        y_p[act] = sol[H.shape[0]:]
        # Reject if the polished point leaves the feasible set.
        viol = max(float(np.max(A @ x_p - ub, initial=0.0)),
                   float(np.max(lb - A @ x_p, initial=0.0)))
        if viol > 1e-7:
            return None, None
        return x_p, y_p


_DEFAULT_SOLVER = QpSolver()


def solve(prob: QpProblem, warm_start: np.ndarray | None = None,
          tol: float = 1e-6, max_iters: int = 4000,
          warm_start_dual: np.ndarray | None = None) -> QpSolution:
    return _DEFAULT_SOLVER.solve(prob, warm_start, tol, max_iters, warm_start_dual)


# ---------------------------------------------------------------------------
# Velocity-tracking problem assembly
# ---------------------------------------------------------------------------

def assemble_tracking_qp(state, commands, model, gamma: np.ndarray,
                         dgamma: np.ndarray, horizon: float, eps_gamma: float,
                         angular_weight: float = 1.0) -> QpProblem:
    """Build the joint-velocity tracking QP.

    Objective: sum_i ||xdot_des_i - Jx_i qd||^2 + alpha_i * w * ||w_des_i - JR_i qd||^2.
    Constraints: collision clearance over the horizon, position limits over
    the horizon, and velocity bounds.

    commands: per-fingertip objects with .linear, .angular, .alpha.
    """
    n = model.n
    H = np.zeros((n, n))
    g = np.zeros(n)
    for i, cmd in enumerate(commands):
        Jx = state.tip_Jx[i]
        H += 2.0 * Jx.T @ Jx
        g -= 2.0 * Jx.T @ np.asarray(cmd.linear, dtype=float)
        if cmd.alpha:
            JR = state.tip_JR[i]
            H += 2.0 * angular_weight * JR.T @ JR
            g -= 2.0 * angular_weight * JR.T @ np.asarray(cmd.angular, dtype=float)

    k = gamma.shape[0]
    A = np.vstack([
        dgamma * horizon,
        np.eye(n) * horizon,
        np.eye(n),
    ]) if k else np.vstack([np.eye(n) * horizon, np.eye(n)])
    lb = np.concatenate([
        (eps_gamma - gamma) if k else np.zeros(0),
        model.q_min - state.q,
        model.qd_min,
    ])
    ub = np.concatenate([
        np.full(k, np.inf),
        model.q_max - state.q,
        model.qd_max,
    ])
    return QpProblem(H, g, A, lb, ub)
