"""Two-finger antipodal grasp stability and its descent directions.

The stability value is the sum of two angles: each between a fingertip's
pressing normal and the line toward the other contact. Zero means the grasp
is exactly antipodal. Normals here are *pressing* normals (the direction a
fingertip pushes, i.e. the negated object outward normal); with that
convention the antipodal condition is f = 0.

Gradients are taken with respect to the contact positions while holding the
normals fixed; they are exact derivatives of the arccos expressions and are
pinned against finite differences in the tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import AngleSingular, ZeroVector

EPS_SEP = 1e-6
TOL_ANGLE = 1e-6  # rad; arccos derivative is singular at 0 and pi


@dataclass(frozen=True)
class ContactPair:
    """Two contact positions with unit pressing normals (world frame)."""

    c1: np.ndarray
    c2: np.ndarray
    n1: np.ndarray
    n2: np.ndarray

    def __post_init__(self):
        for name in ("c1", "c2", "n1", "n2"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).reshape(3))
        for name in ("n1", "n2"):
            n = float(np.linalg.norm(getattr(self, name)))
            if abs(n - 1.0) > 1e-6:
                raise ValueError(f"{name} must be unit length (norm {n:.2e})")
        if float(np.linalg.norm(self.c2 - self.c1)) <= EPS_SEP:
            raise ValueError("contact points must be separated")


@dataclass(frozen=True)
class StabilityEval:
    phi1: float
    phi2: float
    f: float
    mean_angle_deg: float


def angle_between(a: np.ndarray, b: np.ndarray) -> float:
    """Angle in [0, pi] between two vectors; raises ZeroVector on degenerate input."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na < EPS_SEP or nb < EPS_SEP:
        raise ZeroVector(f"vector norms {na:.2e}, {nb:.2e} below {EPS_SEP}")
    return math.acos(min(1.0, max(-1.0, float(a @ b) / (na * nb))))


def evaluate(cp: ContactPair) -> StabilityEval:
    phi1 = angle_between(cp.n1, cp.c2 - cp.c1)
    phi2 = angle_between(cp.n2, cp.c1 - cp.c2)
    f = phi1 + phi2
    return StabilityEval(phi1, phi2, f, math.degrees(0.5 * f))


def _grad_angle_wrt_dir(n: np.ndarray, u: np.ndarray) -> np.ndarray:
    """d/du of angle(n, u) for unit n. Norm of the result is exactly 1/|u|."""
    L = float(np.linalg.norm(u))
    if L < EPS_SEP:
        raise ZeroVector("direction vector too short to differentiate")
    uh = u / L
    c = float(n @ uh)
    c = min(1.0, max(-1.0, c))
    s2 = 1.0 - c * c
    if s2 < math.sin(TOL_ANGLE) ** 2:
        raise AngleSingular(f"angle {math.acos(c):.3e} rad within {TOL_ANGLE} of 0 or pi")
    return -(n - c * uh) / (L * math.sqrt(s2))


def grad_phi(cp: ContactPair, which_angle: int, wrt: str) -> np.ndarray:
    """Analytic gradient of phi_1 or phi_2 with respect to c1 or c2.

    Normals are held fixed: they are sensor readings, not functions of the
    contact positions.
    """
    if which_angle not in (1, 2):
        raise ValueError("which_angle must be 1 or 2")
    if wrt not in ("c1", "c2"):
        raise ValueError("wrt must be 'c1' or 'c2'")
    if which_angle == 1:
        g = _grad_angle_wrt_dir(cp.n1, cp.c2 - cp.c1)  # d phi1 / d(c2 - c1)
        return g if wrt == "c2" else -g
    g = _grad_angle_wrt_dir(cp.n2, cp.c1 - cp.c2)  # d phi2 / d(c1 - c2)
    return g if wrt == "c1" else -g


def _tangent_project(n: np.ndarray, v: np.ndarray) -> np.ndarray:
    return v - n * float(n @ v)


def pgd_direction(cp: ContactPair) -> tuple[np.ndarray, np.ndarray]:
    """Tangent-projected steepest-descent direction of the full stability sum.

    Unnormalized; the caller picks the speed. Both fingers descend the same
    objective, which makes the per-finger contributions prone to cancel.
    """
    g1 = grad_phi(cp, 1, "c1") + grad_phi(cp, 2, "c1")
    g2 = grad_phi(cp, 1, "c2") + grad_phi(cp, 2, "c2")
    return -_tangent_project(cp.n1, g1), -_tangent_project(cp.n2, g2)


def cfgd_direction(cp: ContactPair) -> tuple[np.ndarray, np.ndarray]:
    """Cross-finger descent: each contact moves to shrink the *other* angle."""
    d1 = -_tangent_project(cp.n1, grad_phi(cp, 2, "c1"))
    d2 = -_tangent_project(cp.n2, grad_phi(cp, 1, "c2"))
    return d1, d2


# ---------------------------------------------------------------------------
# Validation-free raw-array paths for hot loops (identical math to the
# public functions above; the descent lab calls these millions of times).
# ---------------------------------------------------------------------------

def _phi_raw(c1, c2, n1, n2) -> tuple[float, float, float]:
    """(phi1, phi2, separation); assumes unit normals and separated contacts."""
    u = c2 - c1
    L = math.sqrt(float(u @ u))
    uh = u / L
    phi1 = math.acos(min(1.0, max(-1.0, float(n1 @ uh))))
    phi2 = math.acos(min(1.0, max(-1.0, float(n2 @ -uh))))
    return phi1, phi2, L


def _directions_raw(method_is_pgd: bool, c1, c2, n1, n2):
    """PGD or CFGD directions; raises AngleSingular near the arccos endpoints."""
    u = c2 - c1
    L = math.sqrt(float(u @ u))
    uh = u / L
    ga = _grad_raw(n1, uh, L)      # d phi1 / d(c2 - c1)
    gb = _grad_raw(n2, -uh, L)     # d phi2 / d(c1 - c2)
    if method_is_pgd:
        g1 = -ga + gb
        g2 = ga - gb
    else:
        g1 = gb                    # d phi2 / d c1
        g2 = ga                    # d phi1 / d c2
    d1 = -(g1 - n1 * float(n1 @ g1))
    d2 = -(g2 - n2 * float(n2 @ g2))
    return d1, d2


def _grad_raw(n, uh, L):
    c = min(1.0, max(-1.0, float(n @ uh)))
    s2 = 1.0 - c * c
    if s2 < _SIN_TOL_SQ:
        raise AngleSingular(f"angle {math.acos(c):.3e} rad within {TOL_ANGLE} of 0 or pi")
    return -(n - c * uh) / (L * math.sqrt(s2))


_SIN_TOL_SQ = math.sin(TOL_ANGLE) ** 2
