"""Compiled planar 2R geometry for the support mode.

Angles are measured from straight down towards forward; ``psi`` is the
relative knee angle. Mirrors :func:`srlopt.kinematics.planar_ik`.
"""
import math

import numpy as np
from numba import njit

_TWO_PI = 2.0 * math.pi


@njit(cache=True, nogil=True)
def _wrap(a):
    return (a + math.pi) % _TWO_PI - math.pi


@njit(cache=True, nogil=True)
def _branch(a, b, dy, dz, sgn):
    # returns (reachable, hip angle, knee angle)
    cos_psi = (dy * dy + dz * dz - a * a - b * b) / (2.0 * a * b)
    if abs(cos_psi) > 1.0 + 1e-12:
        return False, 0.0, 0.0
    cos_psi = min(1.0, max(-1.0, cos_psi))
    psi = sgn * math.acos(cos_psi)
    th = math.atan2(dy, -dz) - math.atan2(b * math.sin(psi), a + b * math.cos(psi))
    return True, _wrap(th), psi


@njit(cache=True, nogil=True)
def contact_mask(forward, a, b, delta, drop, lim2, lim3):
    """Tip can touch the floor at each forward offset within the limits."""
    tol = 1e-12
    out = np.zeros(forward.shape[0], dtype=np.bool_)
    for i in range(forward.shape[0]):
        for sgn in (1.0, -1.0):
            ok, th2, psi = _branch(a, b, forward[i], -drop, sgn)
            if not ok:
                break
            th3 = _wrap(psi - delta)
            if (lim2[0] - tol <= th2 <= lim2[1] + tol) and (lim3[0] - tol <= th3 <= lim3[1] + tol):
                out[i] = True
                break
    return out


@njit(cache=True, nogil=True)
def sts_forces(hip_y, hip_z, c, l2, l3, b, delta, tau, lim2, lim3, sing_tol):
    """Per-pose best force and a flag for poses only reachable singularly."""
    tol = 1e-12
    k = hip_y.shape[0]
    forces = np.zeros(k)
    skipped = np.zeros(k, dtype=np.bool_)
    for p in range(k):
        dy = c - hip_y[p]
        dz = -hip_z[p]
        singular = False
        regular = False
        for sgn in (1.0, -1.0):
            ok, th2, psi = _branch(l2, b, dy, dz, sgn)
            if not ok:
                break
            th3 = _wrap(psi - delta)
            if not ((lim2[0] - tol <= th2 <= lim2[1] + tol) and (lim3[0] - tol <= th3 <= lim3[1] + tol)):
                continue
            if abs(math.sin(psi)) < sing_tol:
                singular = True
                continue
            regular = True
            knee_y = hip_y[p] + l2 * math.sin(th2)
            ankle_y = knee_y + l3 * math.sin(th2 + th3)
            levers = (abs(dy), abs(c - knee_y), abs(c - ankle_y))
            f = np.inf
            for j in range(3):
                if tau[j] == 0.0:
                    f = 0.0
                elif levers[j] > 0.0:
                    f = min(f, tau[j] / levers[j])
            if f > forces[p]:
                forces[p] = f
        skipped[p] = singular and not regular
    return forces, skipped
