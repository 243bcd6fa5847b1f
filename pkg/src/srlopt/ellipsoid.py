"""Minimum-volume enclosing ellipsoids and ellipsoid similarity metrics.

An ellipsoid is ``{p : (p - c)^T A (p - c) <= 1}``. The fit solves the
log-det program with Wolfe-Atwood steps (Khachiyan's barycentric update
plus away steps) on an active subset of extreme points, growing the subset
until the optimality certificate holds for every input point.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np

from ._mvee_kernel import fit_core

DEFAULT_TOL = 1e-7
DEFAULT_MAX_ITER = 10000
RANK_TOL = 1e-9
AXIS_TIE_TOL = 1e-9
OBL_EPS = 1e-6
# below this size the active-set bookkeeping costs more than it saves
_SMALL_CLOUD = 64
_MAX_NEW_PER_ROUND = 64
# first-order phase target before the Newton polish takes over
_COARSE_TOL = 1e-2
_NEWTON_MAX_ITER = 200


class DegenerateCloud(ValueError):
    pass


class NotSPD(ValueError):
    pass


class MaxIterExceeded(RuntimeError):
    """Iteration budget ran out; carries the best iterate anyway."""

    def __init__(self, msg, ellipsoid, report):
        super().__init__(msg)
        self.ellipsoid = ellipsoid
        self.report = report


@dataclass(frozen=True)
class Ellipsoid:
    center: np.ndarray
    shape: np.ndarray
    semi_axes: np.ndarray  # descending
    axes: np.ndarray  # rows, axes[0] pairs with semi_axes[0]

    @classmethod
    def from_shape(cls, center, shape) -> Ellipsoid:
        shape = np.asarray(shape, dtype=float)
        r, axes = axes_from_shape(shape)
        return cls(np.asarray(center, dtype=float), shape, r, axes)

    @classmethod
    def _trusted(cls, center, shape) -> Ellipsoid:
        # shape produced by the fit is symmetric PD by construction
        U, s, _ = np.linalg.svd(shape)
        return cls(center, shape, *_order_axes(U, s))

    @property
    def volume(self) -> float:
        return 4.0 / 3.0 * math.pi * float(np.prod(self.semi_axes))

    def contains(self, points, slack: float = 0.0) -> np.ndarray:
        return quad_values(points, self.center, self.shape) <= 1.0 + slack

    def to_dict(self) -> dict:
        return {
            "center": self.center.tolist(),
            "shape": self.shape.tolist(),
            "semi_axes": self.semi_axes.tolist(),
            "axes": self.axes.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> Ellipsoid:
        return cls(np.array(data["center"], dtype=float), np.array(data["shape"], dtype=float),
                   np.array(data["semi_axes"], dtype=float), np.array(data["axes"], dtype=float))


@dataclass(frozen=True)
class FitReport:
    iterations: int
    duality_gap: float
    contained_fraction: float
    active_points: int
    converged: bool


def axes_from_shape(A) -> tuple[np.ndarray, np.ndarray]:
    """Semi-axes (descending) and matching unit directions of shape matrix A.

    Uses the SVD of A, r_i = 1/sqrt(sigma_i). Each direction is signed so
    that its largest-magnitude component is positive.
    """
    A = np.asarray(A, dtype=float)
    if A.shape[0] != A.shape[1] or not np.allclose(A, A.T, atol=1e-9 * max(1.0, np.abs(A).max())):
        raise NotSPD("shape matrix is not symmetric")
    U, s, _ = np.linalg.svd(A)
    if np.any(np.linalg.eigvalsh(A) <= 0):
        raise NotSPD("shape matrix is not positive definite")
    return _order_axes(U, s)


def _order_axes(U, s):
    order = np.argsort(s, kind="stable")  # smallest sigma = longest axis
    r = 1.0 / np.sqrt(s[order])
    axes = U[:, order].T.copy()
    for row in axes:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    return r, axes


@functools.lru_cache(maxsize=None)
def _direction_set(d: int) -> np.ndarray:
    if d == 2:
        ang = np.arange(8) * np.pi / 8
        return np.c_[np.cos(ang), np.sin(ang)]
    # the 13 directions through the faces, edges and corners of a cube
    dirs = []
    for v in np.ndindex(3, 3, 3):
        v = np.array(v) - 1
        if v.any() and tuple(-v) not in {tuple(x) for x in dirs}:
            dirs.append(v)
    dirs = np.array(dirs, dtype=float)
    return dirs / np.linalg.norm(dirs, axis=1, keepdims=True)


def quad_values(points, center, shape) -> np.ndarray:
    """(p - c)^T A (p - c) for every row p."""
    d = np.atleast_2d(points) - center
    return ((d @ shape) * d).sum(axis=1)


def mvee_fit(cloud, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER
             ) -> tuple[Ellipsoid, FitReport]:
    """Minimum-volume ellipsoid enclosing a 2-D or 3-D point set.

    Args:
        cloud: ``(n, d)`` array or a PointCloud.
        tol: stopping tolerance on the Khachiyan certificate,
            max_i q_i^T X(u)^-1 q_i <= (d + 1)(1 + tol).
        max_iter: total Wolfe-Atwood iterations over all active-set rounds.

    Returns:
        The ellipsoid, scaled so the farthest input point lies exactly on
        its boundary, and a FitReport whose ``duality_gap`` is the final
        certificate value.

    Raises:
        DegenerateCloud: fewer than d + 1 points or affine rank below d.
        MaxIterExceeded: budget exhausted; ``exc.ellipsoid`` holds the
            best iterate.
    """
    P = np.ascontiguousarray(getattr(cloud, "points", cloud), dtype=float)
    if P.ndim != 2 or P.shape[1] not in (2, 3):
        raise ValueError("expected an (n, 2) or (n, 3) array")
    if tol <= 0:
        raise ValueError("tol must be positive")
    d = P.shape[1]
    if len(P) < d + 1:
        raise DegenerateCloud(f"need at least {d + 1} points in {d}-D, got {len(P)}")
    status, c, A, total_it, gap, support = fit_core(
        P, _direction_set(d), float(tol), int(max_iter), _COARSE_TOL, RANK_TOL,
        _SMALL_CLOUD, _MAX_NEW_PER_ROUND, _NEWTON_MAX_ITER)
    if status == 1:
        raise DegenerateCloud(f"cloud has affine rank < {d}")
    ell = Ellipsoid._trusted(c, A)
    # A is rescaled so the farthest point sits on the boundary
    report = FitReport(int(total_it), float(gap), 1.0, int(support), status == 0)
    if not report.converged:
        raise MaxIterExceeded(f"MVEE did not reach tol={tol} in {max_iter} iterations",
                              ell, report)
    return ell, report


def plane_basis(normal) -> np.ndarray:
    """Two orthonormal in-plane directions (rows) for a plane normal."""
    return _plane_basis(tuple(float(v) for v in np.asarray(normal).reshape(3))).copy()


@functools.lru_cache(maxsize=64)
def _plane_basis(normal: tuple) -> np.ndarray:
    n = np.asarray(normal, dtype=float)
    n = n / np.linalg.norm(n)
    ref = np.eye(3)[np.argmin(np.abs(n))]
    e1 = ref - (ref @ n) * n
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(n, e1)
    return np.vstack([e1, e2])


def fit_planar(cloud, normal, thickness: float = 1e-3, tol: float = DEFAULT_TOL,
               max_iter: int = DEFAULT_MAX_ITER) -> tuple[Ellipsoid, FitReport]:
    """Fit in the plane with the given normal and give the ellipsoid a fixed
    out-of-plane semi-axis ``thickness``.

    Points are projected onto the plane through their mean; the center keeps
    the mean out-of-plane coordinate.
    """
    P = np.asarray(getattr(cloud, "points", cloud), dtype=float)
    n = np.asarray(normal, dtype=float)
    B = plane_basis(n)
    mean = P.mean(axis=0)
    ell2, report = mvee_fit((P - mean) @ B.T, tol, max_iter)
    return lift_planar(ell2, mean, B, thickness), report


def lift_planar(ell2: Ellipsoid, origin, basis, thickness: float) -> Ellipsoid:
    """3-D ellipsoid from a fit in the plane through ``origin`` spanned by the
    orthonormal rows of ``basis``, with out-of-plane semi-axis ``thickness``."""
    B = np.asarray(basis, dtype=float)
    n = np.cross(B[0], B[1])
    center = origin + ell2.center @ B
    shape = B.T @ ell2.shape @ B + np.outer(n, n) / thickness ** 2
    return Ellipsoid._trusted(center, 0.5 * (shape + shape.T))


# --- similarity metrics ------------------------------------------------------

def center_distance(e1: Ellipsoid, e2: Ellipsoid) -> float:
    return float(np.linalg.norm(e2.center - e1.center))


def axis_ambiguous(e: Ellipsoid, tie_tol: float = AXIS_TIE_TOL) -> bool:
    r = e.semi_axes
    return bool(r[0] - r[1] < tie_tol * r[0])


def major_axis_distance(e1: Ellipsoid, e2: Ellipsoid, return_flag: bool = False):
    """1 - |cos| of the angle between the major axes (axes are lines)."""
    u, v = e1.axes[0], e2.axes[0]
    cos = abs(float(u @ v)) / (np.linalg.norm(u) * np.linalg.norm(v))
    f2 = min(1.0, max(0.0, 1.0 - cos))
    if return_flag:
        return f2, axis_ambiguous(e1) or axis_ambiguous(e2)
    return f2


def oblateness(e: Ellipsoid) -> float:
    a, b, c = e.semi_axes
    return float((a - b) * (a - c) / a ** 2)


def oblateness_similarity(e1: Ellipsoid, e2: Ellipsoid, obl_eps: float = OBL_EPS,
                          return_flag: bool = False):
    """|ln(Obl2 / Obl1)| with both oblateness values clamped at ``obl_eps``."""
    o1, o2 = oblateness(e1), oblateness(e2)
    clamped = o1 < obl_eps or o2 < obl_eps
    f3 = abs(math.log(max(o2, obl_eps) / max(o1, obl_eps)))
    return (f3, clamped) if return_flag else f3


def ellipsoid_volume(semi_axes) -> float:
    a, b, c = semi_axes
    return 4.0 / 3.0 * math.pi * a * b * c


def volume_ratio(e_ref: Ellipsoid, e: Ellipsoid) -> float:
    """Reference volume over candidate volume (smaller = larger candidate)."""
    return e_ref.volume / e.volume
