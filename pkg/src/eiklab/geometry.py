"""Shared geometric primitives: boxes, unit-sphere partitions, direction refinement.

Everything here is deterministic: partitions have a fixed direction order for a
given (dim, level), and refinement routines track the best value ever evaluated
so that more iterations can never return a worse extremum.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

INVPHI = (np.sqrt(5.0) - 1.0) / 2.0  # golden ratio conjugate, bracket shrink factor


@dataclass(frozen=True)
class Box:
    """Axis-aligned box, the working domain for audits and spot checks."""

    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        if lo.ndim != 1 or lo.shape != hi.shape:
            raise ValueError("box corners must be 1-d and of equal length")
        if not np.all(hi > lo):
            raise ValueError("box must have positive extent in every axis")
        object.__setattr__(self, "lo", tuple(float(v) for v in lo))
        object.__setattr__(self, "hi", tuple(float(v) for v in hi))

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def center(self) -> np.ndarray:
        return (np.asarray(self.lo) + np.asarray(self.hi)) / 2.0

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(np.asarray(self.hi) - np.asarray(self.lo)))

    def corners(self) -> np.ndarray:
        """All 2^dim corner points, lexicographic order."""
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        n = self.dim
        out = np.empty((2**n, n))
        for i in range(2**n):
            for a in range(n):
                out[i, a] = hi[a] if (i >> (n - 1 - a)) & 1 else lo[a]
        return out

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        return np.all((x >= lo) & (x <= hi), axis=-1)

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return rng.uniform(self.lo, self.hi, size=(count, self.dim))


def unit_rows(v: np.ndarray) -> np.ndarray:
    """Normalize the trailing axis; rows of zero norm raise."""
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(n == 0.0):
        raise ValueError("cannot normalize a zero vector")
    return v / n


@dataclass(frozen=True)
class SpherePartition:
    """Deterministic, ordered set of unit directions.

    2D: ``level`` equally spaced angles 2*pi*k/level, k ascending; doubling the
    level keeps the original directions as a subset, which is what the
    refinement-monotonicity contracts rely on.
    3D: icosphere vertices after ``level`` edge subdivisions, rows sorted
    lexicographically.
    """

    dim: int
    level: int
    directions: np.ndarray = field(repr=False)

    @property
    def count(self) -> int:
        return self.directions.shape[0]

    @property
    def resolution(self) -> float:
        """Worst-case angle from any unit direction to the nearest member."""
        if self.dim == 2:
            return np.pi / self.level
        # icosphere edge length shrinks by ~2 per subdivision
        return 1.2 / (2.0**self.level)


def make_sphere_partition(dim: int, level: int) -> SpherePartition:
    if dim == 2:
        if level < 4:
            raise ValueError("2-d partition needs at least 4 directions")
        theta = 2.0 * np.pi * np.arange(level) / level
        dirs = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    elif dim == 3:
        if level < 0 or level > 7:
            raise ValueError("3-d subdivision level must be in [0, 7]")
        dirs = _icosphere(level)
    else:
        raise ValueError("sphere partitions support dim 2 or 3")
    err = np.abs(np.linalg.norm(dirs, axis=1) - 1.0).max()
    assert err <= 1e-12
    return SpherePartition(dim=dim, level=level, directions=dirs)


def _icosphere(level: int) -> np.ndarray:
    t = (1.0 + np.sqrt(5.0)) / 2.0
    verts = [
        (-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
        (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
        (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1),
    ]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [np.asarray(v, dtype=float) / np.linalg.norm(v) for v in verts]

    def midpoint(cache, a, b):
        key = (min(a, b), max(a, b))
        if key not in cache:
            m = verts[a] + verts[b]
            verts.append(m / np.linalg.norm(m))
            cache[key] = len(verts) - 1
        return cache[key]

    for _ in range(level):
        cache = {}
        new_faces = []
        for a, b, c in faces:
            ab = midpoint(cache, a, b)
            bc = midpoint(cache, b, c)
            ca = midpoint(cache, c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    arr = np.asarray(verts)
    order = np.lexsort((arr[:, 2], arr[:, 1], arr[:, 0]))
    return arr[order]


def angles_of(dirs: np.ndarray) -> np.ndarray:
    return np.arctan2(dirs[..., 1], dirs[..., 0])


def direction_2d(theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    return np.stack([np.cos(theta), np.sin(theta)], axis=-1)


def extrapolate_to_zero(m1, m2, m3):
    """Zero-step limit of m(h) from samples at h, 2h, 4h.

    Exact when m is affine plus quadratic in h, so both linear drift and
    curvature bias cancel; use where direct evaluation at tiny h loses
    precision to cancellation.
    """
    return (8.0 * np.asarray(m1) - 6.0 * np.asarray(m2) + np.asarray(m3)) / 3.0


def golden_refine_max(f, theta0, half_width, iters):
    """Golden-section maximization of ``f`` over angle brackets.

    ``f`` maps an array of angles to an array of values; ``theta0`` and the
    returned arrays are vectorized over an arbitrary batch shape. The result is
    the best (angle, value) pair among every point evaluated, including the
    bracket centers, so it is monotone in ``iters``.
    """
    theta0 = np.asarray(theta0, dtype=float)
    best_t = theta0.copy()
    best_f = np.asarray(f(theta0), dtype=float).copy()
    a = theta0 - half_width
    b = theta0 + half_width
    for _ in range(iters):
        span = b - a
        c = b - INVPHI * span
        d = a + INVPHI * span
        fc = np.asarray(f(c), dtype=float)
        fd = np.asarray(f(d), dtype=float)
        for t, v in ((c, fc), (d, fd)):
            gain = v > best_f
            best_t = np.where(gain, t, best_t)
            best_f = np.where(gain, v, best_f)
        left = fc >= fd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
    return best_t, best_f


def ring_refine_max_3d(f, d0, radius, iters, ring=8):
    """Local spherical maximization around direction ``d0`` (single direction).

    Samples a ring of tangent-plane offsets at a shrinking angular radius and
    keeps the best direction ever seen. Linear convergence is plenty for the
    partition resolutions used here.
    """
    d0 = unit_rows(np.asarray(d0, dtype=float))
    best_d = d0
    best_f = float(f(d0[None, :])[0])
    phi = 2.0 * np.pi * np.arange(ring) / ring
    rho = radius
    for _ in range(iters):
        # orthonormal tangent frame at the current best direction
        helper = np.array([1.0, 0.0, 0.0])
        if abs(best_d @ helper) > 0.9:
            helper = np.array([0.0, 1.0, 0.0])
        t1 = np.cross(best_d, helper)
        t1 /= np.linalg.norm(t1)
        t2 = np.cross(best_d, t1)
        cand = (
            np.cos(rho) * best_d[None, :]
            + np.sin(rho) * (np.cos(phi)[:, None] * t1 + np.sin(phi)[:, None] * t2)
        )
        vals = np.asarray(f(cand), dtype=float)
        j = int(np.argmax(vals))
        if vals[j] > best_f:
            best_f = float(vals[j])
            best_d = cand[j]
        else:
            rho *= 0.6
    return best_d, best_f
