"""Minimum-time Dirichlet solver on regular grids.

The value function u(x) = inf{ t : some admissible path reaches the domain
complement by time t } is computed by semi-Lagrangian Gauss-Seidel sweeping:
each node takes the minimum over ring directions of (time to cross to the
one-ring square) + (interpolated value there), where the crossing time of a
displacement z is the dual gauge H0(x, z). Four diagonal sweep orderings are
cycled so information flows along every characteristic quadrant.

Nodes outside the domain hold the boundary value zero; interior nodes adjacent
to the complement (the band) are initialized by their direct crossing
candidates and kept fixed, which is exact whenever the true optimal exit from
a band node stays within its one-ring, as it does for the convex and annular
shapes used here.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import ndimage

try:
    from numba import njit as _njit
    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False

    def _njit(**_kw):
        def deco(f):
            return f
        return deco


class ConfigurationError(ValueError):
    """Invalid grid, domain, or solver configuration."""


@dataclass(frozen=True)
class GridSpec:
    """Regular node-centered grid: node (i, j) sits at origin + spacing * (i, j)."""

    origin: tuple
    spacing: float
    dims: tuple

    def __post_init__(self):
        origin = tuple(float(v) for v in self.origin)
        dims = tuple(int(v) for v in self.dims)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", float(self.spacing))
        if len(origin) != len(dims):
            raise ConfigurationError("origin and dims must have equal length")
        if len(dims) not in (2, 3):
            raise ConfigurationError("grids are two- or three-dimensional")
        if self.spacing <= 0.0:
            raise ConfigurationError("spacing must be positive")
        if any(n < 8 for n in dims):
            raise ConfigurationError("each grid axis needs at least 8 nodes")

    @property
    def dim(self) -> int:
        return len(self.dims)

    @property
    def shape(self) -> tuple:
        return self.dims

    def axis_coords(self, axis: int) -> np.ndarray:
        return self.origin[axis] + self.spacing * np.arange(self.dims[axis])

    def nodes(self) -> np.ndarray:
        """All node coordinates, shape dims + (dim,)."""
        axes = [self.axis_coords(a) for a in range(self.dim)]
        grids = np.meshgrid(*axes, indexing="ij")
        return np.stack(grids, axis=-1)

    def to_json_dict(self) -> dict:
        return {"origin": list(self.origin), "spacing": self.spacing,
                "dims": list(self.dims)}


# ---------------------------------------------------------------------------
# domain shapes; inside() is the strict interior


@dataclass(frozen=True)
class Ball:
    center: tuple
    radius: float

    def inside(self, pts: np.ndarray) -> np.ndarray:
        d = np.asarray(pts, dtype=float) - np.asarray(self.center, dtype=float)
        return np.linalg.norm(d, axis=-1) < self.radius


@dataclass(frozen=True)
class BoxShape:
    lo: tuple
    hi: tuple

    def inside(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        return np.all((pts > lo) & (pts < hi), axis=-1)


@dataclass(frozen=True)
class Annulus:
    center: tuple
    inner_radius: float
    outer_radius: float

    def __post_init__(self):
        if not 0.0 < self.inner_radius < self.outer_radius:
            raise ConfigurationError("annulus radii must satisfy 0 < inner < outer")

    def inside(self, pts: np.ndarray) -> np.ndarray:
        d = np.linalg.norm(np.asarray(pts, dtype=float)
                           - np.asarray(self.center, dtype=float), axis=-1)
        return (d > self.inner_radius) & (d < self.outer_radius)


@dataclass(frozen=True)
class ImplicitShape:
    """Interior is {signed_fn < 0}."""

    signed_fn: Callable = field(repr=False)

    def inside(self, pts: np.ndarray) -> np.ndarray:
        return np.asarray(self.signed_fn(np.asarray(pts, dtype=float))) < 0.0


_CROSS = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)
_FULL = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class DomainMask:
    grid: GridSpec
    inside: np.ndarray = field(repr=False)
    band: np.ndarray = field(repr=False)
    n_boundary_components: int
    mask_hash: str

    @property
    def inside_count(self) -> int:
        return int(np.count_nonzero(self.inside))


def _axis_neighbor_outside(inside: np.ndarray) -> np.ndarray:
    out = np.zeros_like(inside)
    pad = np.pad(inside, 1, constant_values=False)
    core = tuple(slice(1, -1) for _ in range(inside.ndim))
    for axis in range(inside.ndim):
        for shift in (-1, 1):
            out |= ~np.roll(pad, shift, axis=axis)[core]
    return out & inside


def compute_band(inside: np.ndarray) -> np.ndarray:
    """Interior nodes with at least one of the 4 axis neighbors outside."""
    return _axis_neighbor_outside(inside)


def _hash_mask(grid: GridSpec, inside: np.ndarray) -> str:
    h = hashlib.sha256()
    h.update(np.asarray(grid.origin, dtype=np.float64).tobytes())
    h.update(np.float64(grid.spacing).tobytes())
    h.update(np.asarray(grid.dims, dtype=np.int64).tobytes())
    h.update(inside.astype(np.uint8).tobytes())
    return h.hexdigest()


def build_domain(grid: GridSpec, shape) -> DomainMask:
    """Rasterize a shape onto the grid and validate it for the solver.

    The interior must be nonempty, 4-connected, strictly contained in the grid
    (no interior node on the grid edge), and must leave a nonempty complement.
    """
    if grid.dim != 2:
        raise ConfigurationError("domain construction is two-dimensional")
    inside = np.asarray(shape.inside(grid.nodes()), dtype=bool)
    if inside.shape != grid.shape:
        raise ConfigurationError("shape.inside returned an unexpected shape")
    if not inside.any():
        raise ConfigurationError("domain interior contains no grid node")
    if inside.all():
        raise ConfigurationError("domain complement contains no grid node")
    edge = np.zeros_like(inside)
    edge[0, :] = edge[-1, :] = True
    edge[:, 0] = edge[:, -1] = True
    if (inside & edge).any():
        raise ConfigurationError("domain must be strictly contained in the grid")
    _, n_in = ndimage.label(inside, structure=_CROSS)
    if n_in != 1:
        raise ConfigurationError(f"domain interior is disconnected ({n_in} parts)")
    _, n_out = ndimage.label(~inside, structure=_FULL)
    return DomainMask(grid=grid, inside=inside, band=compute_band(inside),
                      n_boundary_components=int(n_out),
                      mask_hash=_hash_mask(grid, inside))


# ---------------------------------------------------------------------------
# ring geometry


def ring_table(direction_count: int, spacing: float):
    """Crossing geometry for the one-ring square, shared by every node.

    Returns (z, off_lo, off_hi, w): displacement to the ring boundary per
    direction, the two ring-node offsets bracketing the crossing point, and the
    interpolation weight on the second. Directions hitting a node exactly have
    w = 0. Requires a multiple of 8 directions so the 4 cardinal and 4 diagonal
    node-exact crossings are always present.
    """
    k = int(direction_count)
    if k < 16 or k % 8 != 0:
        raise ConfigurationError("direction count must be a multiple of 8, at least 16")
    ang = 2.0 * np.pi * np.arange(k) / k
    e = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    scale = spacing / np.max(np.abs(e), axis=1)
    z = e * scale[:, None]
    dominant = (np.abs(e[:, 1]) > np.abs(e[:, 0])).astype(np.int64)
    off_lo = np.zeros((k, 2), dtype=np.int64)
    off_hi = np.zeros((k, 2), dtype=np.int64)
    w = np.zeros(k)
    for i in range(k):
        a = dominant[i]
        o = 1 - a
        s = 1 if z[i, a] > 0 else -1
        c = z[i, o] / spacing
        lo = min(int(np.floor(c + 1e-14)), 0)
        lo = max(lo, -1)
        wi = c - lo
        if wi < 1e-14:
            wi = 0.0
        elif wi > 1.0 - 1e-14:
            lo += 1
            wi = 0.0
        off_lo[i, a] = s
        off_lo[i, o] = lo
        off_hi[i, a] = s
        off_hi[i, o] = lo + 1
        w[i] = wi
    return z, off_lo, off_hi, w


def _sweep_once(values, upd, order, cost, d_lo, d_hi, w):
    """One Gauss-Seidel pass in the given node order; returns the max decrease."""
    dmax = 0.0
    n = order.shape[0]
    kk = w.shape[0]
    for ii in range(n):
        i = order[ii]
        base = upd[i]
        old = values[base]
        best = old
        for k in range(kk):
            u1 = values[base + d_lo[k]]
            wk = w[k]
            if wk <= 0.0:
                ui = u1
            else:
                if u1 == np.inf:
                    continue
                u2 = values[base + d_hi[k]]
                if u2 == np.inf:
                    continue
                ui = (1.0 - wk) * u1 + wk * u2
            if ui == np.inf:
                continue
            cand = cost[i, k] + ui
            if cand < best:
                best = cand
        if best < old:
            values[base] = best
            d = old - best
            if d > dmax:
                dmax = d
    return dmax


if _HAVE_NUMBA:
    _sweep_jit = _njit(cache=True)(_sweep_once)
else:  # pragma: no cover
    _sweep_jit = _sweep_once


@dataclass(frozen=True)
class ValueField:
    """Converged minimum-time field. Complement nodes hold the boundary value 0."""

    grid: GridSpec
    mask: DomainMask
    values: np.ndarray = field(repr=False)
    iterations: int
    residual: float
    converged: bool
    direction_count: int

    def interp(self, pts: np.ndarray) -> np.ndarray:
        return interp_values(self.grid, self.values, pts)


def interp_values(grid: GridSpec, values: np.ndarray, pts) -> np.ndarray:
    """Bilinear interpolation, constant beyond the grid hull, +inf aware.

    A corner carrying +inf makes the result +inf only when its weight is
    positive, so node-exact queries next to unreachable pockets stay finite.
    """
    pts = np.asarray(pts, dtype=float)
    scalar = pts.ndim == 1
    p = np.atleast_2d(pts)
    nx, ny = grid.dims
    fx = (p[:, 0] - grid.origin[0]) / grid.spacing
    fy = (p[:, 1] - grid.origin[1]) / grid.spacing
    i0 = np.clip(np.floor(fx).astype(np.int64), 0, nx - 2)
    j0 = np.clip(np.floor(fy).astype(np.int64), 0, ny - 2)
    tx = np.clip(fx - i0, 0.0, 1.0)
    ty = np.clip(fy - j0, 0.0, 1.0)
    out = np.zeros(p.shape[0])
    for di, dj, wt in ((0, 0, (1 - tx) * (1 - ty)), (1, 0, tx * (1 - ty)),
                       (0, 1, (1 - tx) * ty), (1, 1, tx * ty)):
        v = values[i0 + di, j0 + dj]
        contrib = np.where(wt > 0.0, v * wt, 0.0)
        out = out + contrib
    return out[0] if scalar else out


def _band_init(model, grid, inside, band, z, off_lo, off_hi, w):
    """Direct crossing candidates for band nodes; interior ring arms are +inf."""
    nx, ny = grid.dims
    bi, bj = np.nonzero(band)
    xb = np.stack([grid.origin[0] + grid.spacing * bi,
                   grid.origin[1] + grid.spacing * bj], axis=1)
    cost = np.asarray(model.polar(xb[:, None, :], z[None, :, :]), dtype=float)
    state = np.where(inside, np.inf, 0.0)
    best = np.full(bi.shape[0], np.inf)
    for k in range(z.shape[0]):
        i1 = bi + off_lo[k, 0]
        j1 = bj + off_lo[k, 1]
        ok = (i1 >= 0) & (i1 < nx) & (j1 >= 0) & (j1 < ny)
        u1 = np.where(ok, state[np.clip(i1, 0, nx - 1), np.clip(j1, 0, ny - 1)], np.inf)
        if w[k] <= 0.0:
            ui = u1
        else:
            i2 = bi + off_hi[k, 0]
            j2 = bj + off_hi[k, 1]
            ok2 = (i2 >= 0) & (i2 < nx) & (j2 >= 0) & (j2 < ny)
            u2 = np.where(ok2, state[np.clip(i2, 0, nx - 1), np.clip(j2, 0, ny - 1)],
                          np.inf)
            both = np.isfinite(u1) & np.isfinite(u2)
            ui = np.where(both, (1.0 - w[k]) * u1 + w[k] * u2, np.inf)
        cand = np.where(np.isfinite(ui), cost[:, k] + ui, np.inf)
        best = np.minimum(best, cand)
    return bi, bj, best


def _precompute_costs(model, xs: np.ndarray, z: np.ndarray,
                      chunk: int = 8192) -> np.ndarray:
    n = xs.shape[0]
    cost = np.empty((n, z.shape[0]))
    for start in range(0, n, chunk):
        sl = slice(start, min(start + chunk, n))
        cost[sl] = np.asarray(model.polar(xs[sl, None, :], z[None, :, :]),
                              dtype=float)
    return cost


def _solve_stage(model, mask, values, direction_count, tolerance, max_sweeps):
    grid = mask.grid
    nx, ny = grid.dims
    z, off_lo, off_hi, w = ring_table(direction_count, grid.spacing)

    bi, bj, ub = _band_init(model, grid, mask.inside, mask.band, z, off_lo, off_hi, w)
    values[bi, bj] = np.minimum(values[bi, bj], ub)

    upd_mask = mask.inside & ~mask.band
    ui, uj = np.nonzero(upd_mask)
    flat = values.reshape(-1)
    if ui.size == 0:
        return values, 0, 0.0, True

    upd = (ui * ny + uj).astype(np.int64)
    d_lo = (off_lo[:, 0] * ny + off_lo[:, 1]).astype(np.int64)
    d_hi = (off_hi[:, 0] * ny + off_hi[:, 1]).astype(np.int64)
    xs = np.stack([grid.origin[0] + grid.spacing * ui,
                   grid.origin[1] + grid.spacing * uj], axis=1)
    cost = _precompute_costs(model, xs, z)

    orders = [
        np.arange(upd.shape[0], dtype=np.int64),
        np.lexsort((-uj, ui)).astype(np.int64),
        np.lexsort((uj, -ui)).astype(np.int64),
        np.lexsort((-uj, -ui)).astype(np.int64),
    ]

    sweeps = 0
    residual = np.inf
    converged = False
    while sweeps < max_sweeps:
        cycle_max = 0.0
        for order in orders:
            d = _sweep_jit(flat, upd, order, cost, d_lo, d_hi, w)
            sweeps += 1
            if d > cycle_max:
                cycle_max = d
            if sweeps >= max_sweeps:
                break
        residual = cycle_max
        if cycle_max <= tolerance:
            converged = True
            break
    return values, sweeps, float(residual), converged


def solve_min_time(model, mask: DomainMask, *, direction_count: int = 128,
                   tolerance: float = 1e-8, max_sweeps: int = 256,
                   refine: bool = False) -> ValueField:
    """Sweep to the discrete fixed point of the ring update.

    ``tolerance`` bounds the max node change over a full 4-ordering cycle;
    zero demands the exact fixed point, which the monotone min-update reaches
    in finitely many sweeps. ``refine=True`` follows up with a warm-started
    stage at twice the direction count.
    """
    if mask.grid.dim != 2:
        raise ConfigurationError("the sweeping solver is two-dimensional")
    if model.dim != 2:
        raise ConfigurationError("model dimension must match the grid")
    if tolerance < 0.0:
        raise ConfigurationError("tolerance must be nonnegative")
    values = np.where(mask.inside, np.inf, 0.0)
    values, it1, res, conv = _solve_stage(model, mask, values, direction_count,
                                          tolerance, max_sweeps)
    iterations = it1
    final_k = direction_count
    if refine:
        final_k = 2 * direction_count
        values, it2, res, conv = _solve_stage(model, mask, values, final_k,
                                              tolerance, max_sweeps)
        iterations += it2
    return ValueField(grid=mask.grid, mask=mask, values=values,
                      iterations=iterations, residual=res, converged=conv,
                      direction_count=final_k)


# ---------------------------------------------------------------------------
# level-set extraction (marching squares)


def _ms_interp(p1, p2, v1, v2, level):
    t = 0.0 if v2 == v1 else (level - v1) / (v2 - v1)
    t = min(max(t, 0.0), 1.0)
    return (p1[0] + t * (p2[0] - p1[0]), p1[1] + t * (p2[1] - p1[1]))


def extract_level_set(field: ValueField, level: float) -> list:
    """Polyline approximation of {u = level}, bounding {u > level}.

    Cells with a non-finite corner are skipped. Segments are chained into
    polylines deterministically; closed loops repeat their first vertex.
    """
    grid = field.grid
    v = field.values
    nx, ny = grid.dims
    h = grid.spacing
    ox, oy = grid.origin
    tol = 1e-9 * h
    segs = []
    for i in range(nx - 1):
        for j in range(ny - 1):
            c = (v[i, j], v[i + 1, j], v[i + 1, j + 1], v[i, j + 1])
            if not all(np.isfinite(cc) for cc in c):
                continue
            above = tuple(cc > level for cc in c)
            idx = above[0] | above[1] << 1 | above[2] << 2 | above[3] << 3
            if idx in (0, 15):
                continue
            p = ((ox + i * h, oy + j * h), (ox + (i + 1) * h, oy + j * h),
                 (ox + (i + 1) * h, oy + (j + 1) * h), (ox + i * h, oy + (j + 1) * h))
            edge_pts = {}
            for eidx, (a, b) in enumerate(((0, 1), (1, 2), (2, 3), (3, 0))):
                if above[a] != above[b]:
                    edge_pts[eidx] = _ms_interp(p[a], p[b], c[a], c[b], level)
            connect = {
                1: [(3, 0)], 2: [(0, 1)], 3: [(3, 1)], 4: [(1, 2)],
                6: [(0, 2)], 7: [(3, 2)], 8: [(2, 3)], 9: [(2, 0)],
                11: [(2, 1)], 12: [(1, 3)], 13: [(1, 0)], 14: [(0, 3)],
            }
            if idx in (5, 10):
                center = 0.25 * sum(c)
                if (center > level) == (idx == 5):
                    pairs = [(3, 0), (1, 2)] if idx == 5 else [(0, 1), (2, 3)]
                else:
                    pairs = [(3, 2), (1, 0)] if idx == 5 else [(0, 3), (2, 1)]
            else:
                pairs = connect[idx]
            for a, b in pairs:
                s, e = edge_pts[a], edge_pts[b]
                # exact node hits give crossings one ulp apart; drop them
                if (s[0] - e[0]) ** 2 + (s[1] - e[1]) ** 2 > tol * tol:
                    segs.append((s, e))
    return _chain_segments(segs, tol)


def boundary_points(shape, count: int) -> np.ndarray:
    """Deterministic sample of the continuum boundary of a standard shape."""
    if isinstance(shape, Ball):
        ang = 2.0 * np.pi * np.arange(count) / count
        c = np.asarray(shape.center, dtype=float)
        return c + shape.radius * np.stack([np.cos(ang), np.sin(ang)], axis=1)
    if isinstance(shape, Annulus):
        half = count // 2
        c = np.asarray(shape.center, dtype=float)
        out = []
        for radius, m in ((shape.inner_radius, half),
                          (shape.outer_radius, count - half)):
            ang = 2.0 * np.pi * np.arange(m) / m
            out.append(c + radius * np.stack([np.cos(ang), np.sin(ang)], axis=1))
        return np.concatenate(out, axis=0)
    if isinstance(shape, BoxShape):
        lo = np.asarray(shape.lo, dtype=float)
        hi = np.asarray(shape.hi, dtype=float)
        per_side = max(count // 4, 2)
        t = np.arange(per_side) / per_side
        bottom = np.stack([lo[0] + t * (hi[0] - lo[0]), np.full_like(t, lo[1])], axis=1)
        right = np.stack([np.full_like(t, hi[0]), lo[1] + t * (hi[1] - lo[1])], axis=1)
        top = np.stack([hi[0] - t * (hi[0] - lo[0]), np.full_like(t, hi[1])], axis=1)
        left = np.stack([np.full_like(t, lo[0]), hi[1] - t * (hi[1] - lo[1])], axis=1)
        return np.concatenate([bottom, right, top, left], axis=0)
    raise ConfigurationError(
        f"no boundary sampler for shape {type(shape).__name__}")


def _chain_segments(segs, tol):
    """Join segments sharing endpoints into polylines; deterministic order."""
    def key(pt):
        return (round(pt[0] / tol), round(pt[1] / tol))

    adj = {}
    for si, (a, b) in enumerate(segs):
        adj.setdefault(key(a), []).append((si, 0))
        adj.setdefault(key(b), []).append((si, 1))
    used = [False] * len(segs)
    curves = []
    endpoints = sorted(k for k, lst in adj.items() if len(lst) == 1)
    starts = [adj[k][0] for k in endpoints] + \
        [(si, 0) for si in range(len(segs))]
    for si0, end0 in starts:
        if used[si0]:
            continue
        used[si0] = True
        a, b = segs[si0]
        pts = [a, b] if end0 == 0 else [b, a]
        while True:
            k = key(pts[-1])
            nxt = None
            for sj, endj in adj.get(k, ()):
                if not used[sj]:
                    nxt = (sj, endj)
                    break
            if nxt is None:
                break
            sj, endj = nxt
            used[sj] = True
            a, b = segs[sj]
            pts.append(b if endj == 0 else a)
        curves.append(np.asarray(pts, dtype=float))
    return curves
