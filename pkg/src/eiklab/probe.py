"""Interior one-sided curvature probe of a solved value field.

Measures the worst centered second difference s(rho) = max over probe points x
and directions d of U(x + rho d) + U(x - rho d) - 2 U(x), restricted to points
whose distance to the domain complement exceeds a margin, so every evaluation
stays strictly interior. A positive power-law envelope s(rho) ~ C rho^(1+theta)
quantifies one-sided second-order regularity; when the field is concave along
every probed segment, s never rises above the interpolation floor and the fit
degenerates to a vacuous sentinel.

Point and direction streams are nested: enlarging point_count extends the
accepted-point prefix, and doubling direction_count keeps the original
directions as every second entry. Profiles at different resolutions are then
directly comparable.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import ndimage

from .fitting import FitError
from .geometry import direction_2d
from .solver import ConfigurationError, ValueField, interp_values


@dataclass(frozen=True)
class SecondDifferenceProfile:
    radii: np.ndarray
    s_values: np.ndarray
    argmax_points: np.ndarray
    argmax_dirs: np.ndarray
    dropped_radii: tuple
    point_count: int
    direction_count: int
    seed: int
    interior_margin: float


@dataclass(frozen=True)
class SemiconcavityFit:
    """Power-law fit of the second-difference profile.

    ``exponent`` is the slope of log s against log rho and ``theta_hat`` the
    implied one-sided curvature exponent (slope - 1). ``vacuous`` marks a
    profile with no value above the positive floor, reported with infinite
    exponent and zero constant: nothing to bound, inequality holds trivially.
    """

    theta_hat: float
    exponent: float
    constant: float
    window: tuple
    n_radii: int
    max_positive_residual: float
    target_theta: Optional[float]
    vacuous: bool


def _interior_distance(mask) -> np.ndarray:
    return ndimage.distance_transform_edt(mask.inside) * mask.grid.spacing


def _sample_margin_points(field: ValueField, margin: float, count: int,
                          seed: int) -> np.ndarray:
    """First ``count`` stream points with interior distance >= margin.

    The candidate stream depends only on the seed, so a larger count extends
    the same accepted prefix.
    """
    grid = field.grid
    dist = _interior_distance(field.mask)
    if not (dist >= margin).any():
        raise ConfigurationError(
            f"no grid node lies {margin} inside the domain")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 104729]))
    lo = np.asarray(grid.origin)
    hi = lo + grid.spacing * (np.asarray(grid.dims) - 1)
    accepted = []
    guard = 0
    while len(accepted) < count:
        batch = rng.uniform(lo, hi, size=(256, 2))
        ok = interp_values(grid, dist, batch) >= margin
        accepted.extend(batch[ok])
        guard += 1
        if guard > 4000:
            raise ConfigurationError(
                "interior margin region is too small to sample")
    return np.asarray(accepted[:count])


def second_difference_profile(field: ValueField, radii, point_count: int = 64,
                              direction_count: int = 32, seed: int = 0,
                              interior_margin: float = None) -> SecondDifferenceProfile:
    """Worst centered second difference per radius over seeded probes.

    Radii that would let x +- rho d leave the margin region (rho > margin -
    spacing) are dropped and recorded in ``dropped_radii``.
    """
    if field.grid.dim != 2:
        raise ConfigurationError("the probe is two-dimensional")
    radii = np.asarray(radii, dtype=float)
    if radii.size == 0 or np.any(radii <= 0.0):
        raise ConfigurationError("radii must be positive")
    h = field.grid.spacing
    if interior_margin is None:
        interior_margin = float(radii.max()) + 2.0 * h
    admissible = radii <= interior_margin - h
    dropped = tuple(float(r) for r in radii[~admissible])
    radii = radii[admissible]
    if radii.size == 0:
        raise ConfigurationError("every radius exceeds the interior margin")

    pts = _sample_margin_points(field, interior_margin, point_count, seed)
    rng_dir = np.random.default_rng(np.random.SeedSequence([seed, 224737]))
    offset = rng_dir.uniform(0.0, 2.0 * np.pi)
    dirs = direction_2d(offset + 2.0 * np.pi * np.arange(direction_count)
                        / direction_count)

    u0 = field.interp(pts)
    s_values = np.empty(radii.size)
    arg_pts = np.empty((radii.size, 2))
    arg_dirs = np.empty((radii.size, 2))
    for i, rho in enumerate(radii):
        plus = field.interp((pts[:, None, :] + rho * dirs[None, :, :]).reshape(-1, 2))
        minus = field.interp((pts[:, None, :] - rho * dirs[None, :, :]).reshape(-1, 2))
        s = (plus + minus).reshape(point_count, direction_count) - 2.0 * u0[:, None]
        flat = int(np.argmax(s))
        pi, di = divmod(flat, direction_count)
        s_values[i] = s[pi, di]
        arg_pts[i] = pts[pi]
        arg_dirs[i] = dirs[di]
    return SecondDifferenceProfile(radii=radii, s_values=s_values,
                                   argmax_points=arg_pts, argmax_dirs=arg_dirs,
                                   dropped_radii=dropped,
                                   point_count=int(point_count),
                                   direction_count=int(direction_count),
                                   seed=int(seed),
                                   interior_margin=float(interior_margin))


def fit_semiconcavity_exponent(profile: SecondDifferenceProfile,
                               alpha: float = None, window=None,
                               positive_floor: float = 0.0) -> SemiconcavityFit:
    """Fit s(rho) ~ C rho^(1+theta) over radii in the window.

    ``positive_floor`` screens out interpolation noise: radii whose s value
    lies at or below it do not enter the fit, and if none remain the result is
    the vacuous sentinel. With ``alpha`` given, ``target_theta`` records the
    exponent alpha / (4 + alpha) that the regularity theory predicts as a
    lower bound for theta.
    """
    rho = profile.radii
    s = profile.s_values
    if window is None:
        window = (float(rho.min()), float(rho.max()))
    sel = (rho >= window[0]) & (rho <= window[1])
    if not sel.any():
        raise FitError("no radii inside the fit window")
    rho = rho[sel]
    s = s[sel]
    target = None if alpha is None else float(alpha / (4.0 + alpha))
    pos = s > max(positive_floor, 0.0)
    if not pos.any():
        return SemiconcavityFit(theta_hat=np.inf, exponent=np.inf, constant=0.0,
                                window=(float(window[0]), float(window[1])),
                                n_radii=int(rho.size), max_positive_residual=0.0,
                                target_theta=target, vacuous=True)
    if pos.sum() < 5:
        raise FitError(f"only {int(pos.sum())} radii have a positive second "
                       "difference; cannot fit an exponent")
    lr = np.log(rho[pos])
    lv = np.log(s[pos])
    slope, intercept = np.polyfit(lr, lv, 1)
    resid = lv - (slope * lr + intercept)
    return SemiconcavityFit(theta_hat=float(slope - 1.0), exponent=float(slope),
                            constant=float(np.exp(intercept)),
                            window=(float(window[0]), float(window[1])),
                            n_radii=int(rho.size),
                            max_positive_residual=float(np.max(resid)),
                            target_theta=target, vacuous=False)
