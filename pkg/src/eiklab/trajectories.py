"""Extremal trajectory tracing on a solved value field, plus regularity fits.

Two stepping modes. ``dpp`` replays the dynamic-programming principle
directly: at each position the step direction minimizes the interpolated value
at x + dt * e / H0(x, e), i.e. after one dt of travel at the admissible speed
in direction e; no derivative of the field is taken. ``gradient`` reads the
co-state p = -DU by central differences and follows the velocity map grad_p,
which is smoother when U is but is biased near kinks.

Fits quantify regularity along a trace via upper envelopes: velocity
increments over time gaps, midpoint defects, and the defect of the chord
metric identity (travel time between points on an optimal path equals the
dual gauge of the chord, up to curvature of the coefficients).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fitting import ExponentFit, FitError, envelope_fit
from .geometry import direction_2d, golden_refine_max
from .hamiltonians import EvaluationError
from .solver import ConfigurationError, ValueField

_STALL_STEPS = 5


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    u_path: np.ndarray
    terminal_status: str
    dt: float
    mode: str

    @property
    def duration(self) -> float:
        return float(self.times[-1])

    @property
    def step_count(self) -> int:
        return self.positions.shape[0] - 1


def _dpp_step(field, model, x, dt, angles, refine):
    def value_after(theta):
        e = direction_2d(theta)
        h0 = np.asarray(model.polar(np.broadcast_to(x, e.shape), e))
        return field.interp(x + dt * e / h0[..., None])

    vals = value_after(angles)
    j = int(np.argmin(vals))
    theta = angles[j]
    if refine:
        t_b, _ = golden_refine_max(lambda th: -value_after(th),
                                   np.asarray(theta), 2.0 * np.pi / angles.shape[0],
                                   30)
        theta = float(t_b)
    e = direction_2d(theta)
    h0 = float(model.polar(x, e))
    return x + dt * e / h0


def _gradient_step(field, model, x, dt, gs):
    e1 = np.array([gs, 0.0])
    e2 = np.array([0.0, gs])
    p = -np.array([
        field.interp(x + e1) - field.interp(x - e1),
        field.interp(x + e2) - field.interp(x - e2),
    ]) / (2.0 * gs)
    if not np.all(np.isfinite(p)) or float(np.linalg.norm(p)) < 1e-12:
        return None
    try:
        v = model.grad_p(x, p)
    except EvaluationError:
        return None
    return x + dt * np.asarray(v)


def trace_optimal(field: ValueField, model, x0, dt: float, mode: str = "dpp", *,
                  direction_count: int = 128, refine: bool = True,
                  grad_step: float = None, max_steps: int = None) -> Trajectory:
    """March a unit-time-parameterized extremal path until the boundary.

    Stops with status ``reached_boundary`` once the interpolated value drops
    below 2 * spacing * R (declared upper growth constant), ``stalled`` after
    5 consecutive steps that each fail to decrease the value by dt/2, and
    ``max_steps`` otherwise.
    """
    if field.grid.dim != 2:
        raise ConfigurationError("tracing is two-dimensional")
    if mode not in ("dpp", "gradient"):
        raise ConfigurationError(f"unknown trace mode {mode!r}")
    if dt <= 0.0:
        raise ConfigurationError("dt must be positive")
    x0 = np.asarray(x0, dtype=float)
    grid = field.grid
    ni = [int(round((x0[a] - grid.origin[a]) / grid.spacing)) for a in range(2)]
    if not (0 <= ni[0] < grid.dims[0] and 0 <= ni[1] < grid.dims[1]
            and field.mask.inside[ni[0], ni[1]]):
        raise ConfigurationError("start point is not inside the domain")

    stop_u = 2.0 * grid.spacing * model.constants.R
    u0 = float(field.interp(x0))
    if max_steps is None:
        max_steps = max(10, int(math.ceil(4.0 * u0 / dt)))
    angles = 2.0 * np.pi * np.arange(direction_count) / direction_count
    gs = grad_step if grad_step is not None else 2.0 * grid.spacing

    positions = [x0]
    u_path = [u0]
    status = "max_steps"
    if u0 < stop_u:
        status = "reached_boundary"
        max_steps = 0
    stall = 0
    for _ in range(max_steps):
        x = positions[-1]
        if mode == "dpp":
            x_new = _dpp_step(field, model, x, dt, angles, refine)
        else:
            x_new = _gradient_step(field, model, x, dt, gs)
        if x_new is None:
            status = "stalled"
            break
        u_new = float(field.interp(x_new))
        positions.append(np.asarray(x_new, dtype=float))
        u_path.append(u_new)
        if u_new < stop_u:
            status = "reached_boundary"
            break
        if u_path[-2] - u_new < 0.5 * dt:
            stall += 1
            if stall >= _STALL_STEPS:
                status = "stalled"
                break
        else:
            stall = 0

    positions = np.asarray(positions)
    n = positions.shape[0]
    times = dt * np.arange(n)
    if n > 1:
        vel = np.diff(positions, axis=0) / dt
        velocities = np.concatenate([vel, vel[-1:]], axis=0)
    else:
        velocities = np.zeros((1, 2))
    return Trajectory(times=times, positions=positions, velocities=velocities,
                      u_path=np.asarray(u_path), terminal_status=status,
                      dt=float(dt), mode=mode)


# ---------------------------------------------------------------------------
# regularity fits


def _default_window(traj: Trajectory):
    return (10.0 * traj.dt, 0.25 * traj.duration)


def _require_length(traj: Trajectory, minimum: int = 100):
    if traj.positions.shape[0] < minimum:
        raise FitError(
            f"trajectory has {traj.positions.shape[0]} samples, need {minimum}")


def _all_pair_lags(n: int):
    """Index pairs (k, k+m) for every lag m, concatenated."""
    ks, ls = [], []
    for m in range(1, n):
        k = np.arange(n - m)
        ks.append(k)
        ls.append(k + m)
    return np.concatenate(ks), np.concatenate(ls)


def velocity_holder_fit(traj: Trajectory, window=None) -> ExponentFit:
    """Envelope exponent of |v(t) - v(s)| against |t - s|."""
    _require_length(traj)
    v = traj.velocities[:-1]
    n = v.shape[0]
    ks, ls = _all_pair_lags(n)
    gaps = traj.dt * (ls - ks)
    diffs = np.linalg.norm(v[ls] - v[ks], axis=1)
    return envelope_fit(gaps, diffs, window if window is not None
                        else _default_window(traj))


def midpoint_defect_fit(traj: Trajectory, window=None) -> ExponentFit:
    """Envelope exponent of |x(t+m) - (x(t) + x(t+2m))/2| against 2m.

    Scales like the square of the time gap on smooth arcs and like
    gap^(1+beta) when the velocity is only beta-Hoelder.
    """
    _require_length(traj)
    x = traj.positions
    n = x.shape[0]
    scales, values = [], []
    for m in range(1, (n - 1) // 2 + 1):
        k = np.arange(n - 2 * m)
        d = np.linalg.norm(x[k + m] - 0.5 * (x[k] + x[k + 2 * m]), axis=1)
        scales.append(np.full(k.shape[0], 2.0 * m * traj.dt))
        values.append(d)
    return envelope_fit(np.concatenate(scales), np.concatenate(values),
                        window if window is not None else _default_window(traj))


def chord_metric_defect_fit(traj: Trajectory, model, window=None,
                            chunk: int = 131072) -> ExponentFit:
    """Envelope exponent of |H0(x(s), x(t) - x(s)) - (t - s)| against t - s.

    Along an exact optimal path with frozen coefficients the chord gauge equals
    the elapsed time; coefficient variation and discretization leave a
    higher-order defect.
    """
    _require_length(traj)
    x = traj.positions
    n = x.shape[0]
    ks, ls = _all_pair_lags(n)
    gaps = traj.dt * (ls - ks)
    defect = np.empty(ks.shape[0])
    for start in range(0, ks.shape[0], chunk):
        sl = slice(start, min(start + chunk, ks.shape[0]))
        xa = x[ks[sl]]
        dx = x[ls[sl]] - xa
        good = np.linalg.norm(dx, axis=1) > 0.0
        h0 = np.empty(xa.shape[0])
        h0[good] = np.asarray(model.polar(xa[good], dx[good]), dtype=float)
        h0[~good] = 0.0
        defect[sl] = np.abs(h0 - gaps[sl])
    return envelope_fit(gaps, defect, window if window is not None
                        else _default_window(traj))
