"""Upper-envelope log-log regression shared by the audit, trajectory and probe fits.

The estimator: bin the (scale, value) cloud by log scale, take the max value per
bin, and put a least-squares line through the binned maxima. The slope is the
reported exponent and exp(intercept) the multiplicative constant. A dataset
whose values all sit below the floor yields the +inf sentinel exponent, which
callers treat as "no envelope to bound" and therefore a pass.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class FitError(ValueError):
    """Raised when a fit window is degenerate or underpopulated."""


@dataclass(frozen=True)
class ExponentFit:
    exponent: float
    constant: float
    window: tuple
    pair_count: int
    max_positive_residual: float

    @property
    def is_sentinel(self) -> bool:
        return math.isinf(self.exponent)


def envelope_fit(scales, values, window, *, n_bins: int = 10, min_bins: int = 5,
                 min_pairs: int = 30, floor: float = 1e-14) -> ExponentFit:
    """Fit ``value <= constant * scale**exponent`` on the window's upper envelope.

    ``scales`` and ``values`` are parallel 1-d arrays (one entry per measured
    pair). Entries outside the window are ignored. Raises FitError when fewer
    than ``min_pairs`` pairs or ``min_bins`` populated bins remain; returns the
    sentinel fit when every windowed value is at or below ``floor``.
    """
    scales = np.asarray(scales, dtype=float).ravel()
    values = np.asarray(values, dtype=float).ravel()
    if scales.shape != values.shape:
        raise FitError("scales and values must have matching shapes")
    lo, hi = float(window[0]), float(window[1])
    if not (0.0 < lo < hi):
        raise FitError(f"degenerate fit window [{lo}, {hi}]")
    sel = (scales >= lo) & (scales <= hi) & np.isfinite(values)
    pair_count = int(np.count_nonzero(sel))
    if pair_count < min_pairs:
        raise FitError(f"only {pair_count} pairs in window, need {min_pairs}")
    s = scales[sel]
    v = values[sel]
    if np.all(v <= floor):
        return ExponentFit(exponent=math.inf, constant=0.0, window=(lo, hi),
                           pair_count=pair_count, max_positive_residual=0.0)
    keep = v > floor
    s, v = s[keep], v[keep]

    edges = np.logspace(np.log10(lo), np.log10(hi), n_bins + 1)
    edges[-1] *= 1.0 + 1e-12  # make the top edge inclusive
    which = np.digitize(s, edges) - 1
    xs, ys = [], []
    for b in range(n_bins):
        mask = which == b
        if not np.any(mask):
            continue
        j = np.argmax(v[mask])
        xs.append(np.log(s[mask][j]))
        ys.append(np.log(v[mask][j]))
    if len(xs) < min_bins:
        raise FitError(f"only {len(xs)} populated bins, need {min_bins}")
    slope, intercept = np.polyfit(np.asarray(xs), np.asarray(ys), 1)
    resid = np.log(v) - (slope * np.log(s) + intercept)
    return ExponentFit(
        exponent=float(slope),
        constant=float(np.exp(intercept)),
        window=(lo, hi),
        pair_count=pair_count,
        max_positive_residual=float(np.max(resid)),
    )
