"""Deterministic on-disk artifacts: CSV tables, JSON reports, value fields.

Floats are written with 17 significant digits so a written value reparses to
the identical double. Nothing here records wall-clock time or hostnames; a
rerun with the same configuration and seed produces byte-identical files.
"""
from __future__ import annotations

import json
import os

import numpy as np

from .solver import DomainMask, GridSpec, ValueField, compute_band, _hash_mask


def fmt17(x) -> str:
    return f"{float(x):.17g}"


def write_json(path, doc: dict):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_residuals_csv(path, residuals):
    """Rows `lemma_id,sample_index,lhs,rhs,margin`; index counts within each id."""
    counters = {}
    with open(path, "w") as fh:
        fh.write("lemma_id,sample_index,lhs,rhs,margin\n")
        for r in residuals:
            idx = counters.get(r.lemma_id, 0)
            counters[r.lemma_id] = idx + 1
            fh.write(f"{r.lemma_id},{idx},{fmt17(r.lhs)},{fmt17(r.rhs)},"
                     f"{fmt17(r.margin)}\n")


def write_trajectory_csv(path, traj):
    with open(path, "w") as fh:
        fh.write("time,x,y,u\n")
        for t, (x, y), u in zip(traj.times, traj.positions, traj.u_path):
            fh.write(f"{fmt17(t)},{fmt17(x)},{fmt17(y)},{fmt17(u)}\n")


def write_profile_csv(path, profile):
    with open(path, "w") as fh:
        fh.write("radius,second_difference,point_x,point_y,dir_x,dir_y\n")
        for i in range(profile.radii.size):
            fh.write(",".join(fmt17(v) for v in (
                profile.radii[i], profile.s_values[i],
                profile.argmax_points[i, 0], profile.argmax_points[i, 1],
                profile.argmax_dirs[i, 0], profile.argmax_dirs[i, 1])) + "\n")


def write_level_set_csv(path, curves, level: float):
    with open(path, "w") as fh:
        fh.write("curve_index,vertex_index,level,x,y\n")
        for ci, curve in enumerate(curves):
            for vi, (x, y) in enumerate(curve):
                fh.write(f"{ci},{vi},{fmt17(level)},{fmt17(x)},{fmt17(y)}\n")


def exponent_fit_dict(fit) -> dict:
    return {"exponent": fit.exponent, "constant": fit.constant,
            "window": list(fit.window), "pair_count": fit.pair_count,
            "max_positive_residual": fit.max_positive_residual}


def write_fits_json(path, fits: list, checks: list):
    write_json(path, {"schema_version": 1, "fits": fits, "checks": checks})


# ---------------------------------------------------------------------------
# value-field persistence


def _rle_encode(flat: np.ndarray) -> list:
    """Run lengths of a boolean sequence, first run counting False values."""
    flat = np.asarray(flat, dtype=bool)
    if flat.size == 0:
        return []
    change = np.flatnonzero(np.diff(flat))
    bounds = np.concatenate([[0], change + 1, [flat.size]])
    runs = np.diff(bounds).tolist()
    if flat[0]:
        runs = [0] + runs
    return [int(v) for v in runs]


def _rle_decode(runs, size: int) -> np.ndarray:
    out = np.empty(size, dtype=bool)
    pos = 0
    val = False
    for r in runs:
        out[pos:pos + r] = val
        pos += r
        val = not val
    if pos != size:
        raise ValueError("run-length data does not cover the grid")
    return out


def save_value_field(out_dir, field: ValueField, params: dict = None,
                     value_format: str = "binary"):
    """Write `u.field` (JSON header) plus the value payload next to it."""
    if value_format not in ("binary", "csv"):
        raise ValueError(f"unknown value format {value_format!r}")
    values_file = "u.values.bin" if value_format == "binary" else "u.values.csv"
    header = {
        "schema_version": 1,
        "grid": field.grid.to_json_dict(),
        "mask_hash": field.mask.mask_hash,
        "inside_rle": _rle_encode(field.mask.inside.ravel()),
        "n_boundary_components": field.mask.n_boundary_components,
        "direction_count": field.direction_count,
        "iterations": field.iterations,
        "residual": field.residual,
        "converged": field.converged,
        "params": params or {},
        "value_format": value_format,
        "values_file": values_file,
    }
    write_json(os.path.join(out_dir, "u.field"), header)
    vpath = os.path.join(out_dir, values_file)
    if value_format == "binary":
        with open(vpath, "wb") as fh:
            fh.write(np.ascontiguousarray(field.values, dtype="<f8").tobytes())
    else:
        with open(vpath, "w") as fh:
            fh.write("value\n")
            for v in field.values.ravel():
                fh.write(fmt17(v) + "\n")


def load_value_field(path) -> ValueField:
    """Load a saved field; `path` is the directory or the u.field file itself.

    The stored mask hash is recomputed and must match, so silent corruption of
    the header or geometry is detected.
    """
    header_path = path if str(path).endswith("u.field") else os.path.join(path, "u.field")
    with open(header_path) as fh:
        header = json.load(fh)
    g = header["grid"]
    grid = GridSpec(origin=tuple(g["origin"]), spacing=g["spacing"],
                    dims=tuple(g["dims"]))
    size = int(np.prod(grid.dims))
    inside = _rle_decode(header["inside_rle"], size).reshape(grid.dims)
    mask_hash = _hash_mask(grid, inside)
    if mask_hash != header["mask_hash"]:
        raise ValueError("stored mask hash does not match the decoded mask")
    mask = DomainMask(grid=grid, inside=inside, band=compute_band(inside),
                      n_boundary_components=int(header["n_boundary_components"]),
                      mask_hash=mask_hash)
    vpath = os.path.join(os.path.dirname(header_path), header["values_file"])
    if header["value_format"] == "binary":
        with open(vpath, "rb") as fh:
            values = np.frombuffer(fh.read(), dtype="<f8").astype(np.float64)
    else:
        with open(vpath) as fh:
            lines = fh.read().strip().split("\n")
        if lines[0] != "value":
            raise ValueError("unexpected value CSV header")
        values = np.array([float(v) for v in lines[1:]])
    if values.size != size:
        raise ValueError("value payload size does not match the grid")
    return ValueField(grid=grid, mask=mask, values=values.reshape(grid.dims),
                      iterations=int(header["iterations"]),
                      residual=float(header["residual"]),
                      converged=bool(header["converged"]),
                      direction_count=int(header["direction_count"]))
