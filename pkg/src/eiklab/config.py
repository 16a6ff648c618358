"""Run configuration: one JSON document drives every CLI stage.

Top-level keys: ``schema_version``, ``seed``, ``model``, ``grid``, ``domain``,
``solver``, ``audit``, ``trajectories``, ``probe``, ``thresholds``. Unknown
keys are rejected so typos surface as configuration errors rather than
silently ignored sections.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field

from .geometry import Box
from .hamiltonians import DEFAULT_NUMERIC_PARAMS, model_from_json
from .solver import Annulus, Ball, BoxShape, ConfigurationError, GridSpec

_TOP_KEYS = {"schema_version", "seed", "model", "grid", "domain", "solver",
             "audit", "trajectories", "probe", "thresholds"}


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    model: dict = None
    grid: dict = None
    domain: dict = None
    solver: dict = dc_field(default_factory=dict)
    audit: dict = dc_field(default_factory=dict)
    trajectories: tuple = ()
    probe: dict = None
    thresholds: dict = dc_field(default_factory=dict)


def parse_run_config(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigurationError("configuration root must be a JSON object")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ConfigurationError(f"unknown configuration keys: {sorted(unknown)}")
    version = doc.get("schema_version", 1)
    if version != 1:
        raise ConfigurationError(f"unsupported schema_version {version}")
    trajectories = doc.get("trajectories", [])
    if not isinstance(trajectories, list):
        raise ConfigurationError("'trajectories' must be a list")
    return RunConfig(seed=int(doc.get("seed", 0)), model=doc.get("model"),
                     grid=doc.get("grid"), domain=doc.get("domain"),
                     solver=doc.get("solver", {}), audit=doc.get("audit", {}),
                     trajectories=tuple(trajectories), probe=doc.get("probe"),
                     thresholds=doc.get("thresholds", {}))


def load_run_config(path) -> RunConfig:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"configuration is not valid JSON: {exc}")
    return parse_run_config(doc)


def build_grid(cfg: RunConfig) -> GridSpec:
    if cfg.grid is None:
        raise ConfigurationError("configuration has no 'grid' section")
    try:
        return GridSpec(origin=tuple(cfg.grid["origin"]),
                        spacing=float(cfg.grid["spacing"]),
                        dims=tuple(cfg.grid["dims"]))
    except KeyError as exc:
        raise ConfigurationError(f"grid section is missing {exc}")


def build_shape(cfg: RunConfig):
    if cfg.domain is None:
        raise ConfigurationError("configuration has no 'domain' section")
    doc = cfg.domain
    kind = doc.get("type")
    try:
        if kind == "ball":
            return Ball(center=tuple(doc["center"]), radius=float(doc["radius"]))
        if kind == "box":
            return BoxShape(lo=tuple(doc["lo"]), hi=tuple(doc["hi"]))
        if kind == "annulus":
            return Annulus(center=tuple(doc["center"]),
                           inner_radius=float(doc["inner_radius"]),
                           outer_radius=float(doc["outer_radius"]))
    except KeyError as exc:
        raise ConfigurationError(f"domain section is missing {exc}")
    raise ConfigurationError(f"unknown domain type {kind!r}")


def grid_bounding_box(grid: GridSpec) -> Box:
    lo = grid.origin
    hi = tuple(grid.origin[a] + grid.spacing * (grid.dims[a] - 1)
               for a in range(grid.dim))
    return Box(lo=lo, hi=hi)


def audit_box(cfg: RunConfig) -> Box:
    dom = cfg.audit.get("domain")
    if dom is not None:
        try:
            return Box(lo=tuple(dom["lo"]), hi=tuple(dom["hi"]))
        except KeyError as exc:
            raise ConfigurationError(f"audit domain is missing {exc}")
    if cfg.grid is not None:
        return grid_bounding_box(build_grid(cfg))
    raise ConfigurationError("no audit domain and no grid to derive one from")


def build_model(cfg: RunConfig, domain: Box = None,
                params=DEFAULT_NUMERIC_PARAMS):
    if cfg.model is None:
        raise ConfigurationError("configuration has no 'model' section")
    if domain is None:
        domain = audit_box(cfg)
    return model_from_json(cfg.model, domain, params=params)
