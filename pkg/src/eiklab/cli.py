"""Command line driver: audit, solve, trace, probe, or all stages in sequence.

Every stage reads one JSON configuration and writes deterministic artifacts
into the output directory. Exit codes: 0 when every configured check passes,
1 when a threshold check fails, 2 for configuration or usage errors.
"""
from __future__ import annotations

import argparse
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .artifacts import (exponent_fit_dict, save_value_field, load_value_field,
                        write_fits_json, write_json, write_level_set_csv,
                        write_profile_csv, write_residuals_csv,
                        write_trajectory_csv)
from .audit import audit_standing_assumptions
from .config import (RunConfig, audit_box, build_grid, build_model,
                     build_shape, grid_bounding_box, load_run_config)
from .duality import run_lemma_suite
from .fitting import FitError
from .hamiltonians import ModelValidationError
from .probe import fit_semiconcavity_exponent, second_difference_profile
from .solver import (ConfigurationError, boundary_points, build_domain,
                     extract_level_set, solve_min_time)
from .trajectories import (chord_metric_defect_fit, midpoint_defect_fit,
                           trace_optimal, velocity_holder_fit)

_FIT_KINDS = {
    "velocity_holder": lambda traj, model, window: velocity_holder_fit(traj, window),
    "midpoint_defect": lambda traj, model, window: midpoint_defect_fit(traj, window),
    "chord_defect": lambda traj, model, window: chord_metric_defect_fit(traj, model, window),
}


def _derive_seed(base: int, stage: int) -> int:
    return int(np.random.SeedSequence([int(base), int(stage)]).generate_state(1)[0])


def _check(name: str, value, threshold, passed: bool) -> dict:
    return {"name": name, "value": None if value is None else float(value),
            "threshold": None if threshold is None else float(threshold),
            "passed": bool(passed)}


def _all_passed(checks) -> int:
    return 0 if all(c["passed"] for c in checks) else 1


def cmd_audit(cfg: RunConfig, out: str, seed: int) -> int:
    box = audit_box(cfg)
    model = build_model(cfg, box)
    a = cfg.audit
    report = audit_standing_assumptions(
        model, box, sample_count=int(a.get("sample_count", 4096)),
        seed=_derive_seed(seed, 1))
    thr = float(cfg.thresholds.get("audit_min_margin", -1e-8))
    checks = [_check("declared_margin", report.min_margin, thr,
                     report.min_margin >= thr)]
    lemma_samples = int(a.get("lemma_samples", 0))
    if lemma_samples > 0:
        residuals = run_lemma_suite(model, report, box, lemma_samples,
                                    seed=_derive_seed(seed, 2))
        write_residuals_csv(os.path.join(out, "residuals.csv"), residuals)
        suite_min = min(r.margin for r in residuals)
        checks.append(_check("suite_margin", suite_min, thr, suite_min >= thr))
    doc = report.to_json_dict()
    doc["checks"] = checks
    write_json(os.path.join(out, "audit.json"), doc)
    return _all_passed(checks)


def _solve_and_save(cfg: RunConfig, out: str, seed: int):
    grid = build_grid(cfg)
    shape = build_shape(cfg)
    mask = build_domain(grid, shape)
    model = build_model(cfg, grid_bounding_box(grid))
    s = cfg.solver
    direction_count = int(s.get("direction_count", 128))
    tolerance = float(s.get("tolerance", 1e-8))
    field = solve_min_time(model, mask, direction_count=direction_count,
                           tolerance=tolerance,
                           max_sweeps=int(s.get("max_sweeps", 256)),
                           refine=bool(s.get("refine", False)))
    save_value_field(out, field,
                     params={"direction_count": direction_count,
                             "tolerance": tolerance, "seed": int(seed),
                             "model_label": model.label},
                     value_format=s.get("value_format", "binary"))
    checks = [_check("solver_converged", field.residual, tolerance,
                     field.converged)]

    for i, level in enumerate(s.get("levelset_times", [])):
        curves = extract_level_set(field, float(level))
        write_level_set_csv(os.path.join(out, f"levelset_{i}.csv"), curves,
                            float(level))

    oracle = s.get("oracle")
    if oracle is not None:
        if oracle != "constant_boundary_min":
            raise ConfigurationError(f"unknown oracle {oracle!r}")
        bpts = boundary_points(shape, int(s.get("oracle_samples", 2048)))
        ii, jj = np.nonzero(mask.inside)
        n_nodes = min(int(s.get("oracle_nodes", 4096)), ii.size)
        rng = np.random.default_rng(_derive_seed(seed, 5))
        pick = np.sort(rng.choice(ii.size, size=n_nodes, replace=False))
        xs = np.stack([grid.origin[0] + grid.spacing * ii[pick],
                       grid.origin[1] + grid.spacing * jj[pick]], axis=1)
        sup = 0.0
        for start in range(0, n_nodes, 512):
            sl = slice(start, min(start + 512, n_nodes))
            diff = bpts[None, :, :] - xs[sl, None, :]
            u_star = np.min(np.asarray(model.polar(xs[sl, None, :], diff)), axis=1)
            u_h = field.values[ii[pick[sl]], jj[pick[sl]]]
            sup = max(sup, float(np.max(np.abs(u_h - u_star))))
        o_thr = cfg.thresholds.get("oracle_max_sup_error")
        checks.append(_check("oracle_sup_error", sup, o_thr,
                             True if o_thr is None else sup <= float(o_thr)))

    write_json(os.path.join(out, "solve.json"),
               {"schema_version": 1, "checks": checks,
                "converged": field.converged, "iterations": field.iterations,
                "residual": field.residual,
                "direction_count": field.direction_count})
    return field, checks


def cmd_solve(cfg: RunConfig, out: str, seed: int) -> int:
    _, checks = _solve_and_save(cfg, out, seed)
    return _all_passed(checks)


def _ensure_field(cfg: RunConfig, out: str, seed: int):
    header = os.path.join(out, "u.field")
    if os.path.exists(header):
        return load_value_field(out)
    if cfg.grid is None or cfg.domain is None:
        raise ConfigurationError(
            "no stored value field in the output directory and no grid/domain "
            "configured to solve for one")
    field, _ = _solve_and_save(cfg, out, seed)
    return field


def cmd_trace(cfg: RunConfig, out: str, seed: int, threads: int = 1) -> int:
    if not cfg.trajectories:
        raise ConfigurationError("configuration has no 'trajectories' entries")
    field = _ensure_field(cfg, out, seed)
    model = build_model(cfg, grid_bounding_box(field.grid))

    def one(tdoc):
        return trace_optimal(
            field, model, np.asarray(tdoc["x0"], dtype=float),
            float(tdoc["dt"]), tdoc.get("mode", "dpp"),
            direction_count=int(tdoc.get("direction_count", 128)),
            refine=bool(tdoc.get("refine", True)),
            grad_step=tdoc.get("grad_step"),
            max_steps=tdoc.get("max_steps"))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            trajs = list(pool.map(one, cfg.trajectories))
    else:
        trajs = [one(tdoc) for tdoc in cfg.trajectories]

    fits = []
    checks = []
    for i, (tdoc, traj) in enumerate(zip(cfg.trajectories, trajs)):
        write_trajectory_csv(os.path.join(out, f"trajectory_{i}.csv"), traj)
        expect = tdoc.get("expect_status")
        if expect is not None:
            checks.append(_check(f"trajectory_{i}_status", None, None,
                                 traj.terminal_status == expect))
        window = tuple(tdoc["fit_window"]) if "fit_window" in tdoc else None
        for fdoc in tdoc.get("fits", []):
            kind = fdoc.get("kind")
            if kind not in _FIT_KINDS:
                raise ConfigurationError(f"unknown fit kind {kind!r}")
            name = f"trajectory_{i}_{kind}"
            try:
                fit = _FIT_KINDS[kind](traj, model, window)
            except FitError as exc:
                fits.append({"trajectory": i, "kind": kind, "error": str(exc)})
                checks.append(_check(name, None, fdoc.get("min_exponent"), False))
                continue
            entry = {"trajectory": i, "kind": kind,
                     "status": traj.terminal_status}
            entry.update(exponent_fit_dict(fit))
            fits.append(entry)
            min_exp = fdoc.get("min_exponent")
            passed = True
            if min_exp is not None:
                passed = (not math.isnan(fit.exponent)
                          and fit.exponent >= float(min_exp))
            checks.append(_check(name, fit.exponent, min_exp, passed))
    write_fits_json(os.path.join(out, "fits.json"), fits, checks)
    return _all_passed(checks)


def cmd_probe(cfg: RunConfig, out: str, seed: int) -> int:
    if cfg.probe is None:
        raise ConfigurationError("configuration has no 'probe' section")
    field = _ensure_field(cfg, out, seed)
    p = cfg.probe
    rdoc = p.get("radii")
    if isinstance(rdoc, dict):
        radii = np.geomspace(float(rdoc["start"]), float(rdoc["stop"]),
                             int(rdoc["count"]))
    elif rdoc is not None:
        radii = np.asarray([float(v) for v in rdoc])
    else:
        raise ConfigurationError("probe section needs 'radii'")

    alpha = None
    if cfg.model is not None:
        ta = p.get("target_alpha", "declared")
        if ta == "declared":
            alpha = build_model(cfg, grid_bounding_box(field.grid)).constants.alpha
        elif ta is not None:
            alpha = float(ta)

    profile = second_difference_profile(
        field, radii, point_count=int(p.get("point_count", 64)),
        direction_count=int(p.get("direction_count", 32)),
        seed=_derive_seed(seed, 3), interior_margin=p.get("interior_margin"))
    write_profile_csv(os.path.join(out, "probe.csv"), profile)

    floor = float(p.get("positive_floor", 0.0))
    if "positive_floor_cells" in p:
        floor = max(floor, float(p["positive_floor_cells"]) * field.grid.spacing)
    window = tuple(p["window"]) if "window" in p else None

    checks = []
    doc = {"schema_version": 1, "dropped_radii": list(profile.dropped_radii),
           "interior_margin": profile.interior_margin,
           "point_count": profile.point_count,
           "direction_count": profile.direction_count,
           "positive_floor": floor}
    try:
        fit = fit_semiconcavity_exponent(profile, alpha=alpha, window=window,
                                         positive_floor=floor)
    except FitError as exc:
        doc["fit"] = {"error": str(exc)}
        checks.append(_check("probe_theta", None,
                             cfg.thresholds.get("min_theta_hat"), False))
    else:
        doc["fit"] = {"theta_hat": fit.theta_hat, "exponent": fit.exponent,
                      "constant": fit.constant, "window": list(fit.window),
                      "n_radii": fit.n_radii,
                      "max_positive_residual": fit.max_positive_residual,
                      "target_theta": fit.target_theta, "vacuous": fit.vacuous}
        thr = cfg.thresholds.get("min_theta_hat")
        if thr is not None:
            passed = fit.vacuous or fit.theta_hat >= float(thr)
            checks.append(_check("probe_theta", fit.theta_hat, thr, passed))
    doc["checks"] = checks
    write_json(os.path.join(out, "probe.json"), doc)
    return _all_passed(checks)


def cmd_all(cfg: RunConfig, out: str, seed: int, threads: int = 1) -> int:
    codes = []
    if cfg.audit or cfg.thresholds.get("audit_min_margin") is not None:
        codes.append(cmd_audit(cfg, out, seed))
    if cfg.grid is not None and cfg.domain is not None:
        codes.append(cmd_solve(cfg, out, seed))
    if cfg.trajectories:
        codes.append(cmd_trace(cfg, out, seed, threads))
    if cfg.probe is not None:
        codes.append(cmd_probe(cfg, out, seed))
    return max(codes, default=0)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="eiklab",
        description="anisotropic minimum-time laboratory: audit structural "
                    "constants, solve the Dirichlet problem, trace extremal "
                    "trajectories, probe interior curvature")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (("audit", "measure structural constants and margins"),
                       ("solve", "solve the minimum-time Dirichlet problem"),
                       ("trace", "trace extremal trajectories and fit exponents"),
                       ("probe", "profile interior second differences"),
                       ("all", "run every configured stage")):
        sp = sub.add_parser(name, help=text)
        sp.add_argument("--config", required=True, help="path to the JSON run configuration")
        sp.add_argument("--out", required=True, help="output directory for artifacts")
        sp.add_argument("--seed", type=int, default=None,
                        help="override the configured base seed")
        sp.add_argument("--threads", type=int, default=1,
                        help="worker threads for independent trajectories")
    args = parser.parse_args(argv)
    try:
        cfg = load_run_config(args.config)
        seed = args.seed if args.seed is not None else cfg.seed
        os.makedirs(args.out, exist_ok=True)
        if args.command == "audit":
            return cmd_audit(cfg, args.out, seed)
        if args.command == "solve":
            return cmd_solve(cfg, args.out, seed)
        if args.command == "trace":
            return cmd_trace(cfg, args.out, seed, args.threads)
        if args.command == "probe":
            return cmd_probe(cfg, args.out, seed)
        return cmd_all(cfg, args.out, seed, args.threads)
    except (ConfigurationError, ModelValidationError, FileNotFoundError,
            ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
