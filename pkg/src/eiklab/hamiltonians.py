"""Hamiltonian models: convex, positively 1-homogeneous cost functions H(x, p).

Two construction routes:

* ``make_matrix_field_model``: H(x, p) = |A(x) p| for an invertible matrix
  field A(x) = base + sum_k field_k(x) * M_k. All four evaluation maps have
  closed forms, including the dual gauge and its gradient.
* ``make_generic_model``: wraps a user-supplied positively 1-homogeneous
  callable; gradients fall back to central differences and dual quantities to
  numeric maximization over a sphere partition.

Every evaluation map is vectorized: positions and covectors broadcast against
each other over leading batch axes, with the coordinate axis last.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .geometry import Box, make_sphere_partition


class ModelValidationError(ValueError):
    """A model spec failed a construction-time check."""


class EvaluationError(ValueError):
    """A model could not be evaluated at the requested point."""


@dataclass(frozen=True)
class StandingConstants:
    """Declared structure constants: speed bounds, Hoelder seminorm, half exponent.

    The half exponent ``alpha`` must lie in (0, 1/2); the Hoelder bound on the
    coefficients uses exponent 2*alpha.
    """

    r: float
    R: float
    c0: float
    alpha: float

    def __post_init__(self):
        if not (0.0 < self.r < self.R):
            raise ModelValidationError(f"need 0 < r < R, got r={self.r}, R={self.R}")
        if not self.c0 > 0.0:
            raise ModelValidationError(f"need c0 > 0, got {self.c0}")
        if not (0.0 < self.alpha < 0.5):
            raise ModelValidationError(f"need alpha in (0, 1/2), got {self.alpha}")


@dataclass(frozen=True)
class PowerBump:
    """Radial Hoelder bump a * |x - center|**exponent, exponent in (0, 1).

    Its exact Hoelder seminorm with respect to its own exponent is |amplitude|,
    attained against the center point; audits anchor sample pairs there.
    """

    center: tuple
    amplitude: float
    exponent: float

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        d = np.linalg.norm(x - np.asarray(self.center), axis=-1)
        return self.amplitude * d**self.exponent


@dataclass(frozen=True)
class TrigSum:
    """Smooth field sum_k amplitudes[k] * cos(<frequencies[k], x> + phases[k])."""

    frequencies: tuple
    amplitudes: tuple
    phases: tuple = ()

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        freqs = np.asarray(self.frequencies, dtype=float)
        amps = np.asarray(self.amplitudes, dtype=float)
        phases = np.asarray(self.phases, dtype=float) if self.phases else np.zeros(len(amps))
        phase = x @ freqs.T + phases
        return np.cos(phase) @ amps


def make_power_bump_field(center, amplitude: float, exponent: float) -> PowerBump:
    center = tuple(float(c) for c in np.asarray(center, dtype=float).ravel())
    if amplitude == 0.0:
        raise ModelValidationError("bump amplitude must be nonzero")
    if not (0.0 < exponent < 1.0):
        raise ModelValidationError(f"bump exponent must be in (0, 1), got {exponent}")
    return PowerBump(center=center, amplitude=float(amplitude), exponent=float(exponent))


@dataclass(frozen=True)
class MatrixFieldSpec:
    """Matrix field A(x) = base + sum_k field_k(x) * matrix_k."""

    base: tuple
    perturbations: tuple = ()

    def __post_init__(self):
        base = np.asarray(self.base, dtype=float)
        if base.ndim != 2 or base.shape[0] != base.shape[1]:
            raise ModelValidationError("base must be a square matrix")
        object.__setattr__(self, "base", tuple(tuple(float(v) for v in row) for row in base))
        perts = []
        for fld, mat in self.perturbations:
            mat = np.asarray(mat, dtype=float)
            if mat.shape != base.shape:
                raise ModelValidationError("perturbation matrix shape must match base")
            perts.append((fld, tuple(tuple(float(v) for v in row) for row in mat)))
        object.__setattr__(self, "perturbations", tuple(perts))

    @property
    def dim(self) -> int:
        return len(self.base)

    def matrix(self, x) -> np.ndarray:
        """A(x) with shape batch + (dim, dim)."""
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1] + (self.dim, self.dim))
        out += np.asarray(self.base)
        for fld, mat in self.perturbations:
            out += fld(x)[..., None, None] * np.asarray(mat)
        return out


@dataclass(frozen=True)
class NumericParams:
    """Knobs for numeric fallbacks and construction-time spot checks."""

    fd_step: float = 1e-6
    partition_level: int = 720     # 2-d direction count
    partition_level_3d: int = 4    # icosphere subdivision depth
    refine_iters: int = 40
    check_samples: int = 256
    seed: int = 0
    homogeneity_tol: float = 1e-8
    growth_tol: float = 1e-9
    singular_floor: float = 1e-6
    probe_points: tuple = ()


DEFAULT_NUMERIC_PARAMS = NumericParams()


@dataclass(frozen=True)
class HamiltonianModel:
    """Bundle of the four evaluation maps plus declared constants.

    ``provenance`` records whether dual quantities come from closed forms or
    from the numeric-fallback route; tolerance contracts differ between the two.
    """

    dim: int
    eval_h: Callable
    grad_p: Callable
    polar: Callable
    polar_grad: Callable
    constants: StandingConstants
    provenance: str  # "closed-form" | "numeric-fallback"
    label: str = "model"
    probe_points: tuple = ()
    spec: Optional[MatrixFieldSpec] = field(default=None, repr=False)


def _check_nonzero(v: np.ndarray, what: str):
    if np.any(np.linalg.norm(np.asarray(v, dtype=float), axis=-1) == 0.0):
        raise EvaluationError(f"{what} requires a nonzero covector")


def _collect_probe_points(spec: MatrixFieldSpec) -> tuple:
    pts = []
    for fld, _ in spec.perturbations:
        if isinstance(fld, PowerBump):
            pts.append(tuple(fld.center))
    return tuple(pts)


def make_matrix_field_model(spec: MatrixFieldSpec, constants: StandingConstants,
                            domain: Box, params: NumericParams = DEFAULT_NUMERIC_PARAMS,
                            label: str = "matrix_field") -> HamiltonianModel:
    """Closed-form model H(x, p) = |A(x) p|.

    Checks invertibility over the working domain before returning: the smallest
    singular value of A at seeded samples, corners, center and perturbation
    anchors must stay at or above ``params.singular_floor``.
    """
    if domain.dim != spec.dim:
        raise ModelValidationError("domain dimension does not match matrix size")
    probe_points = _collect_probe_points(spec)

    rng = np.random.default_rng(params.seed)
    sample = [domain.sample(rng, params.check_samples), domain.corners(),
              domain.center[None, :]]
    for p in probe_points:
        pt = np.asarray(p)
        if domain.contains(pt):
            sample.append(pt[None, :])
    xs = np.concatenate(sample, axis=0)
    sv = np.linalg.svd(spec.matrix(xs), compute_uv=False)
    worst = int(np.argmin(sv[:, -1]))
    if sv[worst, -1] < params.singular_floor:
        raise ModelValidationError(
            f"matrix field nearly singular: min singular value {sv[worst, -1]:.3e} "
            f"< floor {params.singular_floor:.3e} at x={xs[worst]}")

    def eval_h(x, p):
        x = np.asarray(x, dtype=float)
        p = np.asarray(p, dtype=float)
        A = spec.matrix(x)
        Ap = np.einsum("...ij,...j->...i", A, p)
        return np.linalg.norm(Ap, axis=-1)

    def grad_p(x, p):
        x = np.asarray(x, dtype=float)
        p = np.asarray(p, dtype=float)
        _check_nonzero(p, "grad_p")
        A = spec.matrix(x)
        Ap = np.einsum("...ij,...j->...i", A, p)
        nrm = np.linalg.norm(Ap, axis=-1)
        AtAp = np.einsum("...ji,...j->...i", A, Ap)
        return AtAp / nrm[..., None]

    def _solve_t(A, q):
        At = np.swapaxes(A, -1, -2)
        try:
            return np.linalg.solve(At, q[..., None])[..., 0]
        except np.linalg.LinAlgError as exc:
            raise EvaluationError(f"singular matrix field during polar evaluation: {exc}")

    def polar(x, q):
        x = np.asarray(x, dtype=float)
        q = np.asarray(q, dtype=float)
        A = spec.matrix(np.broadcast_to(x, np.broadcast_shapes(x.shape, q.shape)))
        w = _solve_t(A, np.broadcast_to(q, A.shape[:-1]))
        return np.linalg.norm(w, axis=-1)

    def polar_grad(x, q):
        x = np.asarray(x, dtype=float)
        q = np.asarray(q, dtype=float)
        _check_nonzero(q, "polar_grad")
        A = spec.matrix(np.broadcast_to(x, np.broadcast_shapes(x.shape, q.shape)))
        w = _solve_t(A, np.broadcast_to(q, A.shape[:-1]))
        try:
            v = np.linalg.solve(A, w[..., None])[..., 0]
        except np.linalg.LinAlgError as exc:
            raise EvaluationError(f"singular matrix field during polar gradient: {exc}")
        return v / np.linalg.norm(w, axis=-1)[..., None]

    return HamiltonianModel(
        dim=spec.dim, eval_h=eval_h, grad_p=grad_p, polar=polar,
        polar_grad=polar_grad, constants=constants, provenance="closed-form",
        label=label, probe_points=probe_points, spec=spec)


def make_generic_model(h_callable: Callable, constants: StandingConstants,
                       domain: Box, params: NumericParams = DEFAULT_NUMERIC_PARAMS,
                       label: str = "generic",
                       spec: Optional[MatrixFieldSpec] = None) -> HamiltonianModel:
    """Numeric-fallback model around a positively 1-homogeneous callable.

    Construction spot-checks homogeneity and the declared speed sandwich on
    seeded samples and rejects the callable on violation. Gradients use central
    differences with step ``fd_step * max(1, |p|)``; the dual gauge and its
    gradient run the sphere-partition maximizer from the duality module.
    """
    dim = domain.dim
    rng = np.random.default_rng(params.seed)
    n = params.check_samples
    xs = domain.sample(rng, n)
    ps = rng.normal(size=(n, dim))
    ps /= np.linalg.norm(ps, axis=-1, keepdims=True)
    lam = rng.uniform(0.05, 10.0, size=n)

    base = np.asarray(h_callable(xs, ps), dtype=float)
    scaled = np.asarray(h_callable(xs, lam[:, None] * ps), dtype=float)
    err = np.abs(scaled - lam * base)
    bad = err > params.homogeneity_tol * np.maximum(lam, 1.0)
    if np.any(bad):
        j = int(np.argmax(err))
        raise ModelValidationError(
            f"callable is not positively 1-homogeneous: residual {err[j]:.3e} "
            f"at x={xs[j]}, lambda={lam[j]:.3f}")
    low = base < constants.r * (1.0 - 1e-12) - params.growth_tol
    high = base > constants.R * (1.0 + 1e-12) + params.growth_tol
    if np.any(low | high):
        j = int(np.argmax(np.maximum(constants.r - base, base - constants.R)))
        raise ModelValidationError(
            f"declared speed bounds [{constants.r}, {constants.R}] violated: "
            f"H={base[j]:.6f} at x={xs[j]}, p={ps[j]}")

    level = params.partition_level if dim == 2 else params.partition_level_3d
    partition = make_sphere_partition(dim, level)

    def eval_h(x, p):
        return np.asarray(h_callable(np.asarray(x, dtype=float),
                                     np.asarray(p, dtype=float)), dtype=float)

    def grad_p(x, p):
        x = np.asarray(x, dtype=float)
        p = np.asarray(p, dtype=float)
        _check_nonzero(p, "grad_p")
        bshape = np.broadcast_shapes(x.shape, p.shape)
        x = np.broadcast_to(x, bshape)
        p = np.broadcast_to(p, bshape)
        step = params.fd_step * np.maximum(1.0, np.linalg.norm(p, axis=-1))
        out = np.empty(bshape)
        for a in range(dim):
            e = np.zeros(dim)
            e[a] = 1.0
            dp = step[..., None] * e
            out[..., a] = (eval_h(x, p + dp) - eval_h(x, p - dp)) / (2.0 * step)
        return out

    def polar(x, q):
        from . import duality
        return duality.polar_eval_numeric(model, x, q, partition=partition,
                                          refine_iters=params.refine_iters)

    def polar_grad(x, q):
        from . import duality
        return duality.polar_grad_numeric(model, x, q, partition=partition,
                                          refine_iters=params.refine_iters)

    model = HamiltonianModel(
        dim=dim, eval_h=eval_h, grad_p=grad_p, polar=polar,
        polar_grad=polar_grad, constants=constants, provenance="numeric-fallback",
        label=label, probe_points=tuple(params.probe_points), spec=spec)
    return model


# ---------------------------------------------------------------------------
# JSON model specs


def _field_to_json(fld) -> dict:
    if isinstance(fld, PowerBump):
        return {"type": "power_bump", "center": list(fld.center),
                "amplitude": fld.amplitude, "exponent": fld.exponent}
    if isinstance(fld, TrigSum):
        doc = {"type": "trig_sum",
               "frequencies": [list(f) for f in fld.frequencies],
               "amplitudes": list(fld.amplitudes)}
        if fld.phases:
            doc["phases"] = list(fld.phases)
        return doc
    raise ModelValidationError(f"cannot serialize field of type {type(fld).__name__}")


def _field_from_json(doc: dict):
    kind = doc.get("type")
    if kind == "power_bump":
        return make_power_bump_field(doc["center"], doc["amplitude"], doc["exponent"])
    if kind == "trig_sum":
        freqs = tuple(tuple(float(v) for v in f) for f in doc["frequencies"])
        amps = tuple(float(a) for a in doc["amplitudes"])
        phases = tuple(float(p) for p in doc.get("phases", ()))
        return TrigSum(frequencies=freqs, amplitudes=amps, phases=phases)
    raise ModelValidationError(f"unknown field type {kind!r}")


def model_to_json(model: HamiltonianModel) -> dict:
    if model.spec is None:
        raise ModelValidationError("only matrix-backed models serialize to JSON")
    kind = "matrix_field" if model.provenance == "closed-form" else "generic"
    return {
        "type": kind,
        "base": [list(row) for row in model.spec.base],
        "perturbations": [
            {"field": _field_to_json(fld), "matrix": [list(row) for row in mat]}
            for fld, mat in model.spec.perturbations
        ],
        "constants": {"r": model.constants.r, "R": model.constants.R,
                      "c0": model.constants.c0, "alpha": model.constants.alpha},
    }


def model_from_json(doc: dict, domain: Box,
                    params: NumericParams = DEFAULT_NUMERIC_PARAMS) -> HamiltonianModel:
    """Build a model from its JSON spec.

    ``matrix_field`` uses the closed forms. ``generic`` routes the same matrix
    family through the numeric-fallback wrapper (finite differences plus sphere
    maximization), which is the serializable stand-in for arbitrary callables
    and doubles as a closed-form cross-check.
    """
    kind = doc.get("type")
    if kind not in ("matrix_field", "generic"):
        raise ModelValidationError(f"unknown model type {kind!r}")
    cdoc = doc.get("constants")
    if cdoc is None:
        raise ModelValidationError("model spec is missing 'constants'")
    try:
        constants = StandingConstants(r=float(cdoc["r"]), R=float(cdoc["R"]),
                                      c0=float(cdoc["c0"]), alpha=float(cdoc["alpha"]))
    except KeyError as exc:
        raise ModelValidationError(f"constants missing key {exc}")
    perts = tuple(( _field_from_json(p["field"]),
                    tuple(tuple(float(v) for v in row) for row in p["matrix"]))
                  for p in doc.get("perturbations", []))
    spec = MatrixFieldSpec(base=tuple(tuple(float(v) for v in row) for row in doc["base"]),
                           perturbations=perts)
    if kind == "matrix_field":
        return make_matrix_field_model(spec, constants, domain, params=params)
    closed = make_matrix_field_model(spec, constants, domain, params=params)
    centers = _collect_probe_points(spec)
    gparams = NumericParams(**{**params.__dict__, "probe_points": centers})
    return make_generic_model(closed.eval_h, constants, domain, params=gparams,
                              label="generic", spec=spec)
