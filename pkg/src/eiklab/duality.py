"""Convex duality toolkit: numeric dual gauge, gradient duality, inequality checkers.

The dual gauge of a convex, positively 1-homogeneous H(x, .) is evaluated by
maximizing <theta, q> / H(x, theta) over a deterministic sphere partition and
sharpening the best direction by golden-section (2-d) or shrinking-ring (3-d)
refinement. Boundary points of the dual unit ball are theta / H(x, theta), so
the maximizing direction also yields the dual gradient.

Checkers return LemmaResidual rows with margin = rhs - lhs; a nonnegative
margin means the inequality held at that sample. Constants default to audited
estimates (see the audit module); a declared StandingConstants bundle can be
substituted, in which case its single (r, R) pair plays every role, matching
the standing-assumption convention.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .fitting import FitError  # noqa: F401  (re-exported for callers)
from .geometry import (SpherePartition, direction_2d, extrapolate_to_zero,
                       golden_refine_max, make_sphere_partition,
                       ring_refine_max_3d, unit_rows)
from .hamiltonians import EvaluationError, StandingConstants

DEFAULT_PARTITION_2D = 720
DEFAULT_REFINE_ITERS = 40
_TIE_ABS = 1e-12


class ModelDefectError(RuntimeError):
    """The support maximization found a flat: two far-apart directions tie.

    Signals a Hamiltonian whose unit ball is not strictly convex, which is
    outside the standing assumptions.
    """


@dataclass(frozen=True)
class LemmaResidual:
    lemma_id: str
    sample: tuple
    lhs: float
    rhs: float
    margin: float


def _residual(lemma_id: str, sample, lhs: float, rhs: float) -> LemmaResidual:
    return LemmaResidual(lemma_id=lemma_id, sample=tuple(np.ravel(sample).tolist()),
                         lhs=float(lhs), rhs=float(rhs), margin=float(rhs - lhs))


@dataclass(frozen=True)
class SuiteConstants:
    """Constants routed to the checkers, one slot per structural role.

    ``growth_*`` bound H on unit covectors, ``pinch_*`` are the curvature
    pinching radii, and ``sa_*`` the combined pair valid for both roles
    (min/max of the two), which is what the chord and Hoelder inequalities
    assume.
    """

    growth_r: float
    growth_R: float
    pinch_r: float
    pinch_R: float
    sa_r: float
    sa_R: float
    c0: float
    alpha: float


def suite_constants(source) -> SuiteConstants:
    if isinstance(source, SuiteConstants):
        return source
    if isinstance(source, StandingConstants):
        return SuiteConstants(growth_r=source.r, growth_R=source.R,
                              pinch_r=source.r, pinch_R=source.R,
                              sa_r=source.r, sa_R=source.R,
                              c0=source.c0, alpha=source.alpha)
    if hasattr(source, "r_hat"):  # audit report, duck-typed to avoid an import cycle
        return SuiteConstants(
            growth_r=source.r_hat, growth_R=source.R_hat,
            pinch_r=source.pinch_inner_hat, pinch_R=source.pinch_outer_hat,
            sa_r=min(source.r_hat, source.pinch_inner_hat),
            sa_R=max(source.R_hat, source.pinch_outer_hat),
            c0=source.c0_hat, alpha=source.declared.alpha)
    raise TypeError(f"cannot derive suite constants from {type(source).__name__}")


def _default_partition(dim: int) -> SpherePartition:
    return make_sphere_partition(dim, DEFAULT_PARTITION_2D if dim == 2 else 4)


def _check_ties(scores_row: np.ndarray, dirs: np.ndarray, resolution: float):
    smax = scores_row.max()
    cand = np.flatnonzero(smax - scores_row <= _TIE_ABS * max(1.0, abs(smax)))
    if cand.size < 2:
        return
    sub = dirs[cand]
    gram = np.clip(sub @ sub.T, -1.0, 1.0)
    max_angle = float(np.arccos(gram.min()))
    if max_angle > 10.0 * resolution:
        raise ModelDefectError(
            f"support maximization tie across {np.degrees(max_angle):.2f} deg; "
            "the unit ball appears to have a flat side")


def _polar_argmax(model, x, q, partition: Optional[SpherePartition],
                  refine_iters: int, chunk: int = 4096):
    """Maximize <theta, q>/H(x, theta). Returns (directions, values) per sample.

    ``x`` and ``q`` broadcast; the flattened batch is processed in chunks to
    bound the (batch x partition) score matrix.
    """
    x = np.asarray(x, dtype=float)
    q = np.asarray(q, dtype=float)
    if np.any(np.linalg.norm(q, axis=-1) == 0.0):
        raise EvaluationError("dual gauge requires a nonzero vector")
    dim = q.shape[-1]
    part = partition if partition is not None else _default_partition(dim)
    dirs = part.directions
    bshape = np.broadcast_shapes(x.shape, q.shape)
    xb = np.broadcast_to(x, bshape).reshape(-1, dim)
    qb = np.broadcast_to(q, bshape).reshape(-1, dim)
    n = xb.shape[0]
    best_dir = np.empty((n, dim))
    best_val = np.empty(n)
    for start in range(0, n, chunk):
        sl = slice(start, min(start + chunk, n))
        xc, qc = xb[sl], qb[sl]
        h = model.eval_h(xc[:, None, :], dirs[None, :, :])  # (b, M)
        scores = np.einsum("md,bd->bm", dirs, qc) / h
        jbest = np.argmax(scores, axis=1)
        smax = scores[np.arange(scores.shape[0]), jbest]
        near = np.count_nonzero(
            smax[:, None] - scores <= _TIE_ABS * np.maximum(1.0, np.abs(smax))[:, None],
            axis=1)
        for row in np.flatnonzero(near > 1):
            _check_ties(scores[row], dirs, part.resolution)
        if dim == 2:
            theta0 = np.arctan2(dirs[jbest, 1], dirs[jbest, 0])

            def objective(theta, xc=xc, qc=qc):
                e = direction_2d(theta)
                return np.einsum("bd,bd->b", e, qc) / model.eval_h(xc, e)

            tb, vb = golden_refine_max(objective, theta0, 2.0 * np.pi / part.count,
                                       refine_iters)
            best_dir[sl] = direction_2d(tb)
            best_val[sl] = vb
        else:
            for i in range(xc.shape[0]):
                xi, qi = xc[i], qc[i]

                def objective(dd, xi=xi, qi=qi):
                    return (dd @ qi) / model.eval_h(xi, dd)

                d0 = dirs[jbest[i]]
                db, vb = ring_refine_max_3d(objective, d0, 2.0 * part.resolution,
                                            refine_iters)
                best_dir[sl.start + i] = db
                best_val[sl.start + i] = vb
    return best_dir.reshape(bshape), best_val.reshape(bshape[:-1])


def polar_eval_numeric(model, x, q, partition: Optional[SpherePartition] = None,
                       refine_iters: int = DEFAULT_REFINE_ITERS):
    """Dual gauge by direct maximization; monotone in partition and iterations."""
    _, val = _polar_argmax(model, x, q, partition, refine_iters)
    return val if val.ndim else float(val)


def polar_grad_numeric(model, x, q, partition: Optional[SpherePartition] = None,
                       refine_iters: int = DEFAULT_REFINE_ITERS):
    """Maximizing boundary point theta*/H(x, theta*); 0-homogeneous in q."""
    d, _ = _polar_argmax(model, x, q, partition, refine_iters)
    h = model.eval_h(x, d)
    return d / np.asarray(h)[..., None]


# ---------------------------------------------------------------------------
# checkers


def check_support_identity(model, x, p, partition: Optional[SpherePartition] = None,
                           refine_iters: int = DEFAULT_REFINE_ITERS,
                           tol: float = 1e-8) -> list:
    """Euler identity <grad_p, p> = H and the support-function identity."""
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    h = float(model.eval_h(x, p))
    g = model.grad_p(x, p)
    scale = max(1.0, float(np.linalg.norm(p)))
    out = [_residual("euler_identity", (x, p), abs(float(g @ p) - h), tol * scale)]

    part = partition if partition is not None else _default_partition(model.dim)
    dirs = part.directions
    vels = model.grad_p(x[None, :], dirs)
    sup0 = vels @ p
    j = int(np.argmax(sup0))
    if model.dim == 2:
        theta0 = np.arctan2(dirs[j, 1], dirs[j, 0])

        def objective(theta):
            e = direction_2d(theta)
            return model.grad_p(np.broadcast_to(x, e.shape), e) @ p

        _, sup = golden_refine_max(objective, np.asarray(theta0), 2.0 * np.pi / part.count,
                                   refine_iters)
        sup = float(sup)
    else:
        sup = float(sup0[j])
    out.append(_residual("support_identity", (x, p), abs(sup - h), tol * scale))
    return out


def check_f_holder(model, x, y, p, constants) -> LemmaResidual:
    """Velocity-map continuity: |f_p(x) - f_p(y)| <= (c0 + sqrt(2 c0 R)) |x-y|^alpha."""
    sc = suite_constants(constants)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    p = np.asarray(p, dtype=float)
    lhs = float(np.linalg.norm(model.grad_p(x, p) - model.grad_p(y, p)))
    dist = float(np.linalg.norm(x - y))
    rhs = (sc.c0 + np.sqrt(2.0 * sc.c0 * sc.sa_R)) * dist**sc.alpha
    return _residual("f_holder", (x, y, p), lhs, rhs)


def check_direction_sandwich(model, x, p, q, constants) -> list:
    """Chord comparability: |f_p - f_q| / R <= |p^ - q^| <= |f_p - f_q| / r."""
    sc = suite_constants(constants)
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    df = float(np.linalg.norm(model.grad_p(x, p) - model.grad_p(x, q)))
    dn = float(np.linalg.norm(p / np.linalg.norm(p) - q / np.linalg.norm(q)))
    return [
        _residual("sandwich_lower", (x, p, q), df / sc.sa_R, dn),
        _residual("sandwich_upper", (x, p, q), dn, df / sc.sa_r),
    ]


def check_curvature_pinching(model, x, p, q, constants) -> list:
    """Two-sided curvature bound at v = f_q(x) against the pinch radii."""
    sc = suite_constants(constants)
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    fp = model.grad_p(x, p)
    dv = model.grad_p(x, q) - fp
    s = float(dv @ (p / np.linalg.norm(p)))
    nd2 = float(dv @ dv)
    return [
        _residual("pinch_inner", (x, p, q), -nd2 / (2.0 * sc.pinch_r), s),
        _residual("pinch_outer", (x, p, q), s, -nd2 / (2.0 * sc.pinch_R)),
    ]


def check_polar_growth_and_holder(model, x, y, q, constants) -> list:
    """Dual gauge growth sandwich and its Hoelder-in-x bound."""
    sc = suite_constants(constants)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    q = np.asarray(q, dtype=float)
    nq = float(np.linalg.norm(q))
    h0x = float(model.polar(x, q))
    h0y = float(model.polar(y, q))
    dist = float(np.linalg.norm(x - y))
    rhs_holder = (sc.c0 / sc.sa_r**2) * nq * dist**(2.0 * sc.alpha)
    return [
        _residual("polar_growth_lower", (x, q), nq / sc.growth_R, h0x),
        _residual("polar_growth_upper", (x, q), h0x, nq / sc.growth_r),
        _residual("polar_holder", (x, y, q), abs(h0x - h0y), rhs_holder),
    ]


def check_gradient_duality(model, x, p, partition: Optional[SpherePartition] = None,
                           refine_iters: int = DEFAULT_REFINE_ITERS,
                           tol: Optional[float] = None) -> LemmaResidual:
    """Roundtrip p^ -> q = grad_p(x, p^) -> dual gradient, which must return p^.

    ``p`` is first scaled onto the dual unit sphere (divide by H). The return
    leg uses the model's own dual gradient, so closed forms are held to their
    own precision; tolerance defaults by provenance: 1e-6 closed form, 1e-5
    numeric fallback. ``partition``/``refine_iters`` tune the numeric leg when
    the model has no closed dual gradient.
    """
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    h = float(model.eval_h(x, p))
    if h == 0.0:
        raise EvaluationError("cannot normalize a covector with H(x, p) = 0")
    p_hat = p / h
    qv = model.grad_p(x, p_hat)
    if model.provenance == "closed-form" or partition is None:
        p_back = model.polar_grad(x, qv)
    else:
        p_back = polar_grad_numeric(model, x, qv, partition=partition,
                                    refine_iters=refine_iters)
    if tol is None:
        tol = 1e-6 if model.provenance == "closed-form" else 1e-5
    lhs = float(np.linalg.norm(p_back - p_hat))
    return _residual("gradient_duality", (x, p), lhs, tol)


def estimate_polar_grad_lipschitz(model, domain, sample_count: int = 2000,
                                  seed: int = 0) -> float:
    """Sharp empirical constant for |Dq(x,q) - Dq(x,q')| <= C |q-q'| / (|q| v |q'|)."""
    rng = np.random.default_rng(seed)
    xs = domain.sample(rng, sample_count)
    qa = rng.normal(size=(sample_count, domain.dim))
    qb = rng.normal(size=(sample_count, domain.dim))
    qa *= rng.uniform(0.5, 2.0, size=(sample_count, 1)) / np.linalg.norm(qa, axis=1, keepdims=True)
    qb *= rng.uniform(0.5, 2.0, size=(sample_count, 1)) / np.linalg.norm(qb, axis=1, keepdims=True)
    gap = np.linalg.norm(qa - qb, axis=1)
    ok = gap > 1e-10
    ga = model.polar_grad(xs[ok], qa[ok])
    gb = model.polar_grad(xs[ok], qb[ok])
    num = np.linalg.norm(ga - gb, axis=1)
    scale = np.maximum(np.linalg.norm(qa[ok], axis=1), np.linalg.norm(qb[ok], axis=1))
    return float(np.max(num * scale / gap[ok]))


def bipolar_residuals(model, domain, sample_count: int, seed: int = 0,
                      partition: Optional[SpherePartition] = None,
                      refine_iters: int = DEFAULT_REFINE_ITERS,
                      inner: str = "model") -> np.ndarray:
    """Relative error of the double dual against H on seeded samples.

    ``inner="model"`` wraps the model's own dual gauge; ``inner="numeric"``
    forces the partition maximizer for the inner gauge as well, exercising the
    fully numeric route at quadratic cost.
    """
    rng = np.random.default_rng(seed)
    xs = domain.sample(rng, sample_count)
    ps = rng.normal(size=(sample_count, model.dim))
    ps = unit_rows(ps) * rng.uniform(0.5, 2.0, size=(sample_count, 1))

    if inner == "model":
        inner_gauge = model.polar
    elif inner == "numeric":
        inner_part = (partition if partition is not None
                      else make_sphere_partition(model.dim, 360 if model.dim == 2 else 3))

        def inner_gauge(x, q):
            return polar_eval_numeric(model, x, q, partition=inner_part,
                                      refine_iters=refine_iters // 2)
    else:
        raise ValueError(f"unknown inner gauge mode {inner!r}")

    class _DualModel:
        dim = model.dim
        eval_h = staticmethod(inner_gauge)

    rel = np.empty(sample_count)
    for i in range(sample_count):
        h = float(model.eval_h(xs[i], ps[i]))
        hh = float(polar_eval_numeric(_DualModel, xs[i], ps[i], partition=partition,
                                      refine_iters=refine_iters))
        rel[i] = abs(hh - h) / h
    return rel


# ---------------------------------------------------------------------------
# batch suite driver


def run_lemma_suite(model, constants, domain, sample_count: int = 10000,
                    seed: int = 0, pair_scale_window=(1e-3, 1e-1)) -> list:
    """Evaluate every structural inequality on seeded samples; returns residual rows.

    Sample positions mix uniform draws with pairs anchored at the model's probe
    points so that known extremal locations are always represented.
    """
    sc = suite_constants(constants)
    rng = np.random.default_rng(seed)
    dim = model.dim
    n = sample_count

    xs = domain.sample(rng, n)
    anchors = [np.asarray(p, dtype=float) for p in model.probe_points
               if np.all(domain.contains(np.asarray(p, dtype=float)))]
    if anchors:
        n_anchor = min(n // 10, 200 * len(anchors))
        idx = np.arange(n_anchor)
        xs[idx] = np.asarray(anchors)[idx % len(anchors)]

    t = np.exp(rng.uniform(np.log(pair_scale_window[0]), np.log(pair_scale_window[1]),
                           size=n))
    step = unit_rows(rng.normal(size=(n, dim)))
    ys = xs + t[:, None] * step

    pu = unit_rows(rng.normal(size=(n, dim)))
    qu = unit_rows(rng.normal(size=(n, dim)))

    out = []

    # velocity-map continuity
    fp_x = model.grad_p(xs, pu)
    fp_y = model.grad_p(ys, pu)
    lhs = np.linalg.norm(fp_x - fp_y, axis=1)
    rhs = (sc.c0 + np.sqrt(2.0 * sc.c0 * sc.sa_R)) * t**sc.alpha
    for i in range(n):
        out.append(_residual("f_holder", (xs[i], ys[i], pu[i]), lhs[i], rhs[i]))

    # chord sandwich and curvature pinching at shared samples
    fq_x = model.grad_p(xs, qu)
    df = np.linalg.norm(fp_x - fq_x, axis=1)
    dn = np.linalg.norm(pu - qu, axis=1)
    dv = fq_x - fp_x
    s = np.einsum("bd,bd->b", dv, pu)
    nd2 = np.einsum("bd,bd->b", dv, dv)
    for i in range(n):
        sample = (xs[i], pu[i], qu[i])
        out.append(_residual("sandwich_lower", sample, df[i] / sc.sa_R, dn[i]))
        out.append(_residual("sandwich_upper", sample, dn[i], df[i] / sc.sa_r))
        out.append(_residual("pinch_inner", sample, -nd2[i] / (2.0 * sc.pinch_r), s[i]))
        out.append(_residual("pinch_outer", sample, s[i], -nd2[i] / (2.0 * sc.pinch_R)))

    # dual gauge growth and continuity
    qv = unit_rows(rng.normal(size=(n, dim))) * rng.uniform(0.5, 2.0, size=(n, 1))
    nq = np.linalg.norm(qv, axis=1)
    h0x = np.asarray(model.polar(xs, qv), dtype=float)
    h0y = np.asarray(model.polar(ys, qv), dtype=float)
    rhs_holder = (sc.c0 / sc.sa_r**2) * nq * t**(2.0 * sc.alpha)
    for i in range(n):
        out.append(_residual("polar_growth_lower", (xs[i], qv[i]), nq[i] / sc.growth_R, h0x[i]))
        out.append(_residual("polar_growth_upper", (xs[i], qv[i]), h0x[i], nq[i] / sc.growth_r))
        out.append(_residual("polar_holder", (xs[i], ys[i], qv[i]),
                             abs(h0x[i] - h0y[i]), rhs_holder[i]))
    return out


def strict_convexity_residuals(model, x, sample_count: int = 512, seed: int = 0,
                               partition: Optional[SpherePartition] = None,
                               refine_iters: int = DEFAULT_REFINE_ITERS):
    """Quadratic lower bound on the dual ball at a fixed position.

    Estimates the sharp constant R' in <p' - p, f_p/|f_p|> <= -|p'-p|^2 / (2 R')
    over dual boundary points via near-coincident pairs, then reports residuals
    of the inequality with that constant on separated seeded pairs. The sharp
    constant is returned alongside; no closed-form value is assumed for it.
    """
    if model.dim != 2:
        raise NotImplementedError("strict convexity scan is 2-d only")
    x = np.asarray(x, dtype=float)
    rng = np.random.default_rng(seed)

    def boundary_point(theta):
        e = direction_2d(theta)
        h = model.eval_h(np.broadcast_to(x, e.shape), e)
        return e / np.asarray(h)[..., None]

    # sharp constant from the near-coincident limit on a deterministic sweep;
    # sampled at three separations and extrapolated to zero, where direct
    # evaluation loses the quotient to cancellation
    thetas = 2.0 * np.pi * np.arange(1024) / 1024
    pa = boundary_point(thetas)
    fa = unit_rows(model.grad_p(np.broadcast_to(x, pa.shape), pa))
    sweep = []
    for d_th in (1e-3, 2e-3, 4e-3):
        dv = boundary_point(thetas + d_th) - pa
        num = np.einsum("bd,bd->b", dv, dv)
        den = -2.0 * np.einsum("bd,bd->b", dv, fa)
        with np.errstate(divide="ignore", invalid="ignore"):
            sweep.append(np.where(den > 0, num / den, np.nan))
    rich = extrapolate_to_zero(sweep[0], sweep[1], sweep[2])
    r_prime = float(np.nanmax(rich))
    r_prime += 5e-9 * max(1.0, abs(r_prime))

    th1 = rng.uniform(0.0, 2.0 * np.pi, size=sample_count)
    th2 = rng.uniform(0.0, 2.0 * np.pi, size=sample_count)
    p1 = boundary_point(th1)
    p2 = boundary_point(th2)
    f1 = unit_rows(model.grad_p(np.broadcast_to(x, p1.shape), p1))
    dv = p2 - p1
    lhs = np.einsum("bd,bd->b", dv, f1)
    rhs = -np.einsum("bd,bd->b", dv, dv) / (2.0 * r_prime)
    residuals = [_residual("strict_convexity", (x, p1[i], p2[i]), lhs[i], rhs[i])
                 for i in range(sample_count)]
    return r_prime, residuals
