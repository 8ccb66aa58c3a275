"""Drift fields of the approximating dynamics on the discrete path space.

The scalar coefficients come from the integration-by-parts formula for the
energy-weighted measure: for interval j and axis a,

    coeff(a, j) = eps^{-3/2} <db_j - db_{j+1}, e_a>
                  + sum_a1 q_j^{(a1)}[a, a1],

with db_{n+1} = 0 and q_j^{(a1)} the curvature integral of the interval field
(a1, j) over its own interval.  The assembled vector field and its simplified
variant (which drops the curvature integral and survives in the flat case)
feed the time integrators and the continuum-limit diagnostic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .jacobi import jacobi_basis, q_operator, require_admissible
from .pathgrid import anti_development, horizontal_lift
from .smoothpaths import SmoothPath


@dataclass
class DriftField:
    """Ambient drift vectors at the grid points x_1..x_n."""

    vectors: np.ndarray  # (n, ambient_dim)
    variant: str  # "full" | "simple"
    eps: float
    delta: float


def _increments_with_zero_tail(path, frames):
    inc = anti_development(path, frames)
    ext = np.zeros((path.n + 1, path.manifold.dim))
    ext[:-1] = inc
    return inc, ext


def beta_coefficient(path, frames, a, j):
    """Single integration-by-parts coefficient for direction (a, j)."""
    return float(beta_coefficients(path, frames)[j - 1, a])


def beta_coefficients(path, frames):
    """All coefficients, shape (n, d); row j-1 holds axes a = 0..d-1."""
    require_admissible(path)
    M = path.manifold
    eps = path.partition.eps
    inc, ext = _increments_with_zero_tail(path, frames)
    n, d = path.n, M.dim
    out = np.empty((n, d))
    curved = M.kappa0 != 0.0
    for j in range(1, n + 1):
        first = eps ** (-1.5) * (ext[j - 1] - ext[j])
        corr = np.zeros(d)
        if curved:
            for a1 in range(d):
                f = jacobi_basis(path, frames, a1, j, check_residual=False)
                qj = q_operator(path, frames, f, s=j * eps)
                corr += qj[:, a1]
        out[j - 1] = first + corr
    return out


def curvature_correction(path, frames):
    """The q-integral part of the coefficients alone, shape (n, d)."""
    full = beta_coefficients(path, frames)
    M = path.manifold
    eps = path.partition.eps
    _, ext = _increments_with_zero_tail(path, frames)
    first = eps ** (-1.5) * (ext[:-1] - ext[1:])
    return full - first


def drift_field_full(path, frames):
    """X at grid point i: (1/(2 sqrt(eps))) sum_a coeff(a, i) u(s_i) e_a."""
    M = path.manifold
    eps = path.partition.eps
    beta = beta_coefficients(path, frames)
    vecs = np.stack(
        [
            M.frame_apply(frames[i], beta[i - 1]) / (2.0 * math.sqrt(eps))
            for i in range(1, path.n + 1)
        ]
    )
    return DriftField(vecs, "full", eps, path.delta)


def drift_field_simple(path, frames):
    """Velocity-jump drift: (1/(2 eps)) (gamma'(s_i-) - gamma'(s_i+))."""
    require_admissible(path)
    M = path.manifold
    eps = path.partition.eps
    _, ext = _increments_with_zero_tail(path, frames)
    vecs = np.stack(
        [
            M.frame_apply(frames[i], (ext[i - 1] - ext[i]) / (2.0 * eps * eps))
            for i in range(1, path.n + 1)
        ]
    )
    return DriftField(vecs, "simple", eps, path.delta)


def continuum_drift(spec: SmoothPath, s):
    """Limit field: -1/2 nabla_s gamma' + 1/4 Ric(gamma') - 1/12 grad Scal.

    The last term vanishes on the shipped constant-curvature manifolds.
    """
    M = spec.manifold
    acc = spec.covariant_acceleration(s)
    ric = M.ricci(spec.gamma(s), spec.dgamma(s))
    return -0.5 * acc + 0.25 * ric - (1.0 / 12.0) * M.grad_scalar(spec.gamma(s))


def drift_limit_study(spec: SmoothPath, eps_list, delta=None, interior_only=True):
    """Sup-norm gap between the assembled drift and its continuum limit per eps.

    The comparison runs over interior grid points: the last grid point carries
    the zero-tail boundary convention, which is a Neumann-type condition the
    smooth test curves do not satisfy, so it is excluded from the sup.
    Returns a dict with per-eps errors and the fitted log-log slope.
    """
    from .jacobi import default_delta

    M = spec.manifold
    if delta is None:
        delta = default_delta(M)
    rows = []
    for eps in eps_list:
        n = int(round(1.0 / eps))
        path = spec.sample(n, delta)
        frames = horizontal_lift(path)
        drift = drift_field_full(path, frames)
        hi = n - 1 if interior_only else n
        errs = [
            float(
                np.linalg.norm(
                    drift.vectors[i - 1] - continuum_drift(spec, i / n)
                )
            )
            for i in range(1, hi + 1)
        ]
        rows.append({"eps": eps, "n": n, "sup_error": max(errs)})
    xs = np.log([r["eps"] for r in rows])
    ys = np.log([max(r["sup_error"], 1e-300) for r in rows])
    slope = float(np.polyfit(xs, ys, 1)[0])
    return {"rows": rows, "slope": slope, "label": spec.label}


def drift_to_csv(path, drift: DriftField):
    """CSV dump (i, s_i, vector components, variant)."""
    import csv
    import io

    buf = io.StringIO()
    w = csv.writer(buf)
    m = path.manifold.ambient_dim
    w.writerow(["i", "s_i"] + [f"v_{k}" for k in range(m)] + ["variant"])
    for i in range(1, path.n + 1):
        w.writerow(
            [i, repr(i * path.partition.eps)]
            + [repr(float(x)) for x in drift.vectors[i - 1]]
            + [drift.variant]
        )
    return buf.getvalue()
