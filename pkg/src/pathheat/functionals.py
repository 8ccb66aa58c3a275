"""Cylinder functionals, gradients, and the stochastic-integral checks.

A cylinder functional is f(I_1, ..., I_m) with I_j the time integral of an
integrand g_j(s, x) along the path, evaluated by the trapezoid rule on the
grid.  Gradients are taken pointwise: DF(s_i) collects the frame coordinates
of the (tangent-projected) integrand gradients weighted by the outer partial
derivatives.  The grid inner product uses trapezoid weights throughout so the
analytic directional derivative agrees with geometric finite differences to
second order in the spacing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DomainError, ProvenanceError
from .dynamics import horizontal_brownian_batch
from .rngutil import child_rngs


# --- functional types -----------------------------------------------------------


@dataclass
class Integrand:
    """g(s, x) with its ambient spatial gradient; both vectorized over x."""

    g: Callable  # (s_scalar, pts (..., m)) -> (...,)
    grad: Callable  # (s_scalar, pts (..., m)) -> (..., m)
    label: str = ""


@dataclass
class CylinderFunction:
    """F = f(I_1..I_m), I_j = trapezoid of g_j(s, gamma_s) over the grid."""

    outer: Callable  # (..., m_args) -> (...)
    outer_grad: Callable  # (..., m_args) -> (..., m_args)
    integrands: list = field(default_factory=list)
    label: str = ""

    @property
    def m(self):
        return len(self.integrands)

    def check_bounded(self, manifold, rng, samples=64, bound=1e6):
        pts = manifold.random_point(rng, size=samples)
        for gj in self.integrands:
            if not np.all(np.isfinite(gj.g(0.5, pts))) or np.any(
                np.abs(gj.g(0.5, pts)) > bound
            ):
                raise DomainError(f"integrand {gj.label} unbounded on {manifold.kind}")
            if np.any(np.abs(gj.grad(0.5, pts)) > bound):
                raise DomainError(f"gradient of {gj.label} unbounded")
        return True


@dataclass
class DirectionField:
    """Cameron-Martin direction: h(0) = 0, piecewise C^1 with derivative oracle."""

    h: Callable  # s -> (d,) ; vectorized over s arrays -> (len(s), d)
    dh: Callable
    loop: bool = False
    label: str = ""

    def values(self, times):
        return np.asarray(self.h(np.asarray(times, dtype=float)))

    def derivs(self, times):
        return np.asarray(self.dh(np.asarray(times, dtype=float)))

    def cm_norm_sq(self, npts=2001):
        s = np.linspace(0.0, 1.0, npts)
        d = self.derivs(s)
        return float(np.trapezoid(np.sum(d * d, axis=-1), s))


def linear_direction(vec, label="linear"):
    vec = np.asarray(vec, dtype=float)
    return DirectionField(
        h=lambda s: np.multiply.outer(np.asarray(s, float), vec),
        dh=lambda s: np.broadcast_to(vec, np.shape(s) + vec.shape).copy(),
        label=label,
    )


def sine_direction(vec, freq=1.0, label="sine"):
    """h(s) = sin(pi freq s) vec; a loop direction when freq is an integer."""
    vec = np.asarray(vec, dtype=float)
    w = math.pi * freq
    return DirectionField(
        h=lambda s: np.multiply.outer(np.sin(w * np.asarray(s, float)), vec),
        dh=lambda s: np.multiply.outer(w * np.cos(w * np.asarray(s, float)), vec),
        loop=abs(freq - round(freq)) < 1e-12,
        label=label,
    )


# --- trapezoid machinery -----------------------------------------------------------


def _trapz_weights(times):
    w = np.full(times.shape, times[1] - times[0])
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def inner_integrals(F, times, pts):
    """I_j per path; pts (..., n+1, m) -> (..., m_args)."""
    w = _trapz_weights(times)
    cols = []
    for gj in F.integrands:
        vals = np.stack([gj.g(times[i], pts[..., i, :]) for i in range(len(times))], axis=-1)
        cols.append(vals @ w)
    return np.stack(cols, axis=-1)


def eval_cylinder(F, path):
    return float(F.outer(inner_integrals(F, path.partition.times, path.points)))


def eval_cylinder_batch(F, manifold, times, pts):
    return np.asarray(F.outer(inner_integrals(F, times, pts)))


def l2_gradient(F, path, frames):
    """DF at grid points in frame coordinates, shape (n+1, d)."""
    M = path.manifold
    times = path.partition.times
    args = inner_integrals(F, times, path.points)
    douter = np.atleast_1d(F.outer_grad(args))
    out = np.zeros((len(times), M.dim))
    for j, gj in enumerate(F.integrands):
        for i in range(len(times)):
            g_amb = M.tangent_project(path.points[i], gj.grad(times[i], path.points[i]))
            out[i] += douter[j] * M.frame_coords(path.points[i], frames[i], g_amb)
    return out


def gradient_norms_sq_batch(F, manifold, times, pts):
    """|DF(s_i)|^2 per path and grid point (frame-free), shape (N, n+1)."""
    args = inner_integrals(F, times, pts)
    douter = F.outer_grad(args)  # (N, m_args)
    if douter.ndim == 1:
        douter = douter[:, None]
    N = pts.shape[0]
    acc = np.zeros((N, len(times), pts.shape[-1]))
    for j, gj in enumerate(F.integrands):
        for i in range(len(times)):
            g_amb = manifold.tangent_project(pts[:, i], gj.grad(times[i], pts[:, i]))
            acc[:, i] += douter[:, j, None] * g_amb
    return np.sum(acc * acc, axis=-1)


def directional_derivative(F, path, frames, direction: DirectionField):
    """<DF, h> in the trapezoid grid inner product."""
    times = path.partition.times
    w = _trapz_weights(times)
    DF = l2_gradient(F, path, frames)
    H = direction.values(times)
    return float(np.sum(w[:, None] * DF * H))


def directional_derivative_fd(F, path, frames, direction, tau=1e-4):
    """Geometric finite differences: perturb the path by exp(t u h)."""
    M = path.manifold
    times = path.partition.times

    def shifted(t):
        pts = path.points.copy()
        for i in range(1, len(times)):
            v = M.frame_apply(frames[i], direction.values(times[i : i + 1])[0])
            pts[i] = M.exp(path.points[i], t * v)
        return float(F.outer(inner_integrals(F, times, pts)))

    return (shifted(tau) - shifted(-tau)) / (2 * tau)


def dirichlet_energy(F, manifold, times, pts):
    """MC estimate of (1/2) E |DF|^2 with stderr over the ensemble."""
    w = _trapz_weights(times)
    norms = gradient_norms_sq_batch(F, manifold, times, pts)
    per_path = 0.5 * norms @ w
    return float(per_path.mean()), float(per_path.std(ddof=1) / math.sqrt(len(per_path)))


# --- stochastic integrals -------------------------------------------------------------


def beta_h(manifold, times, dB, direction: DirectionField, use_ricci=True):
    """Left-point Ito sum of <h' + (1/2) Ric h, dB> per draw.

    dB (N, n, d) must be the true driving increments of the sampler that
    produced the paths; the Ricci transform is the constant matrix
    kappa (d-1) I in any orthonormal frame on the shipped manifolds.
    """
    if dB is None:
        raise ProvenanceError("beta_h needs the driving increments of the draw")
    left = times[:-1]
    integrand = direction.derivs(left)
    if use_ricci:
        ric = manifold.kappa * (manifold.dim - 1)
        integrand = integrand + 0.5 * ric * direction.values(left)
    return np.einsum("kd,nkd->n", integrand, dB)


def ibp_check(manifold, F, direction, nsamples, rng, steps=64, use_kernel=True):
    """Statistical integration-by-parts test over horizontal Brownian draws.

    lhs = mean of D_h F, rhs = mean of F beta_h over the same draws; the
    z-score uses the paired-difference stderr.
    """
    times = np.arange(steps + 1) / steps
    hv = direction.values(times)
    pts, dB, pushed = horizontal_brownian_batch(
        manifold, steps, rng, nsamples, h_values=hv
    )
    Fvals = eval_cylinder_batch(F, manifold, times, pts)
    # D_h F = sum_j douter_j * trapz <tangent grad g_j, u h>
    args = inner_integrals(F, times, pts)
    douter = F.outer_grad(args)
    if douter.ndim == 1:
        douter = douter[:, None]
    w = _trapz_weights(times)
    dh = np.zeros(nsamples)
    for j, gj in enumerate(F.integrands):
        acc = np.zeros((nsamples, len(times)))
        for i in range(len(times)):
            g_amb = manifold.tangent_project(pts[:, i], gj.grad(times[i], pts[:, i]))
            acc[:, i] = np.sum(g_amb * pushed[:, i], axis=-1)
        dh += douter[:, j] * (acc @ w)
    bh = beta_h(manifold, times, dB, direction)
    rhs_vals = Fvals * bh
    diff = dh - rhs_vals
    stderr = float(diff.std(ddof=1) / math.sqrt(nsamples))
    lhs, rhs = float(dh.mean()), float(rhs_vals.mean())
    z = (lhs - rhs) / stderr if stderr > 0 else 0.0
    return {
        "lhs": lhs,
        "rhs": rhs,
        "lhs_stderr": float(dh.std(ddof=1) / math.sqrt(nsamples)),
        "rhs_stderr": float(rhs_vals.std(ddof=1) / math.sqrt(nsamples)),
        "stderr": stderr,
        "z": float(z),
        "nsamples": nsamples,
        "functional": F.label,
        "direction": direction.label,
    }


# --- quadratic variation ------------------------------------------------------------


def qv_check(manifold, trajectory, grid_index, axis, eps):
    """Realized vs predicted quadratic variation of a coordinate observable.

    trajectory: SheTrajectory with save_every=1 (every accepted step stored).
    The compensator uses the product-form generator
    L u = (1/(2 eps)) Lap^{(i)} u - <X_simple(s_i), grad u>, closed-form for
    ambient coordinates on constant-curvature embeddings; the predicted rate
    is (1/eps) |grad_i u|^2 integrated along the trajectory.
    """
    pts = trajectory.points  # (k, n+1, m)
    times = trajectory.times
    x = pts[:, grid_index, :]
    u = x[:, axis]
    du = np.diff(u)
    dts = np.diff(times)

    # tangential gradient of the coordinate and the Laplace-Beltrami term
    if manifold.kappa0 > 0:
        R = manifold.radius
        lap = -(manifold.dim / R**2) * u
        grad_sq = 1.0 - (u / R) ** 2
    else:
        lap = np.zeros_like(u)
        grad_sq = np.ones_like(u)

    # simple drift at the observed grid point from neighbouring points
    left = pts[:, grid_index - 1, :]
    log_back = manifold.log(x, left)
    n = pts.shape[1] - 1
    if grid_index < n:
        log_fwd = manifold.log(x, pts[:, grid_index + 1, :])
    else:
        log_fwd = np.zeros_like(x)
    drift_simple = -(log_back + log_fwd) / (2 * eps * eps)  # = X_simple(s_i)
    e = np.zeros(pts.shape[-1])
    e[axis] = 1.0
    grad_u = manifold.tangent_project(x, np.broadcast_to(e, x.shape))
    Lu = lap / (2 * eps) - np.sum(drift_simple * grad_u, axis=-1)

    realized = float(np.sum((du - Lu[:-1] * dts) ** 2))
    predicted = float(np.sum(grad_sq[:-1] / eps * dts))
    return {
        "realized": realized,
        "predicted": predicted,
        "ratio": realized / predicted if predicted > 0 else math.nan,
        "steps": len(du),
    }


# --- built-in library ------------------------------------------------------------------


def _identity_outer():
    return (lambda y: y[..., 0], lambda y: np.ones_like(y))


def _square_outer():
    def f(y):
        return y[..., 0] ** 2

    def df(y):
        out = np.zeros_like(y)
        out[..., 0] = 2 * y[..., 0]
        return out

    return f, df


def coordinate_integrand(axis):
    return Integrand(
        g=lambda s, x: x[..., axis],
        grad=lambda s, x: np.eye(x.shape[-1])[axis] * np.ones_like(x),
        label=f"coord{axis}",
    )


def time_integral(axis):
    f, df = _identity_outer()
    return CylinderFunction(f, df, [coordinate_integrand(axis)],
                            label=f"time_integral({axis})")


def squared_integral(axis):
    f, df = _square_outer()
    return CylinderFunction(f, df, [coordinate_integrand(axis)],
                            label=f"squared_integral({axis})")


def exp_tilt_integral(axis, alpha):
    """exp(alpha I) of the coordinate time integral (Gaussian-computable flat)."""

    def f(y):
        return np.exp(alpha * y[..., 0])

    def df(y):
        return alpha * np.exp(alpha * y[..., 0])[..., None]

    return CylinderFunction(
        f, df, [coordinate_integrand(axis)], label=f"exp_tilt({axis},{alpha})"
    )


@dataclass
class SingleTimeCoordinate:
    """Observable x_axis(gamma(s_j)): addressable single-time statistic."""

    index_fraction: float  # grid time as a fraction of [0, 1]
    axis: int
    label: str = ""

    def __call__(self, manifold, times, pts):
        j = int(round(self.index_fraction * (len(times) - 1)))
        return pts[:, j, self.axis]


def library(name, *args):
    """Config-addressable functionals: name(args...)."""
    table = {
        "ambient_coord": lambda j, axis: SingleTimeCoordinate(
            float(j), int(axis), label=f"ambient_coord({j},{axis})"
        ),
        "time_integral": lambda axis: time_integral(int(axis)),
        "squared_integral": lambda axis: squared_integral(int(axis)),
    }
    if name not in table:
        raise DomainError(f"unknown functional {name!r}")
    return table[name](*args)


def parse_functional(text):
    """'time_integral(0)' -> functional object."""
    text = text.strip()
    if "(" not in text:
        return library(text)
    name, rest = text.split("(", 1)
    args = [a.strip() for a in rest.rstrip(")").split(",") if a.strip()]
    return library(name.strip(), *[float(a) for a in args])
