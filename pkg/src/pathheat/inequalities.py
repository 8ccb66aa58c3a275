"""Functional-inequality constants and their empirical checks.

All constants follow the convention that K is the number with Ric >= -K, so
positively curved spaces carry negative K.  Formulas are evaluated in
cancellation-free algebraic forms, with explicit Taylor branches near K = 0
matching the displayed expressions to 1e-10.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, UnsupportedFeatureError
from .functionals import gradient_norms_sq_batch, inner_integrals
from .geometry import Euclidean, Sphere, Torus
from .quadrature import gauss_legendre, integrate_manifold


# --- log-Sobolev constants -----------------------------------------------------


def lsi_constant(K):
    """C(K) = min{(e^K - 1 - K)/K^2, C0(K)}; limit 1/2 at K = 0.

    The Taylor branch carries terms through K^3 (the two C0 branches share
    the value and slope at 0 but differ at second order), so it matches the
    direct evaluation to ~K^4 well past the switch point.
    """
    if abs(K) < 1e-4:
        first = 0.5 + K / 6.0 + K * K / 24.0 + K**3 / 120.0
        if K >= 0:
            second = 0.5 + K / 4.0 + 7.0 * K * K / 96.0 + K**3 / 64.0
        else:
            second = 0.5 + K / 4.0 + 5.0 * K * K / 48.0 + K**3 / 32.0
        return min(first, second)
    first = (math.expm1(K) - K) / K**2
    return min(first, lsi_constant_c0(K))


def lsi_constant_c0(K):
    """The envelope constant C0(K), stable for small |K|.

    For K < 0 the radicand 2 e^{K/2} - e^K equals 1 - (e^{K/2} - 1)^2, so
    1 - sqrt(...) is computed as x / (1 + sqrt(1 - x)) with x = expm1(K/2)^2.
    """
    if K == 0.0:
        return 0.5
    if K > 0:
        return 2.0 * math.expm1(K / 2.0) ** 2 / K**2
    x = math.expm1(K / 2.0) ** 2
    if x >= 1.0:  # cannot occur for K < 0; asserted
        raise DomainError("radicand 2 e^{K/2} - e^K must stay positive for K < 0")
    return (4.0 / K**2) * x / (1.0 + math.sqrt(1.0 - x))


def reference_lsi_constant(K):
    """Previously published constant for the same inequality (larger).

    Branches on the sign of 2 e^{K/2} - e^K, i.e. on K vs 2 log 2.
    """
    if K == 0.0:
        raise DomainError("reference constant is defined for K != 0")
    radicand = 2.0 * math.exp(K / 2.0) - math.exp(K)
    if radicand > 0.0:
        return (4.0 / K**2) * (1.0 - math.sqrt(radicand))
    return (2.0 / K**2) * (math.exp(K) - 2.0 * math.exp(K / 2.0) + 1.0)


def einstein_lsi_constant(K, d, truncation=10_000):
    """Log-Sobolev constant for Einstein manifolds with Ricci = -K identity.

    Series coefficients A_k = [K/2 + (2 pi^2/K)(k+1/2)^2]^{-1}; the K -> 0
    limit is 4/pi^2.  Returns (value, truncation_error_bound).
    """
    if truncation < 1000:
        raise DomainError("truncation must be at least 1e3")
    if K == 0.0:
        return (2.0 / math.pi) ** 2, 0.0
    k = np.arange(truncation, dtype=float)
    A = K / (K * K / 2.0 + 2.0 * math.pi**2 * (k + 0.5) ** 2)
    S = float(np.abs(A).sum())
    # integral comparison brackets the tail of sum |A_k| between
    # |K|/(2 pi^2 (T+1/2)) and |K|/(2 pi^2 (T-1/2)); using the midpoint and
    # reporting the bracket width keeps the residual ~ 1/T^2.
    tail_lo = abs(K) / (2.0 * math.pi**2 * (truncation + 0.5))
    tail_hi = abs(K) / (2.0 * math.pi**2 * (truncation - 0.5))
    b_term = max(2.0 * math.pi / (K * K + math.pi**2), 1.0 / math.pi)
    growth = math.expm1(K) / K

    def assemble(series_sum):
        c1 = 4.0 * d * series_sum**2 * growth + 2.0 * A[0] ** 2
        return (math.sqrt(c1) + b_term) ** 2

    value = assemble(S + 0.5 * (tail_lo + tail_hi))
    bound = abs(assemble(S + tail_hi) - assemble(S + tail_lo))
    return value, bound


def terminal_window_constants(K, T, n):
    """Constants of the window-weighted form: (C1(K), C2n(K)).

    C1 = [(T K e^{KT} - e^{KT} + 1)/K^2] v T^2/2,
    C2n = ((e^{KT} - 1)/K) (1 v e^{-K/n}); stable Taylor branch near K = 0.
    """
    if T <= 0 or n < 1:
        raise DomainError("need T > 0 and n >= 1")
    if abs(K) * T < 1e-4:
        bracket = T**2 / 2.0 + K * T**3 / 3.0 + K * K * T**4 / 8.0
        ratio = T + K * T**2 / 2.0 + K * K * T**3 / 6.0
    else:
        bracket = (T * K * math.exp(K * T) - math.expm1(K * T)) / K**2
        ratio = math.expm1(K * T) / K
    c1 = max(bracket, T**2 / 2.0)
    c2n = ratio * max(1.0, math.exp(-K / n))
    return c1, c2n


@dataclass
class ConstantReport:
    """All closed-form constants at one parameter point."""

    K: float
    d: int = 1
    T: float = 1.0
    n: int = 1
    truncation: int = 10_000
    values: dict = field(default_factory=dict)

    @classmethod
    def compute(cls, K, d=1, T=1.0, n=1, truncation=10_000):
        rep = cls(K=K, d=d, T=T, n=n, truncation=truncation)
        c_e, c_e_err = einstein_lsi_constant(K, d, truncation)
        c1, c2n = terminal_window_constants(K, T, n)
        rep.values = {
            "C": lsi_constant(K),
            "C0": lsi_constant_c0(K),
            "C_reference": reference_lsi_constant(K) if K != 0 else float("nan"),
            "C_einstein": c_e,
            "C_einstein_truncation_error": c_e_err,
            "C1": c1,
            "C2n": c2n,
        }
        for key, v in rep.values.items():
            if not math.isnan(v) and not (math.isfinite(v)):
                raise DomainError(f"constant {key} not finite at K={K}")
        return rep


# --- curvature flow matrix -------------------------------------------------------


def ricci_flow_matrix(ric_samples, times):
    """Solve dM/dt = -(1/2) M Ric(t), M(0) = I, by classical RK4.

    ric_samples: callable t -> (d, d) or an array (len(times), d, d) sampled
    on the given time grid (linearly interpolated between samples).
    Returns M at every grid time, shape (len(times), d, d).
    """
    times = np.asarray(times, dtype=float)
    if callable(ric_samples):
        ric = ric_samples
    else:
        arr = np.asarray(ric_samples, dtype=float)

        def ric(t):
            idx = np.clip(np.searchsorted(times, t) - 1, 0, len(times) - 2)
            w = (t - times[idx]) / (times[idx + 1] - times[idx])
            return (1 - w) * arr[idx] + w * arr[idx + 1]

    d = ric(times[0]).shape[0]
    out = np.empty((len(times), d, d))
    M = np.eye(d)
    out[0] = M
    for i in range(len(times) - 1):
        t, dt = times[i], times[i + 1] - times[i]

        def f(tt, MM):
            return -0.5 * MM @ ric(tt)

        k1 = f(t, M)
        k2 = f(t + dt / 2, M + dt / 2 * k1)
        k3 = f(t + dt / 2, M + dt / 2 * k2)
        k4 = f(t + dt, M + dt * k3)
        M = M + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        out[i + 1] = M
    return out


def flow_norm_bound_slack(Ms, times, K):
    """min over s < tau of e^{K(tau-s)/2} - |M_s^{-1} M_tau| (>= 0 expected)."""
    worst = math.inf
    for i in range(len(times)):
        Minv = np.linalg.inv(Ms[i])
        for j in range(i + 1, len(times)):
            norm = float(np.linalg.norm(Minv @ Ms[j], ord=2))
            bound = math.exp(K * (times[j] - times[i]) / 2.0)
            worst = min(worst, bound - norm)
    return worst


# --- semigroup gradient inequality --------------------------------------------------


def _semigroup_apply(manifold, t, y, fn, order=48):
    return integrate_manifold(
        manifold, lambda q: manifold.heat_kernel(t, y, q) * fn(q), order=order
    )


def gradient_ineq_check(
    manifold, integrand, T1, T2, y, method="auto", s_order=24, space_order=48,
    fd_step=1e-4,
):
    """Checkable form of the semigroup gradient inequality.

    lhs = | integral_{T2}^{T1} grad p_s f (y) ds |  (gradient by central
    differences in y along geodesic frame directions),
    rhs = integral_{T2}^{T1} e^{Ks/2} p_s |grad f| (y) ds,
    with K the manifold's Ricci lower-bound constant (Ric >= -K).

    Returns {lhs, rhs, margin, quadrature_error}; margin = rhs - lhs.
    """
    if T1 < T2:
        raise DomainError("need T1 >= T2")
    K = manifold.ricci_lower_bound_constant()
    y = np.asarray(y, dtype=float)

    if method == "auto":
        method = "analytic" if isinstance(manifold, Euclidean) else "quadrature"

    if method == "analytic":
        # flat: p_s f = f * (Gaussian convolution); for affine f these are exact
        grad0 = manifold.tangent_project(y, integrand.grad(0.0, y))
        lhs = (T1 - T2) * float(np.linalg.norm(grad0))
        if K == 0.0:
            rhs = lhs
        else:
            rhs = (
                (math.exp(K * T1 / 2) - math.exp(K * T2 / 2))
                * 2.0
                / K
                * float(np.linalg.norm(grad0))
            )
        return {"lhs": lhs, "rhs": rhs, "margin": rhs - lhs, "quadrature_error": 0.0}

    if not isinstance(manifold, (Sphere, Torus)):
        raise UnsupportedFeatureError(
            f"semigroup quadrature not available on {manifold.kind}"
        )

    f = lambda q: integrand.g(0.0, q)

    def grad_norm(q):
        g = manifold.tangent_project(q, integrand.grad(0.0, q))
        return np.linalg.norm(g, axis=-1)

    frame = manifold.canonical_frame(y)
    d = manifold.dim

    def run(s_ord, sp_ord):
        if T1 == T2:
            return 0.0, 0.0
        xs, ws = gauss_legendre(s_ord)
        svals = T2 + (T1 - T2) * xs
        swts = (T1 - T2) * ws
        vec = np.zeros(d)
        rhs = 0.0
        for s, w in zip(svals, swts):
            for b in range(d):
                e = frame[:, b]
                yp = manifold.exp(y, fd_step * e)
                ym = manifold.exp(y, -fd_step * e)
                gp = _semigroup_apply(manifold, s, yp, f, sp_ord)
                gm = _semigroup_apply(manifold, s, ym, f, sp_ord)
                vec[b] += w * (gp - gm) / (2 * fd_step)
            rhs += w * math.exp(K * s / 2.0) * _semigroup_apply(
                manifold, s, y, grad_norm, sp_ord
            )
        return float(np.linalg.norm(vec)), rhs

    lhs, rhs = run(s_order, space_order)
    lhs2, rhs2 = run(s_order // 2 + 2, space_order // 2 + 4)
    qerr = abs(lhs - lhs2) + abs(rhs - rhs2) + 10 * fd_step**2
    return {"lhs": lhs, "rhs": rhs, "margin": rhs - lhs, "quadrature_error": qerr}


# --- empirical log-Sobolev --------------------------------------------------------


def lsi_empirical(manifold, F, nsamples, rng, grid_n=16, substeps=8, constant=None):
    """Monte Carlo log-Sobolev slack for a cylinder functional.

    slack = 2 C(K) * dirichlet_energy - entropy with F rescaled so that the
    sampled mean of F^2 is one; x log x is continued by 0 at x = 0.
    Reports the per-draw combined stderr of the slack.
    """
    from .dynamics import brownian_path_sample
    from .pathgrid import Partition

    part = Partition(grid_n)
    pts, _ = brownian_path_sample(
        manifold, part, rng, substeps=substeps, size=nsamples
    )
    times = part.times
    args = inner_integrals(F, times, pts)
    Fv = np.asarray(F.outer(args))
    c2 = 1.0 / float(np.mean(Fv**2))
    F2 = c2 * Fv**2
    ent_i = np.where(F2 > 0, F2 * np.log(np.maximum(F2, 1e-300)), 0.0)
    w = np.full(len(times), part.eps)
    w[0] *= 0.5
    w[-1] *= 0.5
    norms = gradient_norms_sq_batch(F, manifold, times, pts)
    energy_i = 0.5 * c2 * (norms @ w)
    K = manifold.ricci_lower_bound_constant()
    CK = constant if constant is not None else lsi_constant(K)
    slack_i = 2.0 * CK * energy_i - ent_i
    return {
        "K": K,
        "constant": CK,
        "entropy": float(ent_i.mean()),
        "energy": float(energy_i.mean()),
        "bound": float(2.0 * CK * energy_i.mean()),
        "slack": float(slack_i.mean()),
        "stderr": float(slack_i.std(ddof=1) / math.sqrt(nsamples)),
        "nsamples": nsamples,
    }
