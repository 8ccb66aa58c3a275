"""The one-shot acceptance suite behind `pathheat verify`.

Each criterion function returns a dict with at least {id, name, passed,
seconds, details}; `run_all` aggregates them.  Tolerances are pinned here.

Two sub-checks are implemented exactly as stated although the constants they
test cannot meet the stated windows on the shipped manifolds (see the
README's verification notes): the small-increment remainder exponent is 4,
not 3, on constant-curvature spaces (the cubic error term of the general
bound vanishes identically), and the Einstein-manifold constant approaches
its flat limit linearly in K, so the 1e-4 window at K = 1e-3 is out of reach
by about 7e-4.  Both checks run, report, and fail honestly.
"""

from __future__ import annotations

import math
import time

import numpy as np

from .geometry import Euclidean, Sphere
from .jacobi import default_delta, jacobi_basis, structure_matrix, sup_norm_bound
from .pathgrid import Partition, constant_path, horizontal_lift, random_admissible_path
from .smoothpaths import flat_sine, great_circle
from .drift import drift_field_full, drift_limit_study
from .dynamics import (
    flat_covariance_reference,
    flat_she_exact,
    flat_spectral_state,
    flat_field,
    simulate_she,
)
from .functionals import (
    coordinate_integrand,
    exp_tilt_integral,
    ibp_check,
    l2_gradient,
    linear_direction,
    qv_check,
    sine_direction,
    squared_integral,
    time_integral,
)
from .inequalities import (
    einstein_lsi_constant,
    flow_norm_bound_slack,
    gradient_ineq_check,
    lsi_constant,
    reference_lsi_constant,
    ricci_flow_matrix,
)
from .measures import (
    heat_kernel_reference,
    importance_ensemble,
    measure_delta,
    nu_total_mass,
    richardson_mass,
)
from .rngutil import rng_from

PROFILES = {
    "desk": {
        "flat_batch": 40_000,
        "flat_tmax": 12.0,
        "ibp_samples": 100_000,
        "mass_samples": 200_000,
        "conv_samples": 400_000,
        "qv_n": 32,
        "qv_dt": 1e-5,
        "qv_t": 1.0,
        "sup_paths": 1000,
        "flow_paths": 1000,
        "grad_cases": 5,
        "eps_list": (1 / 8, 1 / 16, 1 / 32, 1 / 64, 1 / 128),
    },
    "quick": {
        "flat_batch": 6_000,
        "flat_tmax": 10.0,
        "ibp_samples": 20_000,
        "mass_samples": 40_000,
        "conv_samples": 60_000,
        "qv_n": 8,
        "qv_dt": 2e-4,
        "qv_t": 0.5,
        "sup_paths": 120,
        "flow_paths": 100,
        "grad_cases": 2,
        "eps_list": (1 / 8, 1 / 16, 1 / 32),
    },
}


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        out = fn(*args, **kwargs)
        out["seconds"] = round(time.perf_counter() - t0, 3)
        return out

    return wrapper


def _flat_invariant_law(basis, reference_name, seed, prof):
    """Ensemble of exact spectral trajectories started at zero, long horizon."""
    rng = rng_from(seed)
    K = 256
    batch = prof["flat_batch"]
    st = flat_spectral_state(basis, K, 1, batch=batch)
    t, dt = 0.0, 1.0
    while t < prof["flat_tmax"]:
        flat_she_exact(st, dt, rng)
        t += dt
    s = np.linspace(0.0, 1.0, 17)[1:]
    vals = flat_field(st, s)[..., 0]  # (batch, len(s))
    cov = vals.T @ vals / batch
    ref = flat_covariance_reference(basis, s)
    var = np.diag(cov)
    stderr = np.sqrt((np.outer(var, var) + cov**2) / batch)
    tol = np.maximum(3 * stderr, 0.02)
    gap = np.abs(cov - ref)
    passed = bool(np.all(gap <= tol))
    return {
        "passed": passed,
        "details": {
            "basis": basis,
            "reference": reference_name,
            "modes": K,
            "batch": batch,
            "max_gap": float(gap.max()),
            "max_gap_over_tol": float((gap / tol).max()),
            "tail_bound": st.tail_variance_bound(),
        },
    }


@_timed
def criterion_1_flat_path_law(profile="desk", seed=0):
    """Stationary covariance of the flat path-space flow equals min(s, s')."""
    out = _flat_invariant_law("dn", "min(s,s')", seed + 101, PROFILES[profile])
    out.update(id=1, name="flat path-space invariant law")
    return out


@_timed
def criterion_2_flat_loop_law(profile="desk", seed=0):
    """Loop case: stationary covariance equals s(1-s') (bridge law)."""
    out = _flat_invariant_law("dd", "s(1-s')", seed + 102, PROFILES[profile])
    out.update(id=2, name="flat loop-space invariant law")
    return out


@_timed
def criterion_3_integration_by_parts(profile="desk", seed=0):
    """Three grid IBP pairs on the sphere plus the flat Gaussian closed form."""
    prof = PROFILES[profile]
    N = prof["ibp_samples"]
    S = Sphere(2)
    pairs = [
        (time_integral(0), linear_direction(np.array([1.0, 0.0]), label="s e1")),
        (
            squared_integral(2),
            sine_direction(np.array([0.0, 1.0]), freq=0.5, label="sin e2"),
        ),
        (
            exp_tilt_integral(2, 0.4),
            sine_direction(np.array([0.6, 0.6]), freq=1.0, label="sin2 e12"),
        ),
    ]
    reports = []
    ok = True
    for k, (F, h) in enumerate(pairs):
        rep = ibp_check(S, F, h, N, rng_from(seed, 301 + k), steps=64)
        reports.append(rep)
        ok = ok and abs(rep["z"]) <= 3.0
    # flat sub-case against the Gaussian analytic value
    E = Euclidean(2)
    alpha = 0.5
    rep = ibp_check(
        E, exp_tilt_integral(0, alpha), linear_direction(np.array([1.0, 0.0])),
        N, rng_from(seed, 310), steps=64,
    )
    closed = alpha * math.exp(alpha**2 / 6.0) * 0.5
    flat_ok = (
        abs(rep["lhs"] - closed) <= 3 * rep["lhs_stderr"] + 2e-3
        and abs(rep["rhs"] - closed) <= 3 * rep["rhs_stderr"] + 2e-3
    )
    rep["closed_form"] = closed
    reports.append(rep)
    return {
        "id": 3,
        "name": "integration by parts",
        "passed": bool(ok and flat_ok),
        "details": {"reports": reports},
    }


@_timed
def criterion_4_measure_convergence(profile="desk", seed=0):
    """Mass extrapolates to exp(-1/3); a cylinder functional's gap shrinks."""
    prof = PROFILES[profile]
    S = Sphere(2)
    delta = measure_delta(S)
    target = math.exp(-1.0 / 3.0)
    masses = []
    for k, n in enumerate((4, 8, 16)):
        masses.append(
            nu_total_mass(S, Partition(n), delta, prof["mass_samples"],
                          rng_from(seed, 401 + k))
        )
    rich, rich_err = richardson_mass(masses)
    mass_ok = abs(rich - target) <= 0.02 * target

    # cylinder functional: time integral of the polar coordinate; the
    # weighted Wiener reference has the eigenfunction closed form
    # exp(-1/3) * (1 - e^{-1}), cross-checked by heat-kernel quadrature.
    F = time_integral(2)

    def fn(manifold, times, pts):
        from .functionals import eval_cylinder_batch

        return eval_cylinder_batch(F, manifold, times, pts)

    reference = target * (-math.expm1(-1.0))
    quad = heat_kernel_reference(S, 1.0, lambda q: q[:, 2])
    quad_ok = abs(quad - target * math.exp(-1.0)) < 1e-8
    rows = []
    for k, n in enumerate((4, 8, 16)):
        ens = importance_ensemble(
            S, Partition(n), delta, prof["conv_samples"], rng_from(seed, 411 + k)
        )
        est, err = ens.expectation(fn)
        rows.append(
            {"n": n, "estimate": est, "stderr": err, "gap": abs(est - reference)}
        )
    gaps = [r["gap"] for r in rows]
    mono = all(gaps[i + 1] <= gaps[i] for i in range(len(gaps) - 1))
    final_ok = gaps[-1] <= 0.02 * abs(reference)
    return {
        "id": 4,
        "name": "measure convergence",
        "passed": bool(mass_ok and mono and final_ok and quad_ok),
        "details": {
            "masses": [m.__dict__ for m in masses],
            "richardson": rich,
            "richardson_stderr": rich_err,
            "mass_target": target,
            "functional_rows": rows,
            "functional_reference": reference,
            "heat_kernel_quadrature_ok": quad_ok,
        },
    }


@_timed
def criterion_5_remainder_and_sup_bound(profile="desk", seed=0):
    """Small-increment remainder exponent window plus the uniform field bound.

    The exponent clause asserts the stated window [2.7, 3.3]; on constant
    curvature the measured exponent is 4 (the remainder is quartic), so this
    clause fails by construction and is reported as such.
    """
    from scipy.integrate import solve_ivp

    from .jacobi import small_increment_expansion

    prof = PROFILES[profile]
    S = Sphere(2)
    eps = 0.125
    thetas = np.geomspace(0.02, 0.3, 9)
    rs = np.linspace(0, eps, 21)
    errs = []
    for theta in thetas:
        db = theta * np.array([0.8, 0.6])
        A0 = structure_matrix(S, db / eps)
        bnd = np.array([1.0, 0.0]) / math.sqrt(eps)

        def rhs(r, y):
            return np.concatenate([y[2:], A0 @ y[:2]])

        cols = []
        for j in range(2):
            y0 = np.zeros(4)
            y0[2 + j] = 1.0
            cols.append(
                solve_ivp(rhs, (0, eps), y0, rtol=1e-12, atol=1e-14,
                          dense_output=True)
            )
        Phi = np.stack([c.sol(eps)[:2] for c in cols], axis=1)
        dh0 = np.linalg.solve(Phi, bnd)
        main, scale = small_increment_expansion(S, db, eps, rs, axis=0)
        err = max(
            np.linalg.norm(
                dh0[0] * cols[0].sol(r)[:2] + dh0[1] * cols[1].sol(r)[:2] - main[k]
            )
            for k, r in enumerate(rs)
        )
        errs.append(err)
    slope = float(np.polyfit(np.log(thetas), np.log(errs), 1)[0])
    exponent_ok = 2.7 <= slope <= 3.3

    # uniform bound sweep over random admissible paths
    delta = default_delta(S)
    part = Partition(6)
    bound = sup_norm_bound(S, delta, part.eps)
    rng = rng_from(seed, 501)
    worst = 0.0
    for _ in range(prof["sup_paths"]):
        path, frames = random_admissible_path(S, part, delta, rng)
        i = int(rng.integers(1, part.n + 1))
        a = int(rng.integers(0, 2))
        f = jacobi_basis(path, frames, a, i, check_residual=False)
        vals = np.linalg.norm(f(np.linspace(0, part.eps, 17)), axis=1)
        worst = max(worst, float(vals.max()))
    bound_ok = worst <= bound
    return {
        "id": 5,
        "name": "remainder exponent and uniform field bound",
        "passed": bool(exponent_ok and bound_ok),
        "details": {
            "fitted_exponent": slope,
            "exponent_window": [2.7, 3.3],
            "exponent_ok": exponent_ok,
            "note": "constant curvature makes the remainder quartic; window unmet",
            "cubic_bound_constant": float(
                max(e / (t**3 * eps**-0.5) for e, t in zip(errs, thetas))
            ),
            "sup_bound": bound,
            "worst_field_norm": worst,
            "sup_bound_ok": bound_ok,
            "paths": prof["sup_paths"],
        },
    }


@_timed
def criterion_6_continuum_drift(profile="desk", seed=0):
    """Assembled drift approaches the continuum field at the stated rates."""
    prof = PROFILES[profile]
    S = Sphere(2)
    gc = drift_limit_study(great_circle(S), list(prof["eps_list"]))
    errors = [r["sup_error"] for r in gc["rows"]]
    gc_ok = (
        all(errors[i + 1] < errors[i] for i in range(len(errors) - 1))
        and gc["slope"] >= 0.8
    )
    sine = drift_limit_study(flat_sine(0.5), list(prof["eps_list"]))
    sine_ok = abs(sine["slope"] - 2.0) <= 0.2
    return {
        "id": 6,
        "name": "continuum drift limit",
        "passed": bool(gc_ok and sine_ok),
        "details": {"great_circle": gc, "flat_sine": sine},
    }


@_timed
def criterion_7_constants(profile="desk", seed=0):
    """Closed-form constants: limits, ordering, flow norm bound.

    The Einstein clause asserts |C(1e-3) - 4/pi^2| < 1e-4 at 1e4-term
    truncation as stated; the formula approaches the limit linearly in K
    (gap ~ 7.3e-4 at K = 1e-3), so this clause fails and is reported.
    """
    prof = PROFILES[profile]
    val, trunc_err = einstein_lsi_constant(1e-3, d=1, truncation=10_000)
    einstein_gap = abs(val - 4.0 / math.pi**2)
    einstein_ok = einstein_gap < 1e-4

    limit_ok = (
        abs(lsi_constant(1e-8) - 0.5) < 1e-8
        and abs(lsi_constant(-1e-8) - 0.5) < 1e-8
    )
    order_ok = all(
        lsi_constant(K) <= reference_lsi_constant(K) + 1e-14
        for K in (-2.0, -1.0, -0.5, 0.5, 1.0)
    )

    rng = rng_from(seed, 701)
    times = np.linspace(0, 1, 65)
    worst = math.inf
    from .geometry import Hyperbolic

    for M in (Sphere(2), Hyperbolic(2)):
        K = M.ricci_lower_bound_constant()
        for _ in range(prof["flow_paths"] // 2):
            p = M.random_point(rng)
            f = M.random_frame(p, rng)
            ric = np.stack(
                [M.frame_coords(p, f, M.ricci(p, f[:, b])) for b in range(M.dim)],
                axis=-1,
            )
            Ms = ricci_flow_matrix(lambda t: ric, times)
            worst = min(worst, flow_norm_bound_slack(Ms[::16], times[::16], K))
    flow_ok = worst > -1e-8
    return {
        "id": 7,
        "name": "functional-inequality constants",
        "passed": bool(einstein_ok and limit_ok and order_ok and flow_ok),
        "details": {
            "einstein_value": val,
            "einstein_gap": einstein_gap,
            "einstein_truncation_error": trunc_err,
            "einstein_ok": einstein_ok,
            "note": "gap is first order in K; 1e-4 at K=1e-3 unattainable",
            "limit_half_ok": limit_ok,
            "ordering_ok": order_ok,
            "flow_worst_slack": worst,
            "flow_ok": flow_ok,
        },
    }


@_timed
def criterion_8_quadratic_variation(profile="desk", seed=0):
    """Realized/predicted QV ratio of a coordinate observable in [0.95, 1.05]."""
    prof = PROFILES[profile]
    S = Sphere(2)
    n = prof["qv_n"]
    delta = default_delta(S)
    north = np.array([0.0, 0.0, 1.0])
    path = constant_path(S, north, Partition(n), delta=delta)
    traj = simulate_she(
        path, prof["qv_t"], prof["qv_dt"], rng_from(seed, 801), save_every=1
    )
    rep = qv_check(S, traj, grid_index=n // 2, axis=0, eps=1.0 / n)
    rep["retries"] = traj.retries
    passed = 0.95 <= rep["ratio"] <= 1.05
    return {
        "id": 8,
        "name": "martingale quadratic variation",
        "passed": bool(passed),
        "details": rep,
    }


@_timed
def criterion_9_gradient_inequality(profile="desk", seed=0):
    """Semigroup gradient inequality margins on the sphere; flat equality."""
    prof = PROFILES[profile]
    S = Sphere(2)
    north = np.array([0.0, 0.0, 1.0])
    tilted = np.array([math.sin(0.7), 0.0, math.cos(0.7)])
    cases = [
        (coordinate_integrand(0), 1.0, 0.3, north),
        (coordinate_integrand(2), 0.8, 0.2, north),
        (coordinate_integrand(0), 1.2, 0.5, tilted),
        (coordinate_integrand(1), 0.9, 0.4, tilted),
        (coordinate_integrand(2), 1.5, 0.6, north),
    ][: prof["grad_cases"]]
    rows = []
    ok = True
    for integ, T1, T2, y in cases:
        rep = gradient_ineq_check(S, integ, T1, T2, y, s_order=16, space_order=32)
        rows.append(rep)
        ok = ok and rep["margin"] >= -3 * rep["quadrature_error"]
    E = Euclidean(2)
    flat = gradient_ineq_check(
        E, coordinate_integrand(0), 1.0, 0.2, np.array([0.1, 0.2])
    )
    flat_ok = abs(flat["margin"]) < 1e-8
    return {
        "id": 9,
        "name": "semigroup gradient inequality",
        "passed": bool(ok and flat_ok),
        "details": {"sphere_cases": rows, "flat": flat},
    }


@_timed
def criterion_10_gauge_invariance(profile="desk", seed=0):
    """Frame-choice independence of |DF|^2, energy summands, and the drift."""
    S = Sphere(2)
    delta = default_delta(S)
    rng = rng_from(seed, 1001)
    F = exp_tilt_integral(2, 0.3)
    worst_df = worst_drift = 0.0
    for _ in range(10):
        path, frames1 = random_admissible_path(S, Partition(5), delta, rng)
        f0 = S.random_frame(path.origin, rng)
        frames2 = horizontal_lift(path, f0)
        DF1 = l2_gradient(F, path, frames1)
        DF2 = l2_gradient(F, path, frames2)
        worst_df = max(
            worst_df,
            float(np.abs(np.sum(DF1 * DF1, axis=1) - np.sum(DF2 * DF2, axis=1)).max()),
        )
        v1 = drift_field_full(path, frames1).vectors
        v2 = drift_field_full(path, frames2).vectors
        worst_drift = max(worst_drift, float(np.abs(v1 - v2).max()))
    passed = worst_df < 1e-10 and worst_drift < 1e-10
    return {
        "id": 10,
        "name": "frame gauge invariance",
        "passed": bool(passed),
        "details": {
            "worst_gradient_norm_gap": worst_df,
            "worst_drift_gap": worst_drift,
            "tolerance": 1e-10,
        },
    }


@_timed
def criterion_11_determinism(profile="desk", seed=0):
    """Identical payloads for repeated runs with different worker counts."""
    import json

    from .measures import nu_sample

    S = Sphere(2)
    delta = measure_delta(S)

    def payload(threads):
        ens = nu_sample(
            S, Partition(2), delta, rng_from(seed, 1101), nsamples=2000,
            chains=4, burn=400, thin=2, threads=threads,
        )
        mass = nu_total_mass(S, Partition(4), delta, 20_000, rng_from(seed, 1102))
        return json.dumps(
            {
                "points_digest": repr(float(ens.points.sum())),
                "first_path": [repr(float(x)) for x in ens.points[0].ravel()],
                "acceptance": repr(ens.provenance["acceptance"]),
                "mass": repr(mass.value),
                "stderr": repr(mass.stderr),
            },
            sort_keys=True,
        )

    p1 = payload(threads=1)
    p2 = payload(threads=4)
    return {
        "id": 11,
        "name": "determinism across worker counts",
        "passed": bool(p1 == p2),
        "details": {"payload_bytes": len(p1), "identical": p1 == p2},
    }


CRITERIA = [
    criterion_1_flat_path_law,
    criterion_2_flat_loop_law,
    criterion_3_integration_by_parts,
    criterion_4_measure_convergence,
    criterion_5_remainder_and_sup_bound,
    criterion_6_continuum_drift,
    criterion_7_constants,
    criterion_8_quadratic_variation,
    criterion_9_gradient_inequality,
    criterion_10_gauge_invariance,
    criterion_11_determinism,
]

# sub-clauses that assert stated windows unattainable on the shipped
# constant-curvature manifolds (see module docstring); their failure is
# expected and does not indicate an implementation defect.
EXPECTED_RED = {5: "exponent_ok", 7: "einstein_ok"}


def run_all(profile="desk", seed=0, only=None):
    results = []
    for k, fn in enumerate(CRITERIA, start=1):
        if only and k not in only:
            continue
        results.append(fn(profile=profile, seed=seed))
    return results
