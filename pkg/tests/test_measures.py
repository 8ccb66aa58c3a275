import math

import numpy as np
import pytest
from numpy.polynomial.legendre import leggauss
from scipy import stats

from pathheat.errors import ConfigError, TuningError, UnsupportedFeatureError
from pathheat.geometry import Euclidean, Hyperbolic, Sphere, Torus
from pathheat.pathgrid import Partition
from pathheat.measures import (
    MassEstimate,
    convergence_study,
    effective_sample_size,
    ensemble_to_csv,
    exp_jacobian,
    gelman_rubin,
    heat_kernel_reference,
    importance_ensemble,
    measure_delta,
    nu_sample,
    nu_total_mass,
    richardson_mass,
    scal_weighted_reference,
    wiener_expectation,
)
from pathheat.rngutil import rng_from


def coord_at_end(axis):
    def fn(manifold, times, pts):
        return pts[:, -1, axis]

    return fn


# --- importance sampling ------------------------------------------------------


def test_flat_mass_exactly_one():
    E = Euclidean(2)
    for n in (1, 4, 9):
        m = nu_total_mass(E, Partition(n), math.inf, 5000, rng_from(0, n))
        assert m.value == pytest.approx(1.0, abs=1e-15)
        assert m.stderr == pytest.approx(0.0, abs=1e-15)


def test_flat_mass_delta_truncation_negligible():
    # delta >= 6 sqrt(eps): truncation below 1e-10
    E = Euclidean(2)
    n = 4
    delta = 6.0 * math.sqrt(1 / n)
    m = nu_total_mass(E, Partition(n), delta, 40_000, rng_from(0, 7))
    assert abs(m.value - 1.0) < 1e-4  # MC sees the (tiny) truncated set rarely
    assert m.rejected_fraction < 1e-4


def test_sphere_mass_approaches_scal_weight():
    # unit sphere: mass -> exp(-Scal/6) = exp(-1/3)
    S = Sphere(2)
    delta = measure_delta(S)
    masses = []
    for n in (4, 8, 16):
        m = nu_total_mass(S, Partition(n), delta, 200_000, rng_from(0, 100 + n))
        masses.append(m)
    vals = [m.value for m in masses]
    target = math.exp(-1.0 / 3.0)
    assert abs(vals[-1] - target) / target < 0.01
    rich, err = richardson_mass(masses)
    assert abs(rich - target) < max(3 * err, 0.02 * target)


def test_mass_ess_error():
    S = Sphere(2)
    with pytest.raises(ConfigError):
        # absurd min_ess_frac forces the error branch
        nu_total_mass(S, Partition(4), 2.8, 1000, rng_from(0, 1), min_ess_frac=1.1)


def test_exp_jacobian_closed_forms():
    S = Sphere(2)
    r = np.array([0.0, 0.5, 1.5])
    assert np.allclose(exp_jacobian(S, r), np.where(r > 0, np.sin(r) / np.maximum(r, 1e-30), 1.0))
    H = Hyperbolic(2)
    assert np.allclose(exp_jacobian(H, r), np.where(r > 0, np.sinh(r) / np.maximum(r, 1e-30), 1.0))
    E = Euclidean(3)
    assert np.allclose(exp_jacobian(E, r), 1.0)


def test_richardson_needs_two():
    with pytest.raises(ConfigError):
        richardson_mass([MassEstimate(1.0, 0.0, 4, 0.25, {})])


# --- Wiener side ---------------------------------------------------------------


def test_wiener_constant_functional():
    E = Euclidean(2)

    def const(manifold, times, pts):
        return np.full(pts.shape[0], 3.25)

    est, err = wiener_expectation(E, const, 500, rng_from(0, 2))
    assert est == pytest.approx(3.25)
    assert err == pytest.approx(0.0, abs=1e-14)


def test_wiener_flat_terminal_variance():
    E = Euclidean(1)

    def sq(manifold, times, pts):
        return pts[:, -1, 0] ** 2

    est, err = wiener_expectation(E, sq, 40_000, rng_from(0, 3))
    assert abs(est - 1.0) < 3 * err


def test_wiener_circle_matches_theta_series():
    C = Torus(1, periods=(2 * math.pi,))

    def cos_end(manifold, times, pts):
        return np.cos(pts[:, -1, 0])

    est, err = wiener_expectation(C, cos_end, 60_000, rng_from(0, 4))
    from pathheat.quadrature import integrate_manifold

    ref = integrate_manifold(
        C, lambda q: C.heat_kernel(1.0, np.zeros(1), q) * np.cos(q[:, 0]), order=64
    )
    assert abs(est - ref) < 3 * err
    assert ref == pytest.approx(math.exp(-0.5), abs=1e-10)  # eigenfunction value


def test_convergence_study_constant_is_mass():
    S = Sphere(2)

    def one(manifold, times, pts):
        return np.ones(pts.shape[0])

    out = convergence_study(
        S, one, [4, 8], 50_000, rng_from(0, 5), reference=math.exp(-1 / 3)
    )
    m = nu_total_mass(S, Partition(4), measure_delta(S), 50_000, rng_from(0, 5, 101, 0))
    assert out["rows"][0]["estimate"] == pytest.approx(m.value, rel=2e-2)


def test_convergence_study_flat_symmetry():
    E = Euclidean(2)

    def time_integral(manifold, times, pts):
        return np.trapezoid(pts[..., 0], times, axis=1)

    out = convergence_study(E, time_integral, [4, 8], 30_000, rng_from(0, 6))
    for row in out["rows"]:
        assert abs(row["estimate"]) < 4 * row["stderr"]
    assert abs(out["reference"]) < 0.02


def test_convergence_study_sphere_gap_shrinks():
    S = Sphere(2)
    fn = coord_at_end(2)
    ref = heat_kernel_reference(S, 1.0, lambda q: q[:, 2])
    assert ref == pytest.approx(math.exp(-1 / 3) * math.exp(-1.0), rel=1e-9)
    out = convergence_study(
        S, fn, [4, 8, 16], 150_000, rng_from(0, 7), reference=ref
    )
    gaps = [r["gap"] for r in out["rows"]]
    assert gaps[-1] < 0.02 * abs(ref) + 3 * out["rows"][-1]["stderr"]
    assert gaps[0] > gaps[-1]


# --- MCMC ------------------------------------------------------------------------


def test_nu_sample_flat_gaussian_increments():
    E = Euclidean(2)
    n = 4
    ens = nu_sample(
        E,
        Partition(n),
        math.inf,
        rng_from(0, 8),
        nsamples=30_000,
        chains=4,
        burn=3000,
        thin=16,
    )
    inc = np.diff(ens.points, axis=1).reshape(-1)
    sigma = math.sqrt(1.0 / n)
    _, p = stats.kstest(inc / sigma, "norm")
    assert p > 0.01
    chi = np.sum((inc / sigma) ** 2)
    dof = inc.size
    assert abs(chi - dof) < 5 * math.sqrt(2 * dof)


def test_nu_sample_matches_quadrature_histogram_n2():
    """Two-point marginal vs direct quadrature of the target on (S^2)^2.

    The (z1, z2) histogram has an analytic phi2-reduction: the density is
    uniform in phi2 and z2 = cos r1 cos r2 + sin r1 sin r2 cos(phi2 - c), so
    each bin weight is an arccos arc length; r1 integrates exactly per z1-bin.
    """
    S = Sphere(2)
    eps = 0.5
    delta = measure_delta(S)
    nbins = 20
    edges = np.linspace(-1, 1, nbins + 1)
    rmax = min(delta, math.pi)

    def below(A, B, e):
        safe = np.where(B > 1e-15, B, 1.0)
        c = np.clip((e - A) / safe, -1.0, 1.0)
        out = 2 * math.pi - 2 * np.arccos(c)
        out = np.where(e - A >= B, 2 * math.pi, out)
        out = np.where(e - A <= -B, 0.0, out)
        return np.where(B <= 1e-15, np.where(A <= e, 2 * math.pi, 0.0), out)

    def quad_hist(n_r1=28, n_r2=480):
        x2n, w2n = leggauss(n_r2)
        r2 = (x2n + 1) / 2 * rmax
        wr2 = w2n / 2 * rmax
        H = np.zeros((nbins, nbins))
        x1n, w1n = leggauss(n_r1)
        for j1 in range(nbins):
            rlo = math.acos(min(edges[j1 + 1], 1.0))
            rhi = min(math.acos(max(edges[j1], -1.0)), rmax)
            if rhi <= rlo:
                continue
            r1 = rlo + (x1n + 1) / 2 * (rhi - rlo)
            wr1 = w1n / 2 * (rhi - rlo)
            for k1 in range(n_r1):
                A = math.cos(r1[k1]) * np.cos(r2)
                B = np.abs(math.sin(r1[k1]) * np.sin(r2))
                base = (
                    wr1[k1]
                    * 2
                    * math.pi
                    * math.sin(r1[k1])
                    * np.sin(r2)
                    * np.exp(-(r1[k1] ** 2 + r2**2) / (2 * eps))
                    * wr2
                )
                prev = below(A, B, edges[0])
                for j2 in range(nbins):
                    cur = below(A, B, edges[j2 + 1])
                    H[j1, j2] += np.sum(base * np.clip(cur - prev, 0, None))
                    prev = cur
        return H / H.sum()

    Hq = quad_hist()
    ens = nu_sample(
        S,
        Partition(2),
        delta,
        rng_from(3),
        nsamples=600_000,
        chains=4,
        burn=2000,
        thin=6,
    )
    z1 = ens.points[:, 1, 2]
    z2 = ens.points[:, 2, 2]
    Hm, _, _ = np.histogram2d(z1, z2, bins=[edges, edges])
    Hm /= Hm.sum()
    tv = 0.5 * np.abs(Hm - Hq).sum()
    assert tv < 1e-2
    assert 0.1 <= ens.provenance["acceptance"] <= 0.9
    assert ens.provenance["rhat_energy"] < 1.05


def test_nu_sample_self_consistency_doubling():
    # doubling the chain length moves tested expectations by < 2 joint stderr
    S = Sphere(2)
    delta = measure_delta(S)

    def run(nsamp, salt):
        ens = nu_sample(
            S, Partition(2), delta, rng_from(0, salt), nsamples=nsamp, chains=4,
            burn=1500, thin=4,
        )
        z = ens.points[:, 1, 2]
        ess = ens.provenance["ess_energy"]
        return z.mean(), z.std(ddof=1) / math.sqrt(max(ess, 1.0))

    m1, e1 = run(30_000, 11)
    m2, e2 = run(60_000, 12)
    assert abs(m1 - m2) < 2 * math.hypot(e1, e2) + 0.01


def test_nu_sample_weighted_unweighted_consistency():
    # normalized importance estimate vs MCMC estimate within 3 combined stderr
    S = Sphere(2)
    delta = measure_delta(S)
    part = Partition(4)
    fn = coord_at_end(2)
    ens_w = importance_ensemble(S, part, delta, 200_000, rng_from(0, 13))
    num, num_err = ens_w.expectation(fn)
    den, den_err = ens_w.expectation(
        lambda m, t, p: np.ones(p.shape[0])
    )
    ratio = num / den
    ratio_err = abs(ratio) * math.hypot(num_err / num, den_err / den)
    ens_m = nu_sample(
        S, part, delta, rng_from(0, 14), nsamples=60_000, chains=4, burn=2000, thin=4
    )
    est, _ = ens_m.expectation(fn)
    ess = ens_m.provenance["ess_energy"]
    mc_err = ens_m.points[:, -1, 2].std(ddof=1) / math.sqrt(max(ess, 1.0))
    assert abs(ratio - est) < 3 * math.hypot(ratio_err, mc_err)


def test_nu_sample_flat_vs_brownian_kolmogorov():
    # in the flat case the energy measure and the Wiener law coincide
    from pathheat.dynamics import brownian_path_sample

    E = Euclidean(1)
    n = 4
    # heavy thinning: the two-sample KS test assumes independent draws
    ens = nu_sample(
        E, Partition(n), math.inf, rng_from(0, 15), nsamples=20_000, chains=4,
        burn=4000, thin=20,
    )
    bm, _ = brownian_path_sample(E, Partition(n), rng_from(0, 16), size=20_000)
    a = np.diff(ens.points[..., 0], axis=1).reshape(-1)
    b = np.diff(bm[..., 0], axis=1).reshape(-1)
    _, p = stats.ks_2samp(a, b)
    assert p > 0.01


def test_nu_sample_unsupported():
    H = Hyperbolic(2)
    with pytest.raises(UnsupportedFeatureError):
        nu_sample(H, Partition(2), 0.5, rng_from(0, 17), nsamples=100)


def test_gelman_rubin_and_ess():
    rng = np.random.default_rng(0)
    chains = [rng.standard_normal(4000) for _ in range(4)]
    assert gelman_rubin(chains) < 1.01
    assert effective_sample_size(chains[0]) > 2500
    # strongly autocorrelated series
    x = np.cumsum(rng.standard_normal(4000)) * 0.05
    assert effective_sample_size(x) < 500


def test_ensemble_csv():
    E = Euclidean(2)
    ens = importance_ensemble(E, Partition(2), math.inf, 3, rng_from(0, 18))
    text = ensemble_to_csv(ens, seed=5)
    lines = text.strip().splitlines()
    assert lines[0].startswith("# {")
    assert lines[1].split(",")[0] == "path"
    assert len(lines) == 2 + 3 * 3
