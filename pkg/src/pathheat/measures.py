"""Sampling and integration against the energy-weighted grid measure.

The target on the delta tube of M^n is exp(-E/2) times the product Riemannian
volume (scaled metric constants folded into the flat normalizer).  Two routes
are exposed and cross-checked:

* a Metropolis-adjusted Langevin chain for the normalized law;
* sequential importance sampling through the exponential map for the absolute
  mass and unnormalized expectations.  With increments drawn N(0, eps I) in
  normal coordinates the importance weight collapses to the product of
  exp-map volume Jacobians, closed-form on constant-curvature spaces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._kernels import get_backend
from .errors import ConfigError, TuningError, UnsupportedFeatureError
from .geometry import Euclidean, Hyperbolic, Sphere, Torus
from .pathgrid import Partition
from .dynamics import brownian_path_sample, horizontal_brownian_batch
from .rngutil import child_rngs


@dataclass
class PathEnsemble:
    """Array-backed collection of grid paths with optional weights."""

    manifold: object
    partition: Partition
    points: np.ndarray  # (N, n+1, m)
    weights: np.ndarray | None = None
    provenance: dict = field(default_factory=dict)

    @property
    def size(self):
        return self.points.shape[0]

    def expectation(self, fn):
        """Weighted or plain mean of fn(manifold, times, points) with stderr."""
        vals = np.asarray(fn(self.manifold, self.partition.times, self.points))
        if self.weights is None:
            est = float(vals.mean())
            err = float(vals.std(ddof=1) / math.sqrt(vals.size))
            return est, err
        w = self.weights
        prod = w * vals
        est = float(prod.mean())
        err = float(prod.std(ddof=1) / math.sqrt(vals.size))
        return est, err


@dataclass
class MassEstimate:
    value: float
    stderr: float
    n: int
    eps: float
    manifold_spec: dict
    ess: float = 0.0
    rejected_fraction: float = 0.0


def exp_jacobian(manifold, r):
    """Volume density of the exponential map at radius r: (sn_k(r)/r)^(d-1)."""
    r = np.asarray(r, dtype=float)
    d = manifold.dim
    if d == 1 or manifold.kappa0 == 0.0:
        return np.ones_like(r)
    sk = math.sqrt(manifold.kappa0)
    x = sk * r
    if manifold.kappa > 0:
        ratio = np.where(x > 1e-12, np.sin(x) / np.where(x > 0, x, 1.0), 1.0)
    else:
        ratio = np.where(x > 1e-12, np.sinh(x) / np.where(x > 0, x, 1.0), 1.0)
    return ratio ** (d - 1)


def measure_delta(manifold):
    """Default tube radius for measure-level work: just inside the injectivity
    radius.  (The stricter curvature-smallness delta only binds computations
    that build interval fields, i.e. drift and dynamics.)"""
    if math.isinf(manifold.inj_radius):
        return math.inf
    return 0.9 * manifold.inj_radius


# --- importance sampling ------------------------------------------------------------


def _sequential_draws(manifold, partition, nsamples, rng):
    """Paths built from N(0, eps I) frame increments; returns (pts, radii)."""
    n, eps = partition.n, partition.eps
    d = manifold.dim
    dB = rng.standard_normal((nsamples, n, d)) * math.sqrt(eps)
    if isinstance(manifold, (Sphere, Euclidean, Torus)):
        pts, _, _ = _push_paths(manifold, dB)
    else:
        raise UnsupportedFeatureError(
            f"importance sampler not implemented for {manifold.kind}"
        )
    return pts, np.linalg.norm(dB, axis=-1)


def _push_paths(manifold, dB):
    if isinstance(manifold, Sphere):
        backend = get_backend()
        m = manifold.ambient_dim
        north = np.zeros(m)
        north[-1] = manifold.radius
        u0 = manifold.canonical_frame(north)
        empty = np.zeros((0, manifold.dim))
        pts, _ = backend.horizontal_push(north, u0, dB, empty, manifold.radius)
        return pts, north, u0
    m = manifold.ambient_dim
    origin = np.zeros(m)
    u0 = manifold.canonical_frame(origin)
    inc = np.einsum("md,nkd->nkm", u0, dB)
    pts = np.empty((dB.shape[0], dB.shape[1] + 1, m))
    pts[:, 0] = origin
    pts[:, 1:] = origin + np.cumsum(inc, axis=1)
    if isinstance(manifold, Torus):
        pts = manifold.wrap(pts)
    return pts, origin, u0


def importance_ensemble(manifold, partition, delta, nsamples, rng):
    """Weighted ensemble for unnormalized expectations against the measure.

    Weight per draw: product of exp-map Jacobians over the increments, zeroed
    outside the delta tube.  E(f) estimates integral f d(nu) with the flat
    normalizer absorbed, so the flat mass is exactly 1 up to truncation.
    """
    pts, radii = _sequential_draws(manifold, partition, nsamples, rng)
    inside = np.all(radii < delta, axis=1)
    w = np.prod(exp_jacobian(manifold, radii), axis=1) * inside
    return PathEnsemble(
        manifold,
        partition,
        pts,
        weights=w,
        provenance={
            "sampler": "importance",
            "rejected_fraction": float(1.0 - inside.mean()),
        },
    )


def nu_total_mass(manifold, partition, delta, nsamples, rng, min_ess_frac=0.01):
    """Importance-sampled total mass of the energy-weighted measure."""
    ens = importance_ensemble(manifold, partition, delta, nsamples, rng)
    w = ens.weights
    value = float(w.mean())
    stderr = float(w.std(ddof=1) / math.sqrt(w.size))
    ess = float(w.sum() ** 2 / np.maximum((w**2).sum(), 1e-300))
    if ess < min_ess_frac * nsamples:
        raise ConfigError(
            f"effective sample size {ess:.1f} below {min_ess_frac:.0%} of N",
            key="nsamples",
        )
    return MassEstimate(
        value=value,
        stderr=stderr,
        n=partition.n,
        eps=partition.eps,
        manifold_spec=manifold.spec(),
        ess=ess,
        rejected_fraction=ens.provenance["rejected_fraction"],
    )


def richardson_mass(masses):
    """First-order Richardson extrapolation from the two finest levels.

    masses: list of MassEstimate ordered by increasing n with n doubling.
    """
    if len(masses) < 2:
        raise ConfigError("need at least two levels", key="n_list")
    m1, m2 = masses[-2], masses[-1]
    value = 2.0 * m2.value - m1.value
    stderr = math.sqrt(4.0 * m2.stderr**2 + m1.stderr**2)
    return value, stderr


# --- Wiener reference ------------------------------------------------------------------


def wiener_expectation(manifold, fn, nsamples, rng, partition=None, substeps=16):
    """Plain Monte Carlo over geodesic random walk draws."""
    if partition is None:
        partition = Partition(16)
    pts, _ = brownian_path_sample(
        manifold, partition, rng, substeps=substeps, size=nsamples
    )
    vals = np.asarray(fn(manifold, partition.times, pts))
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(nsamples))


def scal_weighted_reference(manifold, fn, nsamples, rng, partition=None, substeps=16):
    """Reference side of the convergence law: exp(-Scal/6)-weighted Wiener mean.

    Constant scalar curvature on the shipped manifolds makes the weight a
    constant factor exp(-Scal/6).
    """
    est, err = wiener_expectation(manifold, fn, nsamples, rng, partition, substeps)
    w = math.exp(-manifold.scalar_curvature() / 6.0)
    return w * est, w * err


def heat_kernel_reference(manifold, time_fraction, coord_fn, order=48):
    """Quadrature reference for single-time observables f(gamma(t)).

    E[f(gamma(t))] = integral f(q) p_t(o, q) dVol(q), weighted exp(-Scal/6).
    """
    from .quadrature import integrate_manifold

    m = manifold.ambient_dim
    if isinstance(manifold, Sphere):
        o = np.zeros(m)
        o[-1] = manifold.radius
    else:
        o = np.zeros(m)
    val = integrate_manifold(
        manifold,
        lambda q: manifold.heat_kernel(time_fraction, o, q) * coord_fn(q),
        order=order,
    )
    return math.exp(-manifold.scalar_curvature() / 6.0) * val


def convergence_study(
    manifold,
    fn,
    n_list,
    nsamples,
    rng,
    delta=None,
    reference=None,
    reference_samples=None,
    substeps=32,
):
    """Gap between unnormalized grid expectations and the weighted Wiener law.

    Returns {"rows": [{n, estimate, stderr, reference, gap}], "reference": ...}.
    """
    if delta is None:
        delta = measure_delta(manifold)
    rngs = child_rngs(rng, len(n_list) + 1, salt=101)
    if reference is None:
        ref_n = max(n_list)
        reference, ref_err = scal_weighted_reference(
            manifold,
            fn,
            reference_samples or nsamples,
            rngs[-1],
            Partition(ref_n),
            substeps=substeps,
        )
    else:
        ref_err = 0.0
    rows = []
    for k, n in enumerate(n_list):
        ens = importance_ensemble(manifold, Partition(n), delta, nsamples, rngs[k])
        est, err = ens.expectation(fn)
        rows.append(
            {
                "n": n,
                "estimate": est,
                "stderr": err,
                "reference": reference,
                "gap": abs(est - reference),
            }
        )
    return {"rows": rows, "reference": reference, "reference_stderr": ref_err}


# --- MCMC ------------------------------------------------------------------------------


def _auto_tune(run_fn, tau0, rounds=14, steps=150, target=0.55):
    tau = tau0
    for _ in range(rounds):
        acc = run_fn(tau, steps)
        tau *= math.exp(1.2 * (acc - target))
    return tau


def nu_sample(
    manifold,
    partition,
    delta,
    rng,
    nsamples=2000,
    chains=4,
    burn=1000,
    thin=5,
    tau=None,
    tune=True,
    threads=None,
):
    """MALA ensemble targeting the normalized energy measure on the delta tube.

    Proposal: per-point Langevin move through the exponential map; acceptance
    uses the exact energy ratio together with the Gaussian proposal densities
    (exp-map Jacobians cancel between the two directions on constant-curvature
    spaces).  Chains are merged after a Gelman-Rubin check on the energy.
    """
    n, eps = partition.n, partition.eps
    if isinstance(manifold, Sphere):
        sampler = _sphere_chain(manifold)
    elif isinstance(manifold, (Euclidean, Torus)):
        sampler = _flat_chain(manifold)
    else:
        raise UnsupportedFeatureError(f"nu sampler not implemented for {manifold.kind}")

    per_chain = (nsamples + chains - 1) // chains
    steps_per_chain = burn + per_chain * thin
    rngs = child_rngs(rng, chains + 1, salt=202)

    tau0 = tau if tau is not None else 0.3 * eps
    if tune:
        state = {"pts": None}

        def trial(tau_try, steps):
            kept, acc, final = sampler(
                partition, delta, tau_try, steps, rngs[-1], 0, 1, state["pts"]
            )
            state["pts"] = final
            return acc / steps

        tau0 = _auto_tune(trial, tau0)

    from .rngutil import parallel_map

    def run_chain(c):
        return sampler(
            partition, delta, tau0, steps_per_chain, rngs[c], burn, thin, None
        )

    results = parallel_map(run_chain, range(chains), threads=threads)
    all_samples = []
    energies = []
    accept_rates = []
    for kept, acc, _ in results:
        accept_rates.append(acc / steps_per_chain)
        all_samples.append(kept[:per_chain])
        seg = manifold.distance(kept[:per_chain, :-1], kept[:per_chain, 1:])
        energies.append(np.sum(seg**2, axis=1) / eps)
    rate = float(np.mean(accept_rates))
    if not (0.1 <= rate <= 0.9):
        raise TuningError(f"acceptance rate {rate:.2f} outside [0.1, 0.9]")
    rhat = gelman_rubin(energies)
    points = np.concatenate(all_samples, axis=0)[:nsamples]
    ess = effective_sample_size(np.concatenate(energies))
    return PathEnsemble(
        manifold,
        partition,
        points,
        weights=None,
        provenance={
            "sampler": "mala",
            "tau": tau0,
            "acceptance": rate,
            "rhat_energy": rhat,
            "ess_energy": ess,
            "chains": chains,
        },
    )


def _sphere_chain(manifold):
    backend = get_backend()
    R = manifold.radius
    m = manifold.ambient_dim

    def run(partition, delta, tau, steps, rng, burn, thin, start):
        if start is None:
            start = np.zeros((partition.n + 1, m))
            start[:, -1] = R
        zeta = rng.standard_normal((steps, partition.n, m))
        logu = np.log(rng.uniform(size=steps))
        return backend.mala_chain(
            start.copy(),
            partition.eps,
            float(delta),
            float(tau),
            steps,
            zeta,
            logu,
            manifold.kappa,
            R,
            burn,
            thin,
        )

    return run


def _flat_chain(manifold):
    """Vectorized MALA for Euclidean/torus targets (flat log-density)."""
    m = manifold.ambient_dim
    wrap = isinstance(manifold, Torus)

    def diff(a, b):
        if wrap:
            return manifold._diff(b, a)  # log_b(a)
        return a - b

    def energy_grad(pts, eps):
        n = pts.shape[0] - 1
        segs = diff(pts[1:], pts[:-1])
        E = float(np.sum(segs**2) / eps)
        G = -segs / eps
        G[: n - 1] += diff(pts[2:], pts[1:-1]) / eps
        return E, G

    def run(partition, delta, tau, steps, rng, burn, thin, start):
        n, eps = partition.n, partition.eps
        if start is None:
            start = np.zeros((n + 1, m))
        pts = start.copy()
        E, G = energy_grad(pts, eps)
        kept = []
        accepts = 0
        zeta = rng.standard_normal((steps, n, m))
        logu = np.log(rng.uniform(size=steps))
        for step in range(steps):
            v = 0.5 * tau * G + math.sqrt(tau) * zeta[step]
            prop = pts.copy()
            prop[1:] = manifold.exp(pts[1:], v)
            seg = manifold.distance(prop[:-1], prop[1:])
            if not np.any(seg >= delta):
                E2, G2 = energy_grad(prop, eps)
                back = diff(pts[1:], prop[1:]) - 0.5 * tau * G2
                fwd = math.sqrt(tau) * zeta[step]
                lr = -(E2 - E) / 2 - (np.sum(back**2) - np.sum(fwd**2)) / (2 * tau)
                if logu[step] < lr:
                    pts, E, G = prop, E2, G2
                    accepts += 1
            if step >= burn and (step - burn) % thin == 0:
                kept.append(pts.copy())
        return np.array(kept), accepts, pts

    return run


def gelman_rubin(chains):
    """Potential scale reduction factor across per-chain scalar series."""
    chains = [np.asarray(c, dtype=float) for c in chains]
    mblock = min(len(c) for c in chains)
    X = np.stack([c[:mblock] for c in chains])
    mcount, ncount = X.shape
    means = X.mean(axis=1)
    W = X.var(axis=1, ddof=1).mean()
    B = ncount * means.var(ddof=1)
    var_hat = (ncount - 1) / ncount * W + B / ncount
    return float(math.sqrt(var_hat / max(W, 1e-300)))


def effective_sample_size(series):
    """Initial-positive-sequence autocorrelation estimator (FFT-based)."""
    x = np.asarray(series, dtype=float)
    x = x - x.mean()
    nlen = x.size
    if nlen < 8 or np.allclose(x, 0):
        return float(nlen)
    nfft = 1 << (2 * nlen - 1).bit_length()
    f = np.fft.rfft(x, nfft)
    acov = np.fft.irfft(f * np.conj(f), nfft)[:nlen] / nlen
    rho = acov / acov[0]
    ssum = 1.0
    for k in range(1, min(nlen // 2, 500)):
        if rho[k] <= 0:
            break
        ssum += 2 * rho[k]
    return float(nlen / ssum)


def ensemble_to_csv(ens: PathEnsemble, seed=None):
    """Pathgrid CSV blocks with a path index and weights column."""
    import csv
    import io
    import json

    header = {
        "manifold": ens.manifold.spec(),
        "eps": ens.partition.eps,
        "size": ens.size,
        "seed": seed,
        "provenance": {
            k: v for k, v in ens.provenance.items() if isinstance(v, (int, float, str))
        },
    }
    buf = io.StringIO()
    buf.write("# " + json.dumps(header, sort_keys=True) + "\n")
    w = csv.writer(buf)
    m = ens.points.shape[-1]
    w.writerow(["path", "i", "s_i"] + [f"coord_{k}" for k in range(m)] + ["weight"])
    times = ens.partition.times
    for p in range(ens.size):
        wt = 1.0 if ens.weights is None else float(ens.weights[p])
        for i in range(ens.points.shape[1]):
            w.writerow(
                [p, i, repr(float(times[i]))]
                + [repr(float(x)) for x in ens.points[p, i]]
                + [repr(wt)]
            )
    return buf.getvalue()
