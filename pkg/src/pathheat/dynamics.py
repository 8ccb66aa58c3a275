"""Time integrators and reference samplers.

* the grid SDE with the full integration-by-parts drift (Stratonovich Heun
  with retraction, adaptive step rejection on delta violations);
* the projection-field variant with the simplified drift;
* exactly solvable flat spectral dynamics (path and loop boundary conditions,
  heat-flow and Ornstein-Uhlenbeck forms) sharing one Gaussian invariant law;
* geodesic random walk and frame-coordinate (horizontal) Brownian samplers.

Sphere runs go through the kernel backends; everything else uses the generic
geometry reference path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._kernels import get_backend
from .errors import ConfigError, DeltaViolationError, DomainError, UnsupportedFeatureError
from .geometry import Euclidean, Sphere, Torus
from .jacobi import require_admissible
from .pathgrid import DiscretePath, FramePath, Partition, horizontal_lift
from .drift import drift_field_full, drift_field_simple


# --- grid SDE -----------------------------------------------------------------


@dataclass
class SheState:
    """Mutable integrator state: path, frames, clock."""

    path: DiscretePath
    frames: FramePath
    t: float = 0.0
    variant: str = "full"  # "full" | "sigma"

    def refresh_frames(self):
        self.frames = horizontal_lift(self.path, self.frames[0])


def stability_dt(path, safety=0.1):
    """Default step cap for the stiff drift: safety * eps^2."""
    return safety * path.partition.eps**2


def _drift_vectors(path, frames, variant):
    if variant == "full":
        return drift_field_full(path, frames).vectors
    if variant == "sigma":
        return drift_field_simple(path, frames).vectors
    raise ConfigError(f"unknown variant {variant!r}", key="variant")


def _noise_vectors(path, frames, variant, dt, xi):
    """Stratonovich diffusion increment at each grid point (ambient)."""
    M = path.manifold
    eps = path.partition.eps
    fac = math.sqrt(dt) / math.sqrt(eps)
    if variant == "full":
        return np.stack(
            [
                M.frame_apply(frames[i], xi[i - 1]) * fac
                for i in range(1, path.n + 1)
            ]
        )
    return M.tangent_project(path.points[1:], xi) * fac


def she_step(state: SheState, dt, rng=None, xi=None, max_halvings=8):
    """One Heun predictor-corrector step with retraction.

    Noise may be supplied explicitly (standard normals, shape (n, d) for the
    full variant or (n, ambient_dim) for sigma); a delta violation rejects
    the step and retries with halved dt and fresh noise, up to max_halvings,
    then raises.
    """
    path, frames = state.path, state.frames
    M = path.manifold
    require_admissible(path)
    n = path.n
    k = M.dim if state.variant == "full" else M.ambient_dim
    dt_local = float(dt)
    for attempt in range(max_halvings + 1):
        z = xi if (xi is not None and attempt == 0) else rng.standard_normal((n, k))
        try:
            new_pts = _heun_once(path, frames, state.variant, dt_local, z)
            trial = DiscretePath(M, path.partition, new_pts, path.delta).validate()
            state.path = trial
            state.refresh_frames()
            state.t += dt_local
            return state
        except DeltaViolationError:
            if rng is None:
                raise
            dt_local *= 0.5
    raise DeltaViolationError(-1, math.nan, path.delta)


def _heun_once(path, frames, variant, dt, xi):
    M = path.manifold
    b1 = -_drift_vectors(path, frames, variant)
    v1 = _noise_vectors(path, frames, variant, dt, xi)
    pred_pts = path.points.copy()
    pred_pts[1:] = M.project(path.points[1:] + b1 * dt + v1)
    pred = DiscretePath(M, path.partition, pred_pts, path.delta).validate()
    pred_frames = horizontal_lift(pred, frames[0])
    b2 = -_drift_vectors(pred, pred_frames, variant)
    v2 = _noise_vectors(pred, pred_frames, variant, dt, xi)
    out = path.points.copy()
    out[1:] = M.project(path.points[1:] + 0.5 * ((b1 + b2) * dt + v1 + v2))
    return out


def she_step_sigma(state: SheState, dt, rng=None, xi=None):
    """Projection-field variant of she_step (embedded manifolds)."""
    state.variant = "sigma"
    return she_step(state, dt, rng=rng, xi=xi)


@dataclass
class SheTrajectory:
    times: np.ndarray  # (k,)
    points: np.ndarray  # (k, n+1, m)
    dt: float
    retries: int


def simulate_she(
    path,
    t_end,
    dt,
    rng,
    variant="full",
    save_every=1,
    frames=None,
    use_kernel=True,
    noise_margin=0.02,
):
    """Integrate the grid SDE to t_end; returns saved states.

    Pre-generates the noise so results do not depend on the backend's internal
    loop structure; the noise budget carries a retry margin.
    """
    M = path.manifold
    require_admissible(path)
    if dt > stability_dt(path, 0.1) * (1 + 1e-12):
        raise ConfigError(
            f"dt={dt:g} above stability cap {stability_dt(path):g}", key="dt"
        )
    nsteps = int(round(t_end / dt))
    n = path.n
    k = M.dim if variant == "full" else M.ambient_dim
    if frames is None:
        frames = horizontal_lift(path)
    if use_kernel and isinstance(M, Euclidean):
        return _simulate_flat(path, nsteps, dt, rng, save_every)
    if use_kernel and isinstance(M, Sphere):
        backend = get_backend()
        budget = nsteps + max(64, int(noise_margin * nsteps))
        for _ in range(4):
            xi = rng.standard_normal((budget, n, k))
            saved, times, status, used, retries = backend.she_trajectory(
                path.points.copy(),
                frames[0],
                path.partition.eps,
                float(dt),
                nsteps,
                xi,
                M.kappa,
                M.radius,
                float(path.delta),
                variant == "full",
                int(save_every),
            )
            if status == 0:
                return SheTrajectory(times, saved, dt, retries)
            if status == 2:
                raise DeltaViolationError(-1, math.nan, path.delta)
            budget *= 2  # noise exhausted: enlarge and rerun
        raise ConfigError("noise budget exhausted repeatedly", key="noise_margin")
    # generic reference loop
    state = SheState(path, frames, 0.0, variant)
    saved = [path.points.copy()]
    times = [0.0]
    retries = 0
    for step in range(nsteps):
        t_before = state.t
        she_step(state, dt, rng=rng)
        retries += 0 if state.t - t_before == dt else 1
        if (step + 1) % save_every == 0:
            saved.append(state.path.points.copy())
            times.append(state.t)
    return SheTrajectory(np.array(times), np.stack(saved), dt, retries)


def _simulate_flat(path, nsteps, dt, rng, save_every):
    """Vectorized flat trajectory (full and sigma variants coincide)."""
    n = path.n
    eps = path.partition.eps
    d = path.manifold.dim
    x = path.points.copy()
    saved = [x.copy()]
    times = [0.0]
    fac = math.sqrt(dt / eps)

    def drift(y):
        out = np.zeros_like(y)
        out[1:-1] = (y[2:] + y[:-2] - 2 * y[1:-1]) / (2 * eps**2)
        out[-1] = (y[-2] - y[-1]) / (2 * eps**2)
        return out

    for step in range(nsteps):
        noise = rng.standard_normal((n, d)) * fac
        b1 = drift(x)
        pred = x.copy()
        pred[1:] += b1[1:] * dt + noise
        b2 = drift(pred)
        x[1:] += 0.5 * (b1[1:] + b2[1:]) * dt + noise
        if (step + 1) % save_every == 0:
            saved.append(x.copy())
            times.append((step + 1) * dt)
    return SheTrajectory(np.array(times), np.stack(saved), dt, 0)


def simulate_she_flat_batch(n, d, dt, nsteps, rng, batch, save_every=None):
    """Vectorized flat grid SDE: Heun on the pinned chain with Neumann tail.

    dx_i = (1/sqrt(eps)) dW_i + (1/(2 eps^2)) (x_{i+1} + x_{i-1} - 2 x_i) dt
    with x_0 = 0 pinned and the x_{n+1} term absent at i = n.  Returns the
    final states (batch, n, d) or the saved history when save_every is set.
    """
    eps = 1.0 / n
    lap = np.zeros((n, n))
    for i in range(n):
        lap[i, i] = -2.0 if i < n - 1 else -1.0
        if i > 0:
            lap[i, i - 1] = 1.0
        if i < n - 1:
            lap[i, i + 1] = 1.0
    A = lap / (2.0 * eps**2)
    x = np.zeros((batch, n, d))
    fac = math.sqrt(dt / eps)
    saved = []
    for step in range(nsteps):
        noise = rng.standard_normal((batch, n, d)) * fac
        b1 = np.einsum("ij,bjd->bid", A, x)
        pred = x + b1 * dt + noise
        b2 = np.einsum("ij,bjd->bid", A, pred)
        x = x + 0.5 * (b1 + b2) * dt + noise
        if save_every and (step + 1) % save_every == 0:
            saved.append(x.copy())
    return np.stack(saved) if save_every else x


# --- flat spectral dynamics -------------------------------------------------------


def flat_eigenvalues(basis, K):
    """Dirichlet-Neumann ((k+1/2) pi)^2 or Dirichlet-Dirichlet (k pi)^2, k>=1."""
    if basis == "dn":
        return ((np.arange(K) + 0.5) * math.pi) ** 2
    if basis == "dd":
        return ((np.arange(1, K + 1)) * math.pi) ** 2
    raise ConfigError(f"unknown basis {basis!r}", key="basis")


def flat_eigenfunctions(basis, K, s):
    s = np.atleast_1d(np.asarray(s, dtype=float))
    if basis == "dn":
        return math.sqrt(2.0) * np.sin(np.outer(s, (np.arange(K) + 0.5) * math.pi))
    if basis == "dd":
        return math.sqrt(2.0) * np.sin(np.outer(s, np.arange(1, K + 1) * math.pi))
    raise ConfigError(f"unknown basis {basis!r}", key="basis")


@dataclass
class FlatSpectralState:
    """Mode coefficients of the flat field around a base point."""

    basis: str  # "dn" (path) | "dd" (loop)
    modes: np.ndarray  # (K, d) or (batch, K, d)
    base: np.ndarray  # (d,)
    dynamics: str = "she"  # "she" (heat flow) | "ou" (Ornstein-Uhlenbeck form)
    t: float = 0.0

    @property
    def K(self):
        return self.modes.shape[-2]

    def tail_variance_bound(self):
        """Covariance tail of the truncation: sum_{k >= K} 1/lambda_k <= 1/(pi^2 K)."""
        return 1.0 / (math.pi**2 * self.K)


def flat_spectral_state(basis, K, dim, base=None, dynamics="she", batch=None):
    base = np.zeros(dim) if base is None else np.asarray(base, dtype=float)
    shape = (K, dim) if batch is None else (batch, K, dim)
    return FlatSpectralState(basis, np.zeros(shape), base, dynamics)


def flat_she_exact(state: FlatSpectralState, dt, rng):
    """Advance every mode by its exact transition.

    Heat flow: dX_k = -(lambda_k/2) X_k dt + dW_k, so the mean contracts by
    exp(-lambda_k dt/2) and the variance injected is (1-exp(-lambda_k dt))/lambda_k.
    OU form: dX_k = -(1/2) X_k dt + lambda_k^{-1/2} dW_k.  Both leave
    N(0, 1/lambda_k) invariant per coordinate.
    """
    lam = flat_eigenvalues(state.basis, state.K)
    if state.dynamics == "she":
        decay = np.exp(-lam * dt / 2.0)
        var = (1.0 - np.exp(-lam * dt)) / lam
    elif state.dynamics == "ou":
        decay = np.full(state.K, math.exp(-dt / 2.0))
        var = (1.0 - math.exp(-dt)) / lam
    else:
        raise ConfigError(f"unknown dynamics {state.dynamics!r}", key="dynamics")
    noise = rng.standard_normal(state.modes.shape)
    state.modes = state.modes * decay[..., :, None] + noise * np.sqrt(var)[..., :, None]
    state.t += dt
    return state


def flat_field(state: FlatSpectralState, s):
    """Reconstructed field values at times s; shape (..., len(s), d).

    base may be a single point (d,) or one point per batch member (batch, d),
    the latter for free-case runs with a random initial distribution.
    """
    E = flat_eigenfunctions(state.basis, state.K, s)
    base = np.asarray(state.base, dtype=float)
    if base.ndim == 2:
        base = base[:, None, :]
    return base + np.einsum("sk,...kd->...sd", E, state.modes)


def flat_stationary_covariance(basis, K, s, s2=None):
    """Truncated series sum_k e_k(s) e_k(s') / lambda_k."""
    s2 = s if s2 is None else s2
    lam = flat_eigenvalues(basis, K)
    E1 = flat_eigenfunctions(basis, K, s)
    E2 = flat_eigenfunctions(basis, K, s2)
    return np.einsum("ik,jk,k->ij", E1, E2, 1.0 / lam)


def flat_covariance_reference(basis, s, s2=None):
    """Closed forms: min(s, s') for the path case, s(1-s') for the loop."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    s2 = s if s2 is None else np.atleast_1d(np.asarray(s2, dtype=float))
    A, B = np.meshgrid(s, s2, indexing="ij")
    if basis == "dn":
        return np.minimum(A, B)
    if basis == "dd":
        return np.minimum(A, B) * (1.0 - np.maximum(A, B))
    raise ConfigError(f"unknown basis {basis!r}", key="basis")


# --- Brownian samplers --------------------------------------------------------------


def brownian_path_sample(
    manifold, partition, rng, substeps=16, delta=math.inf, size=1, max_rounds=60
):
    """Geodesic random walk draws of the Wiener grid marginals.

    Each grid increment aggregates `substeps` geodesic steps of size
    sqrt(eps/substeps); with finite delta, violating grid increments are
    resampled and the rejection rate is reported.

    Returns (points (size, n+1, m), rejection_rate).
    """
    n, eps = partition.n, partition.eps
    m = manifold.ambient_dim
    pts = np.empty((size, n + 1, m))
    if isinstance(manifold, Euclidean):
        inc = rng.standard_normal((size, n, m)) * math.sqrt(eps)
        pts[:, 0] = 0.0
        pts[:, 1:] = np.cumsum(inc, axis=1)
        return pts, 0.0
    if isinstance(manifold, Torus):
        inc = rng.standard_normal((size, n, m)) * math.sqrt(eps)
        start = np.zeros(m)
        pts[:, 0] = start
        pts[:, 1:] = manifold.wrap(start + np.cumsum(inc, axis=1))
        return pts, 0.0
    if not isinstance(manifold, Sphere):
        raise UnsupportedFeatureError(
            f"brownian sampler not implemented for {manifold.kind}"
        )
    backend = get_backend()
    R = manifold.radius
    north = np.zeros(m)
    north[-1] = R
    pts[:, 0] = north
    scale = math.sqrt(eps / substeps)
    rejected = 0
    total = 0
    for i in range(n):
        cur = pts[:, i].copy()
        active = np.arange(size)
        out = np.empty((size, m))
        for round_ in range(max_rounds):
            zeta = rng.standard_normal((active.size, substeps, m))
            cand = backend.walk_substeps(cur[active], zeta, scale, R)
            total += active.size
            if math.isfinite(delta):
                dist = manifold.distance(pts[active, i], cand)
                ok = dist < delta
            else:
                ok = np.ones(active.size, dtype=bool)
            out[active[ok]] = cand[ok]
            rejected += int(np.sum(~ok))
            active = active[~ok]
            if active.size == 0:
                break
        else:
            raise ConfigError(
                "persistent delta rejections; eps too large for delta", key="delta"
            )
        pts[:, i + 1] = out
    rate = rejected / max(total, 1)
    if rate > 0.5:
        raise ConfigError(
            f"rejection rate {rate:.2f} > 0.5; eps too large for delta", key="delta"
        )
    return pts, rate


def horizontal_brownian(manifold, dt, steps, rng, frame0=None):
    """Single frame-coordinate Brownian draw with its driving increments.

    dt * steps must equal 1 (paths over [0, 1]).  Returns (DiscretePath,
    FramePath, dB) where dB are the anti-development increments actually used
    to drive the walk.
    """
    if abs(dt * steps - 1.0) > 1e-12:
        raise DomainError("dt * steps must equal 1")
    d = manifold.dim
    m = manifold.ambient_dim
    dB = rng.standard_normal((steps, d)) * math.sqrt(dt)
    if isinstance(manifold, Sphere):
        north = np.zeros(m)
        north[-1] = manifold.radius
        origin = north
    elif isinstance(manifold, (Euclidean, Torus)):
        origin = np.zeros(m)
    else:
        raise UnsupportedFeatureError(
            f"horizontal sampler not implemented for {manifold.kind}"
        )
    if frame0 is None:
        frame0 = manifold.canonical_frame(origin)
    pts = np.empty((steps + 1, m))
    frames = np.empty((steps + 1, m, d))
    pts[0] = origin
    frames[0] = frame0
    for k in range(steps):
        v = manifold.frame_apply(frames[k], dB[k])
        pts[k + 1] = manifold.exp(pts[k], v)
        frames[k + 1] = np.stack(
            [
                manifold.transport(pts[k], pts[k + 1], frames[k][:, b])
                for b in range(d)
            ],
            axis=-1,
        )
    path = DiscretePath(manifold, Partition(steps), pts, math.inf)
    return path, FramePath(frames), dB


def horizontal_brownian_batch(manifold, steps, rng, size, h_values=None):
    """Batched horizontal draws over [0, 1] with optional pushforwards.

    Returns (points (size, steps+1, m), dB (size, steps, d),
    pushed (size, steps+1, m)); pushed[i, k] = u(s_k) h_values[k].
    """
    d = manifold.dim
    m = manifold.ambient_dim
    dt = 1.0 / steps
    dB = rng.standard_normal((size, steps, d)) * math.sqrt(dt)
    hv = (
        np.zeros((0, d))
        if h_values is None
        else np.ascontiguousarray(h_values, dtype=float)
    )
    if isinstance(manifold, Sphere):
        backend = get_backend()
        north = np.zeros(m)
        north[-1] = manifold.radius
        u0 = manifold.canonical_frame(north)
        pts, pushed = backend.horizontal_push(north, u0, dB, hv, manifold.radius)
        return pts, dB, pushed
    if isinstance(manifold, (Euclidean, Torus)):
        origin = np.zeros(m)
        u0 = manifold.canonical_frame(origin)
        inc = np.einsum("md,nkd->nkm", u0, dB)
        pts = np.empty((size, steps + 1, m))
        pts[:, 0] = origin
        pts[:, 1:] = origin + np.cumsum(inc, axis=1)
        if isinstance(manifold, Torus):
            pts = manifold.wrap(pts)
        pushed = np.zeros((size, steps + 1, m))
        if h_values is not None:
            pushed[:] = np.einsum("md,kd->km", u0, hv)
        return pts, dB, pushed
    raise UnsupportedFeatureError(
        f"horizontal sampler not implemented for {manifold.kind}"
    )
