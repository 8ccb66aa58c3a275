"""Pure-numpy fallback kernels: vectorized over ensemble members.

Same math as the numba backend; agreement is asserted in tests.
"""

from __future__ import annotations

import math

import numpy as np


# --- batched sphere primitives (radius R, points (..., m)) ---------------------


def _project(x, R):
    return x * (R / np.linalg.norm(x, axis=-1, keepdims=True))


def _tangent(x, v, R):
    return v - x * (np.sum(x * v, axis=-1, keepdims=True) / R**2)


def _exp(p, v, R):
    nv = np.linalg.norm(v, axis=-1)
    theta = nv / R
    sinc = np.where(theta > 1e-14, np.sin(theta) / np.where(theta > 0, theta, 1.0), 1.0)
    return _project(np.cos(theta)[..., None] * p + sinc[..., None] * v, R)


def _log(p, q, R):
    c = np.clip(np.sum(p * q, axis=-1) / R**2, -1.0, 1.0)
    w = q - c[..., None] * p
    s = np.linalg.norm(w, axis=-1) / R
    theta = np.arctan2(s, c)
    fac = np.where(s > 1e-14, theta / np.where(s > 0, s, 1.0), 1.0)
    return fac[..., None] * w


def _transport(p, q, v, R):
    y = _log(p, q, R)
    ny = np.linalg.norm(y, axis=-1)
    small = ny < 1e-14
    t_p = y / np.where(small, 1.0, ny)[..., None]
    theta = ny / R
    t_q = -np.sin(theta)[..., None] * p / R + np.cos(theta)[..., None] * t_p
    a = np.sum(v * t_p, axis=-1)
    out = v - a[..., None] * t_p + a[..., None] * t_q
    return np.where(small[..., None], v, out)


def _transport_frame(p, q, frames, R):
    """frames (..., m, d) moved from p to q along the geodesic."""
    d = frames.shape[-1]
    cols = [_transport(p, q, frames[..., b], R) for b in range(d)]
    return np.stack(cols, axis=-1)


# --- samplers -------------------------------------------------------------------


def walk_substeps(x, zeta, scale, R):
    """K geodesic substeps; zeta (N, K, m) ambient normals."""
    x = np.array(x, dtype=float)
    for k in range(zeta.shape[1]):
        v = _tangent(x, zeta[:, k], R) * scale
        x = _exp(x, v, R)
    return x


def horizontal_push(x0, u0, dB, h_values, R):
    """Frame-coordinate horizontal walk with pushforward contraction.

    x0 (m,), u0 (m, d), dB (N, K, d), h_values (K+1, d) or an empty (0, d)
    array to skip the contraction.  Returns points (N, K+1, m) and pushed
    (N, K+1, m) with pushed[:, i] = u(s_i) h_values[i].
    """
    N, K, d = dB.shape
    m = x0.shape[0]
    pts = np.empty((N, K + 1, m))
    pushed = np.zeros((N, K + 1, m))
    pts[:, 0] = x0
    frames = np.broadcast_to(u0, (N, m, d)).copy()
    use_h = h_values.shape[0] == K + 1
    if use_h:
        pushed[:, 0] = frames @ h_values[0]
    for k in range(K):
        v = np.einsum("nmd,nd->nm", frames, dB[:, k])
        nxt = _exp(pts[:, k], v, R)
        frames = _transport_frame(pts[:, k], nxt, frames, R)
        pts[:, k + 1] = nxt
        if use_h:
            pushed[:, k + 1] = frames @ h_values[k + 1]
    return pts, pushed


# --- drift ------------------------------------------------------------------------


def _series_pair(A0, eps, tol=1e-15, max_terms=60):
    """D0 = sum A0^k eps^(2k+1)/(2k+1)!, Bint = sum A0^k eps^(2k+2)/(2k+2)!."""
    d = A0.shape[0]
    t_d = eps * np.eye(d)
    t_b = eps * eps / 2.0 * np.eye(d)
    D0 = t_d.copy()
    Bint = t_b.copy()
    k = 0
    e2 = eps * eps
    while k < max_terms:
        k += 1
        t_d = (t_d @ A0) * (e2 / ((2 * k) * (2 * k + 1)))
        t_b = (t_b @ A0) * (e2 / ((2 * k + 1) * (2 * k + 2)))
        D0 += t_d
        Bint += t_b
        if np.linalg.norm(t_d) < tol and np.linalg.norm(t_b) < tol:
            break
    return D0, Bint


def frames_and_increments(pts, u0, R):
    """Chained transport frames plus anti-development increments.

    pts (n+1, m) -> frames (n+1, m, d), inc (n, d).
    """
    n = pts.shape[0] - 1
    m, d = u0.shape
    frames = np.empty((n + 1, m, d))
    frames[0] = u0
    inc = np.empty((n, d))
    for i in range(n):
        v = _log(pts[i], pts[i + 1], R)
        inc[i] = frames[i].T @ v
        frames[i + 1] = _transport_frame(pts[i], pts[i + 1], frames[i], R)
    return frames, inc


def drift_block(pts, u0, eps, kappa, R):
    """Integration-by-parts coefficients and assembled drift vectors.

    The curvature integral uses the exact antiderivative of the interval
    series: corr = kappa * (tr(V) b' - V b') with V = Bint D0^{-1} / sqrt(eps).
    """
    frames, inc = frames_and_increments(pts, u0, R)
    n, d = inc.shape
    sq = math.sqrt(eps)
    beta = np.empty((n, d))
    for j in range(n):
        nxt = inc[j + 1] if j + 1 < n else np.zeros(d)
        beta[j] = (inc[j] - nxt) / (eps * sq)
        if kappa != 0.0:
            b = inc[j] / eps
            A0 = kappa * (np.outer(b, b) - float(b @ b) * np.eye(d))
            D0, Bint = _series_pair(A0, eps)
            V = np.linalg.solve(D0.T, Bint.T).T / sq
            beta[j] += kappa * (np.trace(V) * b - V @ b)
    drift = np.einsum("nmd,nd->nm", frames[1:], beta) / (2.0 * sq)
    return beta, drift, frames


# --- time loops ---------------------------------------------------------------------


def she_trajectory(
    pts0,
    u0,
    eps,
    dt,
    nsteps,
    xi,
    kappa,
    R,
    delta,
    full_variant,
    save_every,
    max_halvings=8,
):
    """Heun (Stratonovich) trajectory of the grid SDE on the sphere.

    xi: pre-generated standard normals, (rows, n, k) with k = d for the
    full variant (frame noise) and k = m for the sigma variant (ambient
    projections).  Row consumption advances on every attempt, so retries
    after a delta violation use fresh noise deterministically.

    Returns (saved, times, status, used_rows, n_retries); status 0 = ok,
    1 = noise exhausted, 2 = persistent delta violation.
    """
    n = pts0.shape[0] - 1
    m = pts0.shape[1]
    sqeps = math.sqrt(eps)
    nsaved = nsteps // save_every + 1
    saved = np.empty((nsaved, n + 1, m))
    times = np.empty(nsaved)
    saved[0] = pts0
    times[0] = 0.0
    pts = np.array(pts0, dtype=float)
    row = 0
    retries = 0
    t = 0.0
    isave = 1
    for step in range(nsteps):
        dt_local = dt
        for attempt in range(max_halvings + 1):
            if row >= xi.shape[0]:
                return saved[:isave], times[:isave], 1, row, retries
            noise = xi[row]
            row += 1
            ok, new_pts = _heun_step(
                pts, u0, eps, dt_local, noise, kappa, R, delta, full_variant, sqeps
            )
            if ok:
                break
            retries += 1
            dt_local *= 0.5
        else:
            return saved[:isave], times[:isave], 2, row, retries
        pts = new_pts
        t += dt_local
        if (step + 1) % save_every == 0:
            saved[isave] = pts
            times[isave] = t
            isave += 1
    return saved[:isave], times[:isave], 0, row, retries


def _heun_step(pts, u0, eps, dt, noise, kappa, R, delta, full_variant, sqeps):
    n = pts.shape[0] - 1

    def drift_and_noise(p):
        if full_variant:
            _, dr, frames = drift_block(p, u0, eps, kappa, R)
            nv = np.einsum("nmd,nd->nm", frames[1:], noise) * (
                math.sqrt(dt) / sqeps
            )
        else:
            frames, inc = frames_and_increments(p, u0, R)
            d = inc.shape[1]
            ext = np.zeros((n + 1, d))
            ext[:-1] = inc
            beta0 = (ext[:-1] - ext[1:]) / (2 * eps * eps)
            dr = np.einsum("nmd,nd->nm", frames[1:], beta0)
            nv = _tangent(p[1:], noise, R) * (math.sqrt(dt) / sqeps)
        return -dr, nv

    b1, v1 = drift_and_noise(pts)
    pred = pts.copy()
    pred[1:] = _project(pts[1:] + b1 * dt + v1, R)
    if _violates(pred, R, delta):
        return False, pts
    b2, v2 = drift_and_noise(pred)
    out = pts.copy()
    out[1:] = _project(pts[1:] + 0.5 * ((b1 + b2) * dt + v1 + v2), R)
    if _violates(out, R, delta):
        return False, pts
    return True, out


def _violates(pts, R, delta):
    if not math.isfinite(delta):
        return False
    c = np.clip(np.sum(pts[:-1] * pts[1:], axis=-1) / R**2, -1.0, 1.0)
    seg = R * np.arccos(c)
    return bool(np.any(seg >= delta))


def mala_chain(pts0, eps, delta, tau, nsteps, zeta, logu, kappa, R, burn, thin):
    """Metropolis-adjusted Langevin chain targeting exp(-E/2) on the delta tube.

    zeta (nsteps, n, m) ambient normals, logu (nsteps,) log-uniforms.
    Proposal: x' = exp_x((tau/2) G + sqrt(tau) P_x zeta) with G the gradient
    of log-density; accepted with the exact MH ratio (volume Jacobians of the
    exponential cancel by symmetry on constant-curvature spaces).
    Returns (samples, accepts, final).
    """
    n = pts0.shape[0] - 1
    kept = []
    pts = np.array(pts0, dtype=float)
    E, G = _energy_grad(pts, eps, R)
    accepts = 0
    for step in range(nsteps):
        drift = 0.5 * tau * G
        noise = math.sqrt(tau) * _tangent(pts[1:], zeta[step], R)
        v = drift + noise
        prop = pts.copy()
        prop[1:] = _exp(pts[1:], v, R)
        if _violates(prop, R, delta):
            pass
        else:
            E2, G2 = _energy_grad(prop, eps, R)
            fwd = v - drift  # = noise
            back = _log(prop[1:], pts[1:], R) - 0.5 * tau * G2
            lr = (
                -(E2 - E) / 2.0
                - (np.sum(back * back) - np.sum(fwd * fwd)) / (2.0 * tau)
            )
            if logu[step] < lr:
                pts, E, G = prop, E2, G2
                accepts += 1
        if step >= burn and (step - burn) % thin == 0:
            kept.append(pts.copy())
    return np.array(kept), accepts, pts


def _energy_grad(pts, eps, R):
    """E = sum rho^2/eps and the ambient gradient of log-density at x_1..x_n."""
    logs_back = _log(pts[1:], pts[:-1], R)  # log_{x_i}(x_{i-1})
    seg = np.linalg.norm(_log(pts[:-1], pts[1:], R), axis=-1)
    E = float(np.sum(seg**2) / eps)
    n = pts.shape[0] - 1
    G = logs_back / eps
    G[: n - 1] += _log(pts[1:-1], pts[2:], R) / eps
    return E, G
