"""Serial @njit loop kernels; the hot path on CPython.

Mirrors numpy_backend function-for-function.  No prange: results must be
independent of thread count, and the loops are already memory-light.
"""

from __future__ import annotations

import numpy as np
from numba import njit

FASTMATH = False  # keep IEEE semantics so backends agree


@njit(cache=True, nogil=True, fastmath=FASTMATH)
def _project1(x, R):
    nrm = 0.0
    for k in range(x.shape[0]):
        nrm += x[k] * x[k]
    nrm = np.sqrt(nrm)
    return x * (R / nrm)


@njit(cache=True, nogil=True, fastmath=FASTMATH)
def _dot1(a, b):
    acc = 0.0
    for k in range(a.shape[0]):
        acc += a[k] * b[k]
    return acc


@njit(cache=True, nogil=True, fastmath=FASTMATH)
def _tangent1(x, v, R):
    c = _dot1(x, v) / (R * R)
    return v - c * x


@njit(cache=True, nogil=True, fastmath=FASTMATH)
def _exp1(p, v, R):
    nv = np.sqrt(_dot1(v, v))
    theta = nv / R
    if theta > 1e-14:
        sinc = np.sin(theta) / theta
    else:
        sinc = 1.0
    out = np.cos(theta) * p + sinc * v
    return _project1(out, R)


@njit(cache=True, nogil=True, fastmath=FASTMATH)
def _log1(p, q, R):
    c = _dot1(p, q) / (R * R)
    if c > 1.0:
        c = 1.0
    elif c < -1.0:
        c = -1.0
    w = q - c * p
    s = np.sqrt(_dot1(w, w)) / R
    theta = np.arctan2(s, c)
    if s > 1e-14:
        fac = theta / s
    else:
        fac = 1.0
    return fac * w


@njit(cache=True, nogil=True, fastmath=FASTMATH)
def _transport1(p, q, v, R):
    y = _log1(p, q, R)
    ny = np.sqrt(_dot1(y, y))
    if ny < 1e-14:
        return v.copy()
    t_p = y / ny
    theta = ny / R
    t_q = -np.sin(theta) * p / R + np.cos(theta) * t_p
    a = _dot1(v, t_p)
    return v - a * t_p + a * t_q


@njit(cache=True, nogil=True, fastmath=FASTMATH)
def walk_substeps(x, zeta, scale, R):
    x = x.copy()
    N, K, m = zeta.shape
    for i in range(N):
        xi = x[i]
        for k in range(K):
            v = _tangent1(xi, zeta[i, k], R) * scale
            xi = _exp1(xi, v, R)
        x[i] = xi
    return x


@njit(cache=True, nogil=True, fastmath=FASTMATH)
def horizontal_push(x0, u0, dB, h_values, R):
    N, K, d = dB.shape
    m = x0.shape[0]
    pts = np.empty((N, K + 1, m))
    pushed = np.zeros((N, K + 1, m))
    use_h = h_values.shape[0] == K + 1
    for i in range(N):
        pts[i, 0] = x0
        fr = u0.copy()
        if use_h:
            for mm in range(m):
                acc = 0.0
                for b in range(d):
                    acc += fr[mm, b] * h_values[0, b]
                pushed[i, 0, mm] = acc
        for k in range(K):
            v = np.zeros(m)
            for mm in range(m):
                acc = 0.0
                for b in range(d):
                    acc += fr[mm, b] * dB[i, k, b]
                v[mm] = acc
            nxt = _exp1(pts[i, k], v, R)
            fr2 = np.empty_like(fr)
            for b in range(d):
                fr2[:, b] = _transport1(pts[i, k], nxt, fr[:, b].copy(), R)
            fr = fr2
            pts[i, k + 1] = nxt
            if use_h:
                for mm in range(m):
                    acc = 0.0
                    for b in range(d):
                        acc += fr[mm, b] * h_values[k + 1, b]
                    pushed[i, k + 1, mm] = acc
    return pts, pushed


@njit(cache=True, nogil=True, fastmath=FASTMATH)
def _series_pair(A0, eps, tol=1e-15, max_terms=60):
    d = A0.shape[0]
    t_d = eps * np.eye(d)
    t_b = eps * eps / 2.0 * np.eye(d)
    D0 = t_d.copy()
    Bint = t_b.copy()
    k = 0
    e2 = eps * eps
    while k < max_terms:
        k += 1
        t_d = np.dot(t_d, A0) * (e2 / ((2 * k) * (2 * k + 1)))
        t_b = np.dot(t_b, A0) * (e2 / ((2 * k + 1) * (2 * k + 2)))
        D0 += t_d
        Bint += t_b
        nd = 0.0
        nb = 0.0
        for r in range(d):
            for c in range(d):
                nd += t_d[r, c] * t_d[r, c]
                nb += t_b[r, c] * t_b[r, c]
        if np.sqrt(nd) < tol and np.sqrt(nb) < tol:
            break
    return D0, Bint


@njit(cache=True, nogil=True, fastmath=FASTMATH)
def frames_and_increments(pts, u0, R):
    n = pts.shape[0] - 1
    m, d = u0.shape
    frames = np.empty((n + 1, m, d))
    frames[0] = u0
    inc = np.empty((n, d))
    for i in range(n):
        v = _log1(pts[i], pts[i + 1], R)
        for b in range(d):
            inc[i, b] = _dot1(frames[i, :, b].copy(), v)
        for b in range(d):
            frames[i + 1, :, b] = _transport1(
                pts[i], pts[i + 1], frames[i, :, b].copy(), R
            )
    return frames, inc


@njit(cache=True, nogil=True, fastmath=FASTMATH)
def drift_block(pts, u0, eps, kappa, R):
    frames, inc = frames_and_increments(pts, u0, R)
    n, d = inc.shape
    m = pts.shape[1]
    sq = np.sqrt(eps)
    beta = np.empty((n, d))
    for j in range(n):
        for a in range(d):
            nxt = inc[j + 1, a] if j + 1 < n else 0.0
            beta[j, a] = (inc[j, a] - nxt) / (eps * sq)
        if kappa != 0.0:
            b = inc[j] / eps
            bb = _dot1(b, b)
            A0 = np.empty((d, d))
            for r in range(d):
                for c in range(d):
                    A0[r, c] = kappa * (b[r] * b[c] - (bb if r == c else 0.0))
            D0, Bint = _series_pair(A0, eps)
            V = np.linalg.solve(D0.T, Bint.T).T / sq
            tr = 0.0
            for r in range(d):
                tr += V[r, r]
            Vb = np.dot(V, b)
            for a in range(d):
                beta[j, a] += kappa * (tr * b[a] - Vb[a])
    drift = np.empty((n, m))
    for i in range(n):
        for mm in range(m):
            acc = 0.0
            for a in range(d):
                acc += frames[i + 1, mm, a] * beta[i, a]
            drift[i, mm] = acc / (2.0 * sq)
    return beta, drift, frames


@njit(cache=True, nogil=True, fastmath=FASTMATH)
def _violates(pts, R, delta):
    if not np.isfinite(delta):
        return False
    n = pts.shape[0] - 1
    for i in range(n):
        c = _dot1(pts[i], pts[i + 1]) / (R * R)
        if c > 1.0:
            c = 1.0
        elif c < -1.0:
            c = -1.0
        if R * np.arccos(c) >= delta:
            return True
    return False


@njit(cache=True, nogil=True, fastmath=FASTMATH)
def _drift_and_noise(p, u0, eps, dt, noise, kappa, R, full_variant, sqeps):
    n = p.shape[0] - 1
    m = p.shape[1]
    if full_variant:
        beta, dr, frames = drift_block(p, u0, eps, kappa, R)
        d = noise.shape[1]
        nv = np.empty((n, m))
        fac = np.sqrt(dt) / sqeps
        for i in range(n):
            for mm in range(m):
                acc = 0.0
                for a in range(d):
                    acc += frames[i + 1, mm, a] * noise[i, a]
                nv[i, mm] = acc * fac
    else:
        frames, inc = frames_and_increments(p, u0, R)
        d = inc.shape[1]
        dr = np.empty((n, m))
        for i in range(n):
            b0 = np.zeros(d)
            for a in range(d):
                nxt = inc[i + 1, a] if i + 1 < n else 0.0
                b0[a] = (inc[i, a] - nxt) / (2.0 * eps * eps)
            for mm in range(m):
                acc = 0.0
                for a in range(d):
                    acc += frames[i + 1, mm, a] * b0[a]
                dr[i, mm] = acc
        nv = np.empty((n, m))
        fac = np.sqrt(dt) / sqeps
        for i in range(n):
            w = _tangent1(p[i + 1], noise[i], R)
            for mm in range(m):
                nv[i, mm] = w[mm] * fac
    return -dr, nv


@njit(cache=True, nogil=True, fastmath=FASTMATH)
def _heun_step(pts, u0, eps, dt, noise, kappa, R, delta, full_variant, sqeps):
    n = pts.shape[0] - 1
    b1, v1 = _drift_and_noise(pts, u0, eps, dt, noise, kappa, R, full_variant, sqeps)
    pred = pts.copy()
    for i in range(n):
        pred[i + 1] = _project1(pts[i + 1] + b1[i] * dt + v1[i], R)
    if _violates(pred, R, delta):
        return False, pts
    b2, v2 = _drift_and_noise(pred, u0, eps, dt, noise, kappa, R, full_variant, sqeps)
    out = pts.copy()
    for i in range(n):
        out[i + 1] = _project1(
            pts[i + 1] + 0.5 * ((b1[i] + b2[i]) * dt + v1[i] + v2[i]), R
        )
    if _violates(out, R, delta):
        return False, pts
    return True, out


@njit(cache=True, nogil=True, fastmath=FASTMATH)
def she_trajectory(
    pts0, u0, eps, dt, nsteps, xi, kappa, R, delta, full_variant, save_every,
    max_halvings=8,
):
    n = pts0.shape[0] - 1
    m = pts0.shape[1]
    sqeps = np.sqrt(eps)
    nsaved = nsteps // save_every + 1
    saved = np.empty((nsaved, n + 1, m))
    times = np.empty(nsaved)
    saved[0] = pts0
    times[0] = 0.0
    pts = pts0.copy()
    row = 0
    retries = 0
    t = 0.0
    isave = 1
    status = 0
    for step in range(nsteps):
        dt_local = dt
        done = False
        for attempt in range(max_halvings + 1):
            if row >= xi.shape[0]:
                return saved[:isave], times[:isave], 1, row, retries
            noise = xi[row]
            row += 1
            ok, new_pts = _heun_step(
                pts, u0, eps, dt_local, noise, kappa, R, delta, full_variant, sqeps
            )
            if ok:
                done = True
                break
            retries += 1
            dt_local *= 0.5
        if not done:
            return saved[:isave], times[:isave], 2, row, retries
        pts = new_pts
        t += dt_local
        if (step + 1) % save_every == 0:
            saved[isave] = pts
            times[isave] = t
            isave += 1
    return saved[:isave], times[:isave], status, row, retries


@njit(cache=True, nogil=True, fastmath=FASTMATH)
def _energy_grad(pts, eps, R):
    n = pts.shape[0] - 1
    m = pts.shape[1]
    E = 0.0
    G = np.zeros((n, m))
    for i in range(n):
        y = _log1(pts[i], pts[i + 1], R)
        E += _dot1(y, y) / eps
        G[i] += _log1(pts[i + 1], pts[i], R) / eps
        if i + 1 < n:
            G[i] += _log1(pts[i + 1], pts[i + 2], R) / eps
    return E, G


@njit(cache=True, nogil=True, fastmath=FASTMATH)
def mala_chain(pts0, eps, delta, tau, nsteps, zeta, logu, kappa, R, burn, thin):
    n = pts0.shape[0] - 1
    m = pts0.shape[1]
    nkeep = 0
    if nsteps > burn:
        nkeep = (nsteps - burn + thin - 1) // thin
    kept = np.empty((nkeep, n + 1, m))
    pts = pts0.copy()
    E, G = _energy_grad(pts, eps, R)
    accepts = 0
    ik = 0
    sqtau = np.sqrt(tau)
    for step in range(nsteps):
        prop = pts.copy()
        v = np.empty((n, m))
        for i in range(n):
            w = _tangent1(pts[i + 1], zeta[step, i], R)
            for mm in range(m):
                v[i, mm] = 0.5 * tau * G[i, mm] + sqtau * w[mm]
            prop[i + 1] = _exp1(pts[i + 1], v[i], R)
        if not _violates(prop, R, delta):
            E2, G2 = _energy_grad(prop, eps, R)
            sfwd = 0.0
            sback = 0.0
            for i in range(n):
                fb = _log1(prop[i + 1], pts[i + 1], R)
                for mm in range(m):
                    f = v[i, mm] - 0.5 * tau * G[i, mm]
                    b = fb[mm] - 0.5 * tau * G2[i, mm]
                    sfwd += f * f
                    sback += b * b
            lr = -(E2 - E) / 2.0 - (sback - sfwd) / (2.0 * tau)
            if logu[step] < lr:
                pts = prop
                E = E2
                G = G2
                accepts += 1
        if step >= burn and (step - burn) % thin == 0:
            kept[ik] = pts
            ik += 1
    return kept[:ik], accepts, pts
