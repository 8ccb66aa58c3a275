"""Cross-validation of the numba and numpy kernel backends.

Both backends consume identical pre-generated noise, so their outputs must
agree to rounding; the drift block is additionally checked against the
reference module implementation.
"""

import math

import numpy as np
import pytest

import pathheat._kernels as kernels
from pathheat._kernels import numba_backend as KJ
from pathheat._kernels import numpy_backend as KN
from pathheat.geometry import Sphere
from pathheat.jacobi import default_delta
from pathheat.pathgrid import Partition, horizontal_lift, random_admissible_path
from pathheat.drift import beta_coefficients, drift_field_full

RNG = np.random.default_rng(314)
S = Sphere(2)
DELTA = default_delta(S)


def test_backend_selection_env(monkeypatch):
    kernels.force_backend(None)
    monkeypatch.setenv("PATHHEAT_NUMBA", "0")
    assert kernels.backend_name() == "numpy"
    kernels.force_backend(None)
    monkeypatch.delenv("PATHHEAT_NUMBA", raising=False)
    assert kernels.backend_name() == "numba"
    kernels.force_backend(None)


def test_walk_substeps_agree():
    x = S.random_point(RNG, size=64)
    zeta = RNG.standard_normal((64, 12, 3))
    a = KN.walk_substeps(x, zeta, 0.13, 1.0)
    b = KJ.walk_substeps(x, zeta, 0.13, 1.0)
    assert np.abs(a - b).max() < 1e-13


def test_horizontal_push_agree():
    x0 = np.array([0.0, 0.0, 1.0])
    u0 = S.canonical_frame(x0)
    dB = RNG.standard_normal((40, 16, 2)) * 0.2
    h = RNG.standard_normal((17, 2))
    p1, q1 = KN.horizontal_push(x0, u0, dB, h, 1.0)
    p2, q2 = KJ.horizontal_push(x0, u0, dB, h, 1.0)
    assert np.abs(p1 - p2).max() < 1e-13
    assert np.abs(q1 - q2).max() < 1e-13


def test_drift_block_agree_and_match_reference():
    for seed in range(4):
        rng = np.random.default_rng(seed)
        path, frames = random_admissible_path(S, Partition(6), DELTA, rng)
        u0 = frames[0]
        eps = path.partition.eps
        b1, d1, f1 = KN.drift_block(path.points, u0, eps, 1.0, 1.0)
        b2, d2, f2 = KJ.drift_block(path.points, u0, eps, 1.0, 1.0)
        assert np.abs(b1 - b2).max() < 1e-11
        assert np.abs(d1 - d2).max() < 1e-11
        ref_b = beta_coefficients(path, frames)
        ref_d = drift_field_full(path, frames).vectors
        assert np.abs(b1 - ref_b).max() < 1e-9
        assert np.abs(d1 - ref_d).max() < 1e-9


def test_she_trajectory_agree():
    rng = np.random.default_rng(5)
    path, frames = random_admissible_path(S, Partition(5), DELTA, rng, scale=0.2)
    xi = rng.standard_normal((300, 5, 2))
    args = (path.points.copy(), frames[0], path.partition.eps, 2e-4, 250, xi,
            1.0, 1.0, DELTA, True, 5)
    s1, t1, st1, r1, re1 = KN.she_trajectory(*args)
    s2, t2, st2, r2, re2 = KJ.she_trajectory(*args)
    assert st1 == st2 and r1 == r2 and re1 == re2
    assert np.abs(s1 - s2).max() < 1e-11
    assert np.abs(t1 - t2).max() == 0.0


def test_she_trajectory_sigma_variant_agree():
    rng = np.random.default_rng(6)
    path, frames = random_admissible_path(S, Partition(4), DELTA, rng, scale=0.2)
    xi = rng.standard_normal((150, 4, 3))
    args = (path.points.copy(), frames[0], path.partition.eps, 2e-4, 100, xi,
            1.0, 1.0, DELTA, False, 10)
    s1 = KN.she_trajectory(*args)
    s2 = KJ.she_trajectory(*args)
    assert np.abs(s1[0] - s2[0]).max() < 1e-11


def test_mala_chain_agree():
    rng = np.random.default_rng(7)
    pts0 = np.zeros((4, 3))
    pts0[:, 2] = 1.0
    steps = 800
    zeta = rng.standard_normal((steps, 3, 3))
    logu = np.log(rng.uniform(size=steps))
    a = KN.mala_chain(pts0.copy(), 1 / 3, DELTA, 0.05, steps, zeta, logu, 1.0, 1.0, 100, 4)
    b = KJ.mala_chain(pts0.copy(), 1 / 3, DELTA, 0.05, steps, zeta, logu, 1.0, 1.0, 100, 4)
    assert a[1] == b[1]
    assert np.abs(a[0] - b[0]).max() < 1e-12


def test_frames_and_increments_agree():
    rng = np.random.default_rng(8)
    path, frames = random_admissible_path(S, Partition(7), DELTA, rng)
    f1, i1 = KN.frames_and_increments(path.points, frames[0], 1.0)
    f2, i2 = KJ.frames_and_increments(path.points, frames[0], 1.0)
    assert np.abs(f1 - f2).max() < 1e-12
    assert np.abs(i1 - i2).max() < 1e-12
    # and against the reference anti-development
    from pathheat.pathgrid import anti_development

    ref = anti_development(path, frames)
    assert np.abs(i1 - ref).max() < 1e-10


def test_radius_two_sphere_agree():
    S2 = Sphere(2, radius=2.0)
    rng = np.random.default_rng(9)
    path, frames = random_admissible_path(S2, Partition(4), default_delta(S2), rng)
    eps = path.partition.eps
    b1, d1, _ = KN.drift_block(path.points, frames[0], eps, S2.kappa, 2.0)
    b2, d2, _ = KJ.drift_block(path.points, frames[0], eps, S2.kappa, 2.0)
    assert np.abs(b1 - b2).max() < 1e-11
    ref = beta_coefficients(path, frames)
    assert np.abs(b1 - ref).max() < 1e-9
