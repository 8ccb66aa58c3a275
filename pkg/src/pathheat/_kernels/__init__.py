"""Hot-kernel backends.

Two interchangeable implementations of the sphere inner loops:

* ``numba_backend`` - serial @njit loop kernels (default when numba imports);
* ``numpy_backend`` - vectorized pure-numpy fallback.

Selection: set ``PATHHEAT_NUMBA=0`` (or ``off``/``false``) to force the numpy
path; any other value, or an import failure of numba, falls back accordingly.
Both backends consume pre-generated noise arrays, so results are reproducible
for either choice and for any worker count.

Contract (all float64; sphere of radius R, dim d, ambient m = d + 1):

``walk_substeps(x, zeta, scale, R)``
    x (N, m) current points, zeta (N, K, m) ambient normals; K geodesic
    substeps of size ``scale`` using tangential projections of zeta.

``horizontal(x0, u0, dB, R)``
    single start x0 (m,), frame u0 (m, d), dB (N, K, d) frame-coordinate
    increments; returns points (N, K+1, m) and pushed (N, K+1, m, d) frames
    contracted against nothing - instead see ``horizontal_push`` which takes
    per-time vectors h (K+1, d) and returns u(s_i) h(s_i).

``drift_block(pts, u0, eps, kappa, R, zero_tail=True)``
    coefficients (n, d), drift vectors (n, m), frames (n+1, m, d).

``she_trajectory(...)`` / ``mala_chain(...)``
    time loops; see docstrings in the backends.
"""

import os


def _want_numba():
    flag = os.environ.get("PATHHEAT_NUMBA", "").strip().lower()
    if flag in ("0", "off", "false", "no"):
        return False
    return True


_backend = None
_backend_name = None


def get_backend():
    global _backend, _backend_name
    if _backend is not None:
        return _backend
    if _want_numba():
        try:
            from . import numba_backend as mod

            _backend, _backend_name = mod, "numba"
            return _backend
        except ImportError:
            pass
    from . import numpy_backend as mod

    _backend, _backend_name = mod, "numpy"
    return _backend


def backend_name():
    get_backend()
    return _backend_name


def force_backend(name):
    """Testing hook: 'numba' | 'numpy' | None (reset to env-driven choice)."""
    global _backend, _backend_name
    if name is None:
        _backend = _backend_name = None
        return
    if name == "numpy":
        from . import numpy_backend as mod
    elif name == "numba":
        from . import numba_backend as mod
    else:
        raise ValueError(name)
    _backend, _backend_name = mod, name
