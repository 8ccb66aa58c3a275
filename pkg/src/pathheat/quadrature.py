"""Quadrature helpers: Gauss-Legendre rules and integration over manifolds."""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from .errors import UnsupportedFeatureError
from .geometry import Sphere, Torus


@lru_cache(maxsize=32)
def gauss_legendre(order):
    """Nodes/weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(order)
    return (x + 1.0) / 2.0, w / 2.0


def gl_interval(a, b, order):
    x, w = gauss_legendre(order)
    return a + (b - a) * x, (b - a) * w


def integrate_manifold(manifold, fn, order=64):
    """Integrate fn(points) against the Riemannian volume.

    Supported: 1-torus (trapezoid, spectral for periodic integrands) and the
    2-sphere (Gauss-Legendre in the polar cosine x uniform azimuthal grid).
    fn must accept an (N, ambient_dim) array and return (N,).
    """
    if isinstance(manifold, Torus) and manifold.dim == 1:
        L = manifold.periods[0]
        n = max(4 * order, 64)
        s = (np.arange(n) + 0.5) / n * L
        vals = fn(s[:, None])
        return float(np.sum(vals) * (L / n))
    if isinstance(manifold, Sphere) and manifold.dim == 2:
        R = manifold.radius
        xc, wc = np.polynomial.legendre.leggauss(order)
        nphi = 2 * order
        phi = (np.arange(nphi) + 0.5) / nphi * 2 * math.pi
        X, P = np.meshgrid(xc, phi, indexing="ij")
        sin_t = np.sqrt(1.0 - X**2)
        pts = np.stack(
            [R * sin_t * np.cos(P), R * sin_t * np.sin(P), R * X], axis=-1
        ).reshape(-1, 3)
        vals = fn(pts).reshape(order, nphi)
        return float(
            np.sum(vals.sum(axis=1) * wc) * (2 * math.pi / nphi) * R**2
        )
    raise UnsupportedFeatureError(
        f"volume quadrature not implemented for {manifold.kind} dim {manifold.dim}"
    )


def semigroup_defect(manifold, s, t, p, q, order=64):
    """| integral p_s(p,r) p_t(r,q) dVol(r) - p_{s+t}(p,q) |."""
    conv = integrate_manifold(
        manifold,
        lambda r: manifold.heat_kernel(s, p, r) * manifold.heat_kernel(t, r, q),
        order=order,
    )
    return abs(conv - float(manifold.heat_kernel(s + t, p, q)))
