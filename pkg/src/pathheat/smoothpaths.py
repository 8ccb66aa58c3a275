"""Analytic test curves with derivative oracles.

Used by the continuum-drift diagnostic: a SmoothPath supplies the curve and
its first two ambient derivatives in closed form, so covariant quantities are
exact up to the manifold's tangential projection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .geometry import Euclidean, Manifold, Sphere
from .pathgrid import DiscretePath, Partition


@dataclass
class SmoothPath:
    manifold: Manifold
    gamma: Callable
    dgamma: Callable
    ddgamma: Callable
    label: str = ""

    def covariant_acceleration(self, s):
        """nabla_s gamma' = tangential projection of the ambient second derivative."""
        return self.manifold.tangent_project(self.gamma(s), self.ddgamma(s))

    def sample(self, n, delta):
        pts = np.stack([self.gamma(i / n) for i in range(n + 1)])
        return DiscretePath(self.manifold, Partition(n), pts, delta).validate()


def flat_line(direction):
    direction = np.asarray(direction, dtype=float)
    E = Euclidean(direction.shape[0])
    return SmoothPath(
        E,
        gamma=lambda s: s * direction,
        dgamma=lambda s: direction,
        ddgamma=lambda s: 0.0 * direction,
        label="flat-line",
    )


def flat_sine(amplitude=1.0):
    """x(s) = (sin(pi s), 0) in the plane."""
    E = Euclidean(2)
    return SmoothPath(
        E,
        gamma=lambda s: np.array([amplitude * math.sin(math.pi * s), 0.0]),
        dgamma=lambda s: np.array(
            [amplitude * math.pi * math.cos(math.pi * s), 0.0]
        ),
        ddgamma=lambda s: np.array(
            [-amplitude * math.pi**2 * math.sin(math.pi * s), 0.0]
        ),
        label="flat-sine",
    )


def great_circle(sphere: Sphere, speed=1.0):
    """Unit-parametrized great circle from the north pole, |gamma'| = speed."""
    R = sphere.radius
    w = speed / R

    def gamma(s):
        return np.array([R * math.sin(w * s), 0.0, R * math.cos(w * s)])

    def dgamma(s):
        return np.array([speed * math.cos(w * s), 0.0, -speed * math.sin(w * s)])

    def ddgamma(s):
        return np.array(
            [-speed * w * math.sin(w * s), 0.0, -speed * w * math.cos(w * s)]
        )

    return SmoothPath(sphere, gamma, dgamma, ddgamma, label="great-circle")


def latitude_circle(sphere: Sphere, polar_angle, angular_speed=2 * math.pi):
    """Circle of constant polar angle, gamma(0) on the x-z meridian."""
    R = sphere.radius
    st, ct = math.sin(polar_angle), math.cos(polar_angle)
    w = angular_speed

    def gamma(s):
        return R * np.array([st * math.cos(w * s), st * math.sin(w * s), ct])

    def dgamma(s):
        return R * np.array([-st * w * math.sin(w * s), st * w * math.cos(w * s), 0.0])

    def ddgamma(s):
        return R * np.array(
            [-st * w**2 * math.cos(w * s), -st * w**2 * math.sin(w * s), 0.0]
        )

    return SmoothPath(sphere, gamma, dgamma, ddgamma, label="latitude-circle")
