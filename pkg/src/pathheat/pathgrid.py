"""Discrete path space: uniform grids, piecewise-geodesic paths, frames.

A DiscretePath stores the origin together with the grid points x_1..x_n on a
uniform partition of [0, 1]; consecutive points must be closer than the path's
delta bound, so every segment carries a unique connecting geodesic.  Frames
are transported along those segments (discrete horizontal lift); the
anti-development collects the segment velocities in frame coordinates.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import DeltaViolationError, DomainError
from .geometry import Manifold


@dataclass(frozen=True)
class Partition:
    """Uniform grid s_i = i/n, i = 0..n."""

    n: int

    def __post_init__(self):
        if self.n < 1:
            raise DomainError("partition needs n >= 1")

    @property
    def eps(self):
        return 1.0 / self.n

    @property
    def times(self):
        return np.arange(self.n + 1) / self.n


@dataclass
class DiscretePath:
    """Grid points including the origin at row 0; shape (n+1, ambient_dim)."""

    manifold: Manifold
    partition: Partition
    points: np.ndarray
    delta: float

    @property
    def n(self):
        return self.partition.n

    @property
    def origin(self):
        return self.points[0]

    def segment_lengths(self):
        return self.manifold.distance(self.points[:-1], self.points[1:])

    def validate(self):
        self.manifold.check_point(self.points)
        lengths = self.segment_lengths()
        bad = np.nonzero(lengths >= self.delta)[0]
        if bad.size:
            i = int(bad[0])
            raise DeltaViolationError(i + 1, float(lengths[i]), self.delta)
        return self


@dataclass
class FramePath:
    """Orthonormal frames u(s_i) at each grid point, shape (n+1, m, d)."""

    frames: np.ndarray

    def __getitem__(self, i):
        return self.frames[i]


def make_path(manifold, origin, points, partition, delta):
    """Validated DiscretePath from an origin and the grid points x_1..x_n."""
    origin = np.asarray(origin, dtype=float)
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[None, :]
    if points.shape[0] != partition.n:
        raise DomainError(
            f"expected {partition.n} grid points after the origin, got {points.shape[0]}"
        )
    all_pts = np.concatenate([origin[None, :], points], axis=0)
    path = DiscretePath(manifold, partition, all_pts, float(delta))
    return path.validate()


def constant_path(manifold, origin, partition, delta=math.inf):
    pts = np.tile(np.asarray(origin, float), (partition.n + 1, 1))
    return DiscretePath(manifold, partition, pts, float(delta))


def horizontal_lift(path, frame0=None):
    """Frames chained by parallel transport along each segment."""
    M = path.manifold
    if frame0 is None:
        frame0 = M.canonical_frame(path.origin)
    frames = np.empty((path.n + 1,) + frame0.shape)
    frames[0] = frame0
    for i in range(path.n):
        p, q = path.points[i], path.points[i + 1]
        frames[i + 1] = np.stack(
            [M.transport(p, q, frames[i][:, a]) for a in range(frame0.shape[1])],
            axis=-1,
        )
    return FramePath(frames)


def anti_development(path, frames):
    """Increments Delta_i b = u(s_{i-1})^{-1} log(x_{i-1}, x_i), shape (n, d).

    The convention Delta_{n+1} b = 0 is applied by consumers; only the n real
    increments are stored.
    """
    M = path.manifold
    out = np.empty((path.n, M.dim))
    for i in range(path.n):
        v = M.log(path.points[i], path.points[i + 1])
        out[i] = M.frame_coords(path.points[i], frames[i], v)
    return out


def develop(manifold, origin, frame0, increments, partition=None, delta=math.inf):
    """Inverse of anti_development: exponentiate frame-coordinate increments."""
    increments = np.asarray(increments, dtype=float)
    n = increments.shape[0]
    if partition is None:
        partition = Partition(n)
    elif partition.n != n:
        raise DomainError("increment count must match the partition")
    m = manifold.ambient_dim
    pts = np.empty((n + 1, m))
    pts[0] = origin
    frames = np.empty((n + 1,) + frame0.shape)
    frames[0] = frame0
    for i in range(n):
        rho = float(np.linalg.norm(increments[i]))
        if rho >= delta:
            raise DeltaViolationError(i + 1, rho, delta)
        v = manifold.frame_apply(frames[i], increments[i])
        pts[i + 1] = manifold.exp(pts[i], v)
        frames[i + 1] = np.stack(
            [
                manifold.transport(pts[i], pts[i + 1], frames[i][:, a])
                for a in range(frame0.shape[1])
            ],
            axis=-1,
        )
    path = DiscretePath(manifold, partition, pts, float(delta)).validate()
    return path, FramePath(frames)


def energy(path):
    """Discrete energy: sum of squared segment lengths over the spacing."""
    lengths = path.segment_lengths()
    return float(np.sum(lengths**2) / path.partition.eps)


def path_distance(a, b):
    """Grid metric eps * sum_i rho(a_i, b_i) over i = 1..n."""
    if a.partition.n != b.partition.n:
        raise DomainError("paths live on different partitions")
    if a.manifold.spec() != b.manifold.spec():
        raise DomainError("paths live on different manifolds")
    d = a.manifold.distance(a.points[1:], b.points[1:])
    return float(a.partition.eps * np.sum(d))


def random_admissible_path(manifold, partition, delta, rng, scale=None):
    """Brownian-like admissible path: capped frame increments developed from o."""
    d = manifold.dim
    o = manifold.random_point(rng)
    if scale is None:
        scale = math.sqrt(partition.eps)
    inc = rng.standard_normal((partition.n, d)) * scale
    cap = 0.9 * delta
    norms = np.linalg.norm(inc, axis=1, keepdims=True)
    inc = np.where(norms > cap, inc * (cap / norms), inc)
    frame0 = manifold.canonical_frame(o)
    return develop(manifold, o, frame0, inc, partition, delta)


# --- serialization -----------------------------------------------------------


def path_to_csv(path, seed=None, weights=None, extra_header=None):
    """CSV with a JSON header line; columns (i, s_i, coord_0..coord_D)."""
    header = {
        "manifold": path.manifold.spec(),
        "eps": path.partition.eps,
        "delta": None if math.isinf(path.delta) else path.delta,
        "seed": seed,
    }
    if extra_header:
        header.update(extra_header)
    buf = io.StringIO()
    buf.write("# " + json.dumps(header, sort_keys=True) + "\n")
    w = csv.writer(buf)
    m = path.manifold.ambient_dim
    cols = ["i", "s_i"] + [f"coord_{k}" for k in range(m)]
    if weights is not None:
        cols.append("weight")
    w.writerow(cols)
    times = path.partition.times
    for i in range(path.n + 1):
        row = [i, repr(float(times[i]))] + [repr(float(x)) for x in path.points[i]]
        if weights is not None:
            row.append(repr(float(weights)))
        w.writerow(row)
    return buf.getvalue()


def path_from_csv(text):
    from .geometry import manifold_from_spec

    lines = text.strip().splitlines()
    if not lines[0].startswith("#"):
        raise DomainError("missing JSON header line")
    header = json.loads(lines[0][1:].strip())
    manifold = manifold_from_spec(header["manifold"])
    rows = list(csv.reader(lines[1:]))
    cols = rows[0]
    ncoord = sum(1 for c in cols if c.startswith("coord_"))
    data = np.array([[float(x) for x in r[2 : 2 + ncoord]] for r in rows[1:]])
    n = data.shape[0] - 1
    delta = header.get("delta")
    path = DiscretePath(
        manifold, Partition(n), data, math.inf if delta is None else float(delta)
    )
    return path, header
