"""Run configuration: a single TOML document plus flag overrides.

Schema (all keys optional unless a command needs them):

    seed = 0                    # master seed; PATHHEAT_SEED overrides default
    threads = 0                 # 0 = all cores
    out = "out"                 # artifact directory

    [manifold]
    kind = "sphere"             # euclidean | torus | circle | sphere | hyperbolic
    dim = 2
    radius = 1.0                # sphere/hyperbolic/circle
    periods = [6.283]           # torus

    [grid]
    n = 8
    delta = "auto"              # auto = curvature-smallness default

    [dynamics]
    variant = "full"            # full | sigma | flat_dn | flat_dd
    dt = "auto"                 # auto = 0.1 eps^2 (grid SDE)
    t_end = 1.0
    save_every = 1
    modes = 256                 # flat spectral truncation
    substeps = 16               # geodesic walk substeps

    [sampler]
    nsamples = 10000
    burn = 1000
    chains = 4
    thin = 5

    [functionals]
    names = ["time_integral(0)"]

    [constants]
    k_grid = "-2:2:0.5"         # start:stop:step
    d = 1
    truncation = 10000

    [tolerances]
    constraint = 1e-12
    algebraic = 1e-10
    quadrature = 1e-6
"""

from __future__ import annotations

import math
try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field

from .errors import ConfigError
from .geometry import manifold_from_spec
from .jacobi import default_delta
from .pathgrid import Partition

_VALID_TOP = {
    "seed", "threads", "out", "manifold", "grid", "dynamics", "sampler",
    "functionals", "constants", "tolerances", "profile",
}


@dataclass
class Tolerances:
    constraint: float = 1e-12
    algebraic: float = 1e-10
    quadrature: float = 1e-6


@dataclass
class RunConfig:
    raw: dict = field(default_factory=dict)
    seed: int = 0
    threads: int = 0
    out: str = "out"
    tolerances: Tolerances = field(default_factory=Tolerances)

    @classmethod
    def load(cls, path=None, overrides=None):
        data = {}
        if path is not None:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        for key in data:
            if key not in _VALID_TOP:
                raise ConfigError("unknown configuration key", key=key)
        if overrides:
            data = _merge(data, overrides)
        cfg = cls(raw=data)
        cfg.seed = int(data.get("seed", 0))
        cfg.threads = int(data.get("threads", 0)) or None
        cfg.out = str(data.get("out", "out"))
        tols = data.get("tolerances", {})
        cfg.tolerances = Tolerances(
            constraint=float(tols.get("constraint", 1e-12)),
            algebraic=float(tols.get("algebraic", 1e-10)),
            quadrature=float(tols.get("quadrature", 1e-6)),
        )
        return cfg

    # --- resolved accessors ---

    def manifold(self):
        spec = self.raw.get("manifold")
        if spec is None:
            raise ConfigError("a [manifold] table is required", key="manifold")
        try:
            return manifold_from_spec(spec)
        except KeyError as e:
            raise ConfigError(f"manifold spec missing {e}", key="manifold") from e

    def partition(self):
        n = self.raw.get("grid", {}).get("n")
        if n is None:
            raise ConfigError("grid.n is required", key="grid.n")
        return Partition(int(n))

    def delta(self, manifold=None):
        val = self.raw.get("grid", {}).get("delta", "auto")
        if val == "auto":
            return default_delta(manifold if manifold is not None else self.manifold())
        delta = float(val)
        if delta <= 0:
            raise ConfigError("delta must be positive or 'auto'", key="grid.delta")
        return delta

    def dt(self, path):
        val = self.raw.get("dynamics", {}).get("dt", "auto")
        if val == "auto":
            return 0.1 * path.partition.eps**2
        dt = float(val)
        if dt <= 0:
            raise ConfigError("dt must be positive or 'auto'", key="dynamics.dt")
        return dt

    def dynamics(self):
        d = dict(self.raw.get("dynamics", {}))
        d.setdefault("variant", "full")
        d.setdefault("t_end", 1.0)
        d.setdefault("save_every", 1)
        d.setdefault("modes", 256)
        d.setdefault("substeps", 16)
        if d["variant"] not in ("full", "sigma", "flat_dn", "flat_dd"):
            raise ConfigError(
                f"unknown variant {d['variant']!r}", key="dynamics.variant"
            )
        return d

    def sampler(self):
        s = dict(self.raw.get("sampler", {}))
        s.setdefault("nsamples", 10_000)
        s.setdefault("burn", 1000)
        s.setdefault("chains", 4)
        s.setdefault("thin", 5)
        return s

    def functional_names(self):
        return list(self.raw.get("functionals", {}).get("names", []))

    def k_grid(self):
        text = str(self.raw.get("constants", {}).get("k_grid", "-2:2:0.5"))
        try:
            start, stop, step = (float(x) for x in text.split(":"))
        except ValueError as e:
            raise ConfigError(
                "k_grid must be 'start:stop:step'", key="constants.k_grid"
            ) from e
        if step <= 0 or stop < start:
            raise ConfigError("bad k_grid range", key="constants.k_grid")
        out = []
        k = start
        while k <= stop + 1e-12:
            out.append(round(k, 12))
            k += step
        return out

    def echo(self):
        """Config as echoed into reports (deterministic ordering)."""
        return {
            "seed": self.seed,
            "threads": self.threads,
            "out": self.out,
            "raw": self.raw,
        }


def _merge(base, overrides):
    out = dict(base)
    for k, v in overrides.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out
