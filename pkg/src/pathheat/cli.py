"""Command-line entry point.

Subcommands: geom-check, simulate, sample-nu, mass, convergence, ibp, qv,
drift-limit, constants, lsi, grad-ineq, verify.  Every run writes a JSON
report (and CSV artifacts where applicable) under --out, indexed by
manifest.json.  Exit codes: 0 success, 1 criterion failure, 2 bad
configuration.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__
from .config import RunConfig
from .errors import ConfigError, PathHeatError
from .rngutil import SEED_ENV, master_seed, rng_from


def _fmt(x):
    return format(float(x), ".17g")


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return str(obj)


class Reporter:
    def __init__(self, out_dir, command, cfg, seed):
        self.out = out_dir
        self.command = command
        self.cfg = cfg
        self.seed = seed
        self.files = []
        self.t0 = time.perf_counter()

    def write_text(self, name, text):
        os.makedirs(self.out, exist_ok=True)
        path = os.path.join(self.out, name)
        with open(path, "w") as fh:
            fh.write(text)
        self.files.append(name)
        return path

    def finish(self, results, passed=None):
        report = {
            "command": self.command,
            "version": __version__,
            "seed": self.seed,
            "config": self.cfg.echo(),
            "results": results,
        }
        if passed is not None:
            report["passed"] = bool(passed)
        payload = json.dumps(report, sort_keys=True, default=_json_default, indent=1)
        # timing kept outside the deterministic payload
        full = json.dumps(
            {
                "report": json.loads(payload),
                "timing": {"wall_seconds": round(time.perf_counter() - self.t0, 3)},
            },
            sort_keys=True,
            default=_json_default,
            indent=1,
        )
        self.write_text(f"report-{self.command}.json", full)
        manifest = {"command": self.command, "version": __version__,
                    "files": sorted(self.files)}
        self.write_text("manifest.json", json.dumps(manifest, sort_keys=True, indent=1))
        return report


# --- commands -----------------------------------------------------------------


def cmd_geom_check(cfg, args, rep):
    M = cfg.manifold()
    rng = rng_from(rep.seed, 1)
    checks = {}
    worst_rt = worst_iso = worst_bianchi = 0.0
    for _ in range(50):
        p = M.random_point(rng)
        f = M.canonical_frame(p)
        a = rng.standard_normal(M.dim)
        a *= rng.uniform(0, 0.9) * min(M.inj_radius, 3.0) / np.linalg.norm(a)
        v = M.frame_apply(f, a)
        q = M.exp(p, v)
        worst_rt = max(worst_rt, float(np.abs(M.log(p, q) - v).max()))
        w1 = M.frame_apply(f, rng.standard_normal(M.dim))
        w2 = M.frame_apply(f, rng.standard_normal(M.dim))
        iso = abs(
            float(M.metric(q, M.transport(p, q, w1), M.transport(p, q, w2)))
            - float(M.metric(p, w1, w2))
        )
        worst_iso = max(worst_iso, iso)
        if M.dim >= 2:
            x, y, z = rng.standard_normal((3, M.dim))
            b = (
                M.curvature_op(x, y) @ z
                + M.curvature_op(y, z) @ x
                + M.curvature_op(z, x) @ y
            )
            worst_bianchi = max(worst_bianchi, float(np.abs(b).max()))
    tol = cfg.tolerances
    checks["exp_log_roundtrip"] = {"worst": worst_rt, "ok": worst_rt < 1e-9}
    checks["transport_isometry"] = {
        "worst": worst_iso,
        "ok": worst_iso < tol.algebraic,
    }
    checks["first_bianchi"] = {
        "worst": worst_bianchi,
        "ok": worst_bianchi < tol.algebraic,
    }
    try:
        from .quadrature import integrate_manifold

        p0 = M.random_point(rng_from(rep.seed, 2))
        total = integrate_manifold(M, lambda q: M.heat_kernel(0.5, p0, q), order=48)
        checks["heat_kernel_mass"] = {
            "value": total,
            "ok": abs(total - 1.0) < tol.quadrature,
        }
    except PathHeatError:
        checks["heat_kernel_mass"] = {"value": None, "ok": True, "skipped": True}
    passed = all(c["ok"] for c in checks.values())
    rep.finish({"manifold": M.spec(), "checks": checks}, passed=passed)
    return 0 if passed else 1


def cmd_simulate(cfg, args, rep):
    dyn = cfg.dynamics()
    variant = args.variant or dyn["variant"]
    rng = rng_from(rep.seed, 11)
    if variant in ("flat_dn", "flat_dd"):
        from .dynamics import (
            flat_covariance_reference,
            flat_field,
            flat_she_exact,
            flat_spectral_state,
        )

        basis = variant.split("_")[1]
        K = int(args.modes or dyn["modes"])
        batch = int(args.batch)
        dim = cfg.raw.get("manifold", {}).get("dim", 1)
        base = None
        if args.free_sigma:
            # free case: one base-point draw per batch member
            base = rng.standard_normal((batch, dim)) * float(args.free_sigma)
        st = flat_spectral_state(basis, K, dim, base=base, batch=batch,
                                 dynamics=args.flat_dynamics)
        t_end = float(args.t or dyn["t_end"])
        t = 0.0
        while t < t_end:
            flat_she_exact(st, 1.0, rng)
            t += 1.0
        s = np.linspace(0, 1, 17)[1:]
        vals = flat_field(st, s)[..., 0]
        cov = vals.T @ vals / batch - np.outer(vals.mean(0), vals.mean(0))
        ref = flat_covariance_reference(basis, s)
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["s", "s_prime", "covariance", "reference"])
        for i in range(len(s)):
            for j in range(len(s)):
                w.writerow([_fmt(s[i]), _fmt(s[j]), _fmt(cov[i, j]), _fmt(ref[i, j])])
        rep.write_text("covariance.csv", buf.getvalue())
        gap = float(np.abs(cov - ref).max())
        rep.finish(
            {
                "variant": variant,
                "dynamics": args.flat_dynamics,
                "modes": K,
                "batch": batch,
                "t_end": t_end,
                "max_covariance_gap": gap,
                "tail_bound": st.tail_variance_bound(),
            }
        )
        return 0
    # grid SDE on the configured manifold
    from .dynamics import simulate_she
    from .pathgrid import constant_path

    M = cfg.manifold()
    part = cfg.partition()
    delta = cfg.delta(M)
    if M.kind == "sphere":
        origin = np.zeros(M.ambient_dim)
        origin[-1] = M.radius
    else:
        origin = np.zeros(M.ambient_dim)
    path = constant_path(M, origin, part, delta=delta)
    dt = cfg.dt(path)
    traj = simulate_she(
        path, dyn["t_end"], dt, rng, variant=variant,
        save_every=int(dyn["save_every"]),
    )
    buf = io.StringIO()
    w = csv.writer(buf)
    if args.summary_only:
        # moments per grid point over the saved states (burn-in: first quarter)
        burn = traj.points.shape[0] // 4
        kept = traj.points[burn:]
        w.writerow(
            ["i"]
            + [f"mean_{k}" for k in range(M.ambient_dim)]
            + [f"var_{k}" for k in range(M.ambient_dim)]
        )
        for i in range(part.n + 1):
            mu = kept[:, i].mean(axis=0)
            var = kept[:, i].var(axis=0)
            w.writerow([i, *[_fmt(x) for x in mu], *[_fmt(x) for x in var]])
        rep.write_text("moments.csv", buf.getvalue())
    else:
        w.writerow(["t", "i", *[f"coord_{k}" for k in range(M.ambient_dim)]])
        for k, t in enumerate(traj.times):
            for i in range(part.n + 1):
                w.writerow([_fmt(t), i, *[_fmt(x) for x in traj.points[k, i]]])
        rep.write_text("trajectory.csv", buf.getvalue())
    rep.finish(
        {
            "variant": variant,
            "dt": dt,
            "t_end": dyn["t_end"],
            "states_saved": int(traj.points.shape[0]),
            "retries": traj.retries,
            "final_mean": [float(x) for x in traj.points[-1].mean(axis=0)],
        }
    )
    return 0


def cmd_sample_nu(cfg, args, rep):
    from .measures import ensemble_to_csv, measure_delta, nu_sample

    M = cfg.manifold()
    part = cfg.partition()
    delta_raw = cfg.raw.get("grid", {}).get("delta", "auto")
    delta = measure_delta(M) if delta_raw == "auto" else float(delta_raw)
    s = cfg.sampler()
    ens = nu_sample(
        M, part, delta, rng_from(rep.seed, 21),
        nsamples=int(args.nsamples or s["nsamples"]),
        chains=int(s["chains"]), burn=int(s["burn"]), thin=int(s["thin"]),
        threads=cfg.threads,
    )
    rep.write_text("ensemble.csv", ensemble_to_csv(ens, seed=rep.seed))
    rep.finish({"size": ens.size, "delta": delta, **ens.provenance})
    return 0


def cmd_mass(cfg, args, rep):
    from .measures import measure_delta, nu_total_mass, richardson_mass

    M = cfg.manifold()
    delta_raw = cfg.raw.get("grid", {}).get("delta", "auto")
    delta = measure_delta(M) if delta_raw == "auto" else float(delta_raw)
    n_list = [int(x) for x in (args.n_list.split(",") if args.n_list else [])]
    if not n_list:
        n_list = [cfg.partition().n]
    from .pathgrid import Partition

    masses = [
        nu_total_mass(M, Partition(n), delta, int(args.nsamples),
                      rng_from(rep.seed, 31, k))
        for k, n in enumerate(n_list)
    ]
    results = {"masses": [m.__dict__ for m in masses], "delta": delta}
    if len(masses) >= 2:
        rich, err = richardson_mass(masses)
        results["richardson"] = rich
        results["richardson_stderr"] = err
    rep.finish(results)
    return 0


def cmd_convergence(cfg, args, rep):
    from .functionals import eval_cylinder_batch, parse_functional
    from .measures import convergence_study

    M = cfg.manifold()
    names = cfg.functional_names() or ["time_integral(0)"]
    n_list = [int(x) for x in (args.n_list or "4,8,16").split(",")]
    out = {}
    for name in names:
        F = parse_functional(name)
        if callable(F) and not hasattr(F, "integrands"):
            fn = F
        else:
            def fn(manifold, times, pts, _F=F):
                return eval_cylinder_batch(_F, manifold, times, pts)

        study = convergence_study(
            M, fn, n_list, int(args.nsamples), rng_from(rep.seed, 41),
            substeps=int(cfg.dynamics()["substeps"]),
        )
        out[name] = study
    rep.finish({"rows_by_functional": out})
    return 0


def cmd_ibp(cfg, args, rep):
    from .functionals import (
        exp_tilt_integral,
        ibp_check,
        linear_direction,
        sine_direction,
        squared_integral,
        time_integral,
    )

    M = cfg.manifold()
    pairs = [
        (time_integral(0), linear_direction(np.array([1.0, 0.0]), label="s e1")),
        (squared_integral(M.ambient_dim - 1),
         sine_direction(np.array([0.0, 1.0]), freq=0.5, label="sin e2")),
        (exp_tilt_integral(M.ambient_dim - 1, 0.4),
         sine_direction(np.array([0.6, 0.6]), freq=1.0, label="sin2")),
    ]
    reports = []
    ok = True
    for k, (F, h) in enumerate(pairs):
        r = ibp_check(M, F, h, int(args.nsamples), rng_from(rep.seed, 51, k))
        reports.append(r)
        ok = ok and abs(r["z"]) <= 3.0
    rep.finish({"pairs": reports}, passed=ok)
    return 0 if ok else 1


def cmd_qv(cfg, args, rep):
    from .dynamics import simulate_she
    from .functionals import qv_check
    from .pathgrid import constant_path

    M = cfg.manifold()
    part = cfg.partition()
    delta = cfg.delta(M)
    origin = np.zeros(M.ambient_dim)
    if M.kind == "sphere":
        origin[-1] = M.radius
    path = constant_path(M, origin, part, delta=delta)
    dt = float(args.dt) if args.dt else 0.01 * part.eps**2
    traj = simulate_she(path, float(args.t), dt, rng_from(rep.seed, 61),
                        save_every=1)
    r = qv_check(M, traj, grid_index=part.n // 2, axis=0, eps=part.eps)
    ok = 0.95 <= r["ratio"] <= 1.05
    rep.finish({**r, "dt": dt, "retries": traj.retries}, passed=ok)
    return 0 if ok else 1


def cmd_drift_limit(cfg, args, rep):
    from .geometry import Sphere
    from .smoothpaths import flat_sine, great_circle
    from .drift import drift_limit_study

    spec = {
        "great-circle": lambda: great_circle(Sphere(2)),
        "flat-sine": lambda: flat_sine(0.5),
    }
    if args.path not in spec:
        raise ConfigError(f"unknown path {args.path!r}", key="path")
    eps_list = [1.0 / int(x) for x in (args.n_grid or "8,16,32,64,128").split(",")]
    study = drift_limit_study(spec[args.path](), eps_list)
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["eps", "n", "sup_error"])
    for r in study["rows"]:
        w.writerow([_fmt(r["eps"]), r["n"], _fmt(r["sup_error"])])
    rep.write_text("drift-limit.csv", buf.getvalue())
    rep.finish(study)
    return 0


def cmd_constants(cfg, args, rep):
    from .inequalities import ConstantReport

    if args.k_grid:
        cfg.raw.setdefault("constants", {})["k_grid"] = args.k_grid
    cons = cfg.raw.get("constants", {})
    d = int(cons.get("d", 1))
    truncation = int(cons.get("truncation", 10_000))
    rows = []
    for K in cfg.k_grid():
        r = ConstantReport.compute(K=K, d=d, T=1.0, n=1, truncation=truncation)
        rows.append({"K": K, **r.values})
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["K", "C", "C0", "Ctilde", "C_einstein", "C1", "C2n"])
    for r in rows:
        w.writerow(
            [
                _fmt(r["K"]), _fmt(r["C"]), _fmt(r["C0"]),
                _fmt(r["C_reference"]) if not math.isnan(r["C_reference"]) else "",
                _fmt(r["C_einstein"]), _fmt(r["C1"]), _fmt(r["C2n"]),
            ]
        )
    rep.write_text("constants.csv", buf.getvalue())
    rep.finish({"rows": rows, "d": d, "truncation": truncation})
    return 0


def cmd_lsi(cfg, args, rep):
    from .functionals import parse_functional
    from .inequalities import lsi_empirical

    M = cfg.manifold()
    name = (cfg.functional_names() or ["time_integral(0)"])[0]
    F = parse_functional(name)
    if not hasattr(F, "integrands"):
        raise ConfigError("lsi needs a cylinder functional", key="functionals.names")
    r = lsi_empirical(M, F, int(args.nsamples), rng_from(rep.seed, 71))
    rep.finish({**r, "functional": name})
    return 0


def cmd_grad_ineq(cfg, args, rep):
    from .functionals import coordinate_integrand
    from .inequalities import gradient_ineq_check

    M = cfg.manifold()
    y = np.zeros(M.ambient_dim)
    if M.kind == "sphere":
        y[-1] = M.radius
    rows = []
    ok = True
    for axis in range(min(M.ambient_dim, 3)):
        r = gradient_ineq_check(
            M, coordinate_integrand(axis), float(args.t1), float(args.t2), y,
            s_order=16, space_order=32,
        )
        rows.append({"axis": axis, **r})
        ok = ok and r["margin"] >= -3 * r["quadrature_error"]
    rep.finish({"cases": rows}, passed=ok)
    return 0 if ok else 1


def cmd_verify(cfg, args, rep):
    from .acceptance import EXPECTED_RED, run_all

    only = {int(x) for x in args.only.split(",")} if args.only else None
    results = run_all(profile=args.profile, seed=rep.seed, only=only)
    for r in results:
        if r["id"] in EXPECTED_RED and not r["passed"]:
            r["expected_red"] = EXPECTED_RED[r["id"]]
    passed = all(r["passed"] for r in results)
    lines = [
        f"[{'PASS' if r['passed'] else 'FAIL'}] {r['id']:>2} {r['name']}"
        + (f"  (expected red: {r['expected_red']})" if "expected_red" in r else "")
        for r in results
    ]
    print("\n".join(lines))
    rep.finish({"criteria": results, "profile": args.profile}, passed=passed)
    return 0 if passed else 1


COMMANDS = {
    "geom-check": cmd_geom_check,
    "simulate": cmd_simulate,
    "sample-nu": cmd_sample_nu,
    "mass": cmd_mass,
    "convergence": cmd_convergence,
    "ibp": cmd_ibp,
    "qv": cmd_qv,
    "drift-limit": cmd_drift_limit,
    "constants": cmd_constants,
    "lsi": cmd_lsi,
    "grad-ineq": cmd_grad_ineq,
    "verify": cmd_verify,
}


def build_parser():
    p = argparse.ArgumentParser(
        prog="pathheat",
        description="Stochastic heat flow on discrete Riemannian path space.",
    )
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="TOML configuration file")
        sp.add_argument("--out", default=None, help="output directory")
        sp.add_argument("--seed", type=int, default=None,
                        help=f"master seed (default: ${SEED_ENV} or 0)")
        sp.add_argument("--threads", type=int, default=None)
        return sp

    common(sub.add_parser("geom-check", help="sampled geometry invariants"))
    sp = common(sub.add_parser("simulate", help="time integrators"))
    sp.add_argument("--variant", choices=["full", "sigma", "flat_dn", "flat_dd"])
    sp.add_argument("--modes", type=int)
    sp.add_argument("--t", type=float)
    sp.add_argument("--batch", type=int, default=20_000)
    sp.add_argument("--stats", choices=["covariance"], default="covariance")
    sp.add_argument("--summary-only", action="store_true",
                    help="write per-grid-point moments instead of the full series")
    sp.add_argument("--flat-dynamics", choices=["she", "ou"], default="she")
    sp.add_argument("--free-sigma", type=float, default=None,
                    help="stddev of a Gaussian initial distribution (free case)")
    sp = common(sub.add_parser("sample-nu", help="MCMC ensemble for the grid measure"))
    sp.add_argument("--nsamples", type=int)
    sp = common(sub.add_parser("mass", help="importance-sampled total mass"))
    sp.add_argument("--nsamples", type=int, default=100_000)
    sp.add_argument("--n-list", help="comma-separated grid sizes for Richardson")
    sp = common(sub.add_parser("convergence", help="grid-to-Wiener convergence study"))
    sp.add_argument("--nsamples", type=int, default=100_000)
    sp.add_argument("--n-list", default="4,8,16")
    sp = common(sub.add_parser("ibp", help="integration-by-parts checks"))
    sp.add_argument("--nsamples", type=int, default=100_000)
    sp = common(sub.add_parser("qv", help="quadratic-variation check"))
    sp.add_argument("--t", type=float, default=1.0)
    sp.add_argument("--dt", type=float, default=None)
    sp = common(sub.add_parser("drift-limit", help="continuum drift diagnostic"))
    sp.add_argument("--path", default="great-circle")
    sp.add_argument("--n-grid", default="8,16,32,64,128")
    sp = common(sub.add_parser("constants", help="closed-form constants table"))
    sp.add_argument("--k-grid", help="start:stop:step")
    sp = common(sub.add_parser("lsi", help="empirical log-Sobolev slack"))
    sp.add_argument("--nsamples", type=int, default=100_000)
    sp = common(sub.add_parser("grad-ineq", help="semigroup gradient inequality"))
    sp.add_argument("--t1", type=float, default=1.0)
    sp.add_argument("--t2", type=float, default=0.3)
    sp = common(sub.add_parser("verify", help="one-shot acceptance suite"))
    sp.add_argument("--profile", choices=["desk", "quick"], default="desk")
    sp.add_argument("--only", help="comma-separated criterion ids")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        overrides = {}
        if args.threads is not None:
            overrides["threads"] = args.threads
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.out is not None:
            overrides["out"] = args.out
        cfg = RunConfig.load(args.config, overrides)
        seed = args.seed if args.seed is not None else (
            int(cfg.raw["seed"]) if "seed" in cfg.raw else master_seed(None)
        )
        rep = Reporter(cfg.out, args.command, cfg, seed)
        code = COMMANDS[args.command](cfg, args, rep)
        return int(code)
    except ConfigError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return 2
    except PathHeatError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
