"""Command line entry point: ``slowbond <command> ...``."""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from slowbond import harness, hydro, lpp, tasep
from slowbond.errors import MarginError, OracleCapError, ParameterError
from slowbond.harness import dumps, fmt


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _windows(text: str) -> list[tuple[float, float]]:
    out = []
    for part in text.split(","):
        a, b = part.split(":")
        out.append((float(a), float(b)))
    return out


def _load_profile(text: str) -> hydro.MacroProfile:
    if not text.lstrip().startswith("{"):
        text = Path(text).read_text()
    return hydro.MacroProfile.from_json(text)


def _rate(args) -> tuple[hydro.MacroRate, dict | None]:
    if args.lambda0 is not None:
        return hydro.MacroRate(args.lambda0), None
    if args.r is None:
        raise ParameterError("give --lambda0 or --r")
    est = lpp.estimate_kappa(args.r, args.kappa_n, args.kappa_replicas, args.seed)
    info = {"r": args.r, "kappa": est.mean, "stderr": est.stderr, "n": est.n}
    return hydro.MacroRate.from_kappa(est.mean), info


def _writer(out=None):
    return csv.writer(out or sys.stdout, lineterminator="\n")


# ---------------------------------------------------------------------------


def cmd_kappa(args) -> int:
    ns = _ints(args.ladder) if args.ladder else [args.n]
    w = _writer()
    w.writerow(["r", "n", "replica", "T_over_n"])
    summary = {"r": args.r, "bounds": lpp.kappa_bounds(args.r).__dict__, "estimates": []}
    for n in ns:
        est = lpp.estimate_kappa(args.r, n, args.replicas, args.seed, args.threads)
        for k, v in enumerate(est.per_replica):
            w.writerow([fmt(args.r), n, k, fmt(v)])
        summary["estimates"].append({"n": n, "mean": est.mean, "stderr": est.stderr,
                                     "replicas": est.replicas})
    if len(ns) >= 2:
        a, b = lpp.fit_finite_size(ns, [e["mean"] for e in summary["estimates"]])
        summary["fit"] = {"a": a, "b": b, "form": "a + b n^(-1/3)"}
    print(dumps(summary), file=sys.stderr)
    return 0


def cmd_shape(args) -> int:
    vals = [lpp.shape_probe(args.x, args.y, args.n, 1.0, args.seed, k) for k in range(args.replicas)]
    print(fmt(float(np.mean(vals))))
    return 0


def cmd_hydro(args) -> int:
    rate, info = _rate(args)
    prof = _load_profile(args.profile)
    xs = np.linspace(args.xmin, args.xmax, args.points)
    sol = hydro.value_function(prof, args.t, rate, xs)
    rho = sol.rho if sol.rho is not None else np.full(xs.shape, np.nan)
    w = _writer()
    w.writerow(["x", "v", "rho", "argmax_q"])
    for row in zip(sol.x, sol.v, rho, sol.argmax_q):
        w.writerow([fmt(v) for v in row])
    if info:
        print(dumps({"lambda0": rate.lambda0, **info}), file=sys.stderr)
    return 0


def cmd_invariant_check(args) -> int:
    rate = hydro.MacroRate(args.lambda0)
    rep = hydro.invariance_check(_load_profile(args.profile), rate, _floats(args.times), tol=args.tol)
    print(dumps(rep.__dict__ | {"jumps": [j.__dict__ for j in rep.jumps]}))
    return 0 if rep.passed else 1


def cmd_simulate(args) -> int:
    if (args.rho is None) == (args.profile is None):
        raise ParameterError("give exactly one of --rho and --profile")
    prof = hydro.MacroProfile.flat(args.rho) if args.profile is None else _load_profile(args.profile)
    windows = _windows(args.windows)
    measures = [m.strip() for m in args.measure.split(",")]
    bad = set(measures) - {"density", "current", "paircorr"}
    if bad:
        raise ParameterError(f"unknown measures {sorted(bad)}")
    n = args.n
    reach = max(max(abs(a), abs(b)) for a, b in windows)
    L = args.L or int(n * (reach + 2 * args.t)) + 100
    occ = tasep.init_from_profile(prof, n, (-L, L), args.seed)
    proc = tasep.ExclusionProcess(occ, tasep.BondClocks.single(args.seed, args.r))
    w = _writer()
    w.writerow(["t", "a", "b", "measure", "value", "seed"])
    prev_j, prev_t = proc.currents(), 0.0
    for s in np.linspace(0.0, args.t, args.samples + 1):
        proc.advance(n * s)
        state = proc.occupancies()
        j = proc.currents()
        for a, b in windows:
            if "density" in measures:
                w.writerow([fmt(s), fmt(a), fmt(b), "density",
                            fmt(tasep.measure_density(state, a, b, n) / (b - a)), args.seed])
            if "current" in measures:
                w.writerow([fmt(s), fmt(a), fmt(b), "current",
                            fmt(proc.current(int(np.floor(n * a))) / n), args.seed])
            if "paircorr" in measures and s > prev_t:
                # jumps per unit rate and time across the window's bonds since the last sample
                bonds = np.arange(int(np.floor(n * a)) + 1, int(np.floor(n * b)) + 1)
                rates = proc.clocks.rates(bonds)
                idx = bonds + L + 1
                val = float(np.mean((j[idx] - prev_j[idx]) / (rates * n * (s - prev_t))))
                w.writerow([fmt(s), fmt(a), fmt(b), "paircorr", fmt(val), args.seed])
        prev_j, prev_t = j, s
    if args.snapshot:
        tasep.save_snapshot(args.snapshot, proc.occupancies(), proc.time, args.seed)
    return 0


def _run_config(args, kind: str) -> int:
    cfg = harness.ExperimentConfig.from_json(args.config, seed=args.seed, out_dir=args.out_dir,
                                             threads=args.threads)
    if cfg.kind != kind:
        raise ParameterError(f"config kind {cfg.kind!r} does not match command {kind!r}")
    rep = harness.run(cfg)
    body = rep if isinstance(rep, dict) else rep.__dict__
    print(dumps(body))
    return 0 if body["passed"] else 1


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="slowbond", description="Slow-bond exclusion workbench")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("kappa", help="estimate kappa(r) from the diagonal-defect growth model")
    p.add_argument("--r", type=float, required=True)
    p.add_argument("--n", type=int, default=1500)
    p.add_argument("--replicas", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ladder", help="comma-separated sizes; fits a + b n^(-1/3)")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_kappa)

    p = sub.add_parser("shape", help="homogeneous passage time n^-1 T_[nx],[ny]")
    p.add_argument("--x", type=float, required=True)
    p.add_argument("--y", type=float, required=True)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--replicas", type=int, default=1)
    p.set_defaults(func=cmd_shape)

    def rate_args(p):
        p.add_argument("--lambda0", type=float)
        p.add_argument("--r", type=float, help="estimate kappa(r) to get lambda0")
        p.add_argument("--kappa-n", type=int, default=1500)
        p.add_argument("--kappa-replicas", type=int, default=20)
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("hydro", help="value function and density on a mesh")
    p.add_argument("--profile", required=True, help="JSON text or file")
    rate_args(p)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--xmin", type=float, default=-2.0)
    p.add_argument("--xmax", type=float, default=2.0)
    p.add_argument("--points", type=int, default=401)
    p.set_defaults(func=cmd_hydro)

    p = sub.add_parser("invariant-check", help="test v(x,t) = v0(x) - t lambda0/4")
    p.add_argument("--profile", required=True)
    p.add_argument("--lambda0", type=float, required=True)
    p.add_argument("--times", default="0.1,1,5")
    p.add_argument("--tol", type=float, default=1e-6)
    p.set_defaults(func=cmd_invariant_check)

    p = sub.add_parser("simulate", help="run the particle system and print time series")
    p.add_argument("--r", type=float, default=1.0)
    p.add_argument("--rho", type=float)
    p.add_argument("--profile")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--windows", default="-1:0,0:1")
    p.add_argument("--measure", default="density,current")
    p.add_argument("--samples", type=int, default=4)
    p.add_argument("--L", type=int)
    p.add_argument("--snapshot", help="write the final configuration here")
    p.set_defaults(func=cmd_simulate)

    for name, kind in (("compare", "compare"), ("kappa-sweep", "kappa_sweep"),
                       ("invariance", "invariance"), ("paircorr", "paircorr"),
                       ("shape-sweep", "shape")):
        p = sub.add_parser(name, help=f"run a {kind} experiment from a JSON config")
        p.add_argument("--config", required=True)
        p.add_argument("--seed", type=int)
        p.add_argument("--out-dir")
        p.add_argument("--threads", type=int)
        p.set_defaults(func=lambda a, k=kind: _run_config(a, k))
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ParameterError, MarginError, OracleCapError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
