"""Experiment orchestration: configuration, runners and report files.

Every runner validates its whole configuration before computing, writes CSV
tables whose rows carry the seed and a hash of the configuration, and returns
a report with a ``passed`` flag summarizing its tolerance checks.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from slowbond import hydro, lpp, tasep
from slowbond.errors import ParameterError

KINDS = ("kappa_sweep", "shape", "compare", "invariance", "paircorr")

_DEFAULTS: dict[str, dict[str, Any]] = {
    "kappa_sweep": {"rs": [0.2, 0.25, 0.4, 0.5, 0.8, 1.0], "ns": [1500], "replicas": 20,
                    "lower_factor": 0.9},
    "shape": {"points": [[1, 1], [2, 1], [1, 2], [4, 1]], "n": 1000, "replicas": 10,
              "tolerance": 0.05},
    "compare": {"r": 1.0, "rho": 0.3, "profile": None, "n": 2000, "t": 1.0,
                "windows": None, "plateaus": False, "plateau_inset": 0.1,
                "current_points": [-0.5, 0.0, 0.5], "kappa": None, "kappa_n": 1500,
                "kappa_replicas": 20, "replicas": 1, "initial": "bernoulli",
                "density_tol": 0.03, "current_tol": 0.03, "L": None, "second_L": None},
    "invariance": {"lambda0": None, "r": None, "kappa": None, "kappa_n": 1500,
                   "kappa_replicas": 20, "profiles": None, "times": [0.1, 1.0, 5.0],
                   "tolerance": 1e-6, "simulate": None},
    "paircorr": {"rho": 0.1, "r": 0.5, "sites": 4000, "burn_in": 1e4, "horizon": 1e5,
                 "bonds": [-5, 0, 5], "tolerance": 0.02, "kappa": None, "kappa_n": 1500,
                 "kappa_replicas": 20},
}


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return str(v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        # JSON has no inf/nan; keep them readable
        return f if math.isfinite(f) else str(f)
    return obj


def dumps(obj) -> str:
    """JSON with floats at 17 significant digits."""
    text = json.dumps(_jsonable(obj), indent=2, sort_keys=True,
                      default=lambda o: asdict(o) if hasattr(o, "__dataclass_fields__") else str(o))
    return text


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    params: dict
    seed: int = 0
    out_dir: str | None = None
    threads: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ParameterError(f"unknown experiment kind {self.kind!r}; expected one of {KINDS}")
        unknown = set(self.params) - set(_DEFAULTS[self.kind])
        if unknown:
            raise ParameterError(f"unknown parameters for {self.kind}: {sorted(unknown)}")
        merged = {**_DEFAULTS[self.kind], **self.params}
        object.__setattr__(self, "params", merged)
        if int(self.threads) < 1:
            raise ParameterError("threads must be at least 1")
        _VALIDATORS[self.kind](merged)

    @classmethod
    def from_json(cls, obj: dict | str | Path, **overrides) -> "ExperimentConfig":
        if isinstance(obj, Path) or (isinstance(obj, str) and not obj.lstrip().startswith("{")):
            obj = json.loads(Path(obj).read_text())
        elif isinstance(obj, str):
            obj = json.loads(obj)
        obj = dict(obj)
        kind = obj.pop("kind", None)
        top = {k: obj.pop(k) for k in ("seed", "out_dir", "threads") if k in obj}
        params = obj.pop("params", {})
        params.update(obj)
        top.update({k: v for k, v in overrides.items() if v is not None})
        return cls(kind, params, **top)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": self.params, "seed": self.seed}

    @property
    def config_hash(self) -> str:
        # threads and the output directory do not change any number
        canon = json.dumps(_jsonable(self.to_dict()), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


def _need(cond: bool, msg: str):
    if not cond:
        raise ParameterError(msg)


def _rate_ok(r) -> bool:
    return isinstance(r, (int, float)) and 0 < r <= 1


def _validate_kappa_sweep(p):
    _need(len(p["rs"]) > 0 and all(_rate_ok(r) for r in p["rs"]), "rs must be rates in (0, 1]")
    _need(len(p["ns"]) > 0 and all(int(n) >= 1 for n in p["ns"]), "ns must be positive sizes")
    _need(int(p["replicas"]) >= 1, "replicas must be at least 1")


def _validate_shape(p):
    _need(all(len(pt) == 2 and pt[0] > 0 and pt[1] > 0 for pt in p["points"]),
          "shape points must be positive pairs")
    for x, y in p["points"]:
        _need(math.floor(p["n"] * x) >= 1 and math.floor(p["n"] * y) >= 1, "n too small for point")
    _need(int(p["replicas"]) >= 1, "replicas must be at least 1")


def _validate_compare(p):
    _need(_rate_ok(p["r"]), "r must lie in (0, 1]")
    _need(p["profile"] is not None or (p["rho"] is not None and 0 <= p["rho"] <= 1),
          "give rho in [0, 1] or a profile")
    _need(int(p["n"]) >= 1 and p["t"] >= 0, "need n >= 1 and t >= 0")
    _need(p["initial"] in ("bernoulli", "deterministic"), "initial must be bernoulli or deterministic")
    for w in p["windows"] or []:
        _need(len(w) == 2 and w[0] < w[1], f"bad window {w}")
    _need(p["windows"] or p["plateaus"] or p["current_points"], "nothing to measure")
    if p["plateaus"]:
        _need(p["profile"] is None, "plateau windows are defined for flat profiles")
    if p["kappa"] is not None:
        _need(isinstance(p["kappa"], dict) and "value" in p["kappa"],
              "kappa must be {value, n, stderr}")
    if p["profile"] is not None:
        hydro.MacroProfile.from_json(p["profile"])
    _need(int(p["replicas"]) >= 1, "replicas must be at least 1")
    for key in ("L", "second_L"):
        _need(p[key] is None or int(p[key]) >= 1, f"{key} must be a positive site count")


def _validate_invariance(p):
    _need(p["lambda0"] is not None or p["r"] is not None or p["kappa"] is not None,
          "give lambda0, kappa or r")
    if p["lambda0"] is not None:
        _need(0 < p["lambda0"] <= 1, "lambda0 must lie in (0, 1]")
    if p["r"] is not None:
        _need(_rate_ok(p["r"]), "r must lie in (0, 1]")
    _need(all(t > 0 for t in p["times"]), "times must be positive")
    for prof in p["profiles"] or []:
        _need("name" in prof and "profile" in prof, "profiles need name and profile")
    sim = p["simulate"]
    if sim is not None:
        _need(_rate_ok(sim.get("r", p["r"])), "simulation needs a rate r")
        _need(int(sim.get("n", 0)) >= 1 and sim.get("t", 0) > 0, "simulation needs n and t")


def _validate_paircorr(p):
    _need(0 <= p["rho"] <= 1 and _rate_ok(p["r"]), "need rho in [0, 1] and r in (0, 1]")
    _need(int(p["sites"]) >= 2 and p["horizon"] > 0 and p["burn_in"] >= 0, "bad run lengths")
    half = int(p["sites"]) // 2
    _need(all(-half <= b < int(p["sites"]) - half for b in p["bonds"]), "bond outside the ring")


_VALIDATORS = {"kappa_sweep": _validate_kappa_sweep, "shape": _validate_shape,
               "compare": _validate_compare, "invariance": _validate_invariance,
               "paircorr": _validate_paircorr}


# ---------------------------------------------------------------------------
# output


class Writer:
    """CSV/JSON writer that stamps rows with the seed and configuration hash."""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.dir = Path(config.out_dir) if config.out_dir else None
        if self.dir is not None:
            self.dir.mkdir(parents=True, exist_ok=True)
        self.files: list[str] = []

    def csv(self, name: str, header: list[str], rows: list[list]):
        if self.dir is None:
            return
        path = self.dir / f"{name}.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(header + ["seed", "config_hash"])
            for row in rows:
                w.writerow([fmt(v) for v in row] + [self.config.seed, self.config.config_hash])
        self.files.append(str(path))

    def json(self, name: str, obj):
        if self.dir is None:
            return
        path = self.dir / f"{name}.json"
        path.write_text(dumps(obj) + "\n", encoding="utf-8")
        self.files.append(str(path))


def _sub_seed(seed: int, *tags: int) -> int:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(t) for t in tags))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def _kappa_for(p: dict, r: float, seed: int, threads: int) -> dict:
    """Supplied estimate, or a fresh one from the growth model."""
    if p.get("kappa") is not None:
        k = p["kappa"]
        return {"value": float(k["value"]), "n": k.get("n"), "stderr": k.get("stderr"),
                "replicas": k.get("replicas"), "source": "supplied"}
    est = lpp.estimate_kappa(r, int(p["kappa_n"]), int(p["kappa_replicas"]), seed, threads)
    return {"value": est.mean, "n": est.n, "stderr": est.stderr, "replicas": est.replicas,
            "source": "estimated"}


# ---------------------------------------------------------------------------
# kappa sweep and shape


@dataclass
class SweepReport:
    rows: list[dict]
    fits: dict
    passed: bool
    checks: dict
    config_hash: str
    seed: int


def run_kappa_sweep(config: ExperimentConfig) -> SweepReport:
    p = config.params
    rs = sorted(float(r) for r in p["rs"])
    out = Writer(config)
    rows, per_rep, fits = [], [], {}
    checks = {"sandwich": True, "monotone": True}
    partial = None
    try:
        for n in p["ns"]:
            sweep = lpp.shared_kappa_sweep(rs, int(n), int(p["replicas"]), config.seed, config.threads)
            ests = sweep.estimates()
            for a, (r, est) in enumerate(zip(rs, ests)):
                b = lpp.kappa_bounds(r)
                ok = p["lower_factor"] * b.lower <= est.mean <= b.upper + 2 * _se(est)
                checks["sandwich"] &= bool(ok)
                rows.append({"r": r, "n": int(n), "mean": est.mean, "stderr": est.stderr,
                             "lower": b.lower, "upper": b.upper, "replicas": est.replicas,
                             "within_bounds": bool(ok)})
                per_rep += [[r, int(n), k, v] for k, v in enumerate(est.per_replica)]
            # shared noise makes the estimates ordered sample by sample
            pr = sweep.per_replica
            checks["monotone"] &= bool(np.all(np.diff(pr, axis=1) <= 0))
    except OSError as exc:  # pragma: no cover - surfaced with partial results
        partial = str(exc)
    if len(p["ns"]) >= 2:
        for r in rs:
            sel = [row for row in rows if row["r"] == r]
            a, b = lpp.fit_finite_size([row["n"] for row in sel], [row["mean"] for row in sel])
            fits[str(r)] = {"a": a, "b": b}
    header = ["r", "n", "mean", "stderr", "lower", "upper", "replicas", "within_bounds"]
    out.csv("kappa_sweep", header, [[row[h] for h in header] for row in rows])
    out.csv("kappa_replicas", ["r", "n", "replica", "T_over_n"], per_rep)
    rep = SweepReport(rows, fits, all(checks.values()) and partial is None, checks,
                      config.config_hash, config.seed)
    out.json("kappa_sweep", {**asdict(rep), "error": partial})
    return rep


def _se(est: lpp.KappaEstimate) -> float:
    return 0.0 if math.isnan(est.stderr) else est.stderr


def run_shape(config: ExperimentConfig) -> dict:
    p = config.params
    out = Writer(config)
    rows = []
    for x, y in p["points"]:
        vals = [lpp.shape_probe(x, y, int(p["n"]), 1.0, config.seed, k) for k in range(int(p["replicas"]))]
        exact = (math.sqrt(x) + math.sqrt(y)) ** 2
        mean = float(np.mean(vals))
        rows.append({"x": x, "y": y, "mean": mean, "exact": exact,
                     "rel_error": abs(mean - exact) / exact})
    header = ["x", "y", "mean", "exact", "rel_error"]
    out.csv("shape", header, [[row[h] for h in header] for row in rows])
    rep = {"rows": rows, "passed": all(r["rel_error"] <= p["tolerance"] for r in rows),
           "config_hash": config.config_hash, "seed": config.seed}
    out.json("shape", rep)
    return rep


# ---------------------------------------------------------------------------
# micro versus macro


@dataclass
class WindowResult:
    a: float
    b: float
    empirical: float
    predicted: float
    discrepancy: float


@dataclass
class CurrentResult:
    a: float
    empirical: float
    predicted: float
    discrepancy: float


@dataclass
class ComparisonReport:
    n: int
    t: float
    r: float
    L: int
    kappa: dict
    lambda0: float
    windows: list[WindowResult]
    currents: list[CurrentResult]
    sup_density: float
    l1_density: float
    sup_current: float
    density_tol: float
    current_tol: float
    passed: bool
    seed: int
    config_hash: str
    runtime: float
    replicas: int = 1
    events: int = 0
    extra: dict = field(default_factory=dict)


def plateau_windows(rho: float, rate: hydro.MacroRate, t: float, inset: float = 0.1):
    """Interior windows of the two critical-density plateaus of a flat profile.

    The upper plateau occupies ``[-t(rho - rho*), 0]`` and the lower one
    ``[0, t(1 - rho* - rho)]``; each window drops ``inset`` of its plateau
    length at both ends, where the moving shock and the origin smear it.
    """
    rs = rate.rho_star
    if not (rs < rho < 1 - rs):
        return []
    left, right = -t * (rho - rs), t * (1 - rs - rho)
    return [[left * (1 - inset), left * inset], [right * inset, right * (1 - inset)]]


def predictions(profile: hydro.MacroProfile, rate: hydro.MacroRate, t: float,
                windows, points) -> tuple[list[float], list[float]]:
    """Predicted ``int_a^b rho(x, t) dx`` per window and ``v0(a) - v(a, t)`` per point."""
    if t == 0:
        dens = [float(profile(b) - profile(a)) for a, b in windows]
        return dens, [0.0 for _ in points]
    xs = sorted({float(x) for w in windows for x in w} | {float(a) for a in points})
    sol = hydro.value_function(profile, t, rate, xs, method="exact")
    v = dict(zip(xs, sol.v))
    dens = [v[float(b)] - v[float(a)] for a, b in windows]
    cur = [float(profile(a)) - v[float(a)] for a in points]
    return dens, cur


def _empirical(config, profile, rate, windows, points, L):
    """Replica-averaged window densities and currents on the sites ``-L..L``."""
    p = config.params
    n, t, r = int(p["n"]), float(p["t"]), float(p["r"])
    reps = int(p["replicas"])
    emp_d = np.zeros(len(windows))
    emp_c = np.zeros(len(points))
    events = 0
    for k in range(reps):
        if p["initial"] == "deterministic":
            occ = tasep.init_deterministic(profile, n, (-L, L))
        else:
            occ = tasep.init_from_profile(profile, n, (-L, L), config.seed, k)
        clocks = tasep.BondClocks.single(_sub_seed(config.seed, k, 1), r)
        proc = tasep.ExclusionProcess(occ, clocks).advance(n * t)
        events += proc.events
        state = proc.occupancies()
        emp_d += [tasep.measure_density(state, a, b, n) for a, b in windows]
        emp_c += [proc.current(math.floor(n * a)) / n for a in points]
    return emp_d / reps, emp_c / reps, events


def run_compare(config: ExperimentConfig) -> ComparisonReport:
    p = config.params
    start = time.perf_counter()
    n, t, r = int(p["n"]), float(p["t"]), float(p["r"])
    kappa = _kappa_for(p, r, config.seed, config.threads)
    rate = hydro.MacroRate.from_kappa(kappa["value"])
    profile = (hydro.MacroProfile.from_json(p["profile"]) if p["profile"] is not None
               else hydro.MacroProfile.flat(float(p["rho"])))
    windows = [list(map(float, w)) for w in (p["windows"] or [])]
    if p["plateaus"]:
        windows += plateau_windows(float(p["rho"]), rate, t, float(p["plateau_inset"]))
    points = [float(a) for a in p["current_points"]]
    reach = max([abs(x) for w in windows for x in w] + [abs(a) for a in points] + [0.0])
    L = int(p["L"]) if p["L"] is not None else int(n * (reach + 2 * t)) + 100
    if n * reach + 2 > L:
        raise ParameterError(f"observation range {n * reach} does not fit the window L={L}")

    pred_d, pred_c = predictions(profile, rate, t, windows, points)
    emp_d, emp_c, events = _empirical(config, profile, rate, windows, points, L)
    extra = {"rho_star": rate.rho_star}
    if p["second_L"] is not None:
        # same seeds on another window; the gap should be statistical noise only
        L2 = int(p["second_L"])
        if n * reach + 2 > L2:
            raise ParameterError(f"observation range {n * reach} does not fit second_L={L2}")
        d2, c2, ev2 = _empirical(config, profile, rate, windows, points, L2)
        events += ev2
        widths = np.array([b - a for a, b in windows])
        extra["second_L"] = {"L": L2,
                             "density_gap": float(np.max(np.abs(emp_d - d2) / widths, initial=0.0)),
                             "current_gap": float(np.max(np.abs(emp_c - c2), initial=0.0))}
    wres = [WindowResult(a, b, float(e), float(q), abs(e - q) / (b - a))
            for (a, b), e, q in zip(windows, emp_d, pred_d)]
    cres = [CurrentResult(a, float(e), float(q), abs(e - q)) for a, e, q in zip(points, emp_c, pred_c)]
    sup_d = max([w.discrepancy for w in wres], default=0.0)
    l1_d = float(sum(abs(w.empirical - w.predicted) for w in wres))
    sup_c = max([c.discrepancy for c in cres], default=0.0)
    passed = sup_d <= p["density_tol"] and sup_c <= p["current_tol"]
    rep = ComparisonReport(n, t, r, L, kappa, rate.lambda0, wres, cres, sup_d, l1_d, sup_c,
                           float(p["density_tol"]), float(p["current_tol"]), bool(passed),
                           config.seed, config.config_hash, time.perf_counter() - start,
                           int(p["replicas"]), events, extra)
    out = Writer(config)
    out.csv("compare_density", ["a", "b", "empirical", "predicted", "discrepancy"],
            [[w.a, w.b, w.empirical, w.predicted, w.discrepancy] for w in wres])
    out.csv("compare_current", ["a", "empirical", "predicted", "discrepancy"],
            [[c.a, c.empirical, c.predicted, c.discrepancy] for c in cres])
    out.json("compare", asdict(rep))
    return rep


# ---------------------------------------------------------------------------
# invariance


def default_invariance_profiles(rate: hydro.MacroRate) -> list[dict]:
    rs = rate.rho_star
    return [
        {"name": "flat_rho_star", "profile": hydro.MacroProfile.flat(rs).to_json(), "expect": "pass"},
        {"name": "entropy_shock_0.5",
         "profile": hydro.MacroProfile.from_densities([0.5], [rs, 1 - rs]).to_json(), "expect": "pass"},
        {"name": "non_entropy_shock_0",
         "profile": hydro.MacroProfile.from_densities([0.0], [1 - rs, rs]).to_json(), "expect": "pass"},
        {"name": "non_entropy_shock_0.5",
         "profile": hydro.MacroProfile.from_densities([0.5], [1 - rs, rs]).to_json(), "expect": "fail"},
    ]


def shock_profile_stats(occ: tasep.Occupancies, n: int, lo_x: float, hi_x: float,
                        rho_lo: float, rho_hi: float, cell: float = 0.05) -> dict:
    """Location and width of a down-step from ``rho_hi`` to ``rho_lo``.

    Block densities on cells of width ``cell`` are scanned for the first
    crossings of the three levels a quarter, half and three quarters of the
    way down; the half crossing is the location and the spread between the
    outer two the width.
    """
    edges = np.arange(lo_x, hi_x + 1e-12, cell)
    dens = np.array([tasep.measure_density(occ, a, a + cell, n) / cell for a in edges[:-1]])
    mids = edges[:-1] + cell / 2
    gap = rho_hi - rho_lo

    def crossing(level):
        below = np.nonzero(dens <= level)[0]
        return float(mids[below[0]]) if below.size else float("nan")

    q1, q2, q3 = (crossing(rho_hi - f * gap) for f in (0.25, 0.5, 0.75))
    return {"location": q2, "width": q3 - q1}


def run_invariance(config: ExperimentConfig) -> dict:
    p = config.params
    kappa = None
    if p["lambda0"] is not None:
        rate = hydro.MacroRate(float(p["lambda0"]))
    else:
        kappa = _kappa_for(p, float(p["r"]), config.seed, config.threads)
        rate = hydro.MacroRate.from_kappa(kappa["value"])
    profiles = p["profiles"] or default_invariance_profiles(rate)
    results = []
    passed = True
    for entry in profiles:
        prof = hydro.MacroProfile.from_json(entry["profile"])
        rep = hydro.invariance_check(prof, rate, p["times"], tol=float(p["tolerance"]))
        expect = entry.get("expect")
        ok = expect is None or (expect == "pass") == rep.passed
        passed &= ok
        results.append({"name": entry["name"], "invariant": rep.passed,
                        "max_deviation": rep.max_deviation, "first_failing_t": rep.first_failing_t,
                        "jumps": [asdict(j) for j in rep.jumps], "expect": expect,
                        "as_expected": ok})
    drift = simulate_shocks(p["simulate"], rate, p, config) if p["simulate"] else None
    out = Writer(config)
    out.csv("invariance", ["name", "invariant", "first_failing_t", "expect"],
            [[r["name"], r["invariant"], r["first_failing_t"], r["expect"]] for r in results])
    report = {"lambda0": rate.lambda0, "rho_star": rate.rho_star, "kappa": kappa,
              "profiles": results, "shock_drift": drift, "passed": bool(passed),
              "config_hash": config.config_hash, "seed": config.seed}
    out.json("invariance", report)
    return report


def simulate_shocks(sim: dict, rate: hydro.MacroRate, p: dict, config: ExperimentConfig) -> list[dict]:
    """Run the down-step from ``1 - rho*`` to ``rho*`` at each requested location.

    Qualitative: at the origin the step should stay sharp; elsewhere it opens
    into a fan whose width grows like ``2 B t``.
    """
    r = float(sim.get("r", p["r"]))
    n, t = int(sim["n"]), float(sim["t"])
    rs = rate.rho_star
    out = []
    for x0 in sim.get("locations", [0.0, 0.5]):
        prof = hydro.MacroProfile.from_densities([x0], [1 - rs, rs])
        span = abs(x0) + 1.0
        L = int(n * (span + 2 * t)) + 100
        occ = tasep.init_from_profile(prof, n, (-L, L), config.seed)
        clocks = tasep.BondClocks.single(_sub_seed(config.seed, 7), r)
        proc = tasep.ExclusionProcess(occ, clocks)
        rows = []
        for s in np.linspace(0, t, 5):
            proc.advance(n * s)
            stats = shock_profile_stats(proc.occupancies(), n, x0 - span, x0 + span, rs, 1 - rs)
            rows.append({"t": float(s), **stats})
        out.append({"x0": x0, "trajectory": rows,
                    "drift": rows[-1]["location"] - rows[0]["location"],
                    "width_growth": rows[-1]["width"] - rows[0]["width"]})
    return out


# ---------------------------------------------------------------------------
# pair correlation


def run_paircorr(config: ExperimentConfig) -> dict:
    p = config.params
    rho, r = float(p["rho"]), float(p["r"])
    start = time.perf_counter()
    kappa = _kappa_for(p, r, config.seed, config.threads) if r < 1 else None
    rho_star = hydro.MacroRate.from_kappa(kappa["value"]).rho_star if kappa else 0.5
    pc = tasep.stationary_pair_correlation(rho, r, int(p["sites"]), float(p["burn_in"]),
                                           float(p["horizon"]), _sub_seed(config.seed, 3),
                                           rho_star=rho_star, bonds=p["bonds"])
    rows = []
    for b, est, rate in zip(pc.bonds, pc.estimates, pc.rates):
        expected = rho * (1 - rho) / rate
        rows.append({"bond": int(b), "estimate": float(est), "expected": expected,
                     "error": abs(float(est) - expected)})
    passed = all(row["error"] <= p["tolerance"] for row in rows) and not pc.flagged
    out = Writer(config)
    out.csv("paircorr", ["bond", "estimate", "expected", "error"],
            [[row[h] for h in ("bond", "estimate", "expected", "error")] for row in rows])
    report = {"rows": rows, "flagged": pc.flagged, "rho_star": rho_star, "kappa": kappa,
              "passed": bool(passed), "runtime": time.perf_counter() - start,
              "config_hash": config.config_hash, "seed": config.seed}
    out.json("paircorr", report)
    return report


RUNNERS = {"kappa_sweep": run_kappa_sweep, "shape": run_shape, "compare": run_compare,
           "invariance": run_invariance, "paircorr": run_paircorr}


def run(config: ExperimentConfig):
    return RUNNERS[config.kind](config)
