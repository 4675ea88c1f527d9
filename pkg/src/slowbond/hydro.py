"""Macroscopic objects of the slow-bond exclusion process.

The value function is

    v(x, t) = sup_q { v0(q) - I(x, t, q) },

where ``I`` is the least control cost of moving from ``q`` to ``x`` in time
``t`` when the running cost is ``g0(w')`` away from the origin and
``lambda0 * g0(w'/lambda0)`` on it. ``I`` is evaluated in closed form
(:func:`cost_I`). An independent route goes through the wedge passage-time
functional ``Gamma^q`` and its level curve ``g^q`` (:func:`big_gamma`,
:func:`level_g`), which must reproduce ``I(x, t, q) = g^{-q}(x - q, t)``.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from slowbond.errors import DomainError, ParameterError, PreconditionError

_SLOPE_TOL = 1e-9


# ---------------------------------------------------------------------------
# rate and profile


@dataclass(frozen=True)
class MacroRate:
    """Macroscopic rate at the defect, with the derived constants."""

    lambda0: float

    def __post_init__(self):
        if not (0.0 < self.lambda0 <= 1.0):
            raise ParameterError(f"lambda0 must lie in (0, 1], got {self.lambda0}")

    @property
    def B(self) -> float:
        return math.sqrt(1.0 - self.lambda0)

    @property
    def rho_star(self) -> float:
        return 0.5 - 0.5 * self.B

    @property
    def kappa(self) -> float:
        return 4.0 / self.lambda0

    @classmethod
    def from_kappa(cls, kappa: float, tolerance: float = 0.25) -> "MacroRate":
        from slowbond.lpp import lambda0_from_kappa

        return cls(lambda0_from_kappa(kappa, tolerance))


HOMOGENEOUS = MacroRate(1.0)


@dataclass(frozen=True)
class MacroProfile:
    """Piecewise-linear ``v0``: breakpoints, values there, and tail slopes.

    Slopes are densities and must lie in ``[0, 1]``.
    """

    breaks: np.ndarray
    values: np.ndarray
    left_slope: float
    right_slope: float
    # exact inner densities when known; otherwise recomputed from the values
    inner: tuple[float, ...] | None = None

    def __post_init__(self):
        b = np.asarray(self.breaks, dtype=float)
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "breaks", b)
        object.__setattr__(self, "values", v)
        if b.shape != v.shape or b.ndim != 1:
            raise ParameterError("breaks and values must be 1-d arrays of equal length")
        if b.size > 1 and np.any(np.diff(b) <= 0):
            raise ParameterError("breakpoints must be strictly increasing")
        for s in self.slopes():
            if not (-_SLOPE_TOL <= s <= 1.0 + _SLOPE_TOL):
                raise ParameterError(f"density {s} is outside [0, 1]")

    @classmethod
    def flat(cls, rho: float) -> "MacroProfile":
        return cls.from_densities([], [rho])

    @classmethod
    def from_densities(cls, breaks: Sequence[float], densities: Sequence[float]) -> "MacroProfile":
        """Piecewise-constant density: ``densities[k]`` on ``(breaks[k-1], breaks[k])``.

        ``densities`` has one more entry than ``breaks``; the first and last
        entries are the tail densities. The antiderivative is normalized by
        ``v0(0) = 0``.
        """
        b = np.asarray(breaks, dtype=float)
        d = np.asarray(densities, dtype=float)
        if d.size != b.size + 1:
            raise ParameterError("need exactly one more density than breakpoints")
        if np.any(d < 0) or np.any(d > 1):
            raise ParameterError("densities must lie in [0, 1]")
        vals = np.concatenate([[0.0], np.cumsum(d[1:-1] * np.diff(b))]) if b.size else b.copy()
        inner = tuple(float(x) for x in d[1:-1])
        prof = cls(b, vals, float(d[0]), float(d[-1]), inner)
        if b.size:
            prof = cls(b, vals - float(prof(0.0)), float(d[0]), float(d[-1]), inner)
        return prof

    @classmethod
    def from_values(cls, xs: Sequence[float], vs: Sequence[float], left_slope: float,
                    right_slope: float) -> "MacroProfile":
        """Interpolating profile through ``(xs, vs)``, shifted so that ``v0(0) = 0``."""
        xs = np.asarray(xs, dtype=float)
        vs = np.asarray(vs, dtype=float)
        prof = cls(xs, vs, left_slope, right_slope)
        return cls(xs, vs - float(prof(0.0)), left_slope, right_slope)

    @classmethod
    def from_json(cls, obj: dict | str) -> "MacroProfile":
        """``{"left_density": d0, "segments": [{"x": x1, "density": d1}, ...]}``.

        Each segment's density holds from its ``x`` to the next segment's ``x``;
        the last one extends to ``+inf``.
        """
        if isinstance(obj, str):
            obj = json.loads(obj)
        segs = sorted(obj.get("segments", []), key=lambda s: s["x"])
        breaks = [float(s["x"]) for s in segs]
        dens = [float(obj["left_density"])] + [float(s["density"]) for s in segs]
        return cls.from_densities(breaks, dens)

    def to_json(self) -> dict:
        dens = self.slopes()
        return {
            "left_density": dens[0],
            "segments": [{"x": float(x), "density": d} for x, d in zip(self.breaks, dens[1:])],
        }

    def slopes(self) -> list[float]:
        if self.inner is not None:
            inner = list(self.inner)
        else:
            inner = list(np.diff(self.values) / np.diff(self.breaks)) if self.breaks.size > 1 else []
        return [float(self.left_slope)] + [float(s) for s in inner] + [float(self.right_slope)]

    def __call__(self, q):
        q = np.asarray(q, dtype=float)
        b, v = self.breaks, self.values
        if b.size == 0:
            # pure tail: the two slopes coincide for flat profiles
            return np.where(q < 0, self.left_slope * q, self.right_slope * q)
        out = np.interp(q, b, v)
        out = np.where(q < b[0], v[0] + self.left_slope * (q - b[0]), out)
        out = np.where(q > b[-1], v[-1] + self.right_slope * (q - b[-1]), out)
        return out

    def density(self, x) -> np.ndarray:
        """Right-continuous density at ``x``."""
        x = np.asarray(x, dtype=float)
        k = np.searchsorted(self.breaks, x, side="right")
        return np.asarray(self.slopes())[k]

    def integral(self, a, b):
        return self(b) - self(a)


# ---------------------------------------------------------------------------
# flux, conjugate, homogeneous passage shape


def f0(rho):
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0) or np.any(rho > 1):
        raise DomainError("density outside [0, 1]")
    out = rho * (1.0 - rho)
    return float(out) if out.ndim == 0 else out


def g0(x):
    """Legendre conjugate ``sup_{0<=rho<=1} {rho (1 - rho) - x rho}``."""
    x = np.asarray(x, dtype=float)
    out = np.where(x <= -1.0, -x, np.where(x >= 1.0, 0.0, 0.25 * (1.0 - x) ** 2))
    return float(out) if out.ndim == 0 else out


def gamma0(x, y):
    """Homogeneous wedge passage shape ``(sqrt(x + y) + sqrt(y))^2`` on ``y >= 0, x >= -y``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(y < 0) or np.any(x < -y):
        raise DomainError("point outside the wedge y >= 0, x >= -y")
    out = (np.sqrt(x + y) + np.sqrt(y)) ** 2
    return float(out) if out.ndim == 0 else out


def _gamma0(x: float, y: float) -> float:
    # scalar fast path; callers guarantee the domain up to rounding
    return (math.sqrt(max(x + y, 0.0)) + math.sqrt(max(y, 0.0))) ** 2


# ---------------------------------------------------------------------------
# control cost in closed form


def _check_t(t: float) -> float:
    t = float(t)
    if not t > 0:
        raise DomainError(f"time must be positive, got {t}")
    return t


def classify_case(x: float, t: float, q: float, rate: MacroRate) -> str:
    """Which of the five (x, q) ranges the pair falls in: 'a' .. 'e'."""
    t = _check_t(t)
    bt = rate.B * t
    if abs(x) >= bt:
        return "a"
    inner = (math.sqrt(bt) - math.sqrt(abs(x))) ** 2
    if x >= 0:
        return "d" if x - bt < q < inner else "b"
    return "e" if -inner < q < x + bt else "c"


def cost_I(x, t: float, q, rate: MacroRate):
    """Least control cost from ``q`` to ``x`` in time ``t`` (vectorized in x and q).

    Away from the defect the optimum is the straight path with cost
    ``t g0((x - q)/t)``. When ``|x| < B t`` and ``q`` lies in the matching
    window, the optimum runs to the origin at speed ``B``, waits there, and
    leaves at speed ``B``, with cost ``B(|x| + |q|)/2 - (x - q)/2 + t lambda0/4``.
    """
    t = _check_t(t)
    x, q = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(q, dtype=float))
    straight = t * g0((x - q) / t)
    B = rate.B
    if B == 0.0:
        out = np.asarray(straight)
    else:
        bt = B * t
        ax = np.abs(x)
        inner = (math.sqrt(bt) - np.sqrt(ax)) ** 2
        case_d = (x >= 0) & (x < bt) & (q > x - bt) & (q < inner)
        case_e = (x <= 0) & (x > -bt) & (q > -inner) & (q < x + bt)
        three = 0.5 * B * (ax + np.abs(q)) - 0.5 * (x - q) + 0.25 * t * rate.lambda0
        out = np.where(case_d | case_e, three, straight)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class PathDescription:
    """Optimal control path from ``q`` (time 0) to ``x`` (time ``t``).

    For the three-segment kind the path reaches the origin at ``s1``, stays
    there until ``s2`` and then moves straight to ``x``.
    """

    kind: str
    q: float
    x: float
    t: float
    s1: float
    s2: float
    value: float

    def position(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == "straight":
            return self.q + (s / self.t) * (self.x - self.q)
        # both branches are evaluated; the one not selected may overflow
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            first = self.q * (1.0 - s / self.s1) if self.s1 > 0 else np.zeros_like(s)
            last = (s - self.s2) * self.x / (self.t - self.s2) if self.t > self.s2 else np.zeros_like(s)
            return np.where(s < self.s1, first, np.where(s < self.s2, 0.0, last))


def optimal_path(x: float, t: float, q: float, rate: MacroRate) -> PathDescription:
    """Optimal path and its cost, integrated segment by segment."""
    t = _check_t(t)
    case = classify_case(x, t, q, rate)
    if case in "abc":
        value = t * g0((x - q) / t)
        return PathDescription("straight", q, x, t, 0.0, t, float(value))
    B = rate.B
    s1 = abs(q) / B
    s2 = t - abs(x) / B
    first = s1 * g0(-q / s1) if s1 > 0 else 0.0
    wait = (s2 - s1) * rate.lambda0 * g0(0.0)
    last = (t - s2) * g0(x / (t - s2)) if t > s2 else 0.0
    return PathDescription("three-segment", q, x, t, s1, s2, float(first + wait + last))


# ---------------------------------------------------------------------------
# wedge functional and its level curve


def _argmax_concave(fun, lo: float, hi: float) -> tuple[float, float]:
    """Maximize a concave function on ``[lo, hi]``; returns ``(argmax, max)``."""
    if hi - lo <= 1e-15 * max(1.0, abs(lo)):
        return lo, fun(lo)
    res = minimize_scalar(lambda c: -fun(c), bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-12 * max(1.0, hi - lo), "maxiter": 500})
    best_c, best_v = float(res.x), -float(res.fun)
    for c in (lo, hi):
        v = fun(c)
        if v > best_v:
            best_c, best_v = c, v
    return best_c, best_v


def _piece_cap(a: float, kappa: float) -> float:
    """A point beyond the maximizer of ``gamma0(a, c) - kappa c`` over ``c``.

    The ``c``-derivative of ``gamma0(a, c)`` is ``2 + rho + 1/rho`` with
    ``rho = sqrt(1 + a/c)``, which falls to 4 as ``c`` grows. It equals ``kappa``
    at ``rho`` solving ``rho + 1/rho = kappa - 2``; the cap doubles that point.
    """
    if a == 0.0:
        return 0.0
    s = kappa - 2.0
    disc = math.sqrt(max(s * s - 4.0, 0.0))
    rho = 0.5 * (s + disc) if a > 0 else 0.5 * (s - disc)
    denom = rho * rho - 1.0
    if denom == 0.0:
        return math.inf
    return 2.0 * a / denom + 1.0


def big_gamma(q: float, x: float, y: float, rate: MacroRate) -> float:
    """Macroscopic passage time to ``(x, y)`` with the slow column at ``q``.

    Maximum of the straight path value ``gamma0(x, y)`` and the best path that
    walks to the column, climbs it from height ``b1`` to ``b2`` at speed
    ``kappa = 4/lambda0``, and then walks to ``(x, y)``. With
    ``c1 = b1`` and ``c2 = y - b2`` the climbing path's value separates into
    ``kappa y + [gamma0(q, c1) - kappa c1] + [gamma0(x - q, c2) - kappa c2]``
    under the single coupling constraint ``c1 + c2 <= y``; both brackets are
    concave, so each is maximized by a bounded 1-d search and, if the two
    maximizers collide, the search is repeated on the line ``c1 + c2 = y``.
    """
    if y < 0 or x < -y:
        raise DomainError(f"({x}, {y}) is outside the wedge")
    straight = _gamma0(x, y)
    if rate.lambda0 == 1.0:
        return straight
    kappa = rate.kappa
    lo1 = max(0.0, -q)
    lo2 = max(0.0, q - x)
    if lo1 + lo2 > y:
        return straight

    def piece1(c):
        return _gamma0(q, c) - kappa * c

    def piece2(c):
        return _gamma0(x - q, c) - kappa * c

    hi1 = min(y - lo2, max(lo1, _piece_cap(q, kappa)))
    hi2 = min(y - lo1, max(lo2, _piece_cap(x - q, kappa)))
    c1, v1 = _argmax_concave(piece1, lo1, hi1)
    c2, v2 = _argmax_concave(piece2, lo2, hi2)
    if c1 + c2 <= y:
        climb = kappa * y + v1 + v2
    else:
        _, v = _argmax_concave(lambda c: piece1(c) + piece2(y - c), lo1, y - lo2)
        climb = kappa * y + v
    return max(straight, climb)


def level_g(q: float, x: float, t: float, rate: MacroRate) -> float:
    """``inf{y : Gamma^q(x, y) >= t}`` by bracketing root search in ``y``.

    ``Gamma^q(x, .)`` is continuous and strictly increasing, so a sign-change
    bracket plus Brent's method converges to the level point.
    """
    t = _check_t(t)
    y_lo = max(0.0, -x)
    if big_gamma(q, x, y_lo, rate) >= t:
        return y_lo
    y_hi = max(y_lo, 0.5 * (t - x)) + 1.0
    while big_gamma(q, x, y_hi, rate) < t:
        y_hi = 2.0 * y_hi + 1.0
    return float(brentq(lambda y: big_gamma(q, x, y, rate) - t, y_lo, y_hi,
                        xtol=1e-12, rtol=4 * np.finfo(float).eps, maxiter=500))


# ---------------------------------------------------------------------------
# value function


@dataclass(frozen=True)
class HydroSolution:
    x: np.ndarray
    t: float
    v: np.ndarray
    lambda0: float
    argmax_q: np.ndarray
    rho: np.ndarray | None = field(default=None)


def _q_window(x: float, t: float, B: float) -> tuple[float, float]:
    # Outside [x - t, x + t] the objective moves monotonically toward the
    # window: for q <= x - t the cost is 0 and v0 is nondecreasing; for
    # q >= x + t the cost grows with slope 1 >= any density. The defect
    # windows |q| < B t sit inside [-t, t], and a margin is kept on both sides.
    delta = 1e-9 * max(1.0, t)
    return min(x - t, -B * t) - delta, max(x + t, B * t) + delta


def _candidates(profile: MacroProfile, x: float, t: float, rate: MacroRate) -> np.ndarray:
    """Points containing a maximizer of ``v0(q) - I(x, t, q)``.

    Between consecutive kinks the objective is either linear in ``q`` or a
    linear function minus the concave-up quadratic ``(t - x + q)^2 / (4t)``,
    so its maximum sits at a kink or at a stationary point
    ``q = x - t + 2 t rho`` for one of the profile's densities ``rho``.
    """
    B = rate.B
    bt = B * t
    lo, hi = _q_window(x, t, B)
    inner = (math.sqrt(bt) - math.sqrt(abs(x))) ** 2
    pts = [lo, hi, x - t, x + t, 0.0, x - bt, x + bt, inner, -inner]
    pts.extend(x - t + 2.0 * t * np.asarray(profile.slopes()))
    pts.extend(profile.breaks)
    c = np.asarray(pts, dtype=float)
    return c[(c >= lo) & (c <= hi)]


def _sup_exact(profile: MacroProfile, x: float, t: float, rate: MacroRate) -> tuple[float, float]:
    q = _candidates(profile, x, t, rate)
    obj = profile(q) - cost_I(x, t, q, rate)
    k = int(np.argmax(obj))
    return float(obj[k]), float(q[k])


def _sup_grid(profile: MacroProfile, x: float, t: float, rate: MacroRate,
              points: int = 20001) -> tuple[float, float]:
    lo, hi = _q_window(x, t, rate.B)
    q = np.linspace(lo, hi, points)
    obj = profile(q) - cost_I(x, t, q, rate)
    k = int(np.argmax(obj))
    a, b = q[max(k - 2, 0)], q[min(k + 2, points - 1)]
    res = minimize_scalar(lambda s: -(float(profile(s)) - cost_I(x, t, s, rate)),
                          bounds=(a, b), method="bounded", options={"xatol": 1e-10})
    if -res.fun >= obj[k]:
        return float(-res.fun), float(res.x)
    return float(obj[k]), float(q[k])


def value_function(profile: MacroProfile, t: float, rate: MacroRate, x_grid: Iterable[float],
                   method: str = "exact") -> HydroSolution:
    """``v(x, t) = sup_q {v0(q) - I(x, t, q)}`` on a mesh.

    ``method="exact"`` evaluates the objective at every candidate maximizer
    (see :func:`_candidates`); ``method="grid"`` scans a dense grid and
    refines the best cell, as a check on the first.
    """
    t = _check_t(t)
    xs = np.asarray(list(x_grid), dtype=float)
    sup = {"exact": _sup_exact, "grid": _sup_grid}[method]
    vals = np.empty_like(xs)
    arg = np.empty_like(xs)
    for k, x in enumerate(xs):
        vals[k], arg[k] = sup(profile, float(x), t, rate)
    sol = HydroSolution(x=xs, t=t, v=vals, lambda0=rate.lambda0, argmax_q=arg)
    if xs.size >= 2 and np.all(np.diff(xs) > 0):
        sol = HydroSolution(xs, t, vals, rate.lambda0, arg, density(sol))
    return sol


def density(solution: HydroSolution, eps: float = 1e-6) -> np.ndarray:
    """Finite-difference density of ``v(., t)``.

    Interior points use ``(v[k+1] - v[k-1]) / (x[k+1] - x[k-1])``, a convex
    combination of the two adjacent slopes; the endpoints are one-sided.
    """
    x, v = solution.x, solution.v
    if x.size < 2 or np.any(np.diff(x) <= 0):
        raise ParameterError("density needs a strictly increasing mesh of at least 2 points")
    rho = np.empty_like(v)
    rho[0] = (v[1] - v[0]) / (x[1] - x[0])
    rho[-1] = (v[-1] - v[-2]) / (x[-1] - x[-2])
    if x.size > 2:
        rho[1:-1] = (v[2:] - v[:-2]) / (x[2:] - x[:-2])
    if np.any(rho < -eps) or np.any(rho > 1 + eps):
        warnings.warn("finite-difference density leaves [0, 1]; clamping", RuntimeWarning)
    return np.clip(rho, -eps, 1.0 + eps)


def flat_profile_oracle(rho: float, rate: MacroRate, x: float, t: float) -> float:
    """Closed-form ``v(x, t)`` for the constant initial density ``rho``."""
    t = _check_t(t)
    if not (0.0 <= rho <= 1.0):
        raise DomainError("density outside [0, 1]")
    rs = rate.rho_star
    case1 = rho * x - t * rho * (1.0 - rho)
    if rate.lambda0 == 1.0 or rho <= rs or rho >= 1.0 - rs:
        return case1
    if -t * (rho - rs) <= x <= 0.0:
        return (1.0 - rs) * x - t * rate.lambda0 / 4.0
    if 0.0 < x <= t * (1.0 - rs - rho):
        return rs * x - t * rate.lambda0 / 4.0
    return case1


# ---------------------------------------------------------------------------
# invariant profiles


@dataclass(frozen=True)
class Jump:
    x: float
    left: float
    right: float
    kind: str
    admissible: bool


@dataclass(frozen=True)
class InvarianceReport:
    passed: bool
    tolerance: float
    max_deviation: dict[float, float]
    first_failing_t: float | None
    jumps: list[Jump]


def classify_jumps(profile: MacroProfile, rate: MacroRate, tol: float = 1e-9) -> list[Jump]:
    rs = rate.rho_star
    dens = profile.slopes()
    out = []
    for x, left, right in zip(profile.breaks, dens[:-1], dens[1:]):
        if abs(left - right) <= tol:
            continue
        if abs(left - rs) <= tol and abs(right - (1 - rs)) <= tol:
            out.append(Jump(float(x), left, right, "entropy", True))
        elif abs(left - (1 - rs)) <= tol and abs(right - rs) <= tol:
            out.append(Jump(float(x), left, right, "non-entropy", abs(x) <= tol))
        else:
            out.append(Jump(float(x), left, right, "other", False))
    return out


def invariance_check(profile: MacroProfile, rate: MacroRate, t_list: Sequence[float],
                     x_grid: Sequence[float] | None = None, tol: float = 1e-6) -> InvarianceReport:
    """Compare ``v(x, t)`` with ``v0(x) - t lambda0 / 4`` on a mesh at each time."""
    rs = rate.rho_star
    for d in profile.slopes():
        if d < rs - 1e-12 or d > 1 - rs + 1e-12:
            raise PreconditionError(f"density {d} outside [{rs}, {1 - rs}]")
    if x_grid is None:
        span = np.concatenate([profile.breaks, [0.0]])
        x_grid = np.union1d(np.linspace(span.min() - 2.0, span.max() + 2.0, 401), profile.breaks)
    xs = np.asarray(x_grid, dtype=float)
    devs: dict[float, float] = {}
    first_fail = None
    for t in t_list:
        sol = value_function(profile, t, rate, xs)
        dev = float(np.max(np.abs(sol.v - (profile(xs) - t * rate.lambda0 / 4.0))))
        devs[float(t)] = dev
        if dev > tol and first_fail is None:
            first_fail = float(t)
    return InvarianceReport(first_fail is None, tol, devs, first_fail, classify_jumps(profile, rate))
