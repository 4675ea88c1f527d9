"""Last-passage percolation with a slow diagonal (quadrant) or slow column (wedge).

Coordinates at the public API follow the lattice conventions of the model:
quadrant sites are ``(i, j)`` with ``1 <= i, j <= n`` and the path starts at
``(1, 1)``; wedge sites are ``(i, j)`` with ``j >= 1`` and ``i >= 1 - j`` and
the path starts at ``(0, 1)``. Arrays are stored 0-based internally.

Only passage *values* are computed. No geodesic is extracted, so the way the
``max`` recursion breaks ties does not matter.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numba import njit

from slowbond._rng import grid_rng
from slowbond.errors import DomainError, OracleCapError, ParameterError

KAPPA_ONE = 4.0
DEFAULT_PATH_CAP = 10**6
_ROW_BLOCK = 256


def _check_rate(r: float) -> float:
    r = float(r)
    if not (0.0 < r <= 1.0):
        raise ParameterError(f"slow rate must lie in (0, 1], got {r}")
    return r


def _check_size(n: int, name: str = "n") -> int:
    if int(n) != n or n < 1:
        raise ParameterError(f"{name} must be a positive integer, got {n}")
    return int(n)


# ---------------------------------------------------------------------------
# data types


@dataclass(frozen=True)
class QuadrantGrid:
    """``n x n`` unit exponentials; the diagonal weight is ``1/r``.

    ``samples[i-1, j-1]`` holds the sample of site ``(i, j)``.
    """

    n: int
    r: float
    samples: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        _check_size(self.n)
        _check_rate(self.r)
        s = self.samples
        if s.shape != (self.n, self.n):
            raise ParameterError(f"samples must have shape {(self.n, self.n)}, got {s.shape}")
        if not (np.all(np.isfinite(s)) and np.all(s > 0)):
            raise ParameterError("samples must be strictly positive and finite")

    def weight(self, i: int, j: int) -> float:
        y = float(self.samples[i - 1, j - 1])
        return y / self.r if i == j else y

    def effective(self) -> np.ndarray:
        eff = self.samples.copy()
        d = np.arange(self.n)
        eff[d, d] = eff[d, d] / self.r
        return eff


@dataclass(frozen=True)
class WedgeGrid:
    """Unit exponentials on the wedge lattice, truncated to ``i <= i_max``.

    The lattice is ``{(i, j): 1 <= j <= j_max, i >= 1 - j}``. Column ``m``
    carries weight ``1/r``. ``samples[j-1, i-i_min]`` holds the sample of
    ``(i, j)`` with ``i_min = 1 - j_max``; entries left of the lattice are NaN.

    Passage values computed on this grid are maxima over paths that stay in
    the truncated lattice. They coincide with the untruncated values at any
    target ``(u, v)`` with ``u + v - 1 <= i_max`` (see :func:`wedge_extent_for`).
    """

    i_max: int
    j_max: int
    m: int
    r: float
    samples: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        _check_size(self.j_max, "j_max")
        _check_rate(self.r)
        if self.i_max < 0:
            raise ParameterError("i_max must be >= 0 so that (0, 1) is in the grid")
        if self.samples.shape != (self.j_max, self.i_max - self.i_min + 1):
            raise ParameterError("samples shape does not match the extent")
        inside = self._lattice_mask()
        vals = self.samples[inside]
        if not (np.all(np.isfinite(vals)) and np.all(vals > 0)):
            raise ParameterError("samples must be strictly positive and finite on the lattice")
        if not np.all(np.isnan(self.samples[~inside])):
            raise ParameterError("sites outside the lattice must hold NaN")

    @property
    def i_min(self) -> int:
        return 1 - self.j_max

    def _lattice_mask(self) -> np.ndarray:
        i = np.arange(self.i_min, self.i_max + 1)[None, :]
        j = np.arange(1, self.j_max + 1)[:, None]
        return i >= 1 - j

    def contains(self, i: int, j: int) -> bool:
        return 1 <= j <= self.j_max and 1 - j <= i <= self.i_max

    def weight(self, i: int, j: int) -> float:
        if not self.contains(i, j):
            raise DomainError(f"site {(i, j)} is not in the wedge grid")
        tau = float(self.samples[j - 1, i - self.i_min])
        return tau / self.r if i == self.m else tau


def on_wedge_boundary(i: int, j: int) -> bool:
    return (j == 0 and i >= 0) or (i < 0 and j == -i)


def wedge_extent_for(target: tuple[int, int]) -> int:
    """Smallest ``i_max`` for which a truncated wedge gives the exact value at ``target``."""
    u, v = target
    return max(0, u + v - 1)


@dataclass(frozen=True)
class PassageTable:
    """Passage values on a grid.

    Quadrant: ``values[i-1, j-1]``. Wedge: ``values[j, i-i_min]`` for
    ``0 <= j <= j_max``; boundary sites hold 0 and off-lattice entries NaN.
    """

    values: np.ndarray
    geometry: str
    i_min: int = 1

    def at(self, i: int, j: int) -> float:
        if self.geometry == "quadrant":
            if i < 1 or j < 1:
                raise DomainError(f"{(i, j)} is not a quadrant site")
            return float(self.values[i - 1, j - 1])
        if on_wedge_boundary(i, j):
            return 0.0
        c = i - self.i_min
        if j < 1 or j >= self.values.shape[0] or c < 0 or c >= self.values.shape[1]:
            raise DomainError(f"{(i, j)} is outside the table")
        v = self.values[j, c]
        if np.isnan(v):
            raise DomainError(f"{(i, j)} is not a wedge lattice site")
        return float(v)


@dataclass(frozen=True)
class KappaEstimate:
    r: float
    n: int
    replicas: int
    mean: float
    stderr: float
    per_replica: np.ndarray = field(repr=False)

    @classmethod
    def from_samples(cls, r: float, n: int, values: np.ndarray) -> "KappaEstimate":
        values = np.asarray(values, dtype=float)
        k = values.size
        se = float(values.std(ddof=1) / math.sqrt(k)) if k > 1 else math.nan
        return cls(r=r, n=n, replicas=k, mean=float(values.mean()), stderr=se, per_replica=values)


@dataclass(frozen=True)
class KappaBounds:
    r: float
    lower: float
    upper: float


# ---------------------------------------------------------------------------
# kernels


@njit(cache=True, nogil=True)
def _corner_table(samples, r):
    rows, cols = samples.shape
    out = np.empty((rows, cols))
    for i in range(rows):
        left = 0.0
        for j in range(cols):
            y = samples[i, j]
            if i == j:
                y = y / r
            up = out[i - 1, j] if i > 0 else 0.0
            left = (up if up > left else left) + y
            out[i, j] = left
    return out


@njit(cache=True, nogil=True)
def _corner_block(samples, row0, rs, dp):
    # dp[k] holds the last computed row for rate rs[k]; updated in place
    rows, cols = samples.shape
    for k in range(rs.shape[0]):
        r = rs[k]
        for a in range(rows):
            i = row0 + a
            left = 0.0
            for j in range(cols):
                y = samples[a, j]
                if i == j:
                    y = y / r
                up = dp[k, j]
                left = (up if up > left else left) + y
                dp[k, j] = left


@njit(cache=True, nogil=True)
def _wedge_table(samples, i_min, m, r, vertical):
    jm, width = samples.shape
    out = np.full((jm + 1, width), np.nan)
    for c in range(width):
        if i_min + c >= 0:
            out[0, c] = 0.0
    for j in range(1, jm + 1):
        for c in range(width):
            i = i_min + c
            if i < 1 - j:
                if i == -j:
                    out[j, c] = 0.0
                continue
            # (i-1, j) is in the lattice or on its diagonal boundary
            best = out[j, c - 1] if c > 0 else 0.0
            if vertical:
                v = out[j - 1, c]
                if v > best:
                    best = v
            if c + 1 < width:
                v = out[j - 1, c + 1]
                if v > best:
                    best = v
            tau = samples[j - 1, c]
            if i == m:
                tau = tau / r
            out[j, c] = best + tau
    return out


def _stream_corner(rng: np.random.Generator, rows: int, cols: int, rs: np.ndarray):
    """Corner passage time T(rows, cols) for every rate in ``rs`` on one streamed grid.

    Returns the passage times and the sum of the diagonal samples.
    """
    dp = np.zeros((rs.size, cols))
    diag = 0.0
    for start in range(0, rows, _ROW_BLOCK):
        b = min(_ROW_BLOCK, rows - start)
        y = rng.standard_exponential((b, cols))
        _corner_block(y, start, rs, dp)
        a = np.arange(b)
        on = start + a < cols
        diag += float(y[a[on], start + a[on]].sum())
    return dp[:, cols - 1].copy(), diag


# ---------------------------------------------------------------------------
# operations


def sample_quadrant(n: int, r: float, seed: int, replica: int = 0) -> QuadrantGrid:
    n = _check_size(n)
    r = _check_rate(r)
    samples = grid_rng(seed, replica).standard_exponential((n, n))
    return QuadrantGrid(n=n, r=r, samples=samples, seed=seed)


def sample_wedge(i_max: int, j_max: int, m: int, r: float, seed: int, replica: int = 0) -> WedgeGrid:
    j_max = _check_size(j_max, "j_max")
    r = _check_rate(r)
    i_min = 1 - j_max
    samples = grid_rng(seed, replica).standard_exponential((j_max, i_max - i_min + 1))
    i = np.arange(i_min, i_max + 1)[None, :]
    j = np.arange(1, j_max + 1)[:, None]
    samples[i < 1 - j] = np.nan
    return WedgeGrid(i_max=i_max, j_max=j_max, m=m, r=r, samples=samples, seed=seed)


def passage_time_quadrant(grid: QuadrantGrid) -> PassageTable:
    return PassageTable(values=_corner_table(grid.samples, grid.r), geometry="quadrant")


def passage_time_wedge(grid: WedgeGrid, vertical_steps: bool = True) -> PassageTable:
    """Wedge passage table, filled row by row with increasing ``i`` inside a row.

    With ``vertical_steps=False`` the ``(0, 1)`` step is dropped from the step
    set; replacing it by ``(1, 0)`` then ``(-1, 1)`` only adds a site, so the
    maximum is unchanged.
    """
    vals = _wedge_table(grid.samples, grid.i_min, grid.m, grid.r, vertical_steps)
    return PassageTable(values=vals, geometry="wedge", i_min=grid.i_min)


def _count_quadrant_paths(i: int, j: int) -> int:
    return math.comb(i + j - 2, i - 1)


def _count_wedge_paths(grid: WedgeGrid, u: int, v: int) -> int:
    counts: dict[tuple[int, int], int] = {(0, 1): 1}
    for j in range(1, v + 1):
        for i in range(1 - j, grid.i_max + 1):
            if (i, j) == (0, 1):
                continue
            c = counts.get((i - 1, j), 0) + counts.get((i, j - 1), 0) + counts.get((i + 1, j - 1), 0)
            counts[(i, j)] = c
    return counts.get((u, v), 0)


def brute_force_passage(grid: QuadrantGrid | WedgeGrid, target: tuple[int, int],
                        cap: int = DEFAULT_PATH_CAP) -> float:
    """Maximum weighted path sum to ``target`` by listing every admissible path.

    Sums are accumulated along the path from its start, which is also the
    order the recursions add in, so the two agree to the last bit.
    """
    i, j = target
    if isinstance(grid, QuadrantGrid):
        if not (1 <= i <= grid.n and 1 <= j <= grid.n):
            raise DomainError(f"{target} is outside the grid")
        count = _count_quadrant_paths(i, j)
        if count > cap:
            raise OracleCapError(f"{count} paths exceed the cap {cap}")
        steps = i + j - 2
        best = -math.inf
        for downs in itertools.combinations(range(steps), i - 1):
            a, b = 1, 1
            total = grid.weight(1, 1)
            down_set = set(downs)
            for s in range(steps):
                if s in down_set:
                    a += 1
                else:
                    b += 1
                total += grid.weight(a, b)
            best = max(best, total)
        return best

    if on_wedge_boundary(i, j):
        return 0.0
    if not grid.contains(i, j):
        raise DomainError(f"{target} is outside the wedge grid")
    count = _count_wedge_paths(grid, i, j)
    if count > cap:
        raise OracleCapError(f"{count} paths exceed the cap {cap}")

    best = -math.inf
    # explicit stack of (site, partial sum); every full path is visited once
    stack = [((0, 1), grid.weight(0, 1))]
    while stack:
        (a, b), total = stack.pop()
        if (a, b) == (i, j):
            best = max(best, total)
            continue
        for da, db in ((1, 0), (0, 1), (-1, 1)):
            na, nb = a + da, b + db
            # j never decreases; i can exceed the target by at most the rows left
            if nb > j or na > i + (j - nb) or not grid.contains(na, nb):
                continue
            stack.append(((na, nb), total + grid.weight(na, nb)))
    return best


def _replica_values(rs: np.ndarray, n: int, seed: int, replicas: int, threads: int):
    def one(k):
        return _stream_corner(grid_rng(seed, k), n, n, rs)

    if threads > 1 and replicas > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, range(replicas)))
    else:
        results = [one(k) for k in range(replicas)]
    tn = np.array([res[0] for res in results]) / n
    diag = np.array([res[1] for res in results]) / n
    return tn, diag


def estimate_kappa(r: float, n: int, replicas: int, seed: int, threads: int = 1) -> KappaEstimate:
    """Replicate estimate of ``T_{n,n} / n``.

    No finite-size correction is applied; since ``E T_{n,n}`` is superadditive
    the raw mean approaches the limit from below.
    """
    r = _check_rate(r)
    n = _check_size(n)
    replicas = _check_size(replicas, "replicas")
    tn, _ = _replica_values(np.array([r]), n, seed, replicas, threads)
    return KappaEstimate.from_samples(r, n, tn[:, 0])


@dataclass(frozen=True)
class SharedSweep:
    """Estimates for several rates computed on the same grids (shared noise).

    ``per_replica[k, a]`` is ``T_{n,n}/n`` for replica ``k`` and rate
    ``rs[a]``; ``diag_over_n[k]`` is the replica's diagonal sample sum over n.
    """

    rs: np.ndarray
    n: int
    per_replica: np.ndarray
    diag_over_n: np.ndarray

    def estimate(self, a: int) -> KappaEstimate:
        return KappaEstimate.from_samples(float(self.rs[a]), self.n, self.per_replica[:, a])

    def estimates(self) -> list[KappaEstimate]:
        return [self.estimate(a) for a in range(self.rs.size)]


def shared_kappa_sweep(rs: Sequence[float], n: int, replicas: int, seed: int,
                       threads: int = 1) -> SharedSweep:
    rs_arr = np.array([_check_rate(r) for r in rs], dtype=float)
    n = _check_size(n)
    replicas = _check_size(replicas, "replicas")
    tn, diag = _replica_values(rs_arr, n, seed, replicas, threads)
    return SharedSweep(rs=rs_arr, n=n, per_replica=tn, diag_over_n=diag)


def kappa_bounds(r: float) -> KappaBounds:
    r = _check_rate(r)
    lower = max(4.0, 1.5 + (r * r + 2.0 * (1.0 + r)) / (2.0 * r * (1.0 + r)))
    if r <= 0.5:
        lower = max(lower, 1.0 / (r * (1.0 - r)))
    return KappaBounds(r=r, lower=lower, upper=3.0 + 1.0 / r)


def lambda0_from_kappa(kappa: float, tolerance: float = 0.25) -> float:
    """Macroscopic defect rate ``4 / kappa``.

    Finite-size estimates of ``kappa`` sit slightly below their limit, and the
    limit is never below 4. Inputs in ``[4 - tolerance, 4)`` are therefore
    read as 4. The default tolerance 0.25 covers the downward bias of
    ``T_{n,n}/n`` at r = 1 for n >= 100 (about ``4.5 n^{-2/3}``).
    """
    kappa = float(kappa)
    if not math.isfinite(kappa) or kappa < KAPPA_ONE - tolerance:
        raise DomainError(f"kappa = {kappa} is below the floor 4 (tolerance {tolerance})")
    return 4.0 / max(kappa, KAPPA_ONE)


def _wedge_to_quadrant(wedge: WedgeGrid, n: int) -> QuadrantGrid:
    # psi(i, j) = (i + j, j): quadrant site (a, b) reads wedge site (a - b, b)
    a = np.arange(1, n + 1)[:, None]
    b = np.arange(1, n + 1)[None, :]
    samples = wedge.samples[b - 1, (a - b) - wedge.i_min]
    return QuadrantGrid(n=n, r=wedge.r, samples=np.ascontiguousarray(samples), seed=wedge.seed)


def wedge_quadrant_equivalence(n: int, r: float, seed: int, replica: int = 0) -> tuple[float, float]:
    """``(T^0(0, n), T_{n,n})`` computed on one sample set transported by ``psi``.

    The wedge value uses only the steps ``(1, 0)`` and ``(-1, 1)``; under
    ``psi`` these become the quadrant steps and the two recursions perform the
    same floating-point operations, so the results are identical.
    """
    n = _check_size(n)
    wedge = sample_wedge(i_max=n - 1, j_max=n, m=0, r=r, seed=seed, replica=replica)
    t_wedge = passage_time_wedge(wedge, vertical_steps=False).at(0, n)
    quad = _wedge_to_quadrant(wedge, n)
    t_quad = float(_corner_table(quad.samples, quad.r)[n - 1, n - 1])
    return t_wedge, t_quad


def shape_probe(x: float, y: float, n: int, r: float = 1.0, seed: int = 0, replica: int = 0) -> float:
    """``T_{[nx],[ny]} / n`` on one streamed grid."""
    n = _check_size(n)
    r = _check_rate(r)
    rows, cols = int(math.floor(n * x)), int(math.floor(n * y))
    if rows < 1 or cols < 1:
        raise ParameterError("floor(n x) and floor(n y) must both be >= 1")
    t, _ = _stream_corner(grid_rng(seed, replica), rows, cols, np.array([r]))
    return float(t[0]) / n


def fit_finite_size(ns: Sequence[int], means: Sequence[float]) -> tuple[float, float]:
    """Least-squares fit ``mean ~ a + b n^{-1/3}``; returns ``(a, b)``."""
    ns = np.asarray(ns, dtype=float)
    if ns.size < 2:
        raise ParameterError("the finite-size fit needs at least two grid sizes")
    b, a = np.polyfit(ns ** (-1.0 / 3.0), np.asarray(means, dtype=float), 1)
    return float(a), float(b)
