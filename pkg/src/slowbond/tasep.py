"""Microscopic slow-bond exclusion process, its heights and auxiliary processes.

Sites carry occupation bits ``eta_i``; bond ``i`` joins site ``i`` to
``i + 1`` and rings at the epochs of a Poisson clock ``D_i``. Heights
``z_i`` satisfy ``eta_i = z_i - z_{i-1}`` and ``z_i`` drops by one when the
particle at ``i`` crosses bond ``i``, so ``J_i(t) = z_i(0) - z_i(t)``.

The auxiliary process ``xi^k`` starts from ``xi^k_i = max(0, -i)`` and
``xi^k_i`` jumps at epochs of ``D_{i+k}``. Its negative is a step-initial
height function, so it runs on the same kernel with the clock index shifted
by ``k``. The coupling identity ``z_i(t) = max_k {z_k(0) - xi^k_{i-k}(t)}``
is checked exactly by :func:`coupling_check`.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from slowbond import _engine
from slowbond._rng import as_uint64, grid_rng, stream_keys, unit_exponential
from slowbond.errors import MarginError, ParameterError, PreconditionError
from slowbond.hydro import MacroProfile


def _window(window) -> tuple[int, int]:
    lo, hi = (int(w) for w in window)
    if hi < lo:
        raise ParameterError(f"empty window [{lo}, {hi}]")
    return lo, hi


# ---------------------------------------------------------------------------
# configurations


@dataclass(frozen=True)
class Occupancies:
    """Occupation bits on the sites ``lo..hi``."""

    window: tuple[int, int]
    bits: np.ndarray
    periodic: bool = False

    def __post_init__(self):
        lo, hi = _window(self.window)
        b = np.asarray(self.bits)
        if b.shape != (hi - lo + 1,):
            raise ParameterError("bits do not match the window")
        if b.size and (b.min() < 0 or b.max() > 1):
            raise ParameterError("occupation bits must be 0 or 1")
        object.__setattr__(self, "window", (lo, hi))
        object.__setattr__(self, "bits", b.astype(np.uint8))

    @property
    def sites(self) -> np.ndarray:
        return np.arange(self.window[0], self.window[1] + 1)

    def __getitem__(self, i: int) -> int:
        return int(self.bits[i - self.window[0]])

    @property
    def particles(self) -> int:
        return int(self.bits.sum())


@dataclass(frozen=True)
class HeightConfig:
    """Heights ``z_i`` for ``i = lo - 1 .. hi``."""

    window: tuple[int, int]
    heights: np.ndarray
    periodic: bool = False

    def __post_init__(self):
        lo, hi = _window(self.window)
        z = np.asarray(self.heights, dtype=np.int64)
        if z.shape != (hi - lo + 2,):
            raise ParameterError("heights do not match the window")
        d = np.diff(z)
        if d.size and (d.min() < 0 or d.max() > 1):
            raise ParameterError("height increments must be 0 or 1")
        object.__setattr__(self, "window", (lo, hi))
        object.__setattr__(self, "heights", z)

    def z(self, i):
        return self.heights[np.asarray(i) - self.window[0] + 1]


def heights_from_occ(occ: Occupancies) -> HeightConfig:
    """Cumulative sums of the bits, normalized by ``z_0 = 0`` when 0 is indexed."""
    lo, hi = occ.window
    z = np.concatenate([[0], np.cumsum(occ.bits, dtype=np.int64)])
    if lo - 1 <= 0 <= hi:
        z -= z[-lo + 1]
    return HeightConfig((lo, hi), z, occ.periodic)


def occ_from_heights(h: HeightConfig) -> Occupancies:
    return Occupancies(h.window, np.diff(h.heights), h.periodic)


def init_bernoulli(rho: float, window, seed: int, replica: int = 0,
                   periodic: bool = False) -> Occupancies:
    if not (0.0 <= rho <= 1.0):
        raise ParameterError(f"density {rho} outside [0, 1]")
    lo, hi = _window(window)
    u = grid_rng(seed, replica).random(hi - lo + 1)
    return Occupancies((lo, hi), (u < rho).astype(np.uint8), periodic)


def cell_means(profile: MacroProfile, n: int, lo: int, hi: int) -> np.ndarray:
    """Mean occupation of site ``i``: the average of ``rho0`` over ``((i-1)/n, i/n]``."""
    i = np.arange(lo, hi + 1, dtype=float)
    p = n * (profile(i / n) - profile((i - 1) / n))
    return np.clip(p, 0.0, 1.0)


def init_from_profile(profile: MacroProfile, n: int, window, seed: int, replica: int = 0,
                      cover: tuple[float, float] | None = None) -> Occupancies:
    """Independent bits with site means from ``rho0``.

    ``cover = (a, b)`` asks that the window contain ``[na, nb]``.
    """
    lo, hi = _window(window)
    if cover is not None and (n * cover[0] < lo - 1 or n * cover[1] > hi):
        raise ParameterError(f"window [{lo}, {hi}] does not cover [{n * cover[0]}, {n * cover[1]}]")
    u = grid_rng(seed, replica).random(hi - lo + 1)
    return Occupancies((lo, hi), (u < cell_means(profile, n, lo, hi)).astype(np.uint8))


def init_deterministic(profile: MacroProfile, n: int, window) -> Occupancies:
    """Quasi-uniform bits: the count up to site ``i`` is ``floor(n v0(i/n))``."""
    lo, hi = _window(window)
    i = np.arange(lo - 1, hi + 1, dtype=float)
    z = np.floor(n * profile(i / n) + 1e-9).astype(np.int64)
    return Occupancies((lo, hi), np.diff(z))


def measure_density(occ: Occupancies, a: float, b: float, n: int) -> float:
    """``(1/n) * sum of eta_i over [na] < i <= [nb]``."""
    lo, hi = occ.window
    i0, i1 = int(np.floor(n * a)) + 1, int(np.floor(n * b))
    if i0 < lo or i1 > hi:
        raise ParameterError(f"sites {i0}..{i1} leave the window [{lo}, {hi}]")
    return float(occ.bits[i0 - lo:i1 - lo + 1].sum()) / n


# ---------------------------------------------------------------------------
# clocks and dynamics


@dataclass(frozen=True)
class BondClocks:
    """Poisson clocks ``D_i``: rate ``base_rate`` except at the bonds in ``slow``."""

    seed: int
    slow: Mapping[int, float] = field(default_factory=lambda: {0: 1.0})
    base_rate: float = 1.0

    def __post_init__(self):
        for bond, r in self.slow.items():
            if not (0.0 < r <= self.base_rate):
                raise ParameterError(f"rate {r} at bond {bond} outside (0, {self.base_rate}]")
        object.__setattr__(self, "slow", dict(self.slow))

    @classmethod
    def single(cls, seed: int, r: float) -> "BondClocks":
        return cls(seed, {0: r})

    def rates(self, bonds: np.ndarray) -> np.ndarray:
        out = np.full(bonds.shape, float(self.base_rate))
        for bond, r in self.slow.items():
            out[bonds == bond] = r
        return out

    def keys(self, bonds: np.ndarray) -> np.ndarray:
        return stream_keys(as_uint64(self.seed), np.asarray(bonds, dtype=np.int64))

    def epochs(self, bond: int, count: int) -> np.ndarray:
        """First ``count`` epochs of ``D_bond``, accumulated as the kernel does."""
        key = self.keys(np.array([bond]))[0]
        rate = self.rates(np.array([bond]))[0]
        out = np.empty(count)
        t = 0.0
        for c in range(1, count + 1):
            t = t + unit_exponential(key, c) / rate
            out[c - 1] = t
        return out


class ExclusionProcess:
    """A running process. Bond ``i`` uses the clock ``D_{i + stream_shift}``.

    ``watch`` lists bonds whose first ``watch_depth`` jump times are kept.
    """

    def __init__(self, state: Occupancies | HeightConfig, clocks: BondClocks,
                 stream_shift: int = 0, watch: Sequence[int] = (), watch_depth: int = 0):
        h = state if isinstance(state, HeightConfig) else heights_from_occ(state)
        self.window = h.window
        self.periodic = h.periodic
        self.clocks = clocks
        self.time = 0.0
        lo, hi = h.window
        self._h = h.heights.copy()
        self._h0 = h.heights.copy()
        size = self._h.size
        # position a carries height z_{lo - 1 + a} and bond lo - 1 + a
        bonds = np.arange(lo - 1, hi + 1, dtype=np.int64)
        self._particles = int(self._h[-1] - self._h[0]) if self.periodic else 0
        if self.periodic:
            last = size - 1
        else:
            last = size - 2
        shifted = bonds + stream_shift
        self._rates = np.zeros(size)
        self._rates[1:last + 1] = clocks.rates(shifted[1:last + 1])
        self._keys = np.zeros(size, dtype=np.uint64)
        self._keys[1:last + 1] = clocks.keys(shifted[1:last + 1])
        self._cnt = np.zeros(size, dtype=np.int64)
        self._ht = np.empty(size)
        self._hp = np.empty(size, dtype=np.int64)
        self._size = _engine.init_heap(self._keys, self._rates, 1, last, self._cnt, self._ht, self._hp)
        self._jumps = np.zeros(size, dtype=np.int64)
        self._watch_row = np.full(size, -1, dtype=np.int64)
        for k, bond in enumerate(watch):
            self._watch_row[int(bond) - lo + 1] = k
        self.watch_times = np.full((len(watch), int(watch_depth)), np.inf)
        self.events = 0

    def advance(self, t: float) -> "ExclusionProcess":
        if t < self.time:
            raise ParameterError("time cannot go backwards")
        self.events += _engine.advance(self._h, self.periodic, self._particles, self._keys,
                                       self._rates, self._cnt, self._ht, self._hp, self._size,
                                       float(t), self._jumps, self._watch_row, self.watch_times)
        self.time = float(t)
        return self

    def heights(self) -> HeightConfig:
        return HeightConfig(self.window, self._h.copy(), self.periodic)

    def occupancies(self) -> Occupancies:
        return Occupancies(self.window, np.diff(self._h), self.periodic)

    def currents(self) -> np.ndarray:
        """``J_i`` for the bonds ``lo - 1 .. hi`` (end entries stay 0 on closed windows)."""
        out = self._jumps.copy()
        if self.periodic:
            # bond lo - 1 is bond hi seen across the seam
            out[0] = out[-1]
        return out

    def current(self, bond) -> np.ndarray:
        return self.currents()[np.asarray(bond) - self.window[0] + 1]

    def edge_jumps(self) -> tuple[int, int]:
        """Jumps of the outermost movable heights; both zero certifies a closed window."""
        if self.periodic:
            return 0, 0
        return int(self._jumps[1]), int(self._jumps[-2])


@dataclass(frozen=True)
class EvolveResult:
    state: Occupancies
    heights: HeightConfig
    currents: np.ndarray
    time: float
    events: int


def evolve(state: Occupancies | HeightConfig, clocks: BondClocks, horizon: float) -> EvolveResult:
    if horizon < 0:
        raise ParameterError("horizon must be nonnegative")
    proc = ExclusionProcess(state, clocks).advance(horizon)
    return EvolveResult(proc.occupancies(), proc.heights(), proc.currents(), proc.time, proc.events)


# ---------------------------------------------------------------------------
# auxiliary processes


@dataclass(frozen=True)
class XiState:
    k: int
    window: tuple[int, int]
    values: np.ndarray
    time: float

    def xi(self, i):
        return self.values[np.asarray(i) - self.window[0] + 1]


def xi_initial(window) -> np.ndarray:
    lo, hi = _window(window)
    i = np.arange(lo - 1, hi + 1)
    return np.maximum(0, -i).astype(np.int64)


def _xi_process(k: int, clocks: BondClocks, window, watch=(), depth=0) -> ExclusionProcess:
    lo, hi = _window(window)
    h = HeightConfig((lo, hi), -xi_initial((lo, hi)))
    return ExclusionProcess(h, clocks, stream_shift=k, watch=watch, watch_depth=depth)


def _xi_state(proc: ExclusionProcess, k: int) -> XiState:
    return XiState(k, proc.window, -proc._h.copy(), proc.time)


def _certify(proc: ExclusionProcess, what: str):
    left, right = proc.edge_jumps()
    if left or right:
        raise MarginError(f"{what}: the window edge moved by t={proc.time}; enlarge the window")


def simulate_xi(k: int, clocks: BondClocks, horizon: float, window,
                sample_times: Sequence[float] | None = None) -> list[XiState]:
    """Trajectory of ``xi^k`` on ``lo - 1 .. hi`` at the sample times.

    Outside the window the exact process is frozen as long as the outermost
    movable entries never jumped: the left end is packed and the right end
    empty, so nothing can happen there before a disturbance reaches the edge.
    That is checked and a :class:`MarginError` raised otherwise.
    """
    extra = [] if sample_times is None else [float(s) for s in sample_times]
    times = sorted(set([0.0, float(horizon)] + extra))
    proc = _xi_process(k, clocks, window)
    out = []
    for t in times:
        proc.advance(t)
        out.append(_xi_state(proc, k))
    _certify(proc, "xi process")
    return out


def level_crossings(k: int, clocks: BondClocks, sites: Sequence[int], levels: int,
                    horizon: float, window) -> np.ndarray:
    """``L^k(i, j) = inf{t : xi^k_i(t) >= j}`` for ``j = 1..levels``; ``inf`` if not reached.

    The run stops at ``horizon`` or as soon as every requested level is reached.
    """
    lo, hi = _window(window)
    sites = [int(i) for i in sites]
    start = np.maximum(0, -np.asarray(sites))
    need = np.maximum(levels - start, 0)
    proc = _xi_process(k, clocks, (lo, hi), watch=sites, depth=levels)
    step = 1.0
    while proc.time < horizon:
        proc.advance(min(horizon, proc.time + step))
        step *= 2
        done = [need[row] == 0 or np.isfinite(proc.watch_times[row, need[row] - 1])
                for row in range(len(sites))]
        if all(done):
            break
    _certify(proc, "xi process")
    out = np.full((len(sites), levels), np.inf)
    for row, s in enumerate(start):
        # level j is reached at the (j - s)-th jump; levels <= s hold from the start
        for j in range(1, levels + 1):
            d = j - s
            out[row, j - 1] = 0.0 if d <= 0 else proc.watch_times[row, d - 1]
    return out


@dataclass(frozen=True)
class CouplingReport:
    passed: bool
    sample_times: list[float]
    sites: tuple[int, int]
    k_range: tuple[int, int]
    mismatches: list[tuple[float, int, int, int]]


def coupling_check(z0: HeightConfig | Occupancies, clocks: BondClocks, horizon: float,
                   sample_times: Sequence[float], margin: int | None = None) -> CouplingReport:
    """Check ``z_i(t) = max_k {z_k(0) - xi^k_{i-k}(t)}`` exactly.

    With finitely many particles in ``p_min..p_max`` and ``c`` the height at
    the far left, every ``k < p_min`` gives a candidate ``<= c``, as does every
    ``k > p_max`` with ``k - i >= N`` (``xi^k_{i-k} >= k - i``). Heights never
    drop below ``c``, so the finite range of ``k`` used here decides the
    supremum; the far-left end of the range contributes the value ``c``
    itself while ``xi`` is still 0 there.
    """
    h = z0 if isinstance(z0, HeightConfig) else heights_from_occ(z0)
    occ = occ_from_heights(h)
    lo, hi = h.window
    pos = occ.sites[occ.bits == 1]
    if pos.size == 0:
        raise PreconditionError("coupling_check needs at least one particle")
    n_part = int(pos.size)
    c = int(h.heights[0])
    m = int(margin if margin is not None else 2 * np.ceil(horizon) + 20)
    i_lo, i_hi = int(pos.min()) - 5, int(pos.max()) + m
    k_lo, k_hi = i_lo - m, max(int(pos.max()), i_hi + n_part)
    zl, zh = min(lo, k_lo - 1), max(hi, i_hi + m, k_hi)

    def z_init(k):
        k = np.asarray(k)
        return c + np.searchsorted(pos, k, side="right")

    big = HeightConfig((zl, zh), z_init(np.arange(zl - 1, zh + 1)))
    times = sorted(set(float(s) for s in sample_times) | {0.0})
    if times[-1] > horizon:
        raise ParameterError("sample times exceed the horizon")
    proc = ExclusionProcess(big, clocks)
    z_at = []
    for t in times:
        proc.advance(t)
        z_at.append(proc.heights())
    _certify(proc, "height process")

    sites = np.arange(i_lo, i_hi + 1)
    best = np.full((len(times), sites.size), np.iinfo(np.int64).min, dtype=np.int64)
    j_lo, j_hi = i_lo - k_hi, i_hi - k_lo
    xw = (j_lo - m, j_hi + m)
    for k in range(k_lo, k_hi + 1):
        traj = simulate_xi(k, clocks, times[-1], xw, times)
        zk = int(z_init(k))
        by_t = {s.time: s for s in traj}
        for a, t in enumerate(times):
            cand = zk - by_t[t].xi(sites - k)
            np.maximum(best[a], cand, out=best[a])
    mism = []
    for a, t in enumerate(times):
        z = z_at[a].z(sites)
        for i in np.nonzero(z != best[a])[0]:
            mism.append((t, int(sites[i]), int(z[i]), int(best[a][i])))
    return CouplingReport(not mism, times, (i_lo, i_hi), (k_lo, k_hi), mism)


# ---------------------------------------------------------------------------
# stationary pair correlation


@dataclass(frozen=True)
class PairCorrelation:
    bonds: np.ndarray
    estimates: np.ndarray
    rates: np.ndarray
    burn_in: float
    horizon: float
    flagged: bool


def stationary_pair_correlation(rho: float, r: float, sites: int, burn_in: float, horizon: float,
                                seed: int, rho_star: float | None = None,
                                bonds: Sequence[int] | None = None) -> PairCorrelation:
    """Time averages of ``P{eta_i = 1, eta_{i+1} = 0}`` from ``J_i / (rate_i * T)``.

    The system is a ring of ``sites`` sites with the slow bond at 0, started
    from Bernoulli(``rho``) and run for ``burn_in`` before the window of length
    ``horizon`` is measured.
    """
    flagged = False
    if rho_star is not None and rho_star < rho < 1.0 - rho_star:
        warnings.warn(f"density {rho} lies inside ({rho_star}, {1 - rho_star})", RuntimeWarning)
        flagged = True
    lo = -(sites // 2)
    hi = lo + sites - 1
    occ = init_bernoulli(rho, (lo, hi), seed, periodic=True)
    clocks = BondClocks.single(seed, r)
    proc = ExclusionProcess(occ, clocks)
    proc.advance(burn_in)
    j0 = proc.currents()
    proc.advance(burn_in + horizon)
    dj = proc.currents() - j0
    all_bonds = np.arange(lo - 1, hi + 1)
    sel = slice(1, None)
    b = all_bonds[sel]
    est = dj[sel] / (clocks.rates(b) * horizon)
    if bonds is not None:
        idx = np.asarray(bonds) - lo
        b, est = b[idx], est[idx]
    return PairCorrelation(b, est, clocks.rates(b), burn_in, horizon, flagged)


# ---------------------------------------------------------------------------
# snapshots

_MAGIC = b"SBTS"
_HEADER = struct.Struct("<4sHqqdqB")


def save_snapshot(path, occ: Occupancies, time: float, seed: int):
    lo, hi = occ.window
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, 1, lo, hi, float(time), int(seed), int(occ.periodic)))
        fh.write(np.packbits(occ.bits).tobytes())


def load_snapshot(path) -> tuple[Occupancies, float, int]:
    data = Path(path).read_bytes()
    magic, version, lo, hi, time, seed, periodic = _HEADER.unpack_from(data)
    if magic != _MAGIC or version != 1:
        raise ParameterError(f"{path} is not a snapshot file")
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8, offset=_HEADER.size))[: hi - lo + 1]
    return Occupancies((lo, hi), bits, bool(periodic)), time, seed
