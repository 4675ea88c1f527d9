"""Event-driven kernel for the height representation of the exclusion process.

Heights ``h`` are stored in one int64 array. Entry 0 is the height just left
of the window; entries ``1..M`` move. Position ``a`` decreases by one at an
epoch of its clock iff ``h[a] - h[a-1] == 1`` (a particle sits at the site)
and ``h[a+1] == h[a]`` (the next site is empty).

Closed windows freeze ``h[0]`` and ``h[M+1]``. On a ring of ``S`` sites the
array has ``S + 1`` entries, every one of ``1..S`` moves, and heights are
read off the universal cover: ``h[0] = h[S] - P`` and the right neighbour of
``S`` is ``h[1] + P``, with ``P`` the particle count.

Epochs of position ``a`` are the partial sums of ``E(key[a], c) / rate[a]``
for ``c = 1, 2, ...``; a failed attempt still consumes its epoch.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from slowbond._rng import unit_exponential


@njit(cache=True, inline="always")
def _sift_down(ht, hp, i, size):
    t = ht[i]
    p = hp[i]
    while True:
        c = 2 * i + 1
        if c >= size:
            break
        if c + 1 < size and ht[c + 1] < ht[c]:
            c += 1
        if ht[c] >= t:
            break
        ht[i] = ht[c]
        hp[i] = hp[c]
        i = c
    ht[i] = t
    hp[i] = p


@njit(cache=True)
def init_heap(keys, rates, first, last, cnt, ht, hp):
    """Schedule the first epoch of every position in ``first..last`` with positive rate."""
    size = 0
    for a in range(first, last + 1):
        if rates[a] > 0.0:
            cnt[a] = 1
            ht[size] = unit_exponential(keys[a], 1) / rates[a]
            hp[size] = a
            size += 1
    for i in range(size // 2 - 1, -1, -1):
        _sift_down(ht, hp, i, size)
    return size


@njit(cache=True)
def advance(h, periodic, particles, keys, rates, cnt, ht, hp, size, t_end, jumps,
            watch_row, watch_times):
    """Process every epoch up to ``t_end``; returns the number of epochs used.

    ``watch_times[watch_row[a], d - 1]`` receives the time of the ``d``-th
    jump of position ``a`` when ``watch_row[a] >= 0``.
    """
    last = h.shape[0] - 1
    n_watch = watch_times.shape[1]
    events = 0
    while size > 0:
        t = ht[0]
        if t > t_end:
            break
        a = hp[0]
        ha = h[a]
        if periodic and a == last:
            right = h[1] + particles
        else:
            right = h[a + 1]
        if ha - h[a - 1] == 1 and right == ha:
            h[a] = ha - 1
            if periodic and a == last:
                h[0] = h[last] - particles
            jumps[a] += 1
            row = watch_row[a]
            if row >= 0 and jumps[a] <= n_watch:
                watch_times[row, jumps[a] - 1] = t
        c = cnt[a] + 1
        cnt[a] = c
        ht[0] = t + unit_exponential(keys[a], c) / rates[a]
        _sift_down(ht, hp, 0, size)
        events += 1
    return events
