"""Sample-path generation by inverse-CDF draws.

Each path draws, in order, its initial state, its regime, then alternating
sojourn lengths and jump targets until the horizon is passed. The sojourn
in progress at the horizon is kept separately as the censored sojourn.
"""

from __future__ import annotations

import bisect
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import PathOverflow

__all__ = [
    "SamplePath",
    "RngStream",
    "sample_initial_state",
    "sample_regime",
    "step_chain",
    "sample_sojourn",
    "simulate_path",
    "simulate_dataset",
    "DEFAULT_MAX_JUMPS",
]

DEFAULT_MAX_JUMPS = 10_000_000
_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class SamplePath:
    """One realization on ``[0, horizon]``.

    ``events`` holds ``(state, duration)`` for every completed sojourn, each
    of which ends in a jump; ``censored`` is the sojourn cut off by the
    horizon. States and regimes are 0-based.
    """

    id: int
    initial_state: int
    regime: Optional[int]
    events: tuple
    censored: tuple
    horizon: float

    @property
    def states(self):
        """Visited states in order, including the censored one."""
        return [s for s, _ in self.events] + [self.censored[0]]

    @property
    def jump_times(self):
        out, t = [], 0.0
        for _, d in self.events:
            t += d
            out.append(t)
        return out

    def state_at(self, t):
        """State occupied at time ``t`` (right-continuous)."""
        elapsed = 0.0
        for s, d in self.events:
            elapsed += d
            if t < elapsed:
                return s
        return self.censored[0]

    def unlabeled(self):
        return SamplePath(self.id, self.initial_state, None, self.events, self.censored, self.horizon)


class RngStream:
    """Uniform variates for one path from a counter-based generator.

    The stream is a Philox generator keyed by ``(seed, path_index)``; its
    output depends on nothing else, so paths can be produced in any order
    or in parallel and still reproduce exactly.
    """

    _CHUNK = 64

    def __init__(self, seed, path_index=0):
        self.seed = int(seed) & _MASK64
        self.path_index = int(path_index)
        if self.path_index < 0 or self.path_index > _MASK64:
            raise ValueError(f"path index out of range: {path_index}")
        key = self.seed | (self.path_index << 64)
        self._gen = np.random.Generator(np.random.Philox(key=key))
        self._buf = []
        self._pos = 0
        self.counter = 0

    def uniform(self):
        """Next draw in ``[0, 1)``."""
        if self._pos == len(self._buf):
            self._buf = self._gen.random(self._CHUNK).tolist()
            self._pos = 0
        u = self._buf[self._pos]
        self._pos += 1
        self.counter += 1
        return u

    def open_uniform(self):
        """Next draw in ``(0, 1)``; exact zeros are skipped."""
        u = self.uniform()
        while u == 0.0:
            u = self.uniform()
        return u


def _pick(cumulative, u, probs):
    k = bisect.bisect_right(cumulative, u)
    if k >= len(cumulative):
        # u fell in the rounding gap above the last cumulative value
        k = max(j for j, x in enumerate(probs) if x > 0)
    return k


def sample_initial_state(pi, u):
    """State ``k`` with ``u`` in ``[sum_{i<k} pi_i, sum_{i<=k} pi_i)``."""
    probs = list(np.asarray(pi, dtype=float))
    return _pick(list(np.cumsum(probs)), u, probs)


def sample_regime(model, i0, u):
    """Regime drawn from the switching row of initial state ``i0``."""
    probs = list(model.switching[i0])
    return _pick(list(np.cumsum(probs)), u, probs)


def step_chain(chain, current, v):
    """Next state of the embedded chain from ``current`` given draw ``v``."""
    probs = list(np.asarray(chain, dtype=float)[current])
    return _pick(list(np.cumsum(probs)), v, probs)


def sample_sojourn(exit_rate, w):
    """Exponential(``exit_rate``) variate ``-log(w) / exit_rate``; infinite for rate 0."""
    if exit_rate <= 0.0:
        return math.inf
    return -math.log(w) / exit_rate


def _jump_tables(model):
    """Per regime: exit rates, jump-chain rows and their cumulative sums."""
    tables = []
    for m in range(model.M):
        q = model.intensities[m]
        rates = (-np.diag(q)).tolist()
        rows, cums = [], []
        for i, r in enumerate(rates):
            if r > 0:
                row = q[i] / r
                row[i] = 0.0
            else:
                row = np.zeros(model.p)
            rows.append(row.tolist())
            cums.append(np.cumsum(row).tolist())
        tables.append((rates, rows, cums))
    return tables


def _initial_tables(model):
    pi = model.pi.tolist()
    s_rows = [list(r) for r in model.switching]
    return (pi, np.cumsum(pi).tolist()), [(r, np.cumsum(r).tolist()) for r in s_rows]


def _simulate(model_tables, horizon, stream, keep_label, path_id, max_jumps):
    (pi, pi_cum), s_tables, jump_tables = model_tables
    i0 = _pick(pi_cum, stream.uniform(), pi)
    s_row, s_cum = s_tables[i0]
    m = _pick(s_cum, stream.uniform(), s_row)
    rates, rows, cums = jump_tables[m]

    events = []
    t = 0.0
    state = i0
    while True:
        d = sample_sojourn(rates[state], stream.open_uniform())
        if t + d >= horizon:
            censored = (state, horizon - t)
            break
        events.append((state, d))
        if len(events) > max_jumps:
            raise PathOverflow(path_id, max_jumps)
        t += d
        state = _pick(cums[state], stream.uniform(), rows[state])
    return SamplePath(path_id, i0, m if keep_label else None, tuple(events), censored, float(horizon))


def _tables(model):
    init, s_tables = _initial_tables(model)
    return init, s_tables, _jump_tables(model)


def simulate_path(model, horizon, stream, keep_label=True, path_id=None, max_jumps=DEFAULT_MAX_JUMPS):
    """Simulate one path of ``model`` on ``[0, horizon]``.

    Parameters
    ----------
    model : MixtureModel
    horizon : float
        Observation horizon ``T > 0``.
    stream : RngStream
        Source of uniforms; consumed in the order initial state, regime,
        then (sojourn, jump) pairs.
    keep_label : bool
        Store the regime on the path.
    path_id : int, optional
        Defaults to ``stream.path_index``.
    max_jumps : int
        Raise :class:`PathOverflow` beyond this many jumps.
    """
    if not horizon > 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    pid = stream.path_index if path_id is None else path_id
    return _simulate(_tables(model), float(horizon), stream, keep_label, pid, max_jumps)


def _simulate_range(args):
    model, horizon, seed, keep_label, start, stop, max_jumps = args
    tables = _tables(model)
    return [
        _simulate(tables, horizon, RngStream(seed, k), keep_label, k, max_jumps) for k in range(start, stop)
    ]


def default_workers():
    env = os.environ.get("MARKOVMIX_WORKERS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def simulate_dataset(model, n_paths, horizon, seed, keep_label=True, workers=1, max_jumps=DEFAULT_MAX_JUMPS):
    """Simulate ``n_paths`` independent paths; path ``k`` uses stream ``(seed, k)``.

    The result does not depend on ``workers``.
    """
    n_paths = int(n_paths)
    if n_paths < 1:
        raise ValueError(f"need at least one path, got {n_paths}")
    if not horizon > 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    horizon = float(horizon)
    workers = max(1, int(workers))
    if workers == 1 or n_paths < 2 * workers:
        return _simulate_range((model, horizon, seed, keep_label, 0, n_paths, max_jumps))
    n_chunks = workers * 4
    bounds = np.linspace(0, n_paths, n_chunks + 1).astype(int)
    jobs = [
        (model, horizon, seed, keep_label, int(a), int(b), max_jumps)
        for a, b in zip(bounds[:-1], bounds[1:])
        if b > a
    ]
    paths = []
    with ProcessPoolExecutor(max_workers=workers) as pool:
        for chunk in pool.map(_simulate_range, jobs):
            paths.extend(chunk)
    return paths
