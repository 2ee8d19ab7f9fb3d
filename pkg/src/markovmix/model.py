"""Mixture-of-Markov-jump-process model and its transition laws.

States are indexed ``0..p-1`` internally and regimes ``0..M-1``; files,
tables and error messages use 1-based labels.

A mixture model is the triple ``(pi, {Q[m]}, {S[m]})``:

* ``pi`` -- initial distribution over the ``p`` states,
* ``Q[m]`` -- intensity (generator) matrix of regime ``m``,
* ``switching[i, m]`` -- probability that a path started in state ``i``
  follows regime ``m`` for its whole life (the diagonal of ``S[m]``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AbsorbingState,
    DimensionMismatch,
    NegativeOffDiagonal,
    NonZeroDiagonal,
    ProbabilityRowSum,
)

__all__ = [
    "StateSpace",
    "MixtureModel",
    "RestrictedSpec",
    "validate_model",
    "as_intensity",
    "check_stochastic",
    "build_intensity",
    "embedded_chain",
    "matrix_exponential",
    "mixture_transition",
    "n_step_matrix",
    "benchmark_model",
]

PROB_TOL = 1e-9
STOCHASTIC_TOL = 1e-10
CLAMP_TOL = 1e-12
# Poisson tail mass at which the uniformization series is truncated.
TAIL_MASS = 1e-13


@dataclass(frozen=True)
class StateSpace:
    """Finite state space ``{1, ..., p}``."""

    p: int

    def __post_init__(self):
        if int(self.p) != self.p or self.p < 2:
            raise DimensionMismatch(f"state space needs p >= 2 states, got {self.p!r}")

    @property
    def labels(self):
        return tuple(range(1, self.p + 1))


def _readonly(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _normalized_probabilities(v, what, row=None, tol=PROB_TOL):
    """Check a probability vector and return it with an exactly unit sum.

    The last positive entry absorbs the rounding residual so that a plain
    left-to-right float sum of the result is 1.0.
    """
    v = np.array(v, dtype=float)
    total = math.fsum(v)
    if not np.all(np.isfinite(v)) or np.any(v < -tol) or abs(total - 1.0) > tol:
        raise ProbabilityRowSum(what, row, total)
    v = np.clip(v, 0.0, 1.0)
    k = int(np.flatnonzero(v > 0)[-1])
    head = 0.0
    for x in v[:k]:
        head += x
    v[k] = max(0.0, 1.0 - head - v[k + 1 :].sum())
    return v


def as_intensity(q, regime=None):
    """Validate an intensity matrix and return it with a re-derived diagonal.

    Off-diagonal entries must be nonnegative. The diagonal of the input is
    ignored and replaced by minus the off-diagonal row sums, so rows sum to
    zero up to one rounding.
    """
    q = np.array(q, dtype=float)
    if q.ndim != 2 or q.shape[0] != q.shape[1] or q.shape[0] < 1:
        raise DimensionMismatch(f"intensity matrix must be square, got shape {q.shape}")
    if not np.all(np.isfinite(q)):
        raise DimensionMismatch("intensity matrix has non-finite entries")
    np.fill_diagonal(q, 0.0)
    neg = np.argwhere(q < 0)
    if len(neg):
        i, j = neg[0]
        raise NegativeOffDiagonal(regime, int(i) + 1, int(j) + 1, float(q[i, j]))
    np.fill_diagonal(q, -q.sum(axis=1))
    return q


def check_stochastic(m, what="matrix", tol=STOCHASTIC_TOL):
    """Raise ``ProbabilityRowSum`` unless ``m`` is row-stochastic."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2:
        raise DimensionMismatch(f"{what} must be a matrix, got shape {m.shape}")
    for i, row in enumerate(m):
        s = math.fsum(row)
        if np.any(row < -tol) or np.any(row > 1 + tol) or abs(s - 1.0) > tol:
            raise ProbabilityRowSum(what, i + 1, s)
    return m


@dataclass(frozen=True)
class MixtureModel:
    """Validated, immutable parameter set of a Markov mixture.

    Parameters
    ----------
    pi : (p,) array
        Initial state distribution.
    intensities : (M, p, p) array
        One intensity matrix per regime. Diagonals are re-derived.
    switching : (p, M) array
        ``switching[i, m]`` is the probability of regime ``m`` given start
        in state ``i``; rows sum to one.
    """

    pi: np.ndarray
    intensities: np.ndarray
    switching: np.ndarray
    statespace: StateSpace = field(init=False, repr=False)

    def __post_init__(self):
        q = np.asarray(self.intensities, dtype=float)
        if q.ndim == 2:
            q = q[None]
        if q.ndim != 3 or q.shape[1] != q.shape[2]:
            raise DimensionMismatch(f"intensities must be (M, p, p), got shape {q.shape}")
        M, p = q.shape[0], q.shape[1]
        space = StateSpace(p)
        if M < 1:
            raise DimensionMismatch("need at least one regime")
        q = np.stack([as_intensity(q[m], regime=m + 1) for m in range(M)])

        pi = np.asarray(self.pi, dtype=float)
        if pi.shape != (p,):
            raise DimensionMismatch(f"pi must have length {p}, got shape {pi.shape}")
        pi = _normalized_probabilities(pi, "pi")

        s = np.asarray(self.switching, dtype=float)
        if M == 1 and s.ndim == 1 and s.shape == (p,):
            s = s[:, None]
        if s.shape != (p, M):
            raise DimensionMismatch(f"switching must be ({p}, {M}), got shape {s.shape}")
        s = np.stack([_normalized_probabilities(s[i], "switching", row=i + 1) for i in range(p)])

        object.__setattr__(self, "statespace", space)
        object.__setattr__(self, "pi", _readonly(pi))
        object.__setattr__(self, "intensities", _readonly(q))
        object.__setattr__(self, "switching", _readonly(s))

    @property
    def p(self):
        return self.statespace.p

    @property
    def M(self):
        return self.intensities.shape[0]

    @property
    def exit_rates(self):
        """(M, p) array of exit rates ``q_i^(m) = -q_ii^(m)``."""
        return -np.diagonal(self.intensities, axis1=1, axis2=2)

    def switching_matrix(self, m):
        """Diagonal matrix ``S^(m)``."""
        return np.diag(self.switching[:, m])

    def embedded_chains(self):
        return np.stack([embedded_chain(self.intensities[m], regime=m + 1) for m in range(self.M)])

    def permuted(self, order):
        """Same model with regimes relabelled: new regime ``k`` is old ``order[k]``."""
        order = list(order)
        return MixtureModel(self.pi, self.intensities[order], self.switching[:, order])

    def __eq__(self, other):
        if not isinstance(other, MixtureModel):
            return NotImplemented
        return (
            np.array_equal(self.pi, other.pi)
            and np.array_equal(self.intensities, other.intensities)
            and np.array_equal(self.switching, other.switching)
        )

    def __hash__(self):
        return hash((self.pi.tobytes(), self.intensities.tobytes(), self.switching.tobytes()))


def validate_model(p, M, pi, intensities, switching):
    """Build a :class:`MixtureModel` from raw parameters, checking ``p`` and ``M``."""
    q = np.asarray(intensities, dtype=float)
    if q.ndim == 2:
        q = q[None]
    if q.shape[0] != M or q.shape[1:] != (p, p):
        raise DimensionMismatch(f"expected {M} intensity matrices of shape ({p}, {p}), got {q.shape}")
    return MixtureModel(pi, q, switching)


@dataclass(frozen=True)
class RestrictedSpec:
    """Regimes that share one embedded chain and differ by state-wise speeds.

    Regime ``m < M`` has ``q_ij^(m) = psi[m, i] * q_ij``; the last regime is
    the reference with ``psi = 1``.
    """

    base_intensity: np.ndarray
    psi: np.ndarray

    def __post_init__(self):
        base = as_intensity(self.base_intensity, regime="base")
        psi = np.array(self.psi, dtype=float)
        if psi.ndim == 1:
            psi = psi[None]
        if psi.ndim != 2 or psi.shape[1] != base.shape[0]:
            raise DimensionMismatch(f"psi must be (M-1, {base.shape[0]}), got shape {psi.shape}")
        if np.any(psi < 0) or not np.all(np.isfinite(psi)):
            raise DimensionMismatch("psi entries must be finite and nonnegative")
        object.__setattr__(self, "base_intensity", _readonly(base))
        object.__setattr__(self, "psi", _readonly(psi))

    @property
    def M(self):
        return self.psi.shape[0] + 1

    def expand(self):
        """(M, p, p) intensity stack, reference regime last."""
        off = self.base_intensity.copy()
        np.fill_diagonal(off, 0.0)
        mats = [as_intensity(self.psi[m][:, None] * off) for m in range(self.M - 1)]
        mats.append(as_intensity(off))
        return np.stack(mats)


def build_intensity(exit_rates, chain):
    """Intensity matrix ``diag(q) (Pi - I)`` from exit rates and an embedded chain.

    Examples
    --------
    >>> build_intensity([1.0, 1.0], [[0, 1], [1, 0]])
    array([[-1.,  1.],
           [ 1., -1.]])
    """
    q = np.asarray(exit_rates, dtype=float)
    chain = np.asarray(chain, dtype=float)
    p = q.shape[0]
    if chain.shape != (p, p):
        raise DimensionMismatch(f"chain must be ({p}, {p}), got shape {chain.shape}")
    for i in range(p):
        if chain[i, i] != 0.0:
            raise NonZeroDiagonal(i + 1, float(chain[i, i]))
    if np.any(q < 0) or not np.all(np.isfinite(q)):
        raise DimensionMismatch("exit rates must be finite and nonnegative")
    for i in range(p):
        if q[i] > 0:
            check_stochastic(chain[i : i + 1], what=f"chain row {i + 1}")
    return as_intensity(q[:, None] * chain)


def embedded_chain(q, regime=None):
    """Jump chain ``pi_ij = q_ij / q_i`` (zero diagonal) of an intensity matrix.

    Raises
    ------
    AbsorbingState
        If some state has exit rate zero.
    """
    q = as_intensity(q)
    rates = -np.diag(q)
    zero = np.flatnonzero(rates <= 0)
    if len(zero):
        raise AbsorbingState(int(zero[0]) + 1, regime)
    chain = q / rates[:, None]
    np.fill_diagonal(chain, 0.0)
    return chain


def _finish_stochastic(m):
    if np.any(m < -CLAMP_TOL):
        raise ArithmeticError(f"transition matrix entry {m.min()!r} is negative beyond clamp tolerance")
    m = np.clip(m, 0.0, None)
    return m / m.sum(axis=1, keepdims=True)


def matrix_exponential(q, t):
    """Transition matrix ``exp(Q t)`` by uniformization.

    With ``lam = max_i q_i`` and ``R = I + Q / lam``, ``exp(Q t)`` is the
    Poisson(``lam t``) mixture of the powers of ``R``. All terms are
    nonnegative, so the result is a proper stochastic matrix. Long horizons
    are halved until ``lam t <= 1`` and the result squared back up, which
    keeps ``exp(-lam t)`` away from underflow.
    """
    q = np.asarray(q, dtype=float)
    t = float(t)
    if t < 0:
        raise ValueError(f"time must be nonnegative, got {t}")
    p = q.shape[0]
    eye = np.eye(p)
    lam = float(np.max(-np.diag(q)))
    if t == 0.0 or lam <= 0.0:
        return eye
    squarings = max(0, math.ceil(math.log2(lam * t)))
    x = lam * t / 2.0**squarings
    r = np.clip(eye + q / lam, 0.0, None)

    weight = math.exp(-x)
    mass = weight
    term = eye
    acc = weight * eye
    k = 0
    while 1.0 - mass > TAIL_MASS and k < 200:
        k += 1
        term = term @ r
        weight *= x / k
        acc += weight * term
        mass += weight
    out = acc / acc.sum(axis=1, keepdims=True)
    for _ in range(squarings):
        out = out @ out
    return _finish_stochastic(out)


def mixture_transition(model, t):
    """``P(t) = sum_m S^(m) exp(Q^(m) t)``."""
    out = np.zeros((model.p, model.p))
    for m in range(model.M):
        out += model.switching[:, m][:, None] * matrix_exponential(model.intensities[m], t)
    return _finish_stochastic(out)


def n_step_matrix(model, n):
    """n-step matrix ``sum_m S^(m) Pi^(m)^n`` of the discrete-time mixture chain."""
    n = int(n)
    if n < 0:
        raise ValueError(f"step count must be nonnegative, got {n}")
    out = np.zeros((model.p, model.p))
    for m in range(model.M):
        chain = embedded_chain(model.intensities[m], regime=m + 1)
        out += model.switching[:, m][:, None] * np.linalg.matrix_power(chain, n)
    return _finish_stochastic(out)


# Three states, two regimes: the benchmark used in the simulation study.
BENCHMARK_EXIT_RATES = np.array([[1 / 3, 2 / 5, 1 / 2], [1 / 2, 2 / 5, 1 / 3]])
BENCHMARK_CHAINS = np.array(
    [
        [[0.0, 0.6, 0.4], [0.5, 0.0, 0.5], [0.4, 0.6, 0.0]],
        [[0.0, 0.8, 0.2], [0.5, 0.0, 0.5], [0.2, 0.8, 0.0]],
    ]
)
BENCHMARK_SWITCHING = np.array([[0.5, 0.5], [0.25, 0.75], [0.75, 0.25]])
BENCHMARK_PI = np.array([1 / 3, 1 / 3, 1 / 3])


def benchmark_model():
    """The three-state, two-regime benchmark mixture."""
    q = np.stack([build_intensity(BENCHMARK_EXIT_RATES[m], BENCHMARK_CHAINS[m]) for m in range(2)])
    return MixtureModel(BENCHMARK_PI, q, BENCHMARK_SWITCHING)
