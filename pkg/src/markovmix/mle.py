"""Closed-form maximum likelihood under complete observation.

Every estimator here is a ratio of weighted totals from
:func:`markovmix.stats.aggregate`. With one-hot weights (known regimes)
they are the complete-data MLEs; with posterior weights they are the EM
M-step, so both share this code path.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import xlogy

from .errors import LabelRequired, NoExit, NoInitial, NoOccupation
from .model import MixtureModel, RestrictedSpec, build_intensity
from .stats import DatasetStats, WeightedStats, aggregate

__all__ = [
    "FitResult",
    "estimate",
    "mle_unrestricted",
    "mle_restricted",
    "complete_loglik",
]


@dataclass
class FitResult:
    """Fitted parameters with provenance.

    ``flags`` lists estimator fallbacks as ``(kind, state, regime)`` with
    1-based labels, e.g. ``("no-occupation", 2, 1)`` when regime 1 never
    visited state 2 and its rates were substituted.
    """

    model: MixtureModel
    loglik: float
    method: str
    iterations: int = 0
    converged: bool = True
    psi: Optional[np.ndarray] = None
    chains: Optional[np.ndarray] = None
    flags: list = field(default_factory=list)
    trace: Optional[list] = None
    fingerprint: Optional[str] = None
    n_paths: Optional[int] = None
    horizon: Optional[float] = None
    seed: Optional[int] = None

    def __post_init__(self):
        if self.chains is None:
            self.chains = _chains_or_nan(self.model)

    @property
    def restricted(self):
        return self.psi is not None


def _chains_or_nan(model):
    out = np.full((model.M, model.p, model.p), np.nan)
    rates = model.exit_rates
    for m in range(model.M):
        for i in range(model.p):
            if rates[m, i] > 0:
                row = model.intensities[m, i] / rates[m, i]
                row[i] = 0.0
                out[m, i] = row
    return out


def _switching(ws, fallback, flags):
    p, M = ws.p, ws.M
    s = np.empty((p, M))
    for i in range(p):
        total = ws.B_total[i]
        if M == 1:
            s[i] = 1.0
        elif total > 0:
            s[i] = ws.B[:, i] / total
        elif fallback is not None:
            s[i] = fallback.switching[i]
            flags.append(("no-initial", i + 1, None))
        else:
            raise NoInitial(i + 1)
    return s


def _initial(ws):
    return ws.B_total / ws.n_paths


def _unrestricted_rates(ws, fallback, flags):
    M, p = ws.M, ws.p
    q = np.zeros((M, p, p))
    for m in range(M):
        for i in range(p):
            denom = ws.Z[m, i]
            if denom > 0:
                q[m, i] = ws.Njump[m, i] / denom
            elif fallback is not None:
                q[m, i] = fallback.intensities[m, i]
                flags.append(("no-occupation", i + 1, m + 1))
            else:
                raise NoOccupation(i + 1, m + 1)
            q[m, i, i] = 0.0
    return q


def _restricted_rates(ws, fallback, fallback_psi, flags):
    """Shared-chain rates; the last regime is the ``psi = 1`` reference."""
    M, p = ws.M, ws.p
    ref = M - 1
    exit_rates = np.zeros(p)
    psi = np.ones((M - 1, p))
    chain = np.zeros((p, p))
    fb_rates = None if fallback is None else fallback.exit_rates[ref]
    for i in range(p):
        if ws.Z[ref, i] > 0 and ws.Nexit[ref, i] > 0:
            exit_rates[i] = ws.Nexit[ref, i] / ws.Z[ref, i]
        elif fallback is not None and fb_rates[i] > 0:
            exit_rates[i] = fb_rates[i]
            flags.append(("no-occupation", i + 1, M))
        elif ws.Z[ref, i] > 0:
            exit_rates[i] = 0.0
        else:
            raise NoOccupation(i + 1, M)

        total_exits = ws.Nexit_total[i]
        if total_exits > 0:
            chain[i] = ws.Njump_total[i] / total_exits
            chain[i, i] = 0.0
        elif fallback is not None and fb_rates[i] > 0:
            chain[i] = fallback.intensities[ref, i] / fb_rates[i]
            chain[i, i] = 0.0
            flags.append(("no-exit", i + 1, None))
        else:
            raise NoExit(i + 1)

        for m in range(M - 1):
            denom = exit_rates[i] * ws.Z[m, i]
            if denom > 0:
                psi[m, i] = ws.Nexit[m, i] / denom
            elif fallback_psi is not None:
                psi[m, i] = fallback_psi[m, i]
                flags.append(("no-occupation", i + 1, m + 1))
            else:
                raise NoOccupation(i + 1, m + 1)
    base = build_intensity(exit_rates, chain)
    return RestrictedSpec(base, psi), chain


def estimate(ws, restricted=False, fallback=None, fallback_psi=None, pi=None):
    """Closed-form estimates from weighted totals.

    Parameters
    ----------
    ws : WeightedStats
    restricted : bool
        Shared embedded chain with state-wise speed factors.
    fallback : MixtureModel, optional
        Source of values for parameters the data leaves undefined. Without
        it such parameters raise :class:`~markovmix.errors.EstimationError`.
    fallback_psi : array, optional
        Speed factors used when a restricted ``psi`` is undefined.
    pi : array, optional
        Initial distribution to use instead of the empirical one.

    Returns
    -------
    model : MixtureModel
    psi : array or None
    chains : (M, p, p) array or None
        Shared chain repeated per regime for restricted fits.
    flags : list
    """
    flags = []
    s = _switching(ws, fallback, flags)
    init = _initial(ws) if pi is None else pi
    if restricted:
        if ws.M < 2:
            raise ValueError("a restricted mixture needs at least two regimes")
        spec, chain = _restricted_rates(ws, fallback, fallback_psi, flags)
        model = MixtureModel(init, spec.expand(), s)
        chains = np.stack([chain] * ws.M)
        return model, spec.psi.copy(), chains, flags
    q = _unrestricted_rates(ws, fallback, flags)
    return MixtureModel(init, q, s), None, None, flags


def _labeled_totals(stats, M):
    if isinstance(stats, WeightedStats):
        return stats
    if not stats.labeled:
        raise LabelRequired("complete-data estimation needs regime labels")
    return aggregate(stats, M=M)


def mle_unrestricted(stats, M=None, fallback=None):
    """Complete-data MLE of ``(pi, Q^(m), s^(m))``.

    ``stats`` is a labeled :class:`DatasetStats` (then ``M`` defaults to the
    largest label + 1) or hard-label :class:`WeightedStats`.
    """
    if isinstance(stats, DatasetStats) and M is None:
        if not stats.labeled:
            raise LabelRequired("complete-data estimation needs regime labels")
        M = int(stats.labels.max()) + 1
    ws = _labeled_totals(stats, M)
    model, _, _, flags = estimate(ws, fallback=fallback)
    return FitResult(
        model,
        complete_loglik(model, ws),
        "mle-complete",
        flags=flags,
        fingerprint=getattr(stats, "fingerprint", None),
        n_paths=ws.n_paths,
        horizon=getattr(stats, "horizon", None),
    )


def mle_restricted(stats, M=None, fallback=None):
    """Complete-data MLE of the shared-chain mixture; last regime is the reference."""
    if isinstance(stats, DatasetStats) and M is None:
        if not stats.labeled:
            raise LabelRequired("complete-data estimation needs regime labels")
        M = max(2, int(stats.labels.max()) + 1)
    ws = _labeled_totals(stats, M)
    model, psi, chains, flags = estimate(ws, restricted=True, fallback=fallback)
    return FitResult(
        model,
        complete_loglik(model, ws),
        "mle-restricted",
        psi=psi,
        chains=chains,
        flags=flags,
        fingerprint=getattr(stats, "fingerprint", None),
        n_paths=ws.n_paths,
        horizon=getattr(stats, "horizon", None),
    )


def complete_loglik(model, stats):
    """Complete-data log-likelihood with known regimes.

    Returns ``-inf`` when a positive count meets a zero rate, or a path
    starts where its regime has zero prior mass. ``0 log 0`` is taken as 0.
    """
    ws = _labeled_totals(stats, model.M)
    total = 0.0
    for m in range(model.M):
        q = model.intensities[m].copy()
        np.fill_diagonal(q, 0.0)
        total += float(np.sum(xlogy(ws.B[m], model.switching[:, m] * model.pi)))
        total += float(np.sum(xlogy(ws.Njump[m], q)))
        total -= float(np.sum(q.sum(axis=1) * ws.Z[m]))
    return total
