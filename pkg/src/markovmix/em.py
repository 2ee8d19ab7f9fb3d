"""EM estimation when the regime of each path is hidden.

The E-step computes, per path, the posterior regime probabilities in the
log domain: for a horizon of 100 time units a path's likelihood is far
below the smallest double, so the ratio of raw products would underflow.
The M-step reuses the complete-data estimators with the posteriors as
weights. The initial distribution is estimated once from the observed
initial states and held fixed.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .errors import InfeasiblePath, NotConvergedWarning
from .mle import FitResult, estimate
from .model import MixtureModel
from .stats import DatasetStats, PathStats, aggregate

__all__ = [
    "EmOptions",
    "path_log_joint",
    "log_joint",
    "e_step",
    "m_step",
    "observed_loglik",
    "fit_em",
    "perturbed_markov_init",
]


@dataclass
class EmOptions:
    """EM controls.

    ``init`` is either a starting :class:`MixtureModel` or the string
    ``"perturbed-markov"``: the single-regime MLE copied into every regime
    with independent multiplicative jitter of +/- ``perturbation`` on each
    rate, and uniform switching probabilities.
    """

    tol: float = 1e-6
    max_iter: int = 1000
    init: Union[str, MixtureModel] = "perturbed-markov"
    restricted: bool = False
    seed: int = 0
    perturbation: float = 0.1
    # Re-estimate pi inside the loop as well (off: pi is fixed at the
    # empirical initial-state frequencies).
    update_pi: bool = False

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


def _log_tables(model, include_pi):
    M, p = model.M, model.p
    prior = model.switching * (model.pi[:, None] if include_pi else 1.0)
    with np.errstate(divide="ignore"):
        log_prior = np.log(prior)
    off = model.intensities.copy()
    for m in range(M):
        np.fill_diagonal(off[m], 0.0)
    zero = (off == 0.0)
    for m in range(M):
        np.fill_diagonal(zero[m], False)
    with np.errstate(divide="ignore"):
        logq = np.where(off > 0, np.log(np.where(off > 0, off, 1.0)), 0.0)
    rates = off.sum(axis=2)
    return log_prior, logq.reshape(M, p * p).T, zero.reshape(M, p * p).T.astype(float), rates.T


def log_joint(model, stats, include_pi=True):
    """``(N, M)`` matrix of ``log f(regime = m, path k)``.

    Each entry is ``log(pi_i s_i^(m))`` for the initial state plus
    ``sum_{i != j} N_ij log q_ij^(m) - q_i^(m) Z_i``. A positive jump count
    on a zero rate gives ``-inf``.
    """
    log_prior, logq, zero, rates = _log_tables(model, include_pi)
    n = stats.B.shape[0]
    nflat = stats.Njump.reshape(n, -1).astype(float)
    start = np.argmax(stats.B, axis=1)
    out = log_prior[start] + nflat @ logq - stats.Z @ rates
    blocked = (nflat @ zero) > 0
    out[blocked] = -np.inf
    return out


def path_log_joint(model, path_stats, include_pi=True):
    """Length-``M`` vector of ``log f(regime = m, path)`` for one path."""
    if isinstance(path_stats, PathStats):
        ds = DatasetStats(
            path_stats.B[None],
            np.asarray(path_stats.Njump)[None],
            np.asarray(path_stats.Nexit)[None],
            path_stats.Z[None],
            None,
            float("nan"),
        )
    else:
        ds = path_stats
    return log_joint(model, ds, include_pi)[0]


def _posteriors(lj, ids=None):
    top = lj.max(axis=1)
    bad = np.flatnonzero(~np.isfinite(top))
    if len(bad):
        k = int(bad[0])
        raise InfeasiblePath(k if ids is None else ids[k])
    w = np.exp(lj - top[:, None])
    total = w.sum(axis=1)
    return w / total[:, None], top + np.log(total)


def e_step(model, stats):
    """Posterior regime probabilities, ``(N, M)``, rows summing to one.

    The initial-state probability is common to all regimes and cancels.
    """
    post, _ = _posteriors(log_joint(model, stats, include_pi=False))
    return post


def m_step(posteriors, stats, restricted=False, previous=None):
    """Re-estimated model from posterior weights.

    The initial distribution is carried over from ``previous`` when given,
    otherwise estimated from the initial states. Rates the weights leave
    undefined are also carried over from ``previous``.
    """
    ws = aggregate(stats, posteriors)
    pi = None if previous is None else previous.pi
    model, _, _, _ = estimate(ws, restricted=restricted, fallback=previous, fallback_psi=_psi_of(previous), pi=pi)
    return model


def observed_loglik(model, stats):
    """Mixture log-likelihood ``sum_k log sum_m f(regime = m, path k)``.

    Returns ``-inf`` if some path is impossible under every regime.
    """
    lj = log_joint(model, stats)
    top = lj.max(axis=1)
    if not np.all(np.isfinite(top)):
        return -np.inf
    return float(np.sum(top + np.log(np.exp(lj - top[:, None]).sum(axis=1))))


def _psi_of(model):
    if model is None or model.M < 2:
        return None
    rates = model.exit_rates
    ref = rates[-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        psi = np.where(ref > 0, rates[:-1] / np.where(ref > 0, ref, 1.0), 1.0)
    return psi


def _markov_model(stats):
    from .lrt import fit_markov

    return fit_markov(stats).model


def perturbed_markov_init(stats, M, restricted=False, seed=0, perturbation=0.1):
    """Starting model: jittered copies of the single-regime MLE."""
    base = _markov_model(stats)
    rng = np.random.default_rng(seed)
    q0 = base.intensities[0]
    p = base.p
    if restricted:
        psi = rng.uniform(1 - perturbation, 1 + perturbation, size=(M - 1, p))
        off = q0.copy()
        np.fill_diagonal(off, 0.0)
        qs = [psi[m][:, None] * off for m in range(M - 1)] + [off]
    else:
        qs = [q0 * rng.uniform(1 - perturbation, 1 + perturbation, size=(p, p)) for _ in range(M)]
    return MixtureModel(base.pi, np.stack(qs), np.full((p, M), 1.0 / M))


def _parameter_vector(model, psi):
    off = model.intensities.copy()
    for m in range(model.M):
        np.fill_diagonal(off[m], 0.0)
    parts = [off.ravel(), model.switching.ravel()]
    if psi is not None:
        parts.append(np.asarray(psi).ravel())
    return np.concatenate(parts)


def fit_em(stats, M=2, options=None, **kwargs):
    """Fit an ``M``-regime mixture to unlabeled paths by EM.

    Iterates E- and M-steps until the sup-norm change of all free
    parameters (off-diagonal rates, switching probabilities and, for
    restricted fits, speed factors) is at most ``options.tol``.

    Returns
    -------
    FitResult
        ``trace`` holds one dict per iteration with the observed
        log-likelihood of the iterate entering it, the parameter change it
        produced and the elapsed wall time.
    """
    if options is None:
        options = EmOptions(**kwargs)
    elif kwargs:
        raise TypeError("pass either options or keyword arguments")
    if isinstance(options.init, MixtureModel):
        current = options.init
        M = current.M
    else:
        current = perturbed_markov_init(stats, M, options.restricted, options.seed, options.perturbation)
    if options.restricted and M < 2:
        raise ValueError("a restricted mixture needs at least two regimes")

    pi_hat = stats.B.sum(axis=0) / stats.n_paths
    if not options.update_pi:
        current = MixtureModel(pi_hat, current.intensities, current.switching)
    psi = _psi_of(current) if options.restricted else None
    chains = None
    flags = []
    trace = []
    start = time.perf_counter()
    converged = False
    iterations = 0
    theta = _parameter_vector(current, psi)

    for it in range(options.max_iter):
        post, per_path = _posteriors(log_joint(current, stats))
        ll = float(np.sum(per_path))
        ws = aggregate(stats, post)
        pi = None if options.update_pi else current.pi
        new, new_psi, chains, step_flags = estimate(
            ws,
            restricted=options.restricted,
            fallback=current,
            fallback_psi=psi,
            pi=pi,
        )
        if options.update_pi:
            new = MixtureModel(ws.B.sum(axis=0) / ws.n_paths, new.intensities, new.switching)
        for f in step_flags:
            if f not in flags:
                flags.append(f)
        new_theta = _parameter_vector(new, new_psi)
        delta = float(np.max(np.abs(new_theta - theta)))
        iterations = it + 1
        trace.append(
            {"iteration": it, "loglik": ll, "delta": delta, "wall_time": time.perf_counter() - start}
        )
        current, psi, theta = new, new_psi, new_theta
        if delta <= options.tol:
            converged = True
            break

    if not converged:
        warnings.warn(
            f"EM stopped after {iterations} iterations without reaching tol={options.tol}",
            NotConvergedWarning,
            stacklevel=2,
        )
    return FitResult(
        current,
        observed_loglik(current, stats),
        "em-restricted" if options.restricted else "em",
        iterations=iterations,
        converged=converged,
        psi=psi,
        chains=chains,
        flags=flags,
        trace=trace,
        fingerprint=stats.fingerprint,
        n_paths=stats.n_paths,
        horizon=stats.horizon,
    )
