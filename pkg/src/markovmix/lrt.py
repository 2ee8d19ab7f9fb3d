"""Likelihood-ratio tests between nested fits.

Two comparisons are provided: a single Markov process against a mixture,
and the shared-chain (restricted) mixture against the unrestricted one.
EM estimates stand in for the mixture MLEs, which have no closed form;
each report records whether those fits converged.

The chi-square reference ignores that switching probabilities sit on the
boundary of the simplex under the null, so p-values are approximate.
"""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import gammaincc

from .errors import MismatchedDataset
from .mle import FitResult, estimate
from .stats import aggregate

__all__ = [
    "TestReport",
    "fit_markov",
    "chi_square_sf",
    "lrt_markov_vs_mixture",
    "lrt_restricted_vs_unrestricted",
    "compare",
]

NEGATIVE_TOL = 1e-6


def chi_square_sf(x, dof):
    """Upper tail ``P(chi2_dof > x)`` via the regularized upper incomplete gamma."""
    if x < 0:
        raise ValueError(f"x must be nonnegative, got {x}")
    if dof <= 0:
        raise ValueError(f"dof must be positive, got {dof}")
    if x == 0:
        return 1.0
    return float(gammaincc(0.5 * dof, 0.5 * x))


@dataclass
class TestReport:
    __test__ = False  # not a pytest class

    statistic: float
    dof: int
    p_value: float
    null: str
    alternative: str
    loglik_null: float
    loglik_alt: float
    null_converged: bool = True
    alt_converged: bool = True
    warning: str = ""

    def reject(self, alpha):
        return self.p_value < alpha

    def to_dict(self, alpha=None):
        d = asdict(self)
        if alpha is not None:
            d["alpha"] = alpha
            d["reject"] = bool(self.reject(alpha))
        return d

    def render(self, alpha=0.05):
        rows = [
            ("null", self.null),
            ("alternative", self.alternative),
            ("loglik null", f"{self.loglik_null:.6f}"),
            ("loglik alt", f"{self.loglik_alt:.6f}"),
            ("-2 ln Lambda", f"{self.statistic:.4e}"),
            ("dof", str(self.dof)),
            ("p-value", f"{self.p_value:.4g}"),
            (f"reject at {alpha:g}", "yes" if self.reject(alpha) else "no"),
        ]
        if not (self.null_converged and self.alt_converged):
            rows.append(("note", "a fit did not converge"))
        if self.warning:
            rows.append(("warning", self.warning))
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k:<{width}}  {v}" for k, v in rows)


def fit_markov(stats):
    """Single-regime MLE ``q_ij = sum_k N_ij / sum_k Z_i`` with its log-likelihood."""
    from .em import observed_loglik

    ws = aggregate(stats, np.ones((stats.n_paths, 1)))
    model, _, _, flags = estimate(ws)
    return FitResult(
        model,
        observed_loglik(model, stats),
        "markov",
        flags=flags,
        fingerprint=stats.fingerprint,
        n_paths=stats.n_paths,
        horizon=stats.horizon,
    )


def _check_same_data(stats, *fits):
    for fit in fits:
        if stats is not None and fit.n_paths is not None and fit.n_paths != stats.n_paths:
            raise MismatchedDataset(f"{fit.method} fit used {fit.n_paths} paths, dataset has {stats.n_paths}")
        fp = None if stats is None else stats.fingerprint
        if fp is not None and fit.fingerprint is not None and fit.fingerprint != fp:
            raise MismatchedDataset(f"{fit.method} fit was computed on a different dataset")
    prints = {f.fingerprint for f in fits if f.fingerprint is not None}
    if len(prints) > 1:
        raise MismatchedDataset("fits were computed on different datasets")


def _report(null_fit, alt_fit, dof):
    raw = 2.0 * (alt_fit.loglik - null_fit.loglik)
    note = ""
    stat = raw
    if raw < 0:
        if raw >= -NEGATIVE_TOL:
            stat = 0.0
        else:
            note = "alternative log-likelihood below the null; the alternative fit is likely a poor local optimum"
            warnings.warn(note, RuntimeWarning, stacklevel=3)
    return TestReport(
        statistic=stat,
        dof=int(dof),
        p_value=chi_square_sf(max(stat, 0.0), dof),
        null=null_fit.method,
        alternative=alt_fit.method,
        loglik_null=null_fit.loglik,
        loglik_alt=alt_fit.loglik,
        null_converged=null_fit.converged,
        alt_converged=alt_fit.converged,
        warning=note,
    )


def markov_vs_mixture_dof(p, M, restricted=False):
    # restricted alternative adds the speed factors and switching
    # probabilities of M-1 regimes: 2 p (M-1)
    return 2 * p * (M - 1) if restricted else p * p * (M - 1)


def restricted_vs_unrestricted_dof(p, M):
    return p * (p - 1) * (M - 1)


def lrt_markov_vs_mixture(stats, mixture_fit, restricted=None, markov_fit=None):
    """``-2 ln Lambda_1`` for a Markov null against a mixture alternative.

    ``restricted`` defaults to whether ``mixture_fit`` is a restricted fit.
    The initial-distribution term is common to both likelihoods and cancels.
    """
    if restricted is None:
        restricted = mixture_fit.restricted
    if markov_fit is None:
        markov_fit = fit_markov(stats)
    _check_same_data(stats, mixture_fit, markov_fit)
    p, M = mixture_fit.model.p, mixture_fit.model.M
    return _report(markov_fit, mixture_fit, markov_vs_mixture_dof(p, M, restricted))


def lrt_restricted_vs_unrestricted(stats, restricted_fit, unrestricted_fit):
    """``-2 ln Lambda_2`` for the shared-chain null against the unrestricted mixture."""
    _check_same_data(stats, restricted_fit, unrestricted_fit)
    p, M = unrestricted_fit.model.p, unrestricted_fit.model.M
    return _report(restricted_fit, unrestricted_fit, restricted_vs_unrestricted_dof(p, M))


def compare(null_fit, alt_fit, stats=None):
    """Pick the right test for a pair of fits by their method tags."""
    null_restricted = null_fit.method in ("em-restricted", "mle-restricted")
    alt_restricted = alt_fit.method in ("em-restricted", "mle-restricted")
    if null_fit.method == "markov":
        _check_same_data(stats, null_fit, alt_fit)
        p, M = alt_fit.model.p, alt_fit.model.M
        if M == 1:
            return _self_report(null_fit, alt_fit)
        return _report(null_fit, alt_fit, markov_vs_mixture_dof(p, M, alt_restricted))
    if null_restricted and not alt_restricted:
        return lrt_restricted_vs_unrestricted(stats, null_fit, alt_fit)
    if null_fit.method == alt_fit.method:
        _check_same_data(stats, null_fit, alt_fit)
        return _self_report(null_fit, alt_fit)
    raise ValueError(f"no nested test for null {null_fit.method!r} against {alt_fit.method!r}")


def _self_report(null_fit, alt_fit):
    """Comparison of two fits from the same family: no free parameters differ."""
    raw = 2.0 * (alt_fit.loglik - null_fit.loglik)
    stat = 0.0 if abs(raw) <= NEGATIVE_TOL else raw
    return TestReport(
        statistic=stat,
        dof=0,
        p_value=1.0,
        warning="" if stat == 0.0 else "fits of the same family differ; no reference distribution",
        null=null_fit.method,
        alternative=alt_fit.method,
        loglik_null=null_fit.loglik,
        loglik_alt=alt_fit.loglik,
        null_converged=null_fit.converged,
        alt_converged=alt_fit.converged,
    )
