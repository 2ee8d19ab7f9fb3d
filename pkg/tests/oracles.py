"""Independent reference computations used only by the tests."""

import mpmath
import numpy as np


def expm_taylor(q, t, dps=50):
    """``exp(Q t)`` by truncated Taylor series in extended precision.

    The argument is scaled by ``2**-s`` so the series converges in a few
    dozen terms, then squared back ``s`` times. All of it runs at ``dps``
    decimal digits.
    """
    with mpmath.workdps(dps):
        a = mpmath.matrix(np.asarray(q, dtype=float).tolist()) * mpmath.mpf(float(t))
        norm = max(sum(abs(a[i, j]) for j in range(a.cols)) for i in range(a.rows))
        s = 0
        while norm > 0.5:
            norm /= 2
            s += 1
        a = a / (mpmath.mpf(2) ** s)
        n = a.rows
        out = mpmath.eye(n)
        term = mpmath.eye(n)
        eps = mpmath.mpf(10) ** (-dps + 5)
        for k in range(1, 200):
            term = term * a / k
            out += term
            if max(abs(x) for x in term) < eps:
                break
        for _ in range(s):
            out = out * out
        return np.array([[float(out[i, j]) for j in range(n)] for i in range(n)])


def path_log_joint_mp(model, path, m, include_pi=True, dps=60):
    """log of the joint density of one path and regime ``m``, as a direct product.

    Multiplies one factor per sojourn (rate times survival) and the censored
    survival at the end, in extended precision, then takes the log.
    """
    with mpmath.workdps(dps):
        q = model.intensities[m]
        f = mpmath.mpf(float(model.switching[path.initial_state, m]))
        if include_pi:
            f *= mpmath.mpf(float(model.pi[path.initial_state]))
        states = path.states
        for (i, d), j in zip(path.events, states[1:]):
            f *= mpmath.mpf(float(q[i, j])) * mpmath.exp(-mpmath.mpf(float(-q[i, i])) * mpmath.mpf(d))
        i, d = path.censored
        f *= mpmath.exp(-mpmath.mpf(float(-q[i, i])) * mpmath.mpf(d))
        return float(mpmath.log(f))


def chi2_sf_quad(x, dof, dps=30):
    """Upper tail of chi-square by adaptive quadrature of the density."""
    with mpmath.workdps(dps):
        k = mpmath.mpf(dof) / 2
        norm = mpmath.mpf(2) ** k * mpmath.gamma(k)

        def density(u):
            return u ** (k - 1) * mpmath.exp(-u / 2) / norm

        x = mpmath.mpf(x)
        if x == 0:
            return 1.0
        # integrate the smaller side for accuracy
        mean = 2 * k
        if x < mean:
            return float(1 - mpmath.quad(density, [0, x / 2, x]))
        return float(mpmath.quad(density, [x, x + mean, mpmath.inf]))
