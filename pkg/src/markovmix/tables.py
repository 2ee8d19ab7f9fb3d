"""Plain-text parameter tables."""

import numpy as np


def parameter_table(model, digits=4):
    """Rows ``state | pi_i | q_i^(1..M) | s_i^(1..M)``."""
    M = model.M
    head = ["State (i)", "pi_i"] + [f"q_i^({m + 1})" for m in range(M)] + [f"s_i^({m + 1})" for m in range(M)]
    rows = []
    rates = model.exit_rates
    for i in range(model.p):
        row = [str(i + 1), f"{model.pi[i]:.{digits}f}"]
        row += [f"{rates[m, i]:.{digits}f}" for m in range(M)]
        row += [f"{model.switching[i, m]:.{digits}f}" for m in range(M)]
        rows.append(row)
    return _grid(head, rows)


def matrix_block(name, mat, digits=4):
    lines = [f"{name} ="]
    for row in np.asarray(mat):
        lines.append("  " + "  ".join("   nan" if np.isnan(x) else f"{x:.{digits}f}" for x in row))
    return "\n".join(lines)


def fit_report(fit, digits=4):
    parts = [f"method: {fit.method}", f"log-likelihood: {fit.loglik:.6f}"]
    if fit.method.startswith("em"):
        parts.append(f"iterations: {fit.iterations} (converged: {'yes' if fit.converged else 'no'})")
    parts += ["", parameter_table(fit.model, digits), ""]
    for m in range(fit.model.M):
        parts.append(matrix_block(f"Pi^({m + 1})", fit.chains[m], digits))
    if fit.psi is not None:
        for m, row in enumerate(fit.psi):
            parts.append(f"Psi^({m + 1}) = diag(" + ", ".join(f"{x:.{digits}f}" for x in row) + ")")
    if fit.flags:
        parts.append("flags: " + "; ".join(" ".join(str(x) for x in f if x is not None) for f in fit.flags))
    return "\n".join(parts)


def _grid(head, rows):
    widths = [max(len(h), *(len(r[c]) for r in rows)) for c, h in enumerate(head)]
    rule = "  ".join("-" * w for w in widths)
    out = ["  ".join(h.rjust(w) for h, w in zip(head, widths)), rule]
    out += ["  ".join(x.rjust(w) for x, w in zip(r, widths)) for r in rows]
    return "\n".join(out)
