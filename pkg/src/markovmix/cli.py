"""Command-line interface: ``markovmix simulate | fit | test | reproduce``."""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from collections import Counter
from pathlib import Path

import numpy as np

from . import io as mio
from .em import EmOptions, fit_em
from .errors import (
    LabelRequired,
    MarkovMixError,
    MismatchedDataset,
    NotConvergedWarning,
    ParseError,
    ValidationError,
    InvariantViolation,
)
from .lrt import compare, fit_markov, lrt_markov_vs_mixture, lrt_restricted_vs_unrestricted
from .mle import mle_restricted, mle_unrestricted
from .model import benchmark_model
from .simulate import default_workers, simulate_dataset
from .stats import dataset_stats
from .tables import fit_report, parameter_table, matrix_block

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_INVALID = 3
EXIT_NOT_CONVERGED = 4
EXIT_MISMATCH = 5

METHODS = ("mle", "mle-restricted", "em", "em-restricted", "markov")


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {v}")
    return v


def _positive_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {v}")
    return v


def _load_model(name):
    if name == "benchmark":
        return benchmark_model()
    return mio.read_model(name)


def _load_stats(filename, p=None):
    paths = mio.read_dataset(filename)
    if not paths:
        raise ParseError(None, f"{filename}: empty dataset")
    fp = mio.fingerprint_dataset(paths)
    if p is None:
        p = max(max(x.states) for x in paths) + 1
    return paths, dataset_stats(paths, p, fingerprint=fp.digest)


def cmd_simulate(args):
    model = _load_model(args.model)
    paths = simulate_dataset(
        model, args.n_paths, args.horizon, args.seed, keep_label=args.labeled, workers=args.workers
    )
    fp = mio.write_dataset(args.out, paths)
    print(f"wrote {len(paths)} paths to {args.out}")
    print(f"N = {len(paths)}, T = {args.horizon:g}, seed = {args.seed}")
    starts = Counter(x.initial_state for x in paths)
    print("initial-state frequencies: " + ", ".join(
        f"{i + 1}: {starts.get(i, 0) / len(paths):.4f}" for i in range(model.p)))
    if args.labeled:
        labels = Counter(x.regime for x in paths)
        print("regime counts: " + ", ".join(f"{m + 1}: {labels.get(m, 0)}" for m in range(model.M)))
    print(f"fingerprint: {fp.digest}")
    return EXIT_OK


def _fit(method, stats, M, init=None, tol=1e-6, max_iter=1000, seed=0):
    if method == "markov":
        return fit_markov(stats)
    if method in ("mle", "mle-restricted"):
        if not stats.labeled:
            raise LabelRequired(f"method {method} needs a labeled dataset")
        return (mle_unrestricted if method == "mle" else mle_restricted)(stats, M=M)
    options = EmOptions(
        tol=tol,
        max_iter=max_iter,
        init=init if init is not None else "perturbed-markov",
        restricted=method == "em-restricted",
        seed=seed,
    )
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NotConvergedWarning)
        return fit_em(stats, M, options)


def cmd_fit(args):
    init = mio.read_model(args.init) if args.init else None
    p = init.p if init is not None else args.states
    _, stats = _load_stats(args.dataset, p)
    M = init.M if init is not None else args.regimes
    fit = _fit(args.method, stats, M, init, args.tol, args.max_iter, args.seed)
    fit.seed = args.seed if args.method.startswith("em") else None
    if args.out:
        mio.write_fit(args.out, fit)
    if args.trace and fit.trace is not None:
        mio.write_trace(args.trace, fit.trace)
    print(fit_report(fit))
    if not fit.converged:
        print(f"EM did not converge within {args.max_iter} iterations", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_test(args):
    null = mio.read_fit(args.null_fit)
    alt = mio.read_fit(args.alt_fit)
    _, stats = _load_stats(args.dataset, null.model.p)
    report = compare(null, alt, stats)
    print(report.render(args.alpha))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(report.to_dict(args.alpha), fh, indent=2)
            fh.write("\n")
    return EXIT_OK


def _step_coordinates(path):
    """(time, state) vertices of the path's step function, states 1-based."""
    rows = [(0.0, path.initial_state + 1)]
    t = 0.0
    states = path.states
    for (_, d), nxt in zip(path.events, states[1:]):
        t += d
        rows.append((t, nxt + 1))
    rows.append((path.horizon, states[-1] + 1))
    return rows


def _write_text(path, text):
    Path(path).write_text(text if text.endswith("\n") else text + "\n", encoding="utf-8")


def cmd_reproduce(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    truth = benchmark_model()
    mio.write_model(out / "model.json", truth)
    _write_text(
        out / "table1_truth.txt",
        "True parameters\n\n" + parameter_table(truth) + "\n\n"
        + "\n".join(matrix_block(f"Pi^({m + 1})", c) for m, c in enumerate(truth.embedded_chains())),
    )

    paths = simulate_dataset(truth, args.n_paths, args.horizon, args.seed, keep_label=True, workers=args.workers)
    fp = mio.write_dataset(out / "dataset.jsonl", paths)
    # EM sees the paths only; labels stay in the file for the figure data
    stats = dataset_stats([x.unlabeled() for x in paths], truth.p, fingerprint=fp.digest)

    fits = {}
    for method in ("markov", "em", "em-restricted"):
        fit = _fit(method, stats, truth.M, tol=args.tol, max_iter=args.max_iter, seed=args.seed)
        fit.seed = args.seed
        fits[method] = fit
        mio.write_fit(out / f"fit_{method.replace('-', '_')}.json", fit)
        if fit.trace is not None:
            mio.write_trace(out / f"trace_{method.replace('-', '_')}.tsv", fit.trace, include_time=False)
    _write_text(out / "table2_em.txt", "Unrestricted mixture, EM estimates\n\n" + fit_report(fits["em"]))
    _write_text(out / "table3_em_restricted.txt", "Restricted mixture, EM estimates\n\n" + fit_report(fits["em-restricted"]))
    _write_text(out / "fit_markov.txt", "Single Markov process\n\n" + fit_report(fits["markov"]))

    reports = {
        "markov_vs_em": lrt_markov_vs_mixture(stats, fits["em"], markov_fit=fits["markov"]),
        "markov_vs_em_restricted": lrt_markov_vs_mixture(stats, fits["em-restricted"], markov_fit=fits["markov"]),
        "restricted_vs_unrestricted": lrt_restricted_vs_unrestricted(stats, fits["em-restricted"], fits["em"]),
    }
    for name, rep in reports.items():
        _write_text(out / f"test_{name}.txt", rep.render(args.alpha))
        with open(out / f"test_{name}.json", "w", encoding="utf-8") as fh:
            json.dump(rep.to_dict(args.alpha), fh, indent=2)
            fh.write("\n")

    fig = out / "paths"
    fig.mkdir(exist_ok=True)
    rng = np.random.default_rng(args.seed)
    chosen = sorted(rng.choice(len(paths), size=min(args.paths_figure, len(paths)), replace=False).tolist())
    for k in chosen:
        path = paths[k]
        lines = [f"# path {path.id}, regime {path.regime + 1}", "time\tstate"]
        lines += [f"{t!r}\t{s}" for t, s in _step_coordinates(path)]
        _write_text(fig / f"path_{path.id}.tsv", "\n".join(lines))

    summary = [
        f"N = {args.n_paths}, T = {args.horizon:g}, seed = {args.seed}",
        f"dataset fingerprint: {fp.digest}",
        "",
        fit_report(fits["em"]),
        "",
        fit_report(fits["em-restricted"]),
        "",
    ]
    for name, rep in reports.items():
        summary += [f"[{name}]", rep.render(args.alpha), ""]
    _write_text(out / "summary.txt", "\n".join(summary))
    print("\n".join(summary))
    if not all(f.converged for f in fits.values()):
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="markovmix", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    workers = dict(type=_positive_int, default=None, help="worker processes (env MARKOVMIX_WORKERS)")

    p = sub.add_parser("simulate", help="simulate a path dataset")
    p.add_argument("--model", required=True, help="model config file, or 'benchmark'")
    p.add_argument("--n-paths", type=_positive_int, required=True)
    p.add_argument("--horizon", type=_positive_float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--labeled", action="store_true", help="keep regime labels")
    p.add_argument("--out", required=True)
    p.add_argument("--workers", **workers)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit a model to a dataset")
    p.add_argument("dataset")
    p.add_argument("--method", choices=METHODS, required=True)
    p.add_argument("--init", help="starting model config for EM")
    p.add_argument("--regimes", type=_positive_int, default=2)
    p.add_argument("--states", type=_positive_int, default=None, help="state count (default: inferred)")
    p.add_argument("--tol", type=_positive_float, default=1e-6)
    p.add_argument("--max-iter", type=_positive_int, default=1000)
    p.add_argument("--seed", type=int, default=0, help="seed of the default EM initialization")
    p.add_argument("--trace", help="write the EM trace here")
    p.add_argument("--out")
    p.add_argument("--workers", **workers)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("test", help="likelihood-ratio test between two fits")
    p.add_argument("dataset")
    p.add_argument("null_fit")
    p.add_argument("alt_fit")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--out")
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("reproduce", help="run the full simulation study")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", required=True)
    p.add_argument("--n-paths", type=_positive_int, default=20_000)
    p.add_argument("--horizon", type=_positive_float, default=100.0)
    p.add_argument("--paths-figure", type=_positive_int, default=5)
    p.add_argument("--tol", type=_positive_float, default=1e-6)
    p.add_argument("--max-iter", type=_positive_int, default=1000)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--workers", **workers)
    p.set_defaults(func=cmd_reproduce)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "workers", 1) is None:
        args.workers = default_workers()
    try:
        return args.func(args)
    except MismatchedDataset as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except (ValidationError, ParseError, InvariantViolation, LabelRequired) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except MarkovMixError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
