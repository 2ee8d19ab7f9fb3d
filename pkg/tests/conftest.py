import time

import numpy as np
import pytest

from markovmix import benchmark_model, dataset_stats, simulate_dataset
from markovmix.simulate import default_workers

N_LARGE = 20_000
HORIZON = 100.0
SEED = 1


TIMINGS = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running statistical checks")
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    results = item.config.stash.setdefault(_ACCEPTANCE, {})
    number, title = marker.args
    if rep.when == "call" or (rep.when == "setup" and rep.failed):
        detail = "; ".join(str(v) for k, v in item.user_properties if k == "measured")
        results[number] = (title, "PASS" if rep.passed else "FAIL", detail)


_ACCEPTANCE = pytest.StashKey()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(_ACCEPTANCE, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        title, status, detail = results[number]
        line = f"criterion {number:>2} {status}  {title}"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def truth():
    return benchmark_model()


@pytest.fixture(scope="session")
def workers():
    return min(default_workers(), 8)


@pytest.fixture(scope="session")
def large_paths(truth, workers):
    start = time.perf_counter()
    paths = simulate_dataset(truth, N_LARGE, HORIZON, SEED, keep_label=True, workers=workers)
    TIMINGS["simulate"] = time.perf_counter() - start
    return paths


@pytest.fixture(scope="session")
def large_stats(large_paths, truth):
    return dataset_stats(large_paths, truth.p, fingerprint="large-seed-1")


@pytest.fixture(scope="session")
def large_hidden(large_paths, truth):
    """The large dataset with regime labels stripped."""
    return dataset_stats([x.unlabeled() for x in large_paths], truth.p, fingerprint="large-seed-1")


@pytest.fixture(scope="session")
def large_fits(large_hidden):
    from markovmix import fit_em, fit_markov

    fits = {}
    for name, kwargs in (("markov", None), ("em", {}), ("em-restricted", {"restricted": True})):
        start = time.perf_counter()
        fits[name] = fit_markov(large_hidden) if kwargs is None else fit_em(large_hidden, 2, seed=SEED, **kwargs)
        TIMINGS[name] = time.perf_counter() - start
    return fits


def match_regimes(fit_model, truth_model):
    """Regime order of ``fit_model`` closest to ``truth_model`` in exit rates."""
    from itertools import permutations

    best = None
    for order in permutations(range(truth_model.M)):
        err = np.max(np.abs(fit_model.exit_rates[list(order)] - truth_model.exit_rates))
        if best is None or err < best[0]:
            best = (err, list(order))
    return best[1]


def random_intensity(rng, p, scale=2.0, zero_prob=0.0):
    q = rng.uniform(0, scale, size=(p, p))
    if zero_prob:
        q[rng.uniform(size=(p, p)) < zero_prob] = 0.0
    np.fill_diagonal(q, 0.0)
    np.fill_diagonal(q, -q.sum(axis=1))
    return q
