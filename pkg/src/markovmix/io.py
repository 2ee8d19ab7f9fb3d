"""File formats: model configs, path datasets, fit results and EM traces.

States and regimes are 1-based in every file. See FORMATS.md for the
byte-level layout.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvariantViolation, ParseError, ValidationError
from .mle import FitResult
from .model import MixtureModel, RestrictedSpec, build_intensity, embedded_chain
from .simulate import SamplePath

__all__ = [
    "ConfigError",
    "DatasetFingerprint",
    "format_record",
    "parse_record",
    "write_dataset",
    "iter_dataset",
    "read_dataset",
    "fingerprint_dataset",
    "model_to_dict",
    "model_from_dict",
    "write_model",
    "read_model",
    "write_fit",
    "read_fit",
    "write_trace",
    "write_weighted_stats",
]

DURATION_TOL = 1e-9
_RECORD_FIELDS = {"id", "initial", "regime", "events", "censored", "horizon"}
_MODEL_FIELDS = {"p", "M", "pi", "regimes", "s", "restricted"}


class ConfigError(ValidationError):
    """Model config does not match the schema; ``field`` is a dotted path."""

    def __init__(self, field, reason):
        self.field = field
        super().__init__(f"{field}: {reason}")


@dataclass(frozen=True)
class DatasetFingerprint:
    digest: str
    n_paths: int
    horizon: float
    labeled: bool

    def __str__(self):
        return self.digest


def _num(x):
    return "%.17g" % x


def format_record(path):
    """One dataset line (without newline) for ``path``."""
    events = ", ".join(f'{{"state": {s + 1}, "dur": {_num(d)}}}' for s, d in path.events)
    regime = "null" if path.regime is None else str(path.regime + 1)
    cs, cd = path.censored
    return (
        f'{{"id": {path.id}, "initial": {path.initial_state + 1}, "regime": {regime}, '
        f'"events": [{events}], "censored": {{"state": {cs + 1}, "dur": {_num(cd)}}}, '
        f'"horizon": {_num(path.horizon)}}}'
    )


def _state_dur(obj, line, where):
    if not isinstance(obj, dict) or set(obj) != {"state", "dur"}:
        raise ParseError(line, f"{where} must be an object with fields state and dur")
    s, d = obj["state"], obj["dur"]
    if not isinstance(s, int) or isinstance(s, bool):
        raise ParseError(line, f"{where}.state must be an integer")
    if not isinstance(d, (int, float)) or isinstance(d, bool):
        raise ParseError(line, f"{where}.dur must be a number")
    return s - 1, float(d)


def parse_record(text, line=None):
    """Parse and check one dataset line into a :class:`SamplePath`."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(line, f"malformed record: {exc.msg}") from None
    if not isinstance(obj, dict):
        raise ParseError(line, "record must be an object")
    missing = _RECORD_FIELDS - set(obj)
    if missing:
        raise ParseError(line, f"missing field(s) {', '.join(sorted(missing))}")
    extra = set(obj) - _RECORD_FIELDS
    if extra:
        raise ParseError(line, f"unknown field(s) {', '.join(sorted(extra))}")
    rid = obj["id"]
    if not isinstance(rid, int) or isinstance(rid, bool):
        raise ParseError(line, "id must be an integer")
    if not isinstance(obj["initial"], int) or isinstance(obj["initial"], bool):
        raise ParseError(line, "initial must be an integer")
    regime = obj["regime"]
    if regime is not None and (not isinstance(regime, int) or isinstance(regime, bool)):
        raise ParseError(line, "regime must be an integer or null")
    if not isinstance(obj["events"], list):
        raise ParseError(line, "events must be an array")
    horizon = obj["horizon"]
    if not isinstance(horizon, (int, float)) or isinstance(horizon, bool):
        raise ParseError(line, "horizon must be a number")
    events = tuple(_state_dur(e, line, f"events[{n}]") for n, e in enumerate(obj["events"]))
    censored = _state_dur(obj["censored"], line, "censored")
    path = SamplePath(
        rid,
        obj["initial"] - 1,
        None if regime is None else regime - 1,
        events,
        censored,
        float(horizon),
    )
    _check_record(path)
    return path


def _check_record(path):
    if not path.horizon > 0:
        raise InvariantViolation(path.id, f"horizon must be positive, got {path.horizon!r}")
    states = path.states
    if min(states) < 0 or path.initial_state < 0 or (path.regime is not None and path.regime < 0):
        raise InvariantViolation(path.id, "state and regime labels start at 1")
    if states[0] != path.initial_state:
        raise InvariantViolation(path.id, "first sojourn state differs from initial")
    for a, b in zip(states, states[1:]):
        if a == b:
            raise InvariantViolation(path.id, f"consecutive sojourns in state {a + 1}")
    durs = [d for _, d in path.events] + [path.censored[1]]
    for d in durs:
        if not d > 0 or not math.isfinite(d):
            raise InvariantViolation(path.id, f"non-positive duration {d!r}")
    total = math.fsum(durs)
    if abs(total - path.horizon) > DURATION_TOL * max(1.0, path.horizon):
        raise InvariantViolation(path.id, f"durations sum to {total!r}, horizon is {path.horizon!r}")


def write_dataset(filename, paths):
    """Write paths one record per line; returns the dataset fingerprint."""
    h = hashlib.sha256()
    n, horizon, labeled = 0, None, True
    with open(filename, "w", encoding="utf-8", newline="\n") as fh:
        for path in paths:
            line = format_record(path) + "\n"
            fh.write(line)
            h.update(line.encode())
            n += 1
            horizon = path.horizon
            labeled = labeled and path.regime is not None
    return DatasetFingerprint(h.hexdigest(), n, horizon, labeled and n > 0)


def iter_dataset(filename):
    """Yield paths one at a time; memory use is bounded by one record."""
    with open(filename, encoding="utf-8") as fh:
        for lineno, text in enumerate(fh, start=1):
            if not text.strip():
                continue
            yield parse_record(text, lineno)


def read_dataset(filename):
    return list(iter_dataset(filename))


def fingerprint_dataset(paths):
    """Fingerprint of the canonical serialization, in record order."""
    h = hashlib.sha256()
    n, horizon, labeled = 0, None, True
    for path in paths:
        h.update((format_record(path) + "\n").encode())
        n += 1
        horizon = path.horizon
        labeled = labeled and path.regime is not None
    return DatasetFingerprint(h.hexdigest(), n, horizon, labeled and n > 0)


# -- model configs ---------------------------------------------------------


def _matrix(value, field, shape):
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(field, "must be a numeric array") from None
    if arr.shape != shape:
        raise ConfigError(field, f"expected shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ConfigError(field, "entries must be finite")
    return arr


def _check_fields(obj, allowed, field):
    if not isinstance(obj, dict):
        raise ConfigError(field, "must be an object")
    extra = set(obj) - allowed
    if extra:
        raise ConfigError(field, f"unknown field(s) {', '.join(sorted(extra))}")


def _int_field(cfg, name):
    v = cfg.get(name)
    if not isinstance(v, int) or isinstance(v, bool) or v < 1:
        raise ConfigError(name, "must be a positive integer")
    return v


def model_from_dict(cfg):
    """Build a validated model (and optional restricted spec) from a config dict.

    Returns
    -------
    model : MixtureModel
    spec : RestrictedSpec or None
    """
    _check_fields(cfg, _MODEL_FIELDS, "config")
    p, M = _int_field(cfg, "p"), _int_field(cfg, "M")
    for name in ("pi", "s"):
        if name not in cfg:
            raise ConfigError(name, "required")
    pi = _matrix(cfg["pi"], "pi", (p,))
    s = _matrix(cfg["s"], "s", (p, M))
    has_regimes, has_restricted = "regimes" in cfg, "restricted" in cfg
    if has_regimes == has_restricted:
        raise ConfigError("config", "exactly one of regimes or restricted is required")
    spec = None
    if has_restricted:
        block = cfg["restricted"]
        _check_fields(block, {"base_Q", "psi"}, "restricted")
        for name in ("base_Q", "psi"):
            if name not in block:
                raise ConfigError(f"restricted.{name}", "required")
        base = _matrix(block["base_Q"], "restricted.base_Q", (p, p))
        psi = _matrix(block["psi"], "restricted.psi", (M - 1, p))
        if np.any(psi < 0):
            raise ConfigError("restricted.psi", "entries must be nonnegative")
        spec = RestrictedSpec(base, psi)
        intensities = spec.expand()
    else:
        regimes = cfg["regimes"]
        if not isinstance(regimes, list) or len(regimes) != M:
            raise ConfigError("regimes", f"must be an array of {M} objects")
        mats = []
        for m, reg in enumerate(regimes):
            where = f"regimes[{m}]"
            _check_fields(reg, {"Q", "exit_rates", "chain"}, where)
            if "Q" in reg:
                if set(reg) != {"Q"}:
                    raise ConfigError(where, "give either Q or exit_rates + chain, not both")
                mats.append(_matrix(reg["Q"], f"{where}.Q", (p, p)))
            elif set(reg) == {"exit_rates", "chain"}:
                rates = _matrix(reg["exit_rates"], f"{where}.exit_rates", (p,))
                chain = _matrix(reg["chain"], f"{where}.chain", (p, p))
                mats.append(build_intensity(rates, chain))
            else:
                raise ConfigError(where, "needs Q, or exit_rates and chain")
        intensities = np.stack(mats)
    return MixtureModel(pi, intensities, s), spec


def model_to_dict(model, spec=None):
    cfg = {"p": model.p, "M": model.M, "pi": model.pi.tolist()}
    if spec is not None:
        cfg["restricted"] = {"base_Q": spec.base_intensity.tolist(), "psi": spec.psi.tolist()}
    else:
        cfg["regimes"] = [{"Q": q.tolist()} for q in model.intensities]
    cfg["s"] = model.switching.tolist()
    return cfg


def _load_json(filename):
    try:
        with open(filename, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.lineno, f"malformed JSON: {exc.msg}") from None


def read_model(filename):
    model, _ = model_from_dict(_load_json(filename))
    return model


def write_model(filename, model, spec=None):
    with open(filename, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model, spec), fh, indent=2)
        fh.write("\n")


# -- fit results -----------------------------------------------------------


def _restricted_spec_of(fit):
    base = fit.model.intensities[-1]
    return RestrictedSpec(base, fit.psi)


def write_fit(filename, fit):
    """Fit result: the model config plus a ``fit`` metadata block."""
    spec = _restricted_spec_of(fit) if fit.psi is not None else None
    doc = model_to_dict(fit.model, spec)
    doc["fit"] = {
        "method": fit.method,
        "loglik": fit.loglik,
        "iterations": fit.iterations,
        "converged": fit.converged,
        "n_paths": fit.n_paths,
        "horizon": fit.horizon,
        "seed": fit.seed,
        "fingerprint": fit.fingerprint,
        "flags": [list(f) for f in fit.flags],
    }
    with open(filename, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def read_fit(filename):
    doc = _load_json(filename)
    if not isinstance(doc, dict) or "fit" not in doc:
        raise ConfigError("fit", "required in a fit result file")
    meta = doc.pop("fit")
    _check_fields(
        meta,
        {"method", "loglik", "iterations", "converged", "n_paths", "horizon", "seed", "fingerprint", "flags"},
        "fit",
    )
    model, spec = model_from_dict(doc)
    chains = None
    psi = None
    if spec is not None:
        psi = spec.psi.copy()
        shared = embedded_chain(spec.base_intensity)
        chains = np.stack([shared] * model.M)
    return FitResult(
        model,
        float(meta["loglik"]),
        meta["method"],
        iterations=int(meta.get("iterations", 0)),
        converged=bool(meta.get("converged", True)),
        psi=psi,
        chains=chains,
        flags=[tuple(f) for f in meta.get("flags", [])],
        fingerprint=meta.get("fingerprint"),
        n_paths=meta.get("n_paths"),
        horizon=meta.get("horizon"),
        seed=meta.get("seed"),
    )


def write_trace(filename, trace, include_time=True):
    """EM trace as tab-separated text."""
    cols = ["iteration", "loglik", "delta"] + (["wall_time"] if include_time else [])
    with open(filename, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
        writer.writerow(cols)
        for row in trace:
            writer.writerow([row["iteration"]] + [repr(float(row[c])) for c in cols[1:]])


def write_weighted_stats(filename, ws):
    doc = {
        "source": ws.source,
        "n_paths": ws.n_paths,
        "Njump": ws.Njump.tolist(),
        "Nexit": ws.Nexit.tolist(),
        "Z": ws.Z.tolist(),
        "B": ws.B.tolist(),
        "B_total": ws.B_total.tolist(),
        "Njump_total": ws.Njump_total.tolist(),
    }
    with open(filename, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
