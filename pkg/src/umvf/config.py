"""Declarative scenario configuration.

Scenarios are INI-style text files with four sections — [model], [truth],
[run], [output] — holding the system matrices (bracketed row lists), the
truth-generation signals, the run switches, and the output options.
Unknown sections or keys are rejected so a typo cannot silently fall back
to a default.
"""

import ast
import configparser
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from .exceptions import ConfigError
from .model import InitialCondition, SystemDims, SystemModel
from .simulator import DisturbanceSpec, FaultSignalSpec

_MODEL_KEYS = {
    "n", "m", "r", "p", "q",
    "A", "B", "C", "F_x", "F_y", "G", "Q", "R", "S",
    "x0_hat", "P0",
}
_TRUTH_KEYS_FIXED = {
    "x0", "u", "disturbance", "disturbance_scale_A", "disturbance_scale_B",
    "disturbance_values",
}
_RUN_KEYS_FIXED = {"horizon", "seed", "mode", "path", "montecarlo"}
_OUTPUT_KEYS = {"directory", "emit_csv", "emit_svg", "emit_metrics"}

MODES = ("covariance", "sqrt", "both")
PATHS = ("auto", "full-rank", "extended")


@dataclass
class ScenarioConfig:
    """Parsed and validated scenario: model, truth signals, run and output options."""

    model: SystemModel
    init: InitialCondition
    x0_true: np.ndarray
    fault_spec: FaultSignalSpec
    disturbance_spec: DisturbanceSpec
    u: Optional[np.ndarray]
    horizon: int
    seed: int
    mode: str
    path: str
    montecarlo: int
    windows: list  # per fault channel: (lo, hi) or None
    out_dir: str
    emit_csv: bool
    emit_svg: bool
    emit_metrics: bool


def _literal(section, key, text):
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError) as exc:
        raise ConfigError(f"[{section}] {key}: cannot parse {text!r}: {exc}") from exc


def _matrix(section, key, text, shape):
    value = np.asarray(_literal(section, key, text), dtype=float)
    if value.ndim == 1 and shape[1] == 1:
        value = value.reshape(-1, 1)
    if value.ndim == 0:
        value = value.reshape(1, 1)
    if value.shape != shape:
        raise ConfigError(
            f"[{section}] {key}: expected shape {shape}, got {value.shape}"
        )
    return value


def _vector(section, key, text, length):
    value = np.asarray(_literal(section, key, text), dtype=float).reshape(-1)
    if value.shape != (length,):
        raise ConfigError(
            f"[{section}] {key}: expected {length} entries, got {value.shape[0]}"
        )
    return value


def _int(section, key, text, minimum=None):
    try:
        value = int(text)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: expected an integer, got {text!r}") from exc
    if minimum is not None and value < minimum:
        raise ConfigError(f"[{section}] {key}: must be >= {minimum}")
    return value


def _float(section, key, text):
    try:
        return float(text)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: expected a number, got {text!r}") from exc


def _bool(section, key, text):
    lowered = text.strip().lower()
    if lowered in ("true", "yes", "1", "on"):
        return True
    if lowered in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"[{section}] {key}: expected true/false, got {text!r}")


def _reject_unknown(parser):
    known = {
        "model": _MODEL_KEYS,
        "truth": None,  # checked dynamically (fault_i keys depend on p)
        "run": None,  # window_i keys depend on p
        "output": _OUTPUT_KEYS,
    }
    for section in parser.sections():
        if section not in known:
            raise ConfigError(f"unknown section [{section}]")
        allowed = known[section]
        if allowed is None:
            continue
        for key in parser[section]:
            if key not in allowed:
                raise ConfigError(f"unknown key {key!r} in [{section}]")


def parse_config(text, source="<config>"):
    """Parse configuration text into a ScenarioConfig."""
    parser = configparser.ConfigParser(
        delimiters=("=",), inline_comment_prefixes=("#",), interpolation=None
    )
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {source}: {exc}") from exc
    if "model" not in parser or "run" not in parser:
        raise ConfigError("configuration requires [model] and [run] sections")
    _reject_unknown(parser)

    sec = parser["model"]
    for required in ("n", "m", "r", "p", "q"):
        if required not in sec:
            raise ConfigError(f"[model] missing required key {required!r}")
    n = _int("model", "n", sec["n"], 1)
    m = _int("model", "m", sec["m"], 1)
    r = _int("model", "r", sec["r"], 0)
    p = _int("model", "p", sec["p"], 0)
    q = _int("model", "q", sec["q"], 0)
    dims = SystemDims(n=n, m=m, r=r, p=p, q=q)

    def matrix_or_zero(key, shape, required):
        if key in sec:
            return _matrix("model", key, sec[key], shape)
        if required:
            raise ConfigError(f"[model] missing required key {key!r}")
        return np.zeros(shape)

    A = matrix_or_zero("A", (n, n), True)
    C = matrix_or_zero("C", (m, n), True)
    Q = matrix_or_zero("Q", (n, n), True)
    R = matrix_or_zero("R", (m, m), True)
    B = matrix_or_zero("B", (n, r), r > 0)
    F_x = matrix_or_zero("F_x", (n, p), p > 0)
    F_y = matrix_or_zero("F_y", (m, p), p > 0)
    G = matrix_or_zero("G", (n, q), q > 0)
    S = matrix_or_zero("S", (n, m), False)
    x0_hat = _vector("model", "x0_hat", sec["x0_hat"], n) if "x0_hat" in sec else np.zeros(n)
    P0 = matrix_or_zero("P0", (n, n), True)
    model = SystemModel.constant(A, B, C, F_x, F_y, G, Q, R, S, dims=dims)
    init = InitialCondition.build(x0_hat, P0)

    fault_keys = {f"fault_{i + 1}" for i in range(p)}
    window_keys = {f"window_{i + 1}" for i in range(p)}
    truth = parser["truth"] if "truth" in parser else {}
    if "truth" in parser:
        for key in truth:
            if key not in _TRUTH_KEYS_FIXED | fault_keys:
                raise ConfigError(f"unknown key {key!r} in [truth]")
    channels = []
    for i in range(p):
        key = f"fault_{i + 1}"
        if key in truth:
            terms = _literal("truth", key, truth[key])
            if not isinstance(terms, (list, tuple)):
                raise ConfigError(f"[truth] {key}: expected a list of [amplitude, onset] pairs")
            channels.append([(term[0], term[1]) for term in terms])
        else:
            channels.append([])
    fault_spec = FaultSignalSpec.build(channels)

    x0_true = (
        _vector("truth", "x0", truth["x0"], n) if "x0" in truth else x0_hat.copy()
    )
    u = None
    if "u" in truth:
        parsed = _literal("truth", "u", truth["u"])
        u = np.asarray(parsed, dtype=float)
        if u.ndim == 0:
            u = u.reshape(1)
            if r != 1:
                raise ConfigError(f"[truth] u: scalar input requires r=1, got r={r}")

    mode_name = truth.get("disturbance", "none").strip().lower() if truth else "none"
    if mode_name == "none":
        disturbance_spec = DisturbanceSpec.zero()
        for key in ("disturbance_scale_A", "disturbance_scale_B", "disturbance_values"):
            if truth and key in truth:
                raise ConfigError(f"[truth] {key} requires disturbance = parametric/sequence")
    elif mode_name == "parametric":
        disturbance_spec = DisturbanceSpec.parametric(
            _float("truth", "disturbance_scale_A", truth.get("disturbance_scale_A", "0")),
            _float("truth", "disturbance_scale_B", truth.get("disturbance_scale_B", "0")),
        )
    elif mode_name == "sequence":
        if "disturbance_values" not in truth:
            raise ConfigError("[truth] disturbance = sequence requires disturbance_values")
        values = np.asarray(
            _literal("truth", "disturbance_values", truth["disturbance_values"]),
            dtype=float,
        )
        disturbance_spec = DisturbanceSpec.sequence(values.reshape(-1, q))
    else:
        raise ConfigError(
            f"[truth] disturbance: expected none/parametric/sequence, got {mode_name!r}"
        )

    run = parser["run"]
    for key in run:
        if key not in _RUN_KEYS_FIXED | window_keys:
            raise ConfigError(f"unknown key {key!r} in [run]")
    if "horizon" not in run:
        raise ConfigError("[run] missing required key 'horizon'")
    horizon = _int("run", "horizon", run["horizon"], 1)
    seed = _int("run", "seed", run["seed"]) if "seed" in run else 0
    mode = run.get("mode", "sqrt").strip()
    if mode not in MODES:
        raise ConfigError(f"[run] mode: expected one of {MODES}, got {mode!r}")
    path = run.get("path", "auto").strip()
    if path not in PATHS:
        raise ConfigError(f"[run] path: expected one of {PATHS}, got {path!r}")
    montecarlo = _int("run", "montecarlo", run["montecarlo"], 1) if "montecarlo" in run else 100
    windows = []
    for i in range(p):
        key = f"window_{i + 1}"
        if key in run:
            pair = _literal("run", key, run[key])
            if len(pair) != 2 or pair[0] > pair[1]:
                raise ConfigError(f"[run] {key}: expected [lo, hi] with lo <= hi")
            windows.append((int(pair[0]), int(pair[1])))
        else:
            windows.append(None)

    output = parser["output"] if "output" in parser else {}
    out_dir = output.get("directory", "out")
    emit_csv = _bool("output", "emit_csv", output["emit_csv"]) if "emit_csv" in output else True
    emit_svg = _bool("output", "emit_svg", output["emit_svg"]) if "emit_svg" in output else True
    emit_metrics = (
        _bool("output", "emit_metrics", output["emit_metrics"])
        if "emit_metrics" in output
        else True
    )

    return ScenarioConfig(
        model=model,
        init=init,
        x0_true=x0_true,
        fault_spec=fault_spec,
        disturbance_spec=disturbance_spec,
        u=u,
        horizon=horizon,
        seed=seed,
        mode=mode,
        path=path,
        montecarlo=montecarlo,
        windows=windows,
        out_dir=out_dir,
        emit_csv=emit_csv,
        emit_svg=emit_svg,
        emit_metrics=emit_metrics,
    )


def load_config(path):
    """Read and parse a scenario file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return parse_config(text, source=str(path))


def flight_config_path():
    """Path of the bundled longitudinal flight-control scenario."""
    return Path(str(resources.files("umvf").joinpath("data/flight.cfg")))
