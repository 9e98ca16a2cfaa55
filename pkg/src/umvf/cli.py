"""Scenario-driven command line front end.

Subcommands: `run` (simulate + filter + CSV/metrics/SVG artifacts),
`montecarlo` (seed-swept bias/sigma tables), `validate` (assumption report).
Exit codes: 0 success, 1 numerical failure, 2 configuration/validation
failure.  The default seed can be overridden with the UMVF_SEED environment
variable; an explicit --seed beats both it and the configured value.
"""

import argparse
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .config import MODES, PATHS, load_config
from .exceptions import LengthMismatch, NumericalError, UmvfError, ValidationError
from .filtering import gain_schedule, run_filter, run_with_schedule
from .model import factor_noise, matrices_at, validate_scenario
from .simulator import simulate
from .svgplot import line_plot

SEED_ENV_VAR = "UMVF_SEED"


@dataclass
class RunMetrics:
    """Scalar summary of one run: accuracy, constraint quality, covariance size."""

    state_rmse: np.ndarray
    fault_rmse: np.ndarray
    mean_res_M11: float
    mean_res_M21: float
    final_trace_Px: float
    final_trace_Pf: float
    fault_bias: list  # per channel: float (windowed mean of f_hat - f_true) or None
    mode_deviation: Optional[float] = None


def compute_metrics(truth_records, filter_records, windows=None):
    """Accuracy and diagnostics from aligned truth/filter sequences.

    `windows` gives per-fault-channel (lo, hi) step ranges (inclusive) over
    which the fault estimate bias is averaged; channels without a window get
    a bias of None.
    """
    if len(truth_records) != len(filter_records):
        raise LengthMismatch(
            f"{len(truth_records)} truth records vs {len(filter_records)} filter records"
        )
    x_true = np.array([t.x_true for t in truth_records])
    f_true = np.array([t.f_true for t in truth_records])
    x_hat = np.array([r.x_post for r in filter_records])
    f_hat = np.array([r.f_hat for r in filter_records])
    p = f_true.shape[1] if f_true.ndim == 2 else 0
    if windows is None:
        windows = [None] * p
    fault_bias = []
    for i in range(p):
        window = windows[i] if i < len(windows) else None
        if window is None:
            fault_bias.append(None)
            continue
        lo, hi = window
        steps = [k for k in range(len(truth_records)) if lo <= k <= hi]
        if not steps:
            fault_bias.append(None)
            continue
        fault_bias.append(float(np.mean(f_hat[steps, i] - f_true[steps, i])))
    return RunMetrics(
        state_rmse=np.sqrt(np.mean((x_true - x_hat) ** 2, axis=0)),
        fault_rmse=(
            np.sqrt(np.mean((f_true - f_hat) ** 2, axis=0)) if p else np.zeros(0)
        ),
        mean_res_M11=float(np.mean([r.res_M11 for r in filter_records])),
        mean_res_M21=float(np.mean([r.res_M21 for r in filter_records])),
        final_trace_Px=filter_records[-1].trace_Px,
        final_trace_Pf=filter_records[-1].trace_Pf,
        fault_bias=fault_bias,
    )


def _g17(value):
    return format(float(value), ".17g")


def write_csv(path, truth_records, filter_records):
    """Write the per-step trajectory table (17 significant digits)."""
    if len(truth_records) != len(filter_records):
        raise LengthMismatch("truth and filter records differ in length")
    n = truth_records[0].x_true.shape[0]
    p = truth_records[0].f_true.shape[0]
    q = truth_records[0].d_true.shape[0]
    header = (
        ["k"]
        + [f"x_true_{i + 1}" for i in range(n)]
        + [f"x_hat_{i + 1}" for i in range(n)]
        + [f"f_true_{i + 1}" for i in range(p)]
        + [f"f_hat_{i + 1}" for i in range(p)]
        + [f"d_true_{i + 1}" for i in range(q)]
        + ["trace_Px", "trace_Pf", "res_M11", "res_M21"]
    )
    lines = [", ".join(header)]
    for t, r in zip(truth_records, filter_records):
        row = (
            [str(t.k)]
            + [_g17(v) for v in t.x_true]
            + [_g17(v) for v in r.x_post]
            + [_g17(v) for v in t.f_true]
            + [_g17(v) for v in r.f_hat]
            + [_g17(v) for v in t.d_true]
            + [_g17(r.trace_Px), _g17(r.trace_Pf), _g17(r.res_M11), _g17(r.res_M21)]
        )
        lines.append(", ".join(row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_csv(path):
    """Re-read a trajectory table into (header list, float value array, k array)."""
    lines = Path(path).read_text(encoding="utf-8").strip().split("\n")
    header = [h.strip() for h in lines[0].split(",")]
    rows = [[cell.strip() for cell in line.split(",")] for line in lines[1:]]
    ks = np.array([int(row[0]) for row in rows])
    values = np.array([[float(cell) for cell in row[1:]] for row in rows])
    return header, values, ks


def write_metrics(path, metrics, windows=None):
    lines = []
    for i, v in enumerate(metrics.state_rmse):
        lines.append(f"state_rmse_{i + 1} = {_g17(v)}")
    for i, v in enumerate(metrics.fault_rmse):
        lines.append(f"fault_rmse_{i + 1} = {_g17(v)}")
    lines.append(f"mean_res_M11 = {_g17(metrics.mean_res_M11)}")
    lines.append(f"mean_res_M21 = {_g17(metrics.mean_res_M21)}")
    lines.append(f"final_trace_Px = {_g17(metrics.final_trace_Px)}")
    lines.append(f"final_trace_Pf = {_g17(metrics.final_trace_Pf)}")
    for i, bias in enumerate(metrics.fault_bias):
        if bias is None:
            continue
        window = windows[i] if windows else None
        suffix = f" over steps {window[0]}..{window[1]}" if window else ""
        lines.append(f"fault_bias_{i + 1} = {_g17(bias)}  #{suffix or ' full horizon'}")
    if metrics.mode_deviation is not None:
        lines.append(f"max_mode_deviation = {_g17(metrics.mode_deviation)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_plots(out_dir, truth_records, filter_records):
    """State, fault, and covariance-trace plots; returns written paths."""
    out_dir = Path(out_dir)
    ks = [t.k for t in truth_records]
    n = truth_records[0].x_true.shape[0]
    p = truth_records[0].f_true.shape[0]
    paths = []
    for i in range(n):
        path = out_dir / f"state_{i + 1}.svg"
        line_plot(
            path,
            [
                ("true", ks, [t.x_true[i] for t in truth_records]),
                ("estimate", ks, [r.x_post[i] for r in filter_records], True),
            ],
            title=f"state {i + 1}",
            ylabel=f"x_{i + 1}",
        )
        paths.append(path)
    for i in range(p):
        path = out_dir / f"fault_{i + 1}.svg"
        line_plot(
            path,
            [
                ("true", ks, [t.f_true[i] for t in truth_records]),
                ("estimate", ks, [r.f_hat[i] for r in filter_records], True),
            ],
            title=f"fault {i + 1}",
            ylabel=f"f_{i + 1}",
        )
        paths.append(path)
    path = out_dir / "trace.svg"
    line_plot(
        path,
        [
            ("trace P_x", ks, [r.trace_Px for r in filter_records]),
            ("trace P_f", ks, [r.trace_Pf for r in filter_records]),
        ],
        title="covariance traces",
        ylabel="trace",
    )
    paths.append(path)
    return paths


def mode_deviation(run_a, run_b):
    """Max absolute discrepancy between two runs' estimates and covariances."""
    worst = 0.0
    for sa, sb in zip(run_a.states, run_b.states):
        for field in ("x_post", "f_hat", "P_x", "P_f", "P_xf"):
            a = getattr(sa, field)
            b = getattr(sb, field)
            if a.size:
                worst = max(worst, float(np.abs(a - b).max()))
    return worst


@dataclass
class ExecuteResult:
    truth: list
    records: list
    metrics: RunMetrics
    files: list
    out_dir: Path


def execute(config, seed=None, out_dir=None, mode=None, path=None):
    """Simulate, filter, and write artifacts for one scenario run."""
    seed = config.seed if seed is None else seed
    mode = config.mode if mode is None else mode
    path = config.path if path is None else path
    out_dir = Path(config.out_dir if out_dir is None else out_dir)
    validate_scenario(config.model, config.init)

    truth = simulate(
        config.model,
        horizon=config.horizon,
        seed=seed,
        x0_true=config.x0_true,
        fault_spec=config.fault_spec,
        disturbance_spec=config.disturbance_spec,
        u=config.u,
    )
    ys = np.array([t.y for t in truth])

    deviation = None
    if mode == "both":
        run_sqrt = run_filter(
            config.model, config.init, ys, u=config.u, mode="sqrt", path=path, keep_states=True
        )
        run_cov = run_filter(
            config.model, config.init, ys, u=config.u, mode="covariance", path=path,
            keep_states=True,
        )
        deviation = mode_deviation(run_sqrt, run_cov)
        records = run_sqrt.records
    else:
        records = run_filter(
            config.model, config.init, ys, u=config.u, mode=mode, path=path
        ).records

    metrics = compute_metrics(truth, records, config.windows)
    metrics.mode_deviation = deviation

    files = []
    out_dir.mkdir(parents=True, exist_ok=True)
    if config.emit_csv:
        csv_path = out_dir / "trajectory.csv"
        write_csv(csv_path, truth, records)
        files.append(csv_path)
    if config.emit_metrics:
        metrics_path = out_dir / "metrics.txt"
        write_metrics(metrics_path, metrics, config.windows)
        files.append(metrics_path)
    if config.emit_svg:
        files.extend(write_plots(out_dir, truth, records))
    return ExecuteResult(
        truth=truth, records=records, metrics=metrics, files=files, out_dir=out_dir
    )


def run_montecarlo(config, runs, seed=None, stream=None):
    """Seed-swept study: per-channel windowed bias, sigma, and normalized bias."""
    stream = sys.stdout if stream is None else stream
    base_seed = config.seed if seed is None else seed
    validate_scenario(config.model, config.init)
    mode = "sqrt" if config.mode == "both" else config.mode
    schedule = gain_schedule(
        config.model, config.init, config.horizon, mode=mode, path=config.path
    )
    bundle = matrices_at(config.model, 0)
    factors = factor_noise(bundle.Q, bundle.R, bundle.S)

    p = config.model.dims.p
    n = config.model.dims.n
    fault_errors = np.empty((runs, config.horizon, p))
    state_errors = np.empty((runs, config.horizon, n))
    for i in range(runs):
        truth = simulate(
            config.model,
            horizon=config.horizon,
            seed=base_seed + i,
            x0_true=config.x0_true,
            fault_spec=config.fault_spec,
            disturbance_spec=config.disturbance_spec,
            u=config.u,
            factors=factors,
        )
        ys = np.array([t.y for t in truth])
        x_hat, f_hat = run_with_schedule(schedule, ys, u=config.u)
        fault_errors[i] = f_hat - np.array([t.f_true for t in truth])
        state_errors[i] = x_hat - np.array([t.x_true for t in truth])

    print(f"runs = {runs}, base seed = {base_seed}, horizon = {config.horizon}", file=stream)
    print("channel  window        bias          sigma        |bias|/(sigma/sqrt(M))", file=stream)
    rows = []
    for i in range(p):
        window = config.windows[i] if i < len(config.windows) else None
        lo, hi = window if window else (0, config.horizon - 1)
        steps = slice(lo, min(hi, config.horizon - 1) + 1)
        err = fault_errors[:, steps, i]
        bias = float(err.mean())
        sigma = float(err.std(ddof=1))
        normalized = abs(bias) / (sigma / math.sqrt(runs)) if sigma > 0 else math.inf
        rows.append((f"fault_{i + 1}", lo, hi, bias, sigma, normalized))
        print(
            f"fault_{i + 1}  [{lo:3d},{hi:3d}]  {bias: .6e}  {sigma:.6e}  {normalized:8.3f}",
            file=stream,
        )
    for j in range(n):
        err = state_errors[:, :, j]
        bias = float(err.mean())
        sigma = float(err.std(ddof=1))
        normalized = abs(bias) / (sigma / math.sqrt(runs)) if sigma > 0 else math.inf
        rows.append((f"state_{j + 1}", 0, config.horizon - 1, bias, sigma, normalized))
        print(
            f"state_{j + 1}  [{0:3d},{config.horizon - 1:3d}]  {bias: .6e}  {sigma:.6e}  {normalized:8.3f}",
            file=stream,
        )
    return rows


def resolve_seed(cli_seed, config_seed):
    """--seed beats UMVF_SEED beats the configured seed."""
    if cli_seed is not None:
        return cli_seed
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise ValidationError(f"{SEED_ENV_VAR} must be an integer, got {env!r}") from exc
    return config_seed


def build_parser():
    parser = argparse.ArgumentParser(
        prog="umvf",
        description=(
            "Joint state and fault estimation for linear stochastic systems, "
            "decoupled from unknown disturbances."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="simulate a scenario and write run artifacts")
    run_p.add_argument("--config", required=True, help="scenario file")
    run_p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    run_p.add_argument("--out", default=None, help="output directory")
    run_p.add_argument("--mode", choices=MODES, default=None, help="covariance arithmetic")
    run_p.add_argument("--path", choices=PATHS, default=None, help="filter path selection")

    mc_p = sub.add_parser("montecarlo", help="seed-swept bias/sigma study")
    mc_p.add_argument("--config", required=True, help="scenario file")
    mc_p.add_argument("--runs", type=int, required=True, help="number of seeded runs")
    mc_p.add_argument("--seed", type=int, default=None, help="base seed (run i uses seed+i)")

    val_p = sub.add_parser("validate", help="print the scenario assumption report")
    val_p.add_argument("--config", required=True, help="scenario file")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            config = load_config(args.config)
            result = execute(
                config,
                seed=resolve_seed(args.seed, config.seed),
                out_dir=args.out,
                mode=args.mode,
                path=args.path,
            )
            for file in result.files:
                print(file)
            if result.metrics.mode_deviation is not None:
                print(f"max_mode_deviation = {_g17(result.metrics.mode_deviation)}")
            return 0
        if args.command == "montecarlo":
            config = load_config(args.config)
            runs = args.runs
            if runs < 1:
                raise ValidationError("--runs must be >= 1")
            run_montecarlo(config, runs, seed=resolve_seed(args.seed, config.seed))
            return 0
        if args.command == "validate":
            config = load_config(args.config)
            report = validate_scenario(config.model, config.init)
            print(report)
            return 0
        raise ValidationError(f"unknown command {args.command!r}")
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1
    except UmvfError as exc:  # pragma: no cover - safety net
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
