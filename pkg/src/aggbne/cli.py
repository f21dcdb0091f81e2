"""Command-line front end: ``aggbne run|study|mixing|verify``.

Exit codes: 0 success, 2 configuration error, 3 validation failure,
4 numerical divergence or non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .aggregation import brute_force_aggregate, full_aggregate
from .config import default_config, load_config
from .exceptions import ConfigurationError, ModelError, NumericalError, ShapeError, ValidationError
from .game import validate_model
from .network import GraphSchedule, fit_geometric_envelope, mixing_diagnostic, validate_schedule, write_weights_csv
from .plotting import emit_consensus_svg, emit_convergence_svg
from .solver import StepOptions, StepsizeSchedule, run
from .verification import central_dbne, epsilon_study, exploitability, write_study_csv

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_VALIDATION, EXIT_NUMERIC = 0, 2, 3, 4
# deterministic schedules repeat, so a bounded prefix covers every window
SCHEDULE_CHECK_HORIZON = 1000


class StageError(Exception):
    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


class _Stages:
    """Runs named stages and remembers which one failed."""

    def __init__(self, report):
        self.report = report

    def __call__(self, name, fn, *args, **kwargs):
        start = time.perf_counter()
        try:
            out = fn(*args, **kwargs)
        except Exception as exc:
            raise StageError(name, exc) from exc
        self.report.append(f"[{name}] {1e3 * (time.perf_counter() - start):.1f} ms")
        return out


def _schedule(cfg):
    return GraphSchedule(
        cfg["game.n"],
        cfg["network.mode"],
        seed=cfg["network.seed"],
        B=cfg["network.B"],
        extra_edge_prob=cfg["network.extra_edge_prob"],
    )


def _schedule_horizon(schedule, T):
    return max(schedule.window, min(max(T, 1), SCHEDULE_CHECK_HORIZON))


def write_oracle_csv(profile, theta, path) -> None:
    n, N, m = profile.shape
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["player", "type_index", "theta"] + [f"action_{j}" for j in range(m)])
        for i in range(n):
            for k in range(N):
                writer.writerow([i + 1, k + 1, f"{theta[k]:.17g}"] + [f"{v:.17g}" for v in profile[i, k]])


def run_experiment(cfg, out: Path, report: list) -> dict:
    """Full pipeline; returns the key numbers also written to ``report.txt``."""
    stage = _Stages(report)
    spec = stage("build game", cfg.game)
    schedule = stage("build schedule", _schedule, cfg)
    T = cfg["solver.T"]
    model_report = stage("validate model", validate_model, spec)
    report.append(f"model: {model_report}")
    sched_report = stage("validate schedule", validate_schedule, schedule, _schedule_horizon(schedule, T))
    report.append(f"schedule: {sched_report}")
    disc = spec.discretization
    oracle = stage("central oracle", central_dbne, spec, disc, cfg["solver.oracle_tol"])
    report.append(f"oracle: {oracle.n_iter} iterations, certificate {oracle.certificate}")
    write_oracle_csv(oracle.profile, disc.theta, out / "oracle.csv")
    options = StepOptions(include_chain=cfg["solver.chain"])
    result = stage(
        "solver",
        run,
        spec,
        schedule,
        StepsizeSchedule(cfg["solver.a"], cfg["solver.b"]),
        T,
        disc=disc,
        record_every=cfg["solver.record_every"],
        oracle=oracle.profile,
        probes=cfg.probes(),
        init=cfg["solver.init"],
        seed=cfg["solver.seed"],
        options=options,
        n_jobs=cfg["solver.threads"],
    )
    result.trace.to_csv(out / "trace.csv")
    final = stage("exploitability", exploitability, result.state.strategies, disc, spec)
    summary = {
        "oracle_distance": float(result.trace.column("oracle_distance")[-1]),
        "consensus_residual": float(result.trace.column("consensus_residual")[-1]),
        "epsilon": final.epsilon,
        "max_conservation_error": result.state.max_conservation_error,
    }
    if cfg["output.emit_svg"]:
        stage("charts", _charts, result.trace, out)
    return summary


def _charts(trace, out):
    emit_convergence_svg(trace, out / "convergence.svg")
    emit_consensus_svg(trace, out / "consensus.svg")


def run_study(cfg, out: Path, report: list) -> dict:
    stage = _Stages(report)
    spec = stage("build game", cfg.game)
    rows = stage(
        "epsilon study",
        epsilon_study,
        spec,
        cfg["discretization.N_list"],
        cfg["discretization.N_fine"],
        cfg["solver.oracle_tol"],
    )
    write_study_csv(rows, out / "study.csv")
    for r in rows:
        report.append(f"N={r.N}: epsilon={r.epsilon:.6e} (coarse certificate {r.certificate:.2e})")
    eps = [r.epsilon for r in rows]
    return {"epsilon_first": eps[0], "epsilon_last": eps[-1]}


def run_mixing(cfg, out: Path, report: list) -> dict:
    stage = _Stages(report)
    schedule = stage("build schedule", _schedule, cfg)
    horizon = cfg["network.horizon"]
    sched_report = stage("validate schedule", validate_schedule, schedule, max(horizon, schedule.window))
    report.append(f"schedule: {sched_report}")
    dev = stage("mixing diagnostic", mixing_diagnostic, schedule, 0, horizon)
    env = fit_geometric_envelope(dev)
    with open(out / "mixing.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["k", "deviation", "envelope"])
        for j, (d, e) in enumerate(zip(dev, env.bound(np.arange(1, dev.size + 1))), start=1):
            writer.writerow([j, f"{d:.17g}", f"{e:.17g}"])
    write_weights_csv(schedule, range(schedule.period), out / "weights.csv")
    report.append(f"envelope: Gamma={env.gamma:.4g}, beta={env.beta:.4g}")
    return {"final_deviation": float(dev[-1]), "gamma": env.gamma, "beta": env.beta}


VERIFY_T = 1000
BRUTE_FORCE_LIMIT = 10**6


def run_verify(cfg, out: Path, report: list) -> dict:
    """Invariant suite on the configured instance; raises on the first failure."""
    stage = _Stages(report)
    spec = stage("build game", cfg.game)
    schedule = stage("build schedule", _schedule, cfg)
    stage("validate model", validate_model, spec)
    stage("validate schedule", validate_schedule, schedule, _schedule_horizon(schedule, VERIFY_T))
    disc = spec.discretization
    tol = cfg["solver.oracle_tol"]
    oracle = stage("central oracle", central_dbne, spec, disc, tol)
    checks = {"certificate": oracle.certificate.epsilon}
    if disc.N ** spec.n_players <= BRUTE_FORCE_LIMIT:
        exact = brute_force_aggregate(oracle.profile, disc.grid)
        checks["aggregate_vs_enumeration"] = float(np.abs(exact - full_aggregate(oracle.profile, disc)).max())
    result = stage(
        "conservation run",
        run,
        spec,
        schedule,
        StepsizeSchedule(cfg["solver.a"], cfg["solver.b"]),
        min(cfg["solver.T"], VERIFY_T),
        disc=disc,
        record_every=cfg["solver.record_every"],
        init=cfg["solver.init"],
        seed=cfg["solver.seed"],
    )
    checks["max_conservation_error"] = result.state.max_conservation_error
    limits = {"certificate": tol, "aggregate_vs_enumeration": 1e-12, "max_conservation_error": 1e-10}
    failed = [k for k, v in checks.items() if not v <= limits[k]]
    for k, v in checks.items():
        report.append(f"{k}: {v:.3e} (limit {limits[k]:.0e}) {'FAIL' if k in failed else 'ok'}")
    if failed:
        raise StageError("invariants", ValidationError(", ".join(failed)))
    return checks


COMMANDS = {"run": run_experiment, "study": run_study, "mixing": run_mixing, "verify": run_verify}


def _exit_code(exc) -> int:
    if isinstance(exc, (ConfigurationError, ModelError, ShapeError)):
        return EXIT_CONFIG
    if isinstance(exc, ValidationError):
        return EXIT_VALIDATION
    if isinstance(exc, (NumericalError, FloatingPointError)):
        return EXIT_NUMERIC
    return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aggbne", description="Distributed Bayesian Nash equilibrium seeking.")
    parser.add_argument("command", nargs="?", choices=sorted(COMMANDS))
    parser.add_argument("--config", type=Path, help="flat 'section.key = value' file; defaults apply if omitted")
    parser.add_argument("--out", type=Path, help="artifact directory (overrides output.dir)")
    parser.add_argument("--seed", type=int, help="overrides network.seed and solver.seed")
    parser.add_argument("--print-defaults", action="store_true", help="print the default config and exit")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.print_defaults:
        sys.stdout.write(default_config().format())
        return EXIT_OK
    if args.command is None:
        parser.print_usage(sys.stderr)
        print("aggbne: error: a command is required", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config) if args.config else default_config()
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigurationError("--seed must be non-negative")
            cfg = cfg.replace(**{"network.seed": args.seed, "solver.seed": args.seed})
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out = args.out or Path(cfg["output.dir"])
    out.mkdir(parents=True, exist_ok=True)
    (out / "FAILED").unlink(missing_ok=True)
    report = [f"command: {args.command}", "config:", *("  " + line for line in cfg.format().splitlines() if line)]
    start = time.perf_counter()
    code = EXIT_OK
    try:
        summary = COMMANDS[args.command](cfg, out, report)
        report.append("result:")
        report.extend(f"  {k} = {v:.6e}" for k, v in summary.items())
    except StageError as exc:
        code = _exit_code(exc.cause)
        report.append(f"FAILED in stage '{exc.stage}': {exc.cause}")
        (out / "FAILED").write_text(f"{exc.stage}\n{exc.cause}\n")
        print(f"error: {exc}", file=sys.stderr)
    report.append(f"runtime: {time.perf_counter() - start:.2f} s")
    (out / "report.txt").write_text("\n".join(report) + "\n")
    if code == EXIT_OK:
        print("\n".join(report[-len(summary) - 2 :]))
    return code


if __name__ == "__main__":
    sys.exit(main())
