"""
fbm-lab command line entry point.

Usage::

    # Kernel identity on a fine grid:
    fbmlab kernel --H 0.25 --check identity

    # Bismut gradient with its two oracles:
    fbmlab bismut --model linear:0.5 --H 0.7 --f id --y 1 --paths 100000 --seed 42

    # Shift Harnack inequality, JSON report and CSV table:
    fbmlab harnack --variant shift --p 2 --y 0.5 --report out.json --csv out.csv

    # Acceptance suite at reduced size:
    fbmlab selftest --quick

Exit codes: 0 when every check passes, 1 when an inequality check fails
or an unexpected error occurs, 2 on usage, configuration or domain
errors. Logs go to stderr; the JSON report goes to ``--report`` or stdout.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
import time
from dataclasses import replace
from datetime import datetime, timezone
from itertools import combinations_with_replacement
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from fbmlab.config import (
    HARNACK_VARIANTS,
    KERNEL_CHECKS,
    METRICS,
    ExperimentConfig,
    build_config,
    generate_config,
    resolve_config_path,
)
from fbmlab.errors import FbmLabError
from fbmlab.fraccalc import compose_KH_via_fractional, frac_derivative, frac_integral
from fbmlab.grid import GridFunction, TimeGrid
from fbmlab.inequalities import (
    check_gradient_bound,
    check_harnack,
    check_log_harnack,
    check_shift_harnack,
    density_smoothness_diagnostic,
    feller_table,
    gaussian_expectation,
    gaussian_terminal_std,
    probe_strong_feller,
)
from fbmlab.kernel import (
    CheckRow,
    apply_KH,
    build_weights,
    covariance_table,
    identity_midpoint_error,
    identity_table,
    kernel_constants,
    representation_table,
)
from fbmlab.malliavin import (
    ControlFunction,
    WeightedEstimate,
    bismut_gradient,
    entropy_gradient_bound_check,
    estimate_PTf,
    finite_difference_gradient,
    ibp_shift_gradient,
    oracle_triangle,
    weight_centering,
)
from fbmlab.models import CoefficientModel, TestFunction, parse_model, parse_test_function
from fbmlab.noise import (
    MAX_CHOLESKY_NODES,
    compare_terminal_law,
    sample_wiener,
    validate_covariance,
)
from fbmlab.report import CheckReport, ExperimentReport, Table, write_csv
from fbmlab.solver import (
    deterministic_volterra,
    euler_maruyama,
    initial_condition_lipschitz,
    second_moment_profile,
    solve_volterra,
)
from fbmlab.transport import (
    DriftShift,
    MaximalIntegrand,
    check_T2,
    check_maximal_inequality,
    distance_table,
    exact_T2_check,
)

logger = logging.getLogger(__name__)

# -----------------------------------------------------------------------
# Logging: stderr only, stdout carries the report
# -----------------------------------------------------------------------

LOG_FORMAT = "[%(asctime)s] %(levelname)-8s %(name)s: %(message)s"

IDENTITY_TOLERANCE = 1e-3
COVARIANCE_TOLERANCE = 1e-3
REPRESENTATION_TOLERANCE = 1e-6
SEMIGROUP_TOLERANCE = 5e-3
SEMIGROUP_ORDERS = (0.25, 0.5, 0.75)
INVERSION_TOLERANCE = 2e-2
COMPOSITION_TOLERANCE = 1e-2
BROWNIAN_TOLERANCE = 1e-12


def _configure_logging(verbose: bool) -> None:
    """Set up logging to stderr."""
    level = logging.DEBUG if verbose else logging.INFO
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    logging.root.addHandler(handler)
    logging.root.setLevel(level)


# -----------------------------------------------------------------------
# CLI
# -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    """Build the argument parser."""
    common = argparse.ArgumentParser(add_help=False)
    group = common.add_argument_group("experiment")
    group.add_argument("--H", type=float, default=None, help="Hurst parameter in (0, 1).")
    group.add_argument("--T", type=float, default=None, help="Time horizon.")
    group.add_argument("--n", type=int, default=None, help="Number of grid cells.")
    group.add_argument("--paths", type=int, default=None, help="Monte Carlo paths (>= 100).")
    group.add_argument("--seed", type=int, default=None, help="Seed of the Philox streams.")
    group.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    group.add_argument(
        "--threads", type=int, default=None, help="Worker threads (capped by FBMLAB_THREADS)."
    )
    group.add_argument("--x0", type=float, default=None, help="Initial condition.")
    group.add_argument("--y", type=float, default=None, help="Direction, shift or point offset.")
    group.add_argument(
        "--model", default=None, help="zero, linear:K[:S], ou:TH[:S], trig:A or table:FILE."
    )
    group.add_argument(
        "--f",
        default=None,
        help="id, square, sin, cos, exp-clamped, bump, gauss-bump, two-plus-sin, step:A, const:C.",
    )
    group.add_argument("--p", type=float, default=None, help="Harnack or moment exponent.")
    group.add_argument("--alpha", type=float, default=None, help="Entropy weight (> 0).")
    group.add_argument("--theta", type=float, default=None, help="Free parameter of C(p).")
    group.add_argument("--tolerance", type=float, default=None, help="Relative tolerance.")
    group.add_argument(
        "--sigma-multiplier", dest="sigma_multiplier", type=float, default=None,
        help="Standard errors of slack in every verdict (default 3).",
    )
    group.add_argument("--report", default=None, help="Write the JSON report here.")
    group.add_argument("--csv", default=None, help="Write tabular output here.")

    parser = argparse.ArgumentParser(
        prog="fbmlab",
        description=(
            "fbm-lab: kernels, Malliavin-weight gradients and Harnack / "
            "transportation inequality checks for Volterra SDEs driven by fBm."
        ),
    )
    parser.add_argument(
        "--config",
        default=None,
        help=(
            "Path to a config file (JSON or key=value). "
            "Defaults to ./fbmlab.json when present, then the bundled defaults."
        ),
    )
    parser.add_argument("--verbose", "-v", action="store_true", help="Enable debug-level logging.")
    parser.add_argument(
        "--generate-config",
        action="store_true",
        help="Generate a starter fbmlab.json in the current directory and exit.",
    )

    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    kernel = sub.add_parser("kernel", parents=[common], help="Kernel constants and check tables.")
    kernel.add_argument("--check", choices=KERNEL_CHECKS, default=None)
    fbm = sub.add_parser("fbm", parents=[common], help="fBm synthesis and covariance validation.")
    fbm.add_argument(
        "--oracle", action="store_true", default=None, help="Sample with the Cholesky oracle."
    )
    sub.add_parser("solve", parents=[common], help="Solve the Volterra SDE and report moments.")
    bismut = sub.add_parser("bismut", parents=[common], help="Bismut gradient and its oracles.")
    bismut.add_argument("--control", default=None, help="default or table:FILE (columns t,uprime).")
    sub.add_parser("ibp", parents=[common], help="Shift gradient through the IBP weight.")
    harnack = sub.add_parser("harnack", parents=[common], help="Gradient / Harnack inequality checks.")
    harnack.add_argument("--variant", choices=HARNACK_VARIANTS, default=None)
    harnack.add_argument(
        "--radii", default=None, help="Comma-separated radii of the strong Feller probe."
    )
    transport = sub.add_parser("transport", parents=[common], help="Talagrand T2 check.")
    transport.add_argument("--metric", choices=METRICS, default=None)
    transport.add_argument(
        "--u", dest="shift", default=None, help="const:VAL, linear:VAL, table:FILE or feedback:VAL."
    )
    transport.add_argument(
        "--exact", action="store_true", default=None, help="Deterministic check for b = 0."
    )
    maxineq = sub.add_parser("maxineq", parents=[common], help="Maximal inequality check.")
    maxineq.add_argument("--phi", default=None, help="const:VAL or linear.")
    selftest = sub.add_parser("selftest", parents=[common], help="Run the acceptance suite.")
    selftest.add_argument(
        "--quick", action="store_true", default=None, help="Reduced grid and path counts."
    )
    return parser


# -----------------------------------------------------------------------
# Main
# -----------------------------------------------------------------------


def _handle_generate_config() -> int:
    """Write a starter fbmlab.json to the current directory."""
    try:
        output_path = generate_config(Path.cwd())
    except FbmLabError as exc:
        print(f"❌ {exc}")
        return 1
    print(f"✅ Generated {output_path}")
    print("   Edit this file to change experiment defaults.")
    print("   fbmlab will auto-detect it in the current directory.")
    return 0


def run(config: ExperimentConfig) -> tuple[ExperimentReport, int]:
    """Run one experiment and return its report with the exit code."""
    report = ExperimentReport(
        command=config.command,
        config=config.to_dict(),
        timestamp=datetime.now(timezone.utc).isoformat(),
    )
    started = time.perf_counter()
    _RUNNERS[config.command](config, report)
    report.wall_clock_seconds = time.perf_counter() - started
    logger.info(
        "%s finished in %.2fs: %d checks, verdict %s",
        config.command,
        report.wall_clock_seconds,
        len(report.checks),
        report.verdict.value,
    )
    return report, report.exit_code


def main(argv: Optional[list[str]] = None) -> int:
    """Entry point for the fbmlab command line."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    if args.generate_config:
        return _handle_generate_config()
    if not args.command:
        parser.print_usage(sys.stderr)
        print("fbmlab: error: a command is required (or use --generate-config)", file=sys.stderr)
        return 2

    _configure_logging(args.verbose)
    overrides = {
        key: value
        for key, value in vars(args).items()
        if key not in ("config", "verbose", "generate_config", "command")
    }

    try:
        config = build_config(args.command, overrides, resolve_config_path(args.config))
        report, code = run(config)
        _write_outputs(config, report)
    except (FbmLabError, ValueError) as exc:
        logger.error("%s", exc)
        return 2
    except KeyboardInterrupt:
        logger.info("Interrupted by user, shutting down")
        return 1
    except Exception:
        logger.exception("Fatal error in fbmlab %s", args.command)
        return 1
    return code


# -----------------------------------------------------------------------
# Subcommands
# -----------------------------------------------------------------------


def _run_kernel(config: ExperimentConfig, report: ExperimentReport) -> None:
    grid = TimeGrid(config.T, config.n)
    constants = kernel_constants(config.H)
    report.results["constants"] = {
        "alpha_H": constants.alpha_H,
        "alpha_bar_H": constants.alpha_bar_H,
        "C_H": constants.C_H,
    }
    if config.check == "identity":
        _row_check(report, "kernel identity", identity_table(grid, config.H), IDENTITY_TOLERANCE)
        report.results["midpoint_identity_error"] = identity_midpoint_error(grid, config.H)
    elif config.check == "covariance":
        _row_check(
            report,
            "weight covariance",
            covariance_table(grid, config.H),
            COVARIANCE_TOLERANCE,
            relative=True,
        )
    elif config.check == "representation":
        _row_check(
            report,
            "kernel representation",
            representation_table(config.H, config.T),
            REPRESENTATION_TOLERANCE,
            relative=True,
        )
    else:
        report.checks.extend(_semigroup_checks(grid))
        report.checks.extend(_fraccalc_checks(grid, config.H))


def _run_fbm(config: ExperimentConfig, report: ExperimentReport) -> None:
    settings = config.settings()
    probes = validate_covariance(settings, oracle=config.oracle)
    table = Table(["t", "s", "empirical", "reference", "std_error"])
    for probe in probes:
        table.add(probe.t, probe.s, probe.empirical, probe.reference, probe.std_error)
        report.checks.append(
            _agreement(
                f"covariance R_H({probe.t:g}, {probe.s:g})",
                probe.empirical,
                probe.reference,
                probe.std_error,
                config.sigma_multiplier,
            )
        )
    report.tables["covariance"] = table
    report.results["sampler"] = "cholesky" if config.oracle else "volterra"
    if not config.oracle and config.n <= MAX_CHOLESKY_NODES:
        law = compare_terminal_law(settings)
        report.results["terminal_ks"] = {"statistic": law.statistic, "pvalue": law.pvalue}


def _run_solve(config: ExperimentConfig, report: ExperimentReport) -> None:
    model = parse_model(config.model)
    settings = config.settings()
    grid = settings.grid
    profile = second_moment_profile(model, config.x0, settings)
    mean = deterministic_volterra(model, config.x0, settings.weights)
    table = Table(["t", "second_moment", "std_error", "noise_free"])
    for row in zip(grid.nodes, profile.second_moment, profile.std_error, mean):
        table.add(*(float(v) for v in row))
    report.tables["moments"] = table
    report.results["sup_second_moment"] = profile.sup
    if config.y != 0.0:
        report.results["initial_condition_ratio"] = initial_condition_lipschitz(
            model, config.x0, config.x0 + config.y, settings
        )
    violations = model.check_bounds(grid.nodes[:: max(1, grid.n // 8)], np.linspace(-5.0, 5.0, 101))
    if violations:
        report.notes.extend(violations)
    if config.H == 0.5:
        report.checks.append(_brownian_check(model, config.x0, grid, config.seed))


def _run_bismut(config: ExperimentConfig, report: ExperimentReport) -> None:
    model, f = parse_model(config.model), parse_test_function(config.f)
    settings = config.settings()
    control = ControlFunction.parse(config.control, config.H, config.T)
    k = config.sigma_multiplier
    report.results["control_residual"] = control.normalization(settings.grid, config.H)
    if f.df is not None:
        triangle = oracle_triangle(model, config.x0, config.y, f, settings, control)
        estimates = {
            "bismut": triangle.bismut,
            "pathwise": triangle.pathwise,
            "finite_difference": triangle.finite_difference,
        }
    else:
        estimates = {
            "bismut": bismut_gradient(model, config.x0, config.y, f, settings, control),
            "finite_difference": finite_difference_gradient(model, config.x0, config.y, f, settings),
        }
    report.results["estimates"] = {name: e.to_dict() for name, e in estimates.items()}
    names = list(estimates)
    for a, first in enumerate(names):
        for second in names[a + 1:]:
            report.checks.append(
                _estimate_agreement(f"{first} ~ {second}", estimates[first], estimates[second], k)
            )
    centering = weight_centering(model, config.x0, config.y, settings, control)
    report.checks.append(_agreement("weight centering", centering.value, 0.0, centering.std_error, k))


def _run_ibp(config: ExperimentConfig, report: ExperimentReport) -> None:
    model, f = parse_model(config.model), parse_test_function(config.f)
    settings = config.settings()
    k = config.sigma_multiplier
    estimate = ibp_shift_gradient(model, config.x0, config.y, f, settings)
    report.results["estimate"] = estimate.to_dict()
    if f.df is None:
        return
    if model.zero_drift:
        std = gaussian_terminal_std(model, settings)
        oracle = config.y * gaussian_expectation(f.df, config.x0, std)
        report.results["gaussian_oracle"] = oracle
        report.checks.append(_agreement("ibp ~ gaussian oracle", estimate.value, oracle, estimate.std_error, k))
    else:
        pathwise = _shift_gradient_oracle(model, config, f)
        report.results["pathwise"] = pathwise.to_dict()
        report.checks.append(_estimate_agreement("ibp ~ E f'(X_T) y", estimate, pathwise, k))


def _run_harnack(config: ExperimentConfig, report: ExperimentReport) -> None:
    model, f = parse_model(config.model), parse_test_function(config.f)
    settings = config.settings()
    x0, y, p = config.x0, config.y, config.p
    common = {"sigma_multiplier": config.sigma_multiplier}
    variant = config.variant
    if variant == "gradient":
        check = check_gradient_bound(model, x0, y, f, settings, config.tolerance, **common)
    elif variant == "harnack":
        check = check_harnack(model, x0, x0 + y, f, p, settings, config.tolerance, **common)
    elif variant == "log":
        check = check_log_harnack(model, x0, x0 + y, f, settings, config.tolerance, **common)
    elif variant in ("shift", "shift-log"):
        check = check_shift_harnack(
            model, x0, y, f, p, settings, log=variant == "shift-log", tolerance=config.tolerance, **common
        )
    elif variant == "feller":
        check = probe_strong_feller(model, x0, f, settings, config.radii, **common)
        report.tables["feller"] = feller_table(check)
    elif variant in ("entropy", "entropy-bismut"):
        check = entropy_gradient_bound_check(
            model,
            x0,
            y,
            f,
            config.alpha,
            settings,
            variant="shift" if variant == "entropy" else "bismut",
            **common,
        )
    else:
        diagnostic = density_smoothness_diagnostic(model, x0, settings)
        report.results["roughness"] = diagnostic.roughness
        report.tables["density"] = diagnostic.to_table()
        report.notes.append("density diagnostic carries no verdict")
        return
    report.checks.append(check)


def _run_transport(config: ExperimentConfig, report: ExperimentReport) -> None:
    model = parse_model(config.model)
    shift = DriftShift.parse(config.shift)
    settings = config.settings()
    if config.exact:
        report.checks.append(exact_T2_check(model, shift, config.metric, settings, config.theta))
        return
    report.checks.append(
        check_T2(model, config.x0, shift, config.metric, settings, config.theta, config.sigma_multiplier)
    )
    if config.csv:
        report.tables["coupling"] = distance_table(model, config.x0, shift, settings)


def _run_maxineq(config: ExperimentConfig, report: ExperimentReport) -> None:
    phi = MaximalIntegrand.parse(config.phi)
    report.checks.append(
        check_maximal_inequality(phi, config.p, config.settings(), config.theta, config.sigma_multiplier)
    )


def _run_selftest(config: ExperimentConfig, report: ExperimentReport) -> None:
    quick = config.quick
    fine = 512 if quick else 2000
    base = replace(
        config,
        n=64 if quick else config.n,
        paths=4000 if quick else config.paths,
        x0=0.0,
        y=1.0,
    )
    settings = base.settings()
    k = config.sigma_multiplier
    scale = 5.0 if quick else 1.0

    # 1. kernel identity
    for H in (0.25, 0.5, 0.75):
        rows = identity_table(TimeGrid(1.0, fine), H)
        report.checks.append(_rows_report(f"[1] kernel identity H={H:g}", rows, scale * IDENTITY_TOLERANCE))

    # 2. covariance factorisation
    rows = covariance_table(TimeGrid(1.0, fine), 0.7)
    report.checks.append(
        _rows_report("[2] weight covariance H=0.7", rows, scale * COVARIANCE_TOLERANCE, relative=True)
    )
    for probe in validate_covariance(settings.evolve(H=0.7)):
        report.checks.append(
            _agreement(f"[2] covariance R_H({probe.t:g}, {probe.s:g})", probe.empirical, probe.reference, probe.std_error, k)
        )

    # 3. Brownian degeneracy
    grid = settings.grid
    for spec in ("linear:0.5", "trig:1"):
        check = _brownian_check(parse_model(spec), 0.0, grid, config.seed)
        check.name = f"[3] {check.name} {spec}"
        report.checks.append(check)

    # 4. oracle triangle
    linear = parse_model("linear:0.5")
    for H in (0.5, 0.7):
        for name in ("id", "sin"):
            triangle = oracle_triangle(linear, 0.0, 1.0, parse_test_function(name), settings.evolve(H=H))
            pairs = (
                ("bismut ~ pathwise", triangle.bismut, triangle.pathwise),
                ("bismut ~ finite_difference", triangle.bismut, triangle.finite_difference),
                ("pathwise ~ finite_difference", triangle.pathwise, triangle.finite_difference),
            )
            for pair, first, second in pairs:
                report.checks.append(
                    _estimate_agreement(f"[4] {pair} H={H:g} f={name}", first, second, k)
                )

    # 5. closed-form shift gradient
    zero, sine = parse_model("zero"), parse_test_function("sin")
    for H in (0.5, 0.7):
        estimate = ibp_shift_gradient(zero, 0.0, 1.0, sine, settings.evolve(H=H))
        oracle = math.exp(-0.5 * base.T ** (2.0 * H))
        report.checks.append(_agreement(f"[5] ibp ~ cos(x0) exp(-T^2H/2) H={H:g}", estimate.value, oracle, estimate.std_error, k))

    # 6. inequality suite
    positive = parse_test_function("two-plus-sin")
    for H in (0.5, 0.7):
        s = settings.evolve(H=H)
        report.checks.append(_renamed("[6]", check_gradient_bound(linear, 0.0, 1.0, positive, s, config.tolerance, k)))
        for distance in (0.0, 0.5, 1.0):
            report.checks.append(
                _renamed("[6]", check_log_harnack(linear, 0.0, distance, positive, s, config.tolerance, k))
            )
            report.checks.append(
                _renamed(
                    "[6]",
                    check_shift_harnack(linear, 0.0, distance, positive, 2.0, s, log=True, tolerance=config.tolerance, sigma_multiplier=k),
                )
            )
            for p in (2.0, 4.0):
                report.checks.append(
                    _renamed("[6]", check_harnack(linear, 0.0, distance, positive, p, s, config.tolerance, k))
                )
                report.checks.append(
                    _renamed(
                        "[6]",
                        check_shift_harnack(linear, 0.0, distance, positive, p, s, tolerance=config.tolerance, sigma_multiplier=k),
                    )
                )
        for variant in ("shift", "bismut"):
            report.checks.append(
                _renamed(
                    "[6]",
                    entropy_gradient_bound_check(
                        linear, 0.0, 1.0, positive, config.alpha, s, variant=variant, sigma_multiplier=k
                    ),
                )
            )
        feller = probe_strong_feller(linear, 0.0, parse_test_function("step:0.1"), s, sigma_multiplier=k)
        report.checks.append(_renamed("[6]", feller))

    # 7. T2
    exact_settings = settings.evolve(H=0.7)
    for metric in METRICS:
        report.checks.append(_renamed("[7]", exact_T2_check(zero, DriftShift.constant(1.0), metric, exact_settings)))
    ou = parse_model("ou:1")
    for H in (0.6, 0.75):
        for metric in METRICS:
            report.checks.append(
                _renamed("[7]", check_T2(ou, 0.0, DriftShift.constant(0.5), metric, settings.evolve(H=H), sigma_multiplier=k))
            )

    # 8. maximal inequality
    for H in (0.6, 0.75):
        report.checks.append(
            _renamed("[8]", check_maximal_inequality(MaximalIntegrand.parse("const:1"), 2.0, settings.evolve(H=H), sigma_multiplier=k))
        )

    # 9. fractional calculus
    frac_grid = TimeGrid(1.0, 512 if quick else 2048)
    for check in _semigroup_checks(frac_grid):
        report.checks.append(_renamed("[9]", check))
    for H in (0.3, 0.5, 0.7):
        for check in _fraccalc_checks(frac_grid, H):
            report.checks.append(_renamed("[9]", check))

    # 10. determinism across worker counts
    serial = estimate_PTf(linear, 0.0, sine, settings.evolve(threads=1))
    parallel = estimate_PTf(linear, 0.0, sine, settings.evolve(threads=4))
    report.checks.append(
        CheckReport(
            name="[10] worker-count independence",
            lhs=abs(serial.value - parallel.value),
            rhs=0.0,
            exact=True,
            details={"serial": serial.to_dict(), "parallel": parallel.to_dict()},
            requirements={"bitwise": serial == parallel},
        )
    )
    report.results["checks_passed"] = sum(c.passed for c in report.checks)
    report.results["checks_total"] = len(report.checks)


_RUNNERS: dict[str, Callable[[ExperimentConfig, ExperimentReport], None]] = {
    "kernel": _run_kernel,
    "fbm": _run_fbm,
    "solve": _run_solve,
    "bismut": _run_bismut,
    "ibp": _run_ibp,
    "harnack": _run_harnack,
    "transport": _run_transport,
    "maxineq": _run_maxineq,
    "selftest": _run_selftest,
}

# -----------------------------------------------------------------------
# Internal helpers
# -----------------------------------------------------------------------


def _rows_report(
    name: str, rows: list[CheckRow], tolerance: float, relative: bool = False
) -> CheckReport:
    errors = [
        row.error / max(1.0, abs(row.reference)) if relative else row.error for row in rows
    ]
    return CheckReport(
        name=name,
        lhs=max(errors),
        rhs=tolerance,
        exact=True,
        details={"rows": len(rows), "relative": relative},
    )


def _row_check(
    report: ExperimentReport,
    name: str,
    rows: list[CheckRow],
    tolerance: float,
    relative: bool = False,
) -> None:
    table = Table(["t", "s", "value", "reference", "error"])
    for row in rows:
        table.add(row.t, row.s, row.value, row.reference, row.error)
    report.tables[name.replace(" ", "_")] = table
    report.checks.append(_rows_report(name, rows, tolerance, relative))


def _semigroup_checks(grid: TimeGrid) -> list[CheckReport]:
    """``I^a I^b = I^(a+b)`` for every pair of orders in :data:`SEMIGROUP_ORDERS`."""
    f = GridFunction.from_callable(grid, lambda s: 1.0 + s)
    checks = []
    for a, b in combinations_with_replacement(SEMIGROUP_ORDERS, 2):
        twice = frac_integral(frac_integral(f, a), b).node_values()
        once = frac_integral(f, a + b).node_values()
        gap = float(np.max(np.abs(twice - once)))
        checks.append(CheckReport(f"semigroup I^{b:g} I^{a:g} = I^{a + b:g}", gap, SEMIGROUP_TOLERANCE, exact=True))
    return checks


def _fraccalc_checks(grid: TimeGrid, H: float) -> list[CheckReport]:
    f = GridFunction.from_callable(grid, lambda s: 1.0 + s)
    inversion = np.max(np.abs(frac_derivative(frac_integral(f, 0.4), 0.4).node_values() - f.node_values()))
    composed = compose_KH_via_fractional(f, H).node_values()
    direct = apply_KH(f, build_weights(grid, H)).node_values()
    composition = np.max(np.abs(composed - direct))
    return [
        CheckReport(f"inversion D^0.4 I^0.4 = id (H={H:g})", float(inversion), INVERSION_TOLERANCE, exact=True),
        CheckReport(f"composition ~ apply_KH (H={H:g})", float(composition), COMPOSITION_TOLERANCE, exact=True),
    ]


def _brownian_check(model: CoefficientModel, x0: float, grid: TimeGrid, seed: int) -> CheckReport:
    dW = sample_wiener(grid, seed, 0)
    volterra = solve_volterra(model, x0, dW, build_weights(grid, 0.5)).X
    reference = euler_maruyama(model, x0, dW.dW, grid)
    return CheckReport(
        name="brownian degeneracy",
        lhs=float(np.max(np.abs(volterra - reference))),
        rhs=BROWNIAN_TOLERANCE,
        exact=True,
        details={"model": model.name},
    )


def _shift_gradient_oracle(
    model: CoefficientModel, config: ExperimentConfig, f: TestFunction
) -> WeightedEstimate:
    """``E f'(X_T) y`` by plain Monte Carlo on the same streams."""
    derivative = TestFunction(f"{f.name}'", f.df, None, -math.inf, math.inf)
    values = estimate_PTf(model, config.x0, derivative, config.settings())
    return WeightedEstimate(
        value=values.value * config.y,
        std_error=values.std_error * abs(config.y),
        paths=values.paths,
    )


def _agreement(name: str, value: float, reference: float, std_error: float, k: float) -> CheckReport:
    return CheckReport(
        name=name,
        lhs=abs(value - reference),
        rhs=0.0,
        lhs_se=std_error,
        sigma_multiplier=k,
        details={"value": value, "reference": reference},
    )


def _estimate_agreement(
    name: str, first: WeightedEstimate, second: WeightedEstimate, k: float
) -> CheckReport:
    return CheckReport(
        name=name,
        lhs=abs(first.value - second.value),
        rhs=0.0,
        lhs_se=first.std_error,
        rhs_se=second.std_error,
        sigma_multiplier=k,
        details={"first": first.to_dict(), "second": second.to_dict()},
    )


def _renamed(prefix: str, check: CheckReport) -> CheckReport:
    check.name = f"{prefix} {check.name}"
    return check


def _write_outputs(config: ExperimentConfig, report: ExperimentReport) -> None:
    if config.report:
        report.write_json(config.report)
        print(f"{report.verdict.value.upper()}: {config.command} ({len(report.checks)} checks) -> {config.report}")
    else:
        sys.stdout.write(report.to_json())
    if config.command == "selftest":
        print(f"determinism hash {report.determinism_hash()}", file=sys.stderr)
    if config.csv and report.tables:
        target = Path(config.csv)
        if len(report.tables) == 1:
            write_csv(target, next(iter(report.tables.values())))
        else:
            for name, table in report.tables.items():
                write_csv(target.with_name(f"{target.stem}-{name}{target.suffix or '.csv'}"), table)


if __name__ == "__main__":
    sys.exit(main())
