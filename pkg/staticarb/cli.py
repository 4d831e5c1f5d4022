"""
Command-line interface.

Exit codes: 0 clean, 1 operational error, 2 arbitrage found (``detect`` only).
Reports go to stdout (or ``--report``); logs go to stderr.
"""
import argparse
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
from loguru import logger
from pydantic import ValidationError

from staticarb.config.settings import Settings
from staticarb.main import configure_logging
from staticarb.models.errors import InputError, SolverFailure, StaticArbError
from staticarb.models.schemas import ObjectiveKind, RepairConfig, TimeseriesRow
from staticarb.services.constraint_service import ConstraintService
from staticarb.services.lp_solver import get_backend
from staticarb.services.normalizer_service import NormalizerService
from staticarb.services.repair_service import RepairService
from staticarb.services.stress_service import StressService, make_noise_spec
from staticarb.utils import snapshot_io
from staticarb.utils.pricing import synthetic_quotes

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_ARBITRAGE = 2


class _Services:
    """Services wired to one invocation's settings."""

    def __init__(self, settings: Settings, backend: str = "simplex"):
        self.settings = settings
        self.normalizer = NormalizerService(settings)
        self.constraints = ConstraintService(settings)
        self.repairs = RepairService(settings, backend=get_backend(backend), constraints=self.constraints)
        self.stress = StressService(settings, constraints=self.constraints, repairs=self.repairs)


def _settings_from_args(args: argparse.Namespace) -> Settings:
    values = {
        "log_level": args.log_level,
        "log_file": args.log_file,
        "solver_form": args.solver_form,
    }
    for flag, field in (
        ("tol", "detection_tolerance"),
        ("zero_tol", "zero_tolerance"),
        ("spread_floor", "spread_floor"),
        ("feas_tol", "solver_feas_tol"),
        ("digits", "output_significant_digits"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            values[field] = value
    jobs = getattr(args, "jobs", None)
    if jobs is not None:
        values["default_jobs"] = jobs
    return Settings(**values)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_detect(args: argparse.Namespace, services: _Services) -> int:
    quotes, curves, _ = snapshot_io.read_snapshot(args.snapshot)
    surface = services.normalizer.normalize_surface(quotes, curves)
    system = services.constraints.build_constraints(surface)
    report = services.constraints.detect_violations(system, surface.flat_prices)
    snapshot_io.write_json(report, args.report, services.settings.output_significant_digits)
    if report.total:
        logger.warning(f"{report.total} violations in {args.snapshot} (worst residual {report.worst_residual:.3e})")
        return EXIT_ARBITRAGE
    return EXIT_OK


def cmd_repair(args: argparse.Namespace, services: _Services) -> int:
    quotes, curves, frame = snapshot_io.read_snapshot(args.snapshot)
    objective = ObjectiveKind(args.objective)
    if objective == ObjectiveKind.L1BA and not args.allow_spread_floor and not all(q.has_band for q in quotes):
        raise InputError("l1ba repair needs bid and ask on every quote (or --allow-spread-floor)")

    surface = services.normalizer.normalize_surface(quotes, curves)
    config = RepairConfig(objective=objective, delta0_override=args.delta0, feas_tol=services.settings.solver_feas_tol)
    result = services.repairs.repair_surface(surface, config)

    digits = services.settings.output_significant_digits
    premiums = dict(services.normalizer.denormalize_prices(surface, result.repaired))
    effective_mask = services.repairs.effective_mask(result.epsilon, surface)
    epsilon = np.zeros(len(quotes))
    effective = np.zeros(len(quotes), dtype=bool)
    epsilon[surface.source_index] = result.epsilon
    effective[surface.source_index] = effective_mask
    snapshot_io.write_repaired_snapshot(
        args.out,
        frame,
        repaired=[premiums[i] for i in range(len(quotes))],
        perturbation=epsilon,
        effective=effective,
        digits=digits,
    )

    summary = {
        "objective": result.objective.value,
        "objective_value": result.objective_value,
        "n_perturbed": result.n_perturbed,
        "n_effective": result.n_effective,
        "delta0": result.delta0_used,
        "row_count": result.row_count,
        "min_residual": result.min_residual,
        "solver_status": result.solver_status,
        "iterations": result.iterations,
        "build_seconds": result.build_seconds,
        "solve_seconds": result.solve_seconds,
    }
    snapshot_io.write_json(summary, args.report, digits)
    return EXIT_OK


def cmd_stress(args: argparse.Namespace, services: _Services) -> int:
    lambdas = args.lam or [0.25]
    specs = [make_noise_spec(lam, args.sigma, args.seed, args.trials) for lam in lambdas]
    quotes, curves, _ = snapshot_io.read_snapshot(args.snapshot)
    surface = services.normalizer.normalize_surface(quotes, curves)
    objective = ObjectiveKind(args.objective)
    jobs = services.settings.default_jobs

    if len(specs) == 1:
        reports = [services.stress.run_stress(surface, specs[0], objective, args.rescale_bands, jobs)]
    else:
        reports = services.stress.run_stress_sweep(surface, lambdas, specs[0], objective, args.rescale_bands, jobs)

    if args.samples_out:
        samples = [r for report in reports for r in report.log_ratios]
        snapshot_io.write_samples(args.samples_out, samples, services.settings.output_significant_digits)
    snapshot_io.write_json(
        reports[0] if len(reports) == 1 else reports, args.report, services.settings.output_significant_digits
    )
    return EXIT_OK


def _timeseries_row(path: Path, objective: ObjectiveKind, services: _Services) -> TimeseriesRow:
    try:
        quotes, curves, _ = snapshot_io.read_snapshot(path)
        surface = services.normalizer.normalize_surface(quotes, curves)
        system = services.constraints.build_constraints(surface)
        result = services.repairs.repair(surface, system, RepairConfig(objective=objective))
        portfolios = services.repairs.extract_executable_arbitrage(system, surface)
        return TimeseriesRow(
            snapshot=path.name,
            n_perturbed=result.n_perturbed,
            n_effective=result.n_effective,
            portfolios=len(portfolios),
        )
    except (StaticArbError, OSError) as e:
        logger.error(f"Snapshot {path.name} failed: {e}")
        return TimeseriesRow(snapshot=path.name, error=str(e))


def cmd_timeseries(args: argparse.Namespace, services: _Services) -> int:
    paths = snapshot_io.list_snapshots(args.directory)
    if not paths:
        raise InputError(f"No snapshot files in {args.directory}")
    objective = ObjectiveKind(args.objective)
    jobs = services.settings.default_jobs

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(lambda p: _timeseries_row(p, objective, services), paths))
    else:
        rows = [_timeseries_row(p, objective, services) for p in paths]

    snapshot_io.write_timeseries(args.out, rows)
    failed = sum(1 for row in rows if row.error)
    logger.info(f"Processed {len(rows)} snapshots ({failed} failed)")
    return EXIT_OK


def cmd_synth(args: argparse.Namespace, services: _Services) -> int:
    quotes, curves = synthetic_quotes(
        vol=args.vol,
        spot=args.spot,
        rate=args.rate,
        half_spread_fraction=args.spread,
    )
    snapshot_io.write_snapshot(args.out, quotes, curves, services.settings.output_significant_digits)
    logger.info(f"Wrote {len(quotes)} synthetic quotes to {args.out}")
    return EXIT_OK


def cmd_serve(args: argparse.Namespace, services: _Services) -> int:
    import uvicorn

    uvicorn.run("staticarb.main:app", host=args.host, port=args.port, log_level=services.settings.log_level.lower())
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="staticarb",
        description="Detect and repair static arbitrage in European call option quotes.",
    )
    parser.add_argument("--log-level", default="INFO", help="Log level (default: INFO)")
    parser.add_argument("--log-file", default=None, help="Also log to this file (rotated at 10 MB)")
    parser.add_argument("--solver-form", choices=["auto", "standard", "dual"], default="auto")
    parser.add_argument("--backend", choices=["simplex", "highs"], default="simplex", help="LP solver backend")
    parser.add_argument("--spread-floor", type=float, default=None, help="Minimum normalized half-spread")
    parser.add_argument("--digits", type=int, default=None, help="Significant digits in written numbers")
    sub = parser.add_subparsers(dest="command", required=True)

    detect = sub.add_parser("detect", help="Count violated no-arbitrage constraints")
    detect.add_argument("snapshot")
    detect.add_argument("--tol", type=float, default=None, help="Violation tolerance (normalized units)")
    detect.add_argument("--report", default=None, help="Write the JSON report here instead of stdout")
    detect.set_defaults(handler=cmd_detect)

    repair = sub.add_parser("repair", help="Repair mids and write the repaired snapshot")
    repair.add_argument("snapshot")
    repair.add_argument("--objective", choices=[o.value for o in ObjectiveKind], default="l1")
    repair.add_argument("--out", required=True, help="Repaired snapshot CSV")
    repair.add_argument("--report", default=None, help="Write the JSON summary here instead of stdout")
    repair.add_argument("--delta0", type=float, default=None, help="Override the in-band cost level")
    repair.add_argument("--allow-spread-floor", action="store_true",
                        help="Accept quotes without bid/ask for l1ba (their spread is floored)")
    repair.add_argument("--feas-tol", type=float, default=None)
    repair.add_argument("--zero-tol", type=float, default=None)
    repair.set_defaults(handler=cmd_repair)

    stress = sub.add_parser("stress", help="Run the synthetic-noise recovery protocol")
    stress.add_argument("snapshot")
    stress.add_argument("--lambda", dest="lam", type=float, action="append",
                        help="Polluted fraction in (0, 1]; repeat for a sweep")
    stress.add_argument("--sigma", type=float, default=1.0)
    stress.add_argument("--trials", type=int, default=1)
    stress.add_argument("--seed", type=int, default=0)
    stress.add_argument("--objective", choices=[o.value for o in ObjectiveKind], default="l1")
    stress.add_argument("--rescale-bands", action="store_true", help="Scale bid/ask bands with the noise")
    stress.add_argument("--samples-out", default=None, help="CSV of pooled log-ratio samples")
    stress.add_argument("--report", default=None)
    stress.add_argument("--jobs", type=int, default=None)
    stress.add_argument("--zero-tol", type=float, default=None)
    stress.set_defaults(handler=cmd_stress)

    timeseries = sub.add_parser("timeseries", help="Repair every snapshot of a directory")
    timeseries.add_argument("directory")
    timeseries.add_argument("--objective", choices=[o.value for o in ObjectiveKind], default="l1ba")
    timeseries.add_argument("--out", default=None, help="CSV output (default: stdout)")
    timeseries.add_argument("--jobs", type=int, default=None)
    timeseries.add_argument("--zero-tol", type=float, default=None)
    timeseries.set_defaults(handler=cmd_timeseries)

    synth = sub.add_parser("synth", help="Write a flat-volatility Black-Scholes snapshot")
    synth.add_argument("--out", required=True)
    synth.add_argument("--vol", type=float, default=0.2)
    synth.add_argument("--spot", type=float, default=1.0)
    synth.add_argument("--rate", type=float, default=0.0)
    synth.add_argument("--spread", type=float, default=None, help="Half-spread as a fraction of premium")
    synth.set_defaults(handler=cmd_synth)

    serve = sub.add_parser("serve", help="Start the HTTP API")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    serve.set_defaults(handler=cmd_serve)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        settings = _settings_from_args(args)
    except ValidationError as e:
        sys.stderr.write(f"Invalid option: {e.errors()[0]['msg']}\n")
        return EXIT_ERROR

    configure_logging(settings.log_level, settings.log_file)
    try:
        services = _Services(settings, backend=args.backend)
        return args.handler(args, services)
    except SolverFailure as e:
        logger.error(f"Solver failure: {e}; diagnostics: {e.diagnostics}")
        return EXIT_ERROR
    except (InputError, OSError) as e:
        logger.error(str(e))
        return EXIT_ERROR
    except ValidationError as e:
        logger.error(f"Invalid input: {e.errors()[0]['msg']}")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
