"""
Command-line front end.

Sub-commands:

``run``
    one adaptive run; writes the record CSV, a JSON manifest and (with
    ``--dump-meshes``) the final meshes, and stores the run in SQLite.
``effectivity``
    like ``run`` but with effectivity indices measured against the energy
    of an ML-C reference run at ``--ref-tol`` (looked up in the run store
    first, computed and stored otherwise).
``rate``
    prints the fitted log-log convergence rate of a record CSV.

Exit codes: 0 success, 1 invalid configuration or unusable output,
2 solver failure or iteration cap (argparse also uses 2 for usage errors).
"""

from __future__ import annotations

import argparse
import json
import logging
import subprocess
from dataclasses import dataclass, replace
from datetime import datetime
from pathlib import Path
from typing import Any, Callable, Optional, Sequence

import app
from app.container import DIContainer
from app.exceptions import ConfigurationError, MlsgError, RunRepositoryError
from app.models.problem import ProblemSpec
from app.models.run import ALGORITHMS, SOLVERS, AdaptiveConfig, MarkingConfig, RunManifest, RunOutcome
from app.repositories.csv_log import CsvRecordWriter
from app.repositories.run_repository import STATUS_FAILED, IRunRepository
from app.services.adaptive_service import IAdaptiveService
from app.services.convergence import TAIL_FRACTION, fit_rate_csv
from app.services.mesh_service import dump_mesh
from app.services.problem_library import PROBLEMS, get_problem
from app.settings import Settings, load_settings

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_FAILED = 2

Bootstrap = Callable[[DIContainer, Settings, ProblemSpec], None]

#: argparse destination -> settings field
_FLAG_FIELDS = {
    "problem": "problem",
    "alg": "algorithm",
    "tol": "tol",
    "mbar": "m_bar",
    "grid": "grid",
    "theta": "theta",
    "theta_x": "theta_x",
    "theta_p": "theta_p",
    "vartheta": "vartheta",
    "solver": "solver",
    "solver_tol": "solver_tol",
    "max_iters": "max_iterations",
    "max_solver_iters": "max_solver_iterations",
    "threads": "threads",
    "ref_tol": "ref_tol",
    "enriched_check": "enriched_check",
    "reduction_check": "reduction_check",
    "out": "out_dir",
    "db": "db_path",
    "dump_meshes": "dump_meshes",
    "log_level": "log_level",
}


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    # Every default is None so unset flags fall through to config/env/defaults.
    parser.add_argument("--problem", choices=PROBLEMS)
    parser.add_argument("--alg", choices=sorted(ALGORITHMS))
    parser.add_argument("--tol", type=float)
    parser.add_argument("--mbar", type=int, help="extra parameters considered by the detail set")
    parser.add_argument("--grid", type=int, help="initial grid parameter n (h = 1/n)")
    parser.add_argument("--theta", type=float, help="Dörfler parameter of criterion C")
    parser.add_argument("--theta-x", type=float, help="spatial Dörfler parameter")
    parser.add_argument("--theta-p", type=float, help="parametric Dörfler parameter")
    parser.add_argument("--vartheta", type=float, help="weight between spatial and parametric marking")
    parser.add_argument("--solver", choices=SOLVERS)
    parser.add_argument("--solver-tol", type=float)
    parser.add_argument("--max-iters", type=int)
    parser.add_argument("--max-solver-iters", type=int)
    parser.add_argument("--threads", type=int)
    parser.add_argument("--enriched-check", type=int, metavar="CAP",
                        help="compare est with the enriched-space error while N-hat <= CAP")
    parser.add_argument("--reduction-check", action="store_true", default=None)
    parser.add_argument("--out", type=Path)
    parser.add_argument("--db", type=Path)
    parser.add_argument("--dump-meshes", action="store_true", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mlsg",
        description="Adaptive multilevel stochastic Galerkin FEM benchmarks.",
    )
    parser.add_argument("--config", type=Path, help="KEY=VALUE settings file")
    parser.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one adaptive algorithm")
    _add_run_flags(run)

    eff = sub.add_parser("effectivity", help="run with effectivity indices against a reference")
    _add_run_flags(eff)
    eff.add_argument("--ref-tol", type=float, help="reference tolerance (default tol/4)")

    rate = sub.add_parser("rate", help="fit the convergence rate of a record CSV")
    rate.add_argument("csv", type=Path)
    rate.add_argument("--tail", type=float, default=TAIL_FRACTION)
    return parser


def configure_logging(level: str) -> None:
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format="%(asctime)s %(levelname)-7s %(name)s: %(message)s",
        force=True,
    )


def settings_from_args(args: argparse.Namespace) -> Settings:
    overrides = {name: getattr(args, dest, None) for dest, name in _FLAG_FIELDS.items()}
    return load_settings(overrides, args.config)


# ---------------------------------------------------------------------------
# Configuration helpers
# ---------------------------------------------------------------------------

def build_config(settings: Settings, problem: ProblemSpec, algorithm: Optional[str] = None,
                 tol: Optional[float] = None, **extra: Any) -> AdaptiveConfig:
    marking = MarkingConfig(
        theta_x=settings.theta_x, theta_p=settings.theta_p,
        theta=settings.theta, vartheta=settings.vartheta,
    )
    return AdaptiveConfig.for_algorithm(
        problem.name,
        algorithm or settings.algorithm,
        marking=marking,
        m_bar=settings.m_bar or problem.default_m_bar,
        tol=tol or settings.tol or problem.default_tol,
        solver_tol=settings.solver_tol,
        solver=settings.solver,
        max_iterations=settings.max_iterations,
        max_solver_iterations=settings.max_solver_iterations,
        threads=settings.threads,
        grid=settings.grid,
        enriched_check_cap=settings.enriched_check,
        reduction_check=settings.reduction_check,
        **extra,
    )


def version_string() -> str:
    """``git describe`` of the working tree, or the package version."""
    try:
        described = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).resolve().parent, capture_output=True, text=True, timeout=5,
        )
        if described.returncode == 0 and described.stdout.strip():
            return described.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    return app.__version__


def _now() -> str:
    return datetime.now().isoformat(timespec="seconds")


def _run_stem(config: AdaptiveConfig, prefix: str = "") -> str:
    stem = f"{config.problem}_{config.algorithm}_tol{config.tol:g}"
    if config.marking.vartheta != 1.0:
        stem += f"_vartheta{config.marking.vartheta:g}"
    return prefix + stem


# ---------------------------------------------------------------------------
# Run execution
# ---------------------------------------------------------------------------

@dataclass
class ExecutedRun:
    outcome: RunOutcome
    manifest: RunManifest
    run_id: int


def _status(outcome: RunOutcome) -> str:
    if not outcome.success:
        return STATUS_FAILED
    return outcome.data.stop_reason if outcome.data else outcome.message


def execute_run(config: AdaptiveConfig, problem: ProblemSpec, adaptive: IAdaptiveService,
                repository: IRunRepository, out_dir: Path, dump_meshes: bool = False,
                prefix: str = "") -> ExecutedRun:
    """Run one configuration with CSV, manifest and run-store sinks attached."""
    stem = _run_stem(config, prefix)
    csv_path = out_dir / f"{stem}.csv"
    manifest_path = out_dir / f"{stem}.manifest.json"
    manifest = RunManifest(
        config=config.echo(),
        version=version_string(),
        started_at=_now(),
        outputs={"csv": str(csv_path), "manifest": str(manifest_path)},
        threads=config.threads,
    )
    run_id = repository.create_run(config, manifest)
    manifest.outputs["run_id"] = str(run_id)

    with CsvRecordWriter(csv_path) as writer:
        configured = replace(config, sinks=(writer, repository.sink(run_id)))
        _write_manifest(manifest_path, manifest)
        outcome = adaptive.run(configured, problem)

    manifest.finished_at = _now()
    manifest.status = _status(outcome)
    if dump_meshes and outcome.data is not None:
        mesh_dir = out_dir / f"{stem}_meshes"
        for nu in outcome.data.space.index_set:
            label = "-".join(str(nu[m]) for m in range(1, max(nu.support, default=0) + 1)) or "0"
            dump_mesh(mesh_dir / f"nu_{label}.txt", outcome.data.space.mesh_of(nu))
        manifest.outputs["meshes"] = str(mesh_dir)
    _write_manifest(manifest_path, manifest)

    final = outcome.data.records[-1] if outcome.data and outcome.data.records else None
    repository.finish_run(run_id, manifest.status, manifest, final)
    logger.info("[Commands] %s: %s (%s)", stem, outcome.message, csv_path)
    return ExecutedRun(outcome, manifest, run_id)


def _write_manifest(path: Path, manifest: RunManifest) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(manifest.to_dict(), indent=2, sort_keys=True, default=str) + "\n",
                        encoding="utf-8")
    except OSError as exc:
        raise RunRepositoryError(f"[Commands] Cannot write manifest {path}: {exc}") from exc


def _exit_code(outcome: RunOutcome) -> int:
    return EXIT_OK if outcome.success else EXIT_FAILED


# ---------------------------------------------------------------------------
# Sub-commands
# ---------------------------------------------------------------------------

def cmd_run(settings: Settings, problem: ProblemSpec, ioc: DIContainer) -> int:
    config = build_config(settings, problem)
    executed = execute_run(
        config, problem,
        ioc.resolve(IAdaptiveService), ioc.resolve(IRunRepository),
        settings.out_dir, settings.dump_meshes,
    )
    return _exit_code(executed.outcome)


def cmd_effectivity(settings: Settings, problem: ProblemSpec, ioc: DIContainer) -> int:
    adaptive: IAdaptiveService = ioc.resolve(IAdaptiveService)
    repository: IRunRepository = ioc.resolve(IRunRepository)

    config = build_config(settings, problem)
    ref_tol = settings.ref_tol or config.tol / 4.0
    if ref_tol >= config.tol:
        raise ConfigurationError(f"--ref-tol ({ref_tol:g}) must be below --tol ({config.tol:g}).")
    reference_config = build_config(settings, problem, algorithm="ml-c", tol=ref_tol)

    reference_energy = repository.find_reference_energy(reference_config)
    if reference_energy is None:
        logger.info("[Commands] No stored reference for tol=%g; computing it.", ref_tol)
        reference = execute_run(reference_config, problem, adaptive, repository,
                                settings.out_dir, prefix="reference_")
        if not reference.outcome.success or reference.outcome.data is None:
            logger.error("[Commands] Reference run failed: %s", reference.outcome.message)
            return EXIT_FAILED
        reference_energy = reference.outcome.data.final_energy
    else:
        logger.info("[Commands] Reusing stored reference energy %.10e", reference_energy)

    config = build_config(settings, problem, reference_energy=reference_energy)
    executed = execute_run(config, problem, adaptive, repository,
                           settings.out_dir, settings.dump_meshes)
    return _exit_code(executed.outcome)


def cmd_rate(args: argparse.Namespace) -> int:
    slope = fit_rate_csv(args.csv, args.tail)
    print(f"{slope:.6f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def main(argv: Optional[Sequence[str]], ioc: DIContainer, bootstrap: Bootstrap) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(list(argv) if argv is not None else None)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_CONFIG

    try:
        settings = settings_from_args(args)
        configure_logging(settings.log_level)
        if args.command == "rate":
            return cmd_rate(args)

        problem = get_problem(settings.problem, settings.grid)
        bootstrap(ioc, settings, problem)
        if args.command == "effectivity":
            return cmd_effectivity(settings, problem, ioc)
        return cmd_run(settings, problem, ioc)
    except (ConfigurationError, RunRepositoryError) as exc:
        logger.error("%s", exc)
        return EXIT_CONFIG
    except MlsgError as exc:
        logger.error("%s", exc)
        return EXIT_FAILED
    finally:
        ioc.dispose()

