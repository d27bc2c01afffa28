"""
MLSG Application Bootstrap (main.py).

Entry point for the adaptive multilevel stochastic Galerkin command line.

Responsibilities:
1.  Load ``.env`` so ``MLSG_*`` settings can live next to the project.
2.  Configure the Dependency Injection container for the selected problem.
3.  Initialise the SQLite run store (run schema migrations).
4.  Dispatch the command-line sub-command.

The CLI only resolves ``IAdaptiveService`` and ``IRunRepository``; the
numerical services share one ``IAssemblyService`` so the stiffness cache
spans the whole run.
"""

from __future__ import annotations

import sys
from pathlib import Path
from typing import Optional, Sequence

# ---------------------------------------------------------------------------
# Allow ``python main.py`` from any working directory
# ---------------------------------------------------------------------------
PROJECT_ROOT = Path(__file__).resolve().parent
if str(PROJECT_ROOT) not in sys.path:
    sys.path.insert(0, str(PROJECT_ROOT))

# ---------------------------------------------------------------------------
# Load .env file when present (python-dotenv); real env vars take precedence.
# ---------------------------------------------------------------------------
from dotenv import load_dotenv

load_dotenv(PROJECT_ROOT / ".env")

# ---------------------------------------------------------------------------
# Application modules
# ---------------------------------------------------------------------------
from app.cli import commands
from app.container import DIContainer, container
from app.database.connection import DatabaseConnection
from app.database.schema import SchemaManager
from app.models.problem import ProblemSpec
from app.repositories.run_repository import IRunRepository, SqliteRunRepository
from app.services.adaptive_service import AdaptiveService, IAdaptiveService
from app.services.assembly_service import AssemblyService, IAssemblyService
from app.services.block_system import BlockSystemService, IBlockSystemService
from app.services.error_estimator import ErrorEstimator, IErrorEstimator
from app.settings import Settings


# ---------------------------------------------------------------------------
# DI Container Bootstrap
# ---------------------------------------------------------------------------

def _bootstrap_container(ioc: DIContainer, settings: Settings, problem: ProblemSpec) -> None:
    """Register the run store and the numerical services for ``problem``."""

    ioc.register_instance(Settings, settings)
    ioc.register_instance(ProblemSpec, problem)

    # --- Infrastructure ---
    ioc.register_singleton(
        DatabaseConnection,
        lambda: DatabaseConnection(settings.db_path),
    )

    # --- Repositories ---
    def run_repository() -> IRunRepository:
        db: DatabaseConnection = ioc.resolve(DatabaseConnection)
        SchemaManager(db).migrate()
        return SqliteRunRepository(db)

    ioc.register_singleton(IRunRepository, run_repository)

    # --- Services ---
    ioc.register_singleton(
        IAssemblyService,
        lambda: AssemblyService(ioc.resolve(ProblemSpec).coefficient),
    )
    ioc.register_singleton(
        IBlockSystemService,
        lambda: BlockSystemService(ioc.resolve(IAssemblyService), settings.threads),
    )
    ioc.register_singleton(
        IErrorEstimator,
        lambda: ErrorEstimator(
            ioc.resolve(IAssemblyService),
            ioc.resolve(IBlockSystemService),
            settings.threads,
        ),
    )
    ioc.register_singleton(
        IAdaptiveService,
        lambda: AdaptiveService(
            ioc.resolve(IAssemblyService),
            ioc.resolve(IBlockSystemService),
            ioc.resolve(IErrorEstimator),
        ),
    )


# ---------------------------------------------------------------------------
# Entry Point
# ---------------------------------------------------------------------------

def main(argv: Optional[Sequence[str]] = None) -> int:
    return commands.main(argv, container, _bootstrap_container)


if __name__ == "__main__":
    sys.exit(main())
