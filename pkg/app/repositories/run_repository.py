"""
Run Repository – Data Access Layer for adaptive runs.

Defines the abstract interface (IRunRepository) and its concrete SQLite
implementation (SqliteRunRepository).

The command layer depends only on IRunRepository, keeping it decoupled
from the storage technology.
"""

from __future__ import annotations

import json
import logging
import sqlite3
from abc import ABC, abstractmethod
from typing import Any, Dict, List, Optional

from app.database.connection import DatabaseConnection
from app.exceptions import RunRepositoryError
from app.models.run import AdaptiveConfig, IterationRecord, RecordSink, RunManifest

logger = logging.getLogger(__name__)

STATUS_RUNNING = "running"
STATUS_CONVERGED = "converged"
STATUS_STALLED = "stalled"
STATUS_FAILED = "failed"
FINISHED_OK = (STATUS_CONVERGED, STATUS_STALLED)


# ---------------------------------------------------------------------------
# Abstract Interface (the contract)
# ---------------------------------------------------------------------------

class IRunRepository(ABC):
    """Contract that every run store must satisfy."""

    @abstractmethod
    def create_run(self, config: AdaptiveConfig, manifest: RunManifest) -> int:
        """Register a run and return its generated id."""

    @abstractmethod
    def add_iteration(self, run_id: int, record: IterationRecord) -> None:
        """Append one iteration record to a run."""

    @abstractmethod
    def finish_run(self, run_id: int, status: str, manifest: RunManifest,
                   final: Optional[IterationRecord] = None) -> None:
        """Store the outcome and the final state of a run."""

    @abstractmethod
    def find_reference_energy(self, config: AdaptiveConfig) -> Optional[float]:
        """Final energy of a finished run with the same parameters, or None."""

    @abstractmethod
    def list_iterations(self, run_id: int) -> List[IterationRecord]:
        """Records of a run in iteration order."""

    @abstractmethod
    def find_run(self, run_id: int) -> Optional[Dict[str, Any]]:
        """Row of the runs table as a dictionary, or None."""

    def sink(self, run_id: int) -> RecordSink:
        """Record sink that appends to ``run_id``."""
        return lambda record: self.add_iteration(run_id, record)


# ---------------------------------------------------------------------------
# SQLite Implementation
# ---------------------------------------------------------------------------

_INSERT_RUN_SQL = """
INSERT INTO runs (
    problem, algorithm, grid, tol, solver_tol, m_bar,
    theta_x, theta_p, theta, vartheta, manifest
) VALUES (
    :problem, :algorithm, :grid, :tol, :solver_tol, :m_bar,
    :theta_x, :theta_p, :theta, :vartheta, :manifest
)
"""

_INSERT_ITERATION_SQL = """
INSERT INTO iterations (
    run_id, iteration, dofs, card_p, deg_p, supp_p,
    est, est_x, est_p, energy,
    solver_iterations, branch, n_spatial_marks, n_parametric_marks, activated, wall_time,
    true_error, effectivity, theorem_ratio, reduction_ratio
) VALUES (
    :run_id, :iteration, :dofs, :card_p, :deg_p, :supp_p,
    :est, :est_x, :est_p, :energy,
    :solver_iterations, :branch, :n_spatial_marks, :n_parametric_marks, :activated, :wall_time,
    :true_error, :effectivity, :theorem_ratio, :reduction_ratio
)
"""

_FINISH_RUN_SQL = """
UPDATE runs SET
    status       = :status,
    n_iterations = :n_iterations,
    final_energy = :final_energy,
    final_est    = :final_est,
    final_dofs   = :final_dofs,
    manifest     = :manifest,
    finished_at  = datetime('now','localtime')
WHERE id = :id
"""

_REFERENCE_SQL = f"""
SELECT final_energy FROM runs
 WHERE problem = :problem AND algorithm = :algorithm AND tol = :tol
   AND m_bar = :m_bar AND theta_x = :theta_x AND theta_p = :theta_p
   AND theta = :theta AND vartheta = :vartheta
   AND grid IS :grid
   AND status IN ({", ".join(repr(s) for s in FINISHED_OK)})
   AND final_energy IS NOT NULL
 ORDER BY id DESC
 LIMIT 1
"""


def _config_to_params(config: AdaptiveConfig) -> Dict[str, Any]:
    return {
        "problem": config.problem,
        "algorithm": config.algorithm,
        "grid": config.grid,
        "tol": config.tol,
        "solver_tol": config.solver_tol,
        "m_bar": config.m_bar,
        "theta_x": config.marking.theta_x,
        "theta_p": config.marking.theta_p,
        "theta": config.marking.theta,
        "vartheta": config.marking.vartheta,
    }


def _record_to_params(run_id: int, r: IterationRecord) -> Dict[str, Any]:
    return {
        "run_id": run_id,
        "iteration": r.iteration,
        "dofs": r.dofs,
        "card_p": r.card_p,
        "deg_p": r.deg_p,
        "supp_p": r.supp_p,
        "est": r.est,
        "est_x": r.est_x,
        "est_p": r.est_p,
        "energy": r.energy,
        "solver_iterations": r.solver_iterations,
        "branch": r.branch,
        "n_spatial_marks": r.n_spatial_marks,
        "n_parametric_marks": r.n_parametric_marks,
        "activated": ";".join(r.activated),
        "wall_time": r.wall_time,
        "true_error": r.true_error,
        "effectivity": r.effectivity,
        "theorem_ratio": r.theorem_ratio,
        "reduction_ratio": r.reduction_ratio,
    }


class SqliteRunRepository(IRunRepository):
    """SQLite-backed implementation of IRunRepository."""

    def __init__(self, db: DatabaseConnection) -> None:
        self._db = db

    # ------------------------------------------------------------------
    # Write operations
    # ------------------------------------------------------------------

    def create_run(self, config: AdaptiveConfig, manifest: RunManifest) -> int:
        params = _config_to_params(config)
        params["manifest"] = json.dumps(manifest.to_dict(), sort_keys=True, default=str)
        try:
            with self._db as conn:
                cursor = conn.execute(_INSERT_RUN_SQL, params)
                run_id = int(cursor.lastrowid)
        except sqlite3.Error as exc:
            raise RunRepositoryError(f"[RunRepository] Cannot register run: {exc}") from exc
        logger.debug("[RunRepository] Registered run %d (%s, %s)", run_id, config.problem, config.algorithm)
        return run_id

    def add_iteration(self, run_id: int, record: IterationRecord) -> None:
        try:
            with self._db as conn:
                conn.execute(_INSERT_ITERATION_SQL, _record_to_params(run_id, record))
        except sqlite3.Error as exc:
            raise RunRepositoryError(
                f"[RunRepository] Cannot store iteration {record.iteration} of run {run_id}: {exc}"
            ) from exc

    def finish_run(self, run_id: int, status: str, manifest: RunManifest,
                   final: Optional[IterationRecord] = None) -> None:
        params = {
            "id": run_id,
            "status": status,
            "n_iterations": 0 if final is None else final.iteration + 1,
            "final_energy": None if final is None else final.energy,
            "final_est": None if final is None else final.est,
            "final_dofs": None if final is None else final.dofs,
            "manifest": json.dumps(manifest.to_dict(), sort_keys=True, default=str),
        }
        try:
            with self._db as conn:
                cursor = conn.execute(_FINISH_RUN_SQL, params)
                if cursor.rowcount != 1:
                    raise RunRepositoryError(f"[RunRepository] Run {run_id} does not exist.")
        except sqlite3.Error as exc:
            raise RunRepositoryError(f"[RunRepository] Cannot finish run {run_id}: {exc}") from exc

    # ------------------------------------------------------------------
    # Read operations
    # ------------------------------------------------------------------

    def find_reference_energy(self, config: AdaptiveConfig) -> Optional[float]:
        params = _config_to_params(config)
        params.pop("solver_tol")
        row = self._db.execute(_REFERENCE_SQL, params).fetchone()
        return float(row["final_energy"]) if row else None

    def list_iterations(self, run_id: int) -> List[IterationRecord]:
        cursor = self._db.execute(
            "SELECT * FROM iterations WHERE run_id = ? ORDER BY iteration",
            (run_id,),
        )
        return [IterationRecord.from_row(row) for row in cursor.fetchall()]

    def find_run(self, run_id: int) -> Optional[Dict[str, Any]]:
        row = self._db.execute("SELECT * FROM runs WHERE id = ?", (run_id,)).fetchone()
        return dict(row) if row else None
