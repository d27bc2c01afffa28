"""
Database Schema Manager for the run store.

Tables for finished runs and their per-iteration records, applied as
numbered migrations tracked in ``schema_version``.
"""

from __future__ import annotations

import logging
import sqlite3

from app.database.connection import DatabaseConnection
from app.exceptions import RunRepositoryError

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# DDL – Runs
# ---------------------------------------------------------------------------

SQL_CREATE_RUNS = """
CREATE TABLE IF NOT EXISTS runs (
    id                  INTEGER  PRIMARY KEY AUTOINCREMENT,

    -- Identity
    problem             TEXT     NOT NULL,
    algorithm           TEXT     NOT NULL,          -- ml-a / ml-b / ml-c / sl-a / sl-b
    grid                INTEGER,

    -- Parameters
    tol                 REAL     NOT NULL CHECK(tol > 0),
    solver_tol          REAL     NOT NULL,
    m_bar               INTEGER  NOT NULL CHECK(m_bar >= 1),
    theta_x             REAL     NOT NULL,
    theta_p             REAL     NOT NULL,
    theta               REAL     NOT NULL,
    vartheta            REAL     NOT NULL,

    -- Outcome
    status              TEXT     NOT NULL DEFAULT 'running',   -- running / converged / stalled / failed
    n_iterations        INTEGER  NOT NULL DEFAULT 0,
    final_energy        REAL,
    final_est           REAL,
    final_dofs          INTEGER,
    manifest            TEXT     NOT NULL,                     -- JSON

    -- Metadata
    started_at          TEXT     NOT NULL DEFAULT (datetime('now','localtime')),
    finished_at         TEXT
);
"""

SQL_CREATE_RUNS_IDX_LOOKUP = """
CREATE INDEX IF NOT EXISTS idx_runs_lookup
    ON runs (problem, algorithm, tol, status);
"""

# ---------------------------------------------------------------------------
# DDL – Iterations
# ---------------------------------------------------------------------------

SQL_CREATE_ITERATIONS = """
CREATE TABLE IF NOT EXISTS iterations (
    id                  INTEGER  PRIMARY KEY AUTOINCREMENT,
    run_id              INTEGER  NOT NULL REFERENCES runs(id) ON DELETE CASCADE,
    iteration           INTEGER  NOT NULL,

    -- Space
    dofs                INTEGER  NOT NULL,
    card_p              INTEGER  NOT NULL,
    deg_p               INTEGER  NOT NULL,
    supp_p              INTEGER  NOT NULL,

    -- Estimates
    est                 REAL     NOT NULL,
    est_x               REAL     NOT NULL,
    est_p               REAL     NOT NULL,
    energy              REAL     NOT NULL,

    -- Solver / marking
    solver_iterations   INTEGER  NOT NULL,
    branch              TEXT     NOT NULL,
    n_spatial_marks     INTEGER  NOT NULL DEFAULT 0,
    n_parametric_marks  INTEGER  NOT NULL DEFAULT 0,
    activated           TEXT     NOT NULL DEFAULT '',
    wall_time           REAL     NOT NULL DEFAULT 0,

    -- Diagnostics
    true_error          REAL,
    effectivity         REAL,
    theorem_ratio       REAL,
    reduction_ratio     REAL,

    UNIQUE (run_id, iteration)
);
"""

# ---------------------------------------------------------------------------
# DDL – Schema version tracking
# ---------------------------------------------------------------------------

SQL_CREATE_SCHEMA_VERSION = """
CREATE TABLE IF NOT EXISTS schema_version (
    version     INTEGER PRIMARY KEY,
    applied_at  TEXT    NOT NULL DEFAULT (datetime('now','localtime')),
    description TEXT
);
"""

# ---------------------------------------------------------------------------
# Migrations, oldest first; released entries are append-only
# ---------------------------------------------------------------------------

MIGRATIONS: list[tuple[int, str, list[str]]] = [
    (
        1,
        "Initial schema – runs and iterations tables",
        [
            SQL_CREATE_SCHEMA_VERSION,
            SQL_CREATE_RUNS,
            SQL_CREATE_RUNS_IDX_LOOKUP,
            SQL_CREATE_ITERATIONS,
        ],
    ),
]


class SchemaManager:
    """Brings a run store up to the newest schema version."""

    def __init__(self, db: DatabaseConnection) -> None:
        self._db = db

    def migrate(self) -> int:
        """Apply pending migrations oldest first and return the resulting version."""
        version = self.current_version()
        pending = [m for m in MIGRATIONS if m[0] > version]
        if not pending:
            logger.debug("[SchemaManager] %s is at v%d", self._db.path, version)
        for target, description, statements in pending:
            try:
                with self._db as conn:
                    for sql in statements:
                        conn.execute(sql)
                    conn.execute(
                        "INSERT INTO schema_version (version, description) VALUES (?, ?)",
                        (target, description),
                    )
            except sqlite3.Error as exc:
                raise RunRepositoryError(
                    f"Run store {self._db.path} could not be migrated to v{target}: {exc}"
                ) from exc
            logger.info("[SchemaManager] %s migrated to v%d (%s)", self._db.path, target, description)
            version = target
        return version

    def current_version(self) -> int:
        try:
            with self._db as conn:
                conn.execute(SQL_CREATE_SCHEMA_VERSION)
                row = conn.execute("SELECT COALESCE(MAX(version), 0) FROM schema_version").fetchone()
        except sqlite3.Error as exc:
            raise RunRepositoryError(f"Run store {self._db.path} is not readable: {exc}") from exc
        return int(row[0])
