"""
Database Connection Manager for the run store.

``with db as conn:`` runs one transaction, committed on success and
rolled back on error.  Record sinks may be called from worker threads,
so access to the connection is serialised with a lock.
"""

from __future__ import annotations

import sqlite3
import threading
from pathlib import Path
from typing import Optional, Union

IN_MEMORY = ":memory:"


class DatabaseConnection:
    """Owns a single SQLite connection; ``:memory:`` keeps the store in RAM."""

    def __init__(self, db_path: Union[str, Path]) -> None:
        self._in_memory = str(db_path) == IN_MEMORY
        self._db_path = Path(db_path)
        self._connection: Optional[sqlite3.Connection] = None
        self._lock = threading.RLock()
        if not self._in_memory:
            self._db_path.parent.mkdir(parents=True, exist_ok=True)

    @property
    def path(self) -> str:
        return IN_MEMORY if self._in_memory else str(self._db_path)

    # ------------------------------------------------------------------
    # Connection Management
    # ------------------------------------------------------------------

    def get_connection(self) -> sqlite3.Connection:
        """Open lazily with foreign keys on and ``sqlite3.Row`` rows."""
        with self._lock:
            if self._connection is None:
                self._connection = sqlite3.connect(self.path, check_same_thread=False)
                self._connection.execute("PRAGMA foreign_keys = ON")
                self._connection.row_factory = sqlite3.Row
        return self._connection

    def close(self) -> None:
        """Commit and drop the connection; the next call reopens it."""
        with self._lock:
            if self._connection:
                self._connection.commit()
                self._connection.close()
                self._connection = None

    # ------------------------------------------------------------------
    # Transactions
    # ------------------------------------------------------------------

    def __enter__(self) -> sqlite3.Connection:
        self._lock.acquire()
        try:
            return self.get_connection()
        except BaseException:
            self._lock.release()
            raise

    def __exit__(self, exc_type, exc_val, exc_tb) -> None:  # type: ignore[override]
        try:
            if self._connection is not None:
                if exc_type:
                    self._connection.rollback()
                else:
                    self._connection.commit()
        finally:
            self._lock.release()

    # ------------------------------------------------------------------
    # Convenience helpers
    # ------------------------------------------------------------------

    def execute(self, sql: str, params: tuple = ()) -> sqlite3.Cursor:
        with self._lock:
            return self.get_connection().execute(sql, params)
