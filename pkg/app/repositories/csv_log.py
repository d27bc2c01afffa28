"""
Append-only CSV log of iteration records.

The header is written once; every record is flushed as soon as it is
written so an aborted run keeps the iterations it completed.
"""

from __future__ import annotations

import csv
import logging
from pathlib import Path
from typing import IO, Dict, List, Optional, Union

from app.exceptions import RunRepositoryError
from app.models.run import CSV_COLUMNS, IterationRecord

logger = logging.getLogger(__name__)


class CsvRecordWriter:
    """Record sink writing ``CSV_COLUMNS`` rows; usable as a context manager."""

    def __init__(self, path: Union[str, Path]) -> None:
        self.path = Path(path)
        self._handle: Optional[IO[str]] = None
        self._writer: Optional[csv.DictWriter] = None

    def open(self) -> "CsvRecordWriter":
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._handle = self.path.open("w", encoding="utf-8", newline="")
        except OSError as exc:
            raise RunRepositoryError(f"[CsvRecordWriter] Cannot write {self.path}: {exc}") from exc
        self._writer = csv.DictWriter(self._handle, fieldnames=CSV_COLUMNS, lineterminator="\n")
        self._writer.writeheader()
        self._handle.flush()
        return self

    def __call__(self, record: IterationRecord) -> None:
        if self._writer is None or self._handle is None:
            self.open()
        self._writer.writerow(record.csv_row())  # type: ignore[union-attr]
        self._handle.flush()  # type: ignore[union-attr]

    def close(self) -> None:
        if self._handle is not None:
            self._handle.close()
            self._handle = None
            self._writer = None
            logger.debug("[CsvRecordWriter] Closed %s", self.path)

    def __enter__(self) -> "CsvRecordWriter":
        return self.open()

    def __exit__(self, exc_type, exc_val, exc_tb) -> None:
        self.close()


def read_csv_records(path: Union[str, Path]) -> List[Dict[str, str]]:
    """Rows of a record CSV as dictionaries keyed by column name."""
    path = Path(path)
    try:
        with path.open("r", encoding="utf-8", newline="") as handle:
            reader = csv.DictReader(handle)
            if reader.fieldnames != CSV_COLUMNS:
                raise RunRepositoryError(
                    f"[CsvRecordWriter] {path} does not carry the record header: {reader.fieldnames}"
                )
            return list(reader)
    except OSError as exc:
        raise RunRepositoryError(f"[CsvRecordWriter] Cannot read {path}: {exc}") from exc
