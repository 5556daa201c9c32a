"""
Run Records

One JSON Lines record per (trial, slot), an append-only store that
serializes writes, and the order-independent merge of record sets.
"""

from __future__ import annotations

import json
import math
import threading
from collections.abc import Iterable
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from src.constants import JSON_FLOAT_FORMAT
from src.exceptions import ConfigHashMismatchError, DataIntegrityError, StorageError
from src.logging_config import get_logger

logger = get_logger(__name__)

RecordKey = tuple[int, str]

STATUS_OK = "ok"
STATUS_FAILED = "failed"


def to_builtin(value: Any) -> Any:
    """Recursively convert numpy scalars and arrays into JSON-ready builtins."""
    if isinstance(value, dict):
        return {str(k): to_builtin(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_builtin(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_builtin(v) for v in value.tolist()]
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    return value


def float_text(value: float) -> str:
    """17 significant digits; integral values keep a trailing .0 so they load back as floats."""
    if math.isnan(value):
        return "NaN"
    if math.isinf(value):
        return "Infinity" if value > 0 else "-Infinity"
    text = format(value, JSON_FLOAT_FORMAT)
    return text if any(c in text for c in ".e") else text + ".0"


def _encode(value: Any, indent: int | None, level: int) -> str:
    if isinstance(value, float):
        return float_text(value)
    if isinstance(value, dict):
        colon = ":" if indent is None else ": "
        parts = [f"{json.dumps(k)}{colon}{_encode(v, indent, level + 1)}" for k, v in sorted(value.items())]
        return _wrap("{", "}", parts, indent, level)
    if isinstance(value, list):
        return _wrap("[", "]", [_encode(v, indent, level + 1) for v in value], indent, level)
    return json.dumps(value)


def _wrap(open_: str, close: str, parts: list[str], indent: int | None, level: int) -> str:
    if not parts:
        return open_ + close
    if indent is None:
        return open_ + ",".join(parts) + close
    inner = "\n" + " " * (indent * (level + 1))
    return open_ + inner + ("," + inner).join(parts) + "\n" + " " * (indent * level) + close


def dumps(payload: Any, indent: int | None = None) -> str:
    """
    Canonical JSON: sorted keys, floats with 17 significant digits.

    Seventeen digits reproduce any float64 bit-exactly, which is what the
    byte-identical summary and record comparisons rely on. Layout matches
    `json.dumps(..., sort_keys=True)` with compact or `indent` separators.
    """
    return _encode(to_builtin(payload), indent, 0)


@dataclass
class RunRecord:
    """
    Statistics of one Monte Carlo trial for one slot.

    `ensemble` holds the slot label: the ensemble name, suffixed `#k` for a
    repeated figure1 ensemble.
    """

    trial_index: int
    ensemble: str
    config_hash: str
    seed: int
    status: str = STATUS_OK
    stats: dict[str, Any] = field(default_factory=dict)
    lambdas: list[float] | None = None
    error: str | None = None
    wall_time: float = 0.0

    @property
    def key(self) -> RecordKey:
        return (self.trial_index, self.ensemble)

    @property
    def ok(self) -> bool:
        return self.status == STATUS_OK

    def to_dict(self) -> dict[str, Any]:
        return to_builtin(asdict(self))

    def body(self) -> dict[str, Any]:
        """Everything except wall_time; identical across reruns."""
        data = self.to_dict()
        data.pop("wall_time")
        return data

    def to_json(self) -> str:
        return dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> RunRecord:
        try:
            return cls(
                trial_index=int(data["trial_index"]),
                ensemble=str(data["ensemble"]),
                config_hash=str(data["config_hash"]),
                seed=int(data["seed"]),
                status=data.get("status", STATUS_OK),
                stats=data.get("stats", {}),
                lambdas=data.get("lambdas"),
                error=data.get("error"),
                wall_time=float(data.get("wall_time", 0.0)),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise DataIntegrityError("Malformed run record", details={"error": str(e)}) from e


def sort_records(records: Iterable[RunRecord]) -> list[RunRecord]:
    return sorted(records, key=lambda r: r.key)


class RecordStore:
    """
    Append-only JSON Lines file of RunRecords.

    Appends are serialized by a lock and each record is written as a single
    line, so a killed run leaves at most one truncated trailing line, which
    `repair` removes before resuming.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()

    def exists(self) -> bool:
        return self.path.exists()

    def append(self, record: RunRecord) -> None:
        line = record.to_json() + "\n"
        with self._lock:
            try:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write(line)
                    fh.flush()
            except OSError as e:
                raise StorageError(f"Cannot append to {self.path}", details={"error": str(e)}) from e

    def repair(self) -> int:
        """Drop a partial trailing line left by an interrupted write. Returns bytes removed."""
        if not self.path.exists():
            return 0
        with self._lock:
            data = self.path.read_bytes()
            if not data or data.endswith(b"\n"):
                return 0
            keep = data.rfind(b"\n") + 1
            self.path.write_bytes(data[:keep])
        removed = len(data) - keep
        logger.warning("Removed truncated trailing record", extra_fields={"path": str(self.path), "bytes": removed})
        return removed

    def read(self) -> list[RunRecord]:
        """
        All records in file order.

        Raises:
            DataIntegrityError: an unparseable line that is not the last one
        """
        if not self.path.exists():
            return []
        lines = self.path.read_text(encoding="utf-8").splitlines()
        records = []
        for number, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            try:
                records.append(RunRecord.from_dict(json.loads(line)))
            except (json.JSONDecodeError, DataIntegrityError) as e:
                if number == len(lines):
                    logger.warning("Skipping corrupt trailing record", extra_fields={"line": number})
                    continue
                raise DataIntegrityError(
                    f"Corrupt record in {self.path}", details={"line": number, "error": str(e)}
                ) from e
        return records

    def completed_keys(self, config_hash: str) -> set[RecordKey]:
        """Keys already present; refuses records from another config."""
        keys = set()
        for record in self.read():
            if record.config_hash != config_hash:
                raise ConfigHashMismatchError(expected=config_hash, found=record.config_hash)
            keys.add(record.key)
        return keys

    def write_all(self, records: Iterable[RunRecord]) -> None:
        """Replace the file with the given records, sorted by key."""
        text = "".join(r.to_json() + "\n" for r in sort_records(records))
        with self._lock:
            try:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                self.path.write_text(text, encoding="utf-8")
            except OSError as e:
                raise StorageError(f"Cannot write {self.path}", details={"error": str(e)}) from e


def merge_records(record_sets: Iterable[Iterable[RunRecord]], config_hash: str) -> list[RunRecord]:
    """
    Deduplicated union keyed by (trial_index, ensemble), sorted by key.

    Raises:
        ConfigHashMismatchError: a record from a different config
        DataIntegrityError: two records with the same key but different bodies
    """
    merged: dict[RecordKey, RunRecord] = {}
    for records in record_sets:
        for record in records:
            if record.config_hash != config_hash:
                raise ConfigHashMismatchError(expected=config_hash, found=record.config_hash)
            existing = merged.get(record.key)
            if existing is None:
                merged[record.key] = record
            elif existing.body() != record.body():
                raise DataIntegrityError(
                    "Conflicting records for the same trial",
                    details={"trial_index": record.trial_index, "ensemble": record.ensemble},
                )
    return sort_records(merged.values())
