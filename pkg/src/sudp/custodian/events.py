"""Append-only audit log of custodian verdicts, optionally mirrored to JSON lines."""

from __future__ import annotations

import json
import threading
from pathlib import Path


class EventLog:
    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self._records: list[dict] = []
        self._lock = threading.Lock()

    def record(self, event: str, **fields) -> dict:
        for k, v in fields.items():
            if not isinstance(v, (str, int, float, bool, type(None))):
                raise TypeError(f"event field {k} must be a scalar, got {type(v).__name__}")
        with self._lock:
            rec = {"seq": len(self._records), "event": event, **fields}
            self._records.append(rec)
            if self.path is not None:
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps(rec, sort_keys=True) + "\n")
            return rec

    @property
    def records(self) -> list[dict]:
        with self._lock:
            return list(self._records)

    def of(self, event: str) -> list[dict]:
        return [r for r in self.records if r["event"] == event]
