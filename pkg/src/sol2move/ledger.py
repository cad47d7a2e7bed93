"""Append-only JSONL run ledger."""

from __future__ import annotations

import json
import os
import re
import threading
from pathlib import Path
from typing import Iterator

from .pipeline import TranslationRecord

LEDGER_SCHEMA = 1


class Ledger:
    """One JSON object per line; records are only ever appended.

    Each append is a single write followed by fsync, so a run killed
    mid-batch leaves every completed line intact.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()

    def _append(self, obj: dict) -> None:
        line = json.dumps(obj, sort_keys=True, ensure_ascii=False) + "\n"
        with self._lock:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(line)
                fh.flush()
                os.fsync(fh.fileno())

    def append_run(self, settings: dict) -> None:
        self._append({"schema": LEDGER_SCHEMA, "type": "run", "settings": settings})

    def append(self, record: TranslationRecord) -> None:
        self._append({"schema": LEDGER_SCHEMA, "type": "record", "record": record.to_dict()})

    def entries(self) -> Iterator[dict]:
        if not self.path.exists():
            return
        with open(self.path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError:
                    # a torn final line from a killed writer
                    continue
                if obj.get("schema") != LEDGER_SCHEMA:
                    raise ValueError(f"{self.path}:{lineno}: unsupported ledger schema {obj.get('schema')!r}")
                yield obj

    def records(self) -> list[TranslationRecord]:
        """Latest record per contract id, in first-seen order."""
        latest: dict[str, TranslationRecord] = {}
        for obj in self.entries():
            if obj.get("type") == "record":
                rec = TranslationRecord.from_dict(obj["record"])
                latest[rec.contract_id] = rec
        return list(latest.values())

    def completed_ids(self) -> set[str]:
        return {r.contract_id for r in self.records() if r.status.terminal}


_TIMESTAMP_RE = re.compile(r'"t": "[^"]*"')
_DURATION_RE = re.compile(r'"duration_ms": [0-9.eE+-]+')


def normalize_ledger_text(text: str) -> str:
    """Blank out wall-clock timestamps and durations for run-to-run comparison."""
    return _DURATION_RE.sub('"duration_ms": 0', _TIMESTAMP_RE.sub('"t": "<t>"', text))
