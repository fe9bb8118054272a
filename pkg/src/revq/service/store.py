"""Append-only NDJSON event log with startup replay.

One writer, ordered appends, flushed per event; every piece of service state
is reconstructed by replaying the log, so the file is the whole database.
"""

from __future__ import annotations

import json
import threading
from pathlib import Path
from typing import Iterator


class EventStore:
    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self.path.parent.mkdir(parents=True, exist_ok=True)

    def append(self, event: dict):
        line = json.dumps(event, separators=(",", ":"))
        with self._lock:
            with open(self.path, "a", encoding="utf-8") as f:
                f.write(line + "\n")
                f.flush()

    def replay(self) -> Iterator[dict]:
        if not self.path.exists():
            return
        with open(self.path, encoding="utf-8") as f:
            for n, line in enumerate(f, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    yield json.loads(line)
                except json.JSONDecodeError as e:
                    raise ValueError(f"{self.path} line {n}: corrupt event: {e}") from e
