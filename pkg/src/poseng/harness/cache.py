"""Append-only journal of (namespace, gap vector, sample id) -> score."""

from __future__ import annotations

import json
import threading
from pathlib import Path
from typing import Optional

from poseng.positions import GapVector


class ScoreCache:
    """Scores persisted as JSON Lines; replaying the file rebuilds memory state.

    ``namespace`` should fingerprint everything a score depends on (model,
    dataset, template), so one journal can safely hold several runs. Writes
    go through a single lock.
    """

    def __init__(self, path=None, namespace: str = ""):
        self.path = Path(path) if path is not None else None
        self.namespace = namespace
        self._scores: dict[tuple, float] = {}
        self._lock = threading.Lock()
        self.hits = 0
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            if self.path.exists():
                self._replay()

    def _key(self, namespace, theta, sample_id) -> tuple:
        items = tuple(theta.items()) if isinstance(theta, GapVector) else tuple(theta)
        return namespace, items, sample_id

    def _replay(self):
        with self.path.open(encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError:
                    # a torn final line from an interrupted run is skipped
                    continue
                key = self._key(rec["ns"], tuple((k, v) for k, v in rec["theta"]), rec["sample"])
                self._scores[key] = float(rec["score"])

    def __len__(self) -> int:
        return len(self._scores)

    def get(self, theta: GapVector, sample_id: str) -> Optional[float]:
        with self._lock:
            value = self._scores.get(self._key(self.namespace, theta, sample_id))
            if value is not None:
                self.hits += 1
            return value

    def put(self, theta: GapVector, sample_id: str, score: float) -> None:
        key = self._key(self.namespace, theta, sample_id)
        with self._lock:
            if key in self._scores:
                return
            self._scores[key] = float(score)
            if self.path is not None:
                rec = {"ns": self.namespace, "theta": [list(kv) for kv in theta.items()], "sample": sample_id, "score": score}
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps(rec) + "\n")

    def scoped(self, namespace: str) -> ScoreCache:
        """View sharing storage and journal under another namespace."""
        view = ScoreCache.__new__(ScoreCache)
        view.path, view.namespace = self.path, namespace
        view._scores, view._lock, view.hits = self._scores, self._lock, 0
        return view
