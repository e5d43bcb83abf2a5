"""Position-map interchange file for external inference runtimes.

Format (JSON, UTF-8)::

    {"version": 1,
     "tokens": [int, ...],
     "position_ids": [int, ...],           # strictly increasing
     "placeholder_gaps": [{"after_index": int, "count": int}, ...]}

``after_index`` -1 is the gap before the first token. Only non-empty gaps are
listed; they are redundant with ``position_ids`` and checked on import.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Sequence

from poseng.errors import ConfigurationError
from poseng.positions import PositionMap, ensure_valid, to_placeholder_counts

FORMAT_VERSION = 1


def position_map_document(tokens: Sequence[int], position_map: PositionMap) -> dict:
    if len(tokens) != len(position_map):
        raise ConfigurationError(f"{len(tokens)} tokens but position map of length {len(position_map)}")
    counts = to_placeholder_counts(position_map)
    gaps = [{"after_index": i - 1, "count": c} for i, c in enumerate(counts[:-1]) if c]
    return {
        "version": FORMAT_VERSION,
        "tokens": [int(t) for t in tokens],
        "position_ids": list(position_map.edited_index),
        "placeholder_gaps": gaps,
    }


def export_position_map(prompt, position_map: PositionMap, path) -> Path:
    """Write the file for a prompt (anything with ``token_ids``) or a raw token list."""
    tokens = prompt.token_ids if hasattr(prompt, "token_ids") else prompt
    doc = position_map_document(tokens, position_map)
    path = Path(path)
    try:
        path.write_text(json.dumps(doc) + "\n", encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write position map to {path}: {exc}") from exc
    return path


def parse_position_map_document(doc: dict) -> tuple[list[int], PositionMap]:
    if doc.get("version") != FORMAT_VERSION:
        raise ConfigurationError(f"unsupported position-map version {doc.get('version')!r}")
    extra = set(doc) - {"version", "tokens", "position_ids", "placeholder_gaps"}
    if extra:
        raise ConfigurationError(f"unknown keys {sorted(extra)}")
    tokens = [int(t) for t in doc["tokens"]]
    position_map = ensure_valid(PositionMap(doc["position_ids"]))
    if len(tokens) != len(position_map):
        raise ConfigurationError("tokens and position_ids differ in length")
    expected = position_map_document(tokens, position_map)["placeholder_gaps"]
    given = sorted(doc.get("placeholder_gaps", []), key=lambda g: g["after_index"])
    if given != expected:
        raise ConfigurationError("placeholder_gaps disagree with position_ids")
    return tokens, position_map


def import_position_map(path) -> tuple[list[int], PositionMap]:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise OSError(f"cannot read position map {path}: {exc}") from exc
    return parse_position_map_document(doc)
