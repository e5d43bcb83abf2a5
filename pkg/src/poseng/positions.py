"""Position-editing maps and their placeholder-count dual.

A position map assigns every real token an edited position index. Maps must be
strictly increasing so that no two tokens share an index and causal order is
kept. Any such map is equivalent to inserting placeholder tokens: the gap
between two consecutive edited indices, minus one, is the number of
placeholders sitting between those tokens.
"""

from __future__ import annotations

from collections.abc import Iterable, Iterator, Mapping, Sequence
from dataclasses import dataclass
from itertools import accumulate
from typing import Union

from poseng.errors import ConfigurationError, DomainError, ValidationError


@dataclass(frozen=True)
class Violation:
    """First offending index pair found while validating a map."""

    first: int
    second: int
    reason: str

    def __str__(self) -> str:
        return f"violation at ({self.first}, {self.second}): {self.reason}"


@dataclass(frozen=True)
class PositionMap:
    """Edited position index for each of the N real tokens.

    Construction does not validate; call :func:`validate` (or any operation
    that needs a valid map) to check monotonicity.
    """

    edited_index: tuple[int, ...]

    def __init__(self, edited_index: Iterable[int]):
        object.__setattr__(self, "edited_index", tuple(int(i) for i in edited_index))

    @property
    def original_length(self) -> int:
        return len(self.edited_index)

    def __len__(self) -> int:
        return len(self.edited_index)

    def __iter__(self) -> Iterator[int]:
        return iter(self.edited_index)

    def __getitem__(self, i: int) -> int:
        return self.edited_index[i]

    def shifted(self, offset: int) -> PositionMap:
        return PositionMap(i + offset for i in self.edited_index)


class GapVector(Mapping):
    """Ordered, hashable mapping from boundary label to placeholder count.

    Ordering and hashing follow the declared label order, so two gap vectors
    compare lexicographically by their widths.
    """

    __slots__ = ("_items",)

    def __init__(self, items: Union[Mapping[str, int], Iterable[tuple[str, int]], None] = None, **kwargs: int):
        pairs = list(items.items() if isinstance(items, Mapping) else (items or []))
        pairs.extend(kwargs.items())
        seen = set()
        clean = []
        for label, width in pairs:
            if label in seen:
                raise ConfigurationError(f"duplicate gap label {label!r}")
            if int(width) != width or width < 0:
                raise ConfigurationError(f"gap {label!r} must be a non-negative integer, got {width!r}")
            seen.add(label)
            clean.append((str(label), int(width)))
        self._items = tuple(clean)

    @classmethod
    def zeros(cls, labels: Iterable[str]) -> GapVector:
        return cls((label, 0) for label in labels)

    def __getitem__(self, label: str) -> int:
        for key, width in self._items:
            if key == label:
                return width
        raise KeyError(label)

    def __iter__(self) -> Iterator[str]:
        return (key for key, _ in self._items)

    def __len__(self) -> int:
        return len(self._items)

    def __hash__(self) -> int:
        return hash(self._items)

    def __eq__(self, other: object) -> bool:
        if isinstance(other, GapVector):
            return self._items == other._items
        return NotImplemented

    def __lt__(self, other: GapVector) -> bool:
        return self.sort_key() < other.sort_key()

    def sort_key(self) -> tuple[int, ...]:
        return tuple(width for _, width in self._items)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(key for key, _ in self._items)

    def replace(self, **widths: int) -> GapVector:
        unknown = set(widths) - set(self.labels)
        if unknown:
            raise ConfigurationError(f"unknown gap labels {sorted(unknown)}")
        return GapVector((k, widths.get(k, w)) for k, w in self._items)

    def to_dict(self) -> dict[str, int]:
        return dict(self._items)

    def __repr__(self) -> str:
        inner = ", ".join(f"{k}={w}" for k, w in self._items)
        return f"GapVector({inner})"


PlaceholderCounts = tuple[int, ...]
"""N+1 counts: entry 0 sits before token 0, entry i+1 after token i."""


def identity_map(n: int) -> PositionMap:
    if n < 0:
        raise DomainError(f"token count must be non-negative, got {n}")
    return PositionMap(range(n))


def from_gaps(segment_lengths: Sequence[int], gaps: Union[Mapping[str, int], Sequence[int]]) -> PositionMap:
    """Shift each segment by the total width of the gaps in front of it.

    ``gaps`` holds one width per internal boundary, in order; a mapping is
    read in its iteration order.
    """
    if len(segment_lengths) < 1:
        raise ConfigurationError("at least one segment is required")
    widths = list(gaps.values()) if isinstance(gaps, Mapping) else list(gaps)
    if len(widths) != len(segment_lengths) - 1:
        raise ConfigurationError(
            f"{len(segment_lengths)} segments need {len(segment_lengths) - 1} gap widths, got {len(widths)}"
        )
    if any(w < 0 for w in widths) or any(n < 0 for n in segment_lengths):
        raise ConfigurationError("segment lengths and gap widths must be non-negative")

    edited = []
    start = 0
    for k, length in enumerate(segment_lengths):
        if k > 0:
            start += widths[k - 1]
        edited.extend(range(start, start + length))
        start += length
    return PositionMap(edited)


def validate(position_map: PositionMap) -> Violation | None:
    """Return ``None`` for a valid map, otherwise the first offending pair."""
    idx = position_map.edited_index
    for i, value in enumerate(idx):
        if value < 0:
            return Violation(i, i, f"negative position {value}")
        if i > 0 and value <= idx[i - 1]:
            kind = "duplicate" if value == idx[i - 1] else "decreasing"
            return Violation(i - 1, i, f"{kind} positions {idx[i - 1]} -> {value}")
    return None


def ensure_valid(position_map: PositionMap) -> PositionMap:
    violation = validate(position_map)
    if violation is not None:
        raise ValidationError(str(violation), violation)
    return position_map


def to_placeholder_counts(position_map: PositionMap) -> PlaceholderCounts:
    ensure_valid(position_map)
    idx = position_map.edited_index
    if not idx:
        return (0,)
    inner = (b - a - 1 for a, b in zip(idx, idx[1:]))
    return (idx[0], *inner, 0)


def from_placeholder_counts(counts: Sequence[int]) -> PositionMap:
    """Inverse of :func:`to_placeholder_counts`; trailing placeholders are dropped."""
    if len(counts) < 1:
        raise DomainError("placeholder counts need at least one entry")
    if any(c < 0 for c in counts):
        raise DomainError("placeholder counts must be non-negative")
    n = len(counts) - 1
    if n == 0:
        return PositionMap(())
    steps = [counts[0]] + [c + 1 for c in counts[1:n]]
    return PositionMap(accumulate(steps))


def max_position(position_map: PositionMap) -> int:
    if not position_map.edited_index:
        raise DomainError("empty position map has no maximum position")
    return position_map.edited_index[-1]
