"""Prompts as ordered, role-labelled segments with named gap boundaries.

Each segment's text carries its own trailing separator (blank line or
newline), so a gap boundary sits right after the last token of the earlier
segment. The rendered text is the plain concatenation of segment texts and
never depends on the gap widths.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

from poseng.errors import ConfigurationError
from poseng.positions import GapVector, PositionMap, from_gaps
from poseng.tokenizer import Tokenizer

ROLES = ("instruction", "document", "question", "example", "query")

RAG_INSTRUCTION = (
    "Answer the question based on the given documents (some of which might be irrelevant). "
    "Only give me the answer and do not output any other words. "
)

GAP_A, GAP_MID, GAP_B = "A", "mid", "B"


@dataclass(frozen=True)
class Segment:
    role: str
    text: str
    token_ids: tuple[int, ...]

    def __post_init__(self):
        if self.role not in ROLES:
            raise ConfigurationError(f"unknown segment role {self.role!r}")
        object.__setattr__(self, "token_ids", tuple(self.token_ids))

    def __len__(self) -> int:
        return len(self.token_ids)


@dataclass(frozen=True)
class SegmentedPrompt:
    """Segments plus one boundary label per adjacent pair.

    Boundary labels name the gap width to insert there; a label may repeat
    (every inter-example boundary of an ICL prompt is ``mid``).
    """

    segments: tuple[Segment, ...]
    boundaries: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        object.__setattr__(self, "boundaries", tuple(self.boundaries))
        if not self.segments:
            raise ConfigurationError("a prompt needs at least one segment")
        if len(self.boundaries) != len(self.segments) - 1:
            raise ConfigurationError(
                f"{len(self.segments)} segments need {len(self.segments) - 1} boundaries, got {len(self.boundaries)}"
            )

    @property
    def lengths(self) -> tuple[int, ...]:
        return tuple(len(s) for s in self.segments)

    def __len__(self) -> int:
        return sum(self.lengths)

    @property
    def text(self) -> str:
        return "".join(s.text for s in self.segments)

    @property
    def token_ids(self) -> tuple[int, ...]:
        return tuple(t for s in self.segments for t in s.token_ids)

    @property
    def roles(self) -> tuple[str, ...]:
        return tuple(s.role for s in self.segments)

    @property
    def gap_labels(self) -> tuple[str, ...]:
        """Distinct boundary labels in first-appearance order."""
        return tuple(dict.fromkeys(self.boundaries))

    def segment_starts(self) -> tuple[int, ...]:
        starts, total = [], 0
        for n in self.lengths:
            starts.append(total)
            total += n
        return tuple(starts)


def _segment(role: str, text: str, tokenizer: Tokenizer) -> Segment:
    return Segment(role, text, tokenizer.encode(text))


def render_rag(
    instruction: Optional[str],
    documents: Sequence[tuple[str, str]],
    question: str,
    tokenizer: Tokenizer,
) -> SegmentedPrompt:
    """Instruction / documents / question, with boundaries ``A`` and ``B``.

    The question segment repeats the instruction before the question.
    """
    if not documents:
        raise ConfigurationError("a RAG prompt needs at least one document")
    instruction = RAG_INSTRUCTION if instruction is None else instruction
    doc_text = "".join(f"Document (Title: {title}) {passage}\n\n" for title, passage in documents)
    return SegmentedPrompt(
        (
            _segment("instruction", f"{instruction}\n\n", tokenizer),
            _segment("document", doc_text, tokenizer),
            _segment("question", f"{instruction}\nQuestion: {question}\nAnswer:", tokenizer),
        ),
        (GAP_A, GAP_B),
    )


def icl_instruction(item: str = "Review", label: str = "Sentiment") -> str:
    return f"Please determine the {label} of a {item} according to the examples below. "


def render_icl(
    instruction: Optional[str],
    examples: Sequence[tuple[str, str]],
    final_query: str,
    tokenizer: Tokenizer,
    item: str = "Review",
    label: str = "Sentiment",
) -> SegmentedPrompt:
    """Instruction, one segment per example, then the query.

    Boundaries are ``A`` before the first example, ``mid`` between examples
    and ``B`` before the query. ``item``/``label`` switch the field names
    (e.g. ``Question``/``Question Type`` for question classification).
    """
    if not examples:
        raise ConfigurationError("an ICL prompt needs at least one example")
    instruction = icl_instruction(item, label) if instruction is None else instruction
    segments = [_segment("instruction", f"{instruction}\n\n", tokenizer)]
    for query, answer in examples:
        segments.append(_segment("example", f"{item}: {query}\n{label}: {answer}\n\n", tokenizer))
    segments.append(
        _segment(
            "query",
            f"Now, you are given the following {item}.\n{item}: {final_query}\n"
            f"Please output its {label} according to the examples. "
            f"Only output its {label} without outputing anything else.\n{label}:",
            tokenizer,
        )
    )
    boundaries = [GAP_A] + [GAP_MID] * (len(examples) - 1) + [GAP_B]
    return SegmentedPrompt(tuple(segments), tuple(boundaries))


@dataclass(frozen=True)
class TemplateConfig:
    """Slot values for one prompt of either template kind.

    RAG slots: ``documents`` as (title, passage) pairs and ``question``.
    ICL slots: ``examples`` as (query, label) pairs and ``query``.
    """

    kind: str
    instruction: Optional[str] = None
    documents: tuple[tuple[str, str], ...] = ()
    question: str = ""
    examples: tuple[tuple[str, str], ...] = ()
    query: str = ""
    item: str = "Review"
    label: str = "Sentiment"

    def __post_init__(self):
        kind = self.kind.upper()
        if kind not in ("RAG", "ICL"):
            raise ConfigurationError(f"unknown template kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "documents", tuple(tuple(d) for d in self.documents))
        object.__setattr__(self, "examples", tuple(tuple(e) for e in self.examples))
        if kind == "RAG" and not self.documents:
            raise ConfigurationError("RAG template needs at least one document")
        if kind == "ICL" and not self.examples:
            raise ConfigurationError("ICL template needs at least one example")

    @classmethod
    def from_slots(cls, kind: str, slots: Mapping, **defaults) -> TemplateConfig:
        """Build from a dataset-file slot object (lists of dicts or pairs)."""
        slots = {**defaults, **slots}
        documents = [(d["title"], d["passage"]) if isinstance(d, Mapping) else tuple(d) for d in slots.pop("documents", [])]
        examples = [(e["query"], e["label"]) if isinstance(e, Mapping) else tuple(e) for e in slots.pop("examples", [])]
        known = {"instruction", "question", "query", "item", "label"}
        unknown = set(slots) - known
        if unknown:
            raise ConfigurationError(f"unknown slot keys {sorted(unknown)}")
        return cls(kind, documents=tuple(documents), examples=tuple(examples), **slots)

    def render(self, tokenizer: Tokenizer) -> SegmentedPrompt:
        if self.kind == "RAG":
            return render_rag(self.instruction, self.documents, self.question, tokenizer)
        return render_icl(self.instruction, self.examples, self.query, tokenizer, self.item, self.label)


def boundary_widths(prompt: SegmentedPrompt, theta: Mapping[str, int]) -> list[int]:
    missing = [label for label in prompt.gap_labels if label not in theta]
    if missing:
        raise ConfigurationError(f"gap vector lacks widths for boundaries {missing}")
    return [int(theta[label]) for label in prompt.boundaries]


def gaps_to_position_map(prompt: SegmentedPrompt, theta: Mapping[str, int]) -> PositionMap:
    """Position map with ``theta[label]`` placeholders at every boundary of that label.

    Labels in ``theta`` that the prompt does not use are ignored, so one
    three-label vector serves a single-example ICL prompt too.
    """
    if not isinstance(theta, GapVector):
        theta = GapVector(theta)
    return from_gaps(prompt.lengths, boundary_widths(prompt, theta))
