import re
import string
from typing import Sequence

_PUNCT = string.punctuation


def normalize(text: str) -> str:
    """Lowercase, collapse whitespace, strip leading/trailing punctuation."""
    text = re.sub(r"\s+", " ", text.lower()).strip()
    return text.strip(_PUNCT + " ")


def exact_match_score(model_output: str, answers: Sequence[str]) -> int:
    """1 if any normalized answer occurs inside the normalized output."""
    if not answers:
        raise ValueError("exact match needs at least one answer")
    output = normalize(model_output)
    for answer in answers:
        a = normalize(answer)
        if a and a in output:
            return 1
    return 0
