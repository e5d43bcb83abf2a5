from __future__ import annotations

from typing import Sequence

from poseng.harness.model import ToyModel
from poseng.harness.scoring import exact_match_score
from poseng.positions import PositionMap
from poseng.prompts import SegmentedPrompt
from poseng.tokenizer import ByteTokenizer, Tokenizer


class ModelEvaluator:
    """Greedy-decode the toy model and score the text by exact match.

    Raises ``ContextOverflowError`` when the edited prompt plus the generated
    tokens would not fit in the context window; grid search records that as
    an invalid candidate.
    """

    thread_safe = True

    def __init__(self, model: ToyModel, tokenizer: Tokenizer | None = None, max_new_tokens: int = 1):
        self.model = model
        self.tokenizer = tokenizer or ByteTokenizer()
        self.max_new_tokens = max_new_tokens

    def output(self, prompt: SegmentedPrompt, position_map: PositionMap) -> str:
        ids = self.model.generate(prompt.token_ids, position_map, self.max_new_tokens)
        return self.tokenizer.decode(ids)

    def score(self, prompt: SegmentedPrompt, position_map: PositionMap, answers: Sequence[str]) -> float:
        return float(exact_match_score(self.output(prompt, position_map), answers))
