"""Desk-scale causal transformer used as the model under search.

The network is a residual stack of attention layers (no MLPs, no norms)
whose weights are drawn from a seed. On top of the random weights, a
three-head circuit is written into fixed residual subspaces so that the
model can answer "which value goes with key K?" by copying:

* layer 0, ``prev`` head: each token reads the identity of the token just
  before it (self is suppressed by a negative content score);
* layer 0, ``gather`` head: every token reads the nearest key-letter token,
  so the final prompt token learns the key being asked about;
* last layer, ``copy`` head: the final token matches its gathered key
  against every position's previous-token key and copies the digit found
  there into the digit logits.

The circuit's recency preferences are linear-bias slopes, so it is tuned for
the ``linear_bias`` scheme. Under ``rotary`` or ``sinusoidal`` the same
weights run but the circuit degrades into a mostly random network.

Residual layout (``d_head`` = 32, four heads per layer):

    [0, 32)    token features: key one-hot, digit one-hot, constant
    [32, 64)   random per-token features
    [64, 96)   prev-token key (0..19) and copied digit (20..29)
    [96, 128)  gathered key (0..19)
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from poseng.attention import AttentionSpec, LinearBias, Rotary, SinusoidalAbsolute, attention_forward, TokenSequence
from poseng.errors import ConfigurationError, ContextOverflowError
from poseng.positions import PositionMap, ensure_valid, max_position
from poseng.tokenizer import ByteTokenizer

KEY_ALPHABET = "BCEFGHJKLMNPRSUVWXYZ"
VALUE_ALPHABET = "0123456789"

D_HEAD = 32
N_HEADS = 4
D_MODEL = D_HEAD * N_HEADS

_FEAT, _RAND, _PREV, _GATH = 0, 32, 64, 96
_CONST = 30

SCHEMES = ("linear_bias", "rotary", "sinusoidal")


@dataclass(frozen=True)
class ModelConfig:
    seed: int = 0
    n_layers: int = 2
    scheme: str = "linear_bias"
    context_window: int = 4096
    # circuit strengths
    prev_slope: float = 3.0
    gather_slope: float = 0.5
    copy_slope: float = 0.002
    self_suppress: float = 8.0
    gather_match: float = 12.0
    copy_match: float = 4.0
    digit_bonus: float = 1.0
    copy_gain: float = 2.2
    # random components
    noise_heads: float = 0.6
    noise_unembed: float = 1.0
    noise_slope: float = 0.05

    def __post_init__(self):
        if not 1 <= self.n_layers <= 4:
            raise ConfigurationError(f"n_layers must be in 1..4, got {self.n_layers}")
        if self.scheme not in SCHEMES:
            raise ConfigurationError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.context_window < 1:
            raise ConfigurationError("context window must be positive")

    def fingerprint(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


class ToyModel:
    def __init__(self, config: ModelConfig, embedding: np.ndarray, unembedding: np.ndarray, layers: Sequence[AttentionSpec]):
        self.config = config
        self.embedding = embedding
        self.unembedding = unembedding
        self.layers = tuple(layers)
        for arr in (self.embedding, self.unembedding):
            arr.setflags(write=False)

    @property
    def vocab_size(self) -> int:
        return self.embedding.shape[0]

    @property
    def context_window(self) -> int:
        return self.config.context_window

    @classmethod
    def build(cls, config: Optional[ModelConfig] = None, **overrides) -> ToyModel:
        config = config or ModelConfig(**overrides)
        rng = np.random.default_rng(config.seed)
        vocab = ByteTokenizer.vocab_size

        emb = np.zeros((vocab, D_MODEL))
        for i, ch in enumerate(KEY_ALPHABET):
            emb[ord(ch), _FEAT + i] = 1.0
        for i, ch in enumerate(VALUE_ALPHABET):
            emb[ord(ch), _FEAT + 20 + i] = 1.0
        emb[:, _FEAT + _CONST] = 1.0
        emb[:, _RAND:_RAND + D_HEAD] = rng.normal(0.0, 1.0 / np.sqrt(D_HEAD), size=(vocab, D_HEAD))

        unemb = rng.normal(0.0, config.noise_unembed / np.sqrt(D_MODEL), size=(vocab, D_MODEL))
        for i, ch in enumerate(VALUE_ALPHABET):
            unemb[ord(ch), _PREV + 20 + i] += config.copy_gain

        layers = []
        for layer in range(config.n_layers):
            mats = [rng.normal(0.0, config.noise_heads / np.sqrt(D_MODEL), size=(D_MODEL, D_MODEL)) for _ in range(3)]
            slopes = [config.noise_slope] * N_HEADS
            if config.n_layers >= 2 and layer == 0:
                cls._write_prev_and_gather(mats, config)
                slopes[2], slopes[3] = config.prev_slope, config.gather_slope
            if config.n_layers >= 2 and layer == config.n_layers - 1:
                cls._write_copy(mats, config)
                slopes[2] = config.copy_slope
            layers.append(AttentionSpec(*mats, n_heads=N_HEADS, scheme=_scheme(config.scheme, slopes)))
        return cls(config, emb, unemb, layers)

    @staticmethod
    def _write_prev_and_gather(mats, config: ModelConfig):
        wq, wk, wv = mats
        scale = np.sqrt(D_HEAD)
        prev, gath = 2 * D_HEAD, 3 * D_HEAD
        for m in (wq, wk, wv):
            m[prev:gath + D_HEAD] = 0.0
        # prev head: a token scores -C against itself, so it looks one step back
        wq[prev:prev + 30, _FEAT:_FEAT + 30] = -config.self_suppress * scale * np.eye(30)
        wk[prev:prev + 30, _FEAT:_FEAT + 30] = np.eye(30)
        wv[prev:prev + 20, _FEAT:_FEAT + 20] = np.eye(20)
        # gather head: constant query against a key-letter indicator
        wq[gath, _FEAT + _CONST] = config.gather_match * scale
        wk[gath, _FEAT:_FEAT + 20] = 1.0
        wv[gath:gath + 20, _FEAT:_FEAT + 20] = np.eye(20)

    @staticmethod
    def _write_copy(mats, config: ModelConfig):
        wq, wk, wv = mats
        scale = np.sqrt(D_HEAD)
        copy = 2 * D_HEAD
        for m in (wq, wk, wv):
            m[copy:copy + D_HEAD] = 0.0
        wq[copy:copy + 20, _GATH:_GATH + 20] = config.copy_match * scale * np.eye(20)
        wk[copy:copy + 20, _PREV:_PREV + 20] = np.eye(20)
        wq[copy + 20, _FEAT + _CONST] = config.digit_bonus * scale
        wk[copy + 20, _FEAT + 20:_FEAT + 30] = 1.0
        wv[copy + 20:copy + 30, _FEAT + 20:_FEAT + 30] = np.eye(10)

    def hidden_states(self, token_ids: Sequence[int], positions: Sequence[int]) -> np.ndarray:
        ids = np.asarray(token_ids, dtype=np.int64)
        x = self.embedding[ids]
        pos = np.asarray(positions, dtype=np.int64)
        for spec in self.layers:
            x = x + attention_forward(TokenSequence.plain(x, pos), spec)
        return x

    def next_token_logits(self, token_ids: Sequence[int], positions: Sequence[int]) -> np.ndarray:
        ids = np.asarray(token_ids, dtype=np.int64)
        x = self.embedding[ids]
        pos = np.asarray(positions, dtype=np.int64)
        for spec in self.layers[:-1]:
            x = x + attention_forward(TokenSequence.plain(x, pos), spec)
        last = len(ids) - 1
        top = x[last] + attention_forward(TokenSequence.plain(x, pos), self.layers[-1], rows=[last])[0]
        return top @ self.unembedding.T

    def generate(
        self,
        token_ids: Sequence[int],
        position_map: Optional[PositionMap] = None,
        max_new_tokens: int = 1,
        stop_id: Optional[int] = ByteTokenizer.EOS,
    ) -> list[int]:
        """Greedy decoding; generated tokens take positions after the last edited one."""
        ids = list(token_ids)
        if position_map is None:
            positions = list(range(len(ids)))
        else:
            ensure_valid(position_map)
            if len(position_map) != len(ids):
                raise ConfigurationError(f"{len(ids)} tokens but position map of length {len(position_map)}")
            positions = list(position_map.edited_index)
        if not ids:
            raise ConfigurationError("cannot generate from an empty prompt")
        last = positions[-1]
        if last + max_new_tokens >= self.context_window:
            raise ContextOverflowError(
                f"positions reach {last + max_new_tokens} but the context window is {self.context_window}"
            )
        out = []
        for step in range(max_new_tokens):
            logits = self.next_token_logits(ids, positions)
            token = int(np.argmax(logits))  # first maximum = lowest id on ties
            if stop_id is not None and token == stop_id:
                break
            out.append(token)
            ids.append(token)
            positions.append(last + step + 1)
        return out


def _scheme(name: str, slopes):
    if name == "linear_bias":
        return LinearBias(tuple(slopes))
    if name == "rotary":
        return Rotary()
    return SinusoidalAbsolute()


def check_context(position_map: PositionMap, context_window: int, reserve: int = 0) -> None:
    top = max_position(position_map) + reserve
    if top >= context_window:
        raise ContextOverflowError(f"max position {top} >= context window {context_window}")
