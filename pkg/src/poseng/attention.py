"""Single-layer causal self-attention with pluggable positional schemes.

Positions are explicit inputs, so the same layer runs on an edited position
map or on a sequence that physically contains placeholder tokens. Placeholders
keep their position index but are removed from the softmax on both the query
and the key side; their output rows are zero.

Everything runs in float64.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

from poseng.errors import ConfigurationError, DomainError
from poseng.positions import PositionMap, ensure_valid, max_position

DEFAULT_ROPE_BASE = 10000.0


@dataclass(frozen=True)
class SinusoidalAbsolute:
    """Fixed sin/cos embedding added to the token embedding before projection."""

    name = "sinusoidal"


@dataclass(frozen=True)
class Rotary:
    """Rotate adjacent (2i, 2i+1) query/key pairs by ``pos / base**(2i/d_head)``."""

    base: float = DEFAULT_ROPE_BASE
    name = "rotary"

    def __post_init__(self):
        if not self.base > 0:
            raise ConfigurationError(f"rotary base must be positive, got {self.base}")


@dataclass(frozen=True)
class LinearBias:
    """Add ``-slope * (m - n)`` to each pre-softmax logit; one slope per head."""

    slopes: tuple[float, ...]
    name = "linear_bias"

    def __post_init__(self):
        object.__setattr__(self, "slopes", tuple(float(s) for s in self.slopes))
        if not self.slopes or any(not s > 0 for s in self.slopes):
            raise ConfigurationError("linear-bias slopes must be positive")

    @classmethod
    def geometric(cls, n_heads: int) -> LinearBias:
        return cls(default_slopes(n_heads))


Scheme = Union[SinusoidalAbsolute, Rotary, LinearBias]


def default_slopes(n_heads: int) -> tuple[float, ...]:
    """Geometric slopes ``2**(-8k/h)`` for heads k = 1..h."""
    return tuple(2.0 ** (-8.0 * k / n_heads) for k in range(1, n_heads + 1))


@dataclass(frozen=True, eq=False)
class AttentionSpec:
    """Projection weights and positional scheme for one attention layer.

    ``w_q``, ``w_k`` and ``w_v`` are d x d; head h owns rows
    ``h*d_head:(h+1)*d_head`` of each projection.
    """

    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    n_heads: int = 1
    scheme: Scheme = field(default_factory=Rotary)

    def __post_init__(self):
        mats = []
        for name in ("w_q", "w_k", "w_v"):
            m = np.array(getattr(self, name), dtype=np.float64)
            m.setflags(write=False)
            mats.append(m)
            object.__setattr__(self, name, m)
        d = mats[0].shape[0]
        if d < 2 or d % 2:
            raise ConfigurationError(f"dimension must be even and >= 2, got {d}")
        if any(m.shape != (d, d) for m in mats):
            raise ConfigurationError(f"projection weights must all be {d}x{d}")
        if self.n_heads < 1 or d % self.n_heads:
            raise ConfigurationError(f"{self.n_heads} heads do not divide dimension {d}")
        if isinstance(self.scheme, Rotary) and d % (2 * self.n_heads):
            raise ConfigurationError("rotary needs an even per-head dimension")
        if isinstance(self.scheme, LinearBias) and len(self.scheme.slopes) != self.n_heads:
            raise ConfigurationError(f"need {self.n_heads} slopes, got {len(self.scheme.slopes)}")

    @property
    def d(self) -> int:
        return self.w_q.shape[0]

    @property
    def d_head(self) -> int:
        return self.d // self.n_heads

    @classmethod
    def random(cls, d: int, n_heads: int, scheme: Scheme, rng: np.random.Generator, scale: float = 1.0) -> AttentionSpec:
        std = scale / np.sqrt(d)
        w = [rng.normal(0.0, std, size=(d, d)) for _ in range(3)]
        return cls(*w, n_heads=n_heads, scheme=scheme)


@dataclass(frozen=True, eq=False)
class TokenSequence:
    """Embeddings with explicit positions and placeholder flags."""

    embeddings: np.ndarray
    positions: np.ndarray
    placeholder: np.ndarray

    def __post_init__(self):
        e = np.atleast_2d(np.asarray(self.embeddings, dtype=np.float64))
        p = np.asarray(self.positions, dtype=np.int64).reshape(-1)
        f = np.asarray(self.placeholder, dtype=bool).reshape(-1)
        if not (len(e) == len(p) == len(f)):
            raise ConfigurationError("embeddings, positions and flags must have equal length")
        if np.any(p < 0) or np.any(np.diff(p) <= 0):
            raise ConfigurationError("positions must be non-negative and strictly increasing")
        object.__setattr__(self, "embeddings", e)
        object.__setattr__(self, "positions", p)
        object.__setattr__(self, "placeholder", f)

    @classmethod
    def plain(cls, embeddings, positions=None) -> TokenSequence:
        e = np.atleast_2d(np.asarray(embeddings, dtype=np.float64))
        if positions is None:
            positions = np.arange(len(e))
        return cls(e, positions, np.zeros(len(e), dtype=bool))

    def __len__(self) -> int:
        return len(self.positions)


def sinusoidal_embedding(pos, d: int) -> np.ndarray:
    """Absolute embedding; accepts a scalar position or an array of positions."""
    if d % 2:
        raise ConfigurationError(f"sinusoidal embedding needs an even dimension, got {d}")
    pos = np.asarray(pos, dtype=np.float64)
    inv_freq = 10000.0 ** (-np.arange(0, d, 2, dtype=np.float64) / d)
    angles = pos[..., None] * inv_freq
    out = np.empty(pos.shape + (d,))
    out[..., 0::2] = np.sin(angles)
    out[..., 1::2] = np.cos(angles)
    return out


def rope_rotate(v: np.ndarray, pos, base: float = DEFAULT_ROPE_BASE) -> np.ndarray:
    """Rotate each adjacent pair of the last axis of ``v``.

    ``pos`` broadcasts against the leading axes of ``v``.
    """
    v = np.asarray(v, dtype=np.float64)
    d = v.shape[-1]
    if d % 2:
        raise ConfigurationError(f"rotary needs an even dimension, got {d}")
    inv_freq = base ** (-np.arange(0, d, 2, dtype=np.float64) / d)
    angles = np.asarray(pos, dtype=np.float64)[..., None] * inv_freq
    cos, sin = np.cos(angles), np.sin(angles)
    even, odd = v[..., 0::2], v[..., 1::2]
    out = np.empty(np.broadcast_shapes(v.shape, angles.shape[:-1] + (d,)))
    out[..., 0::2] = even * cos - odd * sin
    out[..., 1::2] = even * sin + odd * cos
    return out


def alibi_bias(m: int, n: int, slope: float) -> float:
    if n > m:
        raise DomainError(f"key position {n} lies after query position {m}")
    return -slope * (m - n)


def _project(seq: TokenSequence, spec: AttentionSpec):
    """Per-head q, k, v of shape (heads, N, d_head)."""
    if seq.embeddings.shape[1] != spec.d:
        raise ConfigurationError(f"embedding dimension {seq.embeddings.shape[1]} != spec dimension {spec.d}")
    x = seq.embeddings
    if isinstance(spec.scheme, SinusoidalAbsolute):
        x = x + sinusoidal_embedding(seq.positions, spec.d)
    n, h, dh = len(seq), spec.n_heads, spec.d_head

    def heads(w):
        return (x @ w.T).reshape(n, h, dh).transpose(1, 0, 2)

    q, k, v = heads(spec.w_q), heads(spec.w_k), heads(spec.w_v)
    if isinstance(spec.scheme, Rotary):
        q = rope_rotate(q, seq.positions, spec.scheme.base)
        k = rope_rotate(k, seq.positions, spec.scheme.base)
    return q, k, v


def attention_scores(seq: TokenSequence, spec: AttentionSpec) -> np.ndarray:
    """Attention weights of shape (heads, N, N)."""
    return _scores_and_values(seq, spec)[0]


def _scores_and_values(seq: TokenSequence, spec: AttentionSpec, rows=None):
    """Softmax weights for the query ``rows`` (default: all) and per-head values."""
    q, k, v = _project(seq, spec)
    pos = seq.positions
    real = ~seq.placeholder
    if rows is None:
        rows = np.arange(len(seq))
    q, qpos = q[:, rows], pos[rows]

    logits = q @ k.transpose(0, 2, 1)
    logits /= np.sqrt(spec.d_head)
    if isinstance(spec.scheme, LinearBias):
        dist = (qpos[:, None] - pos[None, :]).astype(np.float64)
        logits -= np.asarray(spec.scheme.slopes)[:, None, None] * dist

    visible = (rows[:, None] >= np.arange(len(seq))[None, :]) & real[None, :] & real[rows][:, None]
    logits = np.where(visible, logits, -np.inf)
    row_max = logits.max(axis=-1, keepdims=True)
    row_max[~np.isfinite(row_max)] = 0.0
    logits -= row_max
    weights = np.exp(logits, out=logits)
    total = weights.sum(axis=-1, keepdims=True)
    total[total == 0] = 1.0
    weights /= total
    return weights, v


def attention_forward(seq: TokenSequence, spec: AttentionSpec, rows=None) -> np.ndarray:
    """Outputs of shape (N, d), or (len(rows), d) for selected query rows.

    Placeholder rows are zero.
    """
    weights, v = _scores_and_values(seq, spec, None if rows is None else np.asarray(rows, dtype=np.int64).reshape(-1))
    out = weights @ v
    return out.transpose(1, 0, 2).reshape(weights.shape[1], spec.d)


def forward_with_position_map(embeddings, position_map: PositionMap, spec: AttentionSpec) -> np.ndarray:
    embeddings = np.atleast_2d(np.asarray(embeddings, dtype=np.float64))
    if len(embeddings) != len(position_map):
        raise ConfigurationError(f"{len(embeddings)} embeddings but position map of length {len(position_map)}")
    ensure_valid(position_map)
    return attention_forward(TokenSequence.plain(embeddings, position_map.edited_index), spec)


def expand_placeholders(embeddings, position_map: PositionMap, fill: float = 0.0):
    """Materialise the placeholder picture of a position map.

    Returns the expanded sequence (positions ``0..max_position``) and the
    indices of the real tokens inside it. Placeholder embeddings are ``fill``;
    they never influence real outputs.
    """
    embeddings = np.atleast_2d(np.asarray(embeddings, dtype=np.float64))
    if len(embeddings) != len(position_map):
        raise ConfigurationError(f"{len(embeddings)} embeddings but position map of length {len(position_map)}")
    ensure_valid(position_map)
    if len(position_map) == 0:
        empty = np.zeros((0, embeddings.shape[1]))
        return TokenSequence(empty, np.zeros(0, dtype=np.int64), np.zeros(0, dtype=bool)), np.zeros(0, dtype=np.int64)
    total = max_position(position_map) + 1
    real_idx = np.asarray(position_map.edited_index, dtype=np.int64)
    expanded = np.full((total, embeddings.shape[1]), fill, dtype=np.float64)
    expanded[real_idx] = embeddings
    flags = np.ones(total, dtype=bool)
    flags[real_idx] = False
    return TokenSequence(expanded, np.arange(total), flags), real_idx


def reference_forward(seq: TokenSequence, spec: AttentionSpec) -> tuple[np.ndarray, np.ndarray]:
    """Scalar double-loop attention used as an oracle. Returns (scores, outputs).

    Deliberately shares no code with the vectorised path beyond the
    positional primitives' formulas, which it re-derives element by element.
    """
    import math

    n, d, h, dh = len(seq), spec.d, spec.n_heads, spec.d_head
    scheme = spec.scheme
    xs = [list(map(float, row)) for row in seq.embeddings]
    pos = [int(p) for p in seq.positions]
    ph = [bool(f) for f in seq.placeholder]

    if isinstance(scheme, SinusoidalAbsolute):
        for t in range(n):
            for i in range(0, d, 2):
                angle = pos[t] / 10000.0 ** (i / d)
                xs[t][i] += math.sin(angle)
                xs[t][i + 1] += math.cos(angle)

    def matvec(w, x):
        return [sum(w[r][c] * x[c] for c in range(d)) for r in range(d)]

    def rotate(vec, p):
        out = list(vec)
        for i in range(0, dh, 2):
            angle = p / scheme.base ** (i / dh)
            c, s = math.cos(angle), math.sin(angle)
            out[i] = vec[i] * c - vec[i + 1] * s
            out[i + 1] = vec[i] * s + vec[i + 1] * c
        return out

    wq, wk, wv = spec.w_q.tolist(), spec.w_k.tolist(), spec.w_v.tolist()
    qs = [matvec(wq, x) for x in xs]
    ks = [matvec(wk, x) for x in xs]
    vs = [matvec(wv, x) for x in xs]

    scores = np.zeros((h, n, n))
    outputs = np.zeros((n, d))
    for head in range(h):
        sl = slice(head * dh, (head + 1) * dh)
        for m in range(n):
            if ph[m]:
                continue
            qm = qs[m][sl]
            if isinstance(scheme, Rotary):
                qm = rotate(qm, pos[m])
            logits = {}
            for j in range(m + 1):
                if ph[j]:
                    continue
                kj = ks[j][sl]
                if isinstance(scheme, Rotary):
                    kj = rotate(kj, pos[j])
                logit = sum(a * b for a, b in zip(qm, kj)) / math.sqrt(dh)
                if isinstance(scheme, LinearBias):
                    logit += alibi_bias(pos[m], pos[j], scheme.slopes[head])
                logits[j] = logit
            top = max(logits.values())
            exps = {j: math.exp(v - top) for j, v in logits.items()}
            z = sum(exps.values())
            for j, e in exps.items():
                a = e / z
                scores[head, m, j] = a
                for c in range(dh):
                    outputs[m, head * dh + c] += a * vs[j][head * dh + c]
    return scores, outputs
