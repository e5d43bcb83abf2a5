"""Position engineering: search over token position gaps instead of prompt text."""

from poseng.aggregate import (
    ExperimentSetting,
    PercentileReport,
    average_percentiles,
    heatmap_export,
    percentile_rank,
    universal_config,
)
from poseng.attention import (
    AttentionSpec,
    LinearBias,
    Rotary,
    SinusoidalAbsolute,
    TokenSequence,
    alibi_bias,
    attention_forward,
    attention_scores,
    expand_placeholders,
    forward_with_position_map,
    rope_rotate,
    sinusoidal_embedding,
)
from poseng.errors import ConfigurationError, ContextOverflowError, DomainError, PosengError, ValidationError
from poseng.positions import (
    GapVector,
    PositionMap,
    from_gaps,
    from_placeholder_counts,
    identity_map,
    max_position,
    to_placeholder_counts,
    validate,
)
from poseng.prompts import SegmentedPrompt, TemplateConfig, gaps_to_position_map, render_icl, render_rag
from poseng.search import SearchSpace, ScoreTable, best_config, enumerate_space, grid_search, icl_space, rag_space

__version__ = "0.1.0"

__all__ = [
    "ExperimentSetting",
    "PercentileReport",
    "average_percentiles",
    "heatmap_export",
    "percentile_rank",
    "universal_config",
    "AttentionSpec",
    "LinearBias",
    "Rotary",
    "SinusoidalAbsolute",
    "TokenSequence",
    "alibi_bias",
    "attention_forward",
    "attention_scores",
    "expand_placeholders",
    "forward_with_position_map",
    "rope_rotate",
    "sinusoidal_embedding",
    "ConfigurationError",
    "ContextOverflowError",
    "DomainError",
    "PosengError",
    "ValidationError",
    "GapVector",
    "PositionMap",
    "from_gaps",
    "from_placeholder_counts",
    "identity_map",
    "max_position",
    "to_placeholder_counts",
    "validate",
    "SegmentedPrompt",
    "TemplateConfig",
    "gaps_to_position_map",
    "render_icl",
    "render_rag",
    "SearchSpace",
    "ScoreTable",
    "best_config",
    "enumerate_space",
    "grid_search",
    "icl_space",
    "rag_space",
]

