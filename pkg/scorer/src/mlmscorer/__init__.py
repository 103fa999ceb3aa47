"""Masked-LM pseudo-perplexity scoring service (pppl/1 protocol)."""

from .config import ScorerConfig
from .scoring import MlmScorer

__all__ = ["ScorerConfig", "MlmScorer"]
