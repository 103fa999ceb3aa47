"""Pseudo-perplexity of a sentence under a masked language model.

Each subtoken is masked once; the model's conditional log probability
of the true subtoken is read off at the masked position; the natural-log
sum is normalized by the *word* count of the text (subtoken count is
reported separately) and exponentiated:

    pppl = exp(-log_prob_sum / word_count)

Probabilities never exceed 1, and a text has at least as many subtokens
as words, so pppl >= 1 always holds.
"""

from __future__ import annotations

import math

import torch
from transformers import AutoModelForMaskedLM, AutoTokenizer

from .config import ConfigError, ScorerConfig


class ScoreError(Exception):
    """Per-item scoring failure; `code` is the wire-visible reason."""

    def __init__(self, code: str):
        super().__init__(code)
        self.code = code


class MlmScorer:
    def __init__(self, config: ScorerConfig):
        self.config = config
        self.tokenizer = AutoTokenizer.from_pretrained(config.model_name)
        model = AutoModelForMaskedLM.from_pretrained(config.model_name)
        # float64 keeps batched and one-at-a-time scoring numerically
        # aligned, which the service's contract tests rely on
        self.model = model.double().to(torch.device(config.device_hint))
        self.model.eval()
        limit = getattr(self.model.config, "max_position_embeddings", None)
        if limit is not None and config.max_sequence_length > limit:
            raise ConfigError(
                f"max_sequence_length {config.max_sequence_length} exceeds "
                f"the model's position limit {limit}"
            )
        if self.tokenizer.mask_token_id is None:
            raise ConfigError(f"{config.model_name} has no mask token")

    @property
    def models(self) -> list[str]:
        return [self.config.model_name]

    def score_text(self, text: str, batched: bool = True) -> dict:
        """Returns {"pppl", "token_count", "log_prob_sum", "subtoken_count"}.

        Raises ScoreError("empty") for whitespace-only text and
        ScoreError("too_long") when the subtoken sequence exceeds the
        configured maximum.
        """
        if not isinstance(text, str) or not text.split():
            raise ScoreError("empty")
        word_count = len(text.split())
        encoding = self.tokenizer(text, return_special_tokens_mask=True)
        ids = encoding["input_ids"]
        if len(ids) > self.config.max_sequence_length:
            raise ScoreError("too_long")
        positions = [
            i for i, special in enumerate(encoding["special_tokens_mask"]) if not special
        ]
        if not positions:
            raise ScoreError("empty")
        log_probs = self._masked_log_probs(ids, positions, batched)
        log_prob_sum = float(sum(log_probs))
        try:
            pppl = math.exp(-log_prob_sum / word_count)
        except OverflowError:
            raise ScoreError("overflow") from None
        if not math.isfinite(pppl):
            raise ScoreError("overflow")
        return {
            "pppl": pppl,
            "token_count": word_count,
            "log_prob_sum": log_prob_sum,
            "subtoken_count": len(positions),
        }

    def _masked_log_probs(self, ids: list[int], positions: list[int], batched: bool):
        """Log probability of each true subtoken at its masked position,
        one masked copy of the sequence per position."""
        device = next(self.model.parameters()).device
        base = torch.tensor(ids, dtype=torch.long, device=device)
        mask_id = self.tokenizer.mask_token_id
        results: list[float] = []
        step = self.config.batch_size if batched else 1
        with torch.no_grad():
            for start in range(0, len(positions), step):
                chunk = positions[start : start + step]
                rows = base.repeat(len(chunk), 1)
                for r, pos in enumerate(chunk):
                    rows[r, pos] = mask_id
                logits = self.model(input_ids=rows).logits
                for r, pos in enumerate(chunk):
                    row_log_probs = torch.log_softmax(logits[r, pos], dim=-1)
                    results.append(float(row_log_probs[ids[pos]]))
        return results
