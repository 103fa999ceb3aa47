"""Lexicon-based, ground-truth-free quality metrics.

Token ratio: fraction of hypothesis token occurrences found in a
reference lexicon.  Character n-gram ratio: fraction of hypothesis
character n-gram occurrences found in the reference n-gram set.
Both counts are over occurrences, not types, so the denominator is the
hypothesis size and the score lives in [0, 1].

N-grams are extracted within tokens by default: each token is padded
with n-1 boundary markers on both sides, so every token contributes at
least one gram and line segmentation does not shift the grams.  A
cross-token mode slides over the document's character stream instead.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterator

from .errors import DataError
from .textprep import TokenizedText

#: Pads tokens during n-gram extraction; never occurs in cleaned text.
BOUNDARY_MARKER = "␟"

WITHIN_TOKEN = "within_token"
CROSS_TOKEN = "cross_token"


@dataclass(frozen=True)
class Lexicon:
    """The set of token types of a reference corpus."""

    types: frozenset[str]
    built_from: str = ""
    prep_digest: str = ""

    def __len__(self) -> int:
        return len(self.types)

    def __contains__(self, token: str) -> bool:
        return token in self.types


@dataclass(frozen=True)
class NGramSet:
    """All distinct character n-grams of a reference corpus."""

    order: int
    grams: frozenset[str]
    built_from: str = ""
    prep_digest: str = ""
    mode: str = WITHIN_TOKEN

    def __len__(self) -> int:
        return len(self.grams)


@dataclass(frozen=True)
class RatioScore:
    metric_id: str
    hits: int
    total: int

    @property
    def value(self) -> float:
        return self.hits / self.total

    def __post_init__(self) -> None:
        if self.total <= 0:
            raise DataError(f"{self.metric_id}: undefined ratio (total must be > 0)")
        if not 0 <= self.hits <= self.total:
            raise DataError(f"{self.metric_id}: hits {self.hits} outside [0, {self.total}]")


def build_lexicon(ref: TokenizedText) -> Lexicon:
    if not ref.tokens:
        raise DataError("cannot build a lexicon from an empty reference")
    return Lexicon(
        types=frozenset(ref.tokens),
        built_from=ref.digest(),
        prep_digest=ref.prep_digest,
    )


def token_ratio(hyp: TokenizedText, lex: Lexicon) -> RatioScore:
    """Fraction of hypothesis token occurrences present in the lexicon."""
    if not hyp.tokens:
        raise DataError("token_ratio: undefined ratio for a hypothesis with no tokens")
    if not lex.types:
        raise DataError("token_ratio: empty lexicon")
    hits = sum(1 for tok in hyp.tokens if tok in lex.types)
    return RatioScore(metric_id="token_ratio", hits=hits, total=len(hyp.tokens))


def extract_ngrams(
    text: TokenizedText,
    n: int,
    mode: str = WITHIN_TOKEN,
    boundary: str = BOUNDARY_MARKER,
) -> Iterator[str]:
    """Yield every character n-gram occurrence under the extraction rule."""
    if n < 1:
        raise DataError(f"n-gram order must be >= 1, got {n}")
    pad = boundary * (n - 1)
    if mode == WITHIN_TOKEN:
        for tok in text.tokens:
            if boundary in tok:
                raise DataError("token contains the n-gram boundary marker")
            padded = pad + tok + pad
            for i in range(len(padded) - n + 1):
                yield padded[i : i + n]
    elif mode == CROSS_TOKEN:
        if not text.tokens:
            return
        padded = pad + text.char_stream + pad
        for i in range(len(padded) - n + 1):
            yield padded[i : i + n]
    else:
        raise DataError(f"unknown n-gram extraction mode: {mode!r}")


def build_ngram_set(
    ref: TokenizedText,
    n: int,
    mode: str = WITHIN_TOKEN,
    order_range: tuple[int, int] = (2, 7),
) -> NGramSet:
    if n < 1:
        raise DataError(f"n-gram order must be >= 1, got {n}")
    lo, hi = order_range
    if not lo <= n <= hi:
        raise DataError(f"n-gram order {n} outside configured range [{lo}, {hi}]")
    if not ref.tokens:
        raise DataError("cannot build an n-gram set from an empty reference")
    grams = frozenset(extract_ngrams(ref, n, mode=mode))
    return NGramSet(
        order=n,
        grams=grams,
        built_from=ref.digest(),
        prep_digest=ref.prep_digest,
        mode=mode,
    )


def _ngram_metric_id(order: int, mode: str) -> str:
    suffix = "" if mode == WITHIN_TOKEN else f"[{mode}]"
    return f"{order}gram{suffix}"


def ngram_ratio(hyp: TokenizedText, gs: NGramSet) -> RatioScore:
    """Fraction of hypothesis n-gram occurrences present in the set."""
    metric_id = _ngram_metric_id(gs.order, gs.mode)
    hits = 0
    total = 0
    for gram in extract_ngrams(hyp, gs.order, mode=gs.mode):
        total += 1
        if gram in gs.grams:
            hits += 1
    if total == 0:
        raise DataError(f"{metric_id}: hypothesis yields no n-grams")
    return RatioScore(metric_id=metric_id, hits=hits, total=total)


def save_lexicon(lex: Lexicon, path: str) -> None:
    header = {
        "kind": "lexicon",
        "count": len(lex.types),
        "source_digest": lex.built_from,
        "prep_digest": lex.prep_digest,
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for entry in sorted(lex.types):
            fh.write(entry + "\n")


def load_lexicon(path: str) -> Lexicon:
    with open(path, encoding="utf-8") as fh:
        header = _read_header(fh, path, "lexicon")
        types = frozenset(line.rstrip("\n") for line in fh)
    if len(types) != header["count"]:
        raise DataError(f"{path}: header count {header['count']} != {len(types)} entries")
    return Lexicon(
        types=types,
        built_from=header.get("source_digest", ""),
        prep_digest=header.get("prep_digest", ""),
    )


def save_ngram_set(gs: NGramSet, path: str) -> None:
    header = {
        "kind": "ngram_set",
        "order": gs.order,
        "mode": gs.mode,
        "count": len(gs.grams),
        "boundary_marker": BOUNDARY_MARKER,
        "source_digest": gs.built_from,
        "prep_digest": gs.prep_digest,
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for gram in sorted(gs.grams):
            fh.write(gram + "\n")


def load_ngram_set(path: str) -> NGramSet:
    with open(path, encoding="utf-8") as fh:
        header = _read_header(fh, path, "ngram_set")
        grams = frozenset(line.rstrip("\n") for line in fh)
    order = header["order"]
    if len(grams) != header["count"]:
        raise DataError(f"{path}: header count {header['count']} != {len(grams)} entries")
    if any(len(g) != order for g in grams):
        raise DataError(f"{path}: entry length != declared order {order}")
    return NGramSet(
        order=order,
        grams=grams,
        built_from=header.get("source_digest", ""),
        prep_digest=header.get("prep_digest", ""),
        mode=header.get("mode", WITHIN_TOKEN),
    )


def _read_header(fh, path: str, kind: str) -> dict:
    try:
        header = json.loads(fh.readline())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: missing or malformed JSON header line") from exc
    if header.get("kind") != kind:
        raise DataError(f"{path}: expected a {kind} file, got {header.get('kind')!r}")
    return header
