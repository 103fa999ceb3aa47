"""Reference-based character error rate.

CER = Levenshtein distance / reference length, i.e. the inverse of
character accuracy.  Comparison runs over the character stream after
canonical Unicode composition, with every line trimmed and all
whitespace runs collapsed to a single separator, so segmentation
artifacts do not dominate the count.  Case folding is off by default.
"""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import DataError


@dataclass(frozen=True)
class CerResult:
    distance: int
    ref_len: int

    @property
    def cer(self) -> float:
        return self.distance / self.ref_len

    def __post_init__(self) -> None:
        if self.ref_len <= 0:
            raise DataError("CER undefined: empty reference after normalization")
        if self.distance < 0:
            raise DataError("negative edit distance")


def normalize(text: str | Sequence[str], fold_case: bool = False) -> str:
    """Collapse whitespace, trim lines, NFC-compose; optionally casefold."""
    lines = text.splitlines() if isinstance(text, str) else list(text)
    parts = []
    for line in lines:
        line = unicodedata.normalize("NFC", line)
        collapsed = " ".join(line.split())
        if collapsed:
            parts.append(collapsed)
    joined = " ".join(parts)
    return joined.casefold() if fold_case else joined


def levenshtein(a: str, b: str) -> int:
    """Unit-cost edit distance, two-row dynamic programming."""
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i] + [0] * len(b)
        for j, cb in enumerate(b, start=1):
            cur[j] = min(
                prev[j] + 1,
                cur[j - 1] + 1,
                prev[j - 1] + (ca != cb),
            )
        prev = cur
    return prev[-1]


def char_error_rate(
    ref: str | Sequence[str],
    hyp: str | Sequence[str],
    fold_case: bool = False,
) -> CerResult:
    """CER of a hypothesis against one reference text."""
    ref_norm = normalize(ref, fold_case=fold_case)
    hyp_norm = normalize(hyp, fold_case=fold_case)
    if not ref_norm:
        raise DataError("CER undefined: empty reference after normalization")
    return CerResult(distance=levenshtein(ref_norm, hyp_norm), ref_len=len(ref_norm))


def corpus_cer(
    pairs: Iterable[tuple[str | Sequence[str], str | Sequence[str]]],
    fold_case: bool = False,
) -> CerResult:
    """Micro-averaged CER: distances and lengths summed before dividing."""
    total_distance = 0
    total_ref_len = 0
    n = 0
    for idx, (ref, hyp) in enumerate(pairs):
        try:
            result = char_error_rate(ref, hyp, fold_case=fold_case)
        except DataError as exc:
            raise DataError(f"pair {idx}: {exc}") from exc
        total_distance += result.distance
        total_ref_len += result.ref_len
        n += 1
    if n == 0:
        raise DataError("corpus CER needs at least one (ref, hyp) pair")
    return CerResult(distance=total_distance, ref_len=total_ref_len)
