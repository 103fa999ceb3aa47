"""Deterministic corpus preprocessing.

Pipeline: Unicode-normalize, drop boilerplate / out-of-charset / blank /
duplicate lines, then tokenize (whitespace split with punctuation
detached into standalone tokens), optionally case-fold, and split into
sentences at sentence-final punctuation or line ends.

The same configuration is applied to the reference corpus and to every
hypothesis that gets scored against resources built from it; configs
carry a digest so mismatches can be detected downstream.
"""

from __future__ import annotations

import hashlib
import json
import string
import unicodedata
from dataclasses import dataclass, field

from .errors import DataError, EncodingError

DEFAULT_PUNCTUATION = ".,;:!?'\"()-"
SENTENCE_FINAL = frozenset(".!?")

#: Reasons a line can be dropped by clean(), in application order.
DROP_REASONS = ("boilerplate", "charset", "blank", "duplicate")


@dataclass(frozen=True)
class RawCorpus:
    """An ordered sequence of raw text lines from one source."""

    lines: tuple[str, ...]
    source_id: str = ""

    def digest(self) -> str:
        h = hashlib.sha256()
        for line in self.lines:
            h.update(line.encode("utf-8"))
            h.update(b"\n")
        return h.hexdigest()


@dataclass(frozen=True)
class PrepConfig:
    """Cleaning and tokenization settings.

    allowed_charset: characters a line may consist of (whitespace is
    always permitted); lines with anything else are dropped whole.
    dedup_scope: "line" drops byte-identical repeated lines, "document"
    leaves in-document duplicates alone (dedup is then the caller's
    concern, across documents).
    """

    allowed_charset: frozenset[str]
    lowercase: bool = True
    dedup_scope: str = "line"
    boilerplate_patterns: tuple[str, ...] = ()
    punctuation: frozenset[str] = frozenset(DEFAULT_PUNCTUATION)
    unicode_form: str = "NFC"

    def __post_init__(self) -> None:
        if not self.allowed_charset:
            raise ValueError("allowed_charset must be non-empty")
        if self.dedup_scope not in ("line", "document"):
            raise ValueError(f"unknown dedup_scope: {self.dedup_scope!r}")

    @classmethod
    def latin(cls, **overrides) -> "PrepConfig":
        """Latin letters + digits + the default punctuation allowlist."""
        charset = frozenset(string.ascii_letters + string.digits + DEFAULT_PUNCTUATION)
        return cls(allowed_charset=charset, **overrides)

    def digest(self) -> str:
        blob = json.dumps(
            {
                "allowed_charset": "".join(sorted(self.allowed_charset)),
                "lowercase": self.lowercase,
                "dedup_scope": self.dedup_scope,
                "boilerplate_patterns": list(self.boilerplate_patterns),
                "punctuation": "".join(sorted(self.punctuation)),
                "unicode_form": self.unicode_form,
            },
            sort_keys=True,
        )
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class TokenizedText:
    """A preprocessed document: tokens, sentence ranges, char stream.

    sentences are (start, end) token-index ranges, end-exclusive; they
    are non-empty, disjoint, ordered, and cover all tokens.  char_stream
    is the tokens joined by a single separator character; tokens never
    contain the separator.
    """

    tokens: tuple[str, ...]
    sentences: tuple[tuple[int, int], ...]
    char_stream: str = field(default="")
    prep_digest: str = ""

    SEPARATOR = " "

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update("\x1f".join(self.tokens).encode("utf-8"))
        h.update(json.dumps(list(self.sentences)).encode("utf-8"))
        return h.hexdigest()

    def sentence_tokens(self) -> list[tuple[str, ...]]:
        return [self.tokens[s:e] for s, e in self.sentences]


def _line_allowed(line: str, charset: frozenset[str]) -> bool:
    return all(ch in charset or ch.isspace() for ch in line)


def clean(corpus: RawCorpus, cfg: PrepConfig) -> RawCorpus:
    """Drop boilerplate, out-of-charset, blank, and duplicate lines."""
    cleaned, _ = clean_with_report(corpus, cfg)
    return cleaned


def clean_with_report(corpus: RawCorpus, cfg: PrepConfig) -> tuple[RawCorpus, dict]:
    """clean() plus a manifest-ready report of per-reason drop counts."""
    dropped = {reason: 0 for reason in DROP_REASONS}
    seen: set[str] = set()
    kept: list[str] = []
    for raw_line in corpus.lines:
        line = unicodedata.normalize(cfg.unicode_form, raw_line)
        if any(pat in line for pat in cfg.boilerplate_patterns):
            dropped["boilerplate"] += 1
            continue
        if not _line_allowed(line, cfg.allowed_charset):
            dropped["charset"] += 1
            continue
        if not line.strip():
            dropped["blank"] += 1
            continue
        if cfg.dedup_scope == "line":
            if line in seen:
                dropped["duplicate"] += 1
                continue
            seen.add(line)
        kept.append(line)
    report = {
        "config_digest": cfg.digest(),
        "unicode_normalization": cfg.unicode_form,
        "filter_order": list(DROP_REASONS),
        "input_digest": corpus.digest(),
        "input_lines": len(corpus.lines),
        "kept_lines": len(kept),
        "dropped": dropped,
    }
    return RawCorpus(lines=tuple(kept), source_id=corpus.source_id), report


def _split_line(line: str, punctuation: frozenset[str]) -> list[str]:
    """Whitespace split with punctuation characters detached as tokens."""
    out: list[str] = []
    word: list[str] = []
    for ch in line:
        if ch.isspace():
            if word:
                out.append("".join(word))
                word = []
        elif ch in punctuation:
            if word:
                out.append("".join(word))
                word = []
            out.append(ch)
        else:
            word.append(ch)
    if word:
        out.append("".join(word))
    return out


def tokenize(corpus: RawCorpus, cfg: PrepConfig) -> TokenizedText:
    """Clean then tokenize and sentence-split a corpus.

    Cleaning is applied first (idempotent, so pre-cleaned input is
    fine).  Sentences end at sentence-final punctuation tokens or at
    line ends; they never span lines.
    """
    cleaned = clean(corpus, cfg)
    tokens: list[str] = []
    sentences: list[tuple[int, int]] = []
    for line in cleaned.lines:
        line_tokens = _split_line(line, cfg.punctuation)
        if cfg.lowercase:
            line_tokens = [t.casefold() for t in line_tokens]
        start = len(tokens)
        for tok in line_tokens:
            tokens.append(tok)
            if tok in SENTENCE_FINAL:
                sentences.append((start, len(tokens)))
                start = len(tokens)
        if start < len(tokens):
            sentences.append((start, len(tokens)))
    return TokenizedText(
        tokens=tuple(tokens),
        sentences=tuple(sentences),
        char_stream=TokenizedText.SEPARATOR.join(tokens),
        prep_digest=cfg.digest(),
    )


def prepare_lines(lines: list[str] | tuple[str, ...], cfg: PrepConfig, source_id: str = "") -> TokenizedText:
    """Convenience wrapper: lines straight to TokenizedText."""
    return tokenize(RawCorpus(lines=tuple(lines), source_id=source_id), cfg)


def read_corpus(path: str, source_id: str | None = None) -> RawCorpus:
    """Read a one-line-per-text-line UTF-8 file, rejecting bad bytes."""
    with open(path, "rb") as fh:
        data = fh.read()
    try:
        text = data.decode("utf-8", errors="strict")
    except UnicodeDecodeError as exc:
        raise EncodingError(path, exc.start, exc.reason) from exc
    lines = text.splitlines()
    return RawCorpus(lines=tuple(lines), source_id=source_id if source_id is not None else path)


def write_corpus(corpus: RawCorpus, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for line in corpus.lines:
            fh.write(line)
            fh.write("\n")


def validate(text: TokenizedText) -> None:
    """Check the TokenizedText structural invariants; raise DataError."""
    prev_end = 0
    for start, end in text.sentences:
        if not (prev_end == start < end <= len(text.tokens)):
            raise DataError(f"bad sentence range ({start}, {end})")
        prev_end = end
    if prev_end != len(text.tokens):
        raise DataError("sentence ranges do not cover all tokens")
    sep = TokenizedText.SEPARATOR
    if any(sep in tok for tok in text.tokens):
        raise DataError("token contains the separator marker")
