"""Statistical n-gram language model with Kneser-Ney smoothing.

Training uses interpolated modified Kneser-Ney: three per-order
discounts derived from counts-of-counts, continuation counts at the
lower orders (raw counts for patterns starting at the sentence-start
marker, which nothing precedes), and backoff weights that make every
context distribution sum to one.  The leftover unigram mass goes to the
unknown marker, so no lookup can ever return probability zero.

Sentences are padded with order-1 start markers and one end marker.
Perplexity follows PPL = 2^H with H the per-token cross-entropy in
bits; probabilities are stored as log10 for ARPA interoperability and
converted when accumulating.

The ARPA serialization is the usual \\data\\ / \\n-grams: / \\end\\
layout with tab-separated log10 values; lines before \\data\\ starting
with '#' carry model metadata and are ignored by other toolkits.
"""

from __future__ import annotations

import json
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field

from .errors import ArpaParseError, DataError
from .textprep import TokenizedText

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"
RESERVED = frozenset({BOS, EOS, UNK})

_LOG2_OF_10 = math.log2(10.0)
_LOG10_FLOOR = -99.0  # conventional stand-in for log10(0)

NGram = tuple[str, ...]


@dataclass(frozen=True)
class NGramCounts:
    """Raw n-gram counts for orders 1..order over padded sentences."""

    order: int
    tables: tuple[dict[NGram, int], ...]
    sentence_count: int
    token_count: int

    def table(self, k: int) -> dict[NGram, int]:
        return self.tables[k - 1]


@dataclass
class NGramModel:
    order: int
    logp: tuple[dict[NGram, float], ...]      # logp[k-1]: k-gram -> log10 P
    bow: tuple[dict[NGram, float], ...]       # bow[j-1]: j-gram context -> log10 backoff
    vocab: frozenset[str]
    metadata: dict[str, str] = field(default_factory=dict)

    def logprob(self, word: str, context: NGram) -> float:
        """log10 P(word | context) with standard backoff lookup."""
        ctx = tuple(context)[-(self.order - 1):] if self.order > 1 else ()
        acc = 0.0
        while True:
            gram = ctx + (word,)
            p = self.logp[len(gram) - 1].get(gram)
            if p is not None:
                return acc + p
            if not ctx:
                raise DataError(f"token {word!r} not in model vocabulary")
            b = self.bow[len(ctx) - 1].get(ctx)
            if b is not None:
                acc += b
            ctx = ctx[1:]

    def prob(self, word: str, context: NGram) -> float:
        return 10.0 ** self.logprob(word, context)

    def contexts(self) -> list[NGram]:
        """Every context that carries an explicit backoff weight."""
        out: list[NGram] = [()]
        for table in self.bow:
            out.extend(table.keys())
        return out

    @property
    def discounts(self) -> dict:
        return json.loads(self.metadata["discounts"]) if "discounts" in self.metadata else {}


@dataclass(frozen=True)
class PerplexityResult:
    log2_prob_sum: float
    token_count: int
    oov_count: int

    @property
    def cross_entropy(self) -> float:
        return -self.log2_prob_sum / self.token_count

    @property
    def ppl(self) -> float:
        return 2.0 ** self.cross_entropy


def count_ngrams(corpus: TokenizedText, order: int) -> NGramCounts:
    """Count all 1..order-grams over start/end-padded sentences.

    Windows predicting the start marker are not events and are skipped.
    """
    if order < 1:
        raise DataError(f"order must be >= 1, got {order}")
    if not corpus.sentences:
        raise DataError("cannot count n-grams of an empty corpus")
    tables: list[Counter] = [Counter() for _ in range(order)]
    token_count = 0
    for sent in corpus.sentence_tokens():
        for tok in sent:
            if tok in RESERVED:
                raise DataError(f"reserved marker {tok!r} occurs as a corpus token")
        padded = (BOS,) * (order - 1) + tuple(sent) + (EOS,)
        token_count += len(sent)
        for k in range(1, order + 1):
            table = tables[k - 1]
            for i in range(len(padded) - k + 1):
                gram = padded[i : i + k]
                if gram[-1] == BOS:
                    continue
                table[gram] += 1
    return NGramCounts(
        order=order,
        tables=tuple(dict(t) for t in tables),
        sentence_count=len(corpus.sentences),
        token_count=token_count,
    )


def _modified_discounts(counts_of_counts: Counter) -> tuple[float, float, float, bool]:
    """D1/D2/D3+ from counts-of-counts; fixed 0.75 when degenerate."""
    n1, n2, n3, n4 = (counts_of_counts[i] for i in (1, 2, 3, 4))
    if min(n1, n2, n3, n4) > 0:
        y = n1 / (n1 + 2.0 * n2)
        d1 = 1.0 - 2.0 * y * n2 / n1
        d2 = 2.0 - 3.0 * y * n3 / n2
        d3 = 3.0 - 4.0 * y * n4 / n3
        if 0.0 < d1 < 1.0 and 0.0 < d2 < 2.0 and 0.0 < d3 < 3.0:
            return d1, d2, d3, False
    return 0.75, 0.75, 0.75, True


def _discount_for(count: int, d1: float, d2: float, d3: float) -> float:
    if count >= 3:
        return d3
    return d2 if count == 2 else d1


def _used_counts(counts: NGramCounts) -> list[dict[NGram, int]]:
    """Counts each order is estimated from: raw at the top, continuation
    below (raw again for start-marker-initial patterns)."""
    order = counts.order
    used: list[dict[NGram, int]] = [dict() for _ in range(order)]
    used[order - 1] = counts.table(order)
    for k in range(order - 1, 0, -1):
        continuation: Counter = Counter()
        for gram in counts.table(k + 1):
            continuation[gram[1:]] += 1
        table = {}
        for pattern, raw in counts.table(k).items():
            if pattern[0] == BOS:
                table[pattern] = raw
            else:
                table[pattern] = continuation[pattern]
        used[k - 1] = table
    return used


def estimate_kn(counts: NGramCounts, source_digest: str = "", prep_digest: str = "") -> NGramModel:
    """Interpolated modified Kneser-Ney estimation from raw counts."""
    order = counts.order
    if not counts.table(1):
        raise DataError("no unigram counts; cannot estimate a model")
    used = _used_counts(counts)

    discount_meta: dict[str, dict] = {}
    discounts: list[tuple[float, float, float]] = []
    for k in range(1, order + 1):
        d1, d2, d3, fellback = _modified_discounts(Counter(used[k - 1].values()))
        discounts.append((d1, d2, d3))
        discount_meta[str(k)] = {"d1": d1, "d2": d2, "d3": d3, "fallback": fellback}

    probs: list[dict[NGram, float]] = [dict() for _ in range(order)]
    gammas: list[dict[NGram, float]] = [dict() for _ in range(order)]  # per level, keyed by history

    for k in range(1, order + 1):
        d1, d2, d3 = discounts[k - 1]
        # sorted iteration makes float accumulation, and hence the model,
        # independent of corpus order
        by_history: dict[NGram, list[tuple[NGram, int]]] = defaultdict(list)
        for gram, c in sorted(used[k - 1].items()):
            by_history[gram[:-1]].append((gram, c))
        level_probs = probs[k - 1]
        level_gammas = gammas[k - 1]
        lower = probs[k - 2] if k > 1 else None
        for history, items in by_history.items():
            total = sum(c for _, c in items)
            reserved_mass = sum(_discount_for(c, d1, d2, d3) for _, c in items)
            gamma = reserved_mass / total
            level_gammas[history] = gamma
            for gram, c in items:
                f = max(c - _discount_for(c, d1, d2, d3), 0.0) / total
                if lower is None:
                    level_probs[gram] = f
                else:
                    level_probs[gram] = f + gamma * lower[gram[1:]]
        if k == 1:
            level_probs[(UNK,)] = level_gammas[()]

    logp: list[dict[NGram, float]] = [
        {gram: math.log10(p) for gram, p in level.items()} for level in probs
    ]
    # structural start-marker entries: contexts made purely of padding
    for j in range(1, order):
        logp[j - 1][(BOS,) * j] = _LOG10_FLOOR
    bow: list[dict[NGram, float]] = [
        {h: math.log10(g) for h, g in gammas[j].items()} for j in range(1, order)
    ]
    vocab = frozenset(w for (w,) in logp[0])
    metadata = {"discounts": json.dumps(discount_meta, sort_keys=True)}
    if source_digest:
        metadata["source_digest"] = source_digest
    if prep_digest:
        metadata["prep_digest"] = prep_digest
    return NGramModel(
        order=order,
        logp=tuple(logp),
        bow=tuple(bow),
        vocab=vocab,
        metadata=metadata,
    )


def train(corpus: TokenizedText, order: int) -> NGramModel:
    """count_ngrams + estimate_kn in one step."""
    return estimate_kn(
        count_ngrams(corpus, order),
        source_digest=corpus.digest(),
        prep_digest=corpus.prep_digest,
    )


def perplexity(model: NGramModel, text: TokenizedText, oov_mode: str = "include") -> PerplexityResult:
    """Score a document; PPL = 2^H over all sentence events.

    Every sentence is padded with order-1 start markers and one end
    marker; the end marker is a scored event.  Out-of-vocabulary tokens
    map to the unknown marker and are scored (include) or skipped while
    counted (exclude).
    """
    if oov_mode not in ("include", "exclude"):
        raise DataError(f"unknown oov_mode: {oov_mode!r}")
    if not text.sentences:
        raise DataError("cannot score an empty text")
    n_ctx = model.order - 1
    log2_sum = 0.0
    events = 0
    oov = 0
    for sent in text.sentence_tokens():
        context: NGram = (BOS,) * n_ctx
        for tok in tuple(sent) + (EOS,):
            is_oov = tok not in model.vocab or tok == UNK
            word = UNK if is_oov else tok
            if is_oov:
                oov += 1
            if not (is_oov and oov_mode == "exclude"):
                log2_sum += model.logprob(word, context) * _LOG2_OF_10
                events += 1
            context = (context + (word,))[-n_ctx:] if n_ctx else ()
    if events == 0:
        raise DataError("no scoreable events (everything out of vocabulary?)")
    return PerplexityResult(log2_prob_sum=log2_sum, token_count=events, oov_count=oov)


def write_arpa(model: NGramModel) -> str:
    """Serialize to ARPA text; deterministic, so rewrites are byte-stable."""
    out: list[str] = []
    for key in sorted(model.metadata):
        out.append(f"# htrqe:{key}={model.metadata[key]}")
    out.append("\\data\\")
    for k in range(1, model.order + 1):
        out.append(f"ngram {k}={len(model.logp[k - 1])}")
    out.append("")
    for k in range(1, model.order + 1):
        out.append(f"\\{k}-grams:")
        bows = model.bow[k - 1] if k < model.order else None
        for gram in sorted(model.logp[k - 1]):
            p = model.logp[k - 1][gram] + 0.0
            line = f"{p:.7f}\t{' '.join(gram)}"
            if bows is not None:
                line += f"\t{bows.get(gram, 0.0) + 0.0:.7f}"
            out.append(line)
        out.append("")
    out.append("\\end\\")
    return "\n".join(out) + "\n"


def read_arpa(text: str) -> NGramModel:
    """Parse ARPA text; raises ArpaParseError with the offending line."""
    lines = text.splitlines()
    pos = 0
    metadata: dict[str, str] = {}
    while pos < len(lines) and lines[pos].strip() != "\\data\\":
        line = lines[pos].strip()
        if line.startswith("# htrqe:") and "=" in line:
            key, _, value = line[len("# htrqe:"):].partition("=")
            metadata[key] = value
        pos += 1
    if pos == len(lines):
        raise ArpaParseError(len(lines), "missing \\data\\ header")
    pos += 1

    declared: dict[int, int] = {}
    while pos < len(lines) and lines[pos].strip():
        line = lines[pos].strip()
        if not line.startswith("ngram "):
            raise ArpaParseError(pos + 1, f"expected 'ngram k=N', got {line!r}")
        try:
            k_str, n_str = line[len("ngram "):].split("=")
            k, n = int(k_str), int(n_str)
        except ValueError as exc:
            raise ArpaParseError(pos + 1, f"unparsable count line {line!r}") from exc
        if k != len(declared) + 1:
            raise ArpaParseError(pos + 1, f"non-monotone n-gram order {k}")
        declared[k] = n
        pos += 1
    if not declared:
        raise ArpaParseError(pos + 1, "no 'ngram k=N' lines in header")
    order = max(declared)

    logp: list[dict[NGram, float]] = [dict() for _ in range(order)]
    bow: list[dict[NGram, float]] = [dict() for _ in range(order - 1)]
    for k in range(1, order + 1):
        while pos < len(lines) and not lines[pos].strip():
            pos += 1
        header = f"\\{k}-grams:"
        if pos == len(lines) or lines[pos].strip() != header:
            found = lines[pos].strip() if pos < len(lines) else "end of file"
            raise ArpaParseError(pos + 1, f"expected section {header}, found {found!r}")
        pos += 1
        while pos < len(lines) and lines[pos].strip() and not lines[pos].startswith("\\"):
            fields = lines[pos].split()
            if len(fields) not in (k + 1, k + 2):
                raise ArpaParseError(pos + 1, f"expected {k}-gram entry, got {len(fields)} fields")
            try:
                p = float(fields[0])
                weight = float(fields[k + 1]) if len(fields) == k + 2 else None
            except ValueError as exc:
                raise ArpaParseError(pos + 1, f"unparsable float in {lines[pos]!r}") from exc
            if p > 0.0:
                raise ArpaParseError(pos + 1, f"log10 probability {p} > 0")
            gram = tuple(fields[1 : k + 1])
            logp[k - 1][gram] = p
            if weight is not None:
                if k >= order:
                    raise ArpaParseError(pos + 1, "backoff weight on a highest-order entry")
                if weight != 0.0:
                    bow[k - 1][gram] = weight
            pos += 1
        if len(logp[k - 1]) != declared[k]:
            raise ArpaParseError(
                pos + 1,
                f"section {header} has {len(logp[k - 1])} entries, header declared {declared[k]}",
            )
    while pos < len(lines) and not lines[pos].strip():
        pos += 1
    if pos == len(lines) or lines[pos].strip() != "\\end\\":
        raise ArpaParseError(pos + 1, "missing \\end\\ terminator")
    return NGramModel(
        order=order,
        logp=tuple(logp),
        bow=tuple(bow),
        vocab=frozenset(w for (w,) in logp[0]),
        metadata=metadata,
    )
