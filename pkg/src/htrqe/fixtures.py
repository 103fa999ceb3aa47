"""Deterministic synthetic English-like corpora.

Headline-scale evaluation data (manuscript transcriptions, trained HTR
models) can't ship with the code, so validation experiments run on
generated text instead: a ranked vocabulary of common English words
plus derived forms, sampled with a Zipf-Mandelbrot weight, punctuated
into sentences.  Everything is a pure function of the seed, so studies
built on these corpora are reproducible byte for byte.

The character set is lowercase ASCII plus basic punctuation, i.e. a
subset of what the default preprocessing allows, so no generated line
is ever dropped by the charset filter.
"""

from __future__ import annotations

import random
from functools import lru_cache

from .errors import DataError
from .textprep import RawCorpus

# Ranked roughly by everyday frequency; rank feeds the sampling weight.
_BASE_WORDS = """
the of and to a in that it is was he for on are as with his they i at
be this have from or one had by word but not what all were we when
your can said there use an each which she do how their if will up
other about out many then them these so some her would make like him
into time has look two more write go see number no way could people my
than first water been call who oil its now find long down day did get
come made may part over new sound take only little work know place
year live me back give most very after thing our just name good
sentence man think say great where help through much before line right
too mean old any same tell boy follow came want show also around form
three small set put end does another well large must big even such
because turn here why ask went men read need land different home us
move try kind hand picture again change off play spell air away animal
house point page letter mother answer found study still learn should
america world high every near add food between own below country plant
last school father keep tree never start city earth eye light thought
head under story saw left dont few while along might close something
seem next hard open example begin life always those both paper
together got group often run important until children side feet car
mile night walk white sea began grow took river four carry state once
book hear stop without second later miss idea enough eat face watch
far indian really almost let above girl sometimes mountain cut young
talk soon list song being leave family merchant harbour stable horse
winter summer garden window bridge market village church castle forest
field stone iron silver gold bread wine cloth wool grain barrel wagon
road tower gate wall court king queen soldier priest monk scribe ink
parchment candle lantern
""".split()

_SUFFIXES = ("s", "ed", "ing", "ly", "er")

_SENTENCE_END = ((".", 92), ("?", 4), ("!", 4))


@lru_cache(maxsize=None)
def corpus_words(n_types: int = 1000) -> tuple[str, ...]:
    """The ranked vocabulary: base words first, derived forms after."""
    words = list(dict.fromkeys(_BASE_WORDS))
    seen = set(words)
    for suffix in _SUFFIXES:
        for base in _BASE_WORDS:
            if len(base) < 3:
                continue
            form = base + suffix
            if form not in seen:
                seen.add(form)
                words.append(form)
            if len(words) >= n_types:
                return tuple(words[:n_types])
    if len(words) < n_types:
        raise DataError(f"can only derive {len(words)} word types, wanted {n_types}")
    return tuple(words[:n_types])


def _cumulative_zipf_weights(n: int) -> list[float]:
    total = 0.0
    out = []
    for rank in range(n):
        total += 1.0 / (rank + 2.7)
        out.append(total)
    return out


def generate_corpus(n_tokens: int, seed: int, n_types: int = 1000) -> RawCorpus:
    """At least n_tokens words of synthetic text, one sentence per line."""
    if n_tokens < 1:
        raise DataError(f"n_tokens must be >= 1, got {n_tokens}")
    vocab = corpus_words(n_types)
    cum_weights = _cumulative_zipf_weights(len(vocab))
    rng = random.Random(seed)
    end_marks = [m for m, _ in _SENTENCE_END]
    end_weights = [w for _, w in _SENTENCE_END]
    lines: list[str] = []
    produced = 0
    while produced < n_tokens:
        length = min(4 + int(rng.gammavariate(2.2, 3.0)), 24)
        words = rng.choices(vocab, cum_weights=cum_weights, k=length)
        pieces = []
        for i, word in enumerate(words):
            pieces.append(word)
            if i < length - 1 and rng.random() < 0.1:
                pieces.append(",")
        pieces.append(rng.choices(end_marks, weights=end_weights)[0])
        out = []
        for piece in pieces:
            if out and piece not in ",.?!":
                out.append(" ")
            out.append(piece)
        lines.append("".join(out))
        produced += length
    return RawCorpus(lines=tuple(lines), source_id=f"synthetic-seed{seed}")
