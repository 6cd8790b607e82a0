"""Corpus BLEU and sentence-level smoothed BLEU over whitespace tokens.

Corpus BLEU uses clipped 1..4-gram precisions, the effective reference
length (closest reference, ties to the shorter one by default) and the
standard brevity penalty.  Token comparison is byte-exact, i.e.
case-sensitive.

The sentence-level variants differ only in how they smooth:

  * PLUS_ONE             add-one smoothing of the 2..4-gram precisions
  * PLUS_ONE_BP          same, plus a softened brevity penalty that uses
                         an effective reference length reduced by one
                         token (floored at the hypothesis length)
  * PLUS_ONE_BP_GROUNDED same, plus add-one smoothing of the unigram
                         precision as well
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

MAX_ORDER = 4

Tokens = Sequence[str]


class SmoothingScheme(Enum):
    """Sentence-score smoothing variants; NONE is corpus-level only."""

    NONE = "none"
    PLUS_ONE = "plus1"
    PLUS_ONE_BP = "plus1-bp"
    PLUS_ONE_BP_GROUNDED = "plus1-bp-grounded"


@dataclass(frozen=True)
class BleuStats:
    """Additive sufficient statistics for BLEU.

    ``match[n-1]`` holds clipped n-gram matches, ``total[n-1]`` the
    hypothesis n-gram counts, for n = 1..4.  ``ref_len`` is the effective
    reference length.  Addition is component-wise, so corpus statistics
    are just the sum of segment statistics.
    """

    match: tuple[int, int, int, int]
    total: tuple[int, int, int, int]
    hyp_len: int
    ref_len: int

    def __post_init__(self):
        for n in range(MAX_ORDER):
            if not 0 <= self.match[n] <= self.total[n]:
                raise ValueError(f"match[{n + 1}]={self.match[n]} out of range")

    def __add__(self, other: "BleuStats") -> "BleuStats":
        return BleuStats(
            tuple(a + b for a, b in zip(self.match, other.match)),
            tuple(a + b for a, b in zip(self.total, other.total)),
            self.hyp_len + other.hyp_len,
            self.ref_len + other.ref_len,
        )

    def __sub__(self, other: "BleuStats") -> "BleuStats":
        # Only meaningful for removing a summand that is part of self.
        return BleuStats(
            tuple(a - b for a, b in zip(self.match, other.match)),
            tuple(a - b for a, b in zip(self.total, other.total)),
            self.hyp_len - other.hyp_len,
            self.ref_len - other.ref_len,
        )

    @staticmethod
    def zero() -> "BleuStats":
        return BleuStats((0, 0, 0, 0), (0, 0, 0, 0), 0, 0)


def _ngram_counts(tokens: Tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def clipped_matches(hyp_tokens: Tokens, references: Iterable[Tokens], n: int) -> int:
    """Clipped n-gram matches: each hypothesis n-gram counts at most as
    often as it appears in the most generous single reference."""
    if not 1 <= n <= MAX_ORDER:
        raise ValueError(f"n must be in 1..{MAX_ORDER}, got {n}")
    hyp_counts = _ngram_counts(hyp_tokens, n)
    if not hyp_counts:
        return 0
    ceiling: Counter = Counter()
    for ref in references:
        for gram, count in _ngram_counts(ref, n).items():
            if count > ceiling[gram]:
                ceiling[gram] = count
    return sum(min(count, ceiling[gram]) for gram, count in hyp_counts.items())


def effective_ref_length(
    hyp_len: int, ref_lengths: Sequence[int], tie: str = "shorter"
) -> int:
    """Length of the reference closest to the hypothesis length.

    ``tie`` picks the winner when two references are equally close:
    "shorter" (the default, the stricter brevity-penalty choice) or
    "longer".
    """
    if not ref_lengths:
        raise ValueError("ref_lengths must be non-empty")
    if tie not in ("shorter", "longer"):
        raise ValueError(f"unknown tie rule {tie!r}")
    sign = 1 if tie == "shorter" else -1
    return min(ref_lengths, key=lambda r: (abs(hyp_len - r), sign * r))


def brevity_penalty(c: int, r: int) -> float:
    """exp(1 - r/c) for short hypotheses, 1 otherwise; empty hypothesis -> 0."""
    if c < 0 or r < 1:
        raise ValueError(f"need c >= 0 and r >= 1, got c={c}, r={r}")
    if c == 0:
        return 0.0
    if c >= r:
        return 1.0
    return math.exp(1.0 - r / c)


def segment_stats(
    hyp_tokens: Tokens, references: Sequence[Tokens], tie: str = "shorter"
) -> BleuStats:
    """BLEU sufficient statistics for one hypothesis/reference pair."""
    c = len(hyp_tokens)
    return BleuStats(
        tuple(clipped_matches(hyp_tokens, references, n) for n in range(1, MAX_ORDER + 1)),
        tuple(max(0, c - n + 1) for n in range(1, MAX_ORDER + 1)),
        c,
        effective_ref_length(c, [len(r) for r in references], tie=tie),
    )


def precisions(stats: BleuStats) -> list[float]:
    """Raw clipped precisions match[n]/total[n]; 0.0 where total[n] = 0."""
    return [
        stats.match[n] / stats.total[n] if stats.total[n] > 0 else 0.0
        for n in range(MAX_ORDER)
    ]


def corpus_bleu(stats: BleuStats) -> float:
    """Geometric mean of the four clipped precisions times the brevity
    penalty; 0 as soon as any precision is zero."""
    if any(stats.match[n] == 0 or stats.total[n] == 0 for n in range(MAX_ORDER)):
        return 0.0
    log_precision = sum(
        math.log(stats.match[n] / stats.total[n]) for n in range(MAX_ORDER)
    )
    return brevity_penalty(stats.hyp_len, stats.ref_len) * math.exp(
        log_precision / MAX_ORDER
    )


def corpus_stats(
    hypotheses: Iterable[Tokens],
    references: Iterable[Sequence[Tokens]],
    tie: str = "shorter",
) -> BleuStats:
    """Sum of segment statistics over parallel hypothesis/reference pairs."""
    total = BleuStats.zero()
    for hyp, refs in zip(hypotheses, references):
        total = total + segment_stats(hyp, refs, tie=tie)
    return total


def sentence_bleu(
    hyp_tokens: Tokens,
    references: Sequence[Tokens],
    scheme: SmoothingScheme = SmoothingScheme.PLUS_ONE,
    tie: str = "shorter",
) -> float:
    """Smoothed sentence-level BLEU in [0, 1]; see module docstring for the
    schemes.  An empty hypothesis scores 0."""
    if scheme is SmoothingScheme.NONE:
        raise ValueError("NONE is a corpus-level scheme; pick a smoothed one")
    stats = segment_stats(hyp_tokens, references, tie=tie)
    c, r = stats.hyp_len, stats.ref_len
    if c == 0:
        return 0.0

    grounded = scheme is SmoothingScheme.PLUS_ONE_BP_GROUNDED
    log_precision = 0.0
    for n in range(MAX_ORDER):
        if n == 0 and not grounded:
            if stats.match[0] == 0:
                return 0.0
            log_precision += math.log(stats.match[0] / stats.total[0])
        else:
            log_precision += math.log((stats.match[n] + 1) / (stats.total[n] + 1))

    if scheme is SmoothingScheme.PLUS_ONE:
        bp = brevity_penalty(c, r)
    else:
        # BP-smooth: forgive one token of shortfall.
        bp = brevity_penalty(c, max(c, r - 1)) if c < r else 1.0
    return bp * math.exp(log_precision / MAX_ORDER)


def scheme_from_name(name: str) -> SmoothingScheme:
    for scheme in SmoothingScheme:
        if scheme.value == name:
            return scheme
    raise ValueError(f"unknown smoothing scheme {name!r}")
