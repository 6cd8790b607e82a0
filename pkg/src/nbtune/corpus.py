"""Data model and I/O for segments, references, n-best lists and weight vectors.

File formats:
  * n-best:     ``SEGID ||| tok tok ... ||| name=value name=value ... [||| total]``
                one hypothesis per line; the trailing total field is ignored;
                segments need not be contiguous in the file.
  * references: plain text, one segment per line, one file per reference.
  * weights:    ``name value`` per line.

All tokenization is whitespace-only; input is expected to be pre-tokenized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import IO, Iterable, Mapping, Sequence


class NBestFormatError(ValueError):
    """Raised for malformed n-best input; carries the 1-based line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass(frozen=True)
class Segment:
    """A source sentence together with its reference translations."""

    id: int
    source_tokens: tuple[str, ...]
    references: tuple[tuple[str, ...], ...]

    def __post_init__(self):
        if self.id < 0:
            raise ValueError(f"segment id must be non-negative, got {self.id}")
        if not self.source_tokens:
            raise ValueError(f"segment {self.id}: empty source")
        if not self.references or any(not r for r in self.references):
            raise ValueError(f"segment {self.id}: empty reference")


@dataclass(frozen=True)
class Hypothesis:
    """One candidate translation with its model feature vector."""

    segment_id: int
    tokens: tuple[str, ...]
    features: Mapping[str, float]

    def key(self) -> tuple:
        """Identity for deduplication: tokens plus the exact feature values."""
        return (self.tokens, tuple(sorted(self.features.items())))


@dataclass(frozen=True)
class NBestList:
    """Candidate hypotheses for one segment, in input order."""

    segment_id: int
    hypotheses: tuple[Hypothesis, ...]

    def __post_init__(self):
        if not self.hypotheses:
            raise ValueError(f"segment {self.segment_id}: empty n-best list")
        for h in self.hypotheses:
            if h.segment_id != self.segment_id:
                raise ValueError(
                    f"hypothesis for segment {h.segment_id} in list {self.segment_id}"
                )


# A weight vector is an ordinary mapping feature-name -> finite float.
WeightVector = dict[str, float]


def dot(weights: Mapping[str, float], features: Mapping[str, float]) -> float:
    """Dot product keyed by feature name.

    Summation runs in sorted-name order so the result is bit-identical no
    matter how either mapping was constructed.
    """
    if weights.keys() != features.keys():
        raise ValueError(
            f"feature name mismatch: {sorted(weights)} vs {sorted(features)}"
        )
    return sum(weights[name] * features[name] for name in sorted(features))


def rerank(nbest: NBestList, weights: Mapping[str, float]) -> Hypothesis:
    """Return the hypothesis maximizing the log-linear score.

    Ties go to the lowest input index, matching n-best extraction order.
    """
    best = nbest.hypotheses[0]
    best_score = dot(weights, best.features)
    for hyp in nbest.hypotheses[1:]:
        score = dot(weights, hyp.features)
        if score > best_score:
            best, best_score = hyp, score
    return best


def _parse_features(field: str, line_no: int) -> dict[str, float]:
    features: dict[str, float] = {}
    for item in field.split():
        name, sep, raw = item.partition("=")
        if not sep or not name:
            raise NBestFormatError(line_no, f"bad feature entry {item!r}")
        try:
            value = float(raw)
        except ValueError:
            raise NBestFormatError(line_no, f"bad feature value {item!r}") from None
        if not math.isfinite(value):
            raise NBestFormatError(line_no, f"non-finite feature value {item!r}")
        features[name] = value
    if not features:
        raise NBestFormatError(line_no, "empty feature field")
    return features


def parse_nbest(stream: Iterable[str]) -> list[NBestList]:
    """Parse an n-best file into per-segment lists.

    Lists come out grouped by segment id in order of first appearance;
    within a segment, input order is kept.  Duplicate hypotheses (same
    tokens and same features) are merged.  The feature name set must be
    identical across all hypotheses in the file.
    """
    by_segment: dict[int, list[Hypothesis]] = {}
    seen: dict[int, set[tuple]] = {}
    names: frozenset[str] | None = None
    for line_no, line in enumerate(stream, start=1):
        line = line.rstrip("\n")
        if not line.strip():
            continue
        fields = [f.strip() for f in line.split("|||")]
        if len(fields) not in (3, 4):
            raise NBestFormatError(line_no, f"expected 3 or 4 fields, got {len(fields)}")
        try:
            seg_id = int(fields[0])
        except ValueError:
            raise NBestFormatError(line_no, f"bad segment id {fields[0]!r}") from None
        if seg_id < 0:
            raise NBestFormatError(line_no, f"negative segment id {seg_id}")
        features = _parse_features(fields[2], line_no)
        if names is None:
            names = frozenset(features)
        elif frozenset(features) != names:
            raise NBestFormatError(
                line_no,
                f"inconsistent feature names: {sorted(features)} vs {sorted(names)}",
            )
        hyp = Hypothesis(seg_id, tuple(fields[1].split()), features)
        bucket = by_segment.setdefault(seg_id, [])
        keys = seen.setdefault(seg_id, set())
        key = hyp.key()
        if key not in keys:
            keys.add(key)
            bucket.append(hyp)
    return [NBestList(seg_id, tuple(hyps)) for seg_id, hyps in by_segment.items()]


def merge_nbest(base: NBestList, extra: NBestList) -> NBestList:
    """Append the hypotheses of ``extra``, dropping exact duplicates."""
    if base.segment_id != extra.segment_id:
        raise ValueError(f"segment mismatch: {base.segment_id} vs {extra.segment_id}")
    seen = {h.key() for h in base.hypotheses}
    merged = list(base.hypotheses)
    for hyp in extra.hypotheses:
        key = hyp.key()
        if key not in seen:
            seen.add(key)
            merged.append(hyp)
    return NBestList(base.segment_id, tuple(merged))


def write_nbest(lists: Iterable[NBestList], stream: IO[str]) -> None:
    """Serialize n-best lists; parse_nbest(write_nbest(x)) is a fixed point."""
    for nbest in lists:
        for hyp in nbest.hypotheses:
            feats = " ".join(
                f"{name}={hyp.features[name]:g}" for name in sorted(hyp.features)
            )
            stream.write(f"{nbest.segment_id} ||| {' '.join(hyp.tokens)} ||| {feats}\n")


def parse_references(streams: Sequence[Iterable[str]]) -> list[tuple[tuple[str, ...], ...]]:
    """Read parallel reference files into per-segment reference sets.

    Line i of stream j is reference j of segment i.  All streams must have
    the same number of lines and no line may be empty.
    """
    if not streams:
        raise ValueError("need at least one reference stream")
    columns = [[tuple(line.split()) for line in stream] for stream in streams]
    counts = {len(col) for col in columns}
    if len(counts) != 1:
        raise ValueError(f"ragged reference streams: line counts {sorted(counts)}")
    for j, col in enumerate(columns):
        for i, ref in enumerate(col):
            if not ref:
                raise ValueError(f"reference stream {j}, line {i + 1}: empty reference")
    return [tuple(col[i] for col in columns) for i in range(counts.pop())]


def build_segments(
    source: Iterable[str], ref_streams: Sequence[Iterable[str]]
) -> list[Segment]:
    """Assemble Segments from a source stream plus one stream per reference."""
    sources = [tuple(line.split()) for line in source]
    references = parse_references(ref_streams)
    if len(sources) != len(references):
        raise ValueError(
            f"source has {len(sources)} lines but references have {len(references)}"
        )
    return [
        Segment(i, src, refs) for i, (src, refs) in enumerate(zip(sources, references))
    ]


def read_weights(stream: Iterable[str]) -> WeightVector:
    """Read a ``name value`` weight file."""
    weights: WeightVector = {}
    for line_no, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"weights line {line_no}: expected 'name value'")
        value = float(parts[1])
        if not math.isfinite(value):
            raise ValueError(f"weights line {line_no}: non-finite value")
        weights[parts[0]] = value
    return weights


def write_weights(weights: Mapping[str, float], stream: IO[str]) -> None:
    for name in sorted(weights):
        stream.write(f"{name} {weights[name]!r}\n")
