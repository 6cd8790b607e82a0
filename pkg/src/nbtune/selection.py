"""Length-based tuning-set selection and dataset/output diagnostics.

Selection sorts segments by source token count (stable, ascending) and
keeps a fraction: the shortest block, the centered middle block, the
longest block, or a seeded random sample.  Diagnostics cover dataset
verbosity, hypothesis verbosity, length ratio and the usual correlation
and divergence helpers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from .corpus import Segment
from .metrics import brevity_penalty, effective_ref_length


class LengthCondition(Enum):
    SHORTEST = "shortest"
    MIDDLE = "middle"
    LONGEST = "longest"
    CUTOFF_LONGEST = "cutoff-longest"
    RANDOM = "random"


@dataclass(frozen=True)
class SelectionSpec:
    """A length condition plus the fraction of segments to keep.

    RANDOM draws uniformly without replacement using ``seed``; the other
    conditions ignore it.  CUTOFF_LONGEST selects like LONGEST and exists
    so sweep output can be told apart from a plain longest split.
    """

    condition: LengthCondition
    fraction: float
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.fraction <= 1.0:
            raise ValueError(f"fraction must be in (0, 1], got {self.fraction}")


@dataclass(frozen=True)
class DatasetStats:
    n_segments: int
    n_source_tokens: int
    mean_source_length: float
    verbosity: float


@dataclass(frozen=True)
class LengthDiagnostics:
    """Corpus-level length behaviour of a set of top-1 hypotheses."""

    hypothesis_verbosity: float  # output words per source word
    length_ratio: float  # output words per effective reference word
    bp: float


def _kept_count(n: int, fraction: float) -> int:
    return max(1, int(math.floor(n * fraction + 0.5)))


def select_by_length(
    segments: Sequence[Segment], spec: SelectionSpec
) -> list[Segment]:
    """Keep round(n * fraction) segments chosen by source length.

    Sorting is ascending by source token count and stable in the original
    order; the selected subset is returned in original document order.
    """
    if not segments:
        raise ValueError("empty input")
    n = len(segments)
    k = _kept_count(n, spec.fraction)

    if spec.condition is LengthCondition.RANDOM:
        rng = np.random.default_rng(spec.seed)
        picked = sorted(rng.choice(n, size=k, replace=False).tolist())
        return [segments[i] for i in picked]

    order = sorted(range(n), key=lambda i: len(segments[i].source_tokens))
    if spec.condition is LengthCondition.SHORTEST:
        chosen = order[:k]
    elif spec.condition is LengthCondition.MIDDLE:
        start = (n - k) // 2
        chosen = order[start : start + k]
    elif spec.condition in (LengthCondition.LONGEST, LengthCondition.CUTOFF_LONGEST):
        chosen = order[n - k :]
    else:  # pragma: no cover - enum is exhaustive
        raise ValueError(f"unknown condition {spec.condition}")
    return [segments[i] for i in sorted(chosen)]


def dataset_stats(segments: Sequence[Segment]) -> DatasetStats:
    """Token counts and verbosity (reference words per source word).

    With multiple references the per-segment reference length is the mean
    over references.
    """
    if not segments:
        raise ValueError("empty input")
    src_tokens = sum(len(s.source_tokens) for s in segments)
    ref_tokens = sum(
        sum(len(r) for r in s.references) / len(s.references) for s in segments
    )
    return DatasetStats(
        n_segments=len(segments),
        n_source_tokens=src_tokens,
        mean_source_length=src_tokens / len(segments),
        verbosity=ref_tokens / src_tokens,
    )


def hypothesis_diagnostics(
    segments: Sequence[Segment],
    hypotheses: Sequence[Sequence[str]],
    tie: str = "shorter",
) -> LengthDiagnostics:
    """Verbosity, length ratio and BP of aligned top-1 hypotheses."""
    if len(segments) != len(hypotheses):
        raise ValueError(
            f"{len(segments)} segments but {len(hypotheses)} hypotheses"
        )
    if not segments:
        raise ValueError("empty input")
    hyp_total = sum(len(h) for h in hypotheses)
    src_total = sum(len(s.source_tokens) for s in segments)
    ref_total = sum(
        effective_ref_length(len(h), [len(r) for r in s.references], tie=tie)
        for s, h in zip(segments, hypotheses)
    )
    return LengthDiagnostics(
        hypothesis_verbosity=hyp_total / src_total,
        length_ratio=hyp_total / ref_total,
        bp=brevity_penalty(hyp_total, ref_total),
    )


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    """Product-moment correlation; raises on zero variance instead of NaN."""
    if len(x) != len(y):
        raise ValueError(f"length mismatch: {len(x)} vs {len(y)}")
    if len(x) < 2:
        raise ValueError("need at least two points")
    xs = np.asarray(x, dtype=float)
    ys = np.asarray(y, dtype=float)
    dx = xs - xs.mean()
    dy = ys - ys.mean()
    vx = float(dx @ dx)
    vy = float(dy @ dy)
    if vx == 0.0 or vy == 0.0:
        raise ValueError("zero variance: correlation undefined")
    return float(dx @ dy) / math.sqrt(vx * vy)


def category_distribution(labels: Sequence[str]) -> dict[str, float]:
    """Empirical distribution of category labels, keys sorted."""
    if not labels:
        raise ValueError("empty input")
    counts: dict[str, int] = {}
    for label in labels:
        counts[label] = counts.get(label, 0) + 1
    return {label: counts[label] / len(labels) for label in sorted(counts)}


def kl_divergence(
    p: Mapping[str, float], q: Mapping[str, float], epsilon: float = 1e-6
) -> float:
    """KL divergence sum p ln(p/q) in nats over a shared category set.

    Both distributions get epsilon added to every category and are then
    renormalized, so zero-support categories stay finite.
    """
    if p.keys() != q.keys():
        raise ValueError(
            f"category mismatch: {sorted(p)} vs {sorted(q)}"
        )
    if not p:
        raise ValueError("empty distributions")
    names = sorted(p)
    ps = np.asarray([p[k] for k in names], dtype=float) + epsilon
    qs = np.asarray([q[k] for k in names], dtype=float) + epsilon
    if np.any(ps <= 0) or np.any(qs <= 0):
        raise ValueError("distributions must be non-negative (after smoothing)")
    ps /= ps.sum()
    qs /= qs.sum()
    return float(np.sum(ps * np.log(ps / qs)))
