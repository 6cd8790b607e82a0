"""MERT and PRO weight optimizers plus the accumulate-and-rerun controller.

MERT performs exact line search: along a search direction every hypothesis
score is a line in the step size, the upper envelope of those lines gives
the winning hypothesis per interval, and sweeping the merged breakpoints
with incrementally updated BLEU statistics finds the best step exactly.

PRO samples candidate pairs per segment ordered by sentence-level BLEU,
filters them through a minimum and maximum score gap (the cap on the gap
counters its known drift toward short outputs when tuning on long
sentences), fits a logistic classifier on feature differences and
interpolates the result into the current weights.

The controller repeats decode / accumulate / optimize for up to 25
iterations per rerun, deduplicating accumulated n-best entries, and
averages test metrics over reruns.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .corpus import Hypothesis, NBestList, Segment, WeightVector, dot, merge_nbest, rerank
from .metrics import (
    BleuStats,
    SmoothingScheme,
    brevity_penalty,
    corpus_bleu,
    segment_stats,
    sentence_bleu,
)
from .selection import hypothesis_diagnostics

NEG_INF = float("-inf")
POS_INF = float("inf")


@dataclass(frozen=True)
class MertConfig:
    random_restarts: int = 2
    n_random_directions: int = 8
    gamma_window: float = 10.0
    tolerance: float = 1e-6
    seed: int = 0


@dataclass(frozen=True)
class ProConfig:
    pairs_sampled_per_segment: int = 5000
    pairs_kept_per_segment: int = 50
    min_score_gap: float = 0.05  # in BLEU+1 points (0-100)
    max_score_gap: float = 10.0  # the difference cap; math.inf disables it
    interpolation: float = 0.1
    classifier_steps: int = 200
    classifier_learning_rate: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.min_score_gap <= self.max_score_gap:
            raise ValueError("need 0 < min_score_gap <= max_score_gap")
        if self.pairs_kept_per_segment > self.pairs_sampled_per_segment:
            raise ValueError("pairs_kept must not exceed pairs_sampled")


@dataclass(frozen=True)
class EvalMetrics:
    """Corpus-level scores of a weight vector on one dataset."""

    bleu: float
    bp: float
    hvb: float  # hypothesis verbosity: output words per source word
    lr: float  # length ratio: output words per effective reference word


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    weights: WeightVector
    metrics: EvalMetrics


@dataclass
class OptimizerTrace:
    """Per-iteration history of one tuning rerun."""

    rerun: int
    records: list[IterationRecord] = field(default_factory=list)


@dataclass
class RerunResult:
    rerun: int
    weights: WeightVector
    trace: OptimizerTrace
    test: EvalMetrics | None


@dataclass
class TuningResult:
    reruns: list[RerunResult]

    def mean_std(self, getter: Callable[[RerunResult], EvalMetrics]) -> tuple[EvalMetrics, EvalMetrics]:
        rows = [getter(r) for r in self.reruns]
        fields = ("bleu", "bp", "hvb", "lr")
        values = {f: np.array([getattr(m, f) for m in rows], dtype=float) for f in fields}
        mean = EvalMetrics(**{f: float(values[f].mean()) for f in fields})
        std = EvalMetrics(**{f: float(values[f].std()) for f in fields})
        return mean, std


# ---------------------------------------------------------------------------
# Shared helpers


def _axpy(w: Mapping[str, float], gamma: float, d: Mapping[str, float]) -> WeightVector:
    return {name: w[name] + gamma * d[name] for name in sorted(w)}


def evaluate_weights(
    segments: Sequence[Segment],
    nbests: Sequence[NBestList],
    weights: WeightVector,
    tie: str = "shorter",
) -> EvalMetrics:
    """Rerank every list with ``weights`` and score the top-1 output."""
    hyps = [rerank(nbest, weights).tokens for nbest in nbests]
    total = BleuStats.zero()
    for hyp, seg in zip(hyps, segments):
        total = total + segment_stats(hyp, seg.references, tie=tie)
    diag = hypothesis_diagnostics(segments, hyps, tie=tie)
    return EvalMetrics(
        bleu=corpus_bleu(total),
        bp=brevity_penalty(total.hyp_len, total.ref_len),
        hvb=diag.hypothesis_verbosity,
        lr=diag.length_ratio,
    )


# ---------------------------------------------------------------------------
# MERT


def _envelope_of_lines(
    slopes: Sequence[float], intercepts: Sequence[float]
) -> list[tuple[float, float, int]]:
    """Upper envelope of the lines ``intercept + gamma * slope``.

    Returns maximal intervals ``(left, right, line_index)`` covering the
    whole axis; a boundary belongs to the interval on its right, i.e. to
    the line with the greater slope.  Identical lines keep the lowest
    index.
    """
    order = sorted(range(len(slopes)), key=lambda i: (slopes[i], -intercepts[i], i))
    # For equal slopes only the highest intercept can ever win.
    candidates = []
    for i in order:
        if candidates and slopes[candidates[-1]] == slopes[i]:
            continue
        candidates.append(i)

    hull: list[tuple[int, float]] = []  # line index, left boundary
    for i in candidates:
        left = NEG_INF
        while hull:
            top, top_left = hull[-1]
            crossing = (intercepts[top] - intercepts[i]) / (slopes[i] - slopes[top])
            if crossing <= top_left:
                hull.pop()
            else:
                left = crossing
                break
        hull.append((i, left))

    intervals = []
    for pos, (idx, left) in enumerate(hull):
        right = hull[pos + 1][1] if pos + 1 < len(hull) else POS_INF
        intervals.append((left, right, idx))
    return intervals


def mert_envelope(
    nbest: NBestList, weights: WeightVector, direction: Mapping[str, float]
) -> list[tuple[float, float, int]]:
    """Upper envelope of hypothesis scores along ``direction``.

    The score of hypothesis h at step gamma is dot(w, f_h) + gamma *
    dot(d, f_h); see _envelope_of_lines for the interval conventions.
    """
    slopes = [dot(direction, h.features) for h in nbest.hypotheses]
    intercepts = [dot(weights, h.features) for h in nbest.hypotheses]
    return _envelope_of_lines(slopes, intercepts)


def _interval_midpoint(left: float, right: float, window: float) -> float:
    if left == NEG_INF and right == POS_INF:
        return 0.0
    if left == NEG_INF:
        return right - window
    if right == POS_INF:
        return left + window
    return 0.5 * (left + right)


def _bleu_of_row(row: Sequence[int]) -> float:
    """corpus_bleu over a flat stats row [match*4, total*4, hyp_len, ref_len]."""
    log_precision = 0.0
    for n in range(4):
        if row[n] == 0 or row[4 + n] == 0:
            return 0.0
        log_precision += math.log(row[n] / row[4 + n])
    c, r = row[8], row[9]
    if c == 0:
        return 0.0
    bp = 1.0 if c >= r else math.exp(1.0 - r / c)
    return bp * math.exp(log_precision / 4.0)


def _stats_row(stats: BleuStats) -> list[int]:
    return [*stats.match, *stats.total, stats.hyp_len, stats.ref_len]


class _MertProblem:
    """Feature matrices and stats rows for fast repeated line searches."""

    def __init__(
        self,
        nbests: Sequence[NBestList],
        stats: Sequence[Sequence[BleuStats]],
        names: Sequence[str],
    ):
        self.names = list(names)
        self.features = [
            np.array(
                [[h.features[n] for n in self.names] for h in nbest.hypotheses],
                dtype=float,
            )
            for nbest in nbests
        ]
        self.stats = [[_stats_row(s) for s in seg] for seg in stats]

    def vec(self, weights: Mapping[str, float]) -> np.ndarray:
        return np.array([weights[n] for n in self.names], dtype=float)

    def to_dict(self, vec: np.ndarray) -> WeightVector:
        return {n: float(v) for n, v in zip(self.names, vec)}

    def argmax_bleu(self, w: np.ndarray) -> float:
        total = [0] * 10
        for matrix, rows in zip(self.features, self.stats):
            winner = int(np.argmax(matrix @ w))
            row = rows[winner]
            for k in range(10):
                total[k] += row[k]
        return _bleu_of_row(total)

    def line_search(
        self, w: np.ndarray, d: np.ndarray, window: float
    ) -> tuple[float, float]:
        total = [0] * 10
        events: list[tuple[float, list[int], list[int]]] = []  # gamma, old row, new row
        for matrix, rows in zip(self.features, self.stats):
            envelope = _envelope_of_lines(matrix @ d, matrix @ w)
            first = envelope[0][2]
            row = rows[first]
            for k in range(10):
                total[k] += row[k]
            prev = first
            for left, _, idx in envelope[1:]:
                events.append((left, rows[prev], rows[idx]))
                prev = idx
        events.sort(key=lambda e: e[0])

        intervals: list[tuple[float, float, float]] = []
        left = NEG_INF
        pos = 0
        while True:
            right = events[pos][0] if pos < len(events) else POS_INF
            intervals.append((left, right, _bleu_of_row(total)))
            if pos >= len(events):
                break
            gamma = events[pos][0]
            while pos < len(events) and events[pos][0] == gamma:
                _, old, new = events[pos]
                for k in range(10):
                    total[k] += new[k] - old[k]
                pos += 1
            left = gamma

        # Incumbent: the interval containing gamma = 0, so that a search
        # unable to improve does not move the weights.
        best = next(iv for iv in intervals if iv[0] <= 0.0 < iv[1])
        for iv in intervals:
            if iv[2] > best[2]:
                best = iv
        return _interval_midpoint(best[0], best[1], window), best[2]

    def optimize(
        self, w0: np.ndarray, config: MertConfig, rng: np.random.Generator
    ) -> tuple[np.ndarray, float]:
        dim = len(self.names)
        axes = np.eye(dim)

        def optimize_from(start: np.ndarray) -> tuple[np.ndarray, float]:
            w = start.copy()
            bleu = self.argmax_bleu(w)
            while True:
                improved = False
                randoms = rng.normal(size=(config.n_random_directions, dim))
                norms = np.linalg.norm(randoms, axis=1, keepdims=True)
                directions = np.vstack([axes, randoms / np.where(norms == 0, 1.0, norms)])
                for direction in directions:
                    gamma, candidate = self.line_search(w, direction, config.gamma_window)
                    if candidate > bleu + config.tolerance:
                        w = w + gamma * direction
                        bleu = candidate
                        improved = True
                if not improved:
                    return w, bleu

        best_w, best_bleu = optimize_from(w0)
        for _ in range(config.random_restarts):
            w, bleu = optimize_from(rng.uniform(-1.0, 1.0, dim))
            if bleu > best_bleu + config.tolerance:
                best_w, best_bleu = w, bleu
        return best_w, best_bleu


def mert_line_search(
    nbests: Sequence[NBestList],
    stats: Sequence[Sequence[BleuStats]],
    weights: WeightVector,
    direction: Mapping[str, float],
    gamma_window: float = 10.0,
) -> tuple[float, float]:
    """Best step size along ``direction`` and the corpus BLEU it reaches.

    Merges all segments' envelope breakpoints and sweeps the intervals
    left to right, updating aggregate statistics incrementally.  Ties in
    BLEU keep the interval containing gamma = 0.
    """
    problem = _MertProblem(nbests, stats, sorted(weights))
    return problem.line_search(problem.vec(weights), problem.vec(direction), gamma_window)


def mert_iterate(
    nbests: Sequence[NBestList],
    stats: Sequence[Sequence[BleuStats]],
    w0: WeightVector,
    config: MertConfig = MertConfig(),
    rng: np.random.Generator | None = None,
) -> WeightVector:
    """Powell-style passes of exact line searches with random restarts.

    Each pass searches the coordinate axes plus fresh random unit
    directions and repeats until no direction improves corpus BLEU by
    more than the tolerance; restarts begin from uniform [-1, 1] weights
    and the best result wins.  Deterministic given the generator state.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    problem = _MertProblem(nbests, stats, sorted(w0))
    best, _ = problem.optimize(problem.vec(w0), config, rng)
    return problem.to_dict(best)


def evaluate_corpus(
    nbests: Sequence[NBestList],
    stats: Sequence[Sequence[BleuStats]],
    weights: WeightVector,
) -> float:
    """Corpus BLEU of the per-segment argmax selection under ``weights``."""
    total = BleuStats.zero()
    for nbest, seg_stats in zip(nbests, stats):
        scores = [dot(weights, h.features) for h in nbest.hypotheses]
        total = total + seg_stats[scores.index(max(scores))]
    return corpus_bleu(total)


# ---------------------------------------------------------------------------
# PRO


def pro_sample_pairs(
    nbest: NBestList,
    scores: Sequence[float],
    config: ProConfig = ProConfig(),
    rng: np.random.Generator | None = None,
) -> list[tuple[Hypothesis, Hypothesis]]:
    """Sample (better, worse) hypothesis pairs for one segment.

    ``scores`` are sentence-level scores in points (0-100).  Uniformly
    drawn pairs survive when their score gap is above ``min_score_gap``
    and at most ``max_score_gap``; the up-to-``pairs_kept`` distinct pairs
    with the largest gaps are returned, better hypothesis first.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    n = len(nbest.hypotheses)
    if len(scores) != n:
        raise ValueError(f"{n} hypotheses but {len(scores)} scores")
    if n < 2:
        return []

    draws = rng.integers(0, n, size=(config.pairs_sampled_per_segment, 2))
    score_arr = np.asarray(scores, dtype=float)
    gaps = score_arr[draws[:, 0]] - score_arr[draws[:, 1]]
    keep = (np.abs(gaps) > config.min_score_gap) & (np.abs(gaps) <= config.max_score_gap)

    ordered: dict[tuple[int, int], float] = {}
    for (a, b), gap in zip(draws[keep], gaps[keep]):
        pair = (int(a), int(b)) if gap > 0 else (int(b), int(a))
        if pair not in ordered:
            ordered[pair] = abs(float(gap))
    ranked = sorted(ordered.items(), key=lambda item: -item[1])
    return [
        (nbest.hypotheses[better], nbest.hypotheses[worse])
        for (better, worse), _ in ranked[: config.pairs_kept_per_segment]
    ]


def _stable_sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def train_pairwise_classifier(
    pairs: Sequence[tuple[Hypothesis, Hypothesis]],
    feature_names: Sequence[str],
    config: ProConfig = ProConfig(),
) -> WeightVector | None:
    """Logistic regression on feature differences, from zero weights.

    Each pair contributes two mirrored signed examples.  Plain full-batch
    gradient descent with the configured step count and learning rate; no
    regularization.  Returns None for an empty training set (a no-op
    iteration for the controller).
    """
    if not pairs:
        return None
    names = sorted(feature_names)
    rows = np.array(
        [
            [better.features[name] - worse.features[name] for name in names]
            for better, worse in pairs
        ],
        dtype=float,
    )
    # Mirrored examples (-x with label -1) double every gradient term, so
    # training on the positive rows with a mean gradient is identical.
    w = np.zeros(len(names))
    for _ in range(config.classifier_steps):
        margins = rows @ w
        grad = -(rows.T @ _stable_sigmoid(-margins)) / len(rows)
        w -= config.classifier_learning_rate * grad
    return {name: float(v) for name, v in zip(names, w)}


# ---------------------------------------------------------------------------
# Controller


@dataclass
class DecodingTask:
    """A tuning problem: segments plus a fixed candidate pool per segment.

    ``decode`` plays the role of the decoder: it re-scores each pool with
    the current weights and emits the top-``size`` candidates.
    """

    segments: list[Segment]
    pools: list[NBestList]
    initial_weights: WeightVector

    def __post_init__(self):
        if len(self.segments) != len(self.pools):
            raise ValueError("segments and pools must align")
        for seg, pool in zip(self.segments, self.pools):
            if seg.id != pool.segment_id:
                raise ValueError(f"segment {seg.id} paired with pool {pool.segment_id}")

    @property
    def feature_names(self) -> list[str]:
        return sorted(self.initial_weights)

    def decode(self, weights: WeightVector, size: int) -> list[NBestList]:
        out = []
        for pool in self.pools:
            scores = [dot(weights, h.features) for h in pool.hypotheses]
            order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
            out.append(
                NBestList(pool.segment_id, tuple(pool.hypotheses[i] for i in order[:size]))
            )
        return out


MAX_ITERATIONS = 25


def run_tuning(
    task: DecodingTask,
    optimizer: str,
    scheme: SmoothingScheme = SmoothingScheme.PLUS_ONE,
    iterations: int = MAX_ITERATIONS,
    nbest_size: int = 1000,
    reruns: int = 3,
    seed: int = 0,
    mert_config: MertConfig = MertConfig(),
    pro_config: ProConfig = ProConfig(),
    test_task: DecodingTask | None = None,
    weight_tolerance: float = 1e-6,
    tie: str = "shorter",
) -> TuningResult:
    """Run the full accumulate-and-rerun loop for several reruns.

    Each rerun owns an RNG stream derived from (seed, rerun index), runs
    up to ``iterations`` decode/optimize rounds with deduplicated n-best
    accumulation, and stops early once weights move less than
    ``weight_tolerance`` in max-norm.  Equal seeds give identical results.
    """
    if optimizer not in ("mert", "pro"):
        raise ValueError(f"unknown optimizer {optimizer!r}")
    if not 1 <= iterations <= MAX_ITERATIONS:
        raise ValueError(f"iterations must be in 1..{MAX_ITERATIONS}")

    results = []
    for rerun in range(reruns):
        rng = np.random.default_rng([seed, rerun])
        weights = dict(task.initial_weights)
        accumulated: list[NBestList] = []
        stats: list[list[BleuStats]] = []
        scores: list[list[float]] = []
        trace = OptimizerTrace(rerun=rerun)

        for iteration in range(1, iterations + 1):
            fresh = task.decode(weights, nbest_size)
            if not accumulated:
                accumulated = list(fresh)
            else:
                accumulated = [merge_nbest(a, f) for a, f in zip(accumulated, fresh)]
            for seg_pos, nbest in enumerate(accumulated):
                if seg_pos >= len(stats):
                    stats.append([])
                    scores.append([])
                refs = task.segments[seg_pos].references
                for hyp in nbest.hypotheses[len(stats[seg_pos]) :]:
                    stats[seg_pos].append(segment_stats(hyp.tokens, refs, tie=tie))
                    if optimizer == "pro":
                        scores[seg_pos].append(
                            100.0 * sentence_bleu(hyp.tokens, refs, scheme, tie=tie)
                        )

            if optimizer == "mert":
                new_weights = mert_iterate(accumulated, stats, weights, mert_config, rng)
            else:
                pairs = []
                for seg_pos, nbest in enumerate(accumulated):
                    pairs.extend(pro_sample_pairs(nbest, scores[seg_pos], pro_config, rng))
                direction = train_pairwise_classifier(pairs, task.feature_names, pro_config)
                if direction is None:
                    new_weights = dict(weights)
                else:
                    psi = pro_config.interpolation
                    new_weights = {
                        name: (1.0 - psi) * weights[name] + psi * direction[name]
                        for name in sorted(weights)
                    }

            delta = max(abs(new_weights[n] - weights[n]) for n in weights)
            weights = new_weights
            trace.records.append(
                IterationRecord(
                    iteration=iteration,
                    weights=dict(weights),
                    metrics=evaluate_weights(task.segments, accumulated, weights, tie=tie),
                )
            )
            if delta < weight_tolerance:
                break

        test = (
            evaluate_weights(test_task.segments, test_task.pools, weights, tie=tie)
            if test_task is not None
            else None
        )
        results.append(RerunResult(rerun=rerun, weights=weights, trace=trace, test=test))
    return TuningResult(reruns=results)
