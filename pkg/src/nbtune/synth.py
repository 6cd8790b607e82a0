"""Synthetic tasks: a desk-scale stand-in for decoder plus corpora.

A task holds disjoint tuning and test splits.  Each segment gets a source
of configurable length, references whose length follows a linear
verbosity model vb(L) = a + b*L, and a fixed candidate pool.  Candidates
sit at configurable lengths relative to the reference; their token
overlap with the reference peaks near ``quality_peak`` times the
reference length and falls off per token of deviation, so choosing output
length always trades against n-gram quality.  Features are the exact word
penalty -|hyp|, the clipped unigram overlap, and seeded noise features.

Re-scoring a pool with the current weights and keeping the top slice is
what "decoding" means here; iteration-level behaviour of the optimizers
is preserved while everything stays deterministic under the config seed.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .corpus import (
    Hypothesis,
    NBestList,
    Segment,
    WeightVector,
    build_segments,
    parse_nbest,
    rerank,
    write_nbest,
)
from .metrics import clipped_matches
from .optimizers import DecodingTask
from .selection import dataset_stats

GENRES = ("bn", "nw", "wb")

# Genre mix per source-length band; mimics newswire dominating the longer
# sentences so that length selection skews the genre distribution.
_GENRE_PROBS = {
    "short": (0.15, 0.25, 0.60),
    "mid": (0.10, 0.45, 0.45),
    "long": (0.05, 0.65, 0.30),
}


@dataclass(frozen=True)
class SynthConfig:
    n_segments: int = 200
    source_length_range: tuple[int, int] = (4, 40)
    verbosity_base: float = 0.9  # a in vb(L) = a + b*L
    verbosity_slope: float = 0.005  # b; > 0 means longer sources are more verbose
    n_references: int = 1
    candidates_per_segment: int = 20
    length_spread: tuple[float, ...] = (0.7, 0.85, 1.0, 1.15, 1.3)
    quality_peak: float = 0.85  # overlap peaks at this fraction of the reference length
    overlap_base: float = 0.75  # overlap fraction at the peak
    overlap_falloff: float = 0.03  # overlap fraction lost per token away from the peak
    overlap_noise: float = 0.08
    n_noise_features: int = 2
    noise_scale: float = 0.5
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.source_length_range
        if not 1 <= lo <= hi:
            raise ValueError(f"bad source length range {self.source_length_range}")
        if self.n_references not in (1, 4):
            raise ValueError(f"n_references must be 1 or 4, got {self.n_references}")
        if not self.length_spread or any(s <= 0 for s in self.length_spread):
            raise ValueError("length_spread entries must be positive")
        if self.n_segments < 1 or self.candidates_per_segment < 1:
            raise ValueError("need at least one segment and one candidate")

    def verbosity_at(self, source_length: int) -> float:
        return self.verbosity_base + self.verbosity_slope * source_length

    def feature_names(self) -> list[str]:
        return sorted(["wp", "overlap"] + [f"noise{k}" for k in range(self.n_noise_features)])


@dataclass
class SynthTask:
    """Generated tuning and test splits plus the weights that made them."""

    config: SynthConfig
    oracle_weights: WeightVector
    tuning_segments: list[Segment]
    tuning_pools: list[NBestList]
    tuning_genres: list[str]
    test_segments: list[Segment]
    test_pools: list[NBestList]
    test_genres: list[str]

    def initial_weights(self) -> WeightVector:
        return {name: 0.0 for name in self.config.feature_names()}

    def tuning_task(self) -> DecodingTask:
        return DecodingTask(self.tuning_segments, self.tuning_pools, self.initial_weights())

    def test_task(self) -> DecodingTask:
        return DecodingTask(self.test_segments, self.test_pools, self.initial_weights())


def _genre_for(length: int, config: SynthConfig, rng: np.random.Generator) -> str:
    lo, hi = config.source_length_range
    band = 0.0 if hi == lo else (length - lo) / (hi - lo)
    if band < 1 / 3:
        probs = _GENRE_PROBS["short"]
    elif band < 2 / 3:
        probs = _GENRE_PROBS["mid"]
    else:
        probs = _GENRE_PROBS["long"]
    return GENRES[rng.choice(len(GENRES), p=probs)]


def _make_segment(
    seg_id: int, config: SynthConfig, rng: np.random.Generator
) -> tuple[Segment, NBestList, str]:
    lo, hi = config.source_length_range
    length = int(rng.integers(lo, hi + 1))
    target = max(1, round(config.verbosity_at(length) * length))
    source = tuple(f"s{seg_id}_{t}" for t in range(length))

    if config.n_references == 1:
        ref_lengths = [target]
    else:
        ref_lengths = [
            max(1, round(target * (1.0 + rng.uniform(-0.1, 0.1))))
            for _ in range(config.n_references)
        ]
    references = tuple(
        tuple(f"t{seg_id}_{t}" for t in range(n)) for n in ref_lengths
    )
    genre = _genre_for(length, config, rng)

    peak_len = max(1, round(config.quality_peak * target))
    lo_rel, hi_rel = min(config.length_spread), max(config.length_spread)
    hypotheses = []
    for cand in range(config.candidates_per_segment):
        # First candidates sit exactly on the spread anchors; the rest fill
        # the range in, so output length is controllable at fine grain.
        if cand < len(config.length_spread):
            rel = config.length_spread[cand]
        else:
            rel = float(rng.uniform(lo_rel, hi_rel))
        hyp_len = max(1, round(rel * target))
        cap = min(hyp_len, target)
        overlap_frac = (
            config.overlap_base
            - config.overlap_falloff * abs(hyp_len - peak_len)
            + rng.normal(0.0, config.overlap_noise)
        )
        matched = int(np.clip(round(overlap_frac * cap), 0, cap))
        tokens = tuple(f"t{seg_id}_{t}" for t in range(matched)) + tuple(
            f"x{seg_id}_{cand}_{k}" for k in range(hyp_len - matched)
        )
        features = {
            "wp": -float(hyp_len),
            "overlap": float(clipped_matches(tokens, references, 1)),
        }
        for k in range(config.n_noise_features):
            features[f"noise{k}"] = float(rng.normal(0.0, config.noise_scale))
        hypotheses.append(Hypothesis(seg_id, tokens, features))

    segment = Segment(seg_id, source, references)
    return segment, NBestList(seg_id, tuple(hypotheses)), genre


def generate_task(config: SynthConfig) -> SynthTask:
    """Build disjoint tuning and test splits; bit-stable under the seed."""
    rng = np.random.default_rng(config.seed)
    oracle = {name: 0.0 for name in config.feature_names()}
    oracle["overlap"] = 1.0

    splits = []
    for split in range(2):
        segments, pools, genres = [], [], []
        for i in range(config.n_segments):
            seg, pool, genre = _make_segment(split * config.n_segments + i, config, rng)
            segments.append(seg)
            pools.append(pool)
            genres.append(genre)
        splits.append((segments, pools, genres))

    return SynthTask(
        config=config,
        oracle_weights=oracle,
        tuning_segments=splits[0][0],
        tuning_pools=splits[0][1],
        tuning_genres=splits[0][2],
        test_segments=splits[1][0],
        test_pools=splits[1][1],
        test_genres=splits[1][2],
    )


def expressiveness_check(task: SynthTask, n_points: int = 50, span: float = 10.0) -> bool:
    """Can the word penalty alone steer corpus verbosity far enough?

    Sweeps the wp weight (all other weights at the oracle values) and
    requires hypothesis verbosity to move monotonically and to cover at
    least [0.8, 1.2] times the tuning-set verbosity.
    """
    vb = dataset_stats(task.tuning_segments).verbosity
    src_total = sum(len(s.source_tokens) for s in task.tuning_segments)
    curve = []
    for gamma in np.linspace(-span, span, n_points):
        weights = dict(task.oracle_weights)
        weights["wp"] = float(gamma)
        hyp_total = sum(len(rerank(pool, weights).tokens) for pool in task.tuning_pools)
        curve.append(hyp_total / src_total)
    # Raising wp can only shorten the winner, so the curve must fall.
    monotone = all(b <= a + 1e-12 for a, b in zip(curve, curve[1:]))
    return monotone and min(curve) <= 0.8 * vb and max(curve) >= 1.2 * vb


# ---------------------------------------------------------------------------
# On-disk format: corpus files per split plus a JSON manifest.


def _write_split(
    prefix: Path, segments: list[Segment], pools: list[NBestList], genres: list[str]
) -> None:
    with open(f"{prefix}.src", "w", encoding="utf-8") as fh:
        for seg in segments:
            fh.write(" ".join(seg.source_tokens) + "\n")
    n_refs = len(segments[0].references)
    for j in range(n_refs):
        with open(f"{prefix}.ref{j}", "w", encoding="utf-8") as fh:
            for seg in segments:
                fh.write(" ".join(seg.references[j]) + "\n")
    with open(f"{prefix}.nbest", "w", encoding="utf-8") as fh:
        renumbered = [
            NBestList(
                pos,
                tuple(
                    Hypothesis(pos, h.tokens, h.features) for h in pool.hypotheses
                ),
            )
            for pos, pool in enumerate(pools)
        ]
        write_nbest(renumbered, fh)
    with open(f"{prefix}.genres", "w", encoding="utf-8") as fh:
        fh.write("\n".join(genres) + "\n")


def write_task(task: SynthTask, out_dir: str | Path) -> None:
    """Write both splits in the corpus file formats plus manifest.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_split(out / "tune", task.tuning_segments, task.tuning_pools, task.tuning_genres)
    _write_split(out / "test", task.test_segments, task.test_pools, task.test_genres)
    manifest = {
        "config": asdict(task.config),
        "oracle_weights": task.oracle_weights,
        "n_references": task.config.n_references,
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_split(prefix: Path, n_refs: int) -> tuple[list[Segment], list[NBestList], list[str]]:
    with open(f"{prefix}.src", encoding="utf-8") as fh:
        source_lines = fh.readlines()
    ref_streams = []
    for j in range(n_refs):
        with open(f"{prefix}.ref{j}", encoding="utf-8") as fh:
            ref_streams.append(fh.readlines())
    segments = build_segments(source_lines, ref_streams)
    with open(f"{prefix}.nbest", encoding="utf-8") as fh:
        pools = parse_nbest(fh)
    if len(pools) != len(segments):
        raise ValueError(f"{prefix}: {len(segments)} segments but {len(pools)} n-best lists")
    genres_path = Path(f"{prefix}.genres")
    genres = (
        genres_path.read_text(encoding="utf-8").split()
        if genres_path.exists()
        else ["unknown"] * len(segments)
    )
    return segments, pools, genres


def read_task(task_dir: str | Path) -> SynthTask:
    """Load a task previously written by write_task."""
    root = Path(task_dir)
    with open(root / "manifest.json", encoding="utf-8") as fh:
        manifest = json.load(fh)
    raw = dict(manifest["config"])
    raw["source_length_range"] = tuple(raw["source_length_range"])
    raw["length_spread"] = tuple(raw["length_spread"])
    config = SynthConfig(**raw)
    tune = _read_split(root / "tune", config.n_references)
    test = _read_split(root / "test", config.n_references)
    return SynthTask(
        config=config,
        oracle_weights=dict(manifest["oracle_weights"]),
        tuning_segments=tune[0],
        tuning_pools=tune[1],
        tuning_genres=tune[2],
        test_segments=test[0],
        test_pools=test[1],
        test_genres=test[2],
    )
