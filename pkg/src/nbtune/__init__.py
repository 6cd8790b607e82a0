"""nbtune: tuning log-linear n-best reranking weights with MERT and PRO,
BLEU metrics with smoothing variants, and length-based tuning-set
selection, plus a synthetic harness for optimizer/length experiments."""

__version__ = "0.1.0"
