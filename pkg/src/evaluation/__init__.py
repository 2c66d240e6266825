"""Evaluation metrics. Corpus benchmarks live in src.evaluation.benchmark."""

from src.evaluation.metrics import MetricsReport, evaluate_motion, procrustes_align

__all__ = [
    "MetricsReport",
    "evaluate_motion",
    "procrustes_align",
]
