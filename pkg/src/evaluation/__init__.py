"""Metrics and experiment harnesses.

Only the metric functions are imported eagerly; the experiment runner pulls in
the whole pipeline and lives in ``src.evaluation.experiment``.
"""

from .metrics import MeanMetrics, MetricReport, cohen_kappa, compute_metrics, mean_metrics, to_percent

__all__ = ["MeanMetrics", "MetricReport", "cohen_kappa", "compute_metrics", "mean_metrics", "to_percent"]
