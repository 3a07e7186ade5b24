"""Synthetic feature streams with known ground truth, plus evaluation."""

from .scene import GeneratedSequence, SyntheticScene
from .metrics import FrameMetrics, MetricsReport, evaluate

__all__ = [
    "GeneratedSequence",
    "SyntheticScene",
    "FrameMetrics",
    "MetricsReport",
    "evaluate",
]
