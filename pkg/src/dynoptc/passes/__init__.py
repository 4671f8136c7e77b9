"""Source-to-source optimization passes over launch sites."""

from .aggregate import GRANULARITIES, apply_aggregate
from .coarsen import apply_coarsen
from .common import INF_THRESHOLD, AggGlue, ManifestEntry
from .threshold import apply_threshold

__all__ = ["GRANULARITIES", "INF_THRESHOLD", "AggGlue", "ManifestEntry",
           "apply_aggregate", "apply_coarsen", "apply_threshold"]
