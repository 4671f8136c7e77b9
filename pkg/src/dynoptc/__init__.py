"""dynoptc: source-to-source optimizer and simulator for GPU-style
dynamic parallelism (thresholding, coarsening, launch aggregation)."""

__version__ = "0.1.0"
