"""Bundled benchmarks, dataset generators, and the parameter-sweep driver."""

from .benchmarks import BENCHMARKS, BLOCK, Benchmark, Workload, get_benchmark
from .graphs import (DatasetSpec, Graph, UNREACHED, child_sizes, edge_weights,
                     hand_graph, make_graph, parse_spec, powerlaw_graph,
                     road_graph, HAND_BFS_DISTANCES)
from .harness import (BenchConfig, EquivalenceError, load, run_benchmark,
                      run_config, run_reference, verify_outputs)
from .sweep import CSV_COLUMNS, default_grid, render_csv, sweep, write_csv

__all__ = [
    "BENCHMARKS", "BLOCK", "Benchmark", "Workload", "get_benchmark",
    "DatasetSpec", "Graph", "UNREACHED", "child_sizes", "edge_weights",
    "hand_graph", "make_graph", "parse_spec", "powerlaw_graph", "road_graph",
    "HAND_BFS_DISTANCES",
    "BenchConfig", "EquivalenceError", "load", "run_benchmark", "run_config",
    "run_reference", "verify_outputs",
    "CSV_COLUMNS", "default_grid", "render_csv", "sweep", "write_csv",
]
