"""Deterministic workload generators for the bundled benchmarks.

Graphs are directed and stored as CSR (row offsets + column indices).
Two synthetic families cover the interesting extremes of nested
parallelism:

- ``powerlaw`` — heavy-tailed out-degrees with one forced hub, so a few
  parents own very large child grids while most own tiny ones;
- ``road`` — out-degrees drawn from [1, 8] with mean near 3, so every
  child grid is far smaller than a block and dynamic launches can never
  pay for themselves.

``hand`` is a fixed 10-vertex fixture whose BFS distances are written out
below and asserted in tests. ``sizes`` generates the child-grid sizes for
the launch-congestion microbenchmark: 90% below one warp, 10% in
[256, 1024].

Everything is reproducible: the same ``(kind, size, seed)`` triple always
yields the same dataset. Specs are written ``kind:size:seedN``
(e.g. ``powerlaw:300:seed1``), or just ``hand``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

UNREACHED = 1 << 30  # distance sentinel; survives += weight without overflow

GRAPH_KINDS = ("hand", "powerlaw", "road")
DATASET_KINDS = GRAPH_KINDS + ("sizes",)


@dataclass(frozen=True)
class Graph:
    """Directed graph in CSR form."""
    rowptr: tuple[int, ...]
    col: tuple[int, ...]

    @property
    def n(self) -> int:
        return len(self.rowptr) - 1

    @property
    def m(self) -> int:
        return len(self.col)

    def degrees(self) -> list[int]:
        return [self.rowptr[i + 1] - self.rowptr[i] for i in range(self.n)]

    def neighbors(self, u: int) -> tuple[int, ...]:
        return self.col[self.rowptr[u]:self.rowptr[u + 1]]


@dataclass(frozen=True)
class DatasetSpec:
    kind: str
    size: int
    seed: int
    text: str


def parse_spec(text: str) -> DatasetSpec:
    """Parse ``kind:size:seedN`` (or the bare fixture name ``hand``)."""
    parts = text.split(":")
    kind = parts[0]
    if kind not in DATASET_KINDS:
        raise ValueError(f"unknown dataset kind {kind!r} "
                         f"(expected one of {', '.join(DATASET_KINDS)})")
    if kind == "hand":
        if len(parts) != 1:
            raise ValueError("the hand fixture takes no size or seed")
        return DatasetSpec("hand", 10, 0, text)
    if len(parts) != 3:
        raise ValueError(f"dataset spec {text!r} is not kind:size:seedN")
    try:
        size = int(parts[1])
    except ValueError:
        raise ValueError(f"bad dataset size {parts[1]!r}") from None
    if not parts[2].startswith("seed"):
        raise ValueError(f"bad dataset seed {parts[2]!r} (expected seedN)")
    try:
        seed = int(parts[2][4:])
    except ValueError:
        raise ValueError(f"bad dataset seed {parts[2]!r} (expected seedN)")
    if size < 1:
        raise ValueError("dataset size must be at least 1")
    return DatasetSpec(kind, size, seed, text)


# ---------------------------------------------------------------------------
# hand fixture
# ---------------------------------------------------------------------------

# Adjacency (directed):
#   0 -> 1, 2        3 -> 4        6 -> 7
#   1 -> 3           4 -> 5        7 -> 8
#   2 -> 3, 6        5 -> 8        8, 9 -> (nothing; 9 is unreachable)
# BFS from 0 therefore reaches 8 at distance 4 via 2-6-7, not 5 via the
# longer 1-3-4-5 chain.
HAND_EDGES = ((0, 1), (0, 2), (1, 3), (2, 3), (2, 6), (3, 4), (4, 5),
              (5, 8), (6, 7), (7, 8))
HAND_BFS_DISTANCES = (0, 1, 1, 2, 3, 4, 2, 3, 4, UNREACHED)


# stable stream ids so every generator draws from an independent,
# process-independent stream (tuple hashes of strings are salted per run)
_STREAM_IDS = {"powerlaw": 1, "road": 2, "weights": 3, "sizes": 4}


def _rng(stream: str, *keys: int) -> np.random.Generator:
    seq = np.random.SeedSequence([_STREAM_IDS[stream], *keys])
    return np.random.default_rng(seq)


def _csr_from_edges(n: int, edges) -> Graph:
    rowptr = [0] * (n + 1)
    for u, _ in edges:
        rowptr[u + 1] += 1
    for i in range(n):
        rowptr[i + 1] += rowptr[i]
    col = [0] * len(edges)
    cursor = list(rowptr[:-1])
    for u, v in sorted(edges):
        col[cursor[u]] = v
        cursor[u] += 1
    return Graph(tuple(rowptr), tuple(col))


def hand_graph() -> Graph:
    return _csr_from_edges(10, HAND_EDGES)


# ---------------------------------------------------------------------------
# generated graphs
# ---------------------------------------------------------------------------

def powerlaw_graph(n: int, seed: int) -> Graph:
    """Heavy-tailed out-degrees (zipf, clipped) with vertex 0 a forced hub."""
    rng = _rng("powerlaw", n, seed)
    degrees = np.minimum(rng.zipf(1.8, size=n), n - 1 if n > 1 else 0)
    if n > 1:
        # guarantee the heavy tail at every size: the hub fans out to a
        # twentieth of the graph (>= 100 targets from 2,000 vertices up)
        degrees[0] = max(int(degrees.max()), min(n - 1, max(8, n // 20)))
    targets = rng.integers(0, n, size=int(degrees.sum()), dtype=np.int64)
    rowptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(degrees, out=rowptr[1:])
    return Graph(tuple(int(x) for x in rowptr),
                 tuple(int(x) for x in targets))


_ROAD_DEGREE_WEIGHTS = (0.25, 0.20, 0.15, 0.12, 0.10, 0.08, 0.06, 0.04)


def road_graph(n: int, seed: int) -> Graph:
    """Low, bounded out-degrees (1..8, mean ~3.3) with local targets."""
    rng = _rng("road", n, seed)
    if n == 1:
        return Graph((0, 0), ())
    degrees = rng.choice(np.arange(1, 9), size=n, p=_ROAD_DEGREE_WEIGHTS)
    hops = rng.integers(1, 50, size=int(degrees.sum()), dtype=np.int64)
    src = np.repeat(np.arange(n, dtype=np.int64), degrees)
    # fold hops into [1, n-1] so a hop that wraps a small ring never lands
    # back on its source
    targets = (src + 1 + (hops - 1) % (n - 1)) % n
    rowptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(degrees, out=rowptr[1:])
    return Graph(tuple(int(x) for x in rowptr),
                 tuple(int(x) for x in targets))


def make_graph(spec: DatasetSpec) -> Graph:
    if spec.kind == "hand":
        return hand_graph()
    if spec.kind == "powerlaw":
        return powerlaw_graph(spec.size, spec.seed)
    if spec.kind == "road":
        return road_graph(spec.size, spec.seed)
    raise ValueError(f"dataset kind {spec.kind!r} is not a graph")


def edge_weights(graph: Graph, seed: int) -> list[int]:
    """Per-edge positive weights, deterministic per (graph shape, seed)."""
    rng = _rng("weights", graph.n, graph.m, seed)
    return [int(w) for w in rng.integers(1, 10, size=graph.m)]


# ---------------------------------------------------------------------------
# launch-congestion microbenchmark sizes
# ---------------------------------------------------------------------------

def child_sizes(n: int, seed: int) -> list[int]:
    """Per-parent child-grid sizes: 90% in [0, 31], 10% in [256, 1024]."""
    rng = _rng("sizes", n, seed)
    small = rng.integers(0, 32, size=n)
    large = rng.integers(256, 1025, size=n)
    pick_large = rng.random(n) < 0.10
    return [int(large[i]) if pick_large[i] else int(small[i])
            for i in range(n)]
