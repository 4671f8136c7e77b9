"""Bundled nested-parallelism benchmarks.

Each benchmark exists in two source variants over identical buffers:

- the dynamic variant (``cdp_source``): every parent thread that owns work
  launches a child grid sized to that work;
- the serial variant (``nocdp_source``): the parent thread runs the same
  per-item statements in a plain loop.

Both variants write only through commutative or idempotent atomics
(``atomic_add``, ``atomic_max``, discovery/lowering via ``atomic_cas``), so
the listed ``outputs`` buffers are schedule-invariant and must match
element-exact between the two variants and across every transformation of
the dynamic one. That equality is the correctness baseline the harness
enforces.

Benchmarks:

- ``bfs`` — level-synchronous breadth-first search over a CSR graph. The
  host relaunches ``main`` once per level until no new vertex is
  discovered. A vertex's distance is set exactly once with a single
  compare-and-swap against the UNREACHED sentinel, so the distance a vertex
  ends up with is the level that first reached it regardless of thread
  order. ``counts[v]`` accumulates one per edge examined into ``v``.
- ``sssp`` — Bellman-Ford-style relaxation rounds. Each round relaxes every
  vertex's out-edges from its round-start distance; a CAS loop lowers
  ``dist[v]`` monotonically. Rounds repeat until a full round changes
  nothing, which certifies ``dist[v] <= dist[u] + w(u,v)`` for every edge,
  i.e. exact shortest distances whatever the interleaving.
- ``manylaunch`` — launch-congestion microbenchmark: parent ``i`` owns a
  child grid of ``sizes[i]`` threads; thread ``j`` adds ``j + 1`` into
  ``out[i]`` and one into ``total[0]``, so ``out[i]`` must equal
  ``sizes[i] * (sizes[i] + 1) / 2`` and ``total[0]`` the sum of sizes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from .graphs import (DatasetSpec, Graph, UNREACHED, child_sizes, edge_weights,
                     make_graph, parse_spec)

BLOCK = 32  # parent block size shared by every benchmark driver


@dataclass(frozen=True)
class Workload:
    """A dataset resolved into initial buffer contents."""
    spec: DatasetSpec
    buffers: dict[str, list]
    n: int           # number of parent work items (sizes main's grid)
    payload: object  # generator artifacts, for oracle checks in tests


@dataclass(frozen=True)
class Benchmark:
    name: str
    cdp_source: str
    nocdp_source: str
    outputs: tuple[str, ...]
    prepare: Callable[[DatasetSpec], Workload]
    # drive(machine, launch, workload): run the host-side iteration using
    # ``launch(kernel, grid, block, args)`` for every host launch
    drive: Callable[[object, Callable, Workload], None]

    def workload(self, spec_text: str) -> Workload:
        return self.prepare(parse_spec(spec_text))


def _grid_for(n: int) -> int:
    return -(-n // BLOCK)


# ---------------------------------------------------------------------------
# bfs
# ---------------------------------------------------------------------------

_BFS_DECLS = """\
global int rowptr[];
global int col[];
global int dist[];
global int counts[];
global int changed[];
"""

# In both variants one edge examination counts itself, then discovers the
# target if untouched; the CAS fires at most once per vertex over the whole
# run, so dist is first-touch == level + 1 whatever the thread order.

BFS_CDP = _BFS_DECLS + """
kernel void visit(int *col_, int *dist_, int *counts_, int *changed_,
                  int start, int deg, int level) {
    int e = blockIdx.x * blockDim.x + threadIdx.x;
    if (e < deg) {
        int v = col_[start + e];
        atomic_add(counts_, v, 1);
        int prev = atomic_cas(dist_, v, 1073741824, level + 1);
        if (prev == 1073741824) {
            atomic_max(changed_, 0, 1);
        }
    }
}

kernel void main(int *rowptr_, int *col_, int *dist_, int *counts_,
                 int *changed_, int n, int level) {
    int u = blockIdx.x * blockDim.x + threadIdx.x;
    if (u < n) {
        if (dist_[u] == level) {
            int start = rowptr_[u];
            int deg = rowptr_[u + 1] - start;
            if (deg > 0) {
                launch visit<<<(deg + 31) / 32, 32>>>(col_, dist_, counts_,
                                                      changed_, start, deg,
                                                      level);
            }
        }
    }
}
"""

BFS_NOCDP = _BFS_DECLS + """
kernel void main(int *rowptr_, int *col_, int *dist_, int *counts_,
                 int *changed_, int n, int level) {
    int u = blockIdx.x * blockDim.x + threadIdx.x;
    if (u < n) {
        if (dist_[u] == level) {
            int start = rowptr_[u];
            int deg = rowptr_[u + 1] - start;
            for (int e = 0; e < deg; e += 1) {
                int v = col_[start + e];
                atomic_add(counts_, v, 1);
                int prev = atomic_cas(dist_, v, 1073741824, level + 1);
                if (prev == 1073741824) {
                    atomic_max(changed_, 0, 1);
                }
            }
        }
    }
}
"""


def _bfs_prepare(spec: DatasetSpec) -> Workload:
    g = make_graph(spec)
    dist = [UNREACHED] * g.n
    dist[0] = 0
    return Workload(spec=spec, n=g.n, payload=g, buffers={
        "rowptr": list(g.rowptr),
        "col": list(g.col),
        "dist": dist,
        "counts": [0] * g.n,
        "changed": [0],
    })


def _bfs_drive(machine, launch, wl: Workload) -> None:
    grid = _grid_for(wl.n)
    for level in range(wl.n + 1):
        machine.set_buffer("changed", [0])
        launch("main", grid, BLOCK,
               (machine.buffer("rowptr"), machine.buffer("col"),
                machine.buffer("dist"), machine.buffer("counts"),
                machine.buffer("changed"), wl.n, level))
        machine.drain()
        if machine.buffer("changed")[0] == 0:
            return
    raise RuntimeError("bfs used more levels than vertices")


# ---------------------------------------------------------------------------
# sssp
# ---------------------------------------------------------------------------

_SSSP_DECLS = """\
global int rowptr[];
global int col[];
global int weight[];
global int dist[];
global int changed[];

// lock-free lowering: loop the CAS until this relaxation is no longer an
// improvement; a success both lowers the cell and flags the round as live
device void relax(int *dist_, int *changed_, int v, int alt) {
    int cur = dist_[v];
    while (alt < cur) {
        int prev = atomic_cas(dist_, v, cur, alt);
        if (prev == cur) {
            atomic_max(changed_, 0, 1);
            cur = alt;
        } else {
            cur = prev;
        }
    }
}
"""

SSSP_CDP = _SSSP_DECLS + """
kernel void relax_edges(int *col_, int *weight_, int *dist_, int *changed_,
                        int start, int deg, int du) {
    int e = blockIdx.x * blockDim.x + threadIdx.x;
    if (e < deg) {
        relax(dist_, changed_, col_[start + e], du + weight_[start + e]);
    }
}

kernel void main(int *rowptr_, int *col_, int *weight_, int *dist_,
                 int *changed_, int n) {
    int u = blockIdx.x * blockDim.x + threadIdx.x;
    if (u < n) {
        int du = dist_[u];
        if (du < 1073741824) {
            int start = rowptr_[u];
            int deg = rowptr_[u + 1] - start;
            if (deg > 0) {
                launch relax_edges<<<(deg + 31) / 32, 32>>>(col_, weight_,
                                                            dist_, changed_,
                                                            start, deg, du);
            }
        }
    }
}
"""

SSSP_NOCDP = _SSSP_DECLS + """
kernel void main(int *rowptr_, int *col_, int *weight_, int *dist_,
                 int *changed_, int n) {
    int u = blockIdx.x * blockDim.x + threadIdx.x;
    if (u < n) {
        int du = dist_[u];
        if (du < 1073741824) {
            int start = rowptr_[u];
            int deg = rowptr_[u + 1] - start;
            for (int e = 0; e < deg; e += 1) {
                relax(dist_, changed_, col_[start + e],
                      du + weight_[start + e]);
            }
        }
    }
}
"""


def _sssp_prepare(spec: DatasetSpec) -> Workload:
    g = make_graph(spec)
    # unit weights on the hand fixture so distances equal BFS levels
    w = [1] * g.m if spec.kind == "hand" else edge_weights(g, spec.seed)
    dist = [UNREACHED] * g.n
    dist[0] = 0
    return Workload(spec=spec, n=g.n, payload=(g, w), buffers={
        "rowptr": list(g.rowptr),
        "col": list(g.col),
        "weight": w,
        "dist": dist,
        "changed": [0],
    })


def _sssp_drive(machine, launch, wl: Workload) -> None:
    grid = _grid_for(wl.n)
    for _ in range(wl.n + 1):
        machine.set_buffer("changed", [0])
        launch("main", grid, BLOCK,
               (machine.buffer("rowptr"), machine.buffer("col"),
                machine.buffer("weight"), machine.buffer("dist"),
                machine.buffer("changed"), wl.n))
        machine.drain()
        if machine.buffer("changed")[0] == 0:
            return
    raise RuntimeError("sssp used more rounds than vertices")


# ---------------------------------------------------------------------------
# manylaunch
# ---------------------------------------------------------------------------

_ML_DECLS = """\
global int sizes[];
global int out[];
global int total[];
"""

MANYLAUNCH_CDP = _ML_DECLS + """
kernel void spawn(int *out_, int *total_, int s, int i) {
    int j = blockIdx.x * blockDim.x + threadIdx.x;
    if (j < s) {
        atomic_add(out_, i, j + 1);
        atomic_add(total_, 0, 1);
    }
}

kernel void main(int *sizes_, int *out_, int *total_, int n) {
    int i = blockIdx.x * blockDim.x + threadIdx.x;
    if (i < n) {
        int s = sizes_[i];
        if (s > 0) {
            launch spawn<<<(s + 31) / 32, 32>>>(out_, total_, s, i);
        }
    }
}
"""

MANYLAUNCH_NOCDP = _ML_DECLS + """
kernel void main(int *sizes_, int *out_, int *total_, int n) {
    int i = blockIdx.x * blockDim.x + threadIdx.x;
    if (i < n) {
        int s = sizes_[i];
        for (int j = 0; j < s; j += 1) {
            atomic_add(out_, i, j + 1);
            atomic_add(total_, 0, 1);
        }
    }
}
"""


def _manylaunch_prepare(spec: DatasetSpec) -> Workload:
    if spec.kind != "sizes":
        raise ValueError("manylaunch expects a sizes:<n>:seedN dataset")
    sizes = child_sizes(spec.size, spec.seed)
    return Workload(spec=spec, n=spec.size, payload=sizes, buffers={
        "sizes": list(sizes),
        "out": [0] * spec.size,
        "total": [0],
    })


def _manylaunch_drive(machine, launch, wl: Workload) -> None:
    launch("main", _grid_for(wl.n), BLOCK,
           (machine.buffer("sizes"), machine.buffer("out"),
            machine.buffer("total"), wl.n))
    machine.drain()


# ---------------------------------------------------------------------------
# registry
# ---------------------------------------------------------------------------

BENCHMARKS: dict[str, Benchmark] = {
    "bfs": Benchmark("bfs", BFS_CDP, BFS_NOCDP, ("dist", "counts"),
                     _bfs_prepare, _bfs_drive),
    "sssp": Benchmark("sssp", SSSP_CDP, SSSP_NOCDP, ("dist",),
                      _sssp_prepare, _sssp_drive),
    "manylaunch": Benchmark("manylaunch", MANYLAUNCH_CDP, MANYLAUNCH_NOCDP,
                            ("out", "total"), _manylaunch_prepare,
                            _manylaunch_drive),
}


def get_benchmark(name: str) -> Benchmark:
    try:
        return BENCHMARKS[name]
    except KeyError:
        raise ValueError(f"unknown benchmark {name!r} "
                         f"(expected one of {', '.join(BENCHMARKS)})") \
            from None
