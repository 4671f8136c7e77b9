"""Deterministic device simulator.

Grids, blocks, and the pending-launch queue are driven by a single event
heap. Blocks execute atomically at their scheduled start time (all memory
effects apply in schedule order) while their *timing* overlaps: a block
occupies an SM slot for its busy time — the sum over barrier segments of the
maximum per-thread segment cost — plus a fixed scheduling overhead.

Device-side launches pay a launch latency on the issuing thread and enter a
bounded FIFO queue drained by a single server (one departure per service
interval). Host-side launches bypass the queue, cost nothing, and their
blocks are ready immediately. Launches with an empty configuration
(``grid*block == 0``) are suppressed entirely.

A grid completes when all its blocks and all its descendant grids have
completed; completion hooks fire at that instant (used for host-side glue).

In fence-checking mode every buffer cell tracks its last writer; a plain
cross-block read of a value that was never published (by a fence, an atomic
update, a launch, or grid completion) traps.
"""

from __future__ import annotations

import heapq
import random
from collections import deque
from dataclasses import dataclass, field

from ..lang.ast import Program
from .compile import CompiledProgram
from .cost import CostParams
from .report import SimReport, memory_digest

_W = 4294967295
_B32 = 2147483648


def _wrap32(v: int) -> int:
    return (v + _B32 & _W) - _B32


class SimTrap(Exception):
    def __init__(self, kind: str, message: str, kernel: str = "", line: int = 0):
        self.kind = kind
        self.message = message
        self.kernel = kernel
        self.line = line
        where = f" [{kernel}:{line}]" if kernel else ""
        super().__init__(f"{kind}: {message}{where}")


@dataclass(slots=True)
class _Grid:
    gid: int
    kernel: str
    gdim: int
    bdim: int
    args: tuple
    base: int  # default phase slot: 0 = parent (host-launched), 4 = child
    parent: int | None
    outstanding: int  # unfinished blocks + uncompleted child grids
    hooks: list = field(default_factory=list)
    completed: bool = False


@dataclass(slots=True)
class _Pending:
    grid: _Grid
    t_issue: int


class Machine:
    def __init__(self, program: Program, cost: CostParams | None = None,
                 checked: bool = False, schedule_seed: int | None = None,
                 compiled: CompiledProgram | None = None):
        self.program = program
        self.cost = cost if cost is not None else CostParams()
        self.checked = checked
        self._rng = (random.Random(schedule_seed)
                     if schedule_seed is not None else None)
        self.compiled = compiled if compiled is not None else CompiledProgram(program)

        self.buffers: dict[str, list] = {}
        self.buffer_kinds: dict[str, str] = {}
        for g in program.globals:
            self.buffer_kinds[g.name] = g.elem
            if g.extent is not None:
                init = 0.0 if g.elem == "float" else 0
                self.buffers[g.name] = [init] * g.extent

        self._argkinds: dict[str, tuple] = {}
        for k in program.kernels:
            if k.kind == "kernel":
                self._argkinds[k.name] = tuple(
                    None if p.is_buffer else p.kind for p in k.params)

        # counters
        self.num_launches = 0
        self.host_launches = 0
        self.blocks_scheduled = 0
        self.max_pending_depth = 0
        self._phase_instr = [0, 0, 0, 0, 0]
        self._lat_time = 0
        self._cdp_time = 0
        self._makespan = 0

        # scheduling state
        self._now = 0
        self._seq = 0
        self._heap: list = []
        self._free = self.cost.max_concurrent_blocks
        self._ready_heap: list = []
        self._ready_list: list = []  # randomized mode
        self._pend: deque[_Pending] = deque()
        self._depart_scheduled = False
        self._last_leave = 0
        self._grids: dict[int, _Grid] = {}
        self._next_gid = 0

        # execution context (set while a block runs)
        self._ctx_kernel = ""
        self._ctx_grid: _Grid | None = None

        # fence-checker state
        if checked:
            self._meta: dict[int, dict] = {}
            for name, buf in self.buffers.items():
                self._register_meta(name, buf)
            self._twrites: dict[tuple, list] = {}
            self._bwrites: dict[tuple, list] = {}
            self._gwrites: dict[int, list] = {}

        helpers = self._checked_helpers() if checked else self._fast_helpers()
        self._mk = self.compiled.instantiate(helpers)

    # -- buffers ---------------------------------------------------------------

    def set_buffer(self, name: str, values) -> None:
        if name not in self.buffer_kinds:
            raise KeyError(f"no global buffer named '{name}'")
        kind = self.buffer_kinds[name]
        conv = float if kind == "float" else int
        buf = [conv(v) for v in values]
        self.buffers[name] = buf
        if self.checked:
            self._register_meta(name, buf)

    def buffer(self, name: str) -> list:
        return self.buffers[name]

    def _buf_get(self, name: str) -> list:
        buf = self.buffers.get(name)
        if buf is None:
            raise SimTrap("unbound-buffer",
                          f"extern buffer '{name}' was never bound",
                          self._ctx_kernel)
        return buf

    def _register_meta(self, name: str, buf: list) -> None:
        self._meta[id(buf)] = {"name": name, "w": {}, "pub": set()}

    # -- launches ----------------------------------------------------------------

    def launch_host(self, kernel: str, grid: int, block: int, args=()) -> int | None:
        grid = int(grid)
        block = int(block)
        if grid < 0 or block < 0:
            raise SimTrap("launch-config",
                          f"negative launch configuration ({grid}, {block})",
                          kernel)
        if grid == 0 or block == 0:
            return None
        g = self._new_grid(kernel, grid, block, args, base=0, parent=None)
        self.host_launches += 1
        self._make_ready(g)
        return g.gid

    def on_grid_complete(self, gid: int, hook) -> None:
        g = self._grids[gid]
        if g.completed:
            hook(self)
        else:
            g.hooks.append(hook)

    def _new_grid(self, kernel: str, grid: int, block: int, args,
                  base: int, parent: int | None) -> _Grid:
        if kernel not in self._argkinds:
            raise SimTrap("launch-target", f"launch of unknown kernel '{kernel}'",
                          self._ctx_kernel)
        args = self._coerce_args(kernel, args)
        g = _Grid(gid=self._next_gid, kernel=kernel, gdim=grid, bdim=block,
                  args=args, base=base, parent=parent, outstanding=grid)
        self._next_gid += 1
        self._grids[g.gid] = g
        if parent is not None:
            self._grids[parent].outstanding += 1
        return g

    def _coerce_args(self, kernel: str, args) -> tuple:
        kinds = self._argkinds[kernel]
        if len(args) != len(kinds):
            raise SimTrap("launch-args",
                          f"kernel '{kernel}' takes {len(kinds)} argument(s), "
                          f"got {len(args)}", self._ctx_kernel)
        out = []
        for a, k in zip(args, kinds):
            if k is None:
                if not isinstance(a, list):
                    raise SimTrap("launch-args",
                                  f"kernel '{kernel}' expects a buffer argument",
                                  self._ctx_kernel)
                out.append(a)
            elif k == "float":
                out.append(float(a))
            elif k == "long":
                out.append(int(a))
            else:
                out.append(_wrap32(int(a)))
        return tuple(out)

    def _issue_device(self, callee: str, grid, block, args, line: int, tk) -> int:
        grid = int(grid)
        block = int(block)
        if grid < 0 or block < 0:
            raise SimTrap("launch-config",
                          f"negative launch configuration ({grid}, {block})",
                          self._ctx_kernel, line)
        if grid == 0 or block == 0:
            return 0
        if self.checked:
            self._publish_block((tk[0], tk[1]))
        parent = self._ctx_grid
        g = self._new_grid(callee, grid, block, args, base=4,
                           parent=parent.gid if parent else None)
        self.num_launches += 1
        if len(self._pend) >= self.cost.queue_capacity:
            raise SimTrap("queue-overflow",
                          f"pending launch queue exceeded capacity "
                          f"{self.cost.queue_capacity}",
                          self._ctx_kernel, line)
        self._pend.append(_Pending(grid=g, t_issue=self._now))
        if len(self._pend) > self.max_pending_depth:
            self.max_pending_depth = len(self._pend)
        if not self._depart_scheduled:
            self._schedule_depart()
        return self.cost.launch_latency

    def _schedule_depart(self) -> None:
        head = self._pend[0]
        leave = max(head.t_issue, self._last_leave) + self.cost.launch_service
        self._last_leave = leave
        self._push_event(leave, "depart", None)
        self._depart_scheduled = True

    # -- event loop ---------------------------------------------------------------

    def _push_event(self, t: int, kind: str, payload) -> None:
        heapq.heappush(self._heap, (t, self._seq, kind, payload))
        self._seq += 1

    def _make_ready(self, g: _Grid) -> None:
        if self._rng is None:
            for bx in range(g.gdim):
                heapq.heappush(self._ready_heap, (g.gid, bx))
        else:
            for bx in range(g.gdim):
                self._ready_list.append((g.gid, bx))

    def _pop_ready(self):
        if self._rng is None:
            return heapq.heappop(self._ready_heap)
        i = self._rng.randrange(len(self._ready_list))
        self._ready_list[i], self._ready_list[-1] = \
            self._ready_list[-1], self._ready_list[i]
        return self._ready_list.pop()

    def _ready_count(self) -> int:
        return len(self._ready_heap) + len(self._ready_list)

    def drain(self) -> None:
        """Run until every scheduled grid has completed."""
        self._schedule_blocks()
        while self._heap:
            t, _seq, kind, payload = heapq.heappop(self._heap)
            self._now = t
            if kind == "depart":
                self._handle_depart()
            else:  # block_done
                self._handle_block_done(payload)
            self._schedule_blocks()

    def _handle_depart(self) -> None:
        entry = self._pend.popleft()
        self._depart_scheduled = False
        self._make_ready(entry.grid)
        if self._pend:
            self._schedule_depart()

    def _handle_block_done(self, gid: int) -> None:
        self._free += 1
        if self._now > self._makespan:
            self._makespan = self._now
        self._grid_retire(self._grids[gid])

    def _grid_retire(self, g: _Grid) -> None:
        g.outstanding -= 1
        if g.outstanding == 0:
            g.completed = True
            if self.checked:
                self._publish_grid(g.gid)
            if self._now > self._makespan:
                self._makespan = self._now
            hooks, g.hooks = g.hooks, []
            for hook in hooks:
                hook(self)
            if g.parent is not None:
                self._grid_retire(self._grids[g.parent])

    def _schedule_blocks(self) -> None:
        while self._free > 0 and self._ready_count() > 0:
            gid, bx = self._pop_ready()
            self._free -= 1
            busy = self._run_block(self._grids[gid], bx)
            done_at = self._now + busy + self.cost.block_sched_overhead
            self._push_event(done_at, "block_done", gid)

    # -- block execution -------------------------------------------------------------

    def _run_block(self, g: _Grid, bx: int) -> int:
        self.blocks_scheduled += 1
        ck = self.compiled.kernels[g.kernel]
        prev_kernel, prev_grid = self._ctx_kernel, self._ctx_grid
        self._ctx_kernel, self._ctx_grid = g.kernel, g
        try:
            mk = self._mk[g.kernel]
            thr = mk(g.gid, bx, g.gdim, g.bdim, g.args, self._buf_get, g.base)
            cdp = self.cost.cdp_code_overhead if ck.contains_launch else 0
            if self._rng is None:
                order = range(g.bdim)
            else:
                order = self._rng.sample(range(g.bdim), g.bdim)
            if ck.tier == "plain":
                busy = self._run_plain(thr, g.gid, bx, order, cdp)
            else:
                busy = self._run_barrier(thr, g.gid, bx, order, cdp)
            self._cdp_time += cdp * g.bdim
            return busy
        finally:
            self._ctx_kernel, self._ctx_grid = prev_kernel, prev_grid

    def _run_plain(self, thr, gid: int, bx: int, order, cdp: int) -> int:
        IC = self.cost.instruction_cost
        PH = self._phase_instr
        busy = 0
        lat = 0
        for tid in order:
            C = [0, 0, 0, 0, 0, 0]
            thr(tid, C, (gid, bx, tid))
            t = (C[0] + C[1] + C[2] + C[3] + C[4]) * IC + C[5] + cdp
            if t > busy:
                busy = t
            PH[0] += C[0]
            PH[1] += C[1]
            PH[2] += C[2]
            PH[3] += C[3]
            PH[4] += C[4]
            lat += C[5]
        self._lat_time += lat
        return busy

    def _run_barrier(self, thr, gid: int, bx: int, order, cdp: int) -> int:
        IC = self.cost.instruction_cost
        PH = self._phase_instr
        order = list(order)
        gens = []
        counters = []
        for tid in order:
            C = [0, 0, 0, 0, 0, 0]
            gens.append(thr(tid, C, (gid, bx, tid)))
            counters.append(C)
        busy = 0
        prev_cost = [0] * len(order)
        while True:
            seg_max = 0
            first_stop = None
            diverged = False
            for i, gen in enumerate(gens):
                stop = next(gen, -1)
                C = counters[i]
                total = (C[0] + C[1] + C[2] + C[3] + C[4]) * IC + C[5]
                d = total - prev_cost[i]
                prev_cost[i] = total
                if d > seg_max:
                    seg_max = d
                if first_stop is None:
                    first_stop = stop
                elif stop != first_stop:
                    diverged = True
            busy += seg_max
            if diverged:
                raise SimTrap("barrier-divergence",
                              "threads of a block reached different barriers",
                              self._ctx_kernel)
            if first_stop == -1:
                break
        for C in counters:
            PH[0] += C[0]
            PH[1] += C[1]
            PH[2] += C[2]
            PH[3] += C[3]
            PH[4] += C[4]
            self._lat_time += C[5]
        return busy + cdp

    # -- traps shared by helper sets ------------------------------------------------

    def _oob(self, buf: list, i, line: int):
        name = ""
        if self.checked:
            meta = self._meta.get(id(buf))
            if meta:
                name = f" '{meta['name']}'"
        raise SimTrap("out-of-bounds",
                      f"index {i} outside buffer{name} of length {len(buf)}",
                      self._ctx_kernel, line)

    def _divzero(self, line: int):
        raise SimTrap("division-by-zero", "division by zero",
                      self._ctx_kernel, line)

    # -- fast helpers ------------------------------------------------------------------

    def _fast_helpers(self) -> dict:
        oob = self._oob
        divzero = self._divzero
        import math
        ceil = math.ceil

        def rd(buf, i, ln, TK):
            if 0 <= i < len(buf):
                return buf[i]
            oob(buf, i, ln)

        def sti(buf, i, v, ln, TK):
            if 0 <= i < len(buf):
                buf[i] = (int(v) + _B32 & _W) - _B32
            else:
                oob(buf, i, ln)

        def stl(buf, i, v, ln, TK):
            if 0 <= i < len(buf):
                buf[i] = int(v)
            else:
                oob(buf, i, ln)

        def stf(buf, i, v, ln, TK):
            if 0 <= i < len(buf):
                buf[i] = float(v)
            else:
                oob(buf, i, ln)

        def dv(a, b, ln):
            if b == 0:
                divzero(ln)
            q = a // b
            if q < 0 and q * b != a:
                q += 1
            return q

        def fdv(a, b, ln):
            if b == 0 or b == 0.0:
                divzero(ln)
            return a / b

        def md(a, b, ln):
            if b == 0:
                divzero(ln)
            r = abs(a) % abs(b)
            return r if a >= 0 else -r

        def ceil_(x):
            return float(ceil(x))

        def at_add32(buf, i, v, ln, TK):
            if 0 <= i < len(buf):
                old = buf[i]
                buf[i] = (old + int(v) + _B32 & _W) - _B32
                return old
            oob(buf, i, ln)

        def at_add64(buf, i, v, ln, TK):
            if 0 <= i < len(buf):
                old = buf[i]
                buf[i] = old + int(v)
                return old
            oob(buf, i, ln)

        def at_max(buf, i, v, ln, TK):
            if 0 <= i < len(buf):
                old = buf[i]
                v = int(v)
                if v > old:
                    buf[i] = v
                return old
            oob(buf, i, ln)

        def at_cas(buf, i, cmp, new, ln, TK):
            if 0 <= i < len(buf):
                old = buf[i]
                if old == int(cmp):
                    buf[i] = (int(new) + _B32 & _W) - _B32
                return old
            oob(buf, i, ln)

        def launch(callee, g, b, args, ln, TK):
            return self._issue_device(callee, g, b, args, ln, TK)

        def fence(TK):
            return None

        def warp(ln):
            raise SimTrap("warp-primitive",
                          "warp primitives are not executable in this simulator",
                          self._ctx_kernel, ln)

        def d3(x, y, z, ln):
            x, y, z = int(x), int(y), int(z)
            if x < 0 or y < 0 or z < 0:
                raise SimTrap("launch-config",
                              "negative launch configuration component",
                              self._ctx_kernel, ln)
            return x * y * z

        return {"rd": rd, "sti": sti, "stl": stl, "stf": stf, "dv": dv,
                "fdv": fdv, "md": md, "ceil": ceil_, "at_add32": at_add32,
                "at_add64": at_add64, "at_max": at_max, "at_cas": at_cas,
                "launch": launch, "fence": fence, "warp": warp, "d3": d3,
                "buf": self._buf_get}

    # -- fence-checking helpers ------------------------------------------------------

    def _note_write(self, buf: list, i: int, tk) -> None:
        meta = self._meta.get(id(buf))
        if meta is None:
            return  # shared memory and glue-internal lists: block-local
        meta["w"][i] = tk
        meta["pub"].discard(i)
        rec = (meta, i, tk)
        self._twrites.setdefault(tk, []).append(rec)
        self._bwrites.setdefault((tk[0], tk[1]), []).append(rec)
        self._gwrites.setdefault(tk[0], []).append(rec)

    def _note_atomic(self, buf: list, i: int, tk) -> None:
        meta = self._meta.get(id(buf))
        if meta is None:
            return
        meta["w"][i] = tk
        meta["pub"].add(i)  # atomic updates publish the cell they touch

    def _check_read(self, buf: list, i: int, tk, line: int) -> None:
        meta = self._meta.get(id(buf))
        if meta is None:
            return
        w = meta["w"].get(i)
        if w is None or i in meta["pub"]:
            return
        if (w[0], w[1]) == (tk[0], tk[1]):
            return  # intra-block reads always allowed
        raise SimTrap(
            "unpublished-read",
            f"cross-block read of buffer '{meta['name']}'[{i}] written by "
            f"grid {w[0]} block {w[1]} without an intervening fence",
            self._ctx_kernel, line)

    def _publish_records(self, recs: list) -> None:
        for meta, i, tk in recs:
            if meta["w"].get(i) == tk:
                meta["pub"].add(i)

    def _publish_thread(self, tk) -> None:
        recs = self._twrites.pop(tk, None)
        if recs:
            self._publish_records(recs)

    def _publish_block(self, bk) -> None:
        recs = self._bwrites.pop(bk, None)
        if recs:
            self._publish_records(recs)

    def _publish_grid(self, gid: int) -> None:
        recs = self._gwrites.pop(gid, None)
        if recs:
            self._publish_records(recs)

    def _checked_helpers(self) -> dict:
        h = self._fast_helpers()
        fast_rd = h["rd"]
        fast_sti, fast_stl, fast_stf = h["sti"], h["stl"], h["stf"]
        fast_add32, fast_add64 = h["at_add32"], h["at_add64"]
        fast_max, fast_cas = h["at_max"], h["at_cas"]
        note_write = self._note_write
        note_atomic = self._note_atomic
        check_read = self._check_read

        def rd(buf, i, ln, TK):
            v = fast_rd(buf, i, ln, TK)
            check_read(buf, i, TK, ln)
            return v

        def sti(buf, i, v, ln, TK):
            fast_sti(buf, i, v, ln, TK)
            note_write(buf, i, TK)

        def stl(buf, i, v, ln, TK):
            fast_stl(buf, i, v, ln, TK)
            note_write(buf, i, TK)

        def stf(buf, i, v, ln, TK):
            fast_stf(buf, i, v, ln, TK)
            note_write(buf, i, TK)

        def at_add32(buf, i, v, ln, TK):
            old = fast_add32(buf, i, v, ln, TK)
            note_atomic(buf, i, TK)
            return old

        def at_add64(buf, i, v, ln, TK):
            old = fast_add64(buf, i, v, ln, TK)
            note_atomic(buf, i, TK)
            return old

        def at_max(buf, i, v, ln, TK):
            old = fast_max(buf, i, v, ln, TK)
            note_atomic(buf, i, TK)
            return old

        def at_cas(buf, i, cmp, new, ln, TK):
            old = fast_cas(buf, i, cmp, new, ln, TK)
            note_atomic(buf, i, TK)
            return old

        def fence(TK):
            self._publish_thread(TK)

        h.update({"rd": rd, "sti": sti, "stl": stl, "stf": stf,
                  "at_add32": at_add32, "at_add64": at_add64,
                  "at_max": at_max, "at_cas": at_cas, "fence": fence})
        return h

    # -- reporting --------------------------------------------------------------------

    def run(self, kernel: str, grid: int, block: int, args=()) -> None:
        self.launch_host(kernel, grid, block, args)
        self.drain()

    def report(self, output_buffers=None) -> SimReport:
        IC = self.cost.instruction_cost
        PH = self._phase_instr
        phase_time = {
            "parent": PH[0] * IC,
            "launch": PH[1] * IC + self._lat_time + self._cdp_time,
            "agg": PH[2] * IC,
            "disagg": PH[3] * IC,
            "child": PH[4] * IC,
        }
        if output_buffers is None:
            names = sorted(self.buffers)
        else:
            names = list(output_buffers)
        subset = {n: self.buffers[n] for n in names}
        digest = memory_digest(subset, self.buffer_kinds)
        return SimReport(
            num_launches=self.num_launches,
            host_launches=self.host_launches,
            blocks_scheduled=self.blocks_scheduled,
            instructions=sum(PH),
            makespan=self._makespan,
            max_pending_depth=self.max_pending_depth,
            phase_time=phase_time,
            memory_digest=digest,
            buffers={n: list(v) for n, v in subset.items()},
        )
