"""Simulation result record and its stable text serialization."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

PHASES = ("parent", "launch", "agg", "disagg", "child")


@dataclass(frozen=True, slots=True)
class SimReport:
    """Outcome of one simulation.

    makespan is wall-clock (schedule) time; the t_<phase> fields partition
    total busy thread time (sum over threads of their own costs), which is a
    different quantity from makespan whenever blocks run concurrently.
    """

    num_launches: int
    host_launches: int
    blocks_scheduled: int
    instructions: int
    makespan: int
    max_pending_depth: int
    phase_time: dict[str, int]
    memory_digest: str
    buffers: dict[str, tuple] = field(default_factory=dict)

    @property
    def busy_time(self) -> int:
        return sum(self.phase_time.values())

    def to_text(self, include_buffers: bool = False) -> str:
        lines = [
            f"num_launches={self.num_launches}",
            f"host_launches={self.host_launches}",
            f"blocks_scheduled={self.blocks_scheduled}",
            f"instructions={self.instructions}",
            f"makespan={self.makespan}",
            f"max_pending_depth={self.max_pending_depth}",
        ]
        for ph in PHASES:
            lines.append(f"t_{ph}={self.phase_time.get(ph, 0)}")
        lines.append(f"memory_digest={self.memory_digest}")
        if include_buffers:
            for name in sorted(self.buffers):
                values = " ".join(_fmt(v) for v in self.buffers[name])
                lines.append(f"buffer {name} = {values}")
        return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def memory_digest(buffers: dict[str, list], kinds: dict[str, str]) -> str:
    h = hashlib.sha256()
    for name in sorted(buffers):
        h.update(name.encode())
        h.update(b":")
        h.update(kinds[name].encode())
        h.update(b":")
        h.update(" ".join(_fmt(v) for v in buffers[name]).encode())
        h.update(b"\n")
    return h.hexdigest()
