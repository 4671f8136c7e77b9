"""Cost model parameters for the device simulator."""

from __future__ import annotations

from dataclasses import dataclass, fields, replace


@dataclass(frozen=True, slots=True)
class CostParams:
    """All knobs of the timing model.

    instruction_cost: time per executed statement per thread.
    launch_latency: time charged to a thread issuing a device launch.
    launch_service: pending-launch queue drains one grid per this many ticks.
    block_sched_overhead: extra SM-slot occupancy per scheduled block.
    max_concurrent_blocks: SM slots (device-wide concurrent block cap).
    queue_capacity: pending-launch queue bound; overflow traps.
    cdp_code_overhead: per-thread surcharge in kernels containing any launch
        statement, even if no launch executes.
    """

    instruction_cost: int = 1
    launch_latency: int = 500
    launch_service: int = 100
    block_sched_overhead: int = 10
    max_concurrent_blocks: int = 64
    queue_capacity: int = 8192
    cdp_code_overhead: int = 20

    def __post_init__(self) -> None:
        for f in fields(self):
            v = getattr(self, f.name)
            if v < 0:
                raise ValueError(f"{f.name} must be nonnegative, got {v}")
        if self.max_concurrent_blocks < 1:
            raise ValueError("max_concurrent_blocks must be at least 1")


def parse_cost_overrides(text: str, base: CostParams | None = None) -> CostParams:
    """Parse a `key=value,key=value` override string (CLI --cost)."""
    params = base if base is not None else CostParams()
    if not text.strip():
        return params
    names = {f.name for f in fields(CostParams)}
    updates: dict[str, int] = {}
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        if "=" not in item:
            raise ValueError(f"cost override {item!r} is not key=value")
        key, _, val = item.partition("=")
        key = key.strip()
        if key not in names:
            raise ValueError(f"unknown cost parameter {key!r} "
                             f"(known: {', '.join(sorted(names))})")
        try:
            updates[key] = int(val.strip())
        except ValueError:
            raise ValueError(f"cost parameter {key} needs an integer, "
                             f"got {val.strip()!r}") from None
    return replace(params, **updates)
