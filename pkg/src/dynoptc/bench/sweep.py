"""Parameter-sweep driver emitting one CSV row per configuration.

Rows appear in config order regardless of outcome; a configuration that
fails (transform error, simulation trap, or an output mismatch against the
serial reference) contributes a row with the error column set and empty
metrics, and the sweep continues. The reference run is computed once per
sweep and shared across rows.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path

from ..passes import INF_THRESHOLD
from ..sim import CostParams, SimReport
from .harness import (BenchConfig, load, run_config, run_reference,
                      verify_outputs)

CSV_COLUMNS = ("bench", "dataset", "threshold", "cfactor", "agg",
               "group_size", "agg_threshold", "num_launches", "host_launches",
               "blocks_scheduled", "instructions", "makespan", "t_parent",
               "t_launch", "t_agg", "t_disagg", "t_child", "error")


def default_grid(thresholds=(0, 32, INF_THRESHOLD), cfactors=(1,),
                 aggs=(None, "block", "multiblock", "grid"),
                 group_size: int = 4, agg_threshold: int = 0
                 ) -> list[BenchConfig]:
    """Cross product of the knobs, thresholds outermost."""
    return [BenchConfig(threshold=t, cfactor=c, agg=a, group_size=group_size,
                        agg_threshold=agg_threshold)
            for t in thresholds for c in cfactors for a in aggs]


def _knob_cells(bench: str, dataset: str, cfg: BenchConfig) -> dict:
    return {
        "bench": bench,
        "dataset": dataset,
        "threshold": cfg.threshold,
        "cfactor": cfg.cfactor,
        "agg": cfg.agg or "none",
        "group_size": cfg.group_size,
        "agg_threshold": cfg.agg_threshold,
    }


def _metric_cells(report: SimReport) -> dict:
    return {
        "num_launches": report.num_launches,
        "host_launches": report.host_launches,
        "blocks_scheduled": report.blocks_scheduled,
        "instructions": report.instructions,
        "makespan": report.makespan,
        **{f"t_{ph}": t for ph, t in report.phase_time.items()},
    }


def sweep(bench_name: str, dataset: str, configs: list[BenchConfig] | None = None,
          cost: CostParams | None = None, verify: bool = True) -> list[dict]:
    """Run every config on one benchmark/dataset; return CSV-shaped rows."""
    if configs is None:
        configs = default_grid()
    bench, wl = load(bench_name, dataset)
    reference = run_reference(bench, wl, cost=cost) if verify else None

    rows = []
    for cfg in configs:
        row = {c: "" for c in CSV_COLUMNS}
        row.update(_knob_cells(bench_name, dataset, cfg))
        try:
            report, _ = run_config(bench, wl, cfg, cost=cost)
            if reference is not None:
                verify_outputs(bench, wl, report, reference)
            row.update(_metric_cells(report))
        except Exception as e:  # noqa: BLE001 - per-row fault isolation
            row["error"] = str(e)
        rows.append(row)
    return rows


def render_csv(rows: list[dict]) -> str:
    out = io.StringIO()
    writer = csv.DictWriter(out, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return out.getvalue()


def write_csv(path, rows: list[dict]) -> None:
    Path(path).write_text(render_csv(rows))
