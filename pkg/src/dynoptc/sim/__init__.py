"""Deterministic device simulator: cost model, kernel compiler, machine."""

from .compile import CompiledProgram
from .cost import CostParams, parse_cost_overrides
from .dataset import (DatasetError, format_dataset, load_dataset,
                      parse_dataset, save_dataset)
from .machine import Machine, SimTrap
from .report import PHASES, SimReport, memory_digest

__all__ = [
    "CompiledProgram", "CostParams", "parse_cost_overrides",
    "DatasetError", "format_dataset", "load_dataset", "parse_dataset",
    "save_dataset", "Machine", "SimTrap", "PHASES", "SimReport",
    "memory_digest",
]
