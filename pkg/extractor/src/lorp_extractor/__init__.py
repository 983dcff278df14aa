"""Checkpoint bridge for the depth-pruning planner: activation capture and layer surgery."""

from .capture import (
    CaptureConfig,
    UnsupportedArchitectureError,
    capture,
    capture_model,
    capture_sequence,
    find_decoder_blocks,
)
from .surgery import PlanError, apply_plan, apply_plan_to_model, load_plan

__version__ = "0.1.0"

__all__ = [
    "CaptureConfig",
    "PlanError",
    "UnsupportedArchitectureError",
    "apply_plan",
    "apply_plan_to_model",
    "capture",
    "capture_model",
    "capture_sequence",
    "find_decoder_blocks",
    "load_plan",
]
