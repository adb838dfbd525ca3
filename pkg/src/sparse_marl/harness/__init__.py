"""Experiment harness: config-driven training, ablation grid and attention dumps."""

from .cli import (
    ATTENTION_COLUMNS,
    METRICS_COLUMNS,
    cmd_ablate,
    cmd_inspect_attention,
    cmd_train,
    main,
    parse_config,
    summarize,
)

__all__ = [
    "ATTENTION_COLUMNS",
    "METRICS_COLUMNS",
    "cmd_ablate",
    "cmd_inspect_attention",
    "cmd_train",
    "main",
    "parse_config",
    "summarize",
]
