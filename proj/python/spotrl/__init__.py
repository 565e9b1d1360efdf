"""Python bindings for the SPOT reinforcement learning core."""

from ._core import (
    ConfigError,
    block_ideal_actions,
    cli,
    discounted_backfill,
    grid_ideal_actions,
    grid_layout,
    train,
    trial_backfill,
)

__all__ = [
    "ConfigError",
    "block_ideal_actions",
    "cli",
    "discounted_backfill",
    "grid_ideal_actions",
    "grid_layout",
    "train",
    "trial_backfill",
]
