"""Tiny deterministic models for smoke tests and documentation examples."""

from __future__ import annotations

import numpy as np


def popcount_probability(batch) -> np.ndarray:
    """p = fraction of nonzero input positions.

    With an all-ones sample and zero_feature masking this returns
    popcount(mask) / n, which makes every table value easy to check by
    hand.
    """
    batch = np.asarray(batch, dtype=np.float64)
    return (batch != 0.0).mean(axis=1)


def constant_half(batch) -> np.ndarray:
    """Ignores the input entirely; p = 0.5 for every row."""
    return np.full(len(np.asarray(batch)), 0.5)
