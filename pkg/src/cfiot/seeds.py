"""Deterministic seed derivation for Monte Carlo loops."""

from __future__ import annotations

import numpy as np


def realization_seeds(master, n):
    """``n`` 32-bit integer seeds derived from ``master`` by a hashed counter.

    The i-th seed depends only on ``(master, i)``, so prefixes agree when ``n`` grows.
    """
    return [int(np.random.SeedSequence([int(master), i]).generate_state(1)[0]) for i in range(n)]


def substream(seed, tag):
    """Integer seed for a numbered stage of one realization."""
    return int(np.random.SeedSequence([int(seed), int(tag)]).generate_state(1)[0])
