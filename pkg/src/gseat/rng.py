"""Seeded random streams.

All randomness in the package flows from ``stream_rng(seed, label)``: one
root seed per run, one independent generator per named stage.  The same
(seed, label) pair always yields the same stream, so each stage is
reproducible in isolation.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _label_tag(label: str) -> int:
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def stream_rng(seed: int, label: str) -> np.random.Generator:
    """Generator for stage ``label`` under root ``seed``."""
    seed = int(seed)
    if seed < 0:
        raise ValueError(f"seed must be nonnegative, got {seed}")
    return np.random.default_rng(np.random.SeedSequence([seed, _label_tag(label)]))


def child_seed(rng: np.random.Generator) -> int:
    """Draw a fresh sub-seed from an existing stream."""
    return int(rng.integers(0, 2**31 - 1))
