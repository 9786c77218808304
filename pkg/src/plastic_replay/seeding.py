"""Deterministic seed derivation.

Every run owns a single integer seed; every randomness consumer (network
init, action selection, batch sampling, metrics, ...) gets its own stream
whose seed is derived by hashing (run_seed, component_name, index). Two
invocations with the same run seed therefore replay bit-for-bit, and adding
a new consumer never perturbs existing streams.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(run_seed: int, component: str, index: int = 0) -> int:
    """Stable 63-bit seed for a named component of a run."""
    payload = f"{run_seed}:{component}:{index}".encode("utf-8")
    digest = hashlib.sha256(payload).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def derive_rng(run_seed: int, component: str, index: int = 0) -> np.random.Generator:
    """Seeded generator for a named component of a run."""
    return np.random.default_rng(derive_seed(run_seed, component, index))
