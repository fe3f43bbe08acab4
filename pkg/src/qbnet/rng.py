"""Named random streams derived from one seed.

Each consumer asks for its own stream by name, so adding a consumer never
shifts the numbers another one sees.
"""
from __future__ import annotations

import hashlib

import numpy as np


def _name_key(name: str) -> int:
    return int.from_bytes(hashlib.sha256(name.encode()).digest()[:8], "little")


def stream(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), _name_key(name)]))


def child_seed(seed: int, name: str) -> int:
    """A plain integer seed for APIs that take one."""
    return int(np.random.SeedSequence([int(seed), _name_key(name)]).generate_state(1)[0])
