"""Deterministic seed derivation for parallel runs.

Every stochastic component in the package takes an explicit integer seed.
Sweeps over many (grid point, seed) jobs need child seeds that are stable
across processes, platforms and worker counts, so we derive them by hashing
a label path rather than by splitting a shared generator.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def derive_seed(*parts: int | float | str) -> int:
    """Map a label path to a stable 64-bit seed.

    Floats are rendered with repr() so that e.g. 0.1 and 0.10 collide and
    0.1 vs 0.1000001 do not.
    """
    text = "/".join(
        repr(float(p)) if isinstance(p, float) else str(p) for p in parts
    )
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") & _MASK64


def rng_from(*parts: int | float | str) -> np.random.Generator:
    """Generator seeded by a derived label path."""
    return np.random.default_rng(derive_seed(*parts))
