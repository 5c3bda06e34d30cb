"""Deterministic random streams.

Every stochastic routine in the package draws from a counter-based Philox
generator addressed by (master_seed, stream ids...).  The same address yields
the same draw sequence on every platform and in every process, which is what
makes cached task variations and planner runs reproducible bit for bit.
"""

from __future__ import annotations

import numpy as np

__all__ = ["stream_rng", "stream_seed"]


def stream_rng(master_seed: int, *stream: int) -> np.random.Generator:
    """Return the Philox generator for one (master_seed, stream...) address."""
    seq = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.Philox(seq))


def stream_seed(master_seed: int, *stream: int) -> int:
    """Stable 64-bit fingerprint of a stream address, used in reports."""
    seq = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(s) for s in stream))
    return int(seq.generate_state(1, dtype=np.uint64)[0])
