"""Counter-based random substreams.

Every random quantity in the library is drawn from a Philox stream
addressed by a root seed plus a short integer path (tag, replica, time,
...).  Distinct paths map to disjoint counter ranges of the same keyed
Philox sequence, so any draw can be reproduced in isolation regardless
of execution order: Monte Carlo replicas, topology blocks, and rounds
are independently re-derivable.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1

# Stream tags.  Path layout is (tag, a, b); the low counter word is left
# free for in-stream advancement.
TAG_EDGE_NOISE = 1
TAG_INNOVATION = 2
TAG_TOPOLOGY_BLOCK = 3
TAG_MANET_ROUND = 4
TAG_REPLICA = 5
TAG_MISC = 6


def philox_key(seed: int) -> np.ndarray:
    """128-bit Philox key derived from an integer seed."""
    return np.random.SeedSequence(seed).generate_state(2, np.uint64)


def substream(key: np.ndarray, *path: int) -> np.random.Generator:
    """Fresh generator positioned at the counter block addressed by `path`.

    Up to three path components are placed in the high counter words;
    word 0 advances as the stream is consumed.
    """
    if len(path) > 3:
        raise ValueError("substream path supports at most 3 components")
    counter = np.zeros(4, dtype=np.uint64)
    for slot, part in zip((3, 2, 1), path):
        counter[slot] = np.uint64(int(part) & _MASK64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


class StreamPool:
    """Reusable generator yielding the same draws as `substream`.

    Re-seating the counter on one Philox instance is several times
    cheaper than constructing a fresh bit generator, which matters in
    per-step simulation loops.  Not safe to share across threads.
    """

    def __init__(self, seed_or_key) -> None:
        key = seed_or_key if isinstance(seed_or_key, np.ndarray) else philox_key(seed_or_key)
        self.key = key
        self._bitgen = np.random.Philox(key=key)
        self._gen = np.random.Generator(self._bitgen)

    def at(self, *path: int) -> np.random.Generator:
        """Position the shared generator at `path` and return it."""
        if len(path) > 3:
            raise ValueError("substream path supports at most 3 components")
        state = self._bitgen.state
        counter = state["state"]["counter"]
        counter[:] = 0
        for slot, part in zip((3, 2, 1), path):
            counter[slot] = np.uint64(int(part) & _MASK64)
        state["buffer_pos"] = 4  # discard buffered words from prior position
        self._bitgen.state = state
        return self._gen
