"""Counter-based Gaussian streams.

Every draw is addressed by a key ``(seed, replica, particle, step, stream)``.
A block for ``(seed, replica, step, stream)`` is produced by Philox4x64 with
key ``(seed, replica)`` and counter ``(0, 0, step, stream)``; particle ``i``
reads entries ``[i*d, (i+1)*d)`` of that block. The draw of a particle does
not depend on how many particles are simulated next to it, nor on threading.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

# stream tags
DYNAMICS = 0
INITIAL = 1
PROXY = 2
AUX = 3

_TWO_M53 = 2.0**-53


@dataclass(frozen=True)
class StreamKey:
    seed: int
    replica: int = 0
    particle: int = 0
    step: int = 0
    stream: int = DYNAMICS


class GaussianStream:
    """Reusable Philox bit generator whose counter is reset for each block."""

    def __init__(self, seed: int, replica: int = 0, stream: int = DYNAMICS):
        self.seed = int(seed) % 2**64
        self.replica = int(replica) % 2**64
        self.stream = int(stream)
        key = np.array([self.seed, self.replica], dtype=np.uint64)
        self._bg = np.random.Philox(key=key)
        self._state = self._bg.state

    def uniforms(self, step: int, n: int, skip: int = 0) -> np.ndarray:
        """Entries ``skip .. skip+n-1`` of the block; the counter jumps over whole words."""
        st = self._state
        # each counter value yields 4 raw words; the first block is generated at word 1
        st["state"]["counter"] = np.array([skip // 4, 0, int(step), self.stream], dtype=np.uint64)
        st["buffer_pos"] = 4
        st["has_uint32"] = 0
        self._bg.state = st
        raw = self._bg.random_raw(n + skip % 4)[skip % 4:]
        # 53-bit mantissa shifted by half a unit: strictly inside (0, 1)
        return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * _TWO_M53

    def normals(self, step: int, n: int, d: int = 1, offset: int = 0) -> np.ndarray:
        """Standard normals for particles ``offset .. offset+n-1`` at ``step``, shape (n, d)."""
        u = self.uniforms(step, n * d, skip=offset * d)
        return ndtri(u).reshape(n, d)


def draw(key: StreamKey, d: int = 1) -> np.ndarray:
    """Single particle draw addressed by its full key."""
    gs = GaussianStream(key.seed, key.replica, key.stream)
    return gs.normals(key.step, 1, d, offset=key.particle)[0]


def derive_seed(seed: int, *tags: int) -> int:
    """Deterministic child seed, used to give sub-experiments disjoint key spaces."""
    ss = np.random.SeedSequence([int(seed) % 2**63, *[int(t) for t in tags]])
    return int(ss.generate_state(1, dtype=np.uint64)[0])
