"""Counter-based deterministic random streams.

Each stream is keyed by (seed, stream id) and each draw is a pure function
of (seed, stream, draw index), computed with BLAKE2b. Streams are therefore
independent of one another: scheduling extra work on one node never shifts
the values another node draws, which keeps golden simulation logs stable
under scenario edits.
"""

from __future__ import annotations

import hashlib
import struct

_MASK64 = 0xFFFFFFFFFFFFFFFF


class NodeRng:
    """Deterministic stream of random values for one node (or the engine).

    ``stream`` is the node short address; the engine itself uses -1.
    """

    def __init__(self, seed: int, stream: int):
        self.seed = seed
        self.stream = stream
        # stream is shifted by 1 so the engine stream (-1) packs as 0
        self._key = struct.pack("<QQ", seed & _MASK64, (stream + 1) & _MASK64)
        self._index = 0

    @property
    def draw_index(self) -> int:
        """Number of draws taken so far."""
        return self._index

    def _next_u64(self) -> int:
        h = hashlib.blake2b(
            struct.pack("<Q", self._index), digest_size=8, key=self._key
        )
        self._index += 1
        return int.from_bytes(h.digest(), "little")

    def randrange(self, n: int) -> int:
        """Uniform integer in [0, n). Modulo bias is < 2**-56 for n <= 2**8."""
        if n <= 0:
            raise ValueError("randrange() bound must be positive")
        return self._next_u64() % n

    def random(self) -> float:
        """Uniform float in [0, 1) with 53-bit resolution."""
        return (self._next_u64() >> 11) * (2.0**-53)
