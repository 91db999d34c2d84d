"""Portable seeded randomness for split generation.

Split files are shipped artifacts, so regeneration must be byte-identical
across platforms and library versions. numpy's bit generators are stable in
practice but their bounded-integer streams are not contractually frozen, so
the shuffle used for splits is built on SplitMix64, a 64-bit mixer with
published constants, plus textbook rejection sampling and Fisher-Yates.

Reference sequence (seed 0): 0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4,
0x06C45D188009454F — frozen in the test suite.
"""

from __future__ import annotations

_MASK = (1 << 64) - 1


class SplitMix64:
    """SplitMix64 generator: 64-bit state, 64-bit output per step."""

    def __init__(self, seed: int):
        self._state = seed & _MASK

    def next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)

    def next_below(self, n: int) -> int:
        """Uniform integer in [0, n) via rejection (no modulo bias)."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = _MASK + 1 - ((_MASK + 1) % n)
        while True:
            z = self.next_u64()
            if z < limit:
                return z % n

    def spawn(self, stream: int) -> "SplitMix64":
        """Derive an independent child generator for a numbered stream."""
        child = SplitMix64(self._state ^ ((stream * 0xA3EC647659359ACD) & _MASK))
        child.next_u64()
        return child


def fisher_yates(n: int, rng: SplitMix64) -> list[int]:
    """Return a uniformly shuffled permutation of range(n)."""
    perm = list(range(n))
    for i in range(n - 1, 0, -1):
        j = rng.next_below(i + 1)
        perm[i], perm[j] = perm[j], perm[i]
    return perm
