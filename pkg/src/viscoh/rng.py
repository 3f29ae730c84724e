"""Portable deterministic PRNG (splitmix64-seeded xoshiro256**).

Task sets, k-means seeding, simulated annotators and negative sampling all
draw from this generator so that artifacts reproduce bit-for-bit across
platforms and across independent implementations of the same algorithms.
Python's `random` and numpy's generators are deliberately not used for
anything that ends up in an artifact.

Stream derivation: `derive_seed(seed, *parts)` mixes each part (ints and
strings; strings are FNV-1a-64 hashed) into the seed through the splitmix64
finalizer, giving decorrelated per-class / per-purpose streams.
"""

from __future__ import annotations

_MASK64 = (1 << 64) - 1


def _splitmix64_mix(z: int) -> int:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & _MASK64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & _MASK64
    return z ^ (z >> 31)


def _fnv1a64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for byte in data:
        h = ((h ^ byte) * 0x100000001B3) & _MASK64
    return h


def derive_seed(seed: int, *parts: int | str) -> int:
    """Mix (seed, parts...) into a new 64-bit seed, deterministically."""
    h = seed & _MASK64
    for part in parts:
        if isinstance(part, str):
            key = _fnv1a64(part.encode("utf-8"))
        else:
            key = part & _MASK64
        h = _splitmix64_mix((h + 0x9E3779B97F4A7C15 + key) & _MASK64)
    return h


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK64


class Rng:
    """xoshiro256** seeded through splitmix64, with unbiased integer draws.

    randbelow uses rejection sampling (no modulo bias); random() keeps the
    top 53 bits, matching the common double-precision convention.
    """

    def __init__(self, seed: int):
        state = seed & _MASK64
        s = []
        for _ in range(4):
            state = (state + 0x9E3779B97F4A7C15) & _MASK64
            s.append(_splitmix64_mix(state))
        self._s = s

    def child(self, *parts: int | str) -> "Rng":
        """Independent stream keyed by (this stream's seed material, parts)."""
        return Rng(derive_seed(self.next_u64(), *parts))

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self._s
        result = (_rotl((s1 * 5) & _MASK64, 7) * 9) & _MASK64
        t = (s1 << 17) & _MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self._s = [s0, s1, s2, s3]
        return result

    def random(self) -> float:
        return (self.next_u64() >> 11) * (2.0**-53)

    def randbelow(self, n: int) -> int:
        if n <= 0:
            raise ValueError("randbelow requires n >= 1")
        # rejection threshold: largest multiple of n below 2^64
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            x = self.next_u64()
            if x < limit:
                return x % n

    def bernoulli(self, p: float) -> bool:
        return self.random() < p

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates, iterating from the last element down."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randbelow(i + 1)
            items[i], items[j] = items[j], items[i]

    def sample(self, items: list, k: int) -> list:
        """k draws without replacement via partial Fisher-Yates on a copy."""
        n = len(items)
        if not 0 <= k <= n:
            raise ValueError(f"cannot sample {k} of {n}")
        pool = list(items)
        for i in range(k):
            j = i + self.randbelow(n - i)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:k]

    def choice(self, items: list):
        if not items:
            raise ValueError("choice from empty sequence")
        return items[self.randbelow(len(items))]
