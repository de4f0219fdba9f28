"""Seeded random streams.

Scalar draws from a numpy ``Generator`` cost about a microsecond each, which
dominates a Metropolis-Hastings step on small models.  ``Stream`` draws
uniforms in blocks and serves the common scalar requests from the block; the
sequence is still a pure function of the seed.
"""

from __future__ import annotations

import numpy as np

__all__ = ["Stream", "spawn_streams"]

_BLOCK = 4096


class Stream:
    __slots__ = ("gen", "_buf", "_pos")

    def __init__(self, seed):
        self.gen = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        self._buf = []
        self._pos = 0

    def random(self) -> float:
        pos = self._pos
        if pos == _BLOCK or not self._buf:
            self._buf = self.gen.random(_BLOCK).tolist()
            pos = 0
        self._pos = pos + 1
        return self._buf[pos]

    def integers(self, low, high=None, size=None):
        if size is not None:
            return self.gen.integers(low, high, size=size)
        if high is None:
            low, high = 0, low
        return low + int(self.random() * (high - low))

    def geometric(self, p):
        return self.gen.geometric(p)

    def poisson(self, lam):
        return self.gen.poisson(lam)


def spawn_streams(seed: int, names=("init", "proposer", "accept")) -> dict:
    """Independent named streams derived from one seed."""
    children = np.random.SeedSequence(seed).spawn(len(names))
    return {n: Stream(np.random.default_rng(c)) for n, c in zip(names, children)}
