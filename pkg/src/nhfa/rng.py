"""Seeded random streams.

Every sampler in the package draws through an :class:`RngStream`.  Gamma
variates are parameterized by shape and *rate* everywhere.
"""
from __future__ import annotations

import numpy as np


class RngStream:
    """A reproducible stream identified by ``(seed, stream_id)``.

    Streams with different ids are spawned from the same
    :class:`numpy.random.SeedSequence` root and are therefore independent by
    construction.  A stream is single-owner; do not share one between workers.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        if seed < 0 or stream_id < 0:
            raise ValueError("seed and stream_id must be non-negative")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        self.gen = np.random.Generator(np.random.PCG64(ss))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"

    def spawn(self, stream_id: int) -> "RngStream":
        """Independent sibling stream sharing this stream's seed."""
        return RngStream(self.seed, stream_id)

    # state capture, used for resumable chains
    def get_state(self) -> dict:
        return self.gen.bit_generator.state

    def set_state(self, state: dict) -> None:
        self.gen.bit_generator.state = state

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.gen.uniform(low, high, size)

    def exponential(self, size=None):
        return self.gen.standard_exponential(size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        if np.any(np.asarray(scale) < 0):
            raise ValueError("normal scale must be non-negative")
        return self.gen.normal(loc, scale, size)

    def beta(self, a, b, size=None):
        if np.any(np.asarray(a) <= 0) or np.any(np.asarray(b) <= 0):
            raise ValueError("beta parameters must be positive")
        return self.gen.beta(a, b, size)

    def gamma(self, shape, rate, size=None):
        """Gamma draw with the given shape and rate (mean ``shape / rate``)."""
        shape = np.asarray(shape, dtype=float)
        rate = np.asarray(rate, dtype=float)
        if np.any(shape <= 0) or np.any(rate <= 0):
            raise ValueError("gamma shape and rate must be positive")
        return self.gen.gamma(shape, 1.0 / rate, size)

    def poisson(self, mu, size=None):
        if np.any(np.asarray(mu) < 0):
            raise ValueError("Poisson mean must be non-negative")
        return self.gen.poisson(mu, size)

    def binomial(self, n, p, size=None):
        p = np.asarray(p, dtype=float)
        if np.any(np.asarray(n) < 0) or np.any(p < 0) or np.any(p > 1):
            raise ValueError("binomial requires n >= 0 and 0 <= p <= 1")
        return self.gen.binomial(n, p, size)

    def multinomial(self, n, pvals, size=None):
        """Multinomial draw; ``pvals`` may be batched along leading axes."""
        pvals = np.asarray(pvals, dtype=float)
        if np.any(pvals < 0):
            raise ValueError("multinomial probabilities must be non-negative")
        tot = pvals.sum(axis=-1)
        if np.any(np.abs(tot - 1.0) > 1e-8):
            raise ValueError("multinomial probabilities must sum to one")
        return self.gen.multinomial(n, pvals, size)
