"""Seeded random primitives shared by corpus generation and training.

All randomness in the package flows through :class:`Rng` so that a run is
fully determined by its seed. The backing bit generator is numpy's PCG64;
the algorithm is fixed for a given release and reseeding with the same
value replays the exact draw sequence (no cross-version guarantee).
"""

from __future__ import annotations

import numpy as np

PRNG_ALGORITHM = "PCG64"


class Rng:
    """Deterministic random source wrapping ``numpy.random.Generator``."""

    def __init__(self, seed: int):
        if not isinstance(seed, (int, np.integer)):
            raise ValueError(f"seed must be an integer, got {type(seed).__name__}")
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed}, algorithm={PRNG_ALGORITHM})"

    def dirichlet_symmetric(self, dim: int, alpha: float) -> np.ndarray:
        """Draw one probability vector from a symmetric Dirichlet.

        Implemented by normalizing ``dim`` independent Gamma(alpha, 1)
        draws, which is valid for every alpha > 0.
        """
        if dim < 1:
            raise ValueError(f"dim must be >= 1, got {dim}")
        if not alpha > 0.0:
            raise ValueError(f"alpha must be > 0, got {alpha}")
        while True:
            draws = self._gen.gamma(alpha, 1.0, size=dim)
            total = draws.sum()
            # With very small alpha every draw can underflow to exactly 0;
            # redrawing keeps the result a valid probability vector.
            if total > 0.0:
                return draws / total

    def categorical(self, weights) -> int:
        """Sample an index proportionally to unnormalized non-negative weights."""
        w = np.asarray(weights, dtype=np.float64)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("weights must be a non-empty 1-d array")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")
        if np.any(w < 0.0):
            raise ValueError("weights must be non-negative")
        cum = np.cumsum(w)
        total = cum[-1]
        if not total > 0.0:
            raise ValueError("at least one weight must be positive")
        u = self._gen.random() * total
        # side="right" skips zero-weight slots: the first index with
        # cumulative mass strictly above u always has positive weight.
        return int(np.searchsorted(cum, u, side="right"))

    def bernoulli(self, p: float) -> int:
        """Return 1 with probability p, else 0."""
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"p must be in [0, 1], got {p}")
        return int(self._gen.random() < p)

    def uniform_range(self, low: float, high: float) -> float:
        """Draw a float uniformly from [low, high)."""
        if not low < high:
            raise ValueError(f"need low < high, got [{low}, {high})")
        value = low + (high - low) * self._gen.random()
        if value >= high:  # guard against rounding onto the open endpoint
            value = np.nextafter(high, low)
        return float(value)

    def uniform_many(self, n: int) -> np.ndarray:
        """Draw n independent floats uniformly from [0, 1)."""
        if n < 0:
            raise ValueError(f"n must be >= 0, got {n}")
        return self._gen.random(n)

    def poisson(self, lam: float) -> int:
        """Draw from Poisson(lam); lam = 0 always yields 0."""
        if lam < 0.0:
            raise ValueError(f"lam must be >= 0, got {lam}")
        return int(self._gen.poisson(lam))

    def integers(self, n: int) -> int:
        """Uniform integer from {0, ..., n - 1}."""
        if n < 1:
            raise ValueError(f"n must be >= 1, got {n}")
        return int(self._gen.integers(n))

    def permutation(self, n: int) -> np.ndarray:
        """Uniformly random permutation of range(n)."""
        return self._gen.permutation(n)
