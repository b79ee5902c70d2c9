"""Scheduling-independent seed derivation."""

import numpy as np

_MASK = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def mix(*parts: int) -> int:
    """Fold integers into one 64-bit seed by chained splitmix64.

    ``mix(a, b)`` differs from ``mix(b, a)``; negative parts are taken modulo 2**64.
    """
    h = 0
    for p in parts:
        h = splitmix64(h ^ (int(p) & _MASK))
    return h


def rng_for(*parts: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(mix(*parts)))
