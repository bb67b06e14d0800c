"""Seed derivation and generator construction.

Every stochastic operation in this package takes an explicit seed (or an
object constructed from one).  Seeds are 64-bit unsigned integers; child
seeds are derived with a SplitMix64 fold over the parent seed and a tuple
of integer indices, so a (master_seed, grid_index, trial_index) triple
always maps to the same child stream regardless of execution order or
parallelism.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
# SplitMix64 increment (Steele et al.), the usual odd constant.
_GAMMA = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> int:
    """One SplitMix64 output step for a 64-bit state."""
    x = (x + _GAMMA) & _MASK
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return (z ^ (z >> 31)) & _MASK


def derive_seed(master: int, *indices: int) -> int:
    """Fold integer indices into a parent seed, one SplitMix64 step each.

    Arguments:
        master: parent seed, any non-negative int (wrapped to 64 bits).
        indices: path of integer coordinates (trial index, grid index, ...).

    Returns:
        A 64-bit child seed. derive_seed(s) == splitmix64(s), so the
        zero-index case is still decorrelated from the raw master value.
    """
    state = splitmix64(master & _MASK)
    for ix in indices:
        state = splitmix64(state ^ ((ix & _MASK) * _GAMMA & _MASK))
    return state


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 generator for a 64-bit seed."""
    return np.random.Generator(np.random.PCG64(seed & _MASK))
