"""Deterministic random draws shared by the streaming and compute paths.

The training pipeline replays sample streams (inspection runs before
computation, reruns must be bit-identical), so every random decision comes
from an explicit 64-bit linear congruential generator rather than a hidden
global state. The generator and its extraction conventions follow the
classic word2vec tool: multiplier 25214903917, increment 11, subsampling
draws from the low 16 bits, negative-table indices from bits 16 and up.

Seeds for independent streams (one per host, epoch and round) are derived
from the run seed with a splitmix64 mix so that nearby field values do not
produce correlated streams.
"""

from __future__ import annotations

MASK64 = (1 << 64) - 1

LCG_MULTIPLIER = 25214903917
LCG_INCREMENT = 11


def lcg_next(state: int) -> int:
    """Advance the 64-bit LCG by one step."""
    return (state * LCG_MULTIPLIER + LCG_INCREMENT) & MASK64


class Lcg:
    """Stateful wrapper used by the pure-Python streaming path.

    The numba kernels advance the same recurrence inline; any change here
    must be mirrored there or stream replays stop agreeing.
    """

    __slots__ = ("state",)

    def __init__(self, seed: int) -> None:
        self.state = seed & MASK64

    def uniform(self) -> float:
        """Uniform draw in [0, 1) with 16 bits of resolution."""
        self.state = lcg_next(self.state)
        return (self.state & 0xFFFF) / 65536.0

    def window_size(self, window: int) -> int:
        """Effective window size, uniform over 1..window."""
        self.state = lcg_next(self.state)
        return window - int(self.state % window)

    def table_index(self, table_size: int) -> int:
        """Index into the negative-sampling table."""
        self.state = lcg_next(self.state)
        return int((self.state >> 16) % table_size)


def _mix(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return (z ^ (z >> 31)) & MASK64


def derive_seed(root: int, *fields: int) -> int:
    """Mix integer fields into a root seed, splitmix64 style.

    Each field is folded in with the splitmix odd constant so that
    (host, epoch, round) triples map to well-separated stream seeds.
    """
    z = _mix(root & MASK64)
    for field in fields:
        z = _mix((z + 0x9E3779B97F4A7C15 + (field & MASK64)) & MASK64)
    return z


def round_seed(seed: int, host: int, epoch: int, sync_round: int) -> int:
    """Seed for one host's sample stream in one (epoch, round) cell."""
    return derive_seed(seed, 1, host, epoch, sync_round)


def init_seed(seed: int) -> int:
    """Seed for model weight initialization."""
    return derive_seed(seed, 2)


def walk_seed(seed: int) -> int:
    """Seed for random-walk corpus generation."""
    return derive_seed(seed, 3)
