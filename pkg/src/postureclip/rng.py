"""Portable PCG32 generator (O'Neill's PCG-XSH-RR 64/32).

Recurrence, all arithmetic mod 2**64::

    state' = state * 6364136223846793005 + inc
    out    = rotr32(((state ^ (state >> 18)) >> 27) mod 2**32, state >> 59)

Seeding follows the reference ``pcg32_srandom(initstate, initseq)``:
``inc = (initseq << 1) | 1``, step once, add initstate, step again. The same
seed therefore gives the same stream in any language that implements it.
"""

from __future__ import annotations

import math

_MASK64 = (1 << 64) - 1
_MULT = 6364136223846793005
DEFAULT_STREAM = 54


class Pcg32:
    def __init__(self, seed: int, stream: int = DEFAULT_STREAM):
        self.state = 0
        self.inc = ((stream << 1) | 1) & _MASK64
        self._step()
        self.state = (self.state + (seed & _MASK64)) & _MASK64
        self._step()
        self._spare: float | None = None

    def _step(self) -> None:
        self.state = (self.state * _MULT + self.inc) & _MASK64

    def next_u32(self) -> int:
        old = self.state
        self._step()
        xorshifted = (((old >> 18) ^ old) >> 27) & 0xFFFFFFFF
        rot = old >> 59
        return ((xorshifted >> rot) | (xorshifted << ((-rot) & 31))) & 0xFFFFFFFF

    def random(self) -> float:
        """Uniform double in [0, 1) with 53 random bits."""
        a = self.next_u32() >> 5
        b = self.next_u32() >> 6
        return (a * 67108864.0 + b) / 9007199254740992.0

    def gauss(self, mu: float = 0.0, sigma: float = 1.0) -> float:
        """Box-Muller; the second variate of each pair is cached."""
        if self._spare is not None:
            z, self._spare = self._spare, None
            return mu + sigma * z
        u1 = 1.0 - self.random()  # (0, 1], keeps log finite
        u2 = self.random()
        r = math.sqrt(-2.0 * math.log(u1))
        theta = 2.0 * math.pi * u2
        self._spare = r * math.sin(theta)
        return mu + sigma * r * math.cos(theta)
