"""Two-pass ring secure sum over fixed-point values.

Owner ``i`` adds its encoded value plus a private mask to the running carrier
and forwards it around the ring; on the second pass each owner removes its
own mask. Everything is integer arithmetic modulo ``2**64``, so the masked sum
is exact and only the encoding step quantizes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

MODULUS_BITS = 64
MODULUS = 1 << MODULUS_BITS
FRAC_BITS = 40
SCALE = 1 << FRAC_BITS
# Largest total magnitude representable without wrapping the signed range.
HEADROOM = float(1 << (MODULUS_BITS - 1 - FRAC_BITS))

class SecureSumOverflow(ArithmeticError):
    pass


def encode(x: float) -> int:
    if not abs(x) < HEADROOM:
        raise SecureSumOverflow(f"|{x!r}| exceeds fixed-point headroom {HEADROOM:g}")
    return round(x * SCALE) % MODULUS


def decode(raw: int) -> float:
    raw %= MODULUS
    if raw >= MODULUS // 2:
        raw -= MODULUS
    return raw / SCALE


@dataclass(frozen=True)
class MaskedMessage:
    session: int
    hop: int
    pass_no: int
    carrier: int

    def to_dict(self) -> dict:
        return {"session": self.session, "hop": self.hop, "pass": self.pass_no, "carrier": self.carrier}


@dataclass
class SecureSumResult:
    total: float
    messages: list[MaskedMessage] = field(default_factory=list)


def _draw_masks(rng: np.random.Generator, n: int) -> list[int]:
    # uint64 draws cover [0, 2**64) uniformly
    return [int(g) for g in rng.integers(0, np.iinfo(np.uint64).max, size=n, dtype=np.uint64, endpoint=True)]


def run_ring(values: Sequence[float], rng: np.random.Generator, session: int = 0) -> SecureSumResult:
    """Run the ring protocol and return the total together with every message sent."""
    if len(values) == 0:
        raise ValueError("secure sum needs at least one owner")
    if sum(abs(float(v)) for v in values) >= HEADROOM:
        raise SecureSumOverflow("sum of magnitudes exceeds fixed-point headroom")
    encoded = [encode(float(v)) for v in values]
    masks = _draw_masks(rng, len(values))

    messages = []
    carrier = 0
    for hop, (enc, g) in enumerate(zip(encoded, masks)):
        carrier = (carrier + enc + g) % MODULUS
        messages.append(MaskedMessage(session, hop, 1, carrier))
    for hop, g in enumerate(masks):
        carrier = (carrier - g) % MODULUS
        messages.append(MaskedMessage(session, hop, 2, carrier))
    return SecureSumResult(total=decode(carrier), messages=messages)


def secure_sum(values: Sequence[float], rng: np.random.Generator, session: int = 0) -> float:
    return run_ring(values, rng, session).total


def fixed_point_sum(values: Sequence[float]) -> float:
    """Plain (unmasked) sum of the encoded values; what the ring must reproduce."""
    return decode(sum(encode(float(v)) for v in values))
