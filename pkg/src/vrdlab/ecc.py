"""Closed-form ECC failure probabilities under independent bit errors.

Units are bits for SEC/SECDED and 8-bit symbols for the Chipkill-like SSC
code. With X ~ Binomial(units, unit error probability):

* SEC: two or more errors are uncorrectable, and the decoder silently
  miscorrects them, so uncorrectable == undetectable.
* SECDED: X = 2 is detected, X >= 3 may alias a single error.
* SSC: as SEC, at symbol granularity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum


class EccKind(str, Enum):
    SEC = "sec"
    SECDED = "secded"
    SSC = "ssc"


@dataclass(frozen=True)
class EccGeometry:
    kind: EccKind
    codeword_bits: int
    symbol_bits: int = 1

    def __post_init__(self):
        object.__setattr__(self, "kind", EccKind(self.kind))
        if self.codeword_bits < 1 or self.symbol_bits < 1:
            raise ValueError("codeword and symbol widths must be positive")
        if self.codeword_bits % self.symbol_bits:
            raise ValueError("codeword_bits must be a multiple of symbol_bits")

    @property
    def symbols(self) -> int:
        return self.codeword_bits // self.symbol_bits

    @classmethod
    def standard(cls, kind) -> "EccGeometry":
        kind = EccKind(kind)
        if kind is EccKind.SSC:
            return cls(kind, 144, 8)
        return cls(kind, 72, 1)


def row_bitflip_rate(bitflips: int, row_bits: int = 65536) -> float:
    if row_bits <= 0:
        raise ValueError("row_bits must be positive")
    if not 0 <= bitflips <= row_bits:
        raise ValueError("bitflips must lie in [0, row_bits]")
    return bitflips / row_bits


def symbol_error_prob(p: float, symbol_bits: int) -> float:
    """P(at least one of ``symbol_bits`` independent bits flips)."""
    _check_p(p)
    if p == 1.0:
        return 1.0
    return -math.expm1(symbol_bits * math.log1p(-p))


def _check_p(p: float):
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability {p} outside [0, 1]")


def binom_pmf(n: int, k: int, p: float) -> float:
    if p == 0.0:
        return 1.0 if k == 0 else 0.0
    if p == 1.0:
        return 1.0 if k == n else 0.0
    logc = math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)
    return math.exp(logc + k * math.log(p) + (n - k) * math.log1p(-p))


def binom_tail(n: int, k: int, p: float) -> float:
    """P(X >= k), summed term by term from the far tail inward.

    Avoids ``1 - cdf`` cancellation at small ``p``.
    """
    _check_p(p)
    if k <= 0:
        return 1.0
    if k > n:
        return 0.0
    return min(1.0, math.fsum(binom_pmf(n, j, p) for j in range(n, k - 1, -1)))


def error_probabilities(geom: EccGeometry, ber: float) -> dict:
    _check_p(ber)
    if geom.kind is EccKind.SSC:
        units, q = geom.symbols, symbol_error_prob(ber, geom.symbol_bits)
    else:
        units, q = geom.codeword_bits, ber
    multi = binom_tail(units, 2, q)
    if geom.kind is EccKind.SECDED:
        return {
            "uncorrectable": multi,
            "undetectable": binom_tail(units, 3, q),
            "detectable_uncorrectable": binom_pmf(units, 2, q),
        }
    return {"uncorrectable": multi, "undetectable": multi, "detectable_uncorrectable": None}


def ecc_table(ber: float) -> dict:
    """All three standard codes at one bit error rate."""
    return {k.value: error_probabilities(EccGeometry.standard(k), ber) for k in EccKind}
