"""Independent reference implementations used only to check the package.

These stay deliberately naive (bitwise loops, direct summation) so they
share no code path with the implementations they verify.
"""

import math


def crc16_bitwise(data: bytes) -> int:
    """Naive shift-register CRC-16: poly x^16+x^12+x^5+1, LSB-first, init 0."""
    reg = 0x0000
    for octet in data:
        for bit in range(8):
            inbit = (octet >> bit) & 1
            if (reg ^ inbit) & 1:
                reg = (reg >> 1) ^ 0x8408
            else:
                reg >>= 1
    return reg


def dft_bin_power(x, k: int) -> float:
    """|X[k]|^2 by direct summation over the whole block."""
    n = len(x)
    re = sum(x[i] * math.cos(2 * math.pi * k * i / n) for i in range(n))
    im = -sum(x[i] * math.sin(2 * math.pi * k * i / n) for i in range(n))
    return re * re + im * im


def dft_power_spectrum(x) -> list[float]:
    """Full O(N^2) power spectrum, bins 0..N-1."""
    return [dft_bin_power(x, k) for k in range(len(x))]


def busy_oracle(intervals, t: int) -> bool:
    """Channel-occupancy reference: busy iff t falls in any [start, end)."""
    return any(s <= t < e for s, e in intervals)
