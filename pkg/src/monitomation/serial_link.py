"""Coordinator-side serial link timing (8N1 framing).

The operator front end reaches the coordinator radio over a serial byte
stream; the link is modeled as pure latency with exact rational byte
times, rounded to whole µs only when an event is scheduled.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .errors import MonitomationError

MIN_BAUD = 2400
MAX_BAUD = 115200

BITS_PER_BYTE = 10  # 1 start + 8 data + 1 stop


class BaudOutOfRange(MonitomationError):
    pass


@dataclass(frozen=True)
class SerialLinkConfig:
    baud: int = MAX_BAUD

    def __post_init__(self):
        if not MIN_BAUD <= self.baud <= MAX_BAUD:
            raise BaudOutOfRange(
                f"baud {self.baud} outside {MIN_BAUD}-{MAX_BAUD}"
            )


def uart_byte_time_us(cfg: SerialLinkConfig) -> Fraction:
    """Exact time to move one byte, in µs (10 bit times at 8N1)."""
    return Fraction(BITS_PER_BYTE * 1_000_000, cfg.baud)


def serial_delay_us(cfg: SerialLinkConfig, num_bytes: int) -> int:
    """Whole-µs latency of a ``num_bytes`` submission (round half-up)."""
    x = uart_byte_time_us(cfg) * num_bytes
    return (x.numerator * 2 + x.denominator) // (x.denominator * 2)
