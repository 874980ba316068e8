"""Simulated shared radio medium.

Implements the physical layer's data service (timed transmission and
reception with an all-or-nothing collision model) and management service
(energy detection, clear channel assessment, link quality indication).

Time is integer microseconds throughout. Transmission intervals are
half-open [start, end): a query at the exact end of a transmission sees an
idle medium, and two transmissions meeting exactly end-to-start do not
collide.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from fractions import Fraction

from .errors import SizeError
from .rng import NodeRng

MAX_PSDU_OCTETS = 127


class BandId(enum.Enum):
    B868 = "B868"
    B915 = "B915"
    B2450 = "B2450"


class Modulation(enum.Enum):
    BPSK = "BPSK"
    OQPSK = "OQPSK"


@dataclass(frozen=True)
class BandConfig:
    """One radio band: frequencies, rates and modulation.

    ``phy_overhead_octets`` is the synchronisation header plus PHY header
    prepended to every PSDU (4 preamble + 1 start-of-frame delimiter +
    1 PHY header by default).
    """

    band_id: BandId
    freq_range_mhz: tuple[float, float]
    chip_rate_kchips: int
    modulation: Modulation
    bit_rate_kbps: int
    symbol_rate_sps: int
    symbol_alphabet: int
    phy_overhead_octets: int = 6

    @property
    def bits_per_symbol(self) -> int:
        return self.symbol_alphabet.bit_length() - 1

    def symbol_time_us(self, symbols: int) -> int:
        """Duration of a whole number of symbols, rounded half-up to µs."""
        return _round_half_up(Fraction(symbols * 1_000_000, self.symbol_rate_sps))


BAND_868 = BandConfig(BandId.B868, (868.0, 868.6), 300, Modulation.BPSK, 20, 20_000, 2)
BAND_915 = BandConfig(BandId.B915, (902.0, 928.0), 600, Modulation.BPSK, 40, 40_000, 2)
BAND_2450 = BandConfig(
    BandId.B2450, (2400.0, 2483.5), 2000, Modulation.OQPSK, 250, 62_500, 16
)

BANDS: dict[BandId, BandConfig] = {
    BandId.B868: BAND_868,
    BandId.B915: BAND_915,
    BandId.B2450: BAND_2450,
}


def _round_half_up(x: Fraction) -> int:
    return (x.numerator * 2 + x.denominator) // (x.denominator * 2)


def airtime_exact_us(psdu_octets: int, band: BandConfig) -> Fraction:
    """Exact on-air duration in µs as a rational, before rounding."""
    if psdu_octets < 0:
        raise ValueError("psdu_octets must be non-negative")
    if psdu_octets > MAX_PSDU_OCTETS:
        raise SizeError(f"PSDU of {psdu_octets} octets exceeds {MAX_PSDU_OCTETS}")
    bits = (band.phy_overhead_octets + psdu_octets) * 8
    symbols = Fraction(bits, band.bits_per_symbol)
    return symbols * Fraction(1_000_000, band.symbol_rate_sps)


def airtime(psdu_octets: int, band: BandConfig) -> int:
    """On-air duration of a PSDU in whole µs (round half-up)."""
    return _round_half_up(airtime_exact_us(psdu_octets, band))


class RxStatus(enum.Enum):
    OK = "OK"
    COLLIDED = "COLLIDED"
    NOISE_CORRUPTED = "NOISE_CORRUPTED"


@dataclass
class Transmission:
    """One PSDU on the air, occupying [start, end)."""

    tx_node: int | None  # None for externally injected traffic
    start: int
    end: int
    psdu: bytes
    band: BandId
    collided: bool = field(default=False, compare=False)

    def overlaps(self, other: "Transmission") -> bool:
        return self.start < other.end and other.start < self.end


@dataclass(frozen=True)
class ReceptionOutcome:
    rx_node: int
    status: RxStatus
    lqi: int
    psdu: bytes


class Medium:
    """The single logical radio channel shared by every node.

    ``noise_rate`` is the per-octet corruption probability applied
    independently per receiver; 0 gives a perfectly clean channel.
    """

    def __init__(self, band: BandConfig, noise_rate: float = 0.0):
        if not 0.0 <= noise_rate <= 1.0:
            raise ValueError("noise_rate must be within [0, 1]")
        self.band = band
        self.noise_rate = noise_rate
        self._active: list[Transmission] = []

    def begin(self, tx: Transmission) -> None:
        """Register a transmission starting now; marks collisions symmetrically."""
        for other in self._active:
            if other.overlaps(tx):
                other.collided = True
                tx.collided = True
        self._active.append(tx)

    def end(self, tx: Transmission) -> None:
        self._active.remove(tx)

    def cca(self, t: int) -> bool:
        """Clear channel assessment: True means BUSY."""
        return any(x.start <= t < x.end for x in self._active)

    def energy_detect(self, t: int) -> int:
        """Energy level 0-255 at time t.

        Idle medium reads 0. Each concurrent transmission contributes full
        scale attenuated by the noise knob, saturating at 255, so the
        reading is monotone non-decreasing in concurrency.
        """
        concurrent = sum(1 for x in self._active if x.start <= t < x.end)
        if concurrent == 0:
            return 0
        per_tx = 255 - _round_half_up(Fraction(255) * Fraction(self.noise_rate))
        return min(255, per_tx * concurrent)

    def receive(self, tx: Transmission, rx_node: int, rng: NodeRng) -> ReceptionOutcome:
        """Outcome of one listener's reception of ``tx`` at its end time."""
        if tx.collided:
            return ReceptionOutcome(
                rx_node, RxStatus.COLLIDED, 0, _flip_random_bit(tx.psdu, rng)
            )
        p_ok = (1.0 - self.noise_rate) ** len(tx.psdu)
        if rng.random() < p_ok:
            lqi = 255 if self.noise_rate == 0.0 else self._noisy_lqi()
            return ReceptionOutcome(rx_node, RxStatus.OK, lqi, tx.psdu)
        return ReceptionOutcome(
            rx_node,
            RxStatus.NOISE_CORRUPTED,
            self._noisy_lqi(),
            _flip_random_bit(tx.psdu, rng),
        )

    def _noisy_lqi(self) -> int:
        return _round_half_up(Fraction(255) * (1 - Fraction(self.noise_rate)))

    def broadcast(
        self, tx: Transmission, listeners: dict[int, NodeRng]
    ) -> list[ReceptionOutcome]:
        """One-shot delivery to a set of listeners (address -> rng stream).

        Listeners are processed in address order so outcomes are
        deterministic. The transmission must already have been begun.
        """
        return [self.receive(tx, addr, listeners[addr]) for addr in sorted(listeners)]


def _flip_random_bit(psdu: bytes, rng: NodeRng) -> bytes:
    """Corrupt a copy of the PSDU by flipping one rng-chosen bit."""
    if not psdu:
        return psdu
    pos = rng.randrange(len(psdu) * 8)
    buf = bytearray(psdu)
    buf[pos // 8] ^= 1 << (pos % 8)
    return bytes(buf)
