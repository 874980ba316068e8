"""Simplified IEEE 802.15.4-style MAC.

Frame codec with CRC-16 frame check sequence, unslotted CSMA-CA channel
access, acknowledgment with retries, and PAN association bounded at 256
participants including the coordinator.

Wire layout of a frame (all multi-octet fields little-endian):

    octet 0      frame type (0 beacon, 1 data, 2 ack, 3 mac command)
    octet 1      reserved flags, always 0
    octet 2      sequence number
    octets 3-4   PAN id
    octets 5-6   destination short address (high octet 0, or 0xFFFF broadcast)
    octets 7-8   source short address (high octet 0)
    octets 9..   payload (MSDU), up to 116 octets
    last 2       FCS, CRC-16 over everything before it

The channel-access operations are written as generators that yield small
request objects (Delay, CcaProbe, TransmitRequest, AwaitAck) and receive
the answer via ``send()``; the simulation engine interprets the requests
against the shared medium. This keeps the MAC logic a pure state machine
that unit tests can drive with a scripted channel.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .errors import MonitomationError, SizeError
from .phy import BandConfig

MAX_FRAME_OCTETS = 127
HEADER_OCTETS = 9
FCS_OCTETS = 2
MAX_PAYLOAD_OCTETS = MAX_FRAME_OCTETS - HEADER_OCTETS - FCS_OCTETS  # 116
MIN_FRAME_OCTETS = HEADER_OCTETS + FCS_OCTETS  # 11

BROADCAST_ADDR = 0xFFFF
COORDINATOR_ADDR = 0

BACKOFF_UNIT_SYMBOLS = 20
TURNAROUND_SYMBOLS = 12


# --- frame check sequence -------------------------------------------------

def _build_crc_table() -> list[int]:
    table = []
    for byte in range(256):
        reg = byte
        for _ in range(8):
            if reg & 1:
                reg = (reg >> 1) ^ 0x8408  # x^16 + x^12 + x^5 + 1, reflected
            else:
                reg >>= 1
        table.append(reg)
    return table


_CRC_TABLE = _build_crc_table()


def crc16_itu(data: bytes) -> int:
    """ITU-T CRC-16, LSB-first, initial register 0, no final XOR."""
    reg = 0
    for octet in data:
        reg = (reg >> 8) ^ _CRC_TABLE[(reg ^ octet) & 0xFF]
    return reg


# --- frame codec ------------------------------------------------------------

class FrameType(enum.Enum):
    BEACON = 0
    DATA = 1
    ACK = 2
    MAC_COMMAND = 3


class FrameDecodeError(MonitomationError):
    """Base for all frame decoding failures."""


class TooShort(FrameDecodeError):
    pass


class FcsMismatch(FrameDecodeError):
    pass


class UnknownFrameType(FrameDecodeError):
    pass


@dataclass(frozen=True)
class Frame:
    frame_type: FrameType
    seq: int
    pan_id: int
    dest: int
    src: int
    payload: bytes = b""

    def is_broadcast(self) -> bool:
        return self.dest == BROADCAST_ADDR


def encode_frame(f: Frame) -> bytes:
    """Serialize a frame, appending its FCS. Enforces produce-side invariants."""
    if not 0 <= f.seq <= 255:
        raise ValueError("seq out of range")
    if not 0 <= f.pan_id <= 0xFFFF:
        raise ValueError("pan_id out of range")
    if not (0 <= f.dest <= 255 or f.dest == BROADCAST_ADDR):
        raise ValueError("dest must be a short address 0-255 or broadcast")
    if not 0 <= f.src <= 255:
        raise ValueError("src must be a short address 0-255")
    if f.frame_type is FrameType.ACK and f.payload:
        raise ValueError("ACK frames carry no payload")
    if len(f.payload) > MAX_PAYLOAD_OCTETS:
        raise SizeError(
            f"payload of {len(f.payload)} octets exceeds {MAX_PAYLOAD_OCTETS}"
        )
    body = bytearray()
    body.append(f.frame_type.value)
    body.append(0)
    body.append(f.seq)
    body += f.pan_id.to_bytes(2, "little")
    body += f.dest.to_bytes(2, "little")
    body += f.src.to_bytes(2, "little")
    body += f.payload
    fcs = crc16_itu(bytes(body))
    body += fcs.to_bytes(2, "little")
    return bytes(body)


def decode_frame(raw: bytes) -> Frame:
    """Parse and validate a frame from arbitrary octets.

    Tolerates hostile input: the only failure modes are TooShort,
    FcsMismatch and UnknownFrameType. Addresses are surfaced as stored
    (full 16-bit) so foreign traffic stays classifiable upstream.
    """
    if len(raw) < MIN_FRAME_OCTETS:
        raise TooShort(f"frame of {len(raw)} octets is below {MIN_FRAME_OCTETS}")
    body, fcs_bytes = raw[:-2], raw[-2:]
    fcs = int.from_bytes(fcs_bytes, "little")
    if crc16_itu(body) != fcs:
        raise FcsMismatch("frame check sequence does not match")
    ftype_code = body[0]
    try:
        ftype = FrameType(ftype_code)
    except ValueError:
        raise UnknownFrameType(f"frame type code {ftype_code}") from None
    return Frame(
        frame_type=ftype,
        seq=body[2],
        pan_id=int.from_bytes(body[3:5], "little"),
        dest=int.from_bytes(body[5:7], "little"),
        src=int.from_bytes(body[7:9], "little"),
        payload=bytes(body[9:]),
    )


# --- configuration ----------------------------------------------------------

@dataclass(frozen=True)
class MacConfig:
    """CSMA-CA and acknowledgment parameters.

    Defaults follow the conventional unslotted constants; backoff unit and
    turnaround are expressed in µs for the active band (20 and 12 symbol
    times respectively). ``ack_wait_us`` is measured from the end of the
    data frame.
    """

    min_be: int = 3
    max_be: int = 5
    max_csma_backoffs: int = 4
    max_frame_retries: int = 3
    backoff_unit_us: int = 320
    turnaround_us: int = 192
    ack_wait_us: int = 1056

    def __post_init__(self):
        if not 0 <= self.min_be <= self.max_be <= 8:
            raise ValueError("require 0 <= min_be <= max_be <= 8")
        if self.max_csma_backoffs < 0 or self.max_frame_retries < 0:
            raise ValueError("retry bounds must be non-negative")

    @classmethod
    def for_band(cls, band: BandConfig, **overrides) -> "MacConfig":
        """Build a config whose timing fields derive from the band's rates."""
        from .phy import airtime

        backoff = band.symbol_time_us(BACKOFF_UNIT_SYMBOLS)
        turnaround = band.symbol_time_us(TURNAROUND_SYMBOLS)
        ack_air = airtime(MIN_FRAME_OCTETS, band)
        fields = dict(
            backoff_unit_us=backoff,
            turnaround_us=turnaround,
            ack_wait_us=turnaround + ack_air + backoff,
        )
        fields.update(overrides)
        return cls(**fields)


# --- association ------------------------------------------------------------

class AssociationError(MonitomationError):
    pass


class CapacityExceeded(AssociationError):
    pass


class DuplicateAddress(AssociationError):
    pass


class WrongPan(AssociationError):
    pass


AUTO = None  # sentinel for automatic address assignment

MAX_END_DEVICES = 255  # plus the coordinator: 256 participants total


@dataclass
class AssociationRecord:
    addr: int
    joined_at: int
    last_seen: int


class PanRegistry:
    """Coordinator-side membership table for one PAN.

    The coordinator always holds address 0; end devices occupy 1-255, so
    the network never exceeds 256 participants in total.
    """

    def __init__(self, pan_id: int):
        if not 0 <= pan_id <= 0xFFFF:
            raise ValueError("pan_id out of range")
        self.pan_id = pan_id
        self.coordinator_addr = COORDINATOR_ADDR
        self.members: dict[int, AssociationRecord] = {}

    def associate(
        self, requested_src: int | None = AUTO, *, pan_id: int | None = None, now: int = 0
    ) -> int:
        """Join the PAN, returning the assigned short address.

        ``pan_id`` is the requester's network id; a mismatch raises
        WrongPan (surfaced upstream as an intrusion-classifiable event).
        """
        if pan_id is not None and pan_id != self.pan_id:
            raise WrongPan(f"pan 0x{pan_id:04X} does not match 0x{self.pan_id:04X}")
        if requested_src is AUTO:
            addr = self._lowest_free()
        else:
            if requested_src == COORDINATOR_ADDR or requested_src in self.members:
                raise DuplicateAddress(f"address {requested_src} is taken")
            if not 1 <= requested_src <= MAX_END_DEVICES:
                raise ValueError("short address must be in 1-255")
            addr = requested_src
        self.members[addr] = AssociationRecord(addr, now, now)
        return addr

    def _lowest_free(self) -> int:
        for addr in range(1, MAX_END_DEVICES + 1):
            if addr not in self.members:
                return addr
        raise CapacityExceeded("PAN already holds 255 end devices")

    def disassociate(self, addr: int) -> None:
        self.members.pop(addr, None)

    def is_member(self, addr: int) -> bool:
        return addr == self.coordinator_addr or addr in self.members

    def member_count(self) -> int:
        return len(self.members)


# --- channel access state machines ------------------------------------------

class SendStatus(enum.Enum):
    SENT = "SENT"
    CHANNEL_ACCESS_FAILURE = "CHANNEL_ACCESS_FAILURE"


class TxResult(enum.Enum):
    DELIVERED = "DELIVERED"
    NO_ACK = "NO_ACK"
    CHANNEL_ACCESS_FAILURE = "CHANNEL_ACCESS_FAILURE"


@dataclass(frozen=True)
class Delay:
    """Suspend for a duration in µs."""

    us: int


@dataclass(frozen=True)
class CcaProbe:
    """Ask for a clear channel assessment; resumed with True when busy."""


@dataclass(frozen=True)
class TransmitRequest:
    """Put octets on the air; resumed once the airtime has elapsed."""

    psdu: bytes


@dataclass(frozen=True)
class AwaitAck:
    """Wait for a matching ACK; resumed with True on match, False on timeout."""

    seq: int
    peer: int
    timeout_us: int


def csma_ca_transmit(psdu: bytes, cfg: MacConfig, rng):
    """Unslotted CSMA-CA transmission attempt (generator).

    NB starts at 0 and BE at min_be; each round waits a random number of
    backoff units in [0, 2**BE - 1], then probes the channel. A clear
    channel leads to transmission after one turnaround time. A busy one
    bumps NB and BE until NB exceeds max_csma_backoffs.

    Returns SendStatus via StopIteration.
    """
    nb = 0
    be = cfg.min_be
    while True:
        wait_units = rng.randrange(1 << be)
        yield Delay(wait_units * cfg.backoff_unit_us)
        busy = yield CcaProbe()
        if not busy:
            yield Delay(cfg.turnaround_us)
            yield TransmitRequest(psdu)
            return SendStatus.SENT
        nb += 1
        be = min(be + 1, cfg.max_be)
        if nb > cfg.max_csma_backoffs:
            return SendStatus.CHANNEL_ACCESS_FAILURE


def send_with_ack(frame: Frame, cfg: MacConfig, rng):
    """Acknowledged unicast with retries (generator).

    Up to 1 + max_frame_retries attempts, each a CSMA-CA transmission
    followed by an ack wait. Channel access failure aborts the whole
    transaction. Returns TxResult via StopIteration.
    """
    if frame.frame_type not in (FrameType.DATA, FrameType.MAC_COMMAND):
        raise ValueError("only DATA and MAC_COMMAND frames are acknowledged")
    if frame.is_broadcast():
        raise ValueError("broadcast frames cannot be acknowledged")
    raw = encode_frame(frame)
    for _attempt in range(1 + cfg.max_frame_retries):
        status = yield from csma_ca_transmit(raw, cfg, rng)
        if status is SendStatus.CHANNEL_ACCESS_FAILURE:
            return TxResult.CHANNEL_ACCESS_FAILURE
        acked = yield AwaitAck(frame.seq, frame.dest, cfg.ack_wait_us)
        if acked:
            return TxResult.DELIVERED
    return TxResult.NO_ACK


DEFAULT_BEACON_INTERVAL_US = 1_000_000


def beacon_tick(
    pan: PanRegistry, now: int, seq: int, interval_us: int = DEFAULT_BEACON_INTERVAL_US
) -> Frame | None:
    """The coordinator's periodic beacon, or None between ticks.

    Beacons are broadcast and unacknowledged (but still contend via
    CSMA-CA); the payload carries the current member count. The first
    tick is one full interval after network start.
    """
    if now <= 0 or now % interval_us != 0:
        return None
    return Frame(
        frame_type=FrameType.BEACON,
        seq=seq & 0xFF,
        pan_id=pan.pan_id,
        dest=BROADCAST_ADDR,
        src=COORDINATOR_ADDR,
        payload=pan.member_count().to_bytes(2, "little"),
    )


def ack_for(frame: Frame, own_addr: int) -> Frame:
    """The ACK a receiver returns for a frame addressed to it."""
    return Frame(
        frame_type=FrameType.ACK,
        seq=frame.seq,
        pan_id=frame.pan_id,
        dest=frame.src,
        src=own_addr,
    )
