"""Node behaviors: coordinator, actuator end devices, display/monitor.

Actuators gather all channel traffic but act only on control frames that
carry their own PAN id, their own address and a registered source; every
other frame is discarded without a state change. The display node shows
text messages addressed to it and, as the network monitor, logs one
primary event for every frame it hears, with intrusion categories taking
precedence over ordinary traffic categories.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field

from . import commands, mac
from .errors import MonitomationError

DISPLAY_BUFFER_LIMIT = 100

LEVEL_ON = 255
LEVEL_OFF = 0


class Role(enum.Enum):
    COORDINATOR = "coordinator"
    ACTUATOR = "actuator"
    DISPLAY_MONITOR = "display_monitor"


class DestinationUnknown(MonitomationError):
    pass


@dataclass
class NodeState:
    addr: int
    role: Role
    associated: bool = False
    endpoints: dict[int, int] = field(default_factory=dict)
    display_buffer: deque = field(default_factory=lambda: deque(maxlen=DISPLAY_BUFFER_LIMIT))
    last_seen: dict[int, int] = field(default_factory=dict)
    malformed_count: int = 0

    def snapshot(self) -> dict:
        """JSON-ready view of the node."""
        return {
            "addr": self.addr,
            "role": self.role.value,
            "associated": self.associated,
            "endpoints": {str(k): v for k, v in sorted(self.endpoints.items())},
            "display_buffer": list(self.display_buffer),
        }


class MonitorCategory(enum.Enum):
    TEXT_SHOWN = "TEXT_SHOWN"
    COMMAND_SEEN = "COMMAND_SEEN"
    DELIVERY = "DELIVERY"
    BEACON_SEEN = "BEACON_SEEN"
    INTRUSION_FOREIGN_PAN = "INTRUSION_FOREIGN_PAN"
    INTRUSION_UNKNOWN_SOURCE = "INTRUSION_UNKNOWN_SOURCE"
    FRAME_CORRUPT = "FRAME_CORRUPT"
    NODE_SILENT = "NODE_SILENT"


INTRUSION_CATEGORIES = frozenset(
    {
        MonitorCategory.INTRUSION_FOREIGN_PAN,
        MonitorCategory.INTRUSION_UNKNOWN_SOURCE,
    }
)

UNKNOWN_SRC = "unknown"


@dataclass(frozen=True)
class MonitorEvent:
    at: int
    category: MonitorCategory
    src: int | str
    dest: int
    summary: str
    frame_hex: str

    def body(self) -> dict:
        return {
            "category": self.category.value,
            "src": self.src,
            "dest": self.dest,
            "summary": self.summary,
            "frame_hex": self.frame_hex,
        }


@dataclass
class ActuatorResult:
    """Outcome of an actuator processing one frame."""

    changed: dict[int, int] = field(default_factory=dict)
    reply: commands.Instruction | None = None


def apply_action(state: NodeState, endpoint: int, action: commands.Action, level: int) -> int:
    """Apply one control action to an endpoint, returning the new level."""
    current = state.endpoints.get(endpoint, LEVEL_OFF)
    if action is commands.Action.ON:
        new = LEVEL_ON
    elif action is commands.Action.OFF:
        new = LEVEL_OFF
    elif action is commands.Action.TOGGLE:
        new = LEVEL_OFF if current > 0 else LEVEL_ON
    elif action is commands.Action.SET_LEVEL:
        new = level
    else:
        new = current
    state.endpoints[endpoint] = new
    return new


def actuator_on_frame(
    state: NodeState, frame: mac.Frame, own_pan: int, known_sources: set[int]
) -> ActuatorResult:
    """Process one FCS-valid frame at an actuator.

    Frames for another PAN, another destination or an unregistered source
    are discarded silently. Text frames are not an actuator's function
    and are discarded too.
    """
    result = ActuatorResult()
    if frame.pan_id != own_pan or frame.dest != state.addr:
        return result
    if frame.src not in known_sources:
        return result
    if frame.frame_type is not mac.FrameType.DATA:
        return result
    try:
        instr = commands.decode_payload(frame.payload, dest=frame.dest)
    except commands.PayloadDecodeError:
        state.malformed_count += 1
        return result
    if instr.kind is commands.Kind.TEXT:
        return result
    if instr.action is commands.Action.QUERY:
        level = state.endpoints.get(instr.target_endpoint, LEVEL_OFF)
        result.reply = commands.Instruction.make_text(
            f"EP{instr.target_endpoint}={level}", frame.src
        )
        return result
    new_level = apply_action(state, instr.target_endpoint, instr.action, instr.level)
    result.changed[instr.target_endpoint] = new_level
    return result


def display_on_frame(
    state: NodeState,
    decoded: mac.Frame | mac.FrameDecodeError,
    raw: bytes,
    own_pan: int,
    known_sources: set[int],
    at: int,
) -> list[MonitorEvent]:
    """Classify one reception at the display/monitor node.

    Returns exactly one primary event for the frame; intrusion categories
    take precedence over traffic categories. Text addressed to the
    display is also appended to its bounded buffer.
    """
    frame_hex = raw.hex()
    if isinstance(decoded, mac.FrameDecodeError):
        return [
            MonitorEvent(
                at,
                MonitorCategory.FRAME_CORRUPT,
                UNKNOWN_SRC,
                0,
                f"undecodable frame: {type(decoded).__name__}",
                frame_hex,
            )
        ]
    frame = decoded
    if frame.pan_id != own_pan:
        return [
            MonitorEvent(
                at,
                MonitorCategory.INTRUSION_FOREIGN_PAN,
                frame.src,
                frame.dest,
                f"frame for foreign PAN 0x{frame.pan_id:04X}",
                frame_hex,
            )
        ]
    if frame.src not in known_sources:
        return [
            MonitorEvent(
                at,
                MonitorCategory.INTRUSION_UNKNOWN_SOURCE,
                frame.src,
                frame.dest,
                f"unregistered source address {frame.src}",
                frame_hex,
            )
        ]
    state.last_seen[frame.src] = at
    if frame.frame_type is mac.FrameType.BEACON:
        return [
            MonitorEvent(
                at,
                MonitorCategory.BEACON_SEEN,
                frame.src,
                frame.dest,
                "coordinator beacon",
                frame_hex,
            )
        ]
    if frame.frame_type is mac.FrameType.ACK:
        return [
            MonitorEvent(
                at,
                MonitorCategory.DELIVERY,
                frame.src,
                frame.dest,
                f"ack for seq {frame.seq}",
                frame_hex,
            )
        ]
    summary = f"{frame.frame_type.name} frame"
    category = MonitorCategory.COMMAND_SEEN
    if frame.frame_type is mac.FrameType.DATA:
        try:
            instr = commands.decode_payload(frame.payload, dest=frame.dest)
        except commands.PayloadDecodeError:
            instr = None
        if instr is not None and instr.kind is commands.Kind.TEXT:
            if frame.dest == state.addr:
                state.display_buffer.append(instr.text)
                category = MonitorCategory.TEXT_SHOWN
                summary = f"text shown: {instr.text}"
            else:
                summary = f"text for {frame.dest}"
        elif instr is not None:
            summary = (
                f"{instr.action.name} endpoint {instr.target_endpoint}"
                f" at {frame.dest}"
            )
        else:
            summary = "data frame with undecodable payload"
    return [MonitorEvent(at, category, frame.src, frame.dest, summary, frame_hex)]


def monitor_census(
    state: NodeState,
    now: int,
    silence_threshold: int,
    members: dict[int, mac.AssociationRecord],
) -> list[MonitorEvent]:
    """Flag members not heard for longer than the silence threshold.

    Run once per threshold window by the engine, which bounds the events
    to one per member per window. A member never heard at all is judged
    from its association time.
    """
    events = []
    for addr in sorted(members):
        if addr == state.addr:
            continue
        baseline = state.last_seen.get(addr, members[addr].joined_at)
        if now - baseline > silence_threshold:
            events.append(
                MonitorEvent(
                    now,
                    MonitorCategory.NODE_SILENT,
                    addr,
                    state.addr,
                    f"node {addr} silent for {now - baseline} us",
                    "",
                )
            )
    return events
