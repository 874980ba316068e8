"""Deterministic discrete-event simulation engine.

Ties the radio medium, the MAC and the device behaviors together, driven
by a declarative scenario. Virtual time is integer microseconds. Events
at equal timestamps execute in (node address, schedule index) order, with
engine-level events (stimuli, frame deliveries) sorting before any node's
events. All randomness comes from counter-based per-node streams keyed by
(seed, node address, draw index), so identical scenarios replay to
byte-identical logs.

Timeline semantics: the association phase runs at t=0 in address order,
then scripted stimuli fire at their times. Periodic sources (beacons,
monitor census) tick while their tick time is within the scenario
duration; after the last source fires, in-flight MAC transactions drain
to completion, so the log may extend slightly past the nominal duration.
"""

from __future__ import annotations

import enum
import heapq
import json
from collections import deque
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path

import numpy as np

from . import commands, devices, dtmf, mac, phy
from .devices import MonitorCategory, NodeState, Role
from .errors import MonitomationError
from .rng import NodeRng
from .serial_link import BaudOutOfRange, SerialLinkConfig, serial_delay_us

DEFAULT_BEACON_INTERVAL_US = 1_000_000
DEFAULT_SILENCE_THRESHOLD_US = 5_000_000
DEFAULT_DURATION_US = 1_000_000

ENGINE_KEY = -1  # event ordering key for engine-level events
EXTERNAL_NODE = "external"  # tx_node label for injected traffic


class ParseError(MonitomationError):
    pass


class ValidationError(MonitomationError):
    pass


class RecordKind(enum.Enum):
    TX = "TX"
    RX = "RX"
    MAC_EVENT = "MAC_EVENT"
    MONITOR_EVENT = "MONITOR_EVENT"
    DEVICE_STATE = "DEVICE_STATE"
    STIMULUS = "STIMULUS"


@dataclass(frozen=True)
class LogRecord:
    at: int
    kind: str
    body: dict

    def to_json_line(self) -> str:
        return json.dumps(
            {"at": self.at, "kind": self.kind, "body": self.body},
            separators=(",", ":"),
        )

    @classmethod
    def from_json_line(cls, line: str) -> "LogRecord":
        obj = json.loads(line)
        return cls(at=obj["at"], kind=obj["kind"], body=obj["body"])


# --- scenario ---------------------------------------------------------------

@dataclass(frozen=True)
class NodeSpec:
    role: Role
    addr: int
    endpoints: tuple[int, ...] = ()


@dataclass(frozen=True)
class TypedInput:
    at: int
    input: str


@dataclass(frozen=True, eq=False)
class DtmfAudio:
    at: int
    samples: np.ndarray
    sample_rate: int
    source: str


@dataclass(frozen=True)
class InjectRawFrame:
    at: int
    octets: bytes
    pan_override: int | None = None


@dataclass(frozen=True)
class DropNode:
    at: int
    addr: int


Stimulus = TypedInput | DtmfAudio | InjectRawFrame | DropNode


@dataclass
class Scenario:
    pan_id: int
    nodes: list[NodeSpec]
    band: phy.BandConfig = phy.BAND_2450
    noise_rate: float = 0.0
    seed: int = 0
    mac_config: mac.MacConfig = None  # resolved from band when None
    serial: SerialLinkConfig = SerialLinkConfig()
    beacon_interval_us: int | None = DEFAULT_BEACON_INTERVAL_US
    silence_threshold_us: int | None = DEFAULT_SILENCE_THRESHOLD_US
    lookup_table: commands.LookupTable = None
    script: list = field(default_factory=list)
    duration_us: int = DEFAULT_DURATION_US

    def __post_init__(self):
        if self.mac_config is None:
            self.mac_config = mac.MacConfig.for_band(self.band)
        if self.lookup_table is None:
            display = self.display_addr()
            self.lookup_table = commands.LookupTable(text_dest=display)

    def display_addr(self) -> int | None:
        for spec in self.nodes:
            if spec.role is Role.DISPLAY_MONITOR:
                return spec.addr
        return None


_ACTION_NAMES = {a.name: a for a in commands.Action}
_ROLE_NAMES = {r.value: r for r in Role}
_BAND_NAMES = {b.value: b for b in phy.BandId}

_UNSUPPORTED_KEYS = ("gts", "mode", "superframe")


def load_scenario(text: str, base_dir: str | Path | None = None) -> Scenario:
    """Parse and validate a JSON scenario document.

    Raises ParseError for malformed JSON and ValidationError for semantic
    problems; both carry a human-readable location or path.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ValidationError("scenario document must be a JSON object")

    for key in _UNSUPPORTED_KEYS:
        if key in doc:
            value = doc[key]
            if key == "mode" and value in ("unslotted", "nonbeacon"):
                continue
            raise ValidationError(
                f"Unsupported: {key}={value!r}; slotted/superframe/GTS operation"
                " is not supported (nonbeacon-enabled mode only)"
            )

    if "pan_id" not in doc:
        raise ValidationError("pan_id is required")
    pan_id = _expect_int(doc, "pan_id", 0, 0xFFFF)

    band_name = doc.get("band", "B2450")
    if band_name not in _BAND_NAMES:
        raise ValidationError(f"band must be one of {sorted(_BAND_NAMES)}")
    band = phy.BANDS[_BAND_NAMES[band_name]]

    noise_rate = doc.get("noise_rate", 0.0)
    if not isinstance(noise_rate, (int, float)) or not 0.0 <= noise_rate <= 1.0:
        raise ValidationError("noise_rate must be within [0, 1]")

    seed = _expect_int(doc, "seed", 0, 2**64 - 1) if "seed" in doc else 0

    nodes = _parse_nodes(doc.get("nodes"))
    duration = _expect_int(doc, "duration_us", 0, None) if "duration_us" in doc \
        else DEFAULT_DURATION_US

    mac_overrides = doc.get("mac", {})
    if not isinstance(mac_overrides, dict):
        raise ValidationError("mac overrides must be an object")
    try:
        mac_config = mac.MacConfig.for_band(band, **mac_overrides)
    except TypeError:
        raise ValidationError(
            f"unknown mac override among {sorted(mac_overrides)}"
        ) from None
    except ValueError as exc:
        raise ValidationError(f"mac overrides invalid: {exc}") from None

    try:
        serial = SerialLinkConfig(baud=doc.get("baud", 115200))
    except BaudOutOfRange as exc:
        raise ValidationError(f"BaudOutOfRange: {exc}") from None

    beacon_interval = doc.get("beacon_interval_us", DEFAULT_BEACON_INTERVAL_US)
    if beacon_interval is not None and (
        not isinstance(beacon_interval, int) or beacon_interval <= 0
    ):
        raise ValidationError("beacon_interval_us must be a positive integer or null")

    silence_threshold = doc.get("silence_threshold_us", DEFAULT_SILENCE_THRESHOLD_US)
    if silence_threshold is not None and (
        not isinstance(silence_threshold, int) or silence_threshold <= 0
    ):
        raise ValidationError("silence_threshold_us must be a positive integer or null")

    table = _parse_lookup_table(doc.get("lookup_table"), nodes)
    script = _parse_script(doc.get("script", []), nodes, duration, base_dir)

    return Scenario(
        pan_id=pan_id,
        nodes=nodes,
        band=band,
        noise_rate=float(noise_rate),
        seed=seed,
        mac_config=mac_config,
        serial=serial,
        beacon_interval_us=beacon_interval,
        silence_threshold_us=silence_threshold,
        lookup_table=table,
        script=script,
        duration_us=duration,
    )


def load_scenario_file(path: str | Path) -> Scenario:
    path = Path(path)
    return load_scenario(path.read_text(encoding="utf-8"), base_dir=path.parent)


def _expect_int(doc: dict, key: str, lo: int, hi: int | None) -> int:
    value = doc.get(key)
    if not isinstance(value, int) or isinstance(value, bool):
        raise ValidationError(f"{key} must be an integer")
    if value < lo or (hi is not None and value > hi):
        raise ValidationError(f"{key} out of range")
    return value


def _parse_nodes(raw) -> list[NodeSpec]:
    if not isinstance(raw, list) or not raw:
        raise ValidationError("nodes must be a non-empty list")
    specs: list[tuple[Role, int | None, tuple[int, ...]]] = []
    for i, entry in enumerate(raw):
        if not isinstance(entry, dict):
            raise ValidationError(f"nodes[{i}] must be an object")
        role_name = entry.get("role")
        if role_name not in _ROLE_NAMES:
            raise ValidationError(
                f"nodes[{i}].role must be one of {sorted(_ROLE_NAMES)}"
            )
        role = _ROLE_NAMES[role_name]
        addr = entry.get("addr")
        if addr is not None and (not isinstance(addr, int) or isinstance(addr, bool)):
            raise ValidationError(f"nodes[{i}].addr must be an integer or omitted")
        endpoints = entry.get("endpoints", [])
        if not isinstance(endpoints, list) or not all(
            isinstance(e, int) and 0 <= e <= 255 for e in endpoints
        ):
            raise ValidationError(f"nodes[{i}].endpoints must be integers 0-255")
        specs.append((role, addr, tuple(endpoints)))

    coordinators = [s for s in specs if s[0] is Role.COORDINATOR]
    if len(coordinators) != 1:
        raise ValidationError("exactly one coordinator is required")
    displays = [s for s in specs if s[0] is Role.DISPLAY_MONITOR]
    if len(displays) > 1:
        raise ValidationError("at most one display_monitor is allowed")
    end_devices = [s for s in specs if s[0] is not Role.COORDINATOR]
    if len(end_devices) > mac.MAX_END_DEVICES:
        raise ValidationError(
            f"CapacityExceeded: {len(end_devices)} end devices exceed the cap of"
            f" {mac.MAX_END_DEVICES} (256 participants including the coordinator)"
        )

    # resolve addresses: explicit ones are reserved first, then AUTO fills
    taken: set[int] = set()
    for role, addr, _ in specs:
        if role is Role.COORDINATOR:
            if addr not in (None, mac.COORDINATOR_ADDR):
                raise ValidationError("the coordinator address is fixed at 0")
        elif addr is not None:
            if not 1 <= addr <= mac.MAX_END_DEVICES:
                raise ValidationError("end device addresses must be in 1-255")
            if addr in taken:
                raise ValidationError(f"duplicate address {addr}")
            taken.add(addr)

    resolved: list[NodeSpec] = []
    next_auto = 1
    for role, addr, endpoints in specs:
        if role is Role.COORDINATOR:
            resolved.append(NodeSpec(role, mac.COORDINATOR_ADDR, endpoints))
            continue
        if addr is None:
            while next_auto in taken:
                next_auto += 1
            if next_auto > mac.MAX_END_DEVICES:
                raise ValidationError("CapacityExceeded: no free short addresses")
            addr = next_auto
            taken.add(addr)
        resolved.append(NodeSpec(role, addr, endpoints))
    return resolved


def _parse_lookup_table(raw, nodes: list[NodeSpec]) -> commands.LookupTable:
    display = next(
        (s.addr for s in nodes if s.role is Role.DISPLAY_MONITOR), None
    )
    if raw is None:
        return commands.LookupTable(text_dest=display)
    if not isinstance(raw, list):
        raise ValidationError("lookup_table must be a list")
    entries = []
    for i, entry in enumerate(raw):
        if not isinstance(entry, dict) or "pattern" not in entry:
            raise ValidationError(f"lookup_table[{i}] must carry a pattern")
        pattern = entry["pattern"]
        if pattern == commands.TableEntry.KEYPAD_PATTERN:
            entries.append(commands.TableEntry(pattern))
            continue
        action_name = entry.get("action", "ON")
        if action_name not in _ACTION_NAMES:
            raise ValidationError(
                f"lookup_table[{i}].action must be one of {sorted(_ACTION_NAMES)}"
            )
        entries.append(
            commands.TableEntry(
                pattern=pattern,
                dest=entry.get("dest", 0),
                target_endpoint=entry.get("endpoint", 0),
                action=_ACTION_NAMES[action_name],
                level=entry.get("level", 0),
            )
        )
    entries.append(commands.TableEntry(commands.TableEntry.KEYPAD_PATTERN))
    try:
        return commands.LookupTable(entries=tuple(entries), text_dest=display)
    except ValueError as exc:
        raise ValidationError(str(exc)) from None


def _parse_script(raw, nodes, duration, base_dir) -> list[Stimulus]:
    if not isinstance(raw, list):
        raise ValidationError("script must be a list")
    addrs = {s.addr for s in nodes}
    stimuli: list[Stimulus] = []
    last_at = 0
    for i, entry in enumerate(raw):
        if not isinstance(entry, dict):
            raise ValidationError(f"script[{i}] must be an object")
        at = entry.get("at")
        if not isinstance(at, int) or at < 0:
            raise ValidationError(f"script[{i}].at must be a non-negative integer")
        if at < last_at:
            raise ValidationError("script stimuli must be sorted by time")
        last_at = at
        kind = entry.get("stimulus")
        if kind == "typed_input":
            text = entry.get("input")
            if not isinstance(text, str) or text == "":
                raise ValidationError(f"script[{i}].input must be a non-empty string")
            stimuli.append(TypedInput(at, text))
        elif kind == "dtmf_audio":
            ref = entry.get("wav")
            if not isinstance(ref, str):
                raise ValidationError(f"script[{i}].wav must be a file path")
            path = Path(base_dir) / ref if base_dir else Path(ref)
            if not path.exists():
                raise ValidationError(f"missing DTMF audio file: {path}")
            try:
                samples, rate = dtmf.read_wav(str(path))
            except dtmf.UnsupportedFormat as exc:
                raise ValidationError(f"script[{i}].wav: {exc}") from None
            stimuli.append(DtmfAudio(at, samples, rate, ref))
        elif kind == "inject_raw_frame":
            hex_text = entry.get("hex")
            if not isinstance(hex_text, str):
                raise ValidationError(f"script[{i}].hex must be a hex string")
            try:
                octets = bytes.fromhex(hex_text)
            except ValueError:
                raise ValidationError(f"script[{i}].hex is not valid hex") from None
            if len(octets) > phy.MAX_PSDU_OCTETS:
                raise ValidationError(f"script[{i}]: injected PSDU exceeds 127 octets")
            pan_override = entry.get("pan_id")
            if pan_override is not None and not isinstance(pan_override, int):
                raise ValidationError(f"script[{i}].pan_id must be an integer")
            stimuli.append(InjectRawFrame(at, octets, pan_override))
        elif kind == "drop_node":
            addr = entry.get("addr")
            if addr not in addrs:
                raise ValidationError(f"script[{i}].addr is not a scenario node")
            stimuli.append(DropNode(at, addr))
        else:
            raise ValidationError(f"script[{i}].stimulus kind {kind!r} is unknown")
    if stimuli and duration < last_at:
        raise ValidationError("duration_us must cover the last stimulus")
    return stimuli


def patch_pan_id(octets: bytes, pan_id: int) -> bytes:
    """Rewrite a frame's PAN id in place and fix up its FCS."""
    if len(octets) < mac.MIN_FRAME_OCTETS:
        return octets
    buf = bytearray(octets)
    buf[3:5] = pan_id.to_bytes(2, "little")
    fcs = mac.crc16_itu(bytes(buf[:-2]))
    buf[-2:] = fcs.to_bytes(2, "little")
    return bytes(buf)


# --- engine -----------------------------------------------------------------

@dataclass
class _PendingAck:
    seq: int
    peer: int
    timeout_event: "_Event"
    resume: callable


class _Event:
    __slots__ = ("at", "key", "idx", "fn", "cancelled")

    def __init__(self, at, key, idx, fn):
        self.at, self.key, self.idx, self.fn = at, key, idx, fn
        self.cancelled = False

    def __lt__(self, other):
        return (self.at, self.key, self.idx) < (other.at, other.key, other.idx)


class _SimNode:
    def __init__(self, spec: NodeSpec, rng: NodeRng):
        self.spec = spec
        self.addr = spec.addr
        self.role = spec.role
        self.rng = rng
        self.state = NodeState(addr=spec.addr, role=spec.role)
        for ep in spec.endpoints:
            self.state.endpoints[ep] = devices.LEVEL_OFF
        self.seq = 0
        self.mac_busy = False
        self.tx_queue: deque = deque()
        self.pending_ack: _PendingAck | None = None
        self.last_seq_from: dict[int, int] = {}
        self.dropped = False

    def next_seq(self) -> int:
        value = self.seq
        self.seq = (self.seq + 1) % 256
        return value


class Engine:
    """One simulation instance; owns all state and the event loop."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.band = scenario.band
        self.cfg = scenario.mac_config
        self.medium = phy.Medium(scenario.band, scenario.noise_rate)
        self.registry = mac.PanRegistry(scenario.pan_id)
        self.now = 0
        self.records: list[LogRecord] = []
        self._step_cursor = 0
        self._serial_free_at = 0
        self._heap: list[_Event] = []
        self._counter = 0
        self.nodes: dict[int, _SimNode] = {}
        for spec in scenario.nodes:
            self.nodes[spec.addr] = _SimNode(spec, NodeRng(scenario.seed, spec.addr))
        self._display = next(
            (n for n in self.nodes.values() if n.role is Role.DISPLAY_MONITOR), None
        )
        self._schedule(0, ENGINE_KEY, self._associate_all)
        for stim in scenario.script:
            self._schedule(stim.at, ENGINE_KEY, partial(self._apply_stimulus, stim))
        if scenario.beacon_interval_us is not None:
            first = scenario.beacon_interval_us
            if first <= scenario.duration_us:
                self._schedule(first, ENGINE_KEY, self._beacon_tick)
        if scenario.silence_threshold_us is not None and self._display is not None:
            first = scenario.silence_threshold_us
            if first <= scenario.duration_us:
                self._schedule(first, ENGINE_KEY, self._census_tick)

    # -- scheduling ----------------------------------------------------------

    def _schedule(self, at: int, key: int, fn) -> _Event:
        if at < self.now:
            raise RuntimeError("cannot schedule into the past")
        ev = _Event(at, key, self._counter, fn)
        self._counter += 1
        heapq.heappush(self._heap, ev)
        return ev

    def next_event_time(self) -> int | None:
        while self._heap and self._heap[0].cancelled:
            heapq.heappop(self._heap)
        return self._heap[0].at if self._heap else None

    def _advance_one_event(self) -> bool:
        while self._heap:
            ev = heapq.heappop(self._heap)
            if ev.cancelled:
                continue
            self.now = ev.at
            ev.fn()
            return True
        return False

    def step(self) -> LogRecord | None:
        """Advance until exactly one more record is produced; None when done.

        Interleaving step() with the bulk-run methods is allowed: step
        yields only records produced after the last bulk run.
        """
        while self._step_cursor >= len(self.records):
            if not self._advance_one_event():
                return None
        record = self.records[self._step_cursor]
        self._step_cursor += 1
        return record

    def run_until(self, t: int) -> None:
        """Process every event scheduled at or before t."""
        while True:
            nxt = self.next_event_time()
            if nxt is None or nxt > t:
                break
            self._advance_one_event()
        self._step_cursor = len(self.records)

    def advance_batch(self, max_events: int) -> bool:
        """Process up to max_events events; False once the queue is empty."""
        for _ in range(max_events):
            if not self._advance_one_event():
                self._step_cursor = len(self.records)
                return False
        self._step_cursor = len(self.records)
        return True

    def run_to_completion(self) -> None:
        while self._advance_one_event():
            pass
        self._step_cursor = len(self.records)

    def is_done(self) -> bool:
        return self.next_event_time() is None

    # -- logging ---------------------------------------------------------------

    def _log(self, kind: RecordKind, body: dict) -> LogRecord:
        record = LogRecord(self.now, kind.value, body)
        self.records.append(record)
        return record

    # -- membership ------------------------------------------------------------

    def known_sources(self) -> set[int]:
        return {mac.COORDINATOR_ADDR} | set(self.registry.members)

    def _associate_all(self) -> None:
        for addr in sorted(self.nodes):
            node = self.nodes[addr]
            if node.role is not Role.COORDINATOR:
                self.registry.associate(addr, pan_id=self.scenario.pan_id, now=self.now)
            node.state.associated = True
            self._log(
                RecordKind.MAC_EVENT,
                {"event": "associated", "node": addr, "role": node.role.value},
            )
            if node.role is Role.ACTUATOR:
                self._log_device_state(node)

    def _log_device_state(self, node: _SimNode) -> None:
        self._log(
            RecordKind.DEVICE_STATE,
            {
                "node": node.addr,
                "endpoints": {str(k): v for k, v in sorted(node.state.endpoints.items())},
            },
        )

    # -- stimuli -----------------------------------------------------------------

    def _apply_stimulus(self, stim: Stimulus) -> None:
        if isinstance(stim, TypedInput):
            body = {"type": "typed_input", "input": stim.input}
            self._classify_and_submit(stim.input, body)
        elif isinstance(stim, DtmfAudio):
            events = dtmf.decode_key_sequence(stim.samples, stim.sample_rate)
            keys = dtmf.keys_of(events)
            body = {"type": "dtmf_audio", "source": stim.source, "keys": keys}
            if keys:
                self._classify_and_submit(keys, body)
            else:
                self._log(RecordKind.STIMULUS, body)
        elif isinstance(stim, InjectRawFrame):
            octets = stim.octets
            if stim.pan_override is not None:
                octets = patch_pan_id(octets, stim.pan_override)
            self._log(
                RecordKind.STIMULUS,
                {"type": "inject_raw_frame", "octets": octets.hex()},
            )
            self._begin_tx(None, octets)
        elif isinstance(stim, DropNode):
            self._log(RecordKind.STIMULUS, {"type": "drop_node", "addr": stim.addr})
            self.nodes[stim.addr].dropped = True

    def _classify_and_submit(self, text: str, body: dict) -> None:
        try:
            instr = commands.classify_and_parse(text, self.scenario.lookup_table)
        except MonitomationError as exc:
            body["error"] = type(exc).__name__
            self._log(RecordKind.STIMULUS, body)
            return
        body["instruction"] = instruction_to_dict(instr)
        self._log(RecordKind.STIMULUS, body)
        try:
            self.submit_instruction(instr)
        except MonitomationError as exc:
            self._log(
                RecordKind.MAC_EVENT,
                {"event": "submit_rejected", "node": 0, "error": type(exc).__name__},
            )

    # -- coordinator submissions --------------------------------------------------

    def submit_instruction(self, instr: commands.Instruction, on_result=None) -> int:
        """Front-end submission: serial hop, then an acknowledged MAC send.

        Returns the sequence number assigned to the outgoing frame;
        ``on_result`` fires with the TxResult when the transaction ends.
        """
        payload = commands.encode_payload(instr)
        if not self.registry.is_member(instr.dest):
            raise devices.DestinationUnknown(f"address {instr.dest} is not associated")
        coord = self.nodes[mac.COORDINATOR_ADDR]
        seq = coord.next_seq()
        frame = mac.Frame(
            frame_type=mac.FrameType.DATA,
            seq=seq,
            pan_id=self.scenario.pan_id,
            dest=instr.dest,
            src=mac.COORDINATOR_ADDR,
            payload=payload,
        )
        # the serial link is one byte stream: overlapping submissions queue
        start = max(self.now, self._serial_free_at)
        done_at = start + serial_delay_us(self.scenario.serial, len(payload))
        self._serial_free_at = done_at
        self._schedule(
            done_at,
            mac.COORDINATOR_ADDR,
            partial(self._mac_submit, coord, frame, on_result),
        )
        return seq

    def _mac_submit(self, node: _SimNode, frame: mac.Frame, on_result) -> None:
        self._log(
            RecordKind.MAC_EVENT,
            {
                "event": "mac_submit",
                "node": node.addr,
                "seq": frame.seq,
                "dest": frame.dest,
                "octets": len(frame.payload),
            },
        )
        self._enqueue_transaction(node, frame, on_result)

    def schedule_unicast(
        self, src_addr: int, dest_addr: int, payload: bytes, at: int, on_result=None
    ) -> None:
        """Schedule a raw acknowledged DATA frame from any node (test/demo hook)."""
        node = self.nodes[src_addr]

        def fire():
            frame = mac.Frame(
                frame_type=mac.FrameType.DATA,
                seq=node.next_seq(),
                pan_id=self.scenario.pan_id,
                dest=dest_addr,
                src=src_addr,
                payload=payload,
            )
            self._enqueue_transaction(node, frame, on_result)

        self._schedule(at, src_addr, fire)

    # -- MAC transaction machinery ---------------------------------------------

    def _enqueue_transaction(self, node: _SimNode, frame: mac.Frame, on_result=None):
        node.tx_queue.append((frame, on_result))
        self._pump_mac(node)

    def _pump_mac(self, node: _SimNode) -> None:
        if node.mac_busy or not node.tx_queue or node.dropped:
            return
        node.mac_busy = True
        frame, on_result = node.tx_queue.popleft()
        if frame.is_broadcast():
            gen = mac.csma_ca_transmit(mac.encode_frame(frame), self.cfg, node.rng)
        else:
            gen = mac.send_with_ack(frame, self.cfg, node.rng)

        def done(result):
            node.mac_busy = False
            self._log(
                RecordKind.MAC_EVENT,
                {
                    "event": "send_result",
                    "node": node.addr,
                    "dest": frame.dest,
                    "seq": frame.seq,
                    "result": result.value,
                },
            )
            if on_result is not None:
                on_result(result)
            self._pump_mac(node)

        self._drive(node, gen, None, done)

    def _drive(self, node: _SimNode, gen, value, on_done) -> None:
        """Interpret a MAC generator's channel requests against the medium."""
        while True:
            if node.dropped:
                gen.close()
                return
            try:
                req = gen.send(value)
            except StopIteration as stop:
                on_done(stop.value)
                return
            if isinstance(req, mac.Delay):
                if req.us <= 0:
                    value = None
                    continue
                self._schedule(
                    self.now + req.us,
                    node.addr,
                    partial(self._drive, node, gen, None, on_done),
                )
                return
            if isinstance(req, mac.CcaProbe):
                value = self.medium.cca(self.now)
                continue
            if isinstance(req, mac.TransmitRequest):
                duration = self._begin_tx(node.addr, req.psdu)
                self._schedule(
                    self.now + duration,
                    node.addr,
                    partial(self._drive, node, gen, None, on_done),
                )
                return
            if isinstance(req, mac.AwaitAck):
                self._register_ack_wait(node, gen, req, on_done)
                return
            raise TypeError(f"unknown MAC request {req!r}")

    def _register_ack_wait(self, node, gen, req: mac.AwaitAck, on_done) -> None:
        def on_timeout():
            node.pending_ack = None
            self._drive(node, gen, False, on_done)

        timeout_ev = self._schedule(self.now + req.timeout_us, node.addr, on_timeout)

        def resume_with_ack():
            timeout_ev.cancelled = True
            node.pending_ack = None
            self._drive(node, gen, True, on_done)

        node.pending_ack = _PendingAck(req.seq, req.peer, timeout_ev, resume_with_ack)

    # -- radio ----------------------------------------------------------------

    def _begin_tx(self, tx_addr: int | None, psdu: bytes) -> int:
        duration = phy.airtime(len(psdu), self.band)
        tx = phy.Transmission(
            tx_node=tx_addr,
            start=self.now,
            end=self.now + duration,
            psdu=psdu,
            band=self.band.band_id,
        )
        self.medium.begin(tx)
        self._log(
            RecordKind.TX,
            {
                "node": EXTERNAL_NODE if tx_addr is None else tx_addr,
                "start": tx.start,
                "end": tx.end,
                "frame_hex": psdu.hex(),
            },
        )
        self._schedule(tx.end, ENGINE_KEY, partial(self._deliver, tx))
        return duration

    def _deliver(self, tx: phy.Transmission) -> None:
        self.medium.end(tx)
        for addr in sorted(self.nodes):
            node = self.nodes[addr]
            if node.addr == tx.tx_node or node.dropped:
                continue
            outcome = self.medium.receive(tx, addr, node.rng)
            self._log(
                RecordKind.RX,
                {
                    "node": addr,
                    "tx_node": EXTERNAL_NODE if tx.tx_node is None else tx.tx_node,
                    "tx_start": tx.start,
                    "status": outcome.status.value,
                    "lqi": outcome.lqi,
                    "frame_hex": outcome.psdu.hex(),
                },
            )
            self._node_rx(node, outcome)

    def _node_rx(self, node: _SimNode, outcome: phy.ReceptionOutcome) -> None:
        decoded: mac.Frame | mac.FrameDecodeError
        try:
            decoded = mac.decode_frame(outcome.psdu)
        except mac.FrameDecodeError as exc:
            decoded = exc

        if node.role is Role.DISPLAY_MONITOR:
            buffered_before = len(node.state.display_buffer)
            events = devices.display_on_frame(
                node.state,
                decoded,
                outcome.psdu,
                self.scenario.pan_id,
                self.known_sources(),
                self.now,
            )
            for event in events:
                self._log(
                    RecordKind.MONITOR_EVENT, {"node": node.addr, **event.body()}
                )
            if len(node.state.display_buffer) > buffered_before:
                self._log(
                    RecordKind.DEVICE_STATE,
                    {
                        "node": node.addr,
                        "display_last": node.state.display_buffer[-1],
                        "display_len": len(node.state.display_buffer),
                    },
                )

        if isinstance(decoded, mac.FrameDecodeError):
            return
        frame = decoded
        if frame.pan_id != self.scenario.pan_id:
            return
        if frame.src not in self.known_sources():
            return

        if frame.frame_type is mac.FrameType.ACK:
            pa = node.pending_ack
            if (
                pa is not None
                and frame.seq == pa.seq
                and frame.src == pa.peer
                and frame.dest == node.addr
            ):
                pa.resume()
            return

        if frame.dest != node.addr:
            return
        if frame.frame_type not in (mac.FrameType.DATA, mac.FrameType.MAC_COMMAND):
            return

        # automatic acknowledgment after one turnaround, bypassing CSMA
        ack_raw = mac.encode_frame(mac.ack_for(frame, node.addr))
        self._schedule(
            self.now + self.cfg.turnaround_us,
            node.addr,
            partial(self._fire_ack, node, ack_raw),
        )

        if node.last_seq_from.get(frame.src) == frame.seq:
            return  # retransmission of a frame already handled
        node.last_seq_from[frame.src] = frame.seq
        self._device_handle(node, frame)

    def _fire_ack(self, node: _SimNode, raw: bytes) -> None:
        if node.dropped:
            return
        self._begin_tx(node.addr, raw)

    def _device_handle(self, node: _SimNode, frame: mac.Frame) -> None:
        if node.role is Role.ACTUATOR:
            result = devices.actuator_on_frame(
                node.state, frame, self.scenario.pan_id, self.known_sources()
            )
            if result.changed:
                self._log_device_state(node)
            if result.reply is not None:
                reply_frame = mac.Frame(
                    frame_type=mac.FrameType.DATA,
                    seq=node.next_seq(),
                    pan_id=self.scenario.pan_id,
                    dest=result.reply.dest,
                    src=node.addr,
                    payload=commands.encode_payload(result.reply),
                )
                self._enqueue_transaction(node, reply_frame)

    # -- periodic sources --------------------------------------------------------

    def _beacon_tick(self) -> None:
        coord = self.nodes[mac.COORDINATOR_ADDR]
        frame = mac.beacon_tick(
            self.registry,
            self.now,
            coord.next_seq(),
            self.scenario.beacon_interval_us,
        )
        if frame is not None:
            self._enqueue_transaction(coord, frame)
        nxt = self.now + self.scenario.beacon_interval_us
        if nxt <= self.scenario.duration_us:
            self._schedule(nxt, ENGINE_KEY, self._beacon_tick)

    def _census_tick(self) -> None:
        threshold = self.scenario.silence_threshold_us
        if self._display is not None and not self._display.dropped:
            events = devices.monitor_census(
                self._display.state, self.now, threshold, self.registry.members
            )
            for event in events:
                self._log(
                    RecordKind.MONITOR_EVENT,
                    {"node": self._display.addr, **event.body()},
                )
        nxt = self.now + threshold
        if nxt <= self.scenario.duration_us:
            self._schedule(nxt, ENGINE_KEY, self._census_tick)

    # -- results ------------------------------------------------------------------

    def node_snapshots(self) -> list[dict]:
        return [self.nodes[a].state.snapshot() for a in sorted(self.nodes)]


def instruction_to_dict(instr: commands.Instruction) -> dict:
    if instr.kind is commands.Kind.TEXT:
        return {"kind": "TEXT", "dest": instr.dest, "text": instr.text}
    return {
        "kind": "CONTROL",
        "dest": instr.dest,
        "endpoint": instr.target_endpoint,
        "action": instr.action.name,
        "level": instr.level,
    }


@dataclass
class SimResult:
    nodes: list[dict]
    records: list[LogRecord]

    def log_lines(self) -> list[str]:
        return [r.to_json_line() for r in self.records]

    def log_text(self) -> str:
        return "".join(line + "\n" for line in self.log_lines())

    def summary(self) -> dict:
        counts = {"DELIVERED": 0, "NO_ACK": 0, "CHANNEL_ACCESS_FAILURE": 0}
        tx = rx = texts = intrusions = corrupt = 0
        for r in self.records:
            if r.kind == RecordKind.TX.value:
                tx += 1
            elif r.kind == RecordKind.RX.value:
                rx += 1
            elif r.kind == RecordKind.MAC_EVENT.value:
                if r.body.get("event") == "send_result":
                    result = r.body.get("result")
                    if result in counts:
                        counts[result] += 1
            elif r.kind == RecordKind.MONITOR_EVENT.value:
                category = r.body.get("category")
                if category == MonitorCategory.TEXT_SHOWN.value:
                    texts += 1
                elif category in (
                    MonitorCategory.INTRUSION_FOREIGN_PAN.value,
                    MonitorCategory.INTRUSION_UNKNOWN_SOURCE.value,
                ):
                    intrusions += 1
                elif category == MonitorCategory.FRAME_CORRUPT.value:
                    corrupt += 1
        final_endpoints = {
            str(n["addr"]): n["endpoints"]
            for n in self.nodes
            if n["role"] == Role.ACTUATOR.value
        }
        return {
            "tx_frames": tx,
            "rx_outcomes": rx,
            "delivered": counts["DELIVERED"],
            "no_ack": counts["NO_ACK"],
            "channel_access_failures": counts["CHANNEL_ACCESS_FAILURE"],
            "texts_shown": texts,
            "intrusions": intrusions,
            "corrupt_frames": corrupt,
            "final_endpoints": final_endpoints,
        }


def run(scenario: Scenario) -> SimResult:
    """Execute a scenario to completion; pure function of the scenario."""
    engine = Engine(scenario)
    engine.run_to_completion()
    return SimResult(nodes=engine.node_snapshots(), records=engine.records)
