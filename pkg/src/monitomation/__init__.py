"""Desk-scale wireless monitoring, messaging and task automation network.

A simplified IEEE 802.15.4 PHY/MAC over a simulated radio channel, a
lookup-table instruction flow with typed and DTMF keypad input, three
device roles (coordinator, actuator, display/monitor), a deterministic
scenario engine, an operator gateway service and a CLI.
"""

from .commands import (
    Action,
    Instruction,
    Kind,
    LookupTable,
    TableEntry,
    classify_and_parse,
    decode_payload,
    encode_payload,
)
from .devices import MonitorCategory, MonitorEvent, NodeState, Role
from .dtmf import (
    DetectorConfig,
    KeyEvent,
    ToneBlock,
    decode_key_sequence,
    detect_key_block,
    goertzel_power,
    synthesize_key,
)
from .engine import (
    Engine,
    LogRecord,
    Scenario,
    SimResult,
    load_scenario,
    load_scenario_file,
    run,
)
from .errors import MonitomationError, SizeError
from .mac import (
    Frame,
    FrameType,
    MacConfig,
    PanRegistry,
    SendStatus,
    TxResult,
    crc16_itu,
    decode_frame,
    encode_frame,
)
from .phy import (
    BAND_868,
    BAND_915,
    BAND_2450,
    BANDS,
    BandConfig,
    BandId,
    Medium,
    ReceptionOutcome,
    RxStatus,
    Transmission,
    airtime,
)
from .rng import NodeRng
from .serial_link import SerialLinkConfig, serial_delay_us, uart_byte_time_us

__version__ = "0.1.0"
