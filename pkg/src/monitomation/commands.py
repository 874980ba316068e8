"""Instruction classification and over-the-air payload codec.

User input, whether typed or decoded from keypad tones, flows through one
classification step: the input is looked up in an ordered table of control
patterns, then matched against the keypad control grammar; anything left
over is a free-text message for the display node.

Keypad control grammar::

    *<dest digits>*<endpoint digits>*<action digit>#           actions 0,1,2,9
    *<dest digits>*<endpoint digits>*3*<level digits>#         SET_LEVEL

with action digits 0=OFF, 1=ON, 2=TOGGLE, 3=SET_LEVEL, 9=QUERY and all
numeric fields in 0-255. Strings that look keypad-ish but do not fully
match the grammar (bad ranges, missing '#', stray fields) fall through to
free text rather than erroring.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass

from .errors import MonitomationError, SizeError

MAX_TEXT_OCTETS = 112


class Kind(enum.Enum):
    TEXT = 1
    CONTROL = 2


class Action(enum.Enum):
    OFF = 0
    ON = 1
    TOGGLE = 2
    SET_LEVEL = 3
    QUERY = 9


class EmptyInput(MonitomationError):
    pass


class TextTooLong(MonitomationError):
    pass


class PayloadDecodeError(MonitomationError):
    pass


class UnknownKind(PayloadDecodeError):
    pass


class MalformedControl(PayloadDecodeError):
    pass


class InvalidUtf8Text(PayloadDecodeError):
    pass


@dataclass(frozen=True)
class Instruction:
    """Decoded user intent: a TEXT message or a CONTROL action."""

    kind: Kind
    dest: int
    text: str = ""
    target_endpoint: int = 0
    action: Action | None = None
    level: int = 0

    @classmethod
    def make_text(cls, text: str, dest: int) -> "Instruction":
        return cls(kind=Kind.TEXT, dest=dest, text=text)

    @classmethod
    def control(
        cls, dest: int, endpoint: int, action: Action, level: int = 0
    ) -> "Instruction":
        if action is not Action.SET_LEVEL and level != 0:
            raise ValueError("level is only meaningful for SET_LEVEL")
        return cls(
            kind=Kind.CONTROL,
            dest=dest,
            target_endpoint=endpoint,
            action=action,
            level=level,
        )


_KEYPAD_RE = re.compile(r"^\*(\d{1,3})\*(\d{1,3})\*(\d)(?:\*(\d{1,3}))?#$")


def parse_keypad(text: str) -> Instruction | None:
    """Parse the keypad control grammar; None when it does not match."""
    m = _KEYPAD_RE.match(text)
    if m is None:
        return None
    dest, endpoint, action_digit, level = m.groups()
    dest_n, endpoint_n = int(dest), int(endpoint)
    if dest_n > 255 or endpoint_n > 255:
        return None
    try:
        action = Action(int(action_digit))
    except ValueError:
        return None
    if action is Action.SET_LEVEL:
        if level is None or int(level) > 255:
            return None
        return Instruction.control(dest_n, endpoint_n, action, int(level))
    if level is not None:
        return None
    return Instruction.control(dest_n, endpoint_n, action)


@dataclass(frozen=True)
class TableEntry:
    """One lookup-table row mapping a literal input to a control.

    ``pattern`` of "<keypad>" stands for the built-in keypad grammar rule
    instead of a literal string.
    """

    pattern: str
    dest: int = 0
    target_endpoint: int = 0
    action: Action = Action.ON
    level: int = 0

    KEYPAD_PATTERN = "<keypad>"

    def match(self, text: str) -> Instruction | None:
        if self.pattern == self.KEYPAD_PATTERN:
            return parse_keypad(text)
        if text == self.pattern:
            lvl = self.level if self.action is Action.SET_LEVEL else 0
            return Instruction.control(self.dest, self.target_endpoint, self.action, lvl)
        return None


@dataclass(frozen=True)
class LookupTable:
    """Ordered, first-match-wins classification table.

    ``text_dest`` is the default destination for free-text messages, which
    is the display node's address in a standard network.
    """

    entries: tuple[TableEntry, ...] = (TableEntry(TableEntry.KEYPAD_PATTERN),)
    text_dest: int | None = None

    def __post_init__(self):
        patterns = [e.pattern for e in self.entries]
        if len(patterns) != len(set(patterns)):
            raise ValueError("lookup table patterns must be unique")


DEFAULT_TABLE = LookupTable()


def classify_and_parse(text: str, table: LookupTable) -> Instruction:
    """Classify one line of user input into an Instruction.

    Table entries are tried in order; the keypad grammar is always
    honoured even if absent from the table; everything else becomes a
    TEXT instruction for the table's default text destination.
    """
    if text == "":
        raise EmptyInput("input must be non-empty")
    for entry in table.entries:
        hit = entry.match(text)
        if hit is not None:
            return hit
    hit = parse_keypad(text)
    if hit is not None:
        return hit
    encoded = text.encode("utf-8")
    if len(encoded) > MAX_TEXT_OCTETS:
        raise TextTooLong(f"text of {len(encoded)} octets exceeds {MAX_TEXT_OCTETS}")
    if table.text_dest is None:
        raise ValueError("no text destination configured")
    return Instruction.make_text(text, table.text_dest)


# --- payload codec ----------------------------------------------------------

_KIND_TEXT = 0x01
_KIND_CONTROL = 0x02


def encode_payload(i: Instruction) -> bytes:
    """Serialize an instruction into a frame payload (MSDU)."""
    if i.kind is Kind.TEXT:
        encoded = i.text.encode("utf-8")
        if len(encoded) > MAX_TEXT_OCTETS:
            raise SizeError(f"text of {len(encoded)} octets exceeds {MAX_TEXT_OCTETS}")
        return bytes([_KIND_TEXT]) + encoded
    if i.action is None:
        raise ValueError("CONTROL instruction requires an action")
    level = i.level if i.action is Action.SET_LEVEL else 0
    return bytes([_KIND_CONTROL, i.target_endpoint, i.action.value, level])


def decode_payload(p: bytes, dest: int = 0) -> Instruction:
    """Inverse of encode_payload.

    ``dest`` rides on the enclosing frame rather than in the payload, so
    callers supply it to fill in the decoded instruction.
    """
    if len(p) < 1:
        raise UnknownKind("empty payload")
    kind = p[0]
    if kind == _KIND_TEXT:
        try:
            text = p[1:].decode("utf-8")
        except UnicodeDecodeError as exc:
            raise InvalidUtf8Text(str(exc)) from None
        return Instruction.make_text(text, dest)
    if kind == _KIND_CONTROL:
        if len(p) != 4:
            raise MalformedControl(f"control payload of {len(p)} octets, expected 4")
        endpoint, action_code, level = p[1], p[2], p[3]
        try:
            action = Action(action_code)
        except ValueError:
            raise MalformedControl(f"unknown action code {action_code}") from None
        if action is not Action.SET_LEVEL and level != 0:
            raise MalformedControl("level octet must be 0 except for SET_LEVEL")
        return Instruction.control(dest, endpoint, action, level)
    raise UnknownKind(f"payload kind {kind}")
