"""Command-line entry point.

Subcommands: run (headless scenario execution), dtmf-decode (WAV to keys
and instruction), send / events (thin HTTP clients against a gateway),
verify-log (re-check log invariants), serve (start the gateway).

Exit codes: 0 success, 1 usage error, 2 scenario/validation/format error,
3 runtime I/O error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import urllib.error
import urllib.request
from pathlib import Path

from . import commands, dtmf, engine
from .engine import LogRecord, ParseError, ValidationError
from .errors import MonitomationError
from .mac import crc16_itu

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_IO = 3


class _Parser(argparse.ArgumentParser):
    """argparse variant honoring the exit-code contract (usage errors -> 1)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> _Parser:
    parser = _Parser(prog="monitomation", description=__doc__)
    sub = parser.add_subparsers(dest="subcommand", parser_class=_Parser)
    sub.required = True

    p_run = sub.add_parser("run", help="run a scenario headless")
    p_run.add_argument("--scenario", required=True, help="scenario JSON file")
    p_run.add_argument("--seed", type=int, default=None, help="override the seed")
    p_run.add_argument("--out", default=None, help="write the JSON-lines log here")
    p_run.add_argument("--json", action="store_true", help="machine-readable summary")

    p_dtmf = sub.add_parser("dtmf-decode", help="decode a DTMF WAV file")
    p_dtmf.add_argument("--wav", required=True, help="mono 16-bit PCM WAV file")
    p_dtmf.add_argument("--json", action="store_true", help="machine-readable output")

    p_send = sub.add_parser("send", help="send a message or command via a gateway")
    p_send.add_argument("--gateway", default="http://127.0.0.1:8430")
    p_send.add_argument("--to", type=int, default=None, help="destination address")
    group = p_send.add_mutually_exclusive_group(required=True)
    group.add_argument("--text", help="free-text message")
    group.add_argument("--input", help="raw input run through classification")

    p_events = sub.add_parser("events", help="fetch event records from a gateway")
    p_events.add_argument("--gateway", default="http://127.0.0.1:8430")
    p_events.add_argument("--after", type=int, default=0)
    p_events.add_argument("--limit", type=int, default=1000)

    p_verify = sub.add_parser("verify-log", help="re-check a log's invariants")
    p_verify.add_argument("--log", required=True, help="JSON-lines log file")

    p_serve = sub.add_parser("serve", help="start the gateway service")
    p_serve.add_argument("--scenario", default=None)
    p_serve.add_argument("--config", default=None, help="gateway config JSON file")
    p_serve.add_argument("--port", type=int, default=None)
    p_serve.add_argument("--host", default=None)
    p_serve.add_argument("--baud", type=int, default=None)
    p_serve.add_argument("--speed", type=float, default=None)
    p_serve.add_argument("--log", default=None, help="append-only event log file")
    p_serve.add_argument("--ui-dir", default=None, help="static console bundle dir")
    p_serve.add_argument("--fsync", choices=["never", "always"], default=None)
    p_serve.add_argument("--paused", action="store_true")

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    handler = {
        "run": _cmd_run,
        "dtmf-decode": _cmd_dtmf_decode,
        "send": _cmd_send,
        "events": _cmd_events,
        "verify-log": _cmd_verify_log,
        "serve": _cmd_serve,
    }[args.subcommand]
    try:
        return handler(args)
    except (ParseError, ValidationError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except MonitomationError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


def _cmd_run(args) -> int:
    path = Path(args.scenario)
    text = path.read_text(encoding="utf-8")  # missing file -> OSError -> exit 3
    scenario = engine.load_scenario(text, base_dir=path.parent)
    if args.seed is not None:
        scenario.seed = args.seed
    result = engine.run(scenario)
    if args.out:
        Path(args.out).write_text(result.log_text(), encoding="utf-8")
    summary = result.summary()
    if args.json:
        print(json.dumps(summary))
    else:
        print(f"frames: {summary['tx_frames']} TX / {summary['rx_outcomes']} RX")
        print(
            f"deliveries: {summary['delivered']} DELIVERED,"
            f" {summary['no_ack']} NO_ACK,"
            f" {summary['channel_access_failures']} CHANNEL_ACCESS_FAILURE"
        )
        print(f"texts shown: {summary['texts_shown']}")
        print(
            f"intrusions: {summary['intrusions']}"
            f" (corrupt frames: {summary['corrupt_frames']})"
        )
        for addr, endpoints in summary["final_endpoints"].items():
            print(f"endpoints: node {addr}: {endpoints}")
    return EXIT_OK


def _cmd_dtmf_decode(args) -> int:
    samples, rate = dtmf.read_wav(args.wav)  # format errors -> exit 2
    events = dtmf.decode_key_sequence(samples, rate)
    keys = dtmf.keys_of(events)
    instruction = None
    control = commands.parse_keypad(keys) if keys else None
    if control is not None:
        instruction = engine.instruction_to_dict(control)
    elif keys:
        instruction = {"kind": "TEXT", "dest": None, "text": keys}
    if args.json:
        print(json.dumps({"keys": keys, "instruction": instruction}))
    else:
        print(keys)
        if instruction is not None:
            print(json.dumps(instruction))
    return EXIT_OK


def _http_json(url: str, body: dict | None = None) -> dict:
    data = json.dumps(body).encode("utf-8") if body is not None else None
    req = urllib.request.Request(
        url, data=data, headers={"Content-Type": "application/json"}
    )
    try:
        with urllib.request.urlopen(req, timeout=60) as resp:
            return json.loads(resp.read().decode("utf-8"))
    except urllib.error.HTTPError as exc:
        detail = exc.read().decode("utf-8", errors="replace")
        raise MonitomationError(f"gateway returned {exc.code}: {detail}") from None
    except urllib.error.URLError as exc:
        raise OSError(f"cannot reach gateway: {exc.reason}") from None


def _cmd_send(args) -> int:
    base = args.gateway.rstrip("/")
    if args.text is not None:
        body = {"text": args.text}
        if args.to is not None:
            body["to"] = args.to
        reply = _http_json(f"{base}/api/v1/messages", body)
    else:
        reply = _http_json(f"{base}/api/v1/commands", {"input": args.input})
    print(json.dumps(reply))
    return EXIT_OK


def _cmd_events(args) -> int:
    base = args.gateway.rstrip("/")
    reply = _http_json(
        f"{base}/api/v1/events?after={args.after}&limit={args.limit}"
    )
    for record in reply.get("records", []):
        print(json.dumps(record))
    return EXIT_OK


# -- log verification -----------------------------------------------------------

_VALID_KINDS = {"TX", "RX", "MAC_EVENT", "MONITOR_EVENT", "DEVICE_STATE", "STIMULUS"}
_CORRUPT_OK_CATEGORIES = {"FRAME_CORRUPT", "NODE_SILENT"}


def verify_log_lines(lines: list[str]) -> str | None:
    """Re-check a log's structural invariants; None when clean.

    Checks: parseability, known kinds, non-decreasing timestamps, FCS
    validity of embedded frames where validity is promised (internal TX
    records, monitor events outside the corrupt categories), RX-to-TX
    conservation, and one-primary-event-per-frame monitor precedence.
    """
    records: list[LogRecord] = []
    for i, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            record = LogRecord.from_json_line(line)
        except (json.JSONDecodeError, KeyError, TypeError):
            return f"record {i}: not a valid log record"
        if record.kind not in _VALID_KINDS:
            return f"record {i}: unknown kind {record.kind!r}"
        records.append(record)

    last_at = None
    for i, r in enumerate(records, start=1):
        if last_at is not None and r.at < last_at:
            return f"record {i}: non-monotonic timestamp"
        last_at = r.at

    tx_index: dict[tuple, set] = {}
    for i, r in enumerate(records, start=1):
        if r.kind == "TX":
            body = r.body
            key = (body.get("node"), body.get("start"))
            tx_index.setdefault(key, set()).add(body.get("end"))
            if body.get("node") != "external":
                if not _fcs_ok(body.get("frame_hex", "")):
                    return f"FCS mismatch in record {i}"
        elif r.kind == "MONITOR_EVENT":
            category = r.body.get("category")
            frame_hex = r.body.get("frame_hex", "")
            if category not in _CORRUPT_OK_CATEGORIES and frame_hex:
                if not _fcs_ok(frame_hex):
                    return f"FCS mismatch in record {i}"

    for i, r in enumerate(records, start=1):
        if r.kind != "RX":
            continue
        key = (r.body.get("tx_node"), r.body.get("tx_start"))
        if key not in tx_index:
            return f"record {i}: RX without a matching TX"
        if r.at not in tx_index[key]:
            return f"record {i}: RX timestamp differs from its TX end time"

    seen_frames: set[tuple] = set()
    for i, r in enumerate(records, start=1):
        if r.kind != "MONITOR_EVENT":
            continue
        if r.body.get("category") == "NODE_SILENT":
            continue
        key = (r.at, r.body.get("frame_hex"))
        if key in seen_frames:
            return f"record {i}: frame yielded more than one primary monitor event"
        seen_frames.add(key)
    return None


def _fcs_ok(frame_hex: str) -> bool:
    try:
        raw = bytes.fromhex(frame_hex)
    except ValueError:
        return False
    if len(raw) < 11:
        return False
    return crc16_itu(raw[:-2]) == int.from_bytes(raw[-2:], "little")


def _cmd_verify_log(args) -> int:
    lines = Path(args.log).read_text(encoding="utf-8").splitlines()
    violation = verify_log_lines(lines)
    if violation is None:
        print("ok")
        return EXIT_OK
    print(violation, file=sys.stderr)
    return EXIT_VALIDATION


# -- gateway --------------------------------------------------------------------

def _env(name: str, cast=str):
    value = os.environ.get(name)
    if value is None:
        return None
    try:
        return cast(value)
    except ValueError:
        raise ValidationError(f"environment variable {name} is not a valid {cast.__name__}")


def _cmd_serve(args) -> int:
    from .gateway import DEFAULT_PORT, GatewayConfig, serve
    from .serial_link import SerialLinkConfig

    file_cfg = {}
    config_path = args.config or _env("MONITOMATION_CONFIG")
    if config_path:
        file_cfg = json.loads(Path(config_path).read_text(encoding="utf-8"))
        if not isinstance(file_cfg, dict):
            raise ValidationError("gateway config file must hold a JSON object")

    def pick(flag, env_name, file_key, default, cast=str):
        if flag is not None:
            return flag
        env_value = _env(env_name, cast)
        if env_value is not None:
            return env_value
        if file_key in file_cfg:
            return file_cfg[file_key]
        return default

    scenario_path = pick(args.scenario, "MONITOMATION_SCENARIO", "scenario", None)
    if scenario_path is None:
        print("a scenario is required (--scenario or MONITOMATION_SCENARIO)", file=sys.stderr)
        return EXIT_USAGE
    scenario = engine.load_scenario_file(scenario_path)

    baud = pick(args.baud, "MONITOMATION_BAUD", "baud", None, int)
    if baud is not None:
        scenario.serial = SerialLinkConfig(baud=baud)

    config = GatewayConfig(
        host=pick(args.host, "MONITOMATION_HOST", "host", "127.0.0.1"),
        port=pick(args.port, "MONITOMATION_PORT", "port", DEFAULT_PORT, int),
        speed=pick(args.speed, "MONITOMATION_SPEED", "speed", 1.0, float),
        log_path=pick(args.log, "MONITOMATION_LOG", "log", None),
        fsync=pick(args.fsync, "MONITOMATION_FSYNC", "fsync", "never"),
        ui_dir=pick(args.ui_dir, "MONITOMATION_UI_DIR", "ui_dir", None),
        paused=args.paused or bool(file_cfg.get("paused", False)),
    )
    serve(scenario, config)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
