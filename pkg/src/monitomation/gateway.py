"""Operator gateway: the software front end as an HTTP service.

Accepts typed input and DTMF audio, emulates the coordinator-side serial
link, exposes network state plus the live monitor feed over HTTP and a
server-sent-events push stream, and persists the event log to an
append-only JSON-lines file.

Concurrency: every engine mutation funnels through one command queue
consumed by a single owner thread (which also paces simulated time
against the wall clock), so concurrent API requests are totally ordered.
Event-stream fan-out reads an append-only list under a condition
variable and never touches the engine.

Log offsets are 1-based line numbers; ``GET /events?after=0`` therefore
replays the full history, and the SSE ``id:`` field carries the offset
for gap-free resumption.
"""

from __future__ import annotations

import base64
import json
import threading
import time
from collections import deque
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

from . import commands, devices, dtmf
from .engine import Engine, Scenario, instruction_to_dict
from .errors import MonitomationError
from .mac import TxResult

DEFAULT_PORT = 8430
EVENT_BATCH = 4096
PENDING = "PENDING"


class NotPaused(MonitomationError):
    pass


class GatewayTimeout(MonitomationError):
    pass


class PersistenceDegraded(MonitomationError):
    pass


@dataclass
class GatewayConfig:
    host: str = "127.0.0.1"
    port: int = DEFAULT_PORT
    speed: float = 1.0
    log_path: str | None = None
    fsync: str = "never"  # or "always"
    ui_dir: str | None = None
    paused: bool = False
    request_timeout_s: float = 30.0


class _Command:
    __slots__ = ("fn", "done", "result", "error")

    def __init__(self, fn):
        self.fn = fn
        self.done = threading.Event()
        self.result = None
        self.error = None


class _Deferred:
    """A result slot another thread fills in later."""

    def __init__(self):
        self._event = threading.Event()
        self.value = None

    def set(self, value):
        self.value = value
        self._event.set()

    def wait(self, timeout: float):
        if self._event.wait(timeout):
            return self.value
        return None


class GatewaySession:
    """One live engine plus its feed subscribers and persistence sink."""

    def __init__(self, scenario: Scenario, config: GatewayConfig | None = None):
        self.config = config or GatewayConfig()
        self.scenario = scenario
        self.engine = Engine(scenario)
        self.paused = self.config.paused
        self.speed = float(self.config.speed)
        self._cond = threading.Condition()
        self._commands: deque[_Command] = deque()
        self._lines: list[str] = []
        self._engine_published = 0
        self._degraded = False
        self._stop = False
        self._thread: threading.Thread | None = None
        self._origin_wall = time.monotonic()
        self._origin_sim = 0
        self._log_file = None
        if self.config.log_path:
            path = Path(self.config.log_path)
            if path.exists():
                with path.open("r", encoding="utf-8") as f:
                    self._lines = [line.rstrip("\n") for line in f if line.strip()]
            path.parent.mkdir(parents=True, exist_ok=True)
            self._log_file = path.open("a", encoding="utf-8")

    # -- lifecycle -------------------------------------------------------------

    def start(self) -> None:
        self._thread = threading.Thread(target=self._loop, daemon=True)
        self._thread.start()

    def stop(self) -> None:
        with self._cond:
            self._stop = True
            self._cond.notify_all()
        if self._thread is not None:
            self._thread.join(timeout=5)
        if self._log_file is not None:
            self._log_file.close()

    # -- engine thread ---------------------------------------------------------

    def _rebase(self) -> None:
        self._origin_wall = time.monotonic()
        self._origin_sim = self.engine.now

    def _loop(self) -> None:
        with self._cond:
            self._rebase()
            while not self._stop:
                if self._commands:
                    cmd = self._commands.popleft()
                    try:
                        cmd.result = cmd.fn()
                    except Exception as exc:  # surfaced on the caller's thread
                        cmd.error = exc
                    cmd.done.set()
                    self._publish_new()
                    continue
                if self.paused:
                    self._cond.wait(0.1)
                    continue
                nxt = self.engine.next_event_time()
                if nxt is None:
                    self._cond.wait(0.05)
                    continue
                if self.speed <= 0:
                    self.engine.advance_batch(EVENT_BATCH)
                    self._publish_new()
                    continue
                target = self._origin_sim + (
                    (time.monotonic() - self._origin_wall) * 1e6 * self.speed
                )
                if nxt <= target:
                    self.engine.run_until(int(target))
                    self._publish_new()
                else:
                    wait_s = (nxt - target) / (1e6 * self.speed)
                    self._cond.wait(min(max(wait_s, 0.0), 0.25))

    def _publish_new(self) -> None:
        records = self.engine.records
        while self._engine_published < len(records):
            line = records[self._engine_published].to_json_line()
            self._engine_published += 1
            self._persist(line)
            self._lines.append(line)
        self._cond.notify_all()

    def _persist(self, line: str) -> None:
        if self._log_file is None or self._degraded:
            return
        try:
            self._log_file.write(line + "\n")
            self._log_file.flush()
            if self.config.fsync == "always":
                import os

                os.fsync(self._log_file.fileno())
        except (OSError, ValueError):
            self._degraded = True

    # -- commands from API threads ----------------------------------------------

    def run_command(self, fn, timeout: float | None = None):
        cmd = _Command(fn)
        with self._cond:
            self._commands.append(cmd)
            self._cond.notify_all()
        if not cmd.done.wait(timeout or self.config.request_timeout_s):
            raise GatewayTimeout("engine command queue timed out")
        if cmd.error is not None:
            raise cmd.error
        return cmd.result

    def submit(self, instr: commands.Instruction) -> tuple[int, str]:
        """Submit an instruction; returns (seq, delivery result name)."""
        if self._degraded:
            raise PersistenceDegraded("event log sink failed")
        deferred = _Deferred()

        def fn():
            def on_result(result: TxResult):
                deferred.set(result.value)
                self._cond.notify_all()

            return self.engine.submit_instruction(instr, on_result=on_result)

        seq = self.run_command(fn)
        result = deferred.wait(self.config.request_timeout_s)
        return seq, (result if result is not None else PENDING)

    def classify(self, text: str) -> commands.Instruction:
        return commands.classify_and_parse(text, self.scenario.lookup_table)

    def nodes_snapshot(self) -> list[dict]:
        return self.run_command(self.engine.node_snapshots)

    def pause(self) -> bool:
        def fn():
            self.paused = True
            return self.paused

        return self.run_command(fn)

    def resume(self) -> bool:
        def fn():
            self.paused = False
            self._rebase()
            return self.paused

        return self.run_command(fn)

    def step_once(self) -> dict | None:
        def fn():
            if not self.paused:
                raise NotPaused("the engine is not paused")
            record = self.engine.step()
            if record is None:
                return None
            return {"at": record.at, "kind": record.kind, "body": record.body}

        return self.run_command(fn)

    # -- feed access -------------------------------------------------------------

    def lines_after(self, offset: int, limit: int | None = None) -> tuple[list[str], int]:
        """Feed lines with 1-based offsets > ``offset``; returns (lines, last)."""
        with self._cond:
            chunk = self._lines[offset:]
            if limit is not None:
                chunk = chunk[:limit]
            return list(chunk), offset + len(chunk)

    def wait_for_lines(self, offset: int, timeout: float) -> tuple[list[str], int]:
        with self._cond:
            if len(self._lines) <= offset:
                self._cond.wait(timeout)
            chunk = self._lines[offset:]
            return list(chunk), offset + len(chunk)

    @property
    def degraded(self) -> bool:
        return self._degraded


_PLACEHOLDER_PAGE = """<!doctype html>
<html><head><title>monitomation gateway</title></head>
<body><h1>monitomation gateway</h1>
<p>The operator console bundle is not configured (--ui-dir).
The JSON API lives under <code>/api/v1/</code>.</p></body></html>
"""


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "monitomation-gateway"
    session: GatewaySession = None  # patched onto the handler class

    def log_message(self, fmt, *args):  # silence default stderr chatter
        pass

    # -- helpers -----------------------------------------------------------------

    def _send_json(self, status: int, obj: dict) -> None:
        data = json.dumps(obj).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(data)

    def _error(self, status: int, name: str, detail: str = "") -> None:
        self._send_json(status, {"error": name, "detail": detail})

    def _read_body(self) -> dict:
        length = int(self.headers.get("Content-Length", 0))
        if length <= 0:
            return {}
        raw = self.rfile.read(length)
        obj = json.loads(raw.decode("utf-8"))
        if not isinstance(obj, dict):
            raise ValueError("body must be a JSON object")
        return obj

    def _handle_typed_error(self, exc: MonitomationError) -> None:
        name = type(exc).__name__
        if isinstance(exc, devices.DestinationUnknown):
            self._error(404, name, str(exc))
        elif isinstance(exc, NotPaused):
            self._error(409, name, str(exc))
        elif isinstance(exc, (GatewayTimeout, PersistenceDegraded)):
            self._error(503, name, str(exc))
        else:
            self._error(422, name, str(exc))

    # -- routing -------------------------------------------------------------------

    def do_GET(self):
        parsed = urlparse(self.path)
        route = parsed.path.rstrip("/") or "/"
        if route == "/api/v1/nodes":
            self._send_json(200, {"nodes": self.session.nodes_snapshot()})
        elif route == "/api/v1/events":
            self._get_events(parse_qs(parsed.query))
        elif route == "/api/v1/events/stream":
            self._stream_events(parse_qs(parsed.query))
        elif route == "/api/v1/status":
            self._send_json(
                200,
                {
                    "paused": self.session.paused,
                    "speed": self.session.speed,
                    "degraded": self.session.degraded,
                    "sim_time_us": self.session.engine.now,
                },
            )
        else:
            self._serve_static(route)

    def do_POST(self):
        parsed = urlparse(self.path)
        route = parsed.path.rstrip("/")
        try:
            body = self._read_body()
        except (ValueError, json.JSONDecodeError) as exc:
            self._error(400, "BadRequest", str(exc))
            return
        try:
            if route == "/api/v1/messages":
                self._post_message(body)
            elif route == "/api/v1/commands":
                self._post_command(body)
            elif route == "/api/v1/dtmf":
                self._post_dtmf(body)
            elif route == "/api/v1/sim/pause":
                self._send_json(200, {"paused": self.session.pause()})
            elif route == "/api/v1/sim/resume":
                self._send_json(200, {"paused": self.session.resume()})
            elif route == "/api/v1/sim/step":
                record = self.session.step_once()
                self._send_json(200, {"record": record, "done": record is None})
            else:
                self._error(404, "NotFound", route)
        except MonitomationError as exc:
            self._handle_typed_error(exc)

    # -- endpoint bodies --------------------------------------------------------------

    def _post_message(self, body: dict) -> None:
        text = body.get("text")
        if not isinstance(text, str):
            self._error(400, "BadRequest", "text must be a string")
            return
        dest = body.get("to", self.session.scenario.lookup_table.text_dest)
        if dest is None:
            raise devices.DestinationUnknown("no display node to address")
        if not isinstance(dest, int):
            self._error(400, "BadRequest", "to must be an integer address")
            return
        if text == "":
            raise commands.EmptyInput("text must be non-empty")
        encoded = len(text.encode("utf-8"))
        if encoded > commands.MAX_TEXT_OCTETS:
            raise commands.TextTooLong(
                f"text of {encoded} octets exceeds {commands.MAX_TEXT_OCTETS}"
            )
        instr = commands.Instruction.make_text(text, dest)
        seq, delivery = self.session.submit(instr)
        self._send_json(200, {"seq": seq, "delivery": delivery})

    def _post_command(self, body: dict) -> None:
        text = body.get("input")
        if not isinstance(text, str):
            self._error(400, "BadRequest", "input must be a string")
            return
        instr = self.session.classify(text)
        seq, delivery = self.session.submit(instr)
        self._send_json(
            200,
            {
                "instruction": instruction_to_dict(instr),
                "seq": seq,
                "delivery": delivery,
            },
        )

    def _post_dtmf(self, body: dict) -> None:
        rate = body.get("sample_rate")
        pcm_b64 = body.get("pcm16_base64")
        if not isinstance(rate, int) or not isinstance(pcm_b64, str):
            self._error(
                400, "BadRequest", "sample_rate (int) and pcm16_base64 are required"
            )
            return
        try:
            raw = base64.b64decode(pcm_b64, validate=True)
        except Exception:
            self._error(400, "BadRequest", "pcm16_base64 is not valid base64")
            return
        samples = dtmf.pcm16_to_float(raw)
        events = dtmf.decode_key_sequence(samples, rate)
        keys = dtmf.keys_of(events)
        if not keys:
            self._send_json(200, {"keys": ""})
            return
        instr = self.session.classify(keys)
        seq, delivery = self.session.submit(instr)
        self._send_json(
            200,
            {
                "keys": keys,
                "instruction": instruction_to_dict(instr),
                "seq": seq,
                "delivery": delivery,
            },
        )

    def _get_events(self, query: dict) -> None:
        try:
            after = int(query.get("after", ["0"])[0])
            limit = int(query.get("limit", [str(EVENT_BATCH)])[0])
        except ValueError:
            self._error(400, "BadRequest", "after and limit must be integers")
            return
        lines, last = self.session.lines_after(max(0, after), limit)
        records = []
        for i, line in enumerate(lines):
            obj = json.loads(line)
            obj["offset"] = after + i + 1
            records.append(obj)
        self._send_json(200, {"records": records, "last_offset": last})

    def _stream_events(self, query: dict) -> None:
        after = 0
        if "after" in query:
            try:
                after = max(0, int(query["after"][0]))
            except ValueError:
                self._error(400, "BadRequest", "after must be an integer")
                return
        elif self.headers.get("Last-Event-ID"):
            try:
                after = max(0, int(self.headers["Last-Event-ID"]))
            except ValueError:
                after = 0
        self.send_response(200)
        self.send_header("Content-Type", "text/event-stream")
        self.send_header("Cache-Control", "no-cache")
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        offset = after
        try:
            while not self.session._stop:
                lines, new_offset = self.session.wait_for_lines(offset, timeout=10.0)
                if not lines:
                    self.wfile.write(b": keepalive\n\n")
                    self.wfile.flush()
                    continue
                out = []
                for i, line in enumerate(lines):
                    out.append(f"id: {offset + i + 1}\ndata: {line}\n\n")
                self.wfile.write("".join(out).encode("utf-8"))
                self.wfile.flush()
                offset = new_offset
        except (BrokenPipeError, ConnectionResetError):
            pass

    def _serve_static(self, route: str) -> None:
        ui_dir = self.session.config.ui_dir
        if ui_dir is None:
            if route == "/":
                data = _PLACEHOLDER_PAGE.encode("utf-8")
                self.send_response(200)
                self.send_header("Content-Type", "text/html; charset=utf-8")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)
            else:
                self._error(404, "NotFound", route)
            return
        base = Path(ui_dir).resolve()
        rel = route.lstrip("/") or "index.html"
        target = (base / rel).resolve()
        if not str(target).startswith(str(base)) or not target.is_file():
            self._error(404, "NotFound", route)
            return
        content_types = {
            ".html": "text/html; charset=utf-8",
            ".js": "text/javascript; charset=utf-8",
            ".css": "text/css; charset=utf-8",
            ".map": "application/json",
            ".svg": "image/svg+xml",
        }
        ctype = content_types.get(target.suffix, "application/octet-stream")
        data = target.read_bytes()
        self.send_response(200)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)


def create_server(
    scenario: Scenario, config: GatewayConfig | None = None
) -> tuple[ThreadingHTTPServer, GatewaySession]:
    """Build the HTTP server and its session; caller starts/stops both."""
    config = config or GatewayConfig()
    session = GatewaySession(scenario, config)

    handler = type("BoundHandler", (_Handler,), {"session": session})
    server = ThreadingHTTPServer((config.host, config.port), handler)
    server.daemon_threads = True
    return server, session


def serve(scenario: Scenario, config: GatewayConfig | None = None) -> None:
    """Run the gateway until interrupted."""
    server, session = create_server(scenario, config)
    session.start()
    host, port = server.server_address[:2]
    print(f"gateway listening on http://{host}:{port}/ (api under /api/v1/)")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        session.stop()
        server.server_close()
