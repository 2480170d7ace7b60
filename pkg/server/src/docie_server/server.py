"""Protocol endpoint: stdio loop and HTTP server around a scoring engine."""

from __future__ import annotations

import sys
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import IO

from . import protocol
from .engine import Engine
from .protocol import ProtocolViolation, Schedule, ScoreRequest


def handle_line(engine: Engine, line: str) -> tuple[bool, str]:
    try:
        message = protocol.parse_line(line)
    except ProtocolViolation as exc:
        return False, protocol.error_line(str(exc))
    if isinstance(message, Schedule):
        engine.lr = message.lr
        engine.stopped = message.stopped
        return True, protocol.schedule_ack(message.request_id, engine.lr, engine.stopped)
    assert isinstance(message, ScoreRequest)
    try:
        if message.mode == "qa":
            null_slot, starts, ends = engine.score_qa(message)
            return True, protocol.qa_response(message.request_id, null_slot, starts, ends)
        rows = engine.score_tc(message)
        return True, protocol.tc_response(message.request_id, rows)
    except ProtocolViolation as exc:
        return False, protocol.error_line(str(exc), message.request_id)


def serve_stdio(engine: Engine, stdin: IO[str] | None = None, stdout: IO[str] | None = None) -> None:
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        _, reply = handle_line(engine, line)
        stdout.write(reply + "\n")
        stdout.flush()


def make_http_server(engine: Engine, host: str = "127.0.0.1", port: int = 0) -> ThreadingHTTPServer:
    class Handler(BaseHTTPRequestHandler):
        def do_POST(self) -> None:  # noqa: N802 (http.server API)
            length = int(self.headers.get("Content-Length", "0"))
            body = self.rfile.read(length).decode("utf-8")
            ok, reply = handle_line(engine, body.strip())
            payload = (reply + "\n").encode("utf-8")
            self.send_response(200 if ok else 400)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(payload)))
            self.end_headers()
            self.wfile.write(payload)

        def log_message(self, fmt: str, *args: object) -> None:
            pass

    return ThreadingHTTPServer((host, port), Handler)
