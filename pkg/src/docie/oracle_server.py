"""Serve a built-in scorer over the wire protocol.

Run as ``python -m docie.oracle_server`` to expose a gold, noisy, or constant
scorer on standard streams or HTTP.  This is how end-to-end tests exercise
both transports without any neural model.
"""

from __future__ import annotations

import argparse
import sys
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import IO

from .protocol import (
    ErrorMessage,
    ScheduleAck,
    ScheduleMessage,
    SchemaError,
    ScoreRequest,
    parse_message,
    serialize_message,
)
from .scorer import Scorer, UnknownDocumentError, constant, gold_oracle, noisy_oracle


def build_scorer(spec: str, dataset=None) -> Scorer:
    """Build a scorer from a spec string: gold | noisy:<drop>:<seed> | constant:<value>."""
    if spec == "gold":
        if dataset is None:
            raise ValueError("gold scorer requires a dataset")
        return gold_oracle(dataset)
    if spec.startswith("noisy:"):
        if dataset is None:
            raise ValueError("noisy scorer requires a dataset")
        _, drop, seed = spec.split(":")
        return noisy_oracle(dataset, float(drop), int(seed))
    if spec.startswith("constant:"):
        return constant(float(spec.split(":", 1)[1]))
    raise ValueError(f"unknown scorer spec {spec!r}")


def handle_line(scorer: Scorer, line: str) -> tuple[bool, str]:
    """Dispatch one wire line to the scorer; returns (ok, reply line)."""
    try:
        message = parse_message(line)
    except SchemaError as exc:
        return False, serialize_message(ErrorMessage(message=str(exc)))
    if isinstance(message, ScoreRequest):
        try:
            return True, serialize_message(scorer.score(message))
        except UnknownDocumentError as exc:
            return False, serialize_message(
                ErrorMessage(f"unknown document id {exc.args[0]!r}", message.request_id)
            )
    if isinstance(message, ScheduleMessage):
        # Mock scorers have no optimizer; acknowledge the decision verbatim.
        return True, serialize_message(ScheduleAck(message.request_id, message.lr, message.stopped))
    return False, serialize_message(ErrorMessage(f"cannot handle message kind {type(message).__name__}"))


def serve_stdio(scorer: Scorer, stdin: IO[str] | None = None, stdout: IO[str] | None = None) -> None:
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        _, reply = handle_line(scorer, line)
        stdout.write(reply + "\n")
        stdout.flush()


def make_http_server(scorer: Scorer, host: str = "127.0.0.1", port: int = 0) -> ThreadingHTTPServer:
    """An HTTP server answering one protocol message per POST body."""

    class Handler(BaseHTTPRequestHandler):
        def do_POST(self) -> None:  # noqa: N802 (http.server API)
            length = int(self.headers.get("Content-Length", "0"))
            body = self.rfile.read(length).decode("utf-8")
            ok, reply = handle_line(scorer, body.strip())
            payload = (reply + "\n").encode("utf-8")
            self.send_response(200 if ok else 400)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(payload)))
            self.end_headers()
            self.wfile.write(payload)

        def log_message(self, fmt: str, *args: object) -> None:
            pass  # keep test output quiet

    return ThreadingHTTPServer((host, port), Handler)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="docie.oracle_server", description=__doc__)
    parser.add_argument("--scorer", required=True, help="gold | noisy:<drop>:<seed> | constant:<value>")
    parser.add_argument("--dataset", help="canonical dataset directory (oracle scorers)")
    parser.add_argument("--transport", choices=["stdio", "http"], default="stdio")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=0)
    args = parser.parse_args(argv)

    dataset = None
    if args.dataset:
        from .dataset_io import load

        dataset = load(args.dataset)
    scorer = build_scorer(args.scorer, dataset)
    if args.transport == "stdio":
        serve_stdio(scorer)
        return 0
    server = make_http_server(scorer, args.host, args.port)
    print(f"LISTENING {server.server_address[0]}:{server.server_address[1]}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
