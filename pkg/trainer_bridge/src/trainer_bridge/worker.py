"""Worker entry point: handshake, serve loop, transports.

The worker speaks first: it announces its protocol version, then waits
for the client's hello.  A version disagreement is fatal (exit code 2);
everything after the handshake degrades to per-request error frames so a
single bad architecture never costs the connection.
"""

import argparse
import json
import logging
import os
import socket
import sys

from .errors import BridgeError
from .protocol import PROTOCOL_VERSION, LineChannel, error_frame, hello, result_frame
from .training import run_evaluation

log = logging.getLogger("trainer_bridge")


def serve(chan: LineChannel, *, data_dir, device="cpu", download=False) -> int:
    """Loop one evaluate/result exchange at a time; returns the exit code."""
    try:
        chan.write(hello())
        try:
            reply = chan.read()
        except json.JSONDecodeError as exc:
            chan.write(error_frame(f"unreadable handshake frame: {exc}"))
            return 2
        if reply is None:
            log.error("peer closed the stream before the handshake")
            return 2
        if (reply.get("type") != "hello"
                or reply.get("protocol_version") != PROTOCOL_VERSION):
            chan.write(error_frame(
                f"handshake rejected: got type={reply.get('type')!r} "
                f"protocol_version={reply.get('protocol_version')!r}, "
                f"worker speaks {PROTOCOL_VERSION}"))
            return 2
        while True:
            try:
                msg = chan.read()
            except json.JSONDecodeError as exc:
                chan.write(error_frame(f"unreadable frame: {exc}"))
                continue
            if msg is None:
                return 0
            if msg.get("type") != "evaluate":
                chan.write(error_frame(
                    f"unexpected message type {msg.get('type')!r}"))
                continue
            request = msg.get("request")
            if not isinstance(request, dict):
                chan.write(error_frame("evaluate frame carries no request object"))
                continue
            if request.get("protocol_version") != PROTOCOL_VERSION:
                chan.write(error_frame(
                    f"request protocol_version "
                    f"{request.get('protocol_version')!r} != {PROTOCOL_VERSION}"))
                continue
            try:
                response = run_evaluation(request, data_dir=data_dir,
                                          device=device, download=download)
            except BridgeError as exc:
                log.warning("evaluation failed: %s", exc)
                chan.write(error_frame(exc))
                continue
            except (RuntimeError, ValueError, TypeError, KeyError) as exc:
                log.warning("evaluation crashed: %s", exc)
                chan.write(error_frame(f"{type(exc).__name__}: {exc}"))
                continue
            chan.write(result_frame(response))
    except (BrokenPipeError, ConnectionResetError):
        log.info("peer went away")
        return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="trainer-bridge",
        description="External-trainer worker for the architecture search engine")
    parser.add_argument("--transport", choices=("stdio", "socket"),
                        default="stdio")
    parser.add_argument("--host", default="127.0.0.1",
                        help="bind address for --transport socket")
    parser.add_argument("--port", type=int, default=0,
                        help="bind port for --transport socket (0 picks one)")
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--data-dir",
                        default=os.path.join(os.path.expanduser("~"),
                                             ".cache", "trainer-bridge"))
    parser.add_argument("--download", action="store_true",
                        help="allow dataset downloads on cache miss")
    parser.add_argument("--log-level", default="warning")
    args = parser.parse_args(argv)
    logging.basicConfig(stream=sys.stderr,
                        level=getattr(logging, args.log_level.upper(),
                                      logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    kw = dict(data_dir=args.data_dir, device=args.device,
              download=args.download)
    if args.transport == "stdio":
        return serve(LineChannel(sys.stdin.buffer, sys.stdout.buffer), **kw)
    # socket mode serves exactly one connection; the client's worker pool
    # spawns one process per concurrent evaluation
    server = socket.create_server((args.host, args.port))
    host, port = server.getsockname()[:2]
    print(f"listening on {host}:{port}", file=sys.stderr, flush=True)
    conn, peer = server.accept()
    server.close()
    log.info("serving %s", peer)
    with conn:
        return serve(LineChannel(conn.makefile("rb"), conn.makefile("wb")), **kw)


if __name__ == "__main__":
    sys.exit(main())
