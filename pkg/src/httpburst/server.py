"""Static-file server that answers GET and BURST over keep-alive connections."""

from __future__ import annotations

import contextlib
import logging
import os
import posixpath
import select
import signal
import socket
import socketserver
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterator
from urllib.parse import unquote, urlsplit

from . import wire
from .wire import BurstPart, BurstRequest, ProtocolError, Response, StreamReader

log = logging.getLogger(__name__)

CONTENT_TYPES = {
    ".html": "text/html",
    ".htm": "text/html",
    ".css": "text/css",
    ".js": "application/javascript",
    ".jpg": "image/jpeg",
    ".jpeg": "image/jpeg",
    ".png": "image/png",
    ".woff2": "font/woff2",
}
STATS_PATH = "/_stats"
IDLE_POLL = 0.25
MAX_DRAIN = 1 << 20


@dataclass
class ServerConfig:
    docroot: Path
    port: int = 8080
    host: str = "127.0.0.1"
    processing_delay: float = 0.0
    per_object_delay: bool = False
    max_burst_paths: int = 512
    max_connections: int = 64

    def __post_init__(self) -> None:
        self.docroot = Path(self.docroot)
        if self.processing_delay < 0:
            raise ValueError("processing_delay must be >= 0")
        if self.max_burst_paths < 1:
            raise ValueError("max_burst_paths must be >= 1")
        if self.max_connections < 1:
            raise ValueError("max_connections must be >= 1")


class Forbidden(Exception):
    pass


def content_type_for(path: str) -> str:
    return CONTENT_TYPES.get(posixpath.splitext(path)[1].lower(), "application/octet-stream")


def resolve_path(docroot: Path, raw: str) -> Path:
    """Map a request target onto a file under ``docroot``.

    The target is percent-decoded once and its dot segments resolved
    lexically; anything that climbs above the root raises Forbidden.
    """
    path = unquote(urlsplit(raw).path)
    if "\x00" in path or not path.startswith("/"):
        raise Forbidden(raw)
    stack: list[str] = []
    for seg in path.split("/"):
        if seg in ("", "."):
            continue
        if seg == "..":
            if not stack:
                raise Forbidden(raw)
            stack.pop()
        else:
            stack.append(seg)
    root = os.path.realpath(docroot)
    target = os.path.realpath(os.path.join(root, *stack))
    if os.path.commonpath([root, target]) != root:
        raise Forbidden(raw)
    if os.path.isdir(target):
        target = os.path.join(target, "index.html")
    return Path(target)


def _read_object(config: ServerConfig, raw_path: str) -> tuple[int, bytes]:
    try:
        target = resolve_path(config.docroot, raw_path)
    except Forbidden:
        return 403, b""
    try:
        return 200, target.read_bytes()
    except (FileNotFoundError, IsADirectoryError, NotADirectoryError):
        return 404, b""
    except OSError as exc:
        log.warning("cannot read %s: %s", target, exc)
        return 500, b""


def handle_get(path: str, config: ServerConfig) -> Response:
    """Serve one GET after the configured processing delay."""
    if config.processing_delay:
        time.sleep(config.processing_delay)
    status, body = _read_object(config, path)
    if status != 200:
        return Response(status, b"", "text/plain")
    return Response(200, body, content_type_for(path))


def iter_burst(req: BurstRequest, config: ServerConfig) -> Iterator[bytes]:
    """Yield the encoded parts of a BURST response one at a time.

    The processing delay is paid once per BURST request, before the first
    byte, unless ``per_object_delay`` asks for it once per part.
    """
    if len(req.paths) > config.max_burst_paths:
        yield wire.encode_response(Response(413, b"", "text/plain"), keep_alive=False)
        return
    if config.processing_delay and not config.per_object_delay:
        time.sleep(config.processing_delay)
    for path in req.paths:
        if config.processing_delay and config.per_object_delay:
            time.sleep(config.processing_delay)
        status, body = _read_object(config, path)
        if status == 200:
            part = BurstPart(path, 200, content_type_for(path), body)
        else:
            # a missing or unreadable member does not sink the whole burst
            part = BurstPart(path, 404, "text/plain", b"")
        yield wire.encode_burst_part(part)


def handle_burst(req: BurstRequest, config: ServerConfig) -> bytes:
    return b"".join(iter_burst(req, config))


class _ConnectionHandler(socketserver.BaseRequestHandler):
    server: BurstServer

    def handle(self) -> None:
        sock: socket.socket = self.request
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        reader = StreamReader(sock.recv)
        while True:
            if not reader.buffered and not self._wait_readable(sock):
                return
            try:
                keep_open = self._one_request(sock, reader)
            except ProtocolError as exc:
                log.info("bad request from %s: %s", self.client_address, exc)
                self._send(sock, Response(400, str(exc).encode(), "text/plain"), keep_alive=False)
                return
            except (ConnectionError, TimeoutError):
                return
            if not keep_open:
                return

    def _wait_readable(self, sock: socket.socket) -> bool:
        while not self.server.stopping.is_set():
            ready, _, _ = select.select([sock], [], [], IDLE_POLL)
            if ready:
                return True
        return False

    def _send(self, sock: socket.socket, resp: Response, keep_alive: bool = True) -> None:
        sock.sendall(wire.encode_response(resp, keep_alive=keep_alive))

    def _one_request(self, sock: socket.socket, reader: StreamReader) -> bool:
        head = wire.read_head(reader)
        if head is None:
            return False
        method, target = wire.parse_request_line(head.start)
        keep_alive = (head.get("connection") or "").lower() != "close"
        config = self.server.config

        if method == "GET":
            if head.content_length(required=False):
                raise ProtocolError("GET with a body")
            if target == STATS_PATH:
                self._send(sock, Response(200, self.server.stats_text().encode(), "text/plain"), keep_alive)
                return keep_alive
            self.server.count(burst=False)
            self._send(sock, handle_get(target, config), keep_alive)
            return keep_alive

        if method == "BURST":
            length = head.content_length()
            count = head.get("burst-count") or ""
            if count.isdigit() and int(count) > config.max_burst_paths:
                self.server.count(burst=True)
                if length <= MAX_DRAIN:
                    # drain so closing does not reset the connection before the 413 is read
                    reader.read_exact(length)
                self._send(sock, Response(413, b"", "text/plain"), keep_alive=False)
                return False
            req = wire.parse_burst_body(head, reader.read_exact(length))
            self.server.count(burst=True)
            for chunk in iter_burst(req, config):
                sock.sendall(chunk)
            return keep_alive

        reader.read_exact(head.content_length(required=False))
        self._send(sock, Response(501, b"", "text/plain"), keep_alive)
        return keep_alive


class BurstServer(socketserver.ThreadingTCPServer):
    """Threaded server; one thread per connection, requests sequential within a connection."""

    allow_reuse_address = True
    daemon_threads = False
    block_on_close = True

    def __init__(self, config: ServerConfig):
        if not config.docroot.is_dir() or not os.access(config.docroot, os.R_OK | os.X_OK):
            raise OSError(f"docroot {config.docroot} is not a readable directory")
        self.config = config
        self.stopping = threading.Event()
        self._lock = threading.Lock()
        self.requests_total = 0
        self.burst_requests = 0
        self._active = 0
        super().__init__((config.host, config.port), _ConnectionHandler)

    @property
    def port(self) -> int:
        return self.server_address[1]

    def count(self, burst: bool) -> None:
        with self._lock:
            self.requests_total += 1
            if burst:
                self.burst_requests += 1

    def stats_text(self) -> str:
        with self._lock:
            return f"requests_total={self.requests_total}\nburst_requests={self.burst_requests}\n"

    def reset_stats(self) -> None:
        with self._lock:
            self.requests_total = 0
            self.burst_requests = 0

    def process_request(self, request, client_address) -> None:
        with self._lock:
            over = self._active >= self.config.max_connections
            if not over:
                self._active += 1
        if over:
            with contextlib.suppress(OSError):
                request.sendall(wire.encode_response(Response(503, b"", "text/plain"), keep_alive=False))
            self.shutdown_request(request)
            return
        super().process_request(request, client_address)

    def process_request_thread(self, request, client_address) -> None:
        try:
            super().process_request_thread(request, client_address)
        finally:
            with self._lock:
                self._active -= 1

    def stop(self) -> None:
        """Stop accepting, let in-flight responses finish, then close."""
        self.stopping.set()
        self.shutdown()
        self.server_close()


@contextlib.contextmanager
def running_server(config: ServerConfig) -> Iterator[BurstServer]:
    """Run a server on a background thread for the duration of the block."""
    server = BurstServer(config)
    thread = threading.Thread(target=server.serve_forever, kwargs={"poll_interval": 0.05}, daemon=True)
    thread.start()
    try:
        yield server
    finally:
        server.stop()
        thread.join()


def serve(config: ServerConfig, on_ready: Callable[[BurstServer], None] | None = None) -> None:
    """Serve until SIGINT or SIGTERM."""
    server = BurstServer(config)
    done = threading.Event()

    def _on_signal(signum, frame) -> None:
        done.set()

    signal.signal(signal.SIGINT, _on_signal)
    signal.signal(signal.SIGTERM, _on_signal)
    thread = threading.Thread(target=server.serve_forever, kwargs={"poll_interval": 0.1}, daemon=True)
    thread.start()
    if on_ready is not None:
        on_ready(server)
    try:
        while not done.wait(0.5):
            pass
    finally:
        server.stop()
        thread.join()
