"""Encoder/decoder for GET and BURST messages.

A BURST request is a single HTTP/1.1 message whose body lists one path per
line. The response is one complete HTTP/1.1 message per requested path,
concatenated in request order, each tagged with a ``Burst-Path`` header.
Every body is framed by ``Content-Length``; chunked encoding is rejected.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator
from urllib.parse import unquote

PROTOCOL_REVISION = "1"

MAX_LINE = 8192
MAX_HEADERS = 100

REASONS = {
    200: "OK",
    400: "Bad Request",
    403: "Forbidden",
    404: "Not Found",
    405: "Method Not Allowed",
    413: "Payload Too Large",
    500: "Internal Server Error",
    501: "Not Implemented",
    503: "Service Unavailable",
}

CANONICAL_HEADERS = {
    "host": "Host",
    "burst-count": "Burst-Count",
    "burst-path": "Burst-Path",
    "content-type": "Content-Type",
    "content-length": "Content-Length",
    "connection": "Connection",
}


class ProtocolError(Exception):
    """Malformed or inconsistent message."""


class IncompleteFrameError(ProtocolError):
    """The stream ended before a message was complete."""


class InvalidPathError(ProtocolError, ValueError):
    """A path that may not appear in a BURST message."""


def check_path(path: str) -> str:
    """Return ``path`` unchanged if it is a valid object path, else raise InvalidPathError."""
    if not isinstance(path, str) or not path.startswith("/"):
        raise InvalidPathError(f"path must start with '/': {path!r}")
    if any(ord(ch) <= 0x20 or ord(ch) == 0x7F for ch in path):
        raise InvalidPathError(f"path contains whitespace or control bytes: {path!r}")
    try:
        path.encode("ascii")
    except UnicodeEncodeError:
        raise InvalidPathError(f"path must be ASCII (percent-encode it): {path!r}") from None
    if ".." in unquote(path).split("/") or "\x00" in unquote(path):
        raise InvalidPathError(f"path escapes its root: {path!r}")
    return path


@dataclass(frozen=True)
class BurstRequest:
    paths: tuple[str, ...]
    host: str = "localhost"

    def __post_init__(self) -> None:
        object.__setattr__(self, "paths", tuple(self.paths))
        if not self.paths:
            raise ProtocolError("a BURST request needs at least one path")
        if len(set(self.paths)) != len(self.paths):
            raise ProtocolError("duplicate paths in BURST request")
        for p in self.paths:
            check_path(p)


@dataclass(frozen=True)
class BurstPart:
    path: str
    status: int
    content_type: str
    body: bytes = b""

    def __post_init__(self) -> None:
        check_path(self.path)
        if self.status not in (200, 404):
            raise ProtocolError(f"burst part status must be 200 or 404, got {self.status}")
        if self.status == 404 and self.body:
            raise ProtocolError("404 part must have an empty body")


@dataclass(frozen=True)
class BurstResponse:
    parts: tuple[BurstPart, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "parts", tuple(self.parts))
        if not self.parts:
            raise ProtocolError("a BURST response needs at least one part")


@dataclass
class Head:
    """Start line plus headers of one message. Header names are stored lowercased."""

    start: str
    headers: dict[str, str] = field(default_factory=dict)
    size: int = 0

    def get(self, name: str, default: str | None = None) -> str | None:
        return self.headers.get(name.lower(), default)

    def content_length(self, required: bool = True) -> int:
        if "transfer-encoding" in self.headers:
            raise ProtocolError("Transfer-Encoding is not supported; use Content-Length")
        raw = self.headers.get("content-length")
        if raw is None:
            if required:
                raise ProtocolError("missing Content-Length")
            return 0
        if not raw.isdigit():
            raise ProtocolError(f"bad Content-Length: {raw!r}")
        return int(raw)


@dataclass
class Response:
    status: int
    body: bytes = b""
    content_type: str = "application/octet-stream"
    headers: dict[str, str] = field(default_factory=dict)


class StreamReader:
    """Buffered reader over a ``recv``-style callable; one per connection."""

    def __init__(self, recv: Callable[[int], bytes], chunk: int = 65536):
        self._recv = recv
        self._chunk = chunk
        self._buf = bytearray()
        self._eof = False
        self.bytes_read = 0

    @classmethod
    def from_bytes(cls, data: bytes) -> StreamReader:
        return cls(io.BytesIO(data).read)

    @property
    def buffered(self) -> int:
        return len(self._buf)

    def _fill(self) -> bool:
        if self._eof:
            return False
        data = self._recv(self._chunk)
        if not data:
            self._eof = True
            return False
        self._buf += data
        return True

    def at_eof(self) -> bool:
        """True once the peer has closed and nothing is left in the buffer."""
        return not self._buf and not self._fill()

    def read_line(self) -> bytes:
        while True:
            idx = self._buf.find(b"\r\n")
            if idx >= 0:
                line = bytes(self._buf[:idx])
                del self._buf[: idx + 2]
                self.bytes_read += idx + 2
                return line
            if len(self._buf) > MAX_LINE:
                raise ProtocolError("header line too long")
            if not self._fill():
                raise IncompleteFrameError("stream ended inside a header line")

    def read_exact(self, n: int) -> bytes:
        while len(self._buf) < n:
            if not self._fill():
                raise IncompleteFrameError(f"stream ended {n - len(self._buf)} bytes short of a body")
        data = bytes(self._buf[:n])
        del self._buf[:n]
        self.bytes_read += n
        return data


def read_head(reader: StreamReader) -> Head | None:
    """Read one start line and header block. Returns None on a clean EOF before any byte."""
    if reader.at_eof():
        return None
    before = reader.bytes_read
    start = reader.read_line().decode("latin-1")
    if not start:
        raise ProtocolError("empty start line")
    headers: dict[str, str] = {}
    while True:
        line = reader.read_line()
        if not line:
            break
        if len(headers) >= MAX_HEADERS:
            raise ProtocolError("too many headers")
        name, sep, value = line.decode("latin-1").partition(":")
        if not sep or not name or name != name.strip():
            raise ProtocolError(f"malformed header line: {line!r}")
        headers[name.lower()] = value.strip()
    return Head(start, headers, reader.bytes_read - before)


def _head_bytes(start: str, headers: Iterable[tuple[str, str | int]]) -> bytes:
    lines = [start]
    lines.extend(f"{name}: {value}" for name, value in headers)
    return ("\r\n".join(lines) + "\r\n\r\n").encode("latin-1")


def parse_request_line(start: str) -> tuple[str, str]:
    parts = start.split(" ")
    if len(parts) != 3 or not parts[0] or not parts[1]:
        raise ProtocolError(f"malformed request line: {start!r}")
    method, target, version = parts
    if version != "HTTP/1.1":
        raise ProtocolError(f"unsupported version: {version!r}")
    return method, target


def parse_status_line(start: str) -> int:
    parts = start.split(" ", 2)
    if len(parts) < 2 or parts[0] != "HTTP/1.1" or not parts[1].isdigit() or len(parts[1]) != 3:
        raise ProtocolError(f"malformed status line: {start!r}")
    return int(parts[1])


def _expect_end(reader: StreamReader) -> None:
    if not reader.at_eof():
        raise ProtocolError("trailing bytes after message")


# -- BURST request -----------------------------------------------------------


def encode_burst_request(req: BurstRequest) -> bytes:
    body = "".join(p + "\n" for p in req.paths).encode("ascii")
    head = _head_bytes(
        "BURST / HTTP/1.1",
        [("Host", req.host), ("Burst-Count", len(req.paths)), ("Content-Length", len(body))],
    )
    return head + body


def parse_burst_body(head: Head, body: bytes) -> BurstRequest:
    """Validate a BURST body against its head's Burst-Count."""
    count = head.get("burst-count")
    if count is None or not count.isdigit():
        raise ProtocolError("missing or bad Burst-Count")
    try:
        text = body.decode("ascii")
    except UnicodeDecodeError:
        raise InvalidPathError("BURST body must be ASCII") from None
    if text and not text.endswith("\n"):
        raise ProtocolError("BURST body must end with a newline")
    paths = text.split("\n")[:-1] if text else []
    if len(paths) != int(count):
        raise ProtocolError(f"Burst-Count says {count} but body lists {len(paths)} paths")
    if not paths:
        raise ProtocolError("empty BURST request")
    for p in paths:
        check_path(p)
    return BurstRequest(tuple(paths), head.get("host", "") or "")


def read_burst_request(reader: StreamReader) -> BurstRequest | None:
    head = read_head(reader)
    if head is None:
        return None
    method, target = parse_request_line(head.start)
    if method != "BURST" or target != "/":
        raise ProtocolError(f"not a BURST request line: {head.start!r}")
    body = reader.read_exact(head.content_length())
    return parse_burst_body(head, body)


def decode_burst_request(data: bytes) -> BurstRequest:
    reader = StreamReader.from_bytes(data)
    req = read_burst_request(reader)
    if req is None:
        raise IncompleteFrameError("no request in input")
    _expect_end(reader)
    return req


# -- BURST response ----------------------------------------------------------


def encode_burst_part(part: BurstPart) -> bytes:
    head = _head_bytes(
        f"HTTP/1.1 {part.status} {REASONS[part.status]}",
        [
            ("Burst-Path", part.path),
            ("Content-Type", part.content_type),
            ("Content-Length", len(part.body)),
        ],
    )
    return head + part.body


def encode_burst_response(resp: BurstResponse) -> bytes:
    return b"".join(encode_burst_part(p) for p in resp.parts)


def read_burst_part(reader: StreamReader, expected_path: str) -> BurstPart:
    head = read_head(reader)
    if head is None:
        raise IncompleteFrameError(f"stream ended before the part for {expected_path}")
    status = parse_status_line(head.start)
    path = head.get("burst-path")
    if path is None:
        # whole-burst failure such as 400 or 413 comes back as one plain response
        reader.read_exact(head.content_length(required=False))
        raise ProtocolError(f"BURST refused with status {status}")
    if path != expected_path:
        raise ProtocolError(f"expected part for {expected_path}, got {path}")
    body = reader.read_exact(head.content_length())
    return BurstPart(path, status, head.get("content-type", "application/octet-stream"), body)


def iter_burst_response(reader: StreamReader, expected: BurstRequest) -> Iterator[BurstPart]:
    for path in expected.paths:
        yield read_burst_part(reader, path)


def decode_burst_response(data: bytes, expected: BurstRequest) -> BurstResponse:
    reader = StreamReader.from_bytes(data)
    parts = list(iter_burst_response(reader, expected))
    _expect_end(reader)
    return BurstResponse(tuple(parts))


# -- GET ---------------------------------------------------------------------


def encode_get(path: str, host: str = "localhost") -> bytes:
    if not path.startswith("/") or any(ord(ch) <= 0x20 or ord(ch) == 0x7F for ch in path):
        raise InvalidPathError(f"bad GET target: {path!r}")
    return _head_bytes(f"GET {path} HTTP/1.1", [("Host", host), ("Connection", "keep-alive")])


def decode_get(data: bytes) -> tuple[str, str]:
    """Parse a complete GET request into ``(path, host)``."""
    reader = StreamReader.from_bytes(data)
    head = read_head(reader)
    if head is None:
        raise IncompleteFrameError("no request in input")
    method, target = parse_request_line(head.start)
    if method != "GET":
        raise ProtocolError(f"not a GET request: {head.start!r}")
    if head.content_length(required=False):
        raise ProtocolError("GET with a body is not supported")
    _expect_end(reader)
    return target, head.get("host", "") or ""


def encode_response(resp: Response, keep_alive: bool = True) -> bytes:
    headers: list[tuple[str, str | int]] = [
        ("Content-Type", resp.content_type),
        ("Content-Length", len(resp.body)),
        ("Connection", "keep-alive" if keep_alive else "close"),
    ]
    headers.extend(resp.headers.items())
    reason = REASONS.get(resp.status, "Unknown")
    return _head_bytes(f"HTTP/1.1 {resp.status} {reason}", headers) + resp.body


def read_response(reader: StreamReader) -> Response:
    head = read_head(reader)
    if head is None:
        raise IncompleteFrameError("connection closed before a response")
    status = parse_status_line(head.start)
    body = reader.read_exact(head.content_length())
    extra = {
        CANONICAL_HEADERS.get(k, k): v
        for k, v in head.headers.items()
        if k not in ("content-type", "content-length", "connection")
    }
    return Response(status, body, head.get("content-type", "application/octet-stream") or "", extra)


def decode_response(data: bytes) -> Response:
    reader = StreamReader.from_bytes(data)
    resp = read_response(reader)
    _expect_end(reader)
    return resp


def count_messages(data: bytes, kind: str = "request") -> int:
    """Count framed messages in captured wire bytes (``kind`` is ``request`` or ``response``)."""
    reader = StreamReader.from_bytes(data)
    n = 0
    while True:
        head = read_head(reader)
        if head is None:
            return n
        if kind == "request":
            parse_request_line(head.start)
        else:
            parse_status_line(head.start)
        reader.read_exact(head.content_length(required=False))
        n += 1
