"""Page fetcher for plain GET and BURST page loads."""

from __future__ import annotations

import enum
import os
import queue
import socket
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence
from urllib.parse import quote, unquote, urlsplit

from . import wire
from .html_extract import PageManifest, extract_manifest
from .wire import BurstPart, BurstRequest, ProtocolError, Response, StreamReader


class Mode(str, enum.Enum):
    GET = "get"
    BURST = "burst"


class FetchError(Exception):
    """The page load failed; ``partial`` holds whatever was retrieved."""

    def __init__(self, message: str, partial: dict[str, bytes] | None = None):
        super().__init__(message)
        self.partial = partial or {}


@dataclass(frozen=True)
class FetchPlan:
    page: str
    mode: Mode = Mode.BURST
    connections: int = 6
    host: str = "127.0.0.1"
    port: int = 80
    timeout: float = 60.0
    sizes: Mapping[str, int] | None = None
    record: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", Mode(self.mode))
        if self.connections < 1:
            raise ValueError("connections must be >= 1")
        if self.timeout <= 0:
            raise ValueError("timeout must be > 0")


class ObjectCache:
    """Thread-safe object store, optionally persisted one file per object."""

    def __init__(self, directory: str | os.PathLike | None = None):
        self._entries: dict[str, bytes] = {}
        self._lock = threading.Lock()
        self.directory = Path(directory) if directory is not None else None
        if self.directory is not None:
            self.directory.mkdir(parents=True, exist_ok=True)
            for f in self.directory.iterdir():
                if f.is_file():
                    self._entries[unquote(f.name)] = f.read_bytes()

    @staticmethod
    def filename(path: str) -> str:
        return quote(path, safe="")

    def get(self, path: str) -> bytes | None:
        with self._lock:
            return self._entries.get(path)

    def put(self, path: str, body: bytes) -> None:
        with self._lock:
            self._entries[path] = body
            if self.directory is not None:
                (self.directory / self.filename(path)).write_bytes(body)

    def clear(self) -> None:
        with self._lock:
            self._entries.clear()
            if self.directory is not None:
                for f in self.directory.iterdir():
                    if f.is_file():
                        f.unlink()

    def __contains__(self, path: object) -> bool:
        with self._lock:
            return path in self._entries

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)


@dataclass
class FetchResult:
    objects: dict[str, bytes]
    statuses: dict[str, int]
    total_duration: float
    request_count: int
    bytes_on_wire: int
    manifest: PageManifest
    html: bytes = b""
    from_cache: set[str] = field(default_factory=set)
    # (request bytes, response bytes) per BURST exchange when plan.record is set
    transcript: list[tuple[bytes, bytes]] = field(default_factory=list)


class Connection:
    """One keep-alive connection with byte accounting."""

    def __init__(self, host: str, port: int, timeout: float | None):
        self.sock = socket.create_connection((host, port), timeout=timeout)
        self.sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self.host = host
        self._raw: list[bytes] | None = None
        self.reader = StreamReader(self._recv)
        self.bytes_sent = 0

    def _recv(self, n: int) -> bytes:
        data = self.sock.recv(n)
        if self._raw is not None:
            self._raw.append(data)
        return data

    @property
    def bytes_received(self) -> int:
        return self.reader.bytes_read

    def send(self, data: bytes) -> None:
        self.sock.sendall(data)
        self.bytes_sent += len(data)

    def get(self, path: str) -> Response:
        self.send(wire.encode_get(path, self.host))
        return wire.read_response(self.reader)

    def burst(self, req: BurstRequest, record: bool = False) -> tuple[list[BurstPart], bytes | None]:
        data = wire.encode_burst_request(req)
        if record:
            self._raw = []
        try:
            self.send(data)
            parts = list(wire.iter_burst_response(self.reader, req))
        finally:
            raw = b"".join(self._raw) if self._raw is not None else None
            self._raw = None
        if raw is not None and self.reader.buffered:
            raw = raw[: len(raw) - self.reader.buffered]
        return parts, raw

    def settimeout(self, timeout: float) -> None:
        self.sock.settimeout(timeout)

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass


def diff_cache(manifest: PageManifest | Sequence[str], cache: ObjectCache) -> list[str]:
    """Manifest entries not yet in ``cache``, in manifest order."""
    return [p for p in manifest if p not in cache]


def partition_missing(
    missing: Sequence[str],
    connections: int,
    sizes: Mapping[str, int] | None = None,
) -> list[list[str]]:
    """Split ``missing`` into at most ``connections`` non-empty groups.

    Without sizes the split is round-robin in manifest order. With sizes,
    objects go largest first to the currently lightest group (LPT), which
    keeps the slowest connection's byte total small. Groups keep manifest
    order internally.
    """
    if not missing:
        raise ValueError("nothing to partition")
    if connections < 1:
        raise ValueError("connections must be >= 1")
    k = min(connections, len(missing))
    order = {p: i for i, p in enumerate(missing)}
    groups: list[list[str]] = [[] for _ in range(k)]
    if sizes is None:
        for i, p in enumerate(missing):
            groups[i % k].append(p)
        return groups
    loads = [0] * k
    for p in sorted(missing, key=lambda p: (-sizes[p], order[p])):
        g = min(range(k), key=lambda j: (loads[j], j))
        groups[g].append(p)
        loads[g] += sizes[p]
    for g in groups:
        g.sort(key=order.__getitem__)
    return groups


class _Deadline:
    def __init__(self, seconds: float):
        self.expires = time.monotonic() + seconds

    def remaining(self) -> float:
        left = self.expires - time.monotonic()
        if left <= 0:
            raise TimeoutError("page load deadline expired")
        return left


def fetch_page(plan: FetchPlan, cache: ObjectCache | None = None) -> FetchResult:
    """Load ``plan.page`` and every inlined object missing from ``cache``.

    The HTML always comes by GET. Objects then come either as one GET each
    over ``plan.connections`` workers sharing a queue, or as one BURST per
    group over ``min(connections, missing)`` connections in parallel. The
    clock runs from the HTML request write to the last object byte.
    """
    cache = cache if cache is not None else ObjectCache()
    deadline = _Deadline(plan.timeout)
    conns: list[Connection] = []
    lock = threading.Lock()
    objects: dict[str, bytes] = {}
    statuses: dict[str, int] = {}
    transcript: list[tuple[bytes, bytes]] = []
    requests = 0

    def open_conn() -> Connection:
        c = Connection(plan.host, plan.port, deadline.remaining())
        with lock:
            conns.append(c)
        return c

    try:
        first = open_conn()
        start = time.perf_counter()
        html_resp = first.get(plan.page)
        requests += 1
        if html_resp.status != 200:
            raise FetchError(f"{plan.page}: HTTP {html_resp.status}")
        manifest = extract_manifest(html_resp.body, urlsplit(plan.page).path or "/")

        from_cache = set()
        for p in manifest:
            body = cache.get(p)
            if body is not None:
                objects[p] = body
                statuses[p] = 200
                from_cache.add(p)
        missing = diff_cache(manifest, cache)

        def record(path: str, status: int, body: bytes) -> None:
            with lock:
                statuses[path] = status
                if status == 200:
                    objects[path] = body
            if status == 200:
                cache.put(path, body)

        if missing and plan.mode is Mode.GET:
            work: queue.SimpleQueue[str] = queue.SimpleQueue()
            for p in missing:
                work.put(p)
            n_workers = min(plan.connections, len(missing))

            def get_worker(conn: Connection | None) -> int:
                count = 0
                while True:
                    try:
                        path = work.get_nowait()
                    except queue.Empty:
                        return count
                    if conn is None:
                        conn = open_conn()
                    conn.settimeout(deadline.remaining())
                    resp = conn.get(path)
                    count += 1
                    record(path, resp.status, resp.body)

            with ThreadPoolExecutor(n_workers) as pool:
                futures = [pool.submit(get_worker, first if i == 0 else None) for i in range(n_workers)]
                requests += sum(f.result() for f in futures)

        elif missing:
            groups = partition_missing(missing, plan.connections, plan.sizes)

            def burst_worker(conn: Connection | None, group: list[str]) -> None:
                if conn is None:
                    conn = open_conn()
                conn.settimeout(deadline.remaining())
                req = BurstRequest(tuple(group), plan.host)
                parts, raw = conn.burst(req, record=plan.record)
                for part in parts:
                    record(part.path, part.status, part.body)
                if raw is not None:
                    with lock:
                        transcript.append((wire.encode_burst_request(req), raw))

            with ThreadPoolExecutor(len(groups)) as pool:
                futures = [
                    pool.submit(burst_worker, first if i == 0 else None, g) for i, g in enumerate(groups)
                ]
                for f in futures:
                    f.result()
            requests += len(groups)

        total = time.perf_counter() - start
    except FetchError:
        raise
    except (OSError, ProtocolError) as exc:
        raise FetchError(f"page load failed: {exc}", dict(objects)) from exc
    finally:
        wire_bytes = sum(c.bytes_sent + c.bytes_received for c in conns)
        for c in conns:
            c.close()

    return FetchResult(
        objects=objects,
        statuses=statuses,
        total_duration=total,
        request_count=requests,
        bytes_on_wire=wire_bytes,
        manifest=manifest,
        html=html_resp.body,
        from_cache=from_cache,
        transcript=transcript,
    )
