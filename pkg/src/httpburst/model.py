"""Analytic byte-efficiency and delay model for GET versus BURST page loads.

All sizes are in bytes and all durations in seconds. Link-layer framing is
not counted.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable, Sequence


@dataclass(frozen=True)
class OverheadParams:
    """Header sizes paid by one request/response exchange.

    ``http_header`` defaults to 0 so the numbers line up with the classic
    62.5 % example; realistic request+response headers are 200-800 bytes.
    """

    ip_header: int = 20
    tcp_header: int = 20
    http_header: int = 0

    def __post_init__(self) -> None:
        for name in ("ip_header", "tcp_header", "http_header"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    @property
    def ack_total(self) -> int:
        return self.ip_header + self.tcp_header

    @property
    def per_exchange(self) -> int:
        """Overhead of one exchange: request and response headers plus the ACK."""
        return 2 * (self.ip_header + self.tcp_header + self.http_header) + self.ack_total


@dataclass(frozen=True)
class DelayParams:
    d_client_to_server: float = 0.0
    d_server_to_client: float = 0.0
    processing_per_object: float = 0.0
    connections: int = 1

    def __post_init__(self) -> None:
        if min(self.d_client_to_server, self.d_server_to_client, self.processing_per_object) < 0:
            raise ValueError("durations must be >= 0")
        if self.connections < 1:
            raise ValueError("connections must be >= 1")

    @property
    def round_trip(self) -> float:
        return self.d_client_to_server + self.d_server_to_client


def _check_sizes(sizes: Sequence[float]) -> None:
    if len(sizes) == 0:
        raise ValueError("object set is empty; efficiency is undefined")
    if any(s < 0 for s in sizes):
        raise ValueError("object sizes must be >= 0")


def request_bytes(size: float, params: OverheadParams) -> float:
    """Minimum bytes exchanged to fetch one object of ``size`` bytes."""
    if size < 0:
        raise ValueError("size must be >= 0")
    return params.per_exchange + size


def get_efficiency(sizes: Sequence[float], params: OverheadParams) -> float:
    """Payload share of the wire bytes when every object costs one GET."""
    _check_sizes(sizes)
    payload = sum(sizes)
    total = sum(request_bytes(s, params) for s in sizes)
    if total == 0:
        raise ValueError("payload and overhead are both zero; efficiency is undefined")
    return payload / total


def burst_efficiency(sizes: Sequence[float], params: OverheadParams, connections: int) -> float:
    """Payload share of the wire bytes when objects travel in BURST exchanges.

    Only ``min(connections, N)`` exchanges happen: a connection with no
    objects to carry sends nothing.
    """
    _check_sizes(sizes)
    if connections < 1:
        raise ValueError("connections must be >= 1")
    used = min(connections, len(sizes))
    payload = sum(sizes)
    total = used * params.per_exchange + payload
    if total == 0:
        raise ValueError("payload and overhead are both zero; efficiency is undefined")
    return payload / total


def _processing(n: int, delay: DelayParams, processing: Sequence[float] | None) -> Sequence[float]:
    if processing is None:
        return [delay.processing_per_object] * n
    if len(processing) != n:
        raise ValueError("need one processing time per object")
    if any(p < 0 for p in processing):
        raise ValueError("processing times must be >= 0")
    return processing


def get_delay(n_objects: int, delay: DelayParams, processing: Sequence[float] | None = None) -> float:
    """Page delay with one GET per object, spread evenly over the connections.

    ``processing`` optionally gives a per-object server time that replaces
    ``delay.processing_per_object``.
    """
    if n_objects < 1:
        raise ValueError("need at least one object")
    per_object = _processing(n_objects, delay, processing)
    d_max = sum(delay.d_client_to_server + p + delay.d_server_to_client for p in per_object)
    return d_max / delay.connections


def burst_delay(
    partition: Sequence[Sequence[int]],
    delay: DelayParams,
    processing: Sequence[float] | None = None,
) -> float:
    """Page delay when each group of object indices is one BURST exchange.

    Every group pays one round trip plus the processing of its own objects;
    the page is done when the slowest connection is.
    """
    groups = [list(g) for g in partition]
    if not groups or any(len(g) == 0 for g in groups):
        raise ValueError("partition must hold at least one non-empty group")
    if len(groups) > delay.connections:
        raise ValueError("more groups than connections")
    indices = [i for g in groups for i in g]
    if len(set(indices)) != len(indices):
        raise ValueError("groups must be disjoint")
    if min(indices) < 0:
        raise ValueError("object indices must be >= 0")
    n = max(indices) + 1 if processing is None else len(processing)
    if max(indices) >= n:
        raise ValueError("object index out of range")
    per_object = _processing(n, delay, processing)
    return max(
        delay.d_client_to_server + sum(per_object[i] for i in g) + delay.d_server_to_client
        for g in groups
    )


@dataclass(frozen=True)
class SweepRow:
    n: int
    mode: str
    connections: int | None
    efficiency: float


def efficiency_sweep(
    payload: float,
    max_n: int,
    params: OverheadParams,
    connection_counts: Iterable[int],
) -> list[SweepRow]:
    """Efficiency for N = 1..max_n equal-size objects, GET and BURST at each C."""
    if max_n < 1:
        raise ValueError("max_n must be >= 1")
    counts = list(connection_counts)
    rows: list[SweepRow] = []
    for n in range(1, max_n + 1):
        sizes = [payload] * n
        rows.append(SweepRow(n, "get", None, get_efficiency(sizes, params)))
        for c in counts:
            rows.append(SweepRow(n, "burst", c, burst_efficiency(sizes, params, c)))
    return rows


def sweep_csv(rows: Iterable[SweepRow]) -> str:
    """Render sweep rows as ``n,mode,connections,efficiency``; GET rows leave connections blank."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["n", "mode", "connections", "efficiency"])
    for row in rows:
        conn = "" if row.connections is None else row.connections
        writer.writerow([row.n, row.mode, conn, f"{row.efficiency:.12g}"])
    return buf.getvalue()
