"""Packet records, bidirectional flow identity and per-flow packet history.

A flow is identified by its five-tuple, canonicalized so that a packet and
its mirrored reply map to the same key. Direction (uplink/downlink) is
resolved against the client IP address declared per trace.
"""
from __future__ import annotations

import functools
import ipaddress
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import AmbiguousDirection, KeyMismatch, OutOfOrderPacket


class Protocol(Enum):
    TCP = "TCP"
    UDP = "UDP"


class Direction(Enum):
    DOWNLINK = "DL"
    UPLINK = "UL"


@functools.lru_cache(maxsize=1024)
def _check_ipv4(addr: str) -> str:
    ip = ipaddress.ip_address(addr)
    if ip.version != 4:
        raise ValueError(f"IPv6 address not supported: {addr}")
    return str(ip)


@dataclass(frozen=True)
class PacketRecord:
    """One observed packet's Layer-3 metadata."""

    time: float
    src_ip: str
    src_port: int
    dst_ip: str
    dst_port: int
    protocol: Protocol
    payload_size: int

    def __post_init__(self):
        if self.time < 0:
            raise ValueError(f"negative packet time {self.time}")
        if self.payload_size < 0:
            raise ValueError(f"negative payload size {self.payload_size}")
        for port in (self.src_port, self.dst_port):
            if not 0 <= port <= 65535:
                raise ValueError(f"port {port} out of range")
        object.__setattr__(self, "src_ip", _check_ipv4(self.src_ip))
        object.__setattr__(self, "dst_ip", _check_ipv4(self.dst_ip))
        if (self.src_ip, self.src_port) == (self.dst_ip, self.dst_port):
            raise ValueError("source and destination endpoints are identical")

    def mirrored(self) -> "PacketRecord":
        """The same packet with endpoints swapped (reply direction)."""
        return PacketRecord(self.time, self.dst_ip, self.dst_port,
                            self.src_ip, self.src_port, self.protocol,
                            self.payload_size)


def _endpoint_sort_key(endpoint: tuple[str, int]):
    return (int(ipaddress.IPv4Address(endpoint[0])), endpoint[1])


@dataclass(frozen=True)
class FlowKey:
    """Direction-agnostic five-tuple; endpoint_a <= endpoint_b by (ip, port)."""

    endpoint_a: tuple[str, int]
    endpoint_b: tuple[str, int]
    protocol: Protocol

    @classmethod
    def from_endpoints(cls, ep1: tuple[str, int], ep2: tuple[str, int],
                       protocol: Protocol) -> "FlowKey":
        if _endpoint_sort_key(ep1) <= _endpoint_sort_key(ep2):
            return cls(ep1, ep2, protocol)
        return cls(ep2, ep1, protocol)

    def to_string(self) -> str:
        a, b = self.endpoint_a, self.endpoint_b
        return f"{a[0]}:{a[1]}-{b[0]}:{b[1]}/{self.protocol.value}"

    @classmethod
    def from_string(cls, text: str) -> "FlowKey":
        try:
            tuples, proto = text.rsplit("/", 1)
            ep1, ep2 = tuples.split("-")
            ip1, port1 = ep1.rsplit(":", 1)
            ip2, port2 = ep2.rsplit(":", 1)
            return cls.from_endpoints((ip1, int(port1)), (ip2, int(port2)),
                                      Protocol(proto))
        except (ValueError, KeyError) as exc:
            raise ValueError(f"malformed flow id {text!r}") from exc


def flow_key(p: PacketRecord) -> FlowKey:
    """Canonical bidirectional key: flow_key(p) == flow_key(p.mirrored())."""
    return FlowKey.from_endpoints((p.src_ip, p.src_port),
                                  (p.dst_ip, p.dst_port), p.protocol)


def direction_of(p: PacketRecord, client_ip: str) -> Direction:
    """Downlink iff the packet is addressed to the client."""
    to_client = p.dst_ip == client_ip
    from_client = p.src_ip == client_ip
    if to_client == from_client:
        raise AmbiguousDirection(
            f"client {client_ip} matches {'both' if to_client else 'neither'} "
            f"endpoint of {p.src_ip}->{p.dst_ip}")
    return Direction.DOWNLINK if to_client else Direction.UPLINK


class FlowState:
    """Time-ordered packet history of one bidirectional flow.

    Single-writer: all packets of one flow must be ingested by one logical
    worker at a time. ``max_window_s`` enables eviction of packets that can
    no longer influence any feature window; per-packet downlink IATs are
    frozen at ingest time, so eviction never changes a feature value.
    """

    def __init__(self, key: FlowKey, client_ip: str,
                 reorder_tolerance: float = 0.0,
                 max_window_s: float | None = None):
        self.key = key
        self.client_ip = _check_ipv4(client_ip)
        self.reorder_tolerance = reorder_tolerance
        self.max_window_s = max_window_s
        self.last_dl_time: float | None = None
        self.evicted = 0
        self._times: list[float] = []
        self._is_dl: list[bool] = []
        self._sizes: list[int] = []
        self._dl_iat: list[float] = []  # nan for uplink / first downlink
        self._cache: tuple[np.ndarray, ...] | None = None

    def __len__(self) -> int:
        return len(self._times)

    @property
    def last_time(self) -> float | None:
        return self._times[-1] if self._times else None

    def ingest(self, p: PacketRecord) -> "FlowState":
        if flow_key(p) != self.key:
            raise KeyMismatch(f"packet {flow_key(p).to_string()} does not "
                              f"belong to flow {self.key.to_string()}")
        if self._times and p.time < self._times[-1] - self.reorder_tolerance:
            raise OutOfOrderPacket(
                f"packet at t={p.time} after t={self._times[-1]}")
        direction = direction_of(p, self.client_ip)
        is_dl = direction is Direction.DOWNLINK
        iat = math.nan
        if is_dl:
            if self.last_dl_time is not None:
                iat = p.time - self.last_dl_time
            self.last_dl_time = p.time
        self._times.append(max(p.time, self._times[-1] if self._times else p.time))
        self._is_dl.append(is_dl)
        self._sizes.append(p.payload_size)
        self._dl_iat.append(iat)
        self._cache = None
        if self.max_window_s is not None:
            self._evict(p.time - self.max_window_s)
        return self

    def _evict(self, cutoff: float):
        drop = 0
        while drop < len(self._times) and self._times[drop] < cutoff:
            drop += 1
        if drop:
            del self._times[:drop]
            del self._is_dl[:drop]
            del self._sizes[:drop]
            del self._dl_iat[:drop]
            self.evicted += drop
            self._cache = None

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """(times, is_downlink, sizes, downlink_iat) as numpy views."""
        if self._cache is None:
            self._cache = (np.asarray(self._times, dtype=np.float64),
                           np.asarray(self._is_dl, dtype=bool),
                           np.asarray(self._sizes, dtype=np.int64),
                           np.asarray(self._dl_iat, dtype=np.float64))
        return self._cache


def build_flows(packets, client_ip: str,
                reorder_tolerance: float = 0.0) -> dict[FlowKey, FlowState]:
    """Group a time-ordered packet sequence into per-flow states."""
    flows: dict[FlowKey, FlowState] = {}
    for p in packets:
        key = flow_key(p)
        state = flows.get(key)
        if state is None:
            state = flows[key] = FlowState(key, client_ip, reorder_tolerance)
        state.ingest(p)
    return flows
