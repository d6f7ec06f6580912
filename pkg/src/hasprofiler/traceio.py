"""File formats: packet CSV, classic pcap, label intervals, dataset CSV.

Packet CSV
    ``# key=value`` comment lines (client_ip, trace_id, sampling_period_s),
    then a header row ``time_s,src_ip,src_port,dst_ip,dst_port,protocol,
    payload_bytes`` and one packet per line.

Labels
    One interval per line: ``flow_id,start_s,end_s,label``. Intervals of the
    same flow and label family must be disjoint.

Dataset CSV
    ``# classes=...`` (and optional ``# scenarios=1``) comments, a header of
    feature names plus ``label`` (plus ``scenario``), then one row per
    sample with feature values at 12 significant digits.

All readers reject malformed fields rather than coercing them.
"""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass

import numpy as np

from .errors import (MissingClientIp, OverlapError, ParseError,
                     UnsupportedFormat)
from .features import Dataset, BUFFER_CLASSES, FLOW_CLASSES
from .packets import PacketRecord, Protocol

PACKET_HEADER = ["time_s", "src_ip", "src_port", "dst_ip", "dst_port",
                 "protocol", "payload_bytes"]


@dataclass(frozen=True)
class TraceMeta:
    client_ip: str
    trace_id: str
    sampling_period_s: float = 1.0

    def __post_init__(self):
        if self.sampling_period_s <= 0:
            raise ValueError("sampling period must be positive")


@dataclass(frozen=True)
class LabelInterval:
    flow_id: str
    start: float
    end: float
    label: str

    def __post_init__(self):
        if not self.start < self.end:
            raise ValueError(f"empty label interval [{self.start}, {self.end})")
        if self.label not in FLOW_CLASSES and self.label not in BUFFER_CLASSES:
            raise ValueError(f"unknown label {self.label!r}")

    @property
    def family(self) -> str:
        return "flow" if self.label in FLOW_CLASSES else "buffer"


def validate_disjoint(intervals) -> None:
    """Raise OverlapError if two intervals of one flow and family overlap."""
    groups: dict[tuple[str, str], list[LabelInterval]] = {}
    for iv in intervals:
        groups.setdefault((iv.flow_id, iv.family), []).append(iv)
    for ivs in groups.values():
        ivs = sorted(ivs, key=lambda iv: iv.start)
        for a, b in zip(ivs, ivs[1:]):
            if b.start < a.end:
                raise OverlapError(f"intervals overlap: {a} / {b}")


# --- packet CSV ---

def write_packet_csv(path, meta: TraceMeta, packets) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# client_ip={meta.client_ip}\n")
        fh.write(f"# trace_id={meta.trace_id}\n")
        fh.write(f"# sampling_period_s={meta.sampling_period_s:g}\n")
        writer = csv.writer(fh)
        writer.writerow(PACKET_HEADER)
        for p in packets:
            writer.writerow([f"{p.time:.9f}", p.src_ip, p.src_port,
                             p.dst_ip, p.dst_port, p.protocol.value,
                             p.payload_size])


def read_packet_csv(path) -> tuple[TraceMeta, list[PacketRecord]]:
    meta_kv: dict[str, str] = {}
    packets: list[PacketRecord] = []
    with open(path, newline="") as fh:
        header_seen = False
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                if "=" in line:
                    key, _, value = line.lstrip("# ").partition("=")
                    meta_kv[key.strip()] = value.strip()
                continue
            cells = next(csv.reader([line]))
            if not header_seen:
                if cells != PACKET_HEADER:
                    raise ParseError(f"unexpected header {cells}", lineno)
                header_seen = True
                continue
            if len(cells) != len(PACKET_HEADER):
                raise ParseError(f"expected {len(PACKET_HEADER)} columns, "
                                 f"got {len(cells)}", lineno)
            try:
                packets.append(PacketRecord(
                    time=float(cells[0]), src_ip=cells[1],
                    src_port=int(cells[2]), dst_ip=cells[3],
                    dst_port=int(cells[4]), protocol=Protocol(cells[5]),
                    payload_size=int(cells[6])))
            except ValueError as exc:
                raise ParseError(str(exc), lineno) from exc
        if not header_seen:
            raise ParseError("missing header row", 1)
    if "client_ip" not in meta_kv:
        raise MissingClientIp("packet trace lacks a client_ip metadata line")
    try:
        meta = TraceMeta(client_ip=meta_kv["client_ip"],
                         trace_id=meta_kv.get("trace_id", ""),
                         sampling_period_s=float(
                             meta_kv.get("sampling_period_s", "1")))
    except ValueError as exc:
        raise ParseError(f"bad metadata: {exc}") from exc
    return meta, packets


# --- label intervals ---

def write_labels(path, intervals) -> None:
    validate_disjoint(intervals)
    with open(path, "w") as fh:
        for iv in intervals:
            # shortest round-trip float repr keeps read(write(x)) exact
            fh.write(f"{iv.flow_id},{iv.start!r},{iv.end!r},{iv.label}\n")


def read_labels(path) -> list[LabelInterval]:
    intervals: list[LabelInterval] = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            if len(parts) != 4:
                raise ParseError(f"expected 4 fields, got {len(parts)}", lineno)
            try:
                intervals.append(LabelInterval(parts[0], float(parts[1]),
                                               float(parts[2]), parts[3]))
            except ValueError as exc:
                raise ParseError(str(exc), lineno) from exc
    validate_disjoint(intervals)
    return intervals


# --- dataset CSV ---

def write_dataset_csv(ds: Dataset, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# classes={','.join(ds.class_names)}\n")
        if ds.scenario_tags is not None:
            fh.write("# scenarios=1\n")
        writer = csv.writer(fh)
        header = list(ds.feature_names) + ["label"]
        if ds.scenario_tags is not None:
            header.append("scenario")
        writer.writerow(header)
        for i in range(ds.n_samples):
            row = [f"{v:.12g}" for v in ds.features[i]]
            row.append(str(int(ds.labels[i])))
            if ds.scenario_tags is not None:
                row.append(ds.scenario_tags[i])
            writer.writerow(row)


def read_dataset_csv(path) -> Dataset:
    class_names: list[str] | None = None
    has_scenarios = False
    feature_names: list[str] | None = None
    rows, codes, tags = [], [], []
    with open(path, newline="") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, value = line.lstrip("# ").partition("=")
                if key.strip() == "classes":
                    class_names = value.strip().split(",")
                elif key.strip() == "scenarios":
                    has_scenarios = value.strip() == "1"
                continue
            cells = next(csv.reader([line]))
            if feature_names is None:
                expected_tail = ["label", "scenario"] if has_scenarios \
                    else ["label"]
                if cells[-len(expected_tail):] != expected_tail:
                    raise ParseError(f"header must end with {expected_tail}",
                                     lineno)
                feature_names = cells[:-len(expected_tail)]
                continue
            n_expected = len(feature_names) + (2 if has_scenarios else 1)
            if len(cells) != n_expected:
                raise ParseError(f"expected {n_expected} columns, "
                                 f"got {len(cells)}", lineno)
            try:
                if has_scenarios:
                    tags.append(cells[-1])
                    cells = cells[:-1]
                codes.append(int(cells[-1]))
                rows.append([float(c) for c in cells[:-1]])
            except ValueError as exc:
                raise ParseError(str(exc), lineno) from exc
    if class_names is None or feature_names is None:
        raise ParseError("dataset file lacks classes comment or header")
    features = np.asarray(rows, dtype=np.float64) if rows \
        else np.empty((0, len(feature_names)))
    return Dataset(features, np.asarray(codes, dtype=np.int64),
                   feature_names, class_names,
                   tags if has_scenarios else None)


# --- classic pcap ---

_MAGIC_US_BE = 0xA1B2C3D4
_MAGIC_US_LE = 0xD4C3B2A1
_MAGIC_NS_BE = 0xA1B23C4D
_MAGIC_NS_LE = 0x4D3CB2A1
_LINKTYPE_ETHERNET = 1


@dataclass
class PcapReadResult:
    packets: list[PacketRecord]
    skipped: int = 0   # truncated or non-IPv4/TCP/UDP frames


def read_pcap(path, client_ip: str | None = None) -> PcapReadResult:
    """Parse a classic pcap (Ethernet linktype) into packet records.

    payload_size is derived from the IP and transport headers, so captures
    with a short snaplen still yield correct sizes. ``client_ip`` is unused
    for parsing and accepted for call-site symmetry with packet CSVs.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 24:
        raise UnsupportedFormat("file too short for a pcap global header")
    magic = struct.unpack(">I", data[:4])[0]
    if magic in (_MAGIC_US_BE, _MAGIC_NS_BE):
        endian = ">"
    elif magic in (_MAGIC_US_LE, _MAGIC_NS_LE):
        endian = "<"
    else:
        raise UnsupportedFormat(f"unknown capture magic 0x{magic:08x} "
                                "(pcapng is not supported)")
    nanos = magic in (_MAGIC_NS_BE, _MAGIC_NS_LE)
    linktype = struct.unpack(endian + "I", data[20:24])[0]
    if linktype != _LINKTYPE_ETHERNET:
        raise UnsupportedFormat(f"unsupported linktype {linktype}")

    frac = 1e-9 if nanos else 1e-6
    packets: list[PacketRecord] = []
    skipped = 0
    offset = 24
    while offset + 16 <= len(data):
        sec, sub, caplen, _wirelen = struct.unpack(
            endian + "IIII", data[offset:offset + 16])
        offset += 16
        frame = data[offset:offset + caplen]
        offset += caplen
        record = _parse_ethernet_frame(frame, sec + sub * frac)
        if record is None:
            skipped += 1
        else:
            packets.append(record)
    return PcapReadResult(packets, skipped)


def _parse_ethernet_frame(frame: bytes, time: float) -> PacketRecord | None:
    if len(frame) < 14:
        return None
    ethertype = struct.unpack(">H", frame[12:14])[0]
    if ethertype != 0x0800:  # IPv4 only
        return None
    ip = frame[14:]
    if len(ip) < 20:
        return None
    ihl = (ip[0] & 0x0F) * 4
    if ip[0] >> 4 != 4 or ihl < 20 or len(ip) < ihl:
        return None
    total_len = struct.unpack(">H", ip[2:4])[0]
    proto_num = ip[9]
    src_ip = ".".join(str(b) for b in ip[12:16])
    dst_ip = ".".join(str(b) for b in ip[16:20])
    transport = ip[ihl:]
    if proto_num == 6:
        if len(transport) < 20:
            return None
        header_len = ((transport[12] >> 4) & 0x0F) * 4
        protocol = Protocol.TCP
    elif proto_num == 17:
        if len(transport) < 8:
            return None
        header_len = 8
        protocol = Protocol.UDP
    else:
        return None
    src_port, dst_port = struct.unpack(">HH", transport[:4])
    payload = total_len - ihl - header_len
    if payload < 0:
        return None
    try:
        return PacketRecord(time=time, src_ip=src_ip, src_port=src_port,
                            dst_ip=dst_ip, dst_port=dst_port,
                            protocol=protocol, payload_size=payload)
    except ValueError:
        return None
