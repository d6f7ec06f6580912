"""Discrete-event generator of labeled packet traces.

An HAS client downloads segments through a piecewise-constant rate profile,
fills a play-back buffer, holds it at a target with an on-off request
pattern, adapts quality from EWMA throughput, and stalls when the buffer
runs dry. Ground-truth buffer-state intervals are derived from the
simulated buffer trajectory itself. Non-HAS generators produce file
download and web browsing traffic for the flow classification task.

All randomness flows from the script seed; identical scripts produce
byte-identical traces.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidScript
from .features import (Dataset, WindowConfig, concat_datasets,
                       extract_samples)
from .packets import PacketRecord, Protocol
from .traceio import (LabelInterval, TraceMeta, write_labels,
                      write_packet_csv)

UNLIMITED = math.inf

DL_PAYLOAD_BYTES = 1400
ACK_PAYLOAD_BYTES = 52          # below the uplink size threshold, like TCP ACKs
REQUEST_SIZE_RANGE = (600, 800)
REQUEST_CONT_RANGE = (150, 301)  # header continuation packet, exclusive end
SERVER_DELAY_S = 0.03
ACK_DELAY_S = 0.002
EWMA_ALPHA = 0.3
ABR_SAFETY = 0.8                # pick highest bitrate <= safety * EWMA throughput

SCENARIO_IDS = ("s1", "s2", "s3", "s4", "s5", "s6", "s7", "s8")

# VBR presets: lognormal sigma of the per-segment size factor
VBR_PRESETS = {"low": 0.1, "medium": 0.2, "high": 0.35}


@dataclass(frozen=True)
class QualityLadder:
    representations: tuple[tuple[str, float], ...]   # (name, avg bit/s) ascending

    def __post_init__(self):
        if len(self.representations) < 2:
            raise InvalidScript("ladder needs at least 2 representations")
        rates = [r for _, r in self.representations]
        if any(b <= a for a, b in zip(rates, rates[1:])):
            raise InvalidScript("ladder bitrates must be strictly increasing")

    def index_of(self, name: str) -> int:
        for i, (rep_name, _) in enumerate(self.representations):
            if rep_name == name:
                return i
        raise InvalidScript(f"unknown representation {name!r}")

    def bitrate(self, index: int) -> float:
        return self.representations[index][1]

    def pick_for_throughput(self, throughput: float) -> int:
        """Highest representation sustainable at ABR_SAFETY * throughput."""
        budget = ABR_SAFETY * throughput
        best = 0
        for i, (_, rate) in enumerate(self.representations):
            if rate <= budget:
                best = i
        return best


DEFAULT_LADDER = QualityLadder((
    ("144p", 80_000.0), ("240p", 150_000.0), ("360p", 300_000.0),
    ("480p", 500_000.0), ("720p", 900_000.0), ("1080p", 1_500_000.0)))


@dataclass(frozen=True)
class NetworkProfile:
    """Piecewise-constant rate schedule; math.inf means unlimited."""

    schedule: tuple[tuple[float, float], ...]    # (start_s, rate bit/s)

    def __post_init__(self):
        if not self.schedule or self.schedule[0][0] != 0:
            raise InvalidScript("rate schedule must start at t=0")
        starts = [s for s, _ in self.schedule]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise InvalidScript("schedule starts must be strictly increasing")
        if any(r <= 0 for _, r in self.schedule):
            raise InvalidScript("rates must be positive")

    def rate_at(self, t: float) -> float:
        rate = self.schedule[0][1]
        for start, r in self.schedule:
            if start <= t:
                rate = r
            else:
                break
        return rate


CONSTANT_UNLIMITED = NetworkProfile(((0.0, UNLIMITED),))


def _transfer_times(profile: NetworkProfile, cap: float, t0: float,
                    cum_bits: np.ndarray) -> np.ndarray:
    """Completion time of each cumulative bit count transferred from t0,
    at the profile rate capped by the link rate."""
    bp_times = [t0]
    rates = []
    for start, rate in profile.schedule:
        eff = min(rate, cap)
        if start <= t0:
            if rates:
                rates[-1] = eff
            else:
                rates.append(eff)
        else:
            if not rates:
                rates.append(min(profile.schedule[0][1], cap))
            bp_times.append(start)
            rates.append(eff)
    bp = np.asarray(bp_times)
    rate_arr = np.asarray(rates)
    span_bits = np.diff(bp) * rate_arr[:-1]
    cum = np.concatenate(([0.0], np.cumsum(span_bits)))
    j = np.searchsorted(cum, cum_bits, side="left") - 1
    j = np.clip(j, 0, len(rate_arr) - 1)
    return bp[j] + (cum_bits - cum[j]) / rate_arr[j]


@dataclass(frozen=True)
class SessionScript:
    scenario_id: str
    ladder: QualityLadder = DEFAULT_LADDER
    profile: NetworkProfile = CONSTANT_UNLIMITED
    video_duration_s: float = 420.0
    segment_duration_s: float = 5.0
    buffer_target_s: float = 120.0
    rng_seed: int = 0
    vbr_sigma: float = 0.2
    quality: str = "auto"                      # "auto" or a ladder rep name
    quality_switches: tuple[tuple[float, str], ...] = ()
    link_rate_bit_s: float = 6e6               # wire rate behind "unlimited"

    def __post_init__(self):
        if self.video_duration_s <= 0 or self.segment_duration_s <= 0:
            raise InvalidScript("durations must be positive")
        if self.buffer_target_s < 2 * self.segment_duration_s:
            raise InvalidScript("buffer target must cover >= 2 segments")
        if self.vbr_sigma < 0:
            raise InvalidScript("vbr_sigma must be non-negative")
        if self.quality != "auto":
            self.ladder.index_of(self.quality)
        for _, name in self.quality_switches:
            self.ladder.index_of(name)


@dataclass
class ClientState:
    """Play-back state of the simulated HAS client."""

    buffer_s: float = 0.0
    playing: bool = False
    current_rep: int = 0
    phase: str = "Filling"
    ewma_throughput: float | None = None


@dataclass
class LabeledTrace:
    packets: list[PacketRecord]
    labels: list[LabelInterval]
    meta: TraceMeta
    scenario: str

    @property
    def flow_id(self) -> str:
        from .packets import flow_key
        return flow_key(self.packets[0]).to_string()

    @property
    def end_time(self) -> float:
        return self.packets[-1].time if self.packets else 0.0


@dataclass
class _Breakpoint:
    time: float
    content: float       # seconds of content fully downloaded
    played: float        # seconds of content consumed
    playing: bool


def _buffer_at(bps: list[_Breakpoint], t: float) -> float:
    lo, hi = 0, len(bps) - 1
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if bps[mid].time <= t:
            lo = mid
        else:
            hi = mid - 1
    bp = bps[lo]
    played = bp.played + (t - bp.time if bp.playing else 0.0)
    return max(bp.content - min(played, bp.content), 0.0)


def simulate_has(script: SessionScript) -> LabeledTrace:
    """Run one HAS session and return its packet trace with exact labels."""
    rng = np.random.default_rng(script.rng_seed)
    client_ip = "10.0.0.2"
    server_ip = "172.217.4.15"
    client_port = int(40000 + rng.integers(0, 20000))
    proto = Protocol.UDP

    seg = script.segment_duration_s
    target = script.buffer_target_s
    ladder = script.ladder
    auto = script.quality == "auto"
    switches = sorted(script.quality_switches)

    def scripted_rep(t: float) -> int:
        name = script.quality if script.quality != "auto" else None
        for when, rep_name in switches:
            if when <= t:
                name = rep_name
        return ladder.index_of(name) if name else 0

    state = ClientState(current_rep=0 if auto else scripted_rep(0.0))

    content = 0.0
    played = 0.0
    playing = False
    t = 0.0
    bps = [_Breakpoint(0.0, 0.0, 0.0, False)]

    times_parts: list[np.ndarray] = []
    sizes_parts: list[np.ndarray] = []
    ul_parts: list[np.ndarray] = []

    def mark():
        bps.append(_Breakpoint(t, content, played, playing))

    def advance_play(to_t: float):
        nonlocal t, played, playing
        while t < to_t - 1e-12:
            if playing:
                avail = content - played
                if to_t - t <= avail + 1e-12:
                    played += to_t - t
                    t = to_t
                else:
                    t += avail
                    played = content
                    playing = False   # stall: buffer ran dry
                    mark()
            else:
                t = to_t

    def emit(times: np.ndarray, sizes: np.ndarray, uplink: bool):
        times_parts.append(times)
        sizes_parts.append(sizes)
        ul_parts.append(np.full(times.shape, uplink))

    total_dl_bytes = 0
    while content < script.video_duration_s - 1e-9:
        buffer_now = content - played
        if playing and buffer_now > target - seg + 1e-9:
            # on-off regulator: wait for one segment of head-room
            advance_play(t + (buffer_now - (target - seg)))
            mark()
        t_req = t

        if auto:
            if state.ewma_throughput is not None:
                state.current_rep = ladder.pick_for_throughput(
                    state.ewma_throughput)
        else:
            state.current_rep = scripted_rep(t_req)
        bitrate = ladder.bitrate(state.current_rep)

        factor = float(rng.lognormal(-script.vbr_sigma ** 2 / 2,
                                     script.vbr_sigma)) \
            if script.vbr_sigma > 0 else 1.0
        seg_bytes = max(DL_PAYLOAD_BYTES,
                        int(round(bitrate * seg / 8.0 * factor)))

        # request = main packet plus a header-continuation packet
        req_size = int(rng.integers(REQUEST_SIZE_RANGE[0],
                                    REQUEST_SIZE_RANGE[1] + 1))
        cont_size = int(rng.integers(*REQUEST_CONT_RANGE))
        emit(np.asarray([t_req, t_req + 0.001]),
             np.asarray([req_size, cont_size]), uplink=True)

        n_pk = math.ceil(seg_bytes / DL_PAYLOAD_BYTES)
        pk_sizes = np.full(n_pk, DL_PAYLOAD_BYTES, dtype=np.int64)
        pk_sizes[-1] = seg_bytes - DL_PAYLOAD_BYTES * (n_pk - 1)
        cum_bits = np.cumsum(pk_sizes * 8).astype(np.float64)
        pk_times = _transfer_times(script.profile, script.link_rate_bit_s,
                                   t_req + SERVER_DELAY_S, cum_bits)
        emit(pk_times, pk_sizes, uplink=False)
        total_dl_bytes += seg_bytes
        ack_times = pk_times[1::2] + ACK_DELAY_S
        if ack_times.size:
            emit(ack_times, np.full(ack_times.shape, ACK_PAYLOAD_BYTES,
                                    dtype=np.int64), uplink=True)

        t_end = float(pk_times[-1])
        measured = seg_bytes * 8.0 / (t_end - t_req)
        state.ewma_throughput = measured if state.ewma_throughput is None \
            else EWMA_ALPHA * measured + (1 - EWMA_ALPHA) * state.ewma_throughput

        advance_play(t_end)
        content += seg
        if not playing and content - played >= 2 * seg - 1e-9:
            playing = True    # start / resume play-back
        mark()

    state.buffer_s = max(content - played, 0.0)
    state.playing = playing

    all_times = np.concatenate(times_parts)
    all_sizes = np.concatenate(sizes_parts)
    all_ul = np.concatenate(ul_parts)
    order = np.argsort(all_times, kind="stable")

    packets = []
    for i in order:
        if all_ul[i]:
            packets.append(PacketRecord(float(all_times[i]), client_ip,
                                        client_port, server_ip, 443, proto,
                                        int(all_sizes[i])))
        else:
            packets.append(PacketRecord(float(all_times[i]), server_ip, 443,
                                        client_ip, client_port, proto,
                                        int(all_sizes[i])))

    end_time = float(all_times[order[-1]])
    flow_id = _flow_id_str(client_ip, client_port, server_ip, 443, proto)
    labels = [LabelInterval(flow_id, 0.0, end_time + 1e-9, "HAS")]
    labels += _buffer_labels(bps, end_time, seg, target, flow_id)
    state.phase = labels[-1].label if len(labels) > 1 else "Filling"

    meta = TraceMeta(client_ip=client_ip,
                     trace_id=f"{script.scenario_id}-{script.rng_seed}")
    return LabeledTrace(packets, labels, meta, script.scenario_id)


def _flow_id_str(ip_a, port_a, ip_b, port_b, proto) -> str:
    from .packets import FlowKey
    return FlowKey.from_endpoints((ip_a, port_a), (ip_b, port_b),
                                  proto).to_string()


# thresholds of the trajectory -> label mapping
_SLOPE_FILLING = 0.2        # buffer seconds gained per second
_SLOPE_DEPLETING = -0.2
_MIN_RUN_S = 3              # shorter runs are absorbed by the previous phase
_SAMPLE_STEP = 0.25
_SMOOTH_S = 5.0


def _buffer_labels(bps: list[_Breakpoint], end_time: float, seg: float,
                   target: float, flow_id: str) -> list[LabelInterval]:
    n_sec = max(int(math.ceil(end_time)), 1)
    grid = np.arange(0.0, n_sec + _SAMPLE_STEP, _SAMPLE_STEP)
    series = np.asarray([_buffer_at(bps, float(g)) for g in grid])
    half = int(round(_SMOOTH_S / 2 / _SAMPLE_STEP))
    padded = np.concatenate((np.full(half, series[0]), series,
                             np.full(half, series[-1])))
    kernel = np.ones(2 * half + 1) / (2 * half + 1)
    smooth = np.convolve(padded, kernel, mode="valid")

    def smooth_at(tq: float) -> float:
        i = int(round(min(max(tq, 0.0), n_sec) / _SAMPLE_STEP))
        return float(smooth[min(i, len(smooth) - 1)])

    states = []
    reached_target = False
    for sec in range(n_sec):
        mid = sec + 0.5
        lo, hi = max(mid - 2.5, 0.0), min(mid + 2.5, n_sec)
        slope = (smooth_at(hi) - smooth_at(lo)) / (hi - lo) if hi > lo else 0.0
        level = smooth_at(mid)
        if level >= target - seg - 2.0:
            reached_target = True
        elif level < target - 2 * seg - 2.0:
            reached_target = False
        if reached_target and slope > _SLOPE_DEPLETING:
            states.append("Steady")
        elif slope <= _SLOPE_DEPLETING:
            states.append("Depleting")
        elif slope >= _SLOPE_FILLING and not reached_target:
            states.append("Filling")
        else:
            states.append("Unclear")

    # residual rule: a state must persist for _MIN_RUN_S consecutive seconds
    # or it is absorbed into the previous phase (the first run, into the next)
    changed = True
    while changed:
        changed = False
        run_start = 0
        for i in range(1, n_sec + 1):
            if i == n_sec or states[i] != states[run_start]:
                if i - run_start < _MIN_RUN_S and not (run_start == 0
                                                       and i == n_sec):
                    fill = states[run_start - 1] if run_start else states[i]
                    for j in range(run_start, i):
                        states[j] = fill
                    changed = True
                    break
                run_start = i

    intervals = []
    run_start = 0
    for i in range(1, n_sec + 1):
        if i == n_sec or states[i] != states[run_start]:
            end = end_time + 1e-9 if i == n_sec else float(i)
            intervals.append(LabelInterval(flow_id, float(run_start), end,
                                           states[run_start]))
            run_start = i
    return intervals


# --- non-HAS generators ---

DOWNLOAD_PROFILE = NetworkProfile(((0.0, 2e6),))
WEB_RATE_BIT_S = 10e6


def simulate_download(duration_s: float, profile: NetworkProfile = DOWNLOAD_PROFILE,
                      seed: int = 0) -> LabeledTrace:
    """Bulk file download: a few requests up front, then a continuous
    downlink stream at the profile rate."""
    rng = np.random.default_rng(seed)
    client_ip, server_ip = "10.0.0.3", "93.184.216.34"
    client_port = int(40000 + rng.integers(0, 20000))
    proto = Protocol.TCP

    n_req = int(rng.integers(1, 4))
    req_times = np.arange(n_req) * 0.02
    req_sizes = rng.integers(300, 1201, n_req)

    t0 = 0.05
    if any(math.isinf(r) for _, r in profile.schedule):
        raise InvalidScript("download profile must have finite rates")
    cap = 1e12   # download runs at the profile rate; no separate wire cap
    bits_per_pk = DL_PAYLOAD_BYTES * 8
    # upper bound on packet count from the fastest scheduled rate
    max_rate = max(r for _, r in profile.schedule)
    n_guess = int((duration_s - t0) * max_rate / bits_per_pk) + 2
    cum = np.arange(1, n_guess + 1, dtype=np.float64) * bits_per_pk
    pk_times = _transfer_times(profile, cap, t0, cum)
    keep = pk_times <= duration_s
    pk_times = pk_times[keep]
    pk_sizes = np.full(pk_times.shape, DL_PAYLOAD_BYTES, dtype=np.int64)
    ack_times = pk_times[1::2] + ACK_DELAY_S
    ack_sizes = np.full(ack_times.shape, ACK_PAYLOAD_BYTES, dtype=np.int64)

    packets = []
    events = [(req_times, req_sizes, True), (pk_times, pk_sizes, False),
              (ack_times, ack_sizes, True)]
    all_times = np.concatenate([e[0] for e in events])
    all_sizes = np.concatenate([e[1] for e in events])
    all_ul = np.concatenate([np.full(e[0].shape, e[2]) for e in events])
    for i in np.argsort(all_times, kind="stable"):
        if all_ul[i]:
            packets.append(PacketRecord(float(all_times[i]), client_ip,
                                        client_port, server_ip, 443, proto,
                                        int(all_sizes[i])))
        else:
            packets.append(PacketRecord(float(all_times[i]), server_ip, 443,
                                        client_ip, client_port, proto,
                                        int(all_sizes[i])))
    end_time = packets[-1].time
    flow_id = _flow_id_str(client_ip, client_port, server_ip, 443, proto)
    labels = [LabelInterval(flow_id, 0.0, end_time + 1e-9, "NonHAS")]
    meta = TraceMeta(client_ip=client_ip, trace_id=f"download-{seed}")
    return LabeledTrace(packets, labels, meta, "download")


def simulate_web(duration_s: float, seed: int = 0,
                 rate_bit_s: float = WEB_RATE_BIT_S) -> LabeledTrace:
    """Web browsing: page bursts separated by think-time gaps of [5, 15] s."""
    rng = np.random.default_rng(seed)
    client_ip, server_ip = "10.0.0.4", "151.101.1.69"
    client_port = int(40000 + rng.integers(0, 20000))
    proto = Protocol.TCP
    profile = NetworkProfile(((0.0, rate_bit_s),))

    parts_t, parts_s, parts_ul = [], [], []
    t = 0.0
    while t < duration_s:
        n_get = int(rng.integers(3, 11))
        get_times = t + np.arange(n_get) * 0.01
        get_sizes = rng.integers(300, 1201, n_get)
        parts_t.append(get_times)
        parts_s.append(get_sizes.astype(np.int64))
        parts_ul.append(np.full(n_get, True))

        burst_bytes = int(rng.uniform(0.5e6, 5e6))
        n_pk = math.ceil(burst_bytes / DL_PAYLOAD_BYTES)
        pk_sizes = np.full(n_pk, DL_PAYLOAD_BYTES, dtype=np.int64)
        pk_sizes[-1] = burst_bytes - DL_PAYLOAD_BYTES * (n_pk - 1)
        cum = np.cumsum(pk_sizes * 8).astype(np.float64)
        t0 = float(get_times[-1]) + SERVER_DELAY_S
        pk_times = _transfer_times(profile, rate_bit_s, 0.0, cum) + t0
        parts_t.append(pk_times)
        parts_s.append(pk_sizes)
        parts_ul.append(np.full(n_pk, False))
        ack_times = pk_times[1::2] + ACK_DELAY_S
        parts_t.append(ack_times)
        parts_s.append(np.full(ack_times.shape, ACK_PAYLOAD_BYTES,
                               dtype=np.int64))
        parts_ul.append(np.full(ack_times.shape, True))

        t = float(pk_times[-1]) + float(rng.uniform(5.0, 15.0))

    all_times = np.concatenate(parts_t)
    all_sizes = np.concatenate(parts_s)
    all_ul = np.concatenate(parts_ul)
    packets = []
    for i in np.argsort(all_times, kind="stable"):
        if all_ul[i]:
            packets.append(PacketRecord(float(all_times[i]), client_ip,
                                        client_port, server_ip, 443, proto,
                                        int(all_sizes[i])))
        else:
            packets.append(PacketRecord(float(all_times[i]), server_ip, 443,
                                        client_ip, client_port, proto,
                                        int(all_sizes[i])))
    end_time = packets[-1].time
    flow_id = _flow_id_str(client_ip, client_port, server_ip, 443, proto)
    labels = [LabelInterval(flow_id, 0.0, end_time + 1e-9, "NonHAS")]
    meta = TraceMeta(client_ip=client_ip, trace_id=f"web-{seed}")
    return LabeledTrace(packets, labels, meta, "web")


# --- scenario grid (the eight experimental profiles) ---

def make_scenario_script(scenario_id: str, seed: int,
                         video_duration_s: float = 420.0,
                         vbr_sigma: float = 0.2,
                         ladder: QualityLadder = DEFAULT_LADDER) -> SessionScript:
    """Session script for one of the eight HAS scenarios; randomized event
    times are drawn deterministically from the seed."""
    if scenario_id not in SCENARIO_IDS:
        raise InvalidScript(f"unknown scenario {scenario_id!r}")
    draw = np.random.default_rng([seed, 0x5CE])  # scenario randomization only
    base = dict(scenario_id=scenario_id, ladder=ladder,
                video_duration_s=video_duration_s, vbr_sigma=vbr_sigma,
                rng_seed=seed)
    if scenario_id == "s1":
        return SessionScript(quality="480p", **base)
    if scenario_id == "s2":
        return SessionScript(quality="720p", **base)
    if scenario_id == "s3":
        t0 = float(draw.uniform(120, 240))
        return SessionScript(quality="720p",
                             quality_switches=((t0, "480p"),), **base)
    if scenario_id == "s4":
        t0 = float(draw.uniform(120, 240))
        profile = NetworkProfile(((0.0, UNLIMITED), (t0, 500e3),
                                  (t0 + 150, UNLIMITED)))
        return SessionScript(profile=profile, **base)
    if scenario_id == "s5":
        return SessionScript(profile=NetworkProfile(((0.0, 1024e3),)), **base)
    if scenario_id == "s6":
        # DASH-IF style high-low-high staircase, one step every 40 s
        steps = [600e3, 300e3, 150e3, 88e3, 88e3, 88e3, 88e3, 300e3]
        schedule = [(0.0, UNLIMITED)]
        schedule += [(120.0 + 40.0 * i, r) for i, r in enumerate(steps)]
        return SessionScript(profile=NetworkProfile(tuple(schedule)), **base)
    if scenario_id == "s7":
        schedule = [(0.0, UNLIMITED), (120.0, 3000e3)]
        n = 0
        while 160.0 + 85.0 * n < video_duration_s:
            schedule.append((160.0 + 85.0 * n, 100e3))
            schedule.append((205.0 + 85.0 * n, 3000e3))
            n += 1
        return SessionScript(profile=NetworkProfile(tuple(schedule)), **base)
    # s8
    schedule = ((0.0, UNLIMITED), (120.0, 100e3), (180.0, UNLIMITED),
                (300.0, 100e3), (360.0, UNLIMITED))
    return SessionScript(profile=NetworkProfile(schedule), **base)


# --- script files ---

def write_script(script: SessionScript, path) -> None:
    lines = [f"scenario = {script.scenario_id}",
             f"quality = {script.quality}",
             f"video_duration_s = {script.video_duration_s:g}",
             f"segment_duration_s = {script.segment_duration_s:g}",
             f"buffer_target_s = {script.buffer_target_s:g}",
             f"vbr_sigma = {script.vbr_sigma:g}",
             f"link_rate_bit_s = {script.link_rate_bit_s:g}",
             f"seed = {script.rng_seed}",
             "ladder = " + " ".join(f"{n}:{r:g}"
                                    for n, r in script.ladder.representations)]
    for when, name in script.quality_switches:
        lines.append(f"switch = {when:g} {name}")
    for start, rate in script.profile.schedule:
        value = "inf" if math.isinf(rate) else f"{rate:g}"
        lines.append(f"rate = {start:g} {value}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_script(path) -> SessionScript:
    kv: dict[str, str] = {}
    switches: list[tuple[float, str]] = []
    schedule: list[tuple[float, float]] = []
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key == "switch":
            when, name = value.split()
            switches.append((float(when), name))
        elif key == "rate":
            start, rate = value.split()
            schedule.append((float(start),
                             UNLIMITED if rate == "inf" else float(rate)))
        else:
            kv[key] = value
    try:
        ladder = QualityLadder(tuple(
            (part.split(":")[0], float(part.split(":")[1]))
            for part in kv["ladder"].split()))
        return SessionScript(
            scenario_id=kv["scenario"], ladder=ladder,
            profile=NetworkProfile(tuple(schedule)),
            video_duration_s=float(kv["video_duration_s"]),
            segment_duration_s=float(kv["segment_duration_s"]),
            buffer_target_s=float(kv["buffer_target_s"]),
            rng_seed=int(kv["seed"]), vbr_sigma=float(kv["vbr_sigma"]),
            quality=kv["quality"], quality_switches=tuple(switches),
            link_rate_bit_s=float(kv["link_rate_bit_s"]))
    except KeyError as exc:
        raise InvalidScript(f"script missing field {exc}") from exc


# --- corpus building ---

def _trace_dataset(trace: LabeledTrace, cfg: WindowConfig,
                   task: str) -> Dataset:
    family = {"flow": ("HAS", "NonHAS"), "buffer":
              ("Filling", "Steady", "Depleting", "Unclear")}[task]
    labels = [iv for iv in trace.labels if iv.label in family]
    return extract_samples(trace.packets, trace.meta.client_ip, labels, cfg,
                           scenario=trace.scenario)


def write_trace(trace: LabeledTrace, out_dir, stem: str) -> dict:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    packet_path = out_dir / f"{stem}.packets.csv"
    label_path = out_dir / f"{stem}.labels.csv"
    write_packet_csv(packet_path, trace.meta, trace.packets)
    write_labels(label_path, trace.labels)
    return {"trace": packet_path.name, "labels": label_path.name,
            "scenario": trace.scenario, "trace_id": trace.meta.trace_id}


def build_buffer_corpus(reps: int = 10,
                        vbr_sigmas: tuple[float, ...] = (0.1, 0.2, 0.35),
                        base_seed: int = 0,
                        cfg: WindowConfig = WindowConfig(),
                        video_duration_s: float = 420.0,
                        scenarios: tuple[str, ...] = SCENARIO_IDS,
                        out_dir=None) -> Dataset:
    """Buffer-state dataset over the scenario grid: scenarios x reps x VBR
    presets, scenario tags attached per row."""
    parts = []
    manifest = []
    for si, scenario in enumerate(scenarios):
        for rep in range(reps):
            for vi, sigma in enumerate(vbr_sigmas):
                seed = base_seed + 1_000_000 + si * 10_000 + rep * 10 + vi
                script = make_scenario_script(scenario, seed,
                                              video_duration_s, sigma)
                trace = simulate_has(script)
                parts.append(_trace_dataset(trace, cfg, "buffer"))
                if out_dir is not None:
                    manifest.append(write_trace(
                        trace, out_dir, f"{scenario}-r{rep}-v{vi}"))
    if out_dir is not None:
        (Path(out_dir) / "manifest.json").write_text(
            json.dumps(manifest, indent=2))
    return concat_datasets(parts)


def build_flow_corpus(n_has: int = 104, n_nonhas: int = 104,
                      base_seed: int = 0,
                      cfg: WindowConfig = WindowConfig(),
                      video_duration_s: float = 180.0,
                      out_dir=None) -> Dataset:
    """HAS vs non-HAS dataset: HAS sessions cycled over the scenario grid,
    non-HAS split between file downloads and web browsing."""
    parts = []
    manifest = []
    for i in range(n_has):
        scenario = SCENARIO_IDS[i % len(SCENARIO_IDS)]
        seed = base_seed + 2_000_000 + i
        sigma = (0.1, 0.2, 0.35)[i % 3]
        trace = simulate_has(make_scenario_script(
            scenario, seed, video_duration_s, sigma))
        parts.append(_trace_dataset(trace, cfg, "flow"))
        if out_dir is not None:
            manifest.append(write_trace(trace, out_dir, f"has-{i}"))
    for i in range(n_nonhas):
        seed = base_seed + 3_000_000 + i
        if i % 2 == 0:
            rate = (1.5e6, 2e6, 3e6, 4e6)[(i // 2) % 4]
            duration = 60.0 + 20.0 * ((i // 2) % 4)
            trace = simulate_download(duration,
                                      NetworkProfile(((0.0, rate),)), seed)
        else:
            trace = simulate_web(150.0, seed)
        parts.append(_trace_dataset(trace, cfg, "flow"))
        if out_dir is not None:
            manifest.append(write_trace(trace, out_dir, f"nonhas-{i}"))
    if out_dir is not None:
        (Path(out_dir) / "manifest.json").write_text(
            json.dumps(manifest, indent=2))
    return concat_datasets(parts)
