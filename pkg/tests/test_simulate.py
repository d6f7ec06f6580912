"""HAS session simulator: traffic shape, labels and determinism."""
import math

import numpy as np
import pytest

from hasprofiler.errors import InvalidScript
from hasprofiler.features import WindowConfig
from hasprofiler.packets import build_flows, flow_key
from hasprofiler.simulate import (SCENARIO_IDS, UNLIMITED,
                                  NetworkProfile, SessionScript,
                                  _Breakpoint, _buffer_at, _trace_dataset,
                                  _transfer_times, build_buffer_corpus,
                                  build_flow_corpus, make_scenario_script,
                                  read_script, simulate_download,
                                  simulate_has, simulate_web, write_script,
                                  write_trace)
from hasprofiler.features import dl_load
from hasprofiler.traceio import read_labels, read_packet_csv, validate_disjoint


class TestTransferTimes:
    def test_constant_rate(self):
        profile = NetworkProfile(((0.0, 1000.0),))
        out = _transfer_times(profile, 1e12, 2.0, np.array([500.0, 1000.0]))
        assert out == pytest.approx([2.5, 3.0])

    def test_rate_step(self):
        # 1000 bit/s until t=10, then 2000 bit/s; start at t=5
        profile = NetworkProfile(((0.0, 1000.0), (10.0, 2000.0)))
        out = _transfer_times(profile, 1e12, 5.0,
                              np.array([5000.0, 10000.0]))
        assert out == pytest.approx([10.0, 12.5])

    def test_cap_applies(self):
        profile = NetworkProfile(((0.0, UNLIMITED),))
        out = _transfer_times(profile, 1000.0, 0.0, np.array([1000.0]))
        assert out == pytest.approx([1.0])


class TestBufferAt:
    def test_playing_and_paused(self):
        bps = [_Breakpoint(0.0, 0.0, 0.0, False),
               _Breakpoint(1.0, 10.0, 0.0, True)]
        assert _buffer_at(bps, 0.5) == 0.0
        assert _buffer_at(bps, 1.0) == 10.0
        assert _buffer_at(bps, 4.0) == pytest.approx(7.0)

    def test_never_negative(self):
        bps = [_Breakpoint(0.0, 5.0, 0.0, True)]
        assert _buffer_at(bps, 100.0) == 0.0


class TestSessionScript:
    def test_validation(self):
        with pytest.raises(InvalidScript):
            SessionScript("s1", video_duration_s=0.0)
        with pytest.raises(InvalidScript):
            SessionScript("s1", buffer_target_s=5.0)
        with pytest.raises(InvalidScript):
            SessionScript("s1", quality="8k")

    def test_roundtrip(self, tmp_path):
        script = make_scenario_script("s7", 42, video_duration_s=300.0,
                                      vbr_sigma=0.35)
        path = tmp_path / "s.script"
        write_script(script, path)
        assert read_script(path) == script

    def test_unknown_scenario(self):
        with pytest.raises(InvalidScript):
            make_scenario_script("s9", 0)

    def test_scenario_scripts_deterministic(self):
        for sid in SCENARIO_IDS:
            assert make_scenario_script(sid, 5) == \
                make_scenario_script(sid, 5)


@pytest.fixture(scope="module")
def s1():
    return simulate_has(make_scenario_script("s1", 0))


class TestHasSession:

    def test_one_request_per_segment(self, s1):
        script = make_scenario_script("s1", 0)
        n_seg = math.ceil(script.video_duration_s / script.segment_duration_s)
        requests = [p for p in s1.packets if p.src_ip == "10.0.0.2"
                    and p.payload_size >= 600]
        assert len(requests) == n_seg

    def test_single_flow_time_ordered(self, s1):
        keys = {flow_key(p) for p in s1.packets}
        assert len(keys) == 1
        times = [p.time for p in s1.packets]
        assert times == sorted(times)
        assert times[0] >= 0.0

    def test_s1_fills_then_steady(self, s1):
        seq = [iv.label for iv in s1.labels if iv.family == "buffer"]
        assert seq == ["Filling", "Steady"]

    def test_labels_cover_trace_and_are_disjoint(self, s1):
        validate_disjoint(s1.labels)
        buffer_ivs = sorted((iv for iv in s1.labels
                             if iv.family == "buffer"),
                            key=lambda iv: iv.start)
        assert buffer_ivs[0].start == 0.0
        assert buffer_ivs[-1].end >= s1.end_time
        for a, b in zip(buffer_ivs, buffer_ivs[1:]):
            assert b.start == a.end   # gap-free
        flow_ivs = [iv for iv in s1.labels if iv.family == "flow"]
        assert len(flow_ivs) == 1 and flow_ivs[0].label == "HAS"

    def test_deterministic(self):
        script = make_scenario_script("s4", 7, video_duration_s=200.0)
        a, b = simulate_has(script), simulate_has(script)
        assert a.packets == b.packets and a.labels == b.labels

    def test_throttle_produces_depleting(self):
        trace = simulate_has(make_scenario_script("s8", 3))
        assert "Depleting" in {iv.label for iv in trace.labels}

    def test_scripted_quality_switch_reduces_rate(self):
        # after switching 720p -> 480p the per-segment byte count drops
        script = make_scenario_script("s3", 1, vbr_sigma=0.0)
        trace = simulate_has(script)
        switch_t = script.quality_switches[0][0]
        dl = [(p.time, p.payload_size) for p in trace.packets
              if p.dst_ip == "10.0.0.2"]
        early = sum(s for t, s in dl if t < switch_t - 10)
        late = sum(s for t, s in dl if t >= switch_t + 10)
        early_span = switch_t - 10
        late_span = trace.end_time - switch_t - 10
        assert early / early_span > late / late_span

    def test_vbr_sigma_changes_sizes(self):
        base = dict(video_duration_s=150.0)
        a = simulate_has(make_scenario_script("s1", 2, vbr_sigma=0.0, **base))
        b = simulate_has(make_scenario_script("s1", 2, vbr_sigma=0.35, **base))
        sizes_a = {p.payload_size for p in a.packets if p.dst_ip == "10.0.0.2"}
        sizes_b = {p.payload_size for p in b.packets if p.dst_ip == "10.0.0.2"}
        assert sizes_a != sizes_b

    @pytest.mark.parametrize("sid", SCENARIO_IDS)
    def test_all_scenarios_invariant(self, sid):
        trace = simulate_has(make_scenario_script(
            sid, 11, video_duration_s=240.0))
        times = [p.time for p in trace.packets]
        assert times == sorted(times) and times[0] >= 0.0
        validate_disjoint(trace.labels)
        assert {iv.label for iv in trace.labels if iv.family == "flow"} \
            == {"HAS"}


class TestNonHasGenerators:
    def test_download_is_continuous(self):
        trace = simulate_download(60.0, seed=1)
        flows = build_flows(trace.packets, trace.meta.client_ip)
        flow = flows[flow_key(trace.packets[0])]
        # the downlink stream saturates the link: DLload approaches 1
        assert dl_load(flow, 30.0, 20.0, 0.1) > 0.9
        assert trace.labels[0].label == "NonHAS"

    def test_download_requires_finite_profile(self):
        with pytest.raises(InvalidScript):
            simulate_download(10.0, NetworkProfile(((0.0, UNLIMITED),)))

    def test_web_has_think_time_gaps(self):
        trace = simulate_web(120.0, seed=4)
        times = np.array([p.time for p in trace.packets])
        gaps = np.diff(times)
        assert gaps.max() >= 5.0          # at least one think pause
        assert gaps.max() <= 15.5         # never longer than the think range
        assert trace.labels[0].label == "NonHAS"

    def test_nonhas_deterministic(self):
        assert simulate_download(40.0, seed=9).packets == \
            simulate_download(40.0, seed=9).packets
        assert simulate_web(60.0, seed=9).packets == \
            simulate_web(60.0, seed=9).packets


class TestCorpus:
    def test_trace_dataset_filters_family(self):
        trace = simulate_has(make_scenario_script(
            "s1", 0, video_duration_s=150.0))
        flow_ds = _trace_dataset(trace, WindowConfig(), "flow")
        buf_ds = _trace_dataset(trace, WindowConfig(), "buffer")
        assert flow_ds.class_names == ["NonHAS", "HAS"]
        assert buf_ds.class_names == ["Filling", "Steady", "Depleting",
                                      "Unclear"]
        assert flow_ds.n_samples == buf_ds.n_samples   # same instants

    def test_write_trace_roundtrip(self, tmp_path):
        trace = simulate_has(make_scenario_script(
            "s1", 0, video_duration_s=150.0))
        entry = write_trace(trace, tmp_path, "demo")
        meta, packets = read_packet_csv(tmp_path / entry["trace"])
        assert meta.client_ip == trace.meta.client_ip
        assert len(packets) == len(trace.packets)
        assert read_labels(tmp_path / entry["labels"]) == trace.labels

    def test_build_flow_corpus_small(self, tmp_path):
        ds = build_flow_corpus(n_has=2, n_nonhas=2, base_seed=1,
                               video_duration_s=150.0, out_dir=tmp_path)
        assert set(np.unique(ds.labels)) == {0, 1}
        assert (tmp_path / "manifest.json").exists()

    def test_build_buffer_corpus_small(self):
        ds = build_buffer_corpus(reps=1, vbr_sigmas=(0.2,), base_seed=1,
                                 video_duration_s=200.0, scenarios=("s1",))
        assert ds.n_samples > 0
        assert ds.scenario_tags is not None
        assert set(ds.scenario_tags) == {"s1"}
