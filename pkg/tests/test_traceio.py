"""File format round-trips and the classic-pcap parser."""
import struct

import numpy as np
import pytest

from hasprofiler.errors import (MissingClientIp, OverlapError, ParseError,
                                UnsupportedFormat)
from hasprofiler.features import Dataset
from hasprofiler.packets import Protocol
from hasprofiler.traceio import (LabelInterval, TraceMeta, read_dataset_csv,
                                 read_labels, read_packet_csv, read_pcap,
                                 write_dataset_csv, write_labels,
                                 write_packet_csv)

from conftest import CLIENT, dl, ul


class TestPacketCsv:
    def test_roundtrip(self, tmp_path):
        path = tmp_path / "t.packets.csv"
        meta = TraceMeta(CLIENT, "t1", 1.0)
        packets = [ul(0.1, 700), dl(0.2, 1400)]
        write_packet_csv(path, meta, packets)
        meta2, packets2 = read_packet_csv(path)
        assert meta2 == meta
        assert packets2 == packets

    def test_missing_client_ip(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("time_s,src_ip,src_port,dst_ip,dst_port,protocol,"
                        "payload_bytes\n")
        with pytest.raises(MissingClientIp):
            read_packet_csv(path)

    def test_bad_cell_reports_line(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("# client_ip=10.0.0.1\n"
                        "time_s,src_ip,src_port,dst_ip,dst_port,protocol,"
                        "payload_bytes\n"
                        "0.1,10.0.0.1,1,1.2.3.4,2,TCP,oops\n")
        with pytest.raises(ParseError) as err:
            read_packet_csv(path)
        assert err.value.line == 3

    def test_wrong_header_rejected(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("# client_ip=10.0.0.1\na,b\n")
        with pytest.raises(ParseError):
            read_packet_csv(path)


class TestLabels:
    def test_roundtrip(self, tmp_path):
        path = tmp_path / "t.labels.csv"
        ivs = [LabelInterval("f", 0.0, 5.0, "Filling"),
               LabelInterval("f", 5.0, 9.0, "Steady"),
               LabelInterval("f", 0.0, 9.0, "HAS")]   # other family may overlap
        write_labels(path, ivs)
        assert read_labels(path) == ivs

    def test_overlap_same_family_rejected(self, tmp_path):
        ivs = [LabelInterval("f", 0.0, 5.0, "Filling"),
               LabelInterval("f", 4.0, 9.0, "Steady")]
        with pytest.raises(OverlapError):
            write_labels(tmp_path / "x", ivs)

    def test_interval_validation(self):
        with pytest.raises(ValueError):
            LabelInterval("f", 2.0, 2.0, "Steady")
        with pytest.raises(ValueError):
            LabelInterval("f", 0.0, 1.0, "Buffering")

    def test_family(self):
        assert LabelInterval("f", 0, 1, "HAS").family == "flow"
        assert LabelInterval("f", 0, 1, "Unclear").family == "buffer"


class TestDatasetCsv:
    def test_roundtrip_with_scenarios(self, tmp_path):
        ds = Dataset(np.array([[1.5, 2.25], [3.0, 1e-7]]),
                     np.array([0, 1]), ["a", "b"], ["x", "y"], ["s1", "s2"])
        path = tmp_path / "d.csv"
        write_dataset_csv(ds, path)
        ds2 = read_dataset_csv(path)
        assert np.array_equal(ds2.features, ds.features)
        assert np.array_equal(ds2.labels, ds.labels)
        assert ds2.feature_names == ds.feature_names
        assert ds2.class_names == ds.class_names
        assert ds2.scenario_tags == ds.scenario_tags

    def test_roundtrip_without_scenarios(self, tmp_path):
        ds = Dataset(np.array([[0.5]]), np.array([0]), ["a"], ["x", "y"])
        path = tmp_path / "d.csv"
        write_dataset_csv(ds, path)
        assert read_dataset_csv(path).scenario_tags is None

    def test_missing_classes_comment(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("a,label\n0.5,0\n")
        with pytest.raises(ParseError):
            read_dataset_csv(path)


def eth_ipv4(src_ip, sport, dst_ip, dport, proto, payload_len,
             ip_options=b"", tcp_data_offset=5):
    """A valid Ethernet/IPv4 frame with the requested payload length."""
    ihl = 20 + len(ip_options)
    thl = tcp_data_offset * 4 if proto == 6 else 8
    total = ihl + thl + payload_len
    ip = struct.pack(">BBHHHBBH4s4s", 0x40 | (ihl // 4), 0, total, 1, 0, 64,
                     proto, 0,
                     bytes(int(b) for b in src_ip.split(".")),
                     bytes(int(b) for b in dst_ip.split("."))) + ip_options
    if proto == 6:
        transport = struct.pack(">HHIIBBHHH", sport, dport, 0, 0,
                                tcp_data_offset << 4, 0, 0, 0, 0)
        transport += b"\x00" * (thl - 20)
    else:
        transport = struct.pack(">HHHH", sport, dport, thl + payload_len, 0)
    return b"\xaa" * 6 + b"\xbb" * 6 + b"\x08\x00" + ip + transport + \
        b"\x00" * payload_len


def pcap_bytes(frames, magic=0xA1B2C3D4, endian=">", linktype=1):
    out = struct.pack(endian + "IHHiIII", magic, 2, 4, 0, 0, 65535, linktype)
    for (sec, sub), frame in frames:
        out += struct.pack(endian + "IIII", sec, sub, len(frame), len(frame))
        out += frame
    return out


class TestPcap:
    def test_parses_udp_and_tcp(self, tmp_path):
        frames = [((1, 500000), eth_ipv4("10.0.0.1", 4000, "1.2.3.4", 443,
                                         17, 700)),
                  ((2, 0), eth_ipv4("1.2.3.4", 443, "10.0.0.1", 4000,
                                    6, 1400, tcp_data_offset=8))]
        path = tmp_path / "t.pcap"
        path.write_bytes(pcap_bytes(frames))
        result = read_pcap(path)
        assert result.skipped == 0
        p1, p2 = result.packets
        assert (p1.time, p1.protocol, p1.payload_size) == \
            (1.5, Protocol.UDP, 700)
        # TCP payload excludes the 32-byte header implied by the data offset
        assert (p2.time, p2.protocol, p2.payload_size) == \
            (2.0, Protocol.TCP, 1400)

    def test_byte_swapped_twin_parses_identically(self, tmp_path):
        frames = [((3, 250000), eth_ipv4("10.0.0.1", 4000, "1.2.3.4", 80,
                                         17, 55))]
        big = tmp_path / "be.pcap"
        little = tmp_path / "le.pcap"
        big.write_bytes(pcap_bytes(frames, magic=0xA1B2C3D4, endian=">"))
        little.write_bytes(pcap_bytes(frames, magic=0xA1B2C3D4, endian="<"))
        assert read_pcap(big).packets == read_pcap(little).packets

    def test_nanosecond_magic(self, tmp_path):
        frames = [((1, 250), eth_ipv4("10.0.0.1", 1, "1.2.3.4", 2, 17, 10))]
        path = tmp_path / "ns.pcap"
        path.write_bytes(pcap_bytes(frames, magic=0xA1B23C4D))
        assert read_pcap(path).packets[0].time == pytest.approx(1.00000025)

    def test_ip_options_accounted(self, tmp_path):
        frames = [((1, 0), eth_ipv4("10.0.0.1", 1, "1.2.3.4", 2, 17, 321,
                                    ip_options=b"\x00" * 8))]
        path = tmp_path / "o.pcap"
        path.write_bytes(pcap_bytes(frames))
        assert read_pcap(path).packets[0].payload_size == 321

    def test_non_ipv4_frames_skipped(self, tmp_path):
        arp = b"\xaa" * 6 + b"\xbb" * 6 + b"\x08\x06" + b"\x00" * 28
        frames = [((1, 0), arp),
                  ((2, 0), eth_ipv4("10.0.0.1", 1, "1.2.3.4", 2, 17, 5)),
                  ((3, 0), b"\x01\x02")]   # truncated
        path = tmp_path / "m.pcap"
        path.write_bytes(pcap_bytes(frames))
        result = read_pcap(path)
        assert len(result.packets) == 1 and result.skipped == 2

    def test_pcapng_rejected(self, tmp_path):
        path = tmp_path / "x.pcapng"
        path.write_bytes(struct.pack(">I", 0x0A0D0D0A) + b"\x00" * 28)
        with pytest.raises(UnsupportedFormat):
            read_pcap(path)

    def test_short_file_rejected(self, tmp_path):
        path = tmp_path / "x.pcap"
        path.write_bytes(b"\x00" * 10)
        with pytest.raises(UnsupportedFormat):
            read_pcap(path)

    def test_unknown_linktype_rejected(self, tmp_path):
        path = tmp_path / "x.pcap"
        path.write_bytes(pcap_bytes([], linktype=101))
        with pytest.raises(UnsupportedFormat):
            read_pcap(path)
