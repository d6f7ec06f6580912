"""Shared fixtures and packet-building helpers."""
import numpy as np
import pytest

from hasprofiler.packets import PacketRecord, Protocol

CLIENT = "10.0.0.1"
SERVER = "93.184.216.34"


def dl(time, size, sport=50000, dport=443, proto=Protocol.TCP):
    """A downlink packet (server -> client)."""
    return PacketRecord(time, SERVER, dport, CLIENT, sport, proto, size)


def ul(time, size, sport=50000, dport=443, proto=Protocol.TCP):
    """An uplink packet (client -> server)."""
    return PacketRecord(time, CLIENT, sport, SERVER, dport, proto, size)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
