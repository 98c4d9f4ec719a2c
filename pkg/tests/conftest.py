import numpy as np
import pytest

from stochtunnel.wavefield import BarrierSpec, PacketSpec, WaveField


@pytest.fixture(scope="session")
def packet():
    return PacketSpec()


@pytest.fixture(scope="session")
def broad_packet():
    # short enough to collide within a few tens of time units
    return PacketSpec(sigma=0.1, x_center0=-30.0)


@pytest.fixture(scope="session")
def optical_field(packet):
    return WaveField(BarrierSpec(2.5, 0.25, 3.0), packet)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
