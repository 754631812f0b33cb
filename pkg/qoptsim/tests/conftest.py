"""Shared fixtures for the qoptsim test suite."""

import pytest

from qoptsim.circuit import ElementProgram, compile_circuit
from qoptsim.optics import Wavepacket
from qoptsim.setups import load_fixture, paper_setup


@pytest.fixture
def wavepacket() -> Wavepacket:
    """702.2 nm source photon behind a 1.5 nm filter."""
    return Wavepacket(702.2, 1.5)


@pytest.fixture
def fixture_program() -> ElementProgram:
    """The packaged interferometer with phi = pi and HWPs at 22.5 degrees."""
    return load_fixture()


@pytest.fixture
def aligned_program() -> ElementProgram:
    """Interferometer with all phases zero and HWPs at 0 degrees."""
    return compile_circuit(paper_setup(phases=(0.0, 0.0, 0.0, 0.0), hwp_angles=(0.0, 0.0)))
