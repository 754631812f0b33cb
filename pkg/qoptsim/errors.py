"""Exceptions raised by qoptsim."""

from typing import Any, Sequence


class OpticsError(Exception):
    """Base class for every error raised by the simulator."""


class InvalidWavepacketError(OpticsError, ValueError):
    """A wavepacket violates its invariants, or two wavepackets cannot be compared."""


class InvalidElementError(OpticsError, ValueError):
    """An optical element was declared with inconsistent parameters."""


class PhotonCountError(OpticsError, ValueError):
    """The initial state was not given exactly two photons on distinct modes."""


class PortCollisionError(OpticsError):
    """A beamsplitter output port is already occupied by an unrelated live mode."""


class UnsupportedCircuitError(OpticsError):
    """The circuit needs a wavepacket attribution the two-photon model cannot make."""


class UnmappedModeError(OpticsError):
    """A live mode carries amplitude but has no detector and is not discarded."""


class ExperimentError(OpticsError, ValueError):
    """An experiment driver was called with unusable inputs."""


class CircuitError(OpticsError):
    """A circuit with error diagnostics was passed to the compiler."""

    def __init__(self, message: str, diagnostics: Sequence[Any] = ()) -> None:
        super().__init__(message)
        self.diagnostics = list(diagnostics)
