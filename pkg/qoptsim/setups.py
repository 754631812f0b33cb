"""
Setups module for qoptsim.

Builders for the two-source entanglement-generation interferometer:

    PS1 (H) -> BS1 -> A1, B1        PS2 (V) -> BS2 -> A2, B2
    A1 + A2 -> PBS1 -> A (Alice)    B1 + B2 -> PBS2 -> B (Bob)

Phases PH1..PH4 sit on A1, B1, A2, B2. PRISM1/PRISM2 are delay lines on A2/B2,
POL3/POL4 clean up the vertical arms before the PBSs, and HWP1/HWP2 rotate the
analysis basis in front of the detectors. With one photon per site the state is
(|H>_A|V>_B + exp(i*phi)|V>_A|H>_B)/sqrt(2), phi = phi2 + phi3 - phi1 - phi4.
"""

import logging
import math
import os
from typing import Optional, Sequence, Tuple

from .circuit import Circuit, DetectorDecl, PhotonDecl, load_program, ElementProgram
from .config import config
from .errors import ExperimentError
from .optics import (
    BeamSplitter,
    Delay,
    Element,
    HalfWavePlate,
    PhaseShift,
    Polarization,
    Polarizer,
    PolarizingBeamSplitter,
    Wavepacket,
)

logger = logging.getLogger(__name__)

FIXTURE_PATH: str = os.path.join(os.path.dirname(__file__), "data", "paper_setup.qopt")

SITE_A: Tuple[str, str] = ("DHA", "DVA")
SITE_B: Tuple[str, str] = ("DHB", "DVB")


def paper_setup(
    phases: Sequence[float] = (0.0, 0.0, math.pi, 0.0),
    hwp_angles: Tuple[float, float] = (22.5, 22.5),
    prism_delays: Tuple[float, float] = (0.0, 0.0),
    photon_delay: float = 0.0,
    mode_overlap: float = 1.0,
    extinction: float = 10000.0,
    wavelength_nm: Optional[float] = None,
    bandwidth_nm: Optional[float] = None,
) -> Circuit:
    """
    Build the interferometer as a Circuit.

    Parameters
    ----------
    phases : sequence of 4 floats
        PH1..PH4 in radians. The default gives phi = pi.
    hwp_angles : (float, float)
        Physical HWP1/HWP2 angles in degrees; 22.5 analyses in the +/- basis.
    prism_delays : (float, float)
        PRISM1 (arm A2) and PRISM2 (arm B2) delays in fs.
    photon_delay : float
        Source delay of PS2 relative to PS1 in fs.
    mode_overlap : float
        Non-temporal overlap of PS2 with PS1, in (0, 1].
    """
    if len(phases) != 4:
        raise ExperimentError(f"four phases required, got {len(phases)}")
    wavelength = config["wavelength_nm"] if wavelength_nm is None else wavelength_nm
    bandwidth = config["bandwidth_nm"] if bandwidth_nm is None else bandwidth_nm
    source = Wavepacket(float(wavelength), float(bandwidth))
    photons = (
        PhotonDecl("PS1", "ps1", Polarization.H, source),
        PhotonDecl(
            "PS2",
            "ps2",
            Polarization.V,
            Wavepacket(
                float(wavelength),
                float(bandwidth),
                delay=float(photon_delay),
                mode_overlap=float(mode_overlap),
            ),
        ),
    )
    phi1, phi2, phi3, phi4 = (float(p) for p in phases)
    elements: Tuple[Element, ...] = (
        BeamSplitter("BS1", "ps1", "vac1", "A1", "B1"),
        BeamSplitter("BS2", "ps2", "vac2", "A2", "B2"),
        PhaseShift("PH1", "A1", phi1),
        PhaseShift("PH2", "B1", phi2),
        PhaseShift("PH3", "A2", phi3),
        PhaseShift("PH4", "B2", phi4),
        Delay("PRISM1", "A2", float(prism_delays[0])),
        Delay("PRISM2", "B2", float(prism_delays[1])),
        Polarizer("POL3", "A2", 90.0, float(extinction)),
        Polarizer("POL4", "B2", 90.0, float(extinction)),
        PolarizingBeamSplitter("PBS1", "A1", "A2", "A", "Aout2"),
        PolarizingBeamSplitter("PBS2", "B1", "B2", "B", "Bout2"),
        HalfWavePlate("HWP1", "A", float(hwp_angles[0])),
        HalfWavePlate("HWP2", "B", float(hwp_angles[1])),
    )
    detectors = (
        DetectorDecl("DHA", "A", Polarization.H),
        DetectorDecl("DVA", "A", Polarization.V),
        DetectorDecl("DHB", "B", Polarization.H),
        DetectorDecl("DVB", "B", Polarization.V),
    )
    return Circuit(
        photons=photons,
        elements=elements,
        detectors=detectors,
        discards=("Aout2", "Bout2"),
        coincidences=(("DHA", "DVB"), ("DVA", "DHB"), ("DHA", "DHB"), ("DVA", "DVB")),
    )


def load_fixture(path: str = FIXTURE_PATH) -> ElementProgram:
    """Read and compile the packaged interferometer description."""
    logger.info(f"Loading circuit from {path}")
    with open(path, "rb") as file:
        return load_program(file.read())


def delay_for_overlap(magnitude: float, wavepacket: Optional[Wavepacket] = None) -> float:
    """
    Relative delay (fs) at which the temporal overlap falls to ``magnitude``.

    Inverts |gamma(dt)| = exp(-dt**2 / (4*sigma_t**2)) for dt >= 0.
    """
    if not 0.0 < magnitude <= 1.0:
        raise ExperimentError(f"overlap magnitude must lie in (0, 1], got {magnitude}")
    if wavepacket is None:
        wavepacket = Wavepacket(float(config["wavelength_nm"]), float(config["bandwidth_nm"]))
    return wavepacket.temporal_width * math.sqrt(-4.0 * math.log(magnitude))


def bell_parameter_for_overlap(overlap_squared: float) -> float:
    """Exact S at the standard angles for a pair with |gamma|**2 = overlap_squared."""
    return 2.0 * math.sqrt(2.0) * overlap_squared + math.sqrt(2.0) * (1.0 - overlap_squared)


def overlap_for_bell_parameter(s_value: float) -> float:
    """|gamma|**2 that gives Bell parameter ``s_value`` at the standard angles."""
    low, high = math.sqrt(2.0), 2.0 * math.sqrt(2.0)
    if not low <= s_value <= high:
        raise ExperimentError(f"S must lie in [{low:.6f}, {high:.6f}], got {s_value}")
    return (s_value - low) / (high - low)
