"""
Optics module for qoptsim.

This module evolves a two-photon state through linear optical elements:
- Creation-operator monomials over (spatial mode, polarization, internal label)
- Beamsplitters, polarizing beamsplitters, phase shifts, half-wave plates,
  delays and lossy polarizers
- Partial distinguishability carried by internal wavepacket labels
- Detection probabilities for threshold detectors

Conventions
===========

1. REFLECTION PHASE:
   Every reflection picks up a factor i. A 50:50 beamsplitter maps
   in1 -> (i*out1 + out2)/sqrt(2) and in2 -> (out1 + i*out2)/sqrt(2).
   A polarizing beamsplitter transmits H (in1->out1, in2->out2) and reflects
   V with a factor i (in1->out2, in2->out1).

2. WAVEPACKETS:
   Gaussian spectral intensity with the filter FWHM. The overlap of two
   wavepackets delayed by dt is exp(i*w0*dt) * exp(-dt**2 / (4*sigma_t**2)),
   scaled by the mode overlap of each photon.

3. INTERNAL LABELS:
   Label 0 is the first photon's source wavepacket. Further labels come from
   Gram-Schmidt on the wavepackets that appear on the photons' branches, so
   two photons with one relative delay use labels 0 and 1 only. Labels are
   traced out (summed incoherently) at detection.

4. NORMALIZATION:
   N = sum |c|**2 over distinct operator pairs + 2 * sum |c|**2 over repeated
   operators. N + accumulated_loss stays 1 after every element.
"""

import cmath
import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import (
    Callable,
    Dict,
    FrozenSet,
    Iterable,
    List,
    Mapping,
    NamedTuple,
    Optional,
    Sequence,
    Tuple,
    Union,
)

import numpy as np

from .config import config
from .errors import (
    InvalidElementError,
    InvalidWavepacketError,
    PhotonCountError,
    PortCollisionError,
    UnmappedModeError,
    UnsupportedCircuitError,
)

logger = logging.getLogger(__name__)

SPEED_OF_LIGHT_NM_PER_FS = 299.792458
FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))

XI_REF = 0
XI_PERP = 1

LOST = ("lost", "lost")
DISCARD = "discard"

# Residual norm below which a new wavepacket is treated as inside the label span.
_SPAN_TOLERANCE = 1e-7
# Transfer entries below this do not route a photon branch.
_ROUTE_TOLERANCE = 1e-12


class Polarization(str, Enum):
    """Linear polarization basis states."""

    H = "H"
    V = "V"


class Mode(NamedTuple):
    """A spatial label together with a polarization."""

    spatial: str
    pol: Polarization


Op = Tuple[Mode, int]
Key = Tuple[Op, Op]
BranchKey = Tuple[int, float]
Outcome = Tuple[str, str]


class Monomial(NamedTuple):
    """One term c * a+(op1) a+(op2) of the two-photon state."""

    op1: Op
    op2: Op
    amplitude: complex


@dataclass(frozen=True)
class Wavepacket:
    """
    Gaussian single-photon wavepacket.

    Parameters
    ----------
    center_wavelength : float
        Centre wavelength in nm.
    bandwidth_fwhm : float
        FWHM of the spectral intensity in nm.
    delay : float
        Arrival delay in fs.
    mode_overlap : float
        Overlap of the photon's spatial/spectral mode with the common reference
        mode, in (0, 1]. Models distinguishability that no delay can remove.
    """

    center_wavelength: float
    bandwidth_fwhm: float
    delay: float = 0.0
    mode_overlap: float = 1.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.center_wavelength) and self.center_wavelength > 0):
            raise InvalidWavepacketError(
                f"center wavelength must be positive, got {self.center_wavelength}"
            )
        if not (math.isfinite(self.bandwidth_fwhm) and self.bandwidth_fwhm > 0):
            raise InvalidWavepacketError(
                f"bandwidth must be positive, got {self.bandwidth_fwhm}"
            )
        if not math.isfinite(self.delay):
            raise InvalidWavepacketError(f"delay must be finite, got {self.delay}")
        if not (0.0 < self.mode_overlap <= 1.0):
            raise InvalidWavepacketError(
                f"mode overlap must lie in (0, 1], got {self.mode_overlap}"
            )

    @property
    def angular_frequency(self) -> float:
        """Carrier angular frequency in rad/fs."""
        return 2.0 * math.pi * SPEED_OF_LIGHT_NM_PER_FS / self.center_wavelength

    @property
    def period(self) -> float:
        """Optical period lambda0/c in fs."""
        return self.center_wavelength / SPEED_OF_LIGHT_NM_PER_FS

    @property
    def temporal_width(self) -> float:
        """Width sigma_t (fs) of the temporal amplitude exp(-t**2 / (2*sigma_t**2))."""
        bandwidth_hz = (
            SPEED_OF_LIGHT_NM_PER_FS
            * self.bandwidth_fwhm
            / self.center_wavelength**2
        )
        sigma_omega = 2.0 * math.pi * bandwidth_hz / FWHM_PER_SIGMA
        return 1.0 / (math.sqrt(2.0) * sigma_omega)

    def shifted(self, tau: float) -> "Wavepacket":
        return replace(self, delay=self.delay + tau)


PhotonSpec = Tuple[str, Polarization, Wavepacket]


def _check_comparable(w1: Wavepacket, w2: Wavepacket) -> None:
    if not math.isclose(w1.center_wavelength, w2.center_wavelength, rel_tol=1e-12):
        raise InvalidWavepacketError(
            f"center wavelengths differ: {w1.center_wavelength} nm "
            f"vs {w2.center_wavelength} nm"
        )
    if not math.isclose(w1.bandwidth_fwhm, w2.bandwidth_fwhm, rel_tol=1e-12):
        raise InvalidWavepacketError(
            f"bandwidths differ: {w1.bandwidth_fwhm} nm vs {w2.bandwidth_fwhm} nm"
        )


def _temporal_overlap(w1: Wavepacket, w2: Wavepacket) -> complex:
    dt = w2.delay - w1.delay
    sigma = w1.temporal_width
    return cmath.exp(1j * w1.angular_frequency * dt) * math.exp(
        -dt * dt / (4.0 * sigma * sigma)
    )


def wavepacket_overlap(w1: Wavepacket, w2: Wavepacket) -> complex:
    """
    Complex overlap gamma = <w1|w2> of two photons' wavepackets.

    Raises InvalidWavepacketError when centre wavelengths or bandwidths differ.
    """
    _check_comparable(w1, w2)
    return w1.mode_overlap * w2.mode_overlap * _temporal_overlap(w1, w2)


@dataclass(frozen=True)
class LabelBasis:
    """
    Orthonormal internal-label basis built from branch wavepackets.

    Each branch wavepacket is keyed by (photon index, delay in fs). Label 0
    (XI_REF) is the first photon's source wavepacket; the next anchor defines
    XI_PERP and so on.
    """

    photons: Tuple[Wavepacket, Wavepacket]
    anchors: Tuple[BranchKey, ...]
    coordinates: Mapping[BranchKey, Tuple[complex, ...]]

    @classmethod
    def for_photons(cls, photons: Tuple[Wavepacket, Wavepacket]) -> "LabelBasis":
        reference = (0, photons[0].delay)
        basis = cls(photons, (reference,), {reference: (1.0 + 0j,)})
        return basis.extend((1, photons[1].delay))

    @property
    def dimension(self) -> int:
        return len(self.anchors)

    def wavepacket(self, key: BranchKey) -> Wavepacket:
        photon, delay = key
        return replace(self.photons[photon], delay=delay)

    def inner(self, k1: BranchKey, k2: BranchKey) -> complex:
        w1, w2 = self.wavepacket(k1), self.wavepacket(k2)
        if k1[0] == k2[0]:
            # Branches of one photon share its spatial/spectral mode.
            return _temporal_overlap(w1, w2)
        return wavepacket_overlap(w1, w2)

    def vector(self, key: BranchKey) -> np.ndarray:
        coords = self.coordinates[key]
        padded = np.zeros(self.dimension, dtype=complex)
        padded[: len(coords)] = coords
        return padded

    def extend(self, key: BranchKey) -> "LabelBasis":
        """Return a basis that also expresses the wavepacket of ``key``."""
        if key in self.coordinates:
            return self
        projections: List[complex] = []
        for k, anchor in enumerate(self.anchors):
            coords = self.coordinates[anchor]
            value = self.inner(anchor, key) - sum(
                coords[j].conjugate() * projections[j] for j in range(k)
            )
            projections.append(value / coords[k].real)
        residual = math.sqrt(max(0.0, 1.0 - sum(abs(x) ** 2 for x in projections)))
        coordinates = dict(self.coordinates)
        anchors = self.anchors
        if residual > _SPAN_TOLERANCE:
            coordinates[key] = tuple(projections) + (complex(residual),)
            anchors = anchors + (key,)
            logger.debug(f"Internal label {len(anchors) - 1} anchored on {key}")
        else:
            scale = math.sqrt(sum(abs(x) ** 2 for x in projections))
            coordinates[key] = tuple(x / scale for x in projections)
        return LabelBasis(self.photons, anchors, coordinates)


@dataclass(frozen=True)
class Branch:
    """Delays and polarizations one photon may carry on one spatial label."""

    delays: FrozenSet[float]
    pols: FrozenSet[Polarization]

    def merge(self, other: "Branch") -> "Branch":
        return Branch(self.delays | other.delays, self.pols | other.pols)


Footprint = Mapping[str, Branch]


def _reachable(matrix: np.ndarray, column: int) -> List[int]:
    """Rows a unit input in ``column`` reaches with non-negligible amplitude."""
    return [
        row for row in range(matrix.shape[0]) if abs(matrix[row, column]) > _ROUTE_TOLERANCE
    ]


@dataclass(frozen=True)
class TwoPhotonState:
    """
    Two-photon state as a sum of creation-operator monomials.

    ``terms`` maps canonically ordered operator pairs to amplitudes.
    ``branches`` records, per photon, the spatial labels it may occupy with the
    delays and polarizations of its wavepacket there.
    """

    terms: Mapping[Key, complex]
    basis: LabelBasis
    branches: Tuple[Footprint, Footprint]
    accumulated_loss: float = 0.0

    def monomials(self) -> List[Monomial]:
        return [Monomial(a, b, c) for (a, b), c in sorted(self.terms.items())]

    def norm(self) -> float:
        return sum(
            abs(c) ** 2 * (2.0 if a == b else 1.0) for (a, b), c in self.terms.items()
        )

    def support(self) -> FrozenSet[str]:
        """Spatial labels that carry amplitude."""
        return frozenset(op[0].spatial for key in self.terms for op in key)

    def amplitude(self, op1: Op, op2: Op) -> complex:
        return self.terms.get(_canonical(op1, op2), 0j)


@dataclass(frozen=True)
class BeamSplitter:
    """50:50 beamsplitter from (in1, in2) to (out1, out2)."""

    name: str
    in1: str
    in2: str
    out1: str
    out2: str

    def __post_init__(self) -> None:
        _check_ports(self.name, (self.in1, self.in2, self.out1, self.out2))

    @property
    def inputs(self) -> Tuple[str, str]:
        return (self.in1, self.in2)

    @property
    def outputs(self) -> Tuple[str, str]:
        return (self.out1, self.out2)


@dataclass(frozen=True)
class PolarizingBeamSplitter:
    """PBS transmitting H and reflecting V between the port pairs."""

    name: str
    in1: str
    in2: str
    out1: str
    out2: str

    def __post_init__(self) -> None:
        _check_ports(self.name, (self.in1, self.in2, self.out1, self.out2))

    @property
    def inputs(self) -> Tuple[str, str]:
        return (self.in1, self.in2)

    @property
    def outputs(self) -> Tuple[str, str]:
        return (self.out1, self.out2)


@dataclass(frozen=True)
class PhaseShift:
    """Phase factor exp(i*phi_rad) on one spatial label."""

    name: str
    spatial: str
    phi_rad: float


@dataclass(frozen=True)
class HalfWavePlate:
    """Half-wave plate with its fast axis at angle_deg from H."""

    name: str
    spatial: str
    angle_deg: float


@dataclass(frozen=True)
class Delay:
    """Delay line adding tau_fs to the branch wavepacket on one label."""

    name: str
    spatial: str
    tau_fs: float


@dataclass(frozen=True)
class Polarizer:
    """Linear polarizer; the blocked axis leaks 1/extinction in intensity."""

    name: str
    spatial: str
    angle_deg: float
    extinction: float = field(default=float("inf"))

    def __post_init__(self) -> None:
        if not self.extinction >= 1.0:
            raise InvalidElementError(
                f"{self.name}: extinction ratio must be >= 1, got {self.extinction}"
            )


Element = Union[
    BeamSplitter, PolarizingBeamSplitter, PhaseShift, HalfWavePlate, Delay, Polarizer
]
TwoPortElement = Union[BeamSplitter, PolarizingBeamSplitter]


def _check_ports(name: str, ports: Sequence[str]) -> None:
    if len(set(ports)) != len(ports):
        raise InvalidElementError(f"{name}: port labels must be four distinct labels")


def _canonical(a: Op, b: Op) -> Key:
    return (a, b) if a <= b else (b, a)


def _prune(terms: Dict[Key, complex]) -> Dict[Key, complex]:
    threshold = config.get("prune_threshold", 1e-15)
    return {key: c for key, c in terms.items() if abs(c) >= threshold}


def _evolve(
    terms: Mapping[Key, complex],
    images: Callable[[Op], Optional[Sequence[Tuple[Op, complex]]]],
) -> Dict[Key, complex]:
    """Apply a linear map on single creation operators to every monomial."""
    cache: Dict[Op, Sequence[Tuple[Op, complex]]] = {}

    def expand(op: Op) -> Sequence[Tuple[Op, complex]]:
        if op not in cache:
            mapped = images(op)
            cache[op] = ((op, 1.0 + 0j),) if mapped is None else tuple(mapped)
        return cache[op]

    result: Dict[Key, complex] = {}
    for (a, b), amplitude in terms.items():
        for a2, ua in expand(a):
            for b2, ub in expand(b):
                key = _canonical(a2, b2)
                result[key] = result.get(key, 0j) + amplitude * ua * ub
    return _prune(result)


def _rebuild(
    state: TwoPhotonState,
    terms: Dict[Key, complex],
    branches: Optional[Tuple[Footprint, Footprint]] = None,
    basis: Optional[LabelBasis] = None,
    loss: Optional[float] = None,
) -> TwoPhotonState:
    support = frozenset(op[0].spatial for key in terms for op in key)
    routed = state.branches if branches is None else branches
    pruned = tuple(
        {label: delays for label, delays in fp.items() if label in support}
        for fp in routed
    )
    return TwoPhotonState(
        terms=terms,
        basis=state.basis if basis is None else basis,
        branches=(pruned[0], pruned[1]),
        accumulated_loss=state.accumulated_loss if loss is None else loss,
    )


def initial_state(photons: Sequence[PhotonSpec]) -> TwoPhotonState:
    """
    Build the input state from two (spatial label, polarization, wavepacket)
    declarations.

    The first photon defines XI_REF. The second photon is written as
    gamma*XI_REF + sqrt(1 - |gamma|**2)*XI_PERP, which expands into two
    monomials when 0 < |gamma| < 1.
    """
    if len(photons) != 2:
        raise PhotonCountError(f"exactly two photons required, got {len(photons)}")
    (label1, pol1, wave1), (label2, pol2, wave2) = photons
    if label1 == label2:
        raise PhotonCountError(f"photons share the spatial label {label1!r}")

    basis = LabelBasis.for_photons((wave1, wave2))
    first: Op = (Mode(label1, Polarization(pol1)), XI_REF)
    second = basis.vector((1, wave2.delay))
    terms: Dict[Key, complex] = {}
    for label, coefficient in enumerate(second):
        if coefficient != 0:
            op: Op = (Mode(label2, Polarization(pol2)), label)
            terms[_canonical(first, op)] = complex(coefficient)
    branches = (
        {label1: Branch(frozenset({wave1.delay}), frozenset({Polarization(pol1)}))},
        {label2: Branch(frozenset({wave2.delay}), frozenset({Polarization(pol2)}))},
    )
    logger.debug(
        f"Initial state on {label1}/{label2} with overlap {abs(second[0]):.6f}"
    )
    return TwoPhotonState(_prune(terms), basis, branches)


def transfer_matrix(
    element: TwoPortElement, pol: Polarization = Polarization.H
) -> np.ndarray:
    """Single-photon transfer matrix, rows (out1, out2), columns (in1, in2)."""
    if isinstance(element, BeamSplitter):
        return np.array([[1j, 1.0], [1.0, 1j]]) / math.sqrt(2.0)
    if Polarization(pol) is Polarization.H:
        return np.eye(2, dtype=complex)
    return np.array([[0.0, 1j], [1j, 0.0]])


def _apply_two_port(state: TwoPhotonState, element: TwoPortElement) -> TwoPhotonState:
    inputs, outputs = element.inputs, element.outputs
    occupied = state.support() - set(inputs)
    clashes = sorted(set(outputs) & occupied)
    if clashes:
        raise PortCollisionError(
            f"{element.name}: output port(s) {', '.join(clashes)} already carry amplitude"
        )
    matrices = {pol: transfer_matrix(element, pol) for pol in Polarization}

    def images(op: Op) -> Optional[List[Tuple[Op, complex]]]:
        mode, label = op
        if mode.spatial not in inputs:
            return None
        column = inputs.index(mode.spatial)
        matrix = matrices[mode.pol]
        return [
            ((Mode(outputs[row], mode.pol), label), complex(matrix[row, column]))
            for row in range(2)
            if matrix[row, column] != 0
        ]

    routed = []
    for footprint in state.branches:
        updated = {k: v for k, v in footprint.items() if k not in inputs}
        for column, label in enumerate(inputs):
            if label not in footprint:
                continue
            branch = footprint[label]
            for pol in branch.pols:
                for row in _reachable(matrices[pol], column):
                    arriving = Branch(branch.delays, frozenset({pol}))
                    current = updated.get(outputs[row])
                    updated[outputs[row]] = (
                        arriving if current is None else current.merge(arriving)
                    )
        routed.append(updated)
    return _rebuild(state, _evolve(state.terms, images), branches=(routed[0], routed[1]))


def apply_beamsplitter(state: TwoPhotonState, element: BeamSplitter) -> TwoPhotonState:
    """50:50 beamsplitter with a factor i on reflection."""
    return _apply_two_port(state, element)


def apply_pbs(state: TwoPhotonState, element: PolarizingBeamSplitter) -> TwoPhotonState:
    """Polarizing beamsplitter: transmit H, reflect V with a factor i."""
    return _apply_two_port(state, element)


def _apply_jones(
    state: TwoPhotonState, spatial: str, jones: np.ndarray
) -> TwoPhotonState:
    """Apply a 2x2 Jones matrix (rows H, V out; columns H, V in) on one label."""
    pols = (Polarization.H, Polarization.V)

    def images(op: Op) -> Optional[List[Tuple[Op, complex]]]:
        mode, label = op
        if mode.spatial != spatial:
            return None
        column = pols.index(mode.pol)
        return [
            ((Mode(spatial, pols[row]), label), complex(jones[row, column]))
            for row in range(2)
            if jones[row, column] != 0
        ]

    routed = []
    for footprint in state.branches:
        updated = dict(footprint)
        if spatial in footprint:
            branch = footprint[spatial]
            pols_out = frozenset(
                pols[row]
                for pol in branch.pols
                for row in _reachable(jones, pols.index(pol))
            )
            if pols_out:
                updated[spatial] = Branch(branch.delays, pols_out)
            else:
                del updated[spatial]
        routed.append(updated)
    return _rebuild(state, _evolve(state.terms, images), branches=(routed[0], routed[1]))


def apply_phase(state: TwoPhotonState, element: PhaseShift) -> TwoPhotonState:
    return _apply_jones(
        state, element.spatial, cmath.exp(1j * element.phi_rad) * np.eye(2)
    )


def apply_hwp(state: TwoPhotonState, element: HalfWavePlate) -> TwoPhotonState:
    """Half-wave plate: H -> cos2t H + sin2t V, V -> sin2t H - cos2t V."""
    two_theta = 2.0 * math.radians(element.angle_deg)
    c, s = math.cos(two_theta), math.sin(two_theta)
    return _apply_jones(state, element.spatial, np.array([[c, s], [s, -c]]))


def apply_polarizer(state: TwoPhotonState, element: Polarizer) -> TwoPhotonState:
    """
    Lossy polarizer passing the axis at ``angle_deg`` (0 passes H).

    The blocked axis is attenuated in amplitude by sqrt(1/extinction); the
    squared norm removed is added to the accumulated loss.
    """
    theta = math.radians(element.angle_deg)
    c, s = math.cos(theta), math.sin(theta)
    t = 0.0 if math.isinf(element.extinction) else math.sqrt(1.0 / element.extinction)
    jones = np.array(
        [[c * c + t * s * s, c * s * (1.0 - t)], [c * s * (1.0 - t), s * s + t * c * c]]
    )
    passed = _apply_jones(state, element.spatial, jones)
    absorbed = max(0.0, state.norm() - passed.norm())
    return replace(passed, accumulated_loss=state.accumulated_loss + absorbed)


def apply_delay(state: TwoPhotonState, element: Delay) -> TwoPhotonState:
    """
    Delay the photon branch on ``element.spatial`` by ``tau_fs``.

    The branch wavepacket is re-expressed in the label basis, which carries the
    carrier phase exp(i*w0*tau) through the overlap. A label shared by both
    photons, or holding a photon branch with mixed delays, cannot be
    attributed and raises UnsupportedCircuitError.
    """
    spatial = element.spatial
    if element.tau_fs == 0.0 or spatial not in state.support():
        return state
    owners = [p for p, fp in enumerate(state.branches) if spatial in fp]
    if len(owners) != 1:
        raise UnsupportedCircuitError(
            f"{element.name}: {spatial!r} is shared by both photons; "
            "the delay cannot be attributed to one wavepacket"
        )
    photon = owners[0]
    branch = state.branches[photon][spatial]
    delays = branch.delays
    if len(delays) != 1:
        raise UnsupportedCircuitError(
            f"{element.name}: photon {photon + 1} reaches {spatial!r} with "
            f"{len(delays)} different delays"
        )
    (delay,) = delays
    old_key, new_key = (photon, delay), (photon, delay + element.tau_fs)
    basis = state.basis.extend(new_key)
    transfer = np.outer(basis.vector(new_key), basis.vector(old_key).conj())

    def images(op: Op) -> Optional[List[Tuple[Op, complex]]]:
        mode, label = op
        if mode.spatial != spatial:
            return None
        return [
            ((mode, row), complex(transfer[row, label]))
            for row in range(basis.dimension)
            if transfer[row, label] != 0
        ]

    branches = [dict(fp) for fp in state.branches]
    branches[photon][spatial] = Branch(frozenset({new_key[1]}), branch.pols)
    return _rebuild(
        state,
        _evolve(state.terms, images),
        branches=(branches[0], branches[1]),
        basis=basis,
    )


def apply_element(state: TwoPhotonState, element: Element) -> TwoPhotonState:
    if isinstance(element, BeamSplitter):
        return apply_beamsplitter(state, element)
    if isinstance(element, PolarizingBeamSplitter):
        return apply_pbs(state, element)
    if isinstance(element, PhaseShift):
        return apply_phase(state, element)
    if isinstance(element, HalfWavePlate):
        return apply_hwp(state, element)
    if isinstance(element, Delay):
        return apply_delay(state, element)
    if isinstance(element, Polarizer):
        return apply_polarizer(state, element)
    raise InvalidElementError(f"unknown element type {type(element).__name__}")


def evolve(state: TwoPhotonState, elements: Iterable[Element]) -> TwoPhotonState:
    """Apply ``elements`` in order."""
    for element in elements:
        state = apply_element(state, element)
        logger.debug(
            f"After {element.name}: {len(state.terms)} terms, "
            f"norm {state.norm():.15f}, loss {state.accumulated_loss:.3e}"
        )
    return state


def outcome_distribution(
    state: TwoPhotonState,
    detectors: Mapping[Mode, str],
    discards: Iterable[str] = (),
) -> Dict[Outcome, float]:
    """
    Detection probabilities for threshold detectors.

    Outcomes are sorted detector-name pairs. A pair naming the same detector
    twice is a bunched single click. Photons leaving through a discard port
    land on the ``DISCARD`` sink, and ``LOST`` holds the accumulated loss.
    Internal labels are summed incoherently.
    """
    discarded = frozenset(discards)

    def sink(mode: Mode) -> str:
        name = detectors.get(mode)
        if name is not None:
            return name
        if mode.spatial in discarded:
            return DISCARD
        raise UnmappedModeError(
            f"mode {mode.spatial}/{mode.pol.value} carries amplitude but has no "
            "detector and is not discarded"
        )

    probabilities: Dict[Outcome, float] = {}
    for (a, b), c in state.terms.items():
        first, second = sorted((sink(a[0]), sink(b[0])))
        weight = abs(c) ** 2 * (2.0 if a == b else 1.0)
        probabilities[(first, second)] = probabilities.get((first, second), 0.0) + weight
    probabilities[LOST] = state.accumulated_loss
    return probabilities
