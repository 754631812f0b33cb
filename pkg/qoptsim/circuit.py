"""
Circuit module for qoptsim.

This module handles the line-oriented circuit description (.qopt files):
- Parsing text into a Circuit, collecting every problem as a Diagnostic
- Validating photon count, port wiring and detector coverage
- Compiling a valid Circuit into an ElementProgram for the experiment drivers
- Pretty-printing a Circuit back into canonical text

Grammar, one statement per line, '#' starts a comment:

    photon <name> mode=<label> pol=<H|V> wavelength_nm=<f> bandwidth_nm=<f> delay_fs=<f> [mode_overlap=<f>]
    bs <name> in=<l1>,<l2> out=<l3>,<l4>
    pbs <name> in=<l1>,<l2> out=<l3>,<l4>
    hwp <name> mode=<l> angle_deg=<f>
    phase <name> mode=<l> phi_rad=<f>
    delay <name> mode=<l> tau_fs=<f>
    pol <name> mode=<l> angle_deg=<f> extinction=<f>
    detector <name> mode=<l> pol=<H|V>
    discard <label>
    coincidence <det1>,<det2>

Labels are created by first use as a photon mode or element output. Labels
named vac1, vac2, ... are vacuum ports and may feed a beamsplitter input once
without being created. Comments are not preserved by format_circuit.
"""

import logging
import math
import re
from dataclasses import dataclass, field, fields, replace
from enum import Enum
from typing import (
    Callable,
    Dict,
    FrozenSet,
    List,
    Mapping,
    Optional,
    Sequence,
    Set,
    Tuple,
    Union,
)

from .errors import CircuitError, ExperimentError, OpticsError
from .optics import (
    DISCARD,
    LOST,
    BeamSplitter,
    Delay,
    Element,
    HalfWavePlate,
    Mode,
    Outcome,
    PhaseShift,
    PhotonSpec,
    Polarization,
    Polarizer,
    PolarizingBeamSplitter,
    Wavepacket,
)

logger = logging.getLogger(__name__)

IDENTIFIER = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")
VACUUM_LABEL = re.compile(r"vac[0-9]*\Z")
RESERVED_NAMES = frozenset({LOST[0], DISCARD})


class Severity(str, Enum):
    ERROR = "error"
    WARNING = "warning"


@dataclass(frozen=True)
class Diagnostic:
    """A problem found while parsing or validating, tied to a 1-based line."""

    severity: Severity
    line: int
    message: str
    token: str = ""

    def __str__(self) -> str:
        return f"{self.line}:{self.severity.value}:{self.message}"


@dataclass(frozen=True)
class PhotonDecl:
    name: str
    spatial: str
    pol: Polarization
    wavepacket: Wavepacket


@dataclass(frozen=True)
class DetectorDecl:
    name: str
    spatial: str
    pol: Polarization


@dataclass(frozen=True)
class Circuit:
    """
    Parsed circuit description.

    ``lines`` maps declaration keys (names, ``discard <label>``,
    ``coincidence <a>,<b>``) to source lines and is ignored by equality.
    """

    photons: Tuple[PhotonDecl, ...] = ()
    elements: Tuple[Element, ...] = ()
    detectors: Tuple[DetectorDecl, ...] = ()
    discards: Tuple[str, ...] = ()
    coincidences: Tuple[Tuple[str, str], ...] = ()
    lines: Mapping[str, int] = field(default_factory=dict, compare=False, hash=False)

    def line_of(self, key: str) -> int:
        return self.lines.get(key, 1)


@dataclass(frozen=True)
class ElementProgram:
    """Compiled, ordered element list plus the detection setup."""

    photons: Tuple[PhotonSpec, ...]
    elements: Tuple[Element, ...]
    detectors: Tuple[Tuple[Mode, str], ...]
    discards: FrozenSet[str]
    coincidences: Tuple[Outcome, ...]

    def detector_map(self) -> Dict[Mode, str]:
        return dict(self.detectors)

    @property
    def wavepacket(self) -> Wavepacket:
        """Wavepacket of the first photon; both photons share wavelength and bandwidth."""
        return self.photons[0][2]

    def element(self, name: str) -> Element:
        for element in self.elements:
            if element.name == name:
                return element
        raise ExperimentError(f"no element named {name!r}")

    def with_parameter(self, name: str, field_name: str, value: float) -> "ElementProgram":
        """Return a copy with one numeric element parameter replaced."""
        element = self.element(name)
        editable = {
            f.name for f in fields(element) if f.type in (float, "float")
        }
        if field_name not in editable:
            raise ExperimentError(
                f"{name} ({type(element).__name__}) has no numeric field {field_name!r}"
            )
        updated = replace(element, **{field_name: float(value)})
        return replace(
            self,
            elements=tuple(updated if e.name == name else e for e in self.elements),
        )


_DIRECTIVES: Dict[type, str] = {
    BeamSplitter: "bs",
    PolarizingBeamSplitter: "pbs",
    HalfWavePlate: "hwp",
    PhaseShift: "phase",
    Delay: "delay",
    Polarizer: "pol",
}

_PHOTON_KEYS = ("mode", "pol", "wavelength_nm", "bandwidth_nm", "delay_fs")


class _Parser:
    """Line-by-line parser that never raises; problems become diagnostics."""

    def __init__(self) -> None:
        self.diagnostics: List[Diagnostic] = []
        self.photons: List[PhotonDecl] = []
        self.elements: List[Element] = []
        self.detectors: List[DetectorDecl] = []
        self.discards: List[str] = []
        self.coincidences: List[Tuple[str, str]] = []
        self.lines: Dict[str, int] = {}
        self._handlers: Dict[str, Callable[[int, List[str]], None]] = {
            "photon": self._photon,
            "bs": self._two_port,
            "pbs": self._two_port,
            "hwp": self._single_mode,
            "phase": self._single_mode,
            "delay": self._single_mode,
            "pol": self._single_mode,
            "detector": self._detector,
            "discard": self._discard,
            "coincidence": self._coincidence,
        }
        self._directive = ""

    def error(self, line: int, message: str, token: str = "") -> None:
        self.diagnostics.append(Diagnostic(Severity.ERROR, line, message, token))

    def run(self, text: str) -> None:
        for number, raw in enumerate(text.splitlines(), start=1):
            statement = raw.split("#", 1)[0].strip()
            if not statement:
                continue
            tokens = statement.split()
            self._directive = tokens[0]
            handler = self._handlers.get(tokens[0])
            if handler is None:
                self.error(number, f"unknown directive {tokens[0]!r}", tokens[0])
                continue
            try:
                handler(number, tokens[1:])
            except OpticsError as e:
                self.error(number, str(e), tokens[0])
            except Exception as e:
                logger.error(f"Unexpected parser failure on line {number}: {e}")
                self.error(number, f"could not parse statement: {e}", tokens[0])
        if not any(
            line.split("#", 1)[0].split()[:1] == ["photon"] for line in text.splitlines()
        ):
            self.error(1, "no photon declarations")

    # Token helpers

    def _name(self, line: int, tokens: List[str]) -> Optional[str]:
        if not tokens:
            self.error(line, f"{self._directive} needs a name", self._directive)
            return None
        if not IDENTIFIER.match(tokens[0]):
            self.error(line, f"invalid name {tokens[0]!r}", tokens[0])
            return None
        return tokens[0]

    def _arguments(
        self,
        line: int,
        tokens: List[str],
        required: Sequence[str],
        optional: Sequence[str] = (),
    ) -> Optional[Dict[str, str]]:
        arguments: Dict[str, str] = {}
        ok = True
        for token in tokens:
            key, sep, value = token.partition("=")
            if not sep or not key or not value:
                self.error(line, f"expected key=value, got {token!r}", token)
                ok = False
            elif key not in required and key not in optional:
                self.error(line, f"unknown key {key!r} for {self._directive}", token)
                ok = False
            elif key in arguments:
                self.error(line, f"duplicate key {key!r}", token)
                ok = False
            else:
                arguments[key] = value
        for key in required:
            if key not in arguments:
                self.error(line, f"missing key {key!r} for {self._directive}", key)
                ok = False
        return arguments if ok else None

    def _number(self, line: int, key: str, value: str) -> Optional[float]:
        try:
            return float(value)
        except ValueError:
            self.error(line, f"malformed number for {key}: {value!r}", value)
            return None

    def _label(self, line: int, value: str) -> Optional[str]:
        if not IDENTIFIER.match(value):
            self.error(line, f"invalid label {value!r}", value)
            return None
        return value

    def _pol(self, line: int, value: str) -> Optional[Polarization]:
        if value not in ("H", "V"):
            self.error(line, f"polarization must be H or V, got {value!r}", value)
            return None
        return Polarization(value)

    def _pair(self, line: int, key: str, value: str) -> Optional[Tuple[str, str]]:
        parts = value.split(",")
        if len(parts) != 2:
            self.error(line, f"{key} needs exactly two labels, got {value!r}", value)
            return None
        first, second = (self._label(line, p) for p in parts)
        if first is None or second is None:
            return None
        return (first, second)

    def _declare(self, key: str, line: int) -> None:
        # First declaration wins; validate reports the duplicate.
        self.lines.setdefault(key, line)

    # Statements

    def _photon(self, line: int, tokens: List[str]) -> None:
        name = self._name(line, tokens)
        args = self._arguments(line, tokens[1:], _PHOTON_KEYS, ("mode_overlap",))
        if name is None or args is None:
            return
        spatial = self._label(line, args["mode"])
        pol = self._pol(line, args["pol"])
        parsed = {
            key: self._number(line, key, args.get(key, "1.0"))
            for key in ("wavelength_nm", "bandwidth_nm", "delay_fs", "mode_overlap")
        }
        numbers = {k: v for k, v in parsed.items() if v is not None}
        if spatial is None or pol is None or len(numbers) != len(parsed):
            return
        wavepacket = Wavepacket(
            center_wavelength=numbers["wavelength_nm"],
            bandwidth_fwhm=numbers["bandwidth_nm"],
            delay=numbers["delay_fs"],
            mode_overlap=numbers["mode_overlap"],
        )
        self.photons.append(PhotonDecl(name, spatial, pol, wavepacket))
        self._declare(name, line)

    def _two_port(self, line: int, tokens: List[str]) -> None:
        name = self._name(line, tokens)
        args = self._arguments(line, tokens[1:], ("in", "out"))
        if name is None or args is None:
            return
        inputs = self._pair(line, "in", args["in"])
        outputs = self._pair(line, "out", args["out"])
        if inputs is None or outputs is None:
            return
        if inputs[0] == inputs[1]:
            self.error(line, f"{name}: duplicate input port {inputs[0]!r}", args["in"])
            return
        if outputs[0] == outputs[1]:
            self.error(line, f"{name}: duplicate output port {outputs[0]!r}", args["out"])
            return
        shared = sorted(set(inputs) & set(outputs))
        if shared:
            self.error(
                line, f"{name}: port {shared[0]!r} used as both input and output", shared[0]
            )
            return
        kind = BeamSplitter if self._directive == "bs" else PolarizingBeamSplitter
        self.elements.append(kind(name, *inputs, *outputs))
        self._declare(name, line)

    def _single_mode(self, line: int, tokens: List[str]) -> None:
        parameters = {
            "hwp": ("angle_deg",),
            "phase": ("phi_rad",),
            "delay": ("tau_fs",),
            "pol": ("angle_deg", "extinction"),
        }[self._directive]
        name = self._name(line, tokens)
        args = self._arguments(line, tokens[1:], ("mode",) + parameters)
        if name is None or args is None:
            return
        spatial = self._label(line, args["mode"])
        parsed = [self._number(line, key, args[key]) for key in parameters]
        values = [v for v in parsed if v is not None]
        if spatial is None or len(values) != len(parsed):
            return
        element: Element
        if self._directive == "hwp":
            element = HalfWavePlate(name, spatial, values[0])
        elif self._directive == "phase":
            element = PhaseShift(name, spatial, values[0])
        elif self._directive == "delay":
            element = Delay(name, spatial, values[0])
        else:
            element = Polarizer(name, spatial, values[0], values[1])
        self.elements.append(element)
        self._declare(name, line)

    def _detector(self, line: int, tokens: List[str]) -> None:
        name = self._name(line, tokens)
        args = self._arguments(line, tokens[1:], ("mode", "pol"))
        if name is None or args is None:
            return
        spatial = self._label(line, args["mode"])
        pol = self._pol(line, args["pol"])
        if spatial is None or pol is None:
            return
        self.detectors.append(DetectorDecl(name, spatial, pol))
        self._declare(name, line)

    def _discard(self, line: int, tokens: List[str]) -> None:
        if len(tokens) != 1:
            self.error(line, "discard takes exactly one label", "discard")
            return
        label = self._label(line, tokens[0])
        if label is None:
            return
        self.discards.append(label)
        self._declare(f"discard {label}", line)

    def _coincidence(self, line: int, tokens: List[str]) -> None:
        if len(tokens) != 1:
            self.error(line, "coincidence takes one detector pair a,b", "coincidence")
            return
        pair = self._pair(line, "coincidence", tokens[0])
        if pair is None:
            return
        self.coincidences.append(pair)
        self._declare(f"coincidence {pair[0]},{pair[1]}", line)


def parse_circuit(text: Union[str, bytes]) -> Union[Circuit, List[Diagnostic]]:
    """
    Parse circuit text.

    Returns the Circuit, or the full list of diagnostics when any statement is
    malformed. Parsing never raises and never stops at the first problem.
    """
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as e:
            line = text[: e.start].count(b"\n") + 1
            return [Diagnostic(Severity.ERROR, line, f"input is not valid UTF-8: {e.reason}")]
    parser = _Parser()
    parser.run(text)
    if parser.diagnostics:
        logger.info(f"Parsing produced {len(parser.diagnostics)} diagnostics")
        return parser.diagnostics
    circuit = Circuit(
        photons=tuple(parser.photons),
        elements=tuple(parser.elements),
        detectors=tuple(parser.detectors),
        discards=tuple(parser.discards),
        coincidences=tuple(parser.coincidences),
        lines=parser.lines,
    )
    logger.info(
        f"Parsed circuit: {len(circuit.photons)} photons, {len(circuit.elements)} "
        f"elements, {len(circuit.detectors)} detectors"
    )
    return circuit


def _numeric_values(element: Element) -> List[Tuple[str, float]]:
    return [
        (f.name, getattr(element, f.name))
        for f in fields(element)
        if isinstance(getattr(element, f.name), float)
    ]


class _Validator:
    def __init__(self, circuit: Circuit) -> None:
        self.circuit = circuit
        self.diagnostics: List[Diagnostic] = []

    def error(self, key: str, message: str, token: str = "") -> None:
        line = self.circuit.line_of(key)
        self.diagnostics.append(Diagnostic(Severity.ERROR, line, message, token))

    def warning(self, key: str, message: str, token: str = "") -> None:
        line = self.circuit.line_of(key)
        self.diagnostics.append(Diagnostic(Severity.WARNING, line, message, token))

    def run(self) -> List[Diagnostic]:
        self._photons()
        self._names()
        live = self._wiring()
        self._detection(live)
        self._coincidences()
        return sorted(self.diagnostics, key=lambda d: d.line)

    def _photons(self) -> None:
        photons = self.circuit.photons
        if len(photons) != 2:
            key = photons[2].name if len(photons) > 2 else ""
            self.error(key, "exactly two photons required")
        seen: Set[str] = set()
        for photon in photons:
            if photon.spatial in seen:
                self.error(photon.name, f"photon mode {photon.spatial!r} used twice")
            if VACUUM_LABEL.match(photon.spatial):
                self.error(photon.name, f"{photon.spatial!r} is a reserved vacuum label")
            seen.add(photon.spatial)
        for photon in photons[1:]:
            wave, reference = photon.wavepacket, photons[0].wavepacket
            if not (
                math.isclose(wave.center_wavelength, reference.center_wavelength)
                and math.isclose(wave.bandwidth_fwhm, reference.bandwidth_fwhm)
            ):
                self.error(
                    photon.name, "photons must share centre wavelength and bandwidth"
                )

    def _names(self) -> None:
        seen: Set[str] = set()
        declared = (
            [p.name for p in self.circuit.photons]
            + [e.name for e in self.circuit.elements]
            + [d.name for d in self.circuit.detectors]
        )
        for name in declared:
            if name in seen:
                self.error(name, f"duplicate name {name!r}", name)
            seen.add(name)

    def _wiring(self) -> List[str]:
        """Walk the elements in order and return the live labels at the end."""
        live: List[str] = [p.spatial for p in self.circuit.photons]
        seen: Set[str] = set(live)
        for element in self.circuit.elements:
            for key, value in _numeric_values(element):
                finite = math.isfinite(value) or (key == "extinction" and value > 0)
                if not finite:
                    self.error(element.name, f"{element.name}: {key} must be finite")
            if isinstance(element, (BeamSplitter, PolarizingBeamSplitter)):
                for label in element.inputs:
                    if label in live:
                        live.remove(label)
                    elif VACUUM_LABEL.match(label) and label not in seen:
                        pass
                    elif label in seen:
                        self.error(
                            element.name,
                            f"{element.name}: input {label!r} was already consumed",
                            label,
                        )
                    else:
                        self.error(
                            element.name,
                            f"{element.name}: undefined input label {label!r}",
                            label,
                        )
                    seen.add(label)
                for label in element.outputs:
                    if label in seen:
                        self.error(
                            element.name,
                            f"{element.name}: output label {label!r} already in use",
                            label,
                        )
                    else:
                        live.append(label)
                    seen.add(label)
            elif element.spatial not in live:
                self.error(
                    element.name,
                    f"{element.name}: label {element.spatial!r} is not live here",
                    element.spatial,
                )
        return live

    def _detection(self, live: List[str]) -> None:
        covered: Dict[str, Set[Polarization]] = {}
        modes: Set[Tuple[str, Polarization]] = set()
        for detector in self.circuit.detectors:
            if detector.name in RESERVED_NAMES:
                self.error(detector.name, f"detector name {detector.name!r} is reserved")
            if detector.spatial not in live:
                self.error(
                    detector.name,
                    f"detector {detector.name} watches {detector.spatial!r}, "
                    "which is not live at the end of the circuit",
                    detector.spatial,
                )
            if (detector.spatial, detector.pol) in modes:
                self.error(
                    detector.name,
                    f"{detector.spatial}/{detector.pol.value} already has a detector",
                )
            modes.add((detector.spatial, detector.pol))
            covered.setdefault(detector.spatial, set()).add(detector.pol)
        discarded: Set[str] = set()
        for label in self.circuit.discards:
            key = f"discard {label}"
            if label not in live:
                self.error(key, f"discarded label {label!r} is not live", label)
            if label in covered:
                self.error(key, f"label {label!r} is both detected and discarded", label)
            if label in discarded:
                self.warning(key, f"label {label!r} discarded twice", label)
            discarded.add(label)
        for label in live:
            if label in discarded:
                continue
            if label not in covered:
                self.warning("", f"unterminated mode {label}", label)
            else:
                for pol in Polarization:
                    if pol not in covered[label]:
                        self.warning("", f"mode {label} has no detector for {pol.value}")

    def _coincidences(self) -> None:
        names = {d.name for d in self.circuit.detectors}
        for first, second in self.circuit.coincidences:
            key = f"coincidence {first},{second}"
            for name in (first, second):
                if name not in names:
                    self.error(key, f"coincidence references unknown detector {name!r}", name)
            if first == second:
                self.error(key, "coincidence needs two different detectors", first)


def validate(circuit: Circuit) -> List[Diagnostic]:
    """Check photon count, wiring, detector coverage and coincidence pairs."""
    diagnostics = _Validator(circuit).run()
    logger.info(
        f"Validation found {sum(d.severity is Severity.ERROR for d in diagnostics)} "
        f"errors and {sum(d.severity is Severity.WARNING for d in diagnostics)} warnings"
    )
    return diagnostics


def compile_circuit(circuit: Circuit) -> ElementProgram:
    """Compile a circuit that validates without errors."""
    diagnostics = validate(circuit)
    errors = [d for d in diagnostics if d.severity is Severity.ERROR]
    if errors:
        raise CircuitError(
            f"circuit has {len(errors)} error(s); first: {errors[0]}", errors
        )
    detectors = tuple((Mode(d.spatial, d.pol), d.name) for d in circuit.detectors)
    coincidences = tuple(
        (a, b) if a <= b else (b, a) for a, b in circuit.coincidences
    )
    return ElementProgram(
        photons=tuple((p.spatial, p.pol, p.wavepacket) for p in circuit.photons),
        elements=circuit.elements,
        detectors=detectors,
        discards=frozenset(circuit.discards),
        coincidences=coincidences,
    )


def load_program(text: Union[str, bytes]) -> ElementProgram:
    """Parse and compile in one step, raising CircuitError on any error."""
    parsed = parse_circuit(text)
    if not isinstance(parsed, Circuit):
        raise CircuitError(f"circuit does not parse; first: {parsed[0]}", parsed)
    return compile_circuit(parsed)


def _number(value: float) -> str:
    return repr(float(value))


def _format_element(element: Element) -> str:
    directive = _DIRECTIVES[type(element)]
    if isinstance(element, (BeamSplitter, PolarizingBeamSplitter)):
        return (
            f"{directive} {element.name} in={element.in1},{element.in2} "
            f"out={element.out1},{element.out2}"
        )
    if isinstance(element, HalfWavePlate):
        arguments = f"angle_deg={_number(element.angle_deg)}"
    elif isinstance(element, PhaseShift):
        arguments = f"phi_rad={_number(element.phi_rad)}"
    elif isinstance(element, Delay):
        arguments = f"tau_fs={_number(element.tau_fs)}"
    else:
        arguments = (
            f"angle_deg={_number(element.angle_deg)} "
            f"extinction={_number(element.extinction)}"
        )
    return f"{directive} {element.name} mode={element.spatial} {arguments}"


def format_circuit(circuit: Circuit) -> str:
    """Canonical text for a circuit; floats use the shortest round-trip form."""
    lines: List[str] = []
    for photon in circuit.photons:
        wave = photon.wavepacket
        text = (
            f"photon {photon.name} mode={photon.spatial} pol={photon.pol.value} "
            f"wavelength_nm={_number(wave.center_wavelength)} "
            f"bandwidth_nm={_number(wave.bandwidth_fwhm)} "
            f"delay_fs={_number(wave.delay)}"
        )
        if wave.mode_overlap != 1.0:
            text += f" mode_overlap={_number(wave.mode_overlap)}"
        lines.append(text)
    lines.extend(_format_element(element) for element in circuit.elements)
    lines.extend(
        f"detector {d.name} mode={d.spatial} pol={d.pol.value}" for d in circuit.detectors
    )
    lines.extend(f"discard {label}" for label in circuit.discards)
    lines.extend(f"coincidence {a},{b}" for a, b in circuit.coincidences)
    return "\n".join(lines) + "\n"
