"""
Tests for the circuit module of qoptsim.

This module tests the .qopt description language including:
- Parsing the packaged interferometer
- Diagnostics for malformed statements
- Validation of photon count, wiring and detector coverage
- Compilation and program editing
- Canonical formatting
"""

import math
from typing import List

import pytest

from qoptsim.circuit import (
    Circuit,
    Diagnostic,
    ElementProgram,
    Severity,
    compile_circuit,
    format_circuit,
    load_program,
    parse_circuit,
    validate,
)
from qoptsim.errors import CircuitError, ExperimentError
from qoptsim.experiments import run_exact
from qoptsim.optics import Delay, HalfWavePlate, Mode, Polarization
from qoptsim.setups import FIXTURE_PATH, paper_setup

SOURCES = (
    "photon P1 mode=a pol=H wavelength_nm=702.2 bandwidth_nm=1.5 delay_fs=0\n"
    "photon P2 mode=b pol=V wavelength_nm=702.2 bandwidth_nm=1.5 delay_fs=0\n"
)
FULL_DETECTION = (
    "detector DAH mode=a pol=H\n"
    "detector DAV mode=a pol=V\n"
    "detector DBH mode=b pol=H\n"
    "detector DBV mode=b pol=V\n"
)


def errors(diagnostics: List[Diagnostic]) -> List[Diagnostic]:
    return [d for d in diagnostics if d.severity is Severity.ERROR]


def parsed(text: str) -> Circuit:
    result = parse_circuit(text)
    assert isinstance(result, Circuit), result
    return result


def fixture_text() -> str:
    with open(FIXTURE_PATH, encoding="utf-8") as file:
        return file.read()


class TestParseFixture:
    """Test suite for parsing the packaged interferometer."""

    def test_fixture_parses(self) -> None:
        """Test that the fixture parses into two photons and fourteen elements."""
        circuit = parsed(fixture_text())
        assert len(circuit.photons) == 2
        assert len(circuit.elements) == 14
        assert [d.name for d in circuit.detectors] == ["DHA", "DVA", "DHB", "DVB"]
        assert circuit.discards == ("Aout2", "Bout2")

    def test_fixture_matches_builder(self) -> None:
        """Test that the fixture file and the setup builder agree."""
        assert parsed(fixture_text()) == paper_setup()

    def test_fixture_validates_cleanly(self) -> None:
        """Test that the fixture has no diagnostics at all."""
        assert validate(parsed(fixture_text())) == []

    def test_line_numbers_recorded(self) -> None:
        """Test that declarations remember their source line."""
        circuit = parsed("# header\n\n" + SOURCES)
        assert circuit.line_of("P1") == 3
        assert circuit.line_of("P2") == 4

    def test_optional_mode_overlap(self) -> None:
        """Test the optional mode_overlap photon key."""
        text = SOURCES.replace("delay_fs=0\nphoton P2", "delay_fs=0 mode_overlap=0.9\nphoton P2")
        circuit = parsed(text)
        assert circuit.photons[0].wavepacket.mode_overlap == 0.9
        assert circuit.photons[1].wavepacket.mode_overlap == 1.0


class TestParseDiagnostics:
    """Test suite for parse diagnostics."""

    def test_empty_input(self) -> None:
        """Test that an empty description reports missing photons."""
        result = parse_circuit("")
        assert isinstance(result, list)
        assert [d.message for d in result] == ["no photon declarations"]

    def test_unknown_directive(self) -> None:
        """Test that an unknown directive is reported on its line."""
        result = parse_circuit(SOURCES + "mirror M1 mode=a\n")
        assert isinstance(result, list)
        assert result[0].line == 3
        assert "unknown directive" in result[0].message

    def test_malformed_number(self) -> None:
        """Test that a malformed number names its key."""
        result = parse_circuit(SOURCES + "hwp W mode=a angle_deg=22.5.1\n")
        assert isinstance(result, list)
        assert "angle_deg" in result[0].message

    def test_missing_and_unknown_keys(self) -> None:
        """Test reports for missing, unknown and duplicate keys."""
        result = parse_circuit(
            SOURCES
            + "phase P mode=a\n"
            + "delay D mode=a tau_fs=1 color=red\n"
            + "hwp W mode=a angle_deg=1 angle_deg=2\n"
        )
        assert isinstance(result, list)
        messages = [d.message for d in result]
        assert any("missing key 'phi_rad'" in m for m in messages)
        assert any("unknown key 'color'" in m for m in messages)
        assert any("duplicate key 'angle_deg'" in m for m in messages)

    def test_duplicate_input_port(self) -> None:
        """Test the duplicate input port diagnostic."""
        result = parse_circuit(SOURCES + "bs B in=a,a out=c,d\n")
        assert isinstance(result, list)
        assert "duplicate input port" in result[0].message

    def test_all_errors_collected(self) -> None:
        """Test that parsing continues after the first bad line."""
        result = parse_circuit(
            SOURCES + "bogus\nhwp W mode=a angle_deg=x\npol P mode=a angle_deg=0 extinction=0.5\n"
        )
        assert isinstance(result, list)
        assert [d.line for d in result] == [3, 4, 5]

    def test_invalid_wavepacket_becomes_diagnostic(self) -> None:
        """Test that wavepacket construction errors are reported, not raised."""
        result = parse_circuit(SOURCES.replace("bandwidth_nm=1.5", "bandwidth_nm=-1", 1))
        assert isinstance(result, list)
        assert result[0].line == 1

    def test_invalid_utf8(self) -> None:
        """Test that undecodable bytes yield a diagnostic at the failing line."""
        result = parse_circuit(SOURCES.encode() + b"hwp W mode=\xff angle_deg=1\n")
        assert isinstance(result, list)
        assert result[0].line == 3

    def test_diagnostic_format(self) -> None:
        """Test the LINE:SEVERITY:MESSAGE rendering."""
        assert str(Diagnostic(Severity.WARNING, 7, "unterminated mode x")) == (
            "7:warning:unterminated mode x"
        )


class TestValidate:
    """Test suite for circuit validation."""

    def test_three_photons(self) -> None:
        """Test that a third photon gives exactly one error."""
        text = (
            SOURCES
            + "photon P3 mode=c pol=H wavelength_nm=702.2 bandwidth_nm=1.5 delay_fs=0\n"
            + FULL_DETECTION
            + "detector DCH mode=c pol=H\ndetector DCV mode=c pol=V\n"
        )
        found = errors(validate(parsed(text)))
        assert len(found) == 1
        assert found[0].message == "exactly two photons required"
        assert found[0].line == 3

    def test_undefined_input(self) -> None:
        """Test that an element reading an unknown label is rejected."""
        found = errors(validate(parsed(SOURCES + "bs B in=a,q out=c,d\n")))
        assert any("undefined input label 'q'" in d.message for d in found)

    def test_consumed_label(self) -> None:
        """Test that a label cannot be read twice."""
        text = SOURCES + "bs B1 in=a,b out=c,d\nhwp W mode=a angle_deg=0\n"
        found = errors(validate(parsed(text)))
        assert any("'a' is not live" in d.message for d in found)

    def test_vacuum_ports(self) -> None:
        """Test that vac labels feed a beamsplitter without declaration."""
        text = (
            SOURCES
            + "bs B in=a,vac1 out=c,d\n"
            + "detector D1 mode=c pol=H\ndetector D2 mode=c pol=V\n"
            + "detector D3 mode=d pol=H\ndetector D4 mode=d pol=V\n"
            + "detector D5 mode=b pol=H\ndetector D6 mode=b pol=V\n"
        )
        assert validate(parsed(text)) == []

    def test_detector_on_dead_label(self) -> None:
        """Test that detectors must watch a label live at the end."""
        text = SOURCES + "bs B in=a,b out=c,d\n" + FULL_DETECTION
        found = errors(validate(parsed(text)))
        assert any("not live at the end" in d.message for d in found)

    def test_unterminated_mode_warning(self) -> None:
        """Test that an undetected live label is a warning."""
        text = SOURCES + "detector DAH mode=a pol=H\ndetector DAV mode=a pol=V\n"
        diagnostics = validate(parsed(text))
        assert errors(diagnostics) == []
        assert [d.message for d in diagnostics] == ["unterminated mode b"]

    def test_missing_polarization_warning(self) -> None:
        """Test that a label with one polarization detector is a warning."""
        text = SOURCES + FULL_DETECTION.replace("detector DBV mode=b pol=V\n", "")
        diagnostics = validate(parsed(text))
        assert [d.severity for d in diagnostics] == [Severity.WARNING]
        assert "no detector for V" in diagnostics[0].message

    def test_unknown_coincidence_detector(self) -> None:
        """Test that coincidences must name declared detectors."""
        text = SOURCES + FULL_DETECTION + "coincidence DAH,DXX\n"
        found = errors(validate(parsed(text)))
        assert any("unknown detector 'DXX'" in d.message for d in found)

    def test_duplicate_names(self) -> None:
        """Test that names are unique across photons, elements and detectors."""
        text = SOURCES + "hwp P1 mode=a angle_deg=0\n" + FULL_DETECTION
        found = errors(validate(parsed(text)))
        assert any("duplicate name 'P1'" in d.message for d in found)

    def test_non_finite_parameter(self) -> None:
        """Test that NaN element parameters are rejected."""
        text = SOURCES + "phase P mode=a phi_rad=nan\n" + FULL_DETECTION
        found = errors(validate(parsed(text)))
        assert any("phi_rad must be finite" in d.message for d in found)

    def test_detect_and_discard_conflict(self) -> None:
        """Test that a label cannot be both detected and discarded."""
        text = SOURCES + FULL_DETECTION + "discard a\n"
        found = errors(validate(parsed(text)))
        assert any("both detected and discarded" in d.message for d in found)


class TestCompile:
    """Test suite for compilation into an ElementProgram."""

    def test_compile_fixture(self) -> None:
        """Test the compiled detector map and sorted coincidence pairs."""
        program = compile_circuit(paper_setup())
        assert program.detector_map()[Mode("A", Polarization.H)] == "DHA"
        assert ("DHA", "DVB") in program.coincidences
        assert ("DHB", "DVA") in program.coincidences
        assert program.discards == frozenset({"Aout2", "Bout2"})

    def test_compile_rejects_errors(self) -> None:
        """Test that compiling an invalid circuit raises with diagnostics."""
        with pytest.raises(CircuitError) as excinfo:
            compile_circuit(parsed(SOURCES + "bs B in=a,q out=c,d\n"))
        assert excinfo.value.diagnostics

    def test_load_program_rejects_parse_errors(self) -> None:
        """Test the parse-and-compile shortcut."""
        with pytest.raises(CircuitError):
            load_program("nonsense")

    def test_with_parameter(self) -> None:
        """Test that editing one parameter leaves the original program intact."""
        program = compile_circuit(paper_setup())
        edited = program.with_parameter("PRISM1", "tau_fs", 12.5)
        prism = edited.element("PRISM1")
        assert isinstance(prism, Delay) and prism.tau_fs == 12.5
        original = program.element("PRISM1")
        assert isinstance(original, Delay) and original.tau_fs == 0.0
        hwp = edited.element("HWP1")
        assert isinstance(hwp, HalfWavePlate) and hwp.angle_deg == 22.5

    def test_with_parameter_errors(self) -> None:
        """Test unknown elements and non-numeric fields."""
        program: ElementProgram = compile_circuit(paper_setup())
        with pytest.raises(ExperimentError):
            program.with_parameter("NOPE", "tau_fs", 1.0)
        with pytest.raises(ExperimentError):
            program.with_parameter("PRISM1", "spatial", 1.0)
        with pytest.raises(ExperimentError):
            program.with_parameter("PRISM1", "angle_deg", 1.0)

    def test_wave_plate_position_matters(self) -> None:
        """Test that a wave plate before or after the PBS compiles to different statistics."""
        detection = "".join(
            f"detector D{s.upper()}{p} mode={s} pol={p}\n" for s in "cd" for p in "HV"
        )
        before = load_program(
            SOURCES + "hwp W mode=a angle_deg=22.5\npbs P in=a,b out=c,d\n" + detection
        )
        after = load_program(
            SOURCES + "pbs P in=a,b out=c,d\nhwp W mode=c angle_deg=22.5\n" + detection
        )
        assert [e.name for e in before.elements] == ["W", "P"]
        assert [e.name for e in after.elements] == ["P", "W"]
        assert run_exact(before).probability("DCV", "DDV") == pytest.approx(0.5)
        assert run_exact(after).probability("DCV", "DDV") == pytest.approx(0.0, abs=1e-12)

    def test_reordered_phases_equivalent(self) -> None:
        """Test that phase lines on separate arms may be listed in any order."""
        text = format_circuit(paper_setup(phases=(0.3, 1.1, 2.0, 0.4)))
        lines = text.splitlines()
        first = next(i for i, line in enumerate(lines) if line.startswith("phase PH1 "))
        last = next(i for i, line in enumerate(lines) if line.startswith("phase PH4 "))
        lines[first], lines[last] = lines[last], lines[first]
        original = run_exact(load_program(text)).probabilities
        reordered = run_exact(load_program("\n".join(lines) + "\n")).probabilities
        assert original.keys() == reordered.keys()
        for outcome, p in original.items():
            assert reordered[outcome] == pytest.approx(p, abs=1e-12)


class TestFormat:
    """Test suite for canonical formatting."""

    def test_round_trip_fixture(self) -> None:
        """Test parse(format(c)) == c for the interferometer."""
        circuit = paper_setup(
            phases=(0.1, 0.2, math.pi, 1e-7), prism_delays=(3.25, -1.0), mode_overlap=0.7
        )
        assert parsed(format_circuit(circuit)) == circuit

    def test_format_is_stable(self) -> None:
        """Test that formatting a re-parsed circuit gives the same text."""
        text = format_circuit(paper_setup())
        assert format_circuit(parsed(text)) == text

    def test_comments_dropped(self) -> None:
        """Test that comments do not survive formatting."""
        assert "#" not in format_circuit(parsed(fixture_text()))

    def test_infinite_extinction(self) -> None:
        """Test that an ideal polarizer round-trips."""
        text = SOURCES + "pol P mode=a angle_deg=0 extinction=inf\n" + FULL_DETECTION
        circuit = parsed(text)
        assert parsed(format_circuit(circuit)) == circuit
        assert validate(circuit) == []
