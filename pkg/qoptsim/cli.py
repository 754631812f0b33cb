"""
Command-line front end for qoptsim.

    qoptsim validate FILE
    qoptsim run FILE [--mode exact|sampled] [--seed N] [--rate F] [--duration F]
    qoptsim scan FILE --element NAME --from F --to F --step F [--kind hom|fringe]
    qoptsim chsh FILE [--angles A,A',B,B']

Exit codes: 0 success, 1 circuit or experiment error, 2 usage or I/O error.
CSV goes to --out or stdout; diagnostics and logs go to stderr.
"""

import argparse
import logging
import math
import sys
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .circuit import (
    Circuit,
    Diagnostic,
    ElementProgram,
    Severity,
    compile_circuit,
    parse_circuit,
    validate,
)
from .config import config
from .errors import ExperimentError, OpticsError
from .experiments import (
    Sampling,
    chsh,
    fringe_scan,
    hom_scan,
    run_exact,
    sample_counts,
    visibility,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_USAGE = 2


class UsageError(Exception):
    """Flags that parse but do not form a usable run."""


@dataclass(frozen=True)
class RunConfig:
    """Resolved command-line settings for one invocation."""

    command: str
    path: str
    out: Optional[str] = None
    mode: str = "exact"
    seed: Optional[int] = None
    rate: float = 12000.0
    duration: float = 3.0
    element: Optional[str] = None
    field: str = "tau_fs"
    start: float = 0.0
    stop: float = 0.0
    step: float = 0.0
    kind: str = "hom"
    pair: Optional[Tuple[str, str]] = None
    angles: Optional[Tuple[float, float, float, float]] = None

    def __post_init__(self) -> None:
        if self.mode == "sampled" and self.seed is None:
            raise UsageError("--seed is required with --mode sampled")
        if self.seed is not None and self.seed < 0:
            raise UsageError("--seed must be non-negative")
        for name, value in (("--rate", self.rate), ("--duration", self.duration)):
            if not (math.isfinite(value) and value > 0):
                raise UsageError(f"{name} must be positive, got {value}")
        if self.command == "scan":
            if not self.element:
                raise UsageError("scan needs --element")
            if not all(math.isfinite(v) for v in (self.start, self.stop, self.step)):
                raise UsageError("scan bounds must be finite")
            if self.step <= 0:
                raise UsageError(f"--step must be positive, got {self.step}")
            if self.start > self.stop:
                raise UsageError("--from must not exceed --to")

    @property
    def sampling(self) -> Optional[Sampling]:
        if self.mode != "sampled" or self.seed is None:
            return None
        return Sampling(self.rate, self.duration, self.seed)

    def grid(self) -> np.ndarray:
        """start, start + step, ... up to stop inclusive."""
        count = int(math.floor((self.stop - self.start) / self.step + 1e-9)) + 1
        return self.start + self.step * np.arange(count)


def _angles(text: str) -> Tuple[float, float, float, float]:
    try:
        values = [float(part) for part in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"angles must be decimal numbers: {text!r}")
    if len(values) != 4 or not all(math.isfinite(v) for v in values):
        raise argparse.ArgumentTypeError("expected four finite angles A,A',B,B'")
    return (values[0], values[1], values[2], values[3])


def _pair(text: str) -> Tuple[str, str]:
    parts = text.split(",")
    if len(parts) != 2 or not all(parts):
        raise argparse.ArgumentTypeError("expected two detector names DET1,DET2")
    return (parts[0], parts[1])


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("path", help="circuit description (.qopt)")
    common.add_argument("--out", help="output CSV path (default: stdout)")
    common.add_argument("--verbose", "-v", action="count", default=0,
                        help="log INFO (-v) or DEBUG (-vv) to stderr")

    counting = argparse.ArgumentParser(add_help=False)
    counting.add_argument("--mode", choices=["exact", "sampled"], default="exact")
    counting.add_argument("--seed", type=int, help="master seed for sampled mode")
    counting.add_argument("--rate", type=float, default=float(config["pair_rate"]),
                          help="detected pairs per second")
    counting.add_argument("--duration", type=float,
                          default=float(config["duration_s"]),
                          help="integration time per table in seconds")

    parser = argparse.ArgumentParser(
        prog="qoptsim", description="Two-photon linear-optics simulator"
    )
    commands = parser.add_subparsers(dest="command", required=True)
    commands.add_parser("validate", parents=[common], help="check a circuit")
    commands.add_parser("run", parents=[common, counting],
                        help="coincidence table for a circuit")
    scan = commands.add_parser("scan", parents=[common, counting],
                               help="scan one delay line")
    scan.add_argument("--element", required=True, help="delay element to scan")
    scan.add_argument("--field", default="tau_fs", help="numeric element field")
    scan.add_argument("--from", dest="start", type=float, required=True)
    scan.add_argument("--to", dest="stop", type=float, required=True)
    scan.add_argument("--step", type=float, required=True)
    scan.add_argument("--kind", choices=["hom", "fringe"], default="hom")
    scan.add_argument("--pair", type=_pair, help="observable detectors DET1,DET2")
    bell = commands.add_parser("chsh", parents=[common, counting],
                               help="CHSH Bell parameter")
    bell.add_argument("--angles", type=_angles,
                      help="analysis angles A,A',B,B' in degrees")
    return parser


def _report(diagnostics: Sequence[Diagnostic]) -> None:
    for diagnostic in diagnostics:
        sys.stderr.write(f"{diagnostic}\n")


def load(path: str) -> Tuple[Optional[ElementProgram], List[Diagnostic]]:
    """Read, parse, validate and compile; OSError propagates."""
    with open(path, "rb") as file:
        text = file.read()
    parsed = parse_circuit(text)
    if not isinstance(parsed, Circuit):
        return None, parsed
    diagnostics = validate(parsed)
    if any(d.severity is Severity.ERROR for d in diagnostics):
        return None, diagnostics
    return compile_circuit(parsed), diagnostics


def cmd_validate(settings: RunConfig) -> int:
    _, diagnostics = load(settings.path)
    _report(diagnostics)
    errors = sum(d.severity is Severity.ERROR for d in diagnostics)
    logger.info(f"{settings.path}: {errors} errors, {len(diagnostics) - errors} warnings")
    return EXIT_DOMAIN if errors else EXIT_OK


def _program(settings: RunConfig) -> Optional[ElementProgram]:
    program, diagnostics = load(settings.path)
    _report(diagnostics)
    return program


def cmd_run(settings: RunConfig) -> Optional[str]:
    program = _program(settings)
    if program is None:
        return None
    table = run_exact(program)
    sampling = settings.sampling
    if sampling is not None:
        table = sample_counts(table, sampling.pair_rate, sampling.duration, sampling.seed)
    return table.to_csv()


def cmd_scan(settings: RunConfig) -> Optional[str]:
    program = _program(settings)
    if program is None:
        return None
    scan = fringe_scan if settings.kind == "fringe" else hom_scan
    curve = scan(
        program,
        str(settings.element),
        settings.grid(),
        sampling=settings.sampling,
        pair=settings.pair,
        field_name=settings.field,
    )
    body = curve.to_frame().to_csv(index=False, na_rep="", float_format="%.12g")
    try:
        return f"{body}# visibility={visibility(curve):.12g}\n"
    except ExperimentError as e:
        logger.warning(f"No visibility for this scan: {e}")
        return f"{body}# visibility=\n"


def cmd_chsh(settings: RunConfig) -> Optional[str]:
    program = _program(settings)
    if program is None:
        return None
    return chsh(program, angles=settings.angles, sampling=settings.sampling).to_csv()


def _emit(text: str, out: Optional[str]) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8", newline="") as file:
            file.write(text)
        logger.info(f"Wrote {out}")


def _settings(args: argparse.Namespace) -> RunConfig:
    return RunConfig(
        command=args.command,
        path=args.path,
        out=args.out,
        mode=getattr(args, "mode", "exact"),
        seed=getattr(args, "seed", None),
        rate=getattr(args, "rate", float(config["pair_rate"])),
        duration=getattr(args, "duration", float(config["duration_s"])),
        element=getattr(args, "element", None),
        field=getattr(args, "field", "tau_fs"),
        start=getattr(args, "start", 0.0),
        stop=getattr(args, "stop", 0.0),
        step=getattr(args, "step", 0.0),
        kind=getattr(args, "kind", "hom"),
        pair=getattr(args, "pair", None),
        angles=getattr(args, "angles", None),
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    level = {0: config["log_level"], 1: "INFO"}.get(args.verbose, "DEBUG")
    logging.basicConfig(
        level=level,
        format="%(asctime)s - %(levelname)s - %(message)s",
        stream=sys.stderr,
        force=True,
    )

    try:
        settings = _settings(args)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        sys.stderr.write(f"qoptsim: error: {e}\n")
        return EXIT_USAGE

    try:
        if settings.command == "validate":
            return cmd_validate(settings)
        handler = {"run": cmd_run, "scan": cmd_scan, "chsh": cmd_chsh}[settings.command]
        text = handler(settings)
        if text is None:
            return EXIT_DOMAIN
        _emit(text, settings.out)
        return EXIT_OK
    except OSError as e:
        logger.error(f"I/O error: {e}")
        sys.stderr.write(f"qoptsim: {e}\n")
        return EXIT_USAGE
    except OpticsError as e:
        logger.error(f"{settings.command} failed: {e}")
        sys.stderr.write(f"qoptsim: {e}\n")
        return EXIT_DOMAIN
