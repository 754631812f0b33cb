"""
Experiments module for qoptsim.

This module drives a compiled ElementProgram through the measurement campaigns:
- Exact coincidence tables and post-selection on one photon per site
- Poissonian counting statistics for a given pair rate and duration
- Delay scans for HOM dips and phase fringes, with visibility estimators
- Polarization correlations and the CHSH Bell parameter

Statistics
==========

1. COUNTS:
   Every outcome count is drawn independently from a Poisson distribution
   with mean P * pair_rate * duration. Scan points and CHSH settings draw from
   generators seeded with (seed, index), so results do not depend on the
   order in which points are evaluated.

2. CORRELATIONS:
   E = (N++ + N-- - N+- - N-+) / (N++ + N-- + N+- + N-+). First-order Poisson
   propagation gives dE**2 = 4 * (N++ + N--) * (N+- + N-+) / N**3, which is
   (1 - E**2) / N.

3. BELL PARAMETER:
   Settings are (a, b), (a, b'), (a', b), (a', b') and
   S = |E(a, b) - E(a, b') + E(a', b) + E(a', b')|. Analysis angles are
   polarization angles; the half-wave plates are set to half of them.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .circuit import ElementProgram
from .config import config
from .errors import ExperimentError
from .optics import (
    DISCARD,
    LOST,
    Delay,
    HalfWavePlate,
    Mode,
    Outcome,
    Polarization,
    TwoPhotonState,
    evolve,
    initial_state,
    outcome_distribution,
)

logger = logging.getLogger(__name__)

_POL_INDEX = {Polarization.H: 0, Polarization.V: 1}


def _key(first: str, second: str) -> Outcome:
    return (first, second) if first <= second else (second, first)


@dataclass(frozen=True)
class Sampling:
    """
    Counting-statistics settings for sampled mode.

    Parameters
    ----------
    pair_rate : float
        Detected photon pairs per second.
    duration : float
        Integration time per table in seconds.
    seed : int
        Master seed; per-point generators derive from it.
    """

    pair_rate: float
    duration: float
    seed: int

    def __post_init__(self) -> None:
        if not (math.isfinite(self.pair_rate) and self.pair_rate > 0):
            raise ExperimentError(f"pair rate must be positive, got {self.pair_rate}")
        if not (math.isfinite(self.duration) and self.duration > 0):
            raise ExperimentError(f"duration must be positive, got {self.duration}")
        if self.seed < 0:
            raise ExperimentError(f"seed must be non-negative, got {self.seed}")

    @property
    def expected_pairs(self) -> float:
        return self.pair_rate * self.duration

    def derived(self, index: int) -> "Sampling":
        """Sampling for the ``index``-th point of a scan or CHSH campaign."""
        state = np.random.SeedSequence([self.seed, index]).generate_state(1)
        return replace(self, seed=int(state[0]))


@dataclass
class CoincidenceTable:
    """
    Outcome probabilities for one program, optionally with sampled counts.

    ``probabilities`` covers every outcome, keyed by sorted detector-name
    pairs: declared coincidences, bunched clicks (same name twice), events
    with a photon in a discard port and the ``LOST`` entry.
    """

    probabilities: Dict[Outcome, float]
    pairs: Tuple[Outcome, ...] = ()
    counts: Optional[Dict[Outcome, int]] = None
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def sampled(self) -> bool:
        return self.counts is not None

    def probability(self, first: str, second: str) -> float:
        return self.probabilities.get(_key(first, second), 0.0)

    def count(self, first: str, second: str) -> int:
        if self.counts is None:
            raise ExperimentError("table has no sampled counts")
        return self.counts.get(_key(first, second), 0)

    def value(self, first: str, second: str) -> float:
        """Count in sampled mode, probability otherwise."""
        if self.counts is not None:
            return float(self.count(first, second))
        return self.probability(first, second)

    def total_probability(self) -> float:
        return float(sum(self.probabilities.values()))

    def kind(self, outcome: Outcome) -> str:
        if outcome == LOST:
            return "lost"
        if DISCARD in outcome:
            return "discard"
        if outcome[0] == outcome[1]:
            return "bunched"
        if outcome in self.pairs:
            return "coincidence"
        return "pair"

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for outcome in sorted(self.probabilities, key=lambda k: (k == LOST, k)):
            rows.append(
                {
                    "det1": outcome[0],
                    "det2": outcome[1],
                    "kind": self.kind(outcome),
                    "p": self.probabilities[outcome],
                    "n": None if self.counts is None else self.counts.get(outcome, 0),
                }
            )
        return pd.DataFrame(rows, columns=["det1", "det2", "kind", "p", "n"])

    def to_csv(self) -> str:
        return str(self.to_frame().to_csv(index=False, na_rep="", float_format="%.12g"))


def final_state(program: ElementProgram) -> TwoPhotonState:
    """Evolve the program's photons through all of its elements."""
    return evolve(initial_state(program.photons), program.elements)


def run_exact(program: ElementProgram) -> CoincidenceTable:
    """
    Exact outcome probabilities for a compiled program.

    Declared coincidence pairs are always present, with probability 0 when
    the circuit never produces them.
    """
    logger.info(f"Running {len(program.elements)} elements exactly")
    state = final_state(program)
    probabilities = outcome_distribution(
        state, program.detector_map(), program.discards
    )
    for pair in program.coincidences:
        probabilities.setdefault(pair, 0.0)
    total = sum(probabilities.values())
    if abs(total - 1.0) > config["tolerance"] * 10:
        logger.warning(f"Outcome probabilities sum to {total!r}")
    return CoincidenceTable(
        probabilities=probabilities,
        pairs=program.coincidences,
        metadata={"mode": "exact"},
    )


def sample_counts(
    table: CoincidenceTable,
    pair_rate: Optional[float] = None,
    duration: Optional[float] = None,
    seed: int = 0,
) -> CoincidenceTable:
    """
    Draw Poisson counts with mean P * pair_rate * duration for every outcome.

    Outcomes are drawn in sorted order from ``np.random.default_rng(seed)``,
    so a fixed seed reproduces the counts exactly.
    """
    sampling = Sampling(
        float(config["pair_rate"] if pair_rate is None else pair_rate),
        float(config["duration_s"] if duration is None else duration),
        seed,
    )
    outcomes = sorted(table.probabilities)
    means = np.array([table.probabilities[k] for k in outcomes]) * sampling.expected_pairs
    rng = np.random.default_rng(sampling.seed)
    drawn = rng.poisson(np.clip(means, 0.0, None))
    counts = {k: int(n) for k, n in zip(outcomes, drawn)}
    logger.debug(f"Sampled {sum(counts.values())} events with seed {sampling.seed}")
    metadata = dict(table.metadata)
    metadata.update(
        mode="sampled",
        seed=sampling.seed,
        pair_rate=sampling.pair_rate,
        duration_s=sampling.duration,
        singles_rate=float(config["singles_rate"]),
    )
    return CoincidenceTable(dict(table.probabilities), table.pairs, counts, metadata)


def _sites(site_a: Sequence[str], site_b: Sequence[str]) -> None:
    if not site_a or not site_b:
        raise ExperimentError("both sites need at least one detector")
    shared = set(site_a) & set(site_b)
    if shared:
        raise ExperimentError(f"detectors {sorted(shared)} belong to both sites")


def postselect_pairs(
    source: Union[CoincidenceTable, TwoPhotonState],
    site_a: Sequence[str],
    site_b: Sequence[str],
    detectors: Optional[Mapping[Mode, str]] = None,
    discards: Sequence[str] = (),
) -> Tuple[Dict[Tuple[str, str], float], float]:
    """
    Keep only events with exactly one photon at each site.

    Returns the conditional distribution keyed by (site A detector, site B
    detector) and the success probability. A state needs ``detectors``.
    """
    _sites(site_a, site_b)
    if isinstance(source, TwoPhotonState):
        if detectors is None:
            raise ExperimentError("post-selecting a state needs a detector map")
        probabilities = outcome_distribution(source, detectors, discards)
    else:
        probabilities = source.probabilities
    joint = {
        (a, b): probabilities.get(_key(a, b), 0.0) for a in site_a for b in site_b
    }
    success = float(sum(joint.values()))
    if success <= 0.0:
        logger.warning("No events with one photon per site")
        return {k: 0.0 for k in joint}, 0.0
    return {k: p / success for k, p in joint.items()}, success


def site_density_matrix(
    state: TwoPhotonState, site_a: str, site_b: str
) -> Tuple[np.ndarray, float]:
    """
    Post-selected two-site polarization density matrix.

    Only terms with one photon on spatial label ``site_a`` and one on
    ``site_b`` contribute; internal labels are traced out. Returns the
    normalized 4x4 matrix in the basis HH, HV, VH, VV (site A first) and the
    success probability.
    """
    if site_a == site_b:
        raise ExperimentError("sites must be different spatial labels")
    amplitudes: Dict[Tuple[int, int], np.ndarray] = {}
    for op1, op2, c in state.monomials():
        spatial = (op1[0].spatial, op2[0].spatial)
        if spatial == (site_a, site_b):
            a, b = op1, op2
        elif spatial == (site_b, site_a):
            a, b = op2, op1
        else:
            continue
        vector = amplitudes.setdefault((a[1], b[1]), np.zeros(4, dtype=complex))
        vector[2 * _POL_INDEX[a[0].pol] + _POL_INDEX[b[0].pol]] += c
    rho = np.zeros((4, 4), dtype=complex)
    for vector in amplitudes.values():
        rho += np.outer(vector, vector.conj())
    success = float(np.trace(rho).real)
    if success <= 0.0:
        raise ExperimentError(f"no amplitude with one photon on each of {site_a}, {site_b}")
    return rho / success, success


def bell_state(phi: float = math.pi) -> np.ndarray:
    """(|HV> + exp(i*phi)|VH>)/sqrt(2); phi = pi is Psi-, phi = 0 is Psi+."""
    vector = np.zeros(4, dtype=complex)
    vector[1] = 1.0
    vector[2] = np.exp(1j * phi)
    return vector / math.sqrt(2.0)


def fidelity(rho: np.ndarray, target: np.ndarray) -> float:
    """Fidelity <psi|rho|psi> of a density matrix with a pure target state."""
    return float(np.real(np.vdot(target, rho @ target)))


@dataclass
class ScanCurve:
    """Tables along a strictly monotone grid of one element parameter."""

    element: str
    field: str
    values: np.ndarray
    tables: List[CoincidenceTable]
    observable: Outcome
    kind: str = "hom"
    period_fs: Optional[float] = None

    def __post_init__(self) -> None:
        if len(self.values) != len(self.tables):
            raise ExperimentError("scan values and tables differ in length")

    @property
    def sampled(self) -> bool:
        return bool(self.tables) and self.tables[0].sampled

    def probabilities(self, pair: Optional[Outcome] = None) -> np.ndarray:
        first, second = pair or self.observable
        return np.array([t.probability(first, second) for t in self.tables])

    def counts(self, pair: Optional[Outcome] = None) -> np.ndarray:
        first, second = pair or self.observable
        return np.array([t.count(first, second) for t in self.tables])

    def signal(self) -> np.ndarray:
        """Observable counts in sampled mode, probabilities otherwise."""
        return self.counts() if self.sampled else self.probabilities()

    def to_frame(self) -> pd.DataFrame:
        pairs = list(self.tables[0].pairs) if self.tables else []
        if _key(*self.observable) not in pairs:
            pairs.insert(0, _key(*self.observable))
        frame = pd.DataFrame({"param": self.values})
        for first, second in pairs:
            column = f"{first}_{second}"
            frame[f"{column}_p"] = self.probabilities((first, second))
            if self.sampled:
                frame[f"{column}_n"] = self.counts((first, second))
            else:
                frame[f"{column}_n"] = None
        frame["loss_p"] = [t.probabilities.get(LOST, 0.0) for t in self.tables]
        return frame


def _grid(values: Sequence[float]) -> np.ndarray:
    grid = np.asarray(values, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ExperimentError("scan grid must be a non-empty sequence")
    if not np.all(np.isfinite(grid)):
        raise ExperimentError("scan grid must be finite")
    steps = np.diff(grid)
    if not (np.all(steps > 0) or np.all(steps < 0)):
        raise ExperimentError("scan grid must be strictly monotone")
    return grid


def _delay_scan(
    program: ElementProgram,
    element: str,
    values: Sequence[float],
    kind: str,
    pair: Optional[Sequence[str]],
    sampling: Optional[Sampling],
    field_name: str,
) -> ScanCurve:
    target = program.element(element)
    if not isinstance(target, Delay):
        raise ExperimentError(
            f"{element} is a {type(target).__name__}, {kind} scans need a Delay"
        )
    grid = _grid(values)
    observable_pair = config[f"{kind}_pair"] if pair is None else pair
    observable = (str(observable_pair[0]), str(observable_pair[1]))
    logger.info(
        f"Starting {kind} scan of {element}.{field_name} over {grid.size} points "
        f"[{grid[0]}, {grid[-1]}]"
    )
    tables = []
    for index, value in enumerate(grid):
        table = run_exact(program.with_parameter(element, field_name, float(value)))
        if sampling is not None:
            point = sampling.derived(index)
            table = sample_counts(table, point.pair_rate, point.duration, point.seed)
        tables.append(table)
    return ScanCurve(
        element=element,
        field=field_name,
        values=grid,
        tables=tables,
        observable=observable,
        kind=kind,
        period_fs=program.wavepacket.period if kind == "fringe" else None,
    )


def hom_scan(
    program: ElementProgram,
    element: str,
    values: Sequence[float],
    sampling: Optional[Sampling] = None,
    pair: Optional[Sequence[str]] = None,
    field_name: str = "tau_fs",
) -> ScanCurve:
    """
    Scan a delay line and record a same-site analyzer coincidence.

    The default observable is ``config["hom_pair"]`` (DHA-DVA). Away from the
    dip the curve sits on the plateau; at zero relative delay it drops by the
    factor 1 - |gamma|**2.
    """
    return _delay_scan(program, element, values, "hom", pair, sampling, field_name)


def fringe_scan(
    program: ElementProgram,
    element: str,
    values: Sequence[float],
    sampling: Optional[Sampling] = None,
    pair: Optional[Sequence[str]] = None,
    field_name: str = "tau_fs",
) -> ScanCurve:
    """
    Scan a delay line on a single-site arm and record a cross-site coincidence.

    The default observable is ``config["fringe_pair"]`` (DHA-DVB). The curve
    oscillates with period lambda0/c under an envelope |gamma(tau)|.
    """
    return _delay_scan(program, element, values, "fringe", pair, sampling, field_name)


def correlation_E(
    n_pp: float, n_mm: float, n_pm: float, n_mp: float
) -> Tuple[float, float]:
    """
    Polarization correlation and its Poisson error from four coincidence counts.

    Parameters
    ----------
    n_pp, n_mm, n_pm, n_mp : float
        Counts (or probabilities) for the outcome pairs ++, --, +-, -+.

    Returns
    -------
    (E, dE)
    """
    values = (n_pp, n_mm, n_pm, n_mp)
    if any(not math.isfinite(v) or v < 0 for v in values):
        raise ExperimentError(f"counts must be finite and non-negative, got {values}")
    agree, disagree = n_pp + n_mm, n_pm + n_mp
    total = agree + disagree
    if total <= 0:
        raise ExperimentError("correlation needs a positive total count")
    e_value = (agree - disagree) / total
    e_error = math.sqrt(4.0 * agree * disagree / total**3)
    return e_value, e_error


@dataclass(frozen=True)
class CHSHResult:
    """Four correlation settings and the Bell parameter built from them."""

    angles: Tuple[float, float, float, float]
    settings: Tuple[Tuple[float, float], ...]
    counts: Tuple[Tuple[float, float, float, float], ...]
    correlations: Tuple[float, ...]
    errors: Tuple[float, ...]
    s_value: float
    s_error: float
    sampled: bool = False

    @property
    def sigma_violation(self) -> Optional[float]:
        if not self.sampled or self.s_error <= 0:
            return None
        return (self.s_value - 2.0) / self.s_error

    def to_frame(self) -> pd.DataFrame:
        rows = [
            {
                "thetaA": a,
                "thetaB": b,
                "Npp": n[0],
                "Nmm": n[1],
                "Npm": n[2],
                "Nmp": n[3],
                "E": e,
                "dE": de,
            }
            for (a, b), n, e, de in zip(
                self.settings, self.counts, self.correlations, self.errors
            )
        ]
        return pd.DataFrame(rows)

    def summary_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [{"S": self.s_value, "dS": self.s_error, "sigma": self.sigma_violation}]
        )

    def to_csv(self) -> str:
        body = self.to_frame().to_csv(index=False, float_format="%.12g")
        summary = self.summary_frame().to_csv(
            index=False, na_rep="", float_format="%.12g"
        )
        return str(body) + str(summary)


def chsh_settings(
    angles: Sequence[float],
) -> Tuple[Tuple[float, float], ...]:
    """(a, b), (a, b'), (a', b), (a', b') from (a, a', b, b')."""
    a, a2, b, b2 = angles
    return ((a, b), (a, b2), (a2, b), (a2, b2))


def chsh(
    program: ElementProgram,
    angles: Optional[Sequence[float]] = None,
    sampling: Optional[Sampling] = None,
    analyzers: Optional[Mapping[str, Mapping[str, str]]] = None,
) -> CHSHResult:
    """
    Measure the four CHSH correlations and the Bell parameter S.

    Parameters
    ----------
    program : ElementProgram
        Compiled circuit with one half-wave plate and a two-detector analyzer
        per site.
    angles : sequence of 4 floats
        Analysis angles (a, a', b, b') in degrees; defaults to
        ``config["chsh_angles_deg"]``.
    sampling : Sampling, optional
        Sampled mode when given; the four settings use seeds derived from
        ``sampling.seed``. Exact mode reports conditional probabilities.
    analyzers : mapping, optional
        ``{"alice": {"hwp", "plus", "minus"}, "bob": {...}}``; defaults to
        ``config["analyzers"]``.
    """
    if angles is None:
        angles = config["chsh_angles_deg"]
    chosen = tuple(float(a) for a in angles)
    if len(chosen) != 4 or not all(math.isfinite(a) for a in chosen):
        raise ExperimentError(f"four finite angles required, got {chosen}")
    analyzers = config["analyzers"] if analyzers is None else analyzers
    alice, bob = analyzers["alice"], analyzers["bob"]
    for site in (alice, bob):
        if not isinstance(program.element(site["hwp"]), HalfWavePlate):
            raise ExperimentError(f"{site['hwp']} is not a half-wave plate")
    logger.info(
        f"Starting CHSH at angles {chosen} in "
        f"{'sampled' if sampling else 'exact'} mode"
    )

    counts: List[Tuple[float, ...]] = []
    correlations: List[float] = []
    errors: List[float] = []
    settings = chsh_settings(chosen)
    for index, (theta_a, theta_b) in enumerate(settings):
        configured = program.with_parameter(
            alice["hwp"], "angle_deg", theta_a / 2.0
        ).with_parameter(bob["hwp"], "angle_deg", theta_b / 2.0)
        table = run_exact(configured)
        if sampling is not None:
            point = sampling.derived(index)
            table = sample_counts(table, point.pair_rate, point.duration, point.seed)
        quadruple = tuple(
            table.value(a, b)
            for a, b in (
                (alice["plus"], bob["plus"]),
                (alice["minus"], bob["minus"]),
                (alice["plus"], bob["minus"]),
                (alice["minus"], bob["plus"]),
            )
        )
        if sampling is None:
            success = sum(quadruple)
            if success <= 0:
                raise ExperimentError(f"no cross-site events at ({theta_a}, {theta_b})")
            quadruple = tuple(q / success for q in quadruple)
        e_value, e_error = correlation_E(*quadruple)
        if sampling is None:
            e_error = 0.0
        counts.append(quadruple)
        correlations.append(e_value)
        errors.append(e_error)
        logger.debug(f"E({theta_a}, {theta_b}) = {e_value:.6f} +/- {e_error:.6f}")

    s_value = abs(correlations[0] - correlations[1] + correlations[2] + correlations[3])
    s_error = math.sqrt(sum(e**2 for e in errors))
    result = CHSHResult(
        angles=(chosen[0], chosen[1], chosen[2], chosen[3]),
        settings=settings,
        counts=tuple((q[0], q[1], q[2], q[3]) for q in counts),
        correlations=tuple(correlations),
        errors=tuple(errors),
        s_value=s_value,
        s_error=s_error,
        sampled=sampling is not None,
    )
    logger.info(f"S = {s_value:.6f} +/- {s_error:.6f}")
    return result


def dip_visibility(curve: ScanCurve) -> float:
    """
    (C_plat - C_dip) / C_plat with C_plat the mean of the outer 20% of points
    on each side and C_dip the minimum.
    """
    signal = np.asarray(curve.signal(), dtype=float)
    if signal.size < 5:
        raise ExperimentError(f"dip visibility needs at least 5 points, got {signal.size}")
    edge = max(1, int(0.2 * signal.size))
    plateau = float(np.mean(np.concatenate([signal[:edge], signal[-edge:]])))
    if plateau <= 0.0:
        raise ExperimentError("plateau is zero; the curve has no coincidences")
    return (plateau - float(signal.min())) / plateau


def fringe_visibility(curve: ScanCurve) -> float:
    """(max - min) / (max + min) over one fringe period centred on the scan."""
    values = np.asarray(curve.values, dtype=float)
    signal = np.asarray(curve.signal(), dtype=float)
    if curve.period_fs is not None:
        span = abs(values[-1] - values[0])
        if span < curve.period_fs:
            raise ExperimentError(
                f"scan spans {span} fs, less than one period {curve.period_fs} fs"
            )
        centre = 0.5 * (values[0] + values[-1])
        window = np.abs(values - centre) <= 0.5 * curve.period_fs
        signal = signal[window]
    if signal.size < 2:
        raise ExperimentError("fringe visibility needs at least two points per period")
    high, low = float(signal.max()), float(signal.min())
    if high + low <= 0.0:
        raise ExperimentError("fringe curve is identically zero")
    return (high - low) / (high + low)


def visibility(curve: ScanCurve) -> float:
    """Dip visibility for HOM scans, fringe visibility otherwise."""
    return dip_visibility(curve) if curve.kind == "hom" else fringe_visibility(curve)
