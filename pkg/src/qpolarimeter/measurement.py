"""Analyzer settings, measurement matrices, and coincidence-count simulation.

A measurement setting is one configuration of the two polarization
analyzers.  Each analyzer projects its qubit onto one of three mutually
unbiased bases ({H,V}, {D,A} or {R,L}) and the four detectors (two per
arm) resolve the complete four-element product basis, so one setting
yields four coincidence counts.

Counts are simulated as independent Poisson draws around the Born-rule
expectations plus an unpolarized accidental background (set by the
coincidence-to-accidental ratio) and an additive dark-count background.
All randomness flows from an explicit seed; there is no hidden global RNG.
Concurrent simulations should derive independent seeds with
``numpy.random.SeedSequence(seed).spawn(n)``.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .quantum import DensityMatrix, PureState2Q, stokes_from_density

__all__ = [
    "SINGLE_QUBIT_KETS",
    "BASIS_ELEMENTS",
    "BASIS_NAMES",
    "SingleQubitProjector",
    "MeasurementSetting",
    "MeasurementMatrix",
    "NoiseModel",
    "ExpectedCounts",
    "CountRecord",
    "canonical_settings",
    "build_measurement_matrix",
    "perturb_projectors",
    "expected_counts",
    "simulate_counts",
    "write_count_records",
    "read_count_records",
]

_INV_SQRT2 = 1.0 / np.sqrt(2.0)

#: The six canonical single-qubit polarization kets in the (H, V) ordering.
SINGLE_QUBIT_KETS = {
    "H": np.array([1.0, 0.0], dtype=complex),
    "V": np.array([0.0, 1.0], dtype=complex),
    "D": np.array([_INV_SQRT2, _INV_SQRT2], dtype=complex),
    "A": np.array([_INV_SQRT2, -_INV_SQRT2], dtype=complex),
    "R": np.array([_INV_SQRT2, 1j * _INV_SQRT2], dtype=complex),
    "L": np.array([_INV_SQRT2, -1j * _INV_SQRT2], dtype=complex),
}

#: Complete single-qubit bases by name: each is an orthonormal pair.
BASIS_ELEMENTS = {"HV": ("H", "V"), "DA": ("D", "A"), "RL": ("R", "L")}
BASIS_NAMES = ("HV", "DA", "RL")


@dataclass(frozen=True)
class SingleQubitProjector:
    """One analyzer output port: a labelled normalized single-qubit ket."""

    label: str
    ket: np.ndarray

    def __post_init__(self):
        ket = np.asarray(self.ket, dtype=complex).reshape(2)
        norm = np.linalg.norm(ket)
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"projector ket norm is {norm!r}, expected 1")
        ket = ket.copy()
        ket.flags.writeable = False
        object.__setattr__(self, "ket", ket)

    @classmethod
    def canonical(cls, label: str) -> "SingleQubitProjector":
        if label not in SINGLE_QUBIT_KETS:
            raise ValueError(f"unknown projector label {label!r}; expected one of HVDARL")
        return cls(label, SINGLE_QUBIT_KETS[label])

    def bloch(self) -> np.ndarray:
        """Poincare-sphere unit vector of the ket."""
        a, b = self.ket
        return np.array(
            [2.0 * (a.conjugate() * b).real, 2.0 * (a.conjugate() * b).imag, abs(a) ** 2 - abs(b) ** 2]
        )


@dataclass(frozen=True)
class MeasurementSetting:
    """One analyzer configuration: four two-qubit projectors, one per detector.

    ``basis_pair`` names the single-qubit basis on each arm (e.g. ("HV", "DA")).
    The four projectors are ordered (first x first), (first x second),
    (second x first), (second x second), matching detector pairings.  Canonical
    settings form an orthonormal two-qubit basis; perturbed variants produced
    by :func:`perturb_projectors` may deviate from exact orthonormality, which
    is the point of modeling systematic analyzer error.
    """

    id: int
    basis_pair: tuple[str, str]
    projectors: tuple[PureState2Q, PureState2Q, PureState2Q, PureState2Q]
    outcome_labels: tuple[tuple[str, str], ...]
    dwell: float = 0.08

    def __post_init__(self):
        if len(self.projectors) != 4 or len(self.outcome_labels) != 4:
            raise ValueError("a setting owns exactly 4 projectors and 4 outcome labels")
        if self.dwell < 0:
            raise ValueError("dwell must be nonnegative")

    def gram_matrix(self) -> np.ndarray:
        kets = np.array([p.amplitudes for p in self.projectors])
        return kets.conj() @ kets.T


def _setting_from_bases(setting_id: int, basis1: str, basis2: str, dwell: float) -> MeasurementSetting:
    l1a, l1b = BASIS_ELEMENTS[basis1]
    l2a, l2b = BASIS_ELEMENTS[basis2]
    labels = ((l1a, l2a), (l1a, l2b), (l1b, l2a), (l1b, l2b))
    projectors = tuple(
        PureState2Q.from_kets(SINGLE_QUBIT_KETS[q1], SINGLE_QUBIT_KETS[q2]) for q1, q2 in labels
    )
    return MeasurementSetting(setting_id, (basis1, basis2), projectors, labels, dwell)


def canonical_settings(m: int, dwell: float = 0.08) -> list[MeasurementSetting]:
    """The canonical informationally complete setting list.

    m=9 gives the nine basis pairs {HV, DA, RL} x {HV, DA, RL} in
    lexicographic order (setting 0 is HV x HV with outcomes HH, HV, VH, VV),
    36 distinct projectors in total.  m=36 cycles those same nine bases four
    times (setting k uses basis pair k mod 9), the redundant scheme with
    identical projector content.
    """
    if m not in (9, 36):
        raise ValueError(f"m must be 9 or 36, got {m}")
    base = [
        _setting_from_bases(i, b1, b2, dwell)
        for i, (b1, b2) in enumerate((x, y) for x in BASIS_NAMES for y in BASIS_NAMES)
    ]
    if m == 9:
        return base
    return [replace(base[k % 9], id=k) for k in range(36)]


@dataclass(frozen=True)
class MeasurementMatrix:
    """Stacked Stokes rows, one per projector, for the linear count model.

    Row r is the Stokes vector of projector Pi_r scaled by 1/4, so that
    ``rows @ s`` gives the Born probabilities Tr(rho Pi_r) when ``s`` is the
    flattened Stokes vector of rho.  Rows are grouped in blocks of 4 in
    setting order.
    """

    rows: np.ndarray
    settings: tuple[MeasurementSetting, ...]

    @property
    def row_count(self) -> int:
        return self.rows.shape[0]

    def rows_for(self, setting_ids: Iterable[int]) -> np.ndarray:
        """Row blocks for a sequence of setting ids (repeats allowed)."""
        index = {s.id: i for i, s in enumerate(self.settings)}
        blocks = [self.rows[4 * index[sid] : 4 * index[sid] + 4] for sid in setting_ids]
        return np.vstack(blocks)


def projector_row(projector: PureState2Q) -> np.ndarray:
    """The 16-real Stokes row of a two-qubit projector (scaled by 1/4)."""
    a = projector.amplitudes
    return stokes_from_density(np.outer(a, a.conj())).reshape(16) / 4.0


def build_measurement_matrix(
    settings: Sequence[MeasurementSetting],
    perturbation: Sequence[PureState2Q] | None = None,
) -> MeasurementMatrix:
    """Assemble the measurement matrix for a list of settings.

    ``perturbation`` optionally replaces the projectors row-by-row (length
    4 * len(settings)), e.g. with the rotated projectors of a perturbed
    setting list, while keeping the nominal settings for bookkeeping.
    """
    if not settings:
        raise ValueError("settings must be nonempty")
    if perturbation is None:
        projectors = [p for s in settings for p in s.projectors]
    else:
        projectors = list(perturbation)
        if len(projectors) != 4 * len(settings):
            raise ValueError("perturbation must supply 4 projectors per setting")
    rows = np.array([projector_row(p) for p in projectors])
    return MeasurementMatrix(rows, tuple(settings))


def _tangent_rotation(ket: np.ndarray, angle_rad: float, rng: np.random.Generator) -> np.ndarray:
    """Rotate a single-qubit ket by angle_rad about a random tangent axis.

    The axis is drawn uniformly in the plane perpendicular to the state's
    Poincare vector, so the great-circle deviation equals angle_rad exactly.
    """
    a, b = ket
    n = np.array([2 * (a.conjugate() * b).real, 2 * (a.conjugate() * b).imag, abs(a) ** 2 - abs(b) ** 2])
    # orthonormal frame {e1, e2} spanning the tangent plane at n
    helper = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(n, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(n, e1)
    chi = rng.uniform(0.0, 2.0 * np.pi)
    axis = np.cos(chi) * e1 + np.sin(chi) * e2
    half = angle_rad / 2.0
    pauli_dot = np.array(
        [[axis[2], axis[0] - 1j * axis[1]], [axis[0] + 1j * axis[1], -axis[2]]], dtype=complex
    )
    u = np.cos(half) * np.eye(2) - 1j * np.sin(half) * pauli_dot
    rotated = u @ ket
    return rotated / np.linalg.norm(rotated)


def perturb_projectors(
    settings: Sequence[MeasurementSetting], angle_deg: float, seed
) -> list[MeasurementSetting]:
    """Apply a systematic analyzer error to every projector.

    Each single-qubit factor of each projector is rotated by ``angle_deg``
    on the Poincare sphere about an independently seeded random tangent
    axis, so the mean great-circle deviation over all projectors equals
    ``angle_deg``.  Deterministic given the seed; angle 0 returns the
    settings unchanged.
    """
    if angle_deg < 0:
        raise ValueError("angle_deg must be nonnegative")
    if angle_deg == 0:
        return list(settings)
    rng = np.random.default_rng(seed)
    angle_rad = np.deg2rad(angle_deg)
    out = []
    for s in settings:
        new_projectors = []
        for labels, proj in zip(s.outcome_labels, s.projectors):
            ket1 = _tangent_rotation(np.asarray(SINGLE_QUBIT_KETS[labels[0]]), angle_rad, rng)
            ket2 = _tangent_rotation(np.asarray(SINGLE_QUBIT_KETS[labels[1]]), angle_rad, rng)
            new_projectors.append(PureState2Q.from_kets(ket1, ket2))
        out.append(replace(s, projectors=tuple(new_projectors)))
    return out


@dataclass(frozen=True)
class NoiseModel:
    """Count-model parameters for the simulated source and analyzers.

    pair_rate is the source coincidence pair rate R (pairs/s), attenuated by
    the squared per-arm transmission eta before counting, so the detected
    flux is R * eta**2.  car is the coincidence-to-accidental ratio;
    accidentals are unpolarized and spread uniformly over the four outcomes
    of a setting.  dark_rate (counts/gate/detector) times gate_rate (gates/s)
    gives an additive background per outcome.  The hardware-style defaults
    (dark counts gated at 50 MHz) produce a strong dark background; studies
    that assume accidental-limited noise should set dark_rate to 0.
    """

    pair_rate: float = 1.0e6
    car: float = 3.0
    dark_rate: float = 2.0e-4
    gate_rate: float = 50.0e6
    eta: float = 0.07
    systematic_angle: float = 0.0

    def __post_init__(self):
        if min(self.pair_rate, self.dark_rate, self.gate_rate, self.systematic_angle) < 0:
            raise ValueError("noise parameters must be nonnegative")
        if not self.car > 0:
            raise ValueError("car must be positive (use math.inf for no accidentals)")
        if not 0 < self.eta <= 1:
            raise ValueError("eta must be in (0, 1]")


@dataclass(frozen=True)
class ExpectedCounts:
    """Per-outcome expected count components for one setting and dwell."""

    signal: np.ndarray
    accidental: np.ndarray
    dark: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return self.signal + self.accidental + self.dark

    @property
    def background(self) -> np.ndarray:
        """Accidental plus dark means: what subtraction removes."""
        return self.accidental + self.dark


@dataclass(frozen=True)
class CountRecord:
    """The four coincidence counts observed for one setting over one dwell."""

    setting_id: int
    counts: tuple[int, int, int, int]
    expected_accidentals: tuple[float, float, float, float]
    dwell: float
    timestamp: float = 0.0
    uid: int | None = None

    def __post_init__(self):
        if any(c < 0 or int(c) != c for c in self.counts):
            raise ValueError("counts must be nonnegative integers")
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))
        if any(a < 0 for a in self.expected_accidentals):
            raise ValueError("expected accidentals must be nonnegative")
        object.__setattr__(self, "expected_accidentals", tuple(float(a) for a in self.expected_accidentals))


def expected_counts(
    rho: DensityMatrix, setting: MeasurementSetting, noise: NoiseModel
) -> ExpectedCounts:
    """Expected signal, accidental, and dark counts for one setting.

    signal_r = R * eta**2 * dwell * <Pi_r|rho|Pi_r>; the accidental total is
    signal_total / car, split 1/4 per outcome; dark_r = dark_rate *
    gate_rate * dwell on every outcome.
    """
    m = rho.matrix
    probs = np.array(
        [float(np.real(p.amplitudes.conj() @ m @ p.amplitudes)) for p in setting.projectors]
    )
    probs = np.clip(probs, 0.0, None)
    flux = noise.pair_rate * noise.eta**2 * setting.dwell
    signal = flux * probs
    accidental = np.full(4, signal.sum() / noise.car / 4.0) if np.isfinite(noise.car) else np.zeros(4)
    dark = np.full(4, noise.dark_rate * noise.gate_rate * setting.dwell)
    return ExpectedCounts(signal, accidental, dark)


def simulate_counts(
    rho: DensityMatrix,
    setting: MeasurementSetting,
    noise: NoiseModel,
    seed,
    timestamp: float = 0.0,
    uid: int | None = None,
) -> CountRecord:
    """Draw one CountRecord: independent Poisson counts around the expectations.

    ``seed`` may be an int, a SeedSequence, or an existing Generator (the
    latter for callers that manage their own deterministic stream).
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    exp = expected_counts(rho, setting, noise)
    counts = rng.poisson(exp.total)
    return CountRecord(
        setting_id=setting.id,
        counts=tuple(int(c) for c in counts),
        expected_accidentals=tuple(float(b) for b in exp.background),
        dwell=setting.dwell,
        timestamp=timestamp,
        uid=uid,
    )


# --- count-record files -----------------------------------------------------
#
# Line-delimited format, one record per line:
#   setting_id,label_q1,label_q2,c1,c2,c3,c4,dwell_s,acc1,acc2,acc3,acc4
# labelled by the basis pair of the setting.  Floats are written with repr()
# so that write -> read -> write is bit-exact.

_COUNTS_HEADER = "# qpolarimeter counts v1"


def write_count_records(
    stream: io.TextIOBase,
    records: Sequence[CountRecord],
    settings: Sequence[MeasurementSetting],
    settings_name: str = "canonical-9",
    seed=None,
) -> None:
    by_id = {s.id: s for s in settings}
    stream.write(f"{_COUNTS_HEADER}\n")
    stream.write(f"# settings={settings_name} seed={seed}\n")
    stream.write("setting_id,label_q1,label_q2,c1,c2,c3,c4,dwell_s,acc1,acc2,acc3,acc4\n")
    for r in records:
        basis = by_id[r.setting_id].basis_pair
        cells = [str(r.setting_id), basis[0], basis[1]]
        cells += [str(c) for c in r.counts]
        cells.append(repr(r.dwell))
        cells += [repr(a) for a in r.expected_accidentals]
        stream.write(",".join(cells) + "\n")


def read_count_records(stream: io.TextIOBase) -> tuple[list[CountRecord], dict]:
    """Parse a counts file; returns (records, metadata from the header)."""
    meta: dict = {}
    records: list[CountRecord] = []
    for lineno, raw in enumerate(stream, start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            for token in line.lstrip("# ").split():
                if "=" in token:
                    key, value = token.split("=", 1)
                    meta[key] = value
            continue
        if line.startswith("setting_id"):
            continue
        cells = line.split(",")
        if len(cells) != 12:
            raise ValueError(f"line {lineno}: expected 12 fields, got {len(cells)}")
        try:
            record = CountRecord(
                setting_id=int(cells[0]),
                counts=tuple(int(c) for c in cells[3:7]),
                expected_accidentals=tuple(float(a) for a in cells[8:12]),
                dwell=float(cells[7]),
            )
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from exc
        records.append(record)
    return records, meta
