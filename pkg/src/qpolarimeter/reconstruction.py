"""Density-matrix reconstruction from coincidence counts.

Two estimators over the same linear count model:

* :func:`lls_reconstruct` - the fast path.  Counts are converted to
  per-setting probabilities (optionally accidental-subtracted), fit by
  weighted linear least squares in Stokes space, and legalized by clipping
  negative eigenvalues and renormalizing the spectrum.
* :func:`ml_reconstruct` - the reference estimator.  Maximizes the Poisson
  log-likelihood over a Cholesky-parametrized state (legal by construction),
  warm-started from the least-squares solution.

Both are pure functions of their inputs and safe to run concurrently.
Solver tolerances and iteration caps are keyword arguments, not constants.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from .measurement import CountRecord, MeasurementMatrix
from .quantum import PAULI_LABELS, DensityMatrix, density_from_stokes, stokes_from_density

__all__ = [
    "RankDeficientError",
    "ReconstructionReport",
    "weights_from_counts",
    "legalize_psd",
    "lls_reconstruct",
    "ml_reconstruct",
    "unconstrained_directions",
]


class RankDeficientError(ValueError):
    """The supplied rows do not constrain all 16 Stokes directions."""

    def __init__(self, missing: list[str]):
        self.missing = missing
        super().__init__(
            "measurement matrix is rank deficient; unconstrained Stokes directions: "
            + ", ".join(missing)
        )


@dataclass(frozen=True)
class ReconstructionReport:
    """One reconstruction result with its diagnostics.

    raw_stokes is the fitted Stokes vector before legalization;
    truncated_mass the total negative eigenvalue mass clipped away;
    residual the weighted RMS misfit of the linear system; solve_time the
    wall-clock analysis time in seconds.
    """

    rho: DensityMatrix
    raw_stokes: np.ndarray
    truncated_mass: float
    residual: float
    solve_time: float
    method: str
    flags: tuple[str, ...] = ()


def weights_from_counts(records: Sequence[CountRecord]) -> np.ndarray:
    """Row weights 1/sqrt(max(C, 1)): inverse Gaussian widths of the counts.

    The floor at one count keeps zero-count rows finite and the system
    well posed.
    """
    if not records:
        raise ValueError("records must be nonempty")
    counts = np.array([c for r in records for c in r.counts], dtype=float)
    return 1.0 / np.sqrt(np.maximum(counts, 1.0))


def unconstrained_directions(rows: np.ndarray, tol: float = 1e-9) -> list[str]:
    """Pauli labels of Stokes directions in the (near-)null space of rows."""
    _, svals, vt = np.linalg.svd(rows)
    labels = []
    cutoff = tol * max(svals[0], 1.0)
    for k in range(16):
        if k >= len(svals) or svals[k] <= cutoff:
            v = np.abs(vt[k])
            parts = [
                PAULI_LABELS[i // 4] + PAULI_LABELS[i % 4]
                for i in np.argsort(v)[::-1]
                if v[i] > 0.3
            ]
            labels.append(parts[0] if parts else "unresolved")
    return sorted(set(labels))


def _clip_spectrum(h: np.ndarray) -> tuple[np.ndarray, float]:
    """Clip negative eigenvalues, renormalize the spectrum to sum 1."""
    herm_err = np.max(np.abs(h - h.conj().T))
    if herm_err > 1e-9:
        raise ValueError(f"legalize_psd expects a Hermitian matrix; asymmetry {herm_err:.3e}")
    vals, vecs = np.linalg.eigh(h)
    clipped = np.clip(vals, 0.0, None)
    positive_mass = clipped.sum()
    if positive_mass <= 0.0:
        raise ValueError("all eigenvalues are nonpositive; data too degenerate to legalize")
    spectrum = clipped / positive_mass
    out = (vecs * spectrum) @ vecs.conj().T
    out = (out + out.conj().T) / 2.0
    truncated = float(-vals[vals < 0].sum())
    return out, truncated


def legalize_psd(h: np.ndarray) -> DensityMatrix:
    """Nearest-in-spirit legal state: eigenvalue truncation plus renormalization.

    Eigenvectors are kept; negative eigenvalues are clipped to zero and the
    remaining spectrum rescaled to unit sum.  A PSD unit-trace input passes
    through unchanged to 1e-12.
    """
    out, _ = _clip_spectrum(np.asarray(h, dtype=complex))
    return DensityMatrix(out)


def _assemble(
    matrix: MeasurementMatrix,
    records: Sequence[CountRecord],
    subtract_accidentals: bool,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, list[str]]:
    """Rows, raw counts, and background means aligned with the records."""
    if not records:
        raise ValueError("records must be nonempty")
    rows = matrix.rows_for(r.setting_id for r in records)
    counts = np.array([c for r in records for c in r.counts], dtype=float)
    background = np.array([a for r in records for a in r.expected_accidentals])
    flags: list[str] = []
    if subtract_accidentals and np.any(counts - background < 0):
        flags.append("clamped_negative_counts")
    return rows, counts, background, flags


def _check_rank(rows: np.ndarray) -> None:
    if np.linalg.matrix_rank(rows, tol=1e-9 * max(np.abs(rows).max(), 1.0)) < 16:
        raise RankDeficientError(unconstrained_directions(rows))


def lls_reconstruct(
    matrix: MeasurementMatrix,
    records: Sequence[CountRecord],
    subtract_accidentals: bool = True,
    normalize_per_setting: bool = True,
) -> ReconstructionReport:
    """Weighted linear least-squares reconstruction with eigenvalue truncation.

    Solves w A s = w b for the Stokes vector s, where each row of A is a
    projector's Stokes row and b holds the measured data: per-setting
    probabilities by default (counts minus expected accidentals when
    subtraction is on, divided by the setting's post-subtraction total), or
    raw counts with an implicit common intensity when
    ``normalize_per_setting`` is off.  The fitted Stokes vector is mapped to
    a Hermitian matrix and legalized by spectrum truncation.  Deterministic;
    raises :class:`RankDeficientError` if the rows do not span Stokes space.
    """
    start = time.perf_counter()
    rows, counts, background, flags = _assemble(matrix, records, subtract_accidentals)
    _check_rank(rows)
    data = np.clip(counts - background, 0.0, None) if subtract_accidentals else counts
    weights = 1.0 / np.sqrt(np.maximum(counts, 1.0))

    if normalize_per_setting:
        blocks = data.reshape(-1, 4)
        totals = blocks.sum(axis=1)
        if np.any(totals <= 0):
            flags.append("empty_setting")
            totals = np.maximum(totals, 1.0)
        b = (blocks / totals[:, None]).reshape(-1)
    else:
        b = data

    solution, _, rank, _ = np.linalg.lstsq(weights[:, None] * rows, weights * b, rcond=None)
    if rank < 16:
        raise RankDeficientError(unconstrained_directions(weights[:, None] * rows))
    residual = float(np.sqrt(np.mean((weights * (rows @ solution - b)) ** 2)))

    stokes = solution.reshape(4, 4)
    if not normalize_per_setting:
        # the fitted S[0,0] is the implicit per-setting intensity
        if stokes[0, 0] <= 0:
            raise ValueError("fitted intensity is nonpositive; data too degenerate")
        stokes = stokes / stokes[0, 0]
    legal, truncated = _clip_spectrum(density_from_stokes(stokes))
    rho = DensityMatrix(legal)
    return ReconstructionReport(
        rho=rho,
        raw_stokes=stokes,
        truncated_mass=truncated,
        residual=residual,
        solve_time=time.perf_counter() - start,
        method="LLS",
        flags=tuple(flags),
    )


# --- maximum likelihood -------------------------------------------------------

# lower-triangle parameter layout: 4 real diagonal entries then (re, im)
# pairs for the strictly-lower entries in this order
_LOWER_INDICES = ((1, 0), (2, 0), (2, 1), (3, 0), (3, 1), (3, 2))


def _t_from_params(t: np.ndarray) -> np.ndarray:
    m = np.zeros((4, 4), dtype=complex)
    m[np.diag_indices(4)] = t[:4]
    for k, (r, c) in enumerate(_LOWER_INDICES):
        m[r, c] = t[4 + 2 * k] + 1j * t[5 + 2 * k]
    return m


def _params_from_t(m: np.ndarray) -> np.ndarray:
    t = np.zeros(16)
    t[:4] = np.real(np.diag(m))
    for k, (r, c) in enumerate(_LOWER_INDICES):
        t[4 + 2 * k] = m[r, c].real
        t[5 + 2 * k] = m[r, c].imag
    return t


def _rho_from_t(tmat: np.ndarray) -> tuple[np.ndarray, float]:
    a = tmat.conj().T @ tmat
    norm = float(np.real(a.trace()))
    return a / norm, norm


def poisson_nll_and_grad(
    t: np.ndarray,
    projectors: np.ndarray,
    data: np.ndarray,
    offsets: np.ndarray,
    intensities: np.ndarray,
) -> tuple[float, np.ndarray]:
    """Poisson deviance per detected count and its analytic gradient.

    The model count for row r is mu_r = I_r * Tr(rho(t) Pi_r) + offset_r,
    with rho(t) = T^dag T / Tr(T^dag T).  The value is the negative
    log-likelihood shifted by its per-row floor (so it is ~0 at a perfect
    fit, which keeps the optimizer's relative-reduction test meaningful)
    and scaled by the total count.  Returns (value, d/dt) with the gradient
    derived in closed form (verified against finite differences in the test
    suite).
    """
    tmat = _t_from_params(t)
    rho, norm = _rho_from_t(tmat)
    probs = np.real(np.einsum("rab,ba->r", projectors, rho))
    mu = np.maximum(intensities * probs + offsets, 1e-12)
    scale = max(float(data.sum()), 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        entropy = np.where(data > 0, data * np.log(data / mu), 0.0)
    value = float(np.sum(mu - data + entropy)) / scale

    coeff = intensities * (1.0 - data / mu) / scale
    g = np.einsum("r,rab->ab", coeff, projectors)
    # d rho = (dA - rho Tr(dA)) / norm with A = T^dag T
    b = tmat @ (g - np.real(np.einsum("ab,ba->", g, rho)) * np.eye(4)) / norm
    grad = np.zeros(16)
    grad[:4] = 2.0 * np.real(np.diag(b))
    for k, (r, c) in enumerate(_LOWER_INDICES):
        grad[4 + 2 * k] = 2.0 * b[r, c].real
        grad[5 + 2 * k] = 2.0 * b[r, c].imag
    return value, grad


def ml_reconstruct(
    matrix: MeasurementMatrix,
    records: Sequence[CountRecord],
    subtract_accidentals: bool = True,
    normalize_per_setting: bool = True,
    gradient_tol: float = 1e-7,
    max_iterations: int = 10_000,
) -> ReconstructionReport:
    """Poisson maximum-likelihood reconstruction (reference estimator).

    The state is parametrized as rho = T^dag T / Tr(T^dag T) with T a
    16-real-parameter triangular factor, so every iterate is legal.  With
    accidental subtraction on, corrected counts are fit against mu = I*p;
    with it off, raw counts are fit against mu = I*p + accidental mean.
    Optimization starts from the least-squares solution and stops when the
    max-norm of the (per-row normalized) gradient drops below
    ``gradient_tol`` or after ``max_iterations``; a non-converged result is
    flagged and the best iterate returned.
    """
    start = time.perf_counter()
    rows, counts, background, flags = _assemble(matrix, records, subtract_accidentals)
    _check_rank(rows)

    block_counts = counts.reshape(-1, 4)
    block_background = background.reshape(-1, 4)
    setting_intensity = np.maximum(
        block_counts.sum(axis=1) - block_background.sum(axis=1), 1.0
    )
    intensities = np.repeat(setting_intensity, 4)
    if subtract_accidentals:
        data = np.clip(counts - background, 0.0, None)
        offsets = np.zeros_like(background)
    else:
        data = counts
        offsets = background

    # projector matrices recovered from their Stokes rows
    projectors = np.array([density_from_stokes(4.0 * row) for row in rows])

    lls = lls_reconstruct(
        matrix, records, subtract_accidentals=subtract_accidentals,
        normalize_per_setting=normalize_per_setting,
    )
    rho0 = lls.rho.matrix + 1e-6 * np.eye(4)
    rho0 /= np.real(rho0.trace())
    t0 = _params_from_t(np.linalg.cholesky(rho0).conj().T)

    result = minimize(
        poisson_nll_and_grad,
        t0,
        args=(projectors, data, offsets, intensities),
        jac=True,
        method="L-BFGS-B",
        options={"maxiter": max_iterations, "gtol": gradient_tol, "ftol": 1e-15},
    )
    if np.max(np.abs(result.jac)) > gradient_tol:
        flags.append("ml_not_converged")

    rho_m, _ = _rho_from_t(_t_from_params(result.x))
    rho_m = (rho_m + rho_m.conj().T) / 2.0
    rho = DensityMatrix(rho_m)
    stokes = stokes_from_density(rho)

    weights = 1.0 / np.sqrt(np.maximum(counts, 1.0))
    if normalize_per_setting:
        blocks = (data if subtract_accidentals else np.clip(counts - background, 0.0, None)).reshape(-1, 4)
        totals = np.maximum(blocks.sum(axis=1), 1.0)
        b = (blocks / totals[:, None]).reshape(-1)
        residual = float(np.sqrt(np.mean((weights * (rows @ stokes.reshape(16) - b)) ** 2)))
    else:
        residual = float(np.sqrt(np.mean((weights * (intensities * (rows @ stokes.reshape(16)) + offsets - data)) ** 2)))

    return ReconstructionReport(
        rho=rho,
        raw_stokes=stokes,
        truncated_mass=0.0,
        residual=residual,
        solve_time=time.perf_counter() - start,
        method="ML",
        flags=tuple(flags),
    )
