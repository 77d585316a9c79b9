"""Exact linear algebra for two-qubit polarization states.

Everything in this module is fixed at two qubits (4x4 matrices) in the
computational ordering {HH, HV, VH, VV}, qubit 1 being the signal arm and
qubit 2 the idler arm.  The Pauli expansion convention is

    S[i, j] = Tr(rho . sigma_i (x) sigma_j),   sigma_0 = I,

with the self-inverse reconstruction rho = (1/4) sum_ij S[i, j] sigma_i (x) sigma_j,
so S[0, 0] equals the trace.

All objects are immutable after construction and every function is pure.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "HERMITIAN_TOL",
    "TRACE_TOL",
    "PSD_TOL",
    "PAULI",
    "PAULI_LABELS",
    "KET_HH",
    "KET_HV",
    "KET_VH",
    "KET_VV",
    "BELL_PHI_PLUS",
    "BELL_PHI_MINUS",
    "BELL_PSI_PLUS",
    "BELL_PSI_MINUS",
    "PureState2Q",
    "DensityMatrix",
    "density_from_pure",
    "stokes_from_density",
    "density_from_stokes",
    "fidelity",
    "purity",
    "concurrence",
    "random_pure",
    "random_density",
]

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
PSD_TOL = 1e-9

_I2 = np.eye(2, dtype=complex)
_SX = np.array([[0, 1], [1, 0]], dtype=complex)
_SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
_SZ = np.array([[1, 0], [0, -1]], dtype=complex)

#: Single-qubit Pauli basis, indexed 0..3 = I, X, Y, Z.
PAULI = (_I2, _SX, _SY, _SZ)
PAULI_LABELS = "IXYZ"

# Two-qubit Pauli products sigma_i (x) sigma_j, shape (4, 4, 4, 4):
# first two indices are (i, j), last two the matrix.
_PAULI2 = np.array([[np.kron(PAULI[i], PAULI[j]) for j in range(4)] for i in range(4)])

_YY = np.kron(_SY, _SY)


class PureState2Q:
    """A normalized two-qubit pure state in the {HH, HV, VH, VV} ordering."""

    __slots__ = ("amplitudes",)

    def __init__(self, amplitudes):
        amps = np.asarray(amplitudes, dtype=complex).reshape(4)
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"state vector norm is {norm!r}, expected 1 within 1e-12")
        amps = amps.copy()
        amps.flags.writeable = False
        object.__setattr__(self, "amplitudes", amps)

    def __setattr__(self, name, value):
        raise AttributeError("PureState2Q is immutable")

    @classmethod
    def from_kets(cls, ket1, ket2) -> "PureState2Q":
        """Tensor product of two normalized single-qubit kets."""
        return cls(np.kron(np.asarray(ket1, dtype=complex), np.asarray(ket2, dtype=complex)))

    def overlap(self, other: "PureState2Q") -> complex:
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def __repr__(self) -> str:
        return f"PureState2Q({np.array2string(self.amplitudes, precision=4)})"


KET_HH = PureState2Q([1, 0, 0, 0])
KET_HV = PureState2Q([0, 1, 0, 0])
KET_VH = PureState2Q([0, 0, 1, 0])
KET_VV = PureState2Q([0, 0, 0, 1])
BELL_PHI_PLUS = PureState2Q(np.array([1, 0, 0, 1]) / np.sqrt(2))
BELL_PHI_MINUS = PureState2Q(np.array([1, 0, 0, -1]) / np.sqrt(2))
BELL_PSI_PLUS = PureState2Q(np.array([0, 1, 1, 0]) / np.sqrt(2))
BELL_PSI_MINUS = PureState2Q(np.array([0, 1, -1, 0]) / np.sqrt(2))


class DensityMatrix:
    """A legal two-qubit state: Hermitian, unit trace, positive semidefinite.

    Construction validates all three invariants (Hermiticity to 1e-12,
    trace to 1e-12, smallest eigenvalue >= -1e-9) and the stored matrix is
    read-only.  Use :func:`~qpolarimeter.reconstruction.legalize_psd` to
    coerce a nearly-legal Hermitian matrix into a DensityMatrix.
    """

    __slots__ = ("matrix",)

    def __init__(self, matrix):
        m = np.asarray(matrix, dtype=complex)
        if m.shape != (4, 4):
            raise ValueError(f"expected a 4x4 matrix, got shape {m.shape}")
        herm_err = np.max(np.abs(m - m.conj().T))
        if herm_err > HERMITIAN_TOL:
            raise ValueError(f"matrix is not Hermitian: max |rho - rho^dag| = {herm_err:.3e}")
        trace_err = abs(m.trace() - 1.0)
        if trace_err > TRACE_TOL:
            raise ValueError(f"matrix trace deviates from 1 by {trace_err:.3e}")
        min_eig = float(np.linalg.eigvalsh(m)[0])
        if min_eig < -PSD_TOL:
            raise ValueError(f"matrix is not PSD: min eigenvalue = {min_eig:.3e}")
        m = m.copy()
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    def __setattr__(self, name, value):
        raise AttributeError("DensityMatrix is immutable")

    def __repr__(self) -> str:
        return f"DensityMatrix({np.array2string(self.matrix, precision=4, suppress_small=True)})"


def density_from_pure(psi: PureState2Q) -> DensityMatrix:
    """Rank-1 projector |psi><psi| of a normalized pure state."""
    a = psi.amplitudes
    return DensityMatrix(np.outer(a, a.conj()))


def stokes_from_density(rho: DensityMatrix | np.ndarray) -> np.ndarray:
    """Two-qubit Stokes coefficients S[i, j] = Tr(rho . sigma_i (x) sigma_j).

    Returns a real (4, 4) array.  Accepts a raw Hermitian ndarray as well as
    a DensityMatrix; for a unit-trace input S[0, 0] == 1 and |S[i, j]| <= 1.
    """
    m = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)
    # Tr(rho sigma) = sum_ab rho[a,b] sigma[b,a]
    return np.real(np.einsum("ab,ijba->ij", m, _PAULI2))


def density_from_stokes(s: np.ndarray) -> np.ndarray:
    """Hermitian matrix (1/4) sum_ij S[i, j] sigma_i (x) sigma_j.

    Exact inverse of :func:`stokes_from_density`; trace equals S[0, 0].
    The output is Hermitian but not necessarily PSD (a fitted Stokes vector
    may correspond to an illegal state), so a raw ndarray is returned.
    """
    s = np.asarray(s, dtype=float).reshape(4, 4)
    return np.einsum("ij,ijab->ab", s, _PAULI2) / 4.0


def _sqrtm_psd(m: np.ndarray) -> np.ndarray:
    """Matrix square root of a Hermitian PSD matrix via eigendecomposition.

    Eigenvalues in [-PSD_TOL, 0) are clamped to zero to tolerate
    reconstruction round-off; anything lower is rejected.
    """
    vals, vecs = np.linalg.eigh(m)
    if vals[0] < -PSD_TOL:
        raise ValueError(f"matrix square root of non-PSD input: min eigenvalue = {vals[0]:.3e}")
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.conj().T


def fidelity(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    """Mixed-state fidelity (Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2 in [0, 1].

    Symmetric in its arguments; reduces to <psi|rho|psi> when sigma is the
    pure state |psi><psi|.  Eigenvalues of the inner product below the
    relative round-off floor are zeroed before the square root, otherwise
    their noise (~sqrt(eps)) would dominate rank-deficient cases.
    """
    a = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)
    b = sigma.matrix if isinstance(sigma, DensityMatrix) else np.asarray(sigma, dtype=complex)
    sqrt_a = _sqrtm_psd(a)
    vals = np.linalg.eigvalsh(sqrt_a @ b @ sqrt_a)
    if vals[0] < -PSD_TOL:
        raise ValueError(f"fidelity of non-PSD input: inner eigenvalue {vals[0]:.3e}")
    vals = np.clip(vals, 0.0, None)
    if vals[-1] > 0.0:
        vals[vals < 1e-13 * vals[-1]] = 0.0
    f = float(np.sum(np.sqrt(vals))) ** 2
    return min(max(f, 0.0), 1.0)


def purity(rho: DensityMatrix) -> float:
    """Tr(rho^2); 0.25 for the maximally mixed state, 1 for pure states."""
    m = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)
    return float(np.real(np.einsum("ab,ba->", m, m)))


def concurrence(rho: DensityMatrix) -> float:
    """Wootters concurrence max(0, l1 - l2 - l3 - l4) from the spin-flipped spectrum.

    The l_k are the decreasing square roots of the eigenvalues of
    rho (Y (x) Y) rho* (Y (x) Y); 0 for separable states, 1 for Bell states.
    """
    m = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)
    r = m @ _YY @ m.conj() @ _YY
    vals = np.linalg.eigvals(r)
    lam = np.sqrt(np.clip(np.real(vals), 0.0, None))
    lam[::-1].sort()
    return max(0.0, float(lam[0] - lam[1] - lam[2] - lam[3]))


def random_pure(rng: np.random.Generator) -> PureState2Q:
    """Haar-random two-qubit pure state."""
    v = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    return PureState2Q(v / np.linalg.norm(v))


def random_density(rng: np.random.Generator, rank: int = 4) -> DensityMatrix:
    """Random full- or reduced-rank state from the Ginibre ensemble."""
    if not 1 <= rank <= 4:
        raise ValueError("rank must be between 1 and 4")
    g = rng.standard_normal((4, rank)) + 1j * rng.standard_normal((4, rank))
    m = g @ g.conj().T
    m /= np.real(m.trace())
    # exact Hermitian symmetrization so the constructor tolerance is met
    m = (m + m.conj().T) / 2.0
    return DensityMatrix(m)
