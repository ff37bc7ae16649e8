"""Truncated Hilbert space, operators, and parameters of a JPM-cavity system.

A Josephson photomultiplier (JPM) monitoring a single cavity mode is modelled
on the joint space ``cavity (N_c Fock states) x detector (3 levels)``.  The
detector levels are the two metastable junction states ``|0>_d`` and ``|1>_d``
plus an absorbing level ``|m>_d`` that collects every incoherent tunneling
event (the observable "click").

Conventions
-----------
- hbar = 1; all rates are angular frequencies.  The default unit system sets
  the excited-state tunneling rate ``gamma1 = 1`` and expresses every other
  rate as a ratio to it.  Infinite T1/T2 are encoded exactly as
  ``t1_inv = 0`` / ``t2_inv = 0``.
- Joint ordering: the detector is the fast (inner) index, so the flat index
  of ``|n>_c |d>_d`` is ``3*n + d``.  This keeps the cavity blocks of a joint
  matrix contiguous, which makes outcome conditioning a plain slice.
- All containers here are immutable after construction (backing arrays are
  marked read-only); every operation is a pure function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import TruncationError

DETECTOR_LEVELS = 3
DET_GROUND, DET_EXCITED, DET_MEASURED = 0, 1, 2

#: Default tolerances for density-matrix validation.
HERMITICITY_TOL = 1e-12
PSD_TOL = 1e-10
TRACE_TOL = 1e-10


@dataclass(frozen=True)
class ModelParams:
    """Physical rates and truncation defining one JPM-cavity instance.

    Parameters
    ----------
    g : float
        Cavity-detector coupling rate (exchange interaction strength).
    gamma0 : float
        Dark-count rate: incoherent tunneling out of the detector ground
        state, producing a click without removing a cavity photon.
    gamma1 : float
        Tunneling rate out of the detector excited state (a true detection).
    t1_inv : float
        Detector energy-relaxation rate 1/T1 (0 means infinite T1).
    t2_inv : float
        Detector pure-dephasing rate 1/T2 (0 means infinite T2).
    n_cutoff : int
        Cavity Fock-space truncation N_c (number of kept Fock states).
    """

    g: float = 1.0
    gamma0: float = 0.0
    gamma1: float = 1.0
    t1_inv: float = 0.0
    t2_inv: float = 0.0
    n_cutoff: int = 10

    def __post_init__(self):
        for name in ("g", "gamma0", "gamma1", "t1_inv", "t2_inv"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {value}")
        if self.n_cutoff < 2:
            raise ValueError(f"n_cutoff must be >= 2, got {self.n_cutoff}")

    @property
    def joint_dim(self) -> int:
        """Dimension of the joint cavity-detector space, D = 3 N_c."""
        return DETECTOR_LEVELS * self.n_cutoff


@dataclass(frozen=True)
class JointIndex:
    """Composite index of the joint basis state ``|n>_c |d>_d``."""

    n: int
    d: int

    def __post_init__(self):
        if self.n < 0:
            raise ValueError("cavity index must be >= 0")
        if not 0 <= self.d < DETECTOR_LEVELS:
            raise ValueError("detector index must be 0, 1 or 2")

    @property
    def flat(self) -> int:
        return DETECTOR_LEVELS * self.n + self.d

    @classmethod
    def from_flat(cls, flat: int) -> "JointIndex":
        return cls(flat // DETECTOR_LEVELS, flat % DETECTOR_LEVELS)


def flat_index(n: int, d: int) -> int:
    """Flat joint index of ``|n>_c |d>_d`` (detector is the fast index)."""
    return DETECTOR_LEVELS * n + d


def _freeze(matrix: np.ndarray) -> np.ndarray:
    matrix = np.ascontiguousarray(matrix, dtype=complex)
    matrix.flags.writeable = False
    return matrix


def lowering_operator(n_cutoff: int) -> np.ndarray:
    """Cavity lowering operator: ``<n-1| a |n> = sqrt(n)``."""
    return _freeze(np.diag(np.sqrt(np.arange(1, n_cutoff, dtype=float)), 1))


def number_operator(n_cutoff: int) -> np.ndarray:
    """Cavity photon-number operator, diagonal ``0 .. n_cutoff - 1``."""
    return _freeze(np.diag(np.arange(n_cutoff, dtype=float)))


def detector_lowering() -> np.ndarray:
    """Detector lowering operator ``sigma^- = |0><1|_d`` on the 3-level space."""
    m = np.zeros((DETECTOR_LEVELS, DETECTOR_LEVELS), dtype=complex)
    m[DET_GROUND, DET_EXCITED] = 1.0
    return _freeze(m)


def detector_transition(upper: int, lower: int) -> np.ndarray:
    """Detector transition operator ``|upper><lower|_d``."""
    m = np.zeros((DETECTOR_LEVELS, DETECTOR_LEVELS), dtype=complex)
    m[upper, lower] = 1.0
    return _freeze(m)


def detector_projector(level: int) -> np.ndarray:
    """Projector onto one detector level."""
    return detector_transition(level, level)


def build_hamiltonian(p: ModelParams) -> np.ndarray:
    """Exchange Hamiltonian ``g (a^dag sigma^- + a sigma^+)`` on the joint space.

    The interaction swaps one excitation between the cavity and the detector
    metastable pair.  It is Hermitian, commutes with the total excitation
    number, and has no matrix element involving the measured level.
    """
    a = lowering_operator(p.n_cutoff)
    sm = detector_lowering()
    sp = sm.conj().T
    h = p.g * (np.kron(a.conj().T, sm) + np.kron(a, sp))
    return _freeze(h)


def total_excitation_operator(n_cutoff: int) -> np.ndarray:
    """``N ⊗ I + I ⊗ |1><1|_d``: conserved by the exchange Hamiltonian."""
    op = np.kron(number_operator(n_cutoff), np.eye(DETECTOR_LEVELS)) + np.kron(
        np.eye(n_cutoff), detector_projector(DET_EXCITED)
    )
    return _freeze(op)


def build_jump_operators(p: ModelParams) -> list[np.ndarray]:
    """Jump operators of the incoherent processes with nonzero rates.

    In order (zero-rate entries omitted):

    - ``sqrt(gamma1) I_c ⊗ |m><1|`` -- tunneling out of the excited state,
      i.e. a photon detection;
    - ``sqrt(gamma0) I_c ⊗ |m><0|`` -- a dark count;
    - ``sqrt(1/T2)   I_c ⊗ |1><1|`` -- pure dephasing of the detector;
    - ``sqrt(1/T1)   I_c ⊗ |0><1|`` -- energy relaxation of the detector.

    Every operator acts as the identity on the cavity factor.
    """
    ic = np.eye(p.n_cutoff)
    ops = []
    if p.gamma1 > 0:
        ops.append(np.sqrt(p.gamma1) * np.kron(ic, detector_transition(DET_MEASURED, DET_EXCITED)))
    if p.gamma0 > 0:
        ops.append(np.sqrt(p.gamma0) * np.kron(ic, detector_transition(DET_MEASURED, DET_GROUND)))
    if p.t2_inv > 0:
        ops.append(np.sqrt(p.t2_inv) * np.kron(ic, detector_projector(DET_EXCITED)))
    if p.t1_inv > 0:
        ops.append(np.sqrt(p.t1_inv) * np.kron(ic, detector_transition(DET_GROUND, DET_EXCITED)))
    return [_freeze(op) for op in ops]


def hermiticity_defect(matrix: np.ndarray) -> float:
    """Max-norm distance from Hermiticity."""
    return float(np.max(np.abs(matrix - matrix.conj().T))) if matrix.size else 0.0


def _validate_density(matrix: np.ndarray, normalized: bool, herm_tol: float,
                      psd_tol: float, trace_tol: float, what: str) -> None:
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValueError(f"{what} must be a square matrix, got shape {matrix.shape}")
    defect = hermiticity_defect(matrix)
    if defect > herm_tol:
        raise ValueError(f"{what} is not Hermitian: defect {defect:.3e} > {herm_tol:.1e}")
    eigmin = float(np.min(np.linalg.eigvalsh(0.5 * (matrix + matrix.conj().T))))
    if eigmin < -psd_tol:
        raise ValueError(f"{what} is not positive semidefinite: min eigenvalue {eigmin:.3e}")
    trace = float(np.real(np.trace(matrix)))
    if normalized:
        if abs(trace - 1.0) > trace_tol:
            raise ValueError(f"{what} trace {trace!r} is not 1 within {trace_tol:.1e}")
    elif not -trace_tol <= trace <= 1.0 + trace_tol:
        raise ValueError(f"{what} trace {trace!r} is outside [0, 1]")


class CavityDensity:
    """A (possibly unnormalized) density matrix on the truncated cavity space.

    Validated at construction: Hermitian, positive semidefinite, and with
    trace 1 (``normalized=True``) or trace in [0, 1] otherwise.  The backing
    array is read-only.
    """

    __slots__ = ("matrix", "normalized")

    def __init__(self, matrix: np.ndarray, normalized: bool = True, *,
                 herm_tol: float = HERMITICITY_TOL, psd_tol: float = PSD_TOL,
                 trace_tol: float = TRACE_TOL):
        matrix = np.ascontiguousarray(matrix, dtype=complex)
        _validate_density(matrix, normalized, herm_tol, psd_tol, trace_tol, "cavity density")
        self.matrix = _freeze(matrix)
        self.normalized = normalized

    @property
    def n_cutoff(self) -> int:
        return self.matrix.shape[0]

    @property
    def trace(self) -> float:
        return float(np.real(np.trace(self.matrix)))


class JointDensity:
    """A density matrix on the joint cavity-detector space (dim = 3 N_c)."""

    __slots__ = ("matrix", "normalized")

    def __init__(self, matrix: np.ndarray, normalized: bool = True, *,
                 herm_tol: float = HERMITICITY_TOL, psd_tol: float = PSD_TOL,
                 trace_tol: float = TRACE_TOL):
        matrix = np.ascontiguousarray(matrix, dtype=complex)
        if matrix.shape[0] % DETECTOR_LEVELS != 0:
            raise ValueError("joint dimension must be a multiple of 3")
        _validate_density(matrix, normalized, herm_tol, psd_tol, trace_tol, "joint density")
        self.matrix = _freeze(matrix)
        self.normalized = normalized

    @property
    def n_cutoff(self) -> int:
        return self.matrix.shape[0] // DETECTOR_LEVELS

    @property
    def trace(self) -> float:
        return float(np.real(np.trace(self.matrix)))

    def detector_block(self, i: int, j: int) -> np.ndarray:
        """Cavity-space block ``<i|_d xi |j>_d``."""
        return detector_block(self.matrix, i, j)


def detector_block(joint_matrix: np.ndarray, i: int, j: int) -> np.ndarray:
    """Extract the cavity block ``<i|_d xi |j>_d`` of a joint matrix."""
    n = joint_matrix.shape[0] // DETECTOR_LEVELS
    return joint_matrix.reshape(n, DETECTOR_LEVELS, n, DETECTOR_LEVELS)[:, i, :, j]


def initial_state(rho_c: CavityDensity) -> JointDensity:
    """Product state of the given cavity state with the detector ground state.

    Raises
    ------
    ValueError
        If ``rho_c`` is not a normalized density matrix.
    """
    if not rho_c.normalized:
        raise ValueError("initial cavity state must be normalized")
    joint = np.kron(rho_c.matrix, detector_projector(DET_GROUND))
    return JointDensity(joint, normalized=True)


def fock_state(n: int, n_cutoff: int) -> CavityDensity:
    """Projector onto the ``n``-photon Fock state."""
    if not 0 <= n < n_cutoff:
        raise ValueError(f"Fock index {n} outside truncation 0..{n_cutoff - 1}")
    m = np.zeros((n_cutoff, n_cutoff), dtype=complex)
    m[n, n] = 1.0
    return CavityDensity(m, normalized=True)


def coherent_truncation_tail(alpha: complex, n_cutoff: int) -> float:
    """Poisson weight of the coherent state left outside the truncation."""
    nbar = abs(alpha) ** 2
    weights = [math.exp(-nbar) * nbar ** k / math.factorial(k) for k in range(n_cutoff)]
    return max(0.0, 1.0 - math.fsum(weights))


def coherent_density(alpha: complex, n_cutoff: int, tail_tol: float = 1e-10) -> CavityDensity:
    """Truncated, renormalized coherent state ``|alpha><alpha|``.

    Parameters
    ----------
    alpha : complex
        Coherent amplitude.
    n_cutoff : int
        Fock truncation.
    tail_tol : float
        Maximum tolerated Poisson weight beyond the truncation.

    Raises
    ------
    TruncationError
        If the truncated tail exceeds ``tail_tol`` (the cutoff is too small
        for this amplitude).
    """
    tail = coherent_truncation_tail(alpha, n_cutoff)
    if tail > tail_tol:
        raise TruncationError(
            f"coherent |alpha|={abs(alpha):.4g} needs a larger cutoff than "
            f"{n_cutoff}: truncated weight {tail:.3e} > {tail_tol:.1e}",
            tail=tail, tol=tail_tol,
        )
    n = np.arange(n_cutoff)
    amplitudes = np.array(
        [alpha ** k / math.sqrt(math.factorial(k)) for k in n], dtype=complex
    ) * math.exp(-0.5 * abs(alpha) ** 2)
    amplitudes /= np.linalg.norm(amplitudes)
    return CavityDensity(np.outer(amplitudes, amplitudes.conj()), normalized=True)
