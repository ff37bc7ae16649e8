"""Vectorized master equation: Liouville supermatrix and its propagator.

The master equation

    d xi/dt = -i [H, xi] + sum_mu ( J_mu xi J_mu^dag - 1/2 {J_mu^dag J_mu, xi} )

is vectorized row-major, ``vec(xi)[D*a + b] = xi[a, b]``, under which
``vec(A xi B) = (A ⊗ B^T) vec(xi)``.  The generator therefore reads

    S = -i (H ⊗ I - I ⊗ H^T)
        + sum_mu ( J ⊗ conj(J) - 1/2 (J^dag J) ⊗ I - 1/2 I ⊗ (J^dag J)^T ).

All operators of this model are real in the chosen basis, so the transposes
and conjugates are numerically inert here; the general form is used so the
assembly stays correct for complex extensions.

The propagator ``T(t) = exp(S t)`` is evaluated on a uniform grid by
diagonalizing S once and forming ``V exp(L t) V^{-1}`` per point.  When the
eigenvector matrix is too ill-conditioned (near-defective spectra do occur,
e.g. when the relaxation and tunneling rates coincide), the engine emits a
:class:`~jpmsim.errors.SpectralFallbackWarning` and switches to a
scaling-and-squaring (Pade) path based on the one-step generator
``E = expm(S dt)``; grid maps are then exact powers of E.  No randomized
algorithm is used anywhere, so identical inputs give bit-identical outputs.
"""

from __future__ import annotations

import struct
import warnings
import zlib
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np
import scipy.linalg

from .errors import InvariantViolation, SpectralFallbackWarning
from .model import JointDensity, ModelParams, build_hamiltonian, build_jump_operators, hermiticity_defect

#: Eigenvector condition number above which propagation falls back to the
#: scaling-and-squaring path.
CONDITION_FALLBACK = 1e8

#: Hermiticity / trace drift beyond which an evolved state is rejected.
DRIFT_TOL = 1e-8


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time grid ``0 .. t_max`` with ``steps`` points (both ends included)."""

    t_max: float
    steps: int = 400

    def __post_init__(self):
        if not self.t_max > 0:
            raise ValueError(f"t_max must be > 0, got {self.t_max}")
        if self.steps < 2:
            raise ValueError(f"steps must be >= 2, got {self.steps}")

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.t_max, self.steps)

    @property
    def dt(self) -> float:
        return self.t_max / (self.steps - 1)


@dataclass(frozen=True)
class Superoperator:
    """Dense Liouvillian S acting on row-major vectorized joint matrices."""

    matrix: np.ndarray
    dim: int

    def __post_init__(self):
        expected = self.dim * self.dim
        if self.matrix.shape != (expected, expected):
            raise ValueError(
                f"superoperator for dim {self.dim} must be {expected}x{expected}, "
                f"got {self.matrix.shape}"
            )

    def apply(self, matrix: np.ndarray) -> np.ndarray:
        """Right-hand side of the master equation for one joint matrix."""
        return (self.matrix @ matrix.reshape(-1)).reshape(self.dim, self.dim)

    def trace_defect(self) -> float:
        """Max column sum over the trace rows; zero for a trace-preserving generator."""
        rows = np.arange(self.dim) * self.dim + np.arange(self.dim)
        return float(np.max(np.abs(self.matrix[rows, :].sum(axis=0))))


def assemble_superoperator(p: ModelParams) -> Superoperator:
    """Assemble the Liouvillian of the model on the joint space."""
    d = p.joint_dim
    h = build_hamiltonian(p)
    eye = np.eye(d)
    s = -1j * (np.kron(h, eye) - np.kron(eye, h.T))
    for jump in build_jump_operators(p):
        jj = jump.conj().T @ jump
        s += np.kron(jump, jump.conj())
        s -= 0.5 * np.kron(jj, eye)
        s -= 0.5 * np.kron(eye, jj.T)
    s = np.ascontiguousarray(s)
    s.flags.writeable = False
    return Superoperator(matrix=s, dim=d)


class Propagator:
    """Grid evaluation of ``T(t) = exp(S t)``.

    The maps are held in factored form (eigendecomposition, or the one-step
    generator on the fallback path) and materialized on demand: a dense
    D^2 x D^2 matrix per grid point would not fit in memory for production
    grids.  ``map_at`` returns single maps, ``vector_series`` /
    ``row_series`` stream the grid without materializing full maps.
    """

    def __init__(self, times: np.ndarray, dim: int, mode: str,
                 condition_number: float,
                 eigenvalues: np.ndarray | None = None,
                 v: np.ndarray | None = None,
                 vinv: np.ndarray | None = None,
                 step_map: np.ndarray | None = None):
        self.times = np.asarray(times, dtype=float)
        self.dim = int(dim)
        self.mode = mode
        self.condition_number = condition_number
        self._eigenvalues = eigenvalues
        self._v = v
        self._vinv = vinv
        self._step = step_map
        self._pow_cache: dict[int, np.ndarray] = {}
        if mode not in ("eigen", "step"):
            raise ValueError(f"unknown propagator mode {mode!r}")

    # -- single-map access -------------------------------------------------

    def map_at(self, t_index: int) -> np.ndarray:
        """Dense map T(t_k) for one grid index (index 0 is the exact identity)."""
        k = self._check_index(t_index)
        n = self.dim * self.dim
        if k == 0:
            return np.eye(n, dtype=complex)
        if self.mode == "eigen":
            t = self.times[k]
            return (self._v * np.exp(self._eigenvalues * t)) @ self._vinv
        return self._step_power(k)

    def rows_at(self, t_index: int, rows: Sequence[int]) -> np.ndarray:
        """Selected rows of T(t_k); cheaper than ``map_at`` on the eigen path."""
        k = self._check_index(t_index)
        rows = np.asarray(rows, dtype=int)
        if self.mode == "eigen":
            if k == 0:
                out = np.zeros((len(rows), self.dim * self.dim), dtype=complex)
                out[np.arange(len(rows)), rows] = 1.0
                return out
            t = self.times[k]
            return (self._v[rows, :] * np.exp(self._eigenvalues * t)) @ self._vinv
        return self.map_at(k)[rows, :]

    # -- streaming access ---------------------------------------------------

    def vector_series(self, v0: np.ndarray) -> Iterator[np.ndarray]:
        """Yield ``T(t_k) v0`` for every grid point, in order."""
        v0 = np.asarray(v0, dtype=complex).reshape(-1)
        if self.mode == "eigen":
            w = self._vinv @ v0
            for k, t in enumerate(self.times):
                yield v0.copy() if k == 0 else self._v @ (np.exp(self._eigenvalues * t) * w)
        else:
            v = v0.copy()
            for k in range(len(self.times)):
                if k > 0:
                    v = self._step @ v
                yield v.copy()

    def row_series(self, rows: Sequence[int]) -> Iterator[np.ndarray]:
        """Yield ``T(t_k)[rows, :]`` for every grid point, in order.

        On the fallback path this uses the recursion
        ``T(t_{k+1})[rows, :] = T(t_k)[rows, :] @ E`` (valid because all
        exponentials of the same generator commute).
        """
        rows = np.asarray(rows, dtype=int)
        n = self.dim * self.dim
        if self.mode == "eigen":
            vr = self._v[rows, :]
            for k, t in enumerate(self.times):
                if k == 0:
                    out = np.zeros((len(rows), n), dtype=complex)
                    out[np.arange(len(rows)), rows] = 1.0
                    yield out
                else:
                    yield (vr * np.exp(self._eigenvalues * t)) @ self._vinv
        else:
            block = np.zeros((len(rows), n), dtype=complex)
            block[np.arange(len(rows)), rows] = 1.0
            for k in range(len(self.times)):
                if k > 0:
                    block = block @ self._step
                yield block.copy()

    # -- internals ----------------------------------------------------------

    def _check_index(self, t_index: int) -> int:
        k = int(t_index)
        if not 0 <= k < len(self.times):
            raise IndexError(f"time index {t_index} outside grid of {len(self.times)} points")
        return k

    def _step_power(self, k: int) -> np.ndarray:
        """E^k by binary powering with cached powers of two."""
        result = None
        bit = 0
        base = self._step
        while k:
            if bit not in self._pow_cache:
                self._pow_cache[bit] = base if bit == 0 else (
                    self._pow_cache[bit - 1] @ self._pow_cache[bit - 1]
                )
            if k & 1:
                p = self._pow_cache[bit]
                result = p if result is None else p @ result
            k >>= 1
            bit += 1
        return result


def propagate(s: Superoperator, grid: TimeGrid, *,
              condition_threshold: float = CONDITION_FALLBACK) -> Propagator:
    """Diagonalize the Liouvillian and return the grid propagator.

    Falls back to the Pade/scaling-and-squaring path (with a
    :class:`SpectralFallbackWarning`) when the eigenvector condition number
    exceeds ``condition_threshold``; the fallback is slower but makes no
    accuracy compromise.
    """
    eigenvalues, v = scipy.linalg.eig(s.matrix)
    cond = float(np.linalg.cond(v))
    times = grid.times
    if cond <= condition_threshold:
        vinv = np.linalg.inv(v)
        return Propagator(times, s.dim, "eigen", cond,
                          eigenvalues=eigenvalues, v=v, vinv=vinv)
    warnings.warn(
        f"Liouvillian eigenvectors are ill-conditioned (cond {cond:.2e} > "
        f"{condition_threshold:.0e}); falling back to scaling-and-squaring",
        SpectralFallbackWarning,
        stacklevel=2,
    )
    step = scipy.linalg.expm(s.matrix * grid.dt)
    return Propagator(times, s.dim, "step", cond, step_map=step)


def evolve_state(prop: Propagator, xi0: JointDensity) -> list[JointDensity]:
    """Evolve a joint state over the whole grid.

    Every output is validated: Hermiticity and trace drift beyond
    ``DRIFT_TOL`` raise :class:`InvariantViolation` (that signals propagator
    inaccuracy, not a caller error).
    """
    d = prop.dim
    if xi0.matrix.shape[0] != d:
        raise ValueError(f"state dimension {xi0.matrix.shape[0]} != propagator dimension {d}")
    trace0 = xi0.trace
    states = []
    for k, vec in enumerate(prop.vector_series(xi0.matrix.reshape(-1))):
        xi = vec.reshape(d, d)
        herm = hermiticity_defect(xi)
        drift = abs(float(np.real(np.trace(xi))) - trace0)
        if herm > DRIFT_TOL or drift > DRIFT_TOL:
            raise InvariantViolation(
                f"evolved state at t={prop.times[k]:.6g} drifted: "
                f"hermiticity {herm:.3e}, trace {drift:.3e} (tolerance {DRIFT_TOL:.0e})"
            )
        states.append(JointDensity(xi, normalized=xi0.normalized,
                                   herm_tol=DRIFT_TOL, psd_tol=1e-9, trace_tol=DRIFT_TOL))
    return states


# ---------------------------------------------------------------------------
# Propagator snapshot file
#
# Binary, little-endian, versioned.  Layout:
#
#   magic    8 bytes  b"JPMPROPS"
#   version  uint32   1
#   mode     uint32   1 = eigen factors, 2 = one-step generator
#   dim      uint32   joint dimension D
#   steps    uint32   grid points
#   t_max    float64
#   cond     float64  eigenvector condition number at build time
#   crc32    uint32   checksum of the payload
#   payload           complex128 arrays as row-major (re, im) float64 pairs:
#                     eigen -> eigenvalues (D^2), V (D^2 x D^2), V^-1;
#                     step  -> E (D^2 x D^2)
# ---------------------------------------------------------------------------

SNAPSHOT_MAGIC = b"JPMPROPS"
SNAPSHOT_VERSION = 1
_HEADER = struct.Struct("<8sIIIIddI")


def save_propagator(prop: Propagator, path) -> None:
    """Write a propagator snapshot (see module docstring for the format)."""
    if prop.mode == "eigen":
        payload = b"".join(
            np.ascontiguousarray(a, dtype="<c16").tobytes()
            for a in (prop._eigenvalues, prop._v, prop._vinv)
        )
        mode = 1
    else:
        payload = np.ascontiguousarray(prop._step, dtype="<c16").tobytes()
        mode = 2
    header = _HEADER.pack(
        SNAPSHOT_MAGIC, SNAPSHOT_VERSION, mode, prop.dim, len(prop.times),
        float(prop.times[-1]), float(prop.condition_number), zlib.crc32(payload),
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def load_propagator(path) -> Propagator:
    """Read a propagator snapshot; corruption raises :class:`InvariantViolation`."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise InvariantViolation("propagator snapshot is truncated")
    magic, version, mode, dim, steps, t_max, cond, crc = _HEADER.unpack_from(raw)
    if magic != SNAPSHOT_MAGIC:
        raise InvariantViolation("propagator snapshot has a wrong magic header")
    if version != SNAPSHOT_VERSION:
        raise InvariantViolation(f"unsupported snapshot version {version}")
    payload = raw[_HEADER.size:]
    if zlib.crc32(payload) != crc:
        raise InvariantViolation("propagator snapshot failed its checksum (corrupted file)")
    n = dim * dim
    data = np.frombuffer(payload, dtype="<c16")
    if not np.all(np.isfinite(data.view(float))):
        raise InvariantViolation("propagator snapshot contains non-finite values")
    times = TimeGrid(t_max, steps).times
    if mode == 1:
        if data.size != n + 2 * n * n:
            raise InvariantViolation("propagator snapshot payload has the wrong size")
        eigenvalues = data[:n].copy()
        v = data[n:n + n * n].reshape(n, n).copy()
        vinv = data[n + n * n:].reshape(n, n).copy()
        return Propagator(times, dim, "eigen", cond, eigenvalues=eigenvalues, v=v, vinv=vinv)
    if mode == 2:
        if data.size != n * n:
            raise InvariantViolation("propagator snapshot payload has the wrong size")
        return Propagator(times, dim, "step", cond, step_map=data.reshape(n, n).copy())
    raise InvariantViolation(f"unknown snapshot mode {mode}")
