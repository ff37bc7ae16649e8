"""Process (chi) matrices and outcome-conditioned cavity channels.

In the standard operator basis ``E_{mu(a,b)} = |a><b|`` with
``mu(a,b) = D*a + b``, the chi matrix of the propagated channel is a pure
reindexing of the Liouville supermatrix:

    chi[a, b, c, d] = T[a, c, b, d]            (both sides as 4-tensors)

so no arithmetic is involved and the permutation is its own inverse.  As a
matrix in (mu, nu), chi is the Choi matrix of the channel: Hermitian, and
positive semidefinite exactly when the channel is completely positive.

Measurement outcomes.  With the detector prepared in its ground state, the
cavity state conditioned on reading the detector in ``s`` is an off-diagonal
block of the full chi matrix; it is itself a valid cavity chi matrix.  The
named elements tracked here (all on the detection-conditioned block):

- ``beta[j, k]    = chi[j-1, j, k-1, k]``  -- coherence of |j>,|k> surviving
  the loss of exactly one photon (``alpha_j = beta[j, j]``);
- ``beta_r[j, k]  = chi[j-1, j+r, k-1, k+r]`` -- detection after ``r``
  additional photons were lost to detector relaxation;
- ``dark[j, k]    = chi[j, j, k, k]``      -- a click with no photon removed.

Everything outside those patterns is forbidden by excitation-number
bookkeeping; ``offrule_residual`` reports the largest such element as a
selection-rule health check.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ZeroProbabilityOutcome
from .liouville import Propagator, TimeGrid, assemble_superoperator, evolve_state, propagate
from .model import (
    DETECTOR_LEVELS,
    CavityDensity,
    JointDensity,
    ModelParams,
    initial_state,
)

OUTCOME_GROUND = "0"
OUTCOME_EXCITED = "1"
OUTCOME_MEASURED = "m"
OUTCOME_NO_CLICK = "no-click"
OUTCOMES = (OUTCOME_GROUND, OUTCOME_EXCITED, OUTCOME_MEASURED, OUTCOME_NO_CLICK)

_LEVEL_OF = {OUTCOME_GROUND: 0, OUTCOME_EXCITED: 1, OUTCOME_MEASURED: 2}

#: Probability floor below which conditioning is refused: under propagation
#: accuracy, normalizing by it would be meaningless.
P_FLOOR = 1e-12


def reshuffle(matrix: np.ndarray, dim: int) -> np.ndarray:
    """Row-reshuffle between superoperator and chi/Choi index order (an involution)."""
    return (
        matrix.reshape(dim, dim, dim, dim).transpose(0, 2, 1, 3).reshape(dim * dim, dim * dim)
    )


@dataclass(frozen=True)
class ChiMatrix:
    """Full-channel chi matrix at one time, standard basis ``|a><b|``."""

    matrix: np.ndarray
    dim: int
    time: float

    def hermiticity_defect(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T)))

    def min_eigenvalue(self) -> float:
        """Smallest eigenvalue of the Hermitian part (complete positivity check)."""
        return float(np.min(np.linalg.eigvalsh(0.5 * (self.matrix + self.matrix.conj().T))))

    def as_tensor(self) -> np.ndarray:
        """chi as the 4-tensor ``chi[a, b, c, d]``."""
        return self.matrix.reshape(self.dim, self.dim, self.dim, self.dim)


def chi_from_propagator(prop: Propagator, t_index: int) -> ChiMatrix:
    """Chi matrix of the full channel at one grid point (pure reindexing)."""
    t = prop.times[t_index]
    return ChiMatrix(matrix=reshuffle(prop.map_at(t_index), prop.dim), dim=prop.dim, time=float(t))


def chi_to_superoperator(chi: ChiMatrix) -> np.ndarray:
    """Invert :func:`chi_from_propagator` (the permutation is an involution)."""
    return reshuffle(chi.matrix, chi.dim)


@dataclass(frozen=True)
class ConditionalChannel:
    """Cavity-only map for one detector outcome, detector prepared in ``|0>_d``.

    ``map`` acts on row-major vectorized cavity matrices; applying it to a
    normalized input yields the unnormalized conditioned state, whose trace
    is the outcome probability.
    """

    outcome: str
    map: np.ndarray
    n_cutoff: int
    time: float

    def apply(self, rho_c: CavityDensity | np.ndarray) -> np.ndarray:
        matrix = rho_c.matrix if isinstance(rho_c, CavityDensity) else np.asarray(rho_c, dtype=complex)
        n = self.n_cutoff
        return (self.map @ matrix.reshape(-1)).reshape(n, n)

    def probability_of(self, rho_c: CavityDensity | np.ndarray) -> float:
        """Probability of this outcome for the given initial cavity state."""
        return float(np.real(np.trace(self.apply(rho_c))))

    @property
    def reduced_chi(self) -> np.ndarray:
        """The outcome-conditioned cavity chi matrix (N_c^2 x N_c^2)."""
        return reshuffle(self.map, self.n_cutoff)


def conditional_channel(chi: ChiMatrix, outcome: str) -> ConditionalChannel:
    """Condition the full channel on one detector outcome.

    ``no-click`` is the sum of the ground and excited outcomes (no coherent
    superposition with the measured level is possible, so the non-detected
    cavity state is their classical mixture).
    """
    if outcome not in OUTCOMES:
        raise ValueError(f"unknown outcome {outcome!r}; expected one of {OUTCOMES}")
    n = chi.dim // DETECTOR_LEVELS
    if outcome == OUTCOME_NO_CLICK:
        m0 = conditional_channel(chi, OUTCOME_GROUND).map
        m1 = conditional_channel(chi, OUTCOME_EXCITED).map
        return ConditionalChannel(outcome, m0 + m1, n, chi.time)
    s = _LEVEL_OF[outcome]
    chi8 = chi.matrix.reshape(n, DETECTOR_LEVELS, n, DETECTOR_LEVELS,
                              n, DETECTOR_LEVELS, n, DETECTOR_LEVELS)
    reduced = chi8[:, s, :, 0, :, s, :, 0]          # chi^s[j', j, k', k]
    cavity_map = reduced.transpose(0, 2, 1, 3).reshape(n * n, n * n)
    return ConditionalChannel(outcome, np.ascontiguousarray(cavity_map), n, chi.time)


def normalize_conditioned(channel: ConditionalChannel, rho_c: CavityDensity, *,
                          p_floor: float = P_FLOOR) -> CavityDensity:
    """Post-measurement cavity state, normalized by the outcome probability.

    Raises
    ------
    ZeroProbabilityOutcome
        If the outcome probability is below ``p_floor`` (conditioning on an
        essentially impossible event).
    """
    unnormalized = channel.apply(rho_c)
    p = float(np.real(np.trace(unnormalized)))
    if p < p_floor:
        raise ZeroProbabilityOutcome(
            f"outcome {channel.outcome!r} has probability {p:.3e} < {p_floor:.0e} "
            f"for this input at t={channel.time:.6g}"
        )
    return CavityDensity(unnormalized / p, normalized=True,
                         herm_tol=1e-10, psd_tol=1e-9, trace_tol=1e-9)


def selection_rule_mask(n_cutoff: int, relaxation: bool, dark: bool) -> np.ndarray:
    """Boolean mask of detection-conditioned chi elements allowed by the model.

    The one-photon pattern ``beta`` is always allowed; relaxation extends it
    by the ``r``-photon-loss patterns; dark counts add the photon-preserving
    diagonal pattern (shifted by ``r`` as well when both are present).
    """
    n = n_cutoff
    mask = np.zeros((n, n, n, n), dtype=bool)
    r_max = n - 2 if relaxation else 0
    for r in range(r_max + 1):
        for j in range(1, n - r):
            for k in range(1, n - r):
                mask[j - 1, j + r, k - 1, k + r] = True
    if dark:
        r_max_dark = n - 1 if relaxation else 0
        for r in range(r_max_dark + 1):
            for j in range(n - r):
                for k in range(n - r):
                    mask[j, j + r, k, k + r] = True
    return mask


@dataclass(frozen=True)
class ChiElements:
    """Named detection-conditioned chi elements over a time grid.

    Arrays are indexed ``[time, ...]`` with Fock labels shifted to base 0:
    ``beta[t, j-1, k-1]`` is the one-photon-loss element for ``j, k >= 1``;
    ``beta_r[t, r, j-1, k-1]`` the loss-of-``r``-extra-photons element
    (zero where ``j + r`` exceeds the truncation); ``dark[t, j, k]`` the
    photon-preserving element.  ``offrule_residual[t]`` is the largest
    element outside this model's selection-rule support.
    """

    times: np.ndarray
    n_cutoff: int
    beta: np.ndarray
    beta_r: np.ndarray
    dark: np.ndarray
    offrule_residual: np.ndarray

    @property
    def alpha(self) -> np.ndarray:
        """Diagonal elements ``alpha_j = beta_jj``; shape (times, N_c - 1)."""
        return np.einsum("tjj->tj", self.beta)

    def alpha_r(self, r: int) -> np.ndarray:
        """Diagonal loss-``r`` elements ``alpha_j^(r)``; shape (times, N_c - 1)."""
        return np.einsum("tjj->tj", self.beta_r[:, r])

    def valid_r(self, r: int) -> int:
        """Number of valid ``j`` labels for the given ``r`` (j + r < N_c)."""
        return max(0, self.n_cutoff - 1 - r)


def extract_elements(prop: Propagator, params: ModelParams,
                     outcome: str = OUTCOME_MEASURED) -> ChiElements:
    """Track the named conditioned-chi elements across the whole grid.

    Streams the propagator rows belonging to the requested outcome block, so
    no full D^2 x D^2 map is ever materialized.
    """
    n = prop.dim // DETECTOR_LEVELS
    d = prop.dim
    s = _LEVEL_OF[outcome]
    steps = len(prop.times)

    grid_out = np.arange(n) * DETECTOR_LEVELS + s
    grid_in = np.arange(n) * DETECTOR_LEVELS
    rows = (d * grid_out[:, None] + grid_out[None, :]).reshape(-1)
    cols = (d * grid_in[:, None] + grid_in[None, :]).reshape(-1)

    mask = selection_rule_mask(n, relaxation=params.t1_inv > 0, dark=params.gamma0 > 0)
    off = ~mask

    jj = np.arange(n - 1)
    kk = np.arange(n)
    beta = np.empty((steps, n - 1, n - 1), dtype=complex)
    beta_r = np.zeros((steps, n - 1, n - 1, n - 1), dtype=complex)
    dark = np.empty((steps, n, n), dtype=complex)
    residual = np.empty(steps)

    for t_idx, block in enumerate(prop.row_series(rows)):
        chi4 = block[:, cols].reshape(n, n, n, n).transpose(0, 2, 1, 3)  # [j', j, k', k]
        for r in range(n - 1):
            j = jj[: n - 1 - r]
            beta_r[t_idx, r, : j.size, : j.size] = chi4[
                j[:, None], j[:, None] + 1 + r, j[None, :], j[None, :] + 1 + r
            ]
        beta[t_idx] = beta_r[t_idx, 0]
        dark[t_idx] = chi4[kk[:, None], kk[:, None], kk[None, :], kk[None, :]]
        residual[t_idx] = np.max(np.abs(chi4[off])) if off.any() else 0.0

    return ChiElements(times=prop.times.copy(), n_cutoff=n, beta=beta,
                       beta_r=beta_r, dark=dark, offrule_residual=residual)


def detection_outcome(params: ModelParams) -> str:
    """Outcome that counts as "detection": the measured level when any
    tunneling channel exists, else projection on the excited level."""
    if params.gamma1 > 0 or params.gamma0 > 0:
        return OUTCOME_MEASURED
    return OUTCOME_EXCITED


def outcome_probabilities(params: ModelParams, rho_c: CavityDensity, grid: TimeGrid,
                          *, propagator: Propagator | None = None) -> dict[str, np.ndarray]:
    """Time series of P^0, P^1 and P^m for one initial cavity state."""
    prop = propagator if propagator is not None else propagate(assemble_superoperator(params), grid)
    xi0 = initial_state(rho_c)
    n = params.n_cutoff
    out = {OUTCOME_GROUND: np.empty(len(prop.times)),
           OUTCOME_EXCITED: np.empty(len(prop.times)),
           OUTCOME_MEASURED: np.empty(len(prop.times))}
    for k, vec in enumerate(prop.vector_series(xi0.matrix.reshape(-1))):
        xi = vec.reshape(prop.dim, prop.dim).reshape(n, DETECTOR_LEVELS, n, DETECTOR_LEVELS)
        for outcome, s in _LEVEL_OF.items():
            out[outcome][k] = float(np.real(np.trace(xi[:, s, :, s])))
    return out


def detection_probability(params: ModelParams, rho_c: CavityDensity, grid: TimeGrid,
                          *, propagator: Propagator | None = None) -> np.ndarray:
    """Detection probability vs time (P^m, or P^1 in the no-tunneling limit)."""
    probs = outcome_probabilities(params, rho_c, grid, propagator=propagator)
    return probs[detection_outcome(params)]


def detector_block_series(states: Sequence[JointDensity], i: int, j: int) -> np.ndarray:
    """Stack the cavity blocks ``<i|_d xi(t) |j>_d`` of an evolved trajectory."""
    return np.stack([state.detector_block(i, j) for state in states])


def plateau_rate(series: np.ndarray, dt: float) -> float:
    """|d(series)/dt| at the last grid point (two-point estimate)."""
    return float(np.abs(series[-1] - series[-2]) / dt)
