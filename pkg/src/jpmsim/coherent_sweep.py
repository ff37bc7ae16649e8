"""Coherent-state power-scaling test of the measurement back action.

Detection probability as a function of coherent amplitude separates the two
ideal back actions only in the nonlinear response: the lowering operator
gives ``P_low = |alpha|^2`` while the subtraction operator saturates as
``P_sub = 1 - exp(-|alpha|^2)`` (identical through order ``|alpha|^2``).
Sweeping alpha at a fixed measurement time, rescaling both references to
match the data at the smallest amplitude (removing calibration constants),
and comparing shapes classifies the detector's operating regime:

- ``lowering``        -- short measurement times;
- ``subtraction``     -- long times, detection saturated;
- ``intermediate``    -- neither reference clearly preferred;
- ``sub-subtraction`` -- data falls *below* the subtraction curve, the
  signature of measurement-induced dephasing at intermediate times.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AnchorDegenerate
from .liouville import TimeGrid, assemble_superoperator, propagate
from .model import DETECTOR_LEVELS, ModelParams, coherent_density, initial_state
from .tomography import _LEVEL_OF, detection_outcome

LABEL_LOWERING = "lowering"
LABEL_SUBTRACTION = "subtraction"
LABEL_INTERMEDIATE = "intermediate"
LABEL_SUB_SUBTRACTION = "sub-subtraction"

#: Margin below the scaled subtraction curve that counts as "below" in the
#: sub-subtraction rule.
SUBTRACTION_MARGIN = 1e-3

#: A reference wins outright when its L2 distance is at most this fraction
#: of the other's; otherwise the regime is intermediate.  Chosen so that the
#: bare detector at short/long times classifies decisively while relaxation
#: at long times stays intermediate.
DISTANCE_RATIO = 0.25

#: Default truncation-tail tolerance for the sweep.  Looser than the
#: state-construction default on purpose: with amplitudes up to 1 and ten
#: Fock states the neglected weight is ~1e-7, far below the classification
#: margins, and it keeps the joint dimension at desk scale.
SWEEP_TAIL_TOL = 1e-6


def default_alpha_grid() -> np.ndarray:
    """Amplitudes 0.01 .. 1.00 in steps of 0.01."""
    return np.linspace(0.01, 1.0, 100)


def reference_probabilities(alpha) -> tuple[np.ndarray, np.ndarray]:
    """Ideal detection probabilities ``(P_low, P_sub)`` for amplitude alpha."""
    power = np.abs(np.asarray(alpha)) ** 2
    return power, 1.0 - np.exp(-power)


def rescale(values: np.ndarray, data_at_anchor: float) -> np.ndarray:
    """Scale a reference curve to match the data at the anchor (first) point.

    Raises
    ------
    AnchorDegenerate
        If the reference vanishes at the anchor (anchoring at alpha = 0).
    """
    values = np.asarray(values, dtype=float)
    if values[0] == 0.0:
        raise AnchorDegenerate("reference curve is 0 at the anchor; use a nonzero alpha_0")
    scaled = values * (data_at_anchor / values[0])
    scaled[0] = data_at_anchor  # exact coincidence at the anchor by construction
    return scaled


@dataclass(frozen=True)
class ScalingCurve:
    """Simulated detection probability vs amplitude with scaled references."""

    alphas: np.ndarray
    p_data: np.ndarray
    p_low_scaled: np.ndarray
    p_sub_scaled: np.ndarray
    alpha0: float
    t_m: float

    def __post_init__(self):
        if not (self.alphas.shape == self.p_data.shape == self.p_low_scaled.shape
                == self.p_sub_scaled.shape):
            raise ValueError("curve arrays must share one shape")
        if np.min(self.p_data) < -1e-9 or np.max(self.p_data) > 1 + 1e-9:
            raise ValueError("detection probabilities must lie in [0, 1]")


@dataclass(frozen=True)
class RegimeClassification:
    """Outcome of the shape comparison over the amplitude grid."""

    label: str
    distance_lowering: float
    distance_subtraction: float
    below_subtraction_fraction: float
    margin: float


def run_coherent_sweep(params: ModelParams, t_m: float,
                       alphas: np.ndarray | None = None,
                       tail_tol: float = SWEEP_TAIL_TOL) -> ScalingCurve:
    """Simulate the detection probability at time ``t_m`` for every amplitude.

    One propagator serves the whole sweep (the generator does not depend on
    the input state); each amplitude is then a full, independent propagation
    of its own initial state.  Results are deterministic in grid order.
    """
    if alphas is None:
        alphas = default_alpha_grid()
    alphas = np.asarray(alphas, dtype=float)
    if alphas.size == 0:
        raise ValueError("amplitude grid is empty")

    prop = propagate(assemble_superoperator(params), TimeGrid(t_m, 2))
    n = params.n_cutoff
    level = _LEVEL_OF[detection_outcome(params)]
    diag = np.arange(n) * DETECTOR_LEVELS + level
    rows = prop.dim * diag + diag
    weights = prop.rows_at(1, rows).sum(axis=0)

    p_data = np.empty(alphas.size)
    for i, alpha in enumerate(alphas):
        xi0 = initial_state(coherent_density(alpha, n, tail_tol=tail_tol))
        p_data[i] = float(np.real(weights @ xi0.matrix.reshape(-1)))

    p_low, p_sub = reference_probabilities(alphas)
    anchor = p_data[0]
    return ScalingCurve(
        alphas=alphas, p_data=p_data,
        p_low_scaled=rescale(p_low, anchor),
        p_sub_scaled=rescale(p_sub, anchor),
        alpha0=float(alphas[0]), t_m=float(t_m),
    )


def classify(curve: ScalingCurve, margin: float = SUBTRACTION_MARGIN,
             distance_ratio: float = DISTANCE_RATIO) -> RegimeClassification:
    """Label the operating regime of a scaling curve.

    Sub-subtraction wins when the data sits below the scaled subtraction
    curve by more than ``margin`` on at least half the grid; otherwise the
    L2-closest reference wins if it is decisively closer (see
    :data:`DISTANCE_RATIO`), else the regime is intermediate.
    """
    d_low = float(np.linalg.norm(curve.p_data - curve.p_low_scaled))
    d_sub = float(np.linalg.norm(curve.p_data - curve.p_sub_scaled))
    below = float(np.mean(curve.p_data < curve.p_sub_scaled - margin))
    if below >= 0.5:
        label = LABEL_SUB_SUBTRACTION
    elif d_low <= distance_ratio * d_sub:
        label = LABEL_LOWERING
    elif d_sub <= distance_ratio * d_low:
        label = LABEL_SUBTRACTION
    else:
        label = LABEL_INTERMEDIATE
    return RegimeClassification(
        label=label, distance_lowering=d_low, distance_subtraction=d_sub,
        below_subtraction_fraction=below, margin=margin,
    )
