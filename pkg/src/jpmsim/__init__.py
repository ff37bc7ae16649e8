"""Simulator for microwave-photon detection by a Josephson photomultiplier.

A JPM coupled to a cavity is modelled by a Lindblad master equation on a
truncated joint space; the library computes the dense Liouville propagator,
the process (chi) matrix of the full channel, the cavity back action
conditioned on the detector outcome, and validates everything against the
closed-form limits (no-tunneling back action, strong-dephasing rate
equations, block ODE residuals) plus a coherent-state power-scaling test.
"""

from .errors import (
    AnchorDegenerate,
    ConfigError,
    GridTooCoarse,
    InvariantViolation,
    JpmsimError,
    PoleEvaluation,
    RegimeViolation,
    SpectralFallbackWarning,
    TruncationError,
    ZeroProbabilityOutcome,
)
from .model import (
    CavityDensity,
    JointDensity,
    JointIndex,
    ModelParams,
    build_hamiltonian,
    build_jump_operators,
    coherent_density,
    fock_state,
    initial_state,
    lowering_operator,
    number_operator,
)
from .liouville import (
    Propagator,
    Superoperator,
    TimeGrid,
    assemble_superoperator,
    evolve_state,
    load_propagator,
    propagate,
    save_propagator,
)
from .tomography import (
    ChiElements,
    ChiMatrix,
    ConditionalChannel,
    chi_from_propagator,
    conditional_channel,
    detection_probability,
    extract_elements,
    normalize_conditioned,
    outcome_probabilities,
)
from .closed_forms import (
    BackActionOp,
    LowT2Params,
    ResidualReport,
    block_ode_residual,
    ideal_beta,
    invert_laplace_talbot,
    laplace_detection,
    laplace_detection_residues,
    laplace_excited_element,
    limiting_regime,
    limiting_regime_gap,
    no_tunneling_backaction,
    operator_ode_residual,
    pauli_detection_probability,
    scalar_ode_residual,
    short_time_bound,
    subtraction_operator,
)
from .coherent_sweep import (
    RegimeClassification,
    ScalingCurve,
    classify,
    reference_probabilities,
    rescale,
    run_coherent_sweep,
)

__version__ = "0.1.0"
