"""Closed-form solutions and residual diagnostics used to validate the engine.

Three independent analytic routes cross-check the dense numerics:

1.  *No-tunneling limit* (pure exchange, no incoherent process): conditioning
    the detector on its ground/excited level applies a single back-action
    operator to the cavity,

        B1(t) = -i sum_n sin(g t sqrt(n)) |n-1><n|,
        B0(t) =    sum_n cos(g t sqrt(n)) |n><n|,

    with detection probability sin^2(g t sqrt(n)) per Fock component, and
    B1 -> (-i g t) a at short times.

2.  *Strong-dephasing limit*: coherent exchange becomes incoherent transfer
    at the rate ``gamma2 = (2 g)^2 T2`` per photon, and the occupation
    probabilities obey classical rate (Pauli) equations whose detection
    probability has the two-exponential closed form implemented in
    :func:`pauli_detection_probability` (with tunneling-limited and
    capture-limited simplifications).

3.  *Block differential equations*: with no dark counts and no relaxation,
    the four detector blocks of the joint state satisfy a closed first-order
    system, which reduces to a fourth-order scalar ODE for any single Fock
    matrix element of the excited block.  These equations are evaluated on
    simulated trajectories with high-order finite differences and reported
    as residuals -- they are diagnostics, never used to produce data.

All functions here are pure and stateless.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .errors import GridTooCoarse, InvariantViolation, PoleEvaluation, RegimeViolation
from .model import ModelParams, lowering_operator, number_operator

TUNNELING_LIMITED = "tunneling-limited"
CAPTURE_LIMITED = "capture-limited"

#: Rate-ratio factor required before a limiting-regime formula applies.
REGIME_RATIO = 100.0


# ---------------------------------------------------------------------------
# No-tunneling back action
# ---------------------------------------------------------------------------

def subtraction_operator(n_cutoff: int) -> np.ndarray:
    """Number-insensitive photon removal: ``sum_n |n-1><n|`` (annihilates vacuum)."""
    return np.diag(np.ones(n_cutoff - 1, dtype=complex), 1)


@dataclass(frozen=True)
class BackActionOp:
    """A cavity back-action operator with its provenance tag."""

    matrix: np.ndarray
    kind: str  # "B0", "B1", "lowering", "subtraction"


def no_tunneling_backaction(t: float, which: int, n_cutoff: int, g: float = 1.0) -> BackActionOp:
    """Back-action operator of the no-tunneling model for outcome 0 or 1.

    Conditioning on the excited level applies ``B1``; on the ground level,
    ``B0``.  Together they resolve the identity: B0^dag B0 + B1^dag B1 = I.
    """
    if t < 0:
        raise ValueError("time must be >= 0")
    if which not in (0, 1):
        raise ValueError("which must be 0 or 1")
    phases = g * t * np.sqrt(np.arange(n_cutoff))
    if which == 1:
        matrix = np.diag(-1j * np.sin(phases[1:]), 1)
        return BackActionOp(matrix=matrix, kind="B1")
    return BackActionOp(matrix=np.diag(np.cos(phases).astype(complex)), kind="B0")


def short_time_bound(t: float, n_cutoff: int, g: float = 1.0) -> float:
    """Max-norm of ``B1(t) - (-i g t a)`` with its cubic bound checked.

    Valid for ``g t sqrt(n_cutoff) <= 0.3``.  The deviation is bounded by
    ``(g t sqrt(n_cutoff))^3`` with unit constant, which holds with slack
    since ``|sin x - x| <= x^3 / 6``.
    """
    theta_max = g * t * math.sqrt(n_cutoff)
    if theta_max > 0.3:
        raise ValueError(f"short-time regime requires g*t*sqrt(N_c) <= 0.3, got {theta_max:.3g}")
    b1 = no_tunneling_backaction(t, 1, n_cutoff, g).matrix
    linear = -1j * g * t * lowering_operator(n_cutoff)
    deviation = float(np.max(np.abs(b1 - linear)))
    if deviation > theta_max ** 3:
        raise InvariantViolation(
            f"short-time deviation {deviation:.3e} exceeds cubic bound {theta_max ** 3:.3e}"
        )
    return deviation


def ideal_beta(kind: str, j: int, k: int) -> float:
    """Detection-conditioned chi element of an ideal back action.

    ``sqrt(j*k)`` for the lowering operator, 1 for the subtraction operator.
    """
    if j < 1 or k < 1:
        raise ValueError("j and k must be >= 1")
    if kind == "lowering":
        return math.sqrt(j * k)
    if kind == "subtraction":
        return 1.0
    raise ValueError(f"unknown kind {kind!r}")


# ---------------------------------------------------------------------------
# Strong-dephasing (Pauli rate equation) limit
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LowT2Params:
    """Rates of the strong-dephasing rate-equation model for one Fock input.

    ``gamma2 = (2 g)^2 T2`` is the dephasing-broadened exchange rate per
    photon; for an ``n``-photon input, capture proceeds at ``n * gamma2``
    and the click at ``gamma1``.
    """

    n: int
    gamma1: float
    gamma2: float

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("Fock number must be >= 1")
        if self.gamma1 <= 0 or self.gamma2 <= 0:
            raise ValueError("rates must be > 0")

    @classmethod
    def from_model(cls, p: ModelParams, n: int) -> "LowT2Params":
        if p.t2_inv <= 0:
            raise ValueError("strong-dephasing limit needs a finite T2 (t2_inv > 0)")
        return cls(n=n, gamma1=p.gamma1, gamma2=(2 * p.g) ** 2 / p.t2_inv)

    @property
    def capture_rate(self) -> float:
        """Incoherent photon-transfer rate for this Fock number, n * gamma2."""
        return self.n * self.gamma2

    @property
    def _roots(self) -> tuple[float, float]:
        disc = math.sqrt(self.gamma1 ** 2 + 4.0 * (self.gamma2 * self.n) ** 2)
        half = -self.gamma1 - 2.0 * self.gamma2 * self.n
        return 0.5 * (half + disc), 0.5 * (half - disc)

    @property
    def s_plus(self) -> float:
        return self._roots[0]

    @property
    def s_minus(self) -> float:
        return self._roots[1]


def pauli_detection_probability(p: LowT2Params, t) -> np.ndarray | float:
    """Detection probability of the rate-equation model.

    ``P(t) = 1 + gamma1 gamma2 n / (s+ - s-) * (exp(s+ t)/s+ - exp(s- t)/s-)``
    with the decay constants ``s±`` of :class:`LowT2Params`.  Starts at 0,
    saturates at 1, monotone nondecreasing.  The coincident-root case is a
    removable singularity and is evaluated through its confluent limit.
    """
    t = np.asarray(t, dtype=float)
    sp, sm = p.s_plus, p.s_minus
    rate = p.gamma1 * p.gamma2 * p.n
    if abs(sp - sm) < 1e-12 * abs(sp):
        s = sp
        result = 1.0 - (1.0 - s * t) * np.exp(s * t) * (rate / s ** 2)
    else:
        result = 1.0 + rate / (sp - sm) * (np.exp(sp * t) / sp - np.exp(sm * t) / sm)
    return result if result.ndim else float(result)


def limiting_regime(p: LowT2Params, t, regime: str) -> np.ndarray | float:
    """Single-exponential simplification of the rate-equation solution.

    ``1 - exp(-gamma1 t / 2)`` when tunneling is the bottleneck
    (``gamma2 n >> gamma1``; the factor 1/2 reflects the excitation shuttling
    between cavity and detector), ``1 - exp(-gamma2 n t)`` when photon
    capture is.  The rate ratio must reach :data:`REGIME_RATIO`.
    """
    t = np.asarray(t, dtype=float)
    ratio = p.capture_rate / p.gamma1
    if regime == TUNNELING_LIMITED:
        if ratio < REGIME_RATIO:
            raise RegimeViolation(
                f"tunneling-limited formula needs gamma2*n/gamma1 >= {REGIME_RATIO:g}, got {ratio:.3g}"
            )
        result = 1.0 - np.exp(-p.gamma1 * t / 2.0)
    elif regime == CAPTURE_LIMITED:
        if ratio > 1.0 / REGIME_RATIO:
            raise RegimeViolation(
                f"capture-limited formula needs gamma2*n/gamma1 <= {1.0 / REGIME_RATIO:g}, got {ratio:.3g}"
            )
        result = 1.0 - np.exp(-p.capture_rate * t)
    else:
        raise ValueError(f"unknown regime {regime!r}")
    return result if result.ndim else float(result)


def limiting_regime_gap(p: LowT2Params, regime: str, times: np.ndarray) -> float:
    """Sup-norm gap between the limiting formula and the full rate-equation
    solution over a time grid.  Controlled by the rate ratio: the gap stays
    below 5x the small ratio."""
    exact = pauli_detection_probability(p, times)
    approx = limiting_regime(p, times, regime)
    return float(np.max(np.abs(exact - approx)))


# ---------------------------------------------------------------------------
# Laplace-domain forms
# ---------------------------------------------------------------------------

def laplace_detection(s, p: LowT2Params) -> complex:
    """Laplace transform of the rate-equation detection probability,

    ``P_m(s) = n g1 g2 / ( s (s^2 + s (2 n g2 + g1) + n g1 g2) )``.
    """
    s = complex(s)
    denom = s * (s * s + s * (2 * p.n * p.gamma2 + p.gamma1) + p.n * p.gamma1 * p.gamma2)
    if abs(denom) < 1e-300:
        raise PoleEvaluation(f"s = {s} is a pole of the detection transform")
    return p.n * p.gamma1 * p.gamma2 / denom


def laplace_detection_residues(s, p: LowT2Params) -> complex:
    """Partial-fraction resummation of :func:`laplace_detection`,

    ``1/s + g1 g2 n/(s+ - s-) [ 1/(s+ (s - s+)) - 1/(s- (s - s-)) ]``.

    Agrees with the direct rational form everywhere off the poles.
    """
    s = complex(s)
    sp, sm = p.s_plus, p.s_minus
    for pole in (0.0, sp, sm):
        if abs(s - pole) < 1e-300:
            raise PoleEvaluation(f"s = {s} is a pole of the detection transform")
    rate = p.gamma1 * p.gamma2 * p.n
    return 1.0 / s + rate / (sp - sm) * (1.0 / (sp * (s - sp)) - 1.0 / (sm * (s - sm)))


def laplace_excited_element(s, n: int, x0: float, g: float, gamma1: float,
                            kappa2: float) -> complex:
    """Laplace transform of the excited-block Fock element in the truncated
    strong-dephasing expansion, evaluated exactly as the rational form

    ``X(s) = 2 g^2 (n+1) x0 (s + (k2 - 3 g1)/2)
             / ( s^4 + k2 s^3 + (k2^2 s^2 + k2^2 g1 s)/4 + k2 g^2 g1 (n+1) )``.

    Note: X is proportional to the initial element ``x0``, which vanishes for
    a detector prepared in its ground state -- the transform is then
    identically zero.  It is kept as a literal reference implementation; the
    detection-probability transform above is the one used for validation.
    """
    s = complex(s)
    denom = (s ** 4 + kappa2 * s ** 3 + 0.25 * (kappa2 ** 2 * s ** 2 + kappa2 ** 2 * gamma1 * s)
             + kappa2 * g ** 2 * gamma1 * (n + 1))
    if abs(denom) < 1e-300:
        raise PoleEvaluation(f"s = {s} is a pole of the excited-element transform")
    return 2 * g ** 2 * (n + 1) * x0 * (s + (kappa2 - 3 * gamma1) / 2.0) / denom


def invert_laplace_talbot(transform: Callable[[complex], complex], t: float,
                          nodes: int = 32) -> float:
    """Numerical inverse Laplace transform on the fixed Talbot contour.

    Verification-only tool (tests and the verify command); simulation paths
    never call it.
    """
    if t <= 0:
        raise ValueError("Talbot inversion needs t > 0")
    m = int(nodes)
    r = 2.0 * m / (5.0 * t)
    theta = np.pi * np.arange(1, m) / m
    cot = 1.0 / np.tan(theta)
    s = r * theta * (cot + 1j)
    sigma = theta + (theta * cot - 1.0) * cot
    total = 0.5 * np.exp(r * t) * complex(transform(r))
    values = np.array([transform(sk) for sk in s], dtype=complex)
    total += np.sum(np.exp(t * s) * values * (1.0 + 1j * sigma))
    return float(np.real(total) * r / m)


# ---------------------------------------------------------------------------
# Residual diagnostics for the block ODE system and its scalar reductions
# ---------------------------------------------------------------------------

#: Default half-width of the centered finite-difference stencils (13 points,
#: formally order >= 8 for derivatives up to the fourth).
STENCIL_HALFWIDTH = 6

EQ_BLOCK_SYSTEM = "block-system"
EQ_OPERATOR_4TH = "operator-4th-order"
EQ_SCALAR_4TH = "scalar-4th-order"
EQ_SCALAR_TRUNCATED = "scalar-strong-dephasing"


def finite_difference_weights(deriv: int, halfwidth: int) -> np.ndarray:
    """Centered finite-difference weights on integer offsets (Fornberg).

    Returns shape ``(2*halfwidth + 1, deriv + 1)``: column ``k`` holds the
    weights of the k-th derivative; divide by ``dt**k`` on application.
    """
    x = np.arange(-halfwidth, halfwidth + 1, dtype=float)
    n = x.size
    c = np.zeros((n, deriv + 1))
    c[0, 0] = 1.0
    c1, c4 = 1.0, x[0]
    for i in range(1, n):
        mn = min(i, deriv)
        c2, c5, c4 = 1.0, c4, x[i]
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c


def series_derivatives(series: np.ndarray, dt: float, max_deriv: int,
                       halfwidth: int = STENCIL_HALFWIDTH) -> dict[int, np.ndarray]:
    """Derivatives 0..max_deriv of a sampled series at the interior points.

    ``series`` has time on axis 0; outputs are shortened by ``halfwidth`` on
    both ends.
    """
    steps = series.shape[0]
    if steps < 2 * halfwidth + 1:
        raise GridTooCoarse(
            f"need at least {2 * halfwidth + 1} samples for the stencil, got {steps}"
        )
    weights = finite_difference_weights(max_deriv, halfwidth)
    interior = steps - 2 * halfwidth
    out = {}
    for k in range(max_deriv + 1):
        acc = np.zeros((interior,) + series.shape[1:], dtype=series.dtype)
        for j in range(2 * halfwidth + 1):
            acc += weights[j, k] * series[j:j + interior]
        out[k] = acc / dt ** k
    return out


@dataclass(frozen=True)
class ResidualReport:
    """Residual of one differential equation evaluated on simulated data."""

    equation: str
    max_abs_residual: float
    scale: float
    stencil_error: float

    @property
    def relative_residual(self) -> float:
        return self.max_abs_residual / self.scale


def _finalize_report(equation: str, tol: float, residual_builder) -> ResidualReport:
    """Build a report and guard against stencils too coarse for ``tol``."""
    residual, scale = residual_builder(STENCIL_HALFWIDTH)
    residual_lo, _ = residual_builder(STENCIL_HALFWIDTH - 1)
    stencil_error = abs(residual - residual_lo)
    if stencil_error > 0.1 * tol * scale:
        raise GridTooCoarse(
            f"{equation}: stencil error estimate {stencil_error / scale:.3e} (relative) "
            f"exceeds 0.1 x tolerance {tol:.1e}; refine the time grid"
        )
    return ResidualReport(equation=equation, max_abs_residual=residual,
                          scale=scale, stencil_error=stencil_error)


def block_ode_residual(rho00: np.ndarray, rho01: np.ndarray, rho10: np.ndarray,
                       rho11: np.ndarray, dt: float, params: ModelParams,
                       tol: float = 1e-3) -> ResidualReport:
    """Residual of the closed four-block first-order system.

    Valid only with ``gamma0 = 0`` and ``t1_inv = 0``, where the ground /
    excited blocks decouple from the measured level except through the click:

        d rho11 = i g (rho10 a+ - a rho01) - g1 rho11
        d rho00 = i g (rho01 a  - a+ rho10)
        d rho01 = i g (rho00 a+ - a+ rho11) - (g1 + k2)/2 rho01
        d rho10 = i g (rho11 a  - a  rho00) - (g1 + k2)/2 rho10

    The scale is the largest magnitude of any individual term, so the
    relative residual measures cancellation quality.
    """
    if params.gamma0 != 0 or params.t1_inv != 0:
        raise ValueError("block system holds only for gamma0 = 0 and t1_inv = 0")
    g, g1 = params.g, params.gamma1
    gate = 0.5 * (params.gamma1 + params.t2_inv)
    a = lowering_operator(rho11.shape[1])
    ad = a.conj().T

    def build(halfwidth: int):
        d00 = series_derivatives(rho00, dt, 1, halfwidth)
        d01 = series_derivatives(rho01, dt, 1, halfwidth)
        d10 = series_derivatives(rho10, dt, 1, halfwidth)
        d11 = series_derivatives(rho11, dt, 1, halfwidth)
        terms = {
            "rhs11": 1j * g * (d10[0] @ ad - a @ d01[0]) - g1 * d11[0],
            "rhs00": 1j * g * (d01[0] @ a - ad @ d10[0]),
            "rhs01": 1j * g * (d00[0] @ ad - ad @ d11[0]) - gate * d01[0],
            "rhs10": 1j * g * (d11[0] @ a - a @ d00[0]) - gate * d10[0],
        }
        residuals = [d11[1] - terms["rhs11"], d00[1] - terms["rhs00"],
                     d01[1] - terms["rhs01"], d10[1] - terms["rhs10"]]
        scale = max(
            max(float(np.max(np.abs(d[1]))) for d in (d00, d01, d10, d11)),
            max(float(np.max(np.abs(v))) for v in terms.values()),
        )
        residual = max(float(np.max(np.abs(r))) for r in residuals)
        return residual, max(scale, 1e-300)

    return _finalize_report(EQ_BLOCK_SYSTEM, tol, build)


def _scalar_coefficients(n: int, params: ModelParams) -> tuple[float, float, float, float, float]:
    """Coefficients of the fourth-order scalar ODE for ``<n| rho11 |n>``.

    Factored form: (d/dt + (k2+g1)/2) applied to the damped-exchange cubic.
    The constant term is written out the long way to mirror the operator
    equation; the pure g^4 pieces cancel to g^2 g1 (k2 + g1)(n + 1).
    """
    g, g1, k2 = params.g, params.gamma1, params.t2_inv
    gate = 0.5 * (k2 + g1)
    c3 = k2 + 2 * g1
    c2 = gate * 0.5 * (k2 + 5 * g1) + 4 * g * g * n + 4 * g * g
    c1 = (k2 + 2 * g1) * (2 * g * g + 2 * g * g * n) + g1 * gate * gate
    c0 = (4 * g ** 4 + 4 * g ** 4 * n * n + 2 * g * g * g1 * gate
          + 8 * g ** 4 * n + 2 * g * g * n * g1 * gate - 4 * g ** 4 * (n + 1) ** 2)
    return 1.0, c3, c2, c1, c0


def scalar_ode_residual(x: np.ndarray, dt: float, n: int, params: ModelParams,
                        tol: float = 1e-3, truncated: bool = False) -> ResidualReport:
    """Residual of the fourth-order scalar ODE for ``x(t) = <n| rho11(t) |n>``.

    With ``truncated=True`` the strong-dephasing truncation

        x'''' + k2 x''' + k2^2/4 x'' + g1 k2^2/4 x' + k2 g^2 g1 (1+n) x = 0

    is evaluated instead; its residual is a diagnostic only and is small
    only deep in the strong-dephasing regime (g, gamma1 << 1/T2).
    """
    if params.gamma0 != 0 or params.t1_inv != 0:
        raise ValueError("scalar reduction holds only for gamma0 = 0 and t1_inv = 0")
    if truncated:
        k2, g, g1 = params.t2_inv, params.g, params.gamma1
        coeffs = (1.0, k2, 0.25 * k2 ** 2, 0.25 * g1 * k2 ** 2, k2 * g * g * g1 * (1 + n))
        equation = EQ_SCALAR_TRUNCATED
    else:
        coeffs = _scalar_coefficients(n, params)
        equation = EQ_SCALAR_4TH

    def build(halfwidth: int):
        d = series_derivatives(np.asarray(x), dt, 4, halfwidth)
        terms = [coeffs[i] * d[4 - i] for i in range(5)]
        residual = float(np.max(np.abs(sum(terms))))
        scale = max(max(float(np.max(np.abs(term))) for term in terms), 1e-300)
        return residual, scale

    return _finalize_report(equation, tol, build)


def operator_ode_residual(rho11: np.ndarray, dt: float, params: ModelParams,
                          tol: float = 1e-3) -> ResidualReport:
    """Residual of the fourth-order operator ODE satisfied by the excited block.

    Uses the anticommutator superoperator ``D0[f] = g^2 {a+ a, f}``; the last
    term couples through ``a a+ . a a+`` and is what prevents the equation
    from closing element-wise except on Fock diagonals.
    """
    if params.gamma0 != 0 or params.t1_inv != 0:
        raise ValueError("operator reduction holds only for gamma0 = 0 and t1_inv = 0")
    g, g1, k2 = params.g, params.gamma1, params.t2_inv
    gate = 0.5 * (k2 + g1)
    n_cutoff = rho11.shape[1]
    a = lowering_operator(n_cutoff)
    ad = a.conj().T
    num = number_operator(n_cutoff)
    aad = a @ ad

    def d0(f: np.ndarray) -> np.ndarray:
        return g * g * (num @ f + f @ num)

    def build(halfwidth: int):
        d = series_derivatives(rho11, dt, 4, halfwidth)
        terms = [
            d[4],
            (k2 + 2 * g1) * d[3],
            gate * 0.5 * (k2 + 5 * g1) * d[2] + 2 * d0(d[2]) + 4 * g * g * d[2],
            (k2 + 2 * g1) * (2 * g * g * d[1] + d0(d[1])) + g1 * gate * gate * d[1],
            (4 * g ** 4 * d[0] + d0(d0(d[0])) + 2 * g * g * g1 * gate * d[0]
             + 4 * g * g * d0(d[0]) + g1 * gate * d0(d[0])),
            -4 * g ** 4 * (aad @ d[0] @ aad),
        ]
        residual = float(np.max(np.abs(sum(terms))))
        scale = max(max(float(np.max(np.abs(term))) for term in terms), 1e-300)
        return residual, scale

    return _finalize_report(EQ_OPERATOR_4TH, tol, build)
