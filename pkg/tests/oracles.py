"""Independent reference implementations used only to check the library.

Everything here is deliberately primitive (power series, direct operator
algebra, closed forms derived by hand) so that agreement with the library is
meaningful: none of these routines share code with the paths they validate.
"""

import numpy as np


def taylor_expm(matrix: np.ndarray, t: float, term_tol: float = 1e-16) -> np.ndarray:
    """Matrix exponential by scaled power series.

    Scales ``M t`` down to unit norm, sums the Taylor series until terms fall
    below ``term_tol``, then squares back up.
    """
    m = np.asarray(matrix, dtype=complex) * t
    norm = np.linalg.norm(m, np.inf)
    squarings = max(0, int(np.ceil(np.log2(max(norm, 1e-30)))) + 1)
    m = m / (2 ** squarings)
    result = np.eye(m.shape[0], dtype=complex)
    term = np.eye(m.shape[0], dtype=complex)
    for k in range(1, 200):
        term = term @ m / k
        result = result + term
        if np.max(np.abs(term)) < term_tol:
            break
    for _ in range(squarings):
        result = result @ result
    return result


def master_equation_rhs(h: np.ndarray, jumps: list[np.ndarray], xi: np.ndarray) -> np.ndarray:
    """Right-hand side of the Lindblad master equation, no vectorization."""
    out = -1j * (h @ xi - xi @ h)
    for j in jumps:
        jj = j.conj().T @ j
        out += j @ xi @ j.conj().T - 0.5 * (jj @ xi + xi @ jj)
    return out


def three_level_detection(g: float, gamma1: float, t) -> np.ndarray:
    """Closed-form click probability for a single photon and a bare detector.

    In the one-excitation sector the no-jump evolution is generated by the
    non-Hermitian pair (amplitudes on |1,0> and |0,1>):

        da/dt = -i g b
        db/dt = -i g a - (gamma1/2) b

    whose solution with a(0)=1 gives

        P_m(t) = 1 - e^{-gamma1 t/2} [ (cos(W t/2) + gamma1/(2W) sin(W t/2))^2
                                       + (2g/W)^2 sin^2(W t/2) ]

    with W = sqrt(4 g^2 - gamma1^2/4).
    """
    t = np.asarray(t, dtype=float)
    w = np.sqrt(complex(4 * g ** 2 - gamma1 ** 2 / 4))
    amp_a = np.cos(w * t / 2) + gamma1 / (2 * w) * np.sin(w * t / 2)
    amp_b = (2 * g / w) * np.sin(w * t / 2)
    survival = np.exp(-gamma1 * t / 2) * (np.abs(amp_a) ** 2 + np.abs(amp_b) ** 2)
    return np.real(1.0 - survival)


def random_kraus_channel(dim: int, n_kraus: int, seed: int) -> np.ndarray:
    """Superoperator (row-major vectorization) of a random CPTP map."""
    rng = np.random.default_rng(seed)
    raw = [rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
           for _ in range(n_kraus)]
    total = sum(g.conj().T @ g for g in raw)
    # whiten so the Kraus set resolves the identity
    evals, evecs = np.linalg.eigh(total)
    inv_sqrt = evecs @ np.diag(evals ** -0.5) @ evecs.conj().T
    kraus = [g @ inv_sqrt for g in raw]
    return sum(np.kron(k, k.conj()) for k in kraus)


def random_density(dim: int, seed: int) -> np.ndarray:
    """Random full-rank density matrix."""
    rng = np.random.default_rng(seed)
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = g @ g.conj().T
    return rho / np.trace(rho)


def random_hermitian(dim: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return 0.5 * (g + g.conj().T)
