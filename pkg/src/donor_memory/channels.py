"""Single-qubit channel utilities in the {I, X, iY, Z} operator basis.

A channel acts as rho -> sum_mn chi[m,n] E_m rho E_n^dagger with
E = (I, sigma_x, i*sigma_y, sigma_z). The iY element keeps chi real for
real processes; chi is Hermitian and positive semidefinite for any physical
channel, and its diagonal holds the Pauli-operator weights. Conversion to
the plain {I, X, Y, Z} basis is a diagonal unitary congruence.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

SIGMA_I = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)

OPERATOR_BASIS = (SIGMA_I, SIGMA_X, 1j * SIGMA_Y, SIGMA_Z)
BASIS_LABELS = ("I", "X", "iY", "Z")

# Phases relating {I,X,iY,Z} to {I,X,Y,Z}: B_m = phase_m * P_m.
_BASIS_PHASES = np.array([1.0, 1.0, 1j, 1.0])


def chi_to_pauli_basis(chi: np.ndarray) -> np.ndarray:
    """Re-express chi from {I,X,iY,Z} in the conventional {I,X,Y,Z} basis."""
    d = np.diag(_BASIS_PHASES)
    return d @ np.asarray(chi, dtype=complex) @ d.conj().T


def chi_from_pauli_basis(chi_pauli: np.ndarray) -> np.ndarray:
    d = np.diag(_BASIS_PHASES.conj())
    return d @ np.asarray(chi_pauli, dtype=complex) @ d.conj().T


def apply_chi(chi: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Apply the channel described by chi to a 2x2 density matrix."""
    rho = np.asarray(rho, dtype=complex)
    out = np.zeros((2, 2), dtype=complex)
    for m, em in enumerate(OPERATOR_BASIS):
        for n, en in enumerate(OPERATOR_BASIS):
            c = chi[m, n]
            if c != 0:
                out += c * (em @ rho @ en.conj().T)
    return out


def chi_from_kraus(kraus_ops: Sequence[np.ndarray]) -> np.ndarray:
    """chi matrix of a channel given its Kraus operators.

    Expands each Kraus operator K = sum_m a_m E_m over the operator basis
    (coefficients via the Hilbert-Schmidt inner product) and accumulates
    chi[m,n] = sum_K a_m a_n*.
    """
    chi = np.zeros((4, 4), dtype=complex)
    for k in kraus_ops:
        k = np.asarray(k, dtype=complex)
        coeff = np.array([np.trace(e.conj().T @ k) / 2.0 for e in OPERATOR_BASIS])
        chi += np.outer(coeff, coeff.conj())
    return chi


def chi_from_unitary(u: np.ndarray) -> np.ndarray:
    return chi_from_kraus([u])


def depolarizing_chi(p: float) -> np.ndarray:
    """chi of rho -> (1-p) rho + p I/2: diag(1-3p/4, p/4, p/4, p/4)."""
    return np.diag([1 - 0.75 * p, 0.25 * p, 0.25 * p, 0.25 * p]).astype(complex)


def identity_chi() -> np.ndarray:
    chi = np.zeros((4, 4), dtype=complex)
    chi[0, 0] = 1.0
    return chi


def trace_preservation_residual(chi: np.ndarray) -> float:
    """Max-abs deviation of sum_mn chi[m,n] E_n^dag E_m from the identity."""
    acc = np.zeros((2, 2), dtype=complex)
    for m, em in enumerate(OPERATOR_BASIS):
        for n, en in enumerate(OPERATOR_BASIS):
            acc += chi[m, n] * (en.conj().T @ em)
    return float(np.max(np.abs(acc - np.eye(2))))


# States of the 6-axis set; averaging a quadratic functional over them equals
# the Haar average exactly (the set is a projective 2-design).
def two_design_states() -> list[np.ndarray]:
    kets = [
        np.array([1, 0], dtype=complex),
        np.array([0, 1], dtype=complex),
        np.array([1, 1], dtype=complex) / math.sqrt(2),
        np.array([1, -1], dtype=complex) / math.sqrt(2),
        np.array([1, 1j], dtype=complex) / math.sqrt(2),
        np.array([1, -1j], dtype=complex) / math.sqrt(2),
    ]
    return [np.outer(k, k.conj()) for k in kets]


def haar_state(rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=2) + 1j * rng.normal(size=2)
    v /= np.linalg.norm(v)
    return np.outer(v, v.conj())


def average_state_fidelity(
    channel: Callable[[np.ndarray], np.ndarray],
    *,
    states: Sequence[np.ndarray] | None = None,
) -> float:
    """Mean input-output fidelity <psi|E(|psi><psi|)|psi> over pure states.

    With the default state set (the 6-axis 2-design) this equals the Haar
    average exactly; pass explicit states (e.g. Haar samples) otherwise.
    """
    if states is None:
        states = two_design_states()
    vals = []
    for rho in states:
        out = channel(rho)
        vals.append(float(np.trace(rho @ out).real))
    return float(np.mean(vals))


def measure_and_prepare_channel(
    measure_axis: np.ndarray, prep_plus: np.ndarray, prep_minus: np.ndarray
) -> Callable[[np.ndarray], np.ndarray]:
    """Classical storage: measure along an axis, reprepare per outcome."""
    nx, ny, nz = measure_axis
    op = nx * SIGMA_X + ny * SIGMA_Y + nz * SIGMA_Z
    proj_plus = 0.5 * (SIGMA_I + op)
    proj_minus = 0.5 * (SIGMA_I - op)

    def channel(rho):
        p_plus = float(np.trace(proj_plus @ rho).real)
        return p_plus * prep_plus + (1.0 - p_plus) * prep_minus

    return channel


def _bloch_state(theta: float, phi: float) -> np.ndarray:
    n = np.array([math.sin(theta) * math.cos(phi), math.sin(theta) * math.sin(phi), math.cos(theta)])
    return 0.5 * (SIGMA_I + n[0] * SIGMA_X + n[1] * SIGMA_Y + n[2] * SIGMA_Z)


def best_measure_and_prepare_fidelity(grid: int = 24, refine_steps: int = 60) -> float:
    """Brute-force optimum of the Haar-average fidelity over classical
    measure-and-prepare strategies (measurement axis and both repreparations).

    Coarse grid search over all three directions followed by a local
    coordinate refinement. The known optimum is 2/3.
    """
    thetas = np.linspace(0.0, math.pi, grid)
    phis = np.linspace(0.0, 2 * math.pi, 2 * grid, endpoint=False)
    states = two_design_states()

    def avg_fid(params):
        tm, pm, tp, pp, tq, pq = params
        axis = np.array([math.sin(tm) * math.cos(pm), math.sin(tm) * math.sin(pm), math.cos(tm)])
        ch = measure_and_prepare_channel(axis, _bloch_state(tp, pp), _bloch_state(tq, pq))
        return average_state_fidelity(ch, states=states)

    best = -1.0
    best_p = None
    for tm in thetas[:: max(1, grid // 6)]:
        for pm in phis[:: max(1, grid // 6)]:
            # repreparations aligned/anti-aligned with the axis are the
            # natural starting candidates
            cand = (tm, pm, tm, pm, math.pi - tm, pm + math.pi)
            f = avg_fid(cand)
            if f > best:
                best, best_p = f, np.array(cand)

    step = 0.3
    for _ in range(refine_steps):
        improved = False
        for i in range(6):
            for sgn in (+1, -1):
                cand = best_p.copy()
                cand[i] += sgn * step
                f = avg_fid(cand)
                if f > best:
                    best, best_p, improved = f, cand, True
        if not improved:
            step *= 0.5
            if step < 1e-4:
                break
    return best
