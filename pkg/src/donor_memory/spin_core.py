"""Operator algebra for the donor electron-nuclear two-spin system.

Everything downstream works in the fixed product basis

    index 0: |up, Up>      (electron up,   nucleus up)
    index 1: |up, Down>
    index 2: |down, Up>    <- initialized state
    index 3: |down, Down>

with the electron as the first tensor factor. Spin operators use the
S = sigma/2 convention, so the hyperfine term reads (A/4) sigma.sigma and the
electron transitions sit at gamma_e*B0 +/- A/2. The nuclear Zeeman term enters
with a *negative* sign (the 31P nuclear moment is positive), which puts the
nuclear transitions at A/2 + gamma_n*B0 in the electron-down manifold and
A/2 - gamma_n*B0 in the electron-up manifold, i.e. the measured ~76 MHz and
~22 MHz operating points at 1.55 T, and makes |down, Up> the ground state.

All frequencies are in Hz (cycles per second), times in seconds.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

HERMITICITY_TOL = 1e-12
TRACE_TOL = 1e-12
EIGENVALUE_TOL = 1e-10
ORTHONORMALITY_TOL = 1e-10

BASIS_LABELS = ("up,Up", "up,Down", "down,Up", "down,Down")

_SIGMA = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def _as_matrix(obj) -> np.ndarray:
    """Accept a raw 4x4 array or any wrapper exposing `.matrix`."""
    mat = getattr(obj, "matrix", obj)
    arr = np.asarray(mat, dtype=complex)
    if arr.shape != (4, 4):
        raise ValueError(f"expected a 4x4 matrix, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class DonorParams:
    """Physical constants of the four-level donor system.

    gamma_e, gamma_n are gyromagnetic-ratio magnitudes in Hz/T, hyperfine_a
    the contact hyperfine coupling in Hz, b0 the static field in T.
    """

    gamma_e: float = 28.0e9
    gamma_n: float = 17.2e6
    hyperfine_a: float = 97e6
    b0: float = 1.55

    def __post_init__(self):
        for name in ("gamma_e", "gamma_n", "hyperfine_a", "b0"):
            if not getattr(self, name) > 0:
                raise ValueError(f"DonorParams.{name} must be strictly positive")


@dataclass(frozen=True)
class TransitionFrequencies:
    """Resonance frequencies of the four addressable two-level transitions."""

    nu_mw_up: float    # electron flip, nucleus Up
    nu_mw_down: float  # electron flip, nucleus Down
    nu_rf_down: float  # nuclear flip, electron down
    nu_rf_up: float    # nuclear flip, electron up

    def as_dict(self) -> dict:
        return {
            "nu_mw_up": self.nu_mw_up,
            "nu_mw_down": self.nu_mw_down,
            "nu_rf_down": self.nu_rf_down,
            "nu_rf_up": self.nu_rf_up,
        }


@dataclass(frozen=True)
class DensityMatrix4:
    """Validated 4x4 density matrix of the electron (x) nucleus pair."""

    matrix: np.ndarray

    def __post_init__(self):
        arr = _as_matrix(self.matrix)
        if np.max(np.abs(arr - arr.conj().T)) > HERMITICITY_TOL:
            raise ValueError("density matrix is not Hermitian to 1e-12")
        if abs(np.trace(arr).real - 1.0) > TRACE_TOL or abs(np.trace(arr).imag) > TRACE_TOL:
            raise ValueError("density matrix trace must be 1 to 1e-12")
        evals = np.linalg.eigvalsh(arr)
        if evals.min() < -EIGENVALUE_TOL:
            raise ValueError(f"density matrix has negative eigenvalue {evals.min():.3e}")
        arr.setflags(write=False)
        object.__setattr__(self, "matrix", arr)

    @classmethod
    def from_state_vector(cls, psi) -> "DensityMatrix4":
        v = np.asarray(psi, dtype=complex).reshape(4)
        v = v / np.linalg.norm(v)
        return cls(np.outer(v, v.conj()))

    @classmethod
    def basis_state(cls, index: int) -> "DensityMatrix4":
        v = np.zeros(4, dtype=complex)
        v[index] = 1.0
        return cls(np.outer(v, v.conj()))

    @classmethod
    def maximally_mixed(cls) -> "DensityMatrix4":
        return cls(np.eye(4, dtype=complex) / 4.0)


@dataclass(frozen=True)
class Hamiltonian4:
    """4x4 Hamiltonian in frequency units (Hz) with its approximation tag."""

    matrix: np.ndarray
    approximation: str = "secular"

    def __post_init__(self):
        arr = _as_matrix(self.matrix)
        if np.max(np.abs(arr - arr.conj().T)) > HERMITICITY_TOL * max(1.0, np.abs(arr).max()):
            raise ValueError("Hamiltonian is not Hermitian")
        if self.approximation not in ("full", "secular"):
            raise ValueError("approximation must be 'full' or 'secular'")
        arr.setflags(write=False)
        object.__setattr__(self, "matrix", arr)


def pauli_operator(target: str, axis: str) -> np.ndarray:
    """Pauli operator on one spin, identity on the other, in the fixed basis."""
    if axis not in _SIGMA:
        raise ValueError(f"axis must be one of I,X,Y,Z, got {axis!r}")
    if target == "electron":
        return np.kron(_SIGMA[axis], _SIGMA["I"])
    if target == "nucleus":
        return np.kron(_SIGMA["I"], _SIGMA[axis])
    raise ValueError(f"target must be 'electron' or 'nucleus', got {target!r}")


def build_hamiltonian(p: DonorParams, approx: str = "secular") -> Hamiltonian4:
    """Static Hamiltonian gamma_e*B0*Sz - gamma_n*B0*Iz + A S.I (S = sigma/2).

    The secular form drops the flip-flop part (A/4)(XX + YY), negligible for
    gamma_e*B0 >> A; the full form keeps it, coupling |down,Up> and |up,Down>
    with matrix element A/2.
    """
    sz_e = pauli_operator("electron", "Z")
    sz_n = pauli_operator("nucleus", "Z")
    h = 0.5 * p.gamma_e * p.b0 * sz_e - 0.5 * p.gamma_n * p.b0 * sz_n
    h = h + 0.25 * p.hyperfine_a * (sz_e @ sz_n)
    if approx == "full":
        sx = pauli_operator("electron", "X") @ pauli_operator("nucleus", "X")
        sy = pauli_operator("electron", "Y") @ pauli_operator("nucleus", "Y")
        h = h + 0.25 * p.hyperfine_a * (sx + sy)
    elif approx != "secular":
        raise ValueError("approx must be 'full' or 'secular'")
    return Hamiltonian4(h, approximation=approx)


def eigensystem(h: Hamiltonian4) -> tuple[np.ndarray, np.ndarray]:
    """Ascending eigenvalues and orthonormal eigenvector columns of h."""
    arr = _as_matrix(h)
    scale = max(1.0, np.abs(arr).max())
    if np.max(np.abs(arr - arr.conj().T)) > 1e-9 * scale:
        raise ValueError("eigensystem requires a Hermitian input")
    evals, evecs = np.linalg.eigh(arr)
    return evals, evecs


def transition_frequencies(p: DonorParams) -> TransitionFrequencies:
    """Operating frequencies of the two MW and two RF transitions.

    These are exact eigenvalue differences of the secular Hamiltonian:
    nu_mw_up = E(up,Up) - E(down,Up), nu_rf_down = E(down,Down) - E(down,Up),
    and so on.
    """
    return TransitionFrequencies(
        nu_mw_up=p.gamma_e * p.b0 + p.hyperfine_a / 2.0,
        nu_mw_down=p.gamma_e * p.b0 - p.hyperfine_a / 2.0,
        nu_rf_down=p.hyperfine_a / 2.0 + p.gamma_n * p.b0,
        nu_rf_up=p.hyperfine_a / 2.0 - p.gamma_n * p.b0,
    )


def expectation(rho, obs) -> float:
    """Tr(rho * obs) for a Hermitian observable, as a real number."""
    r = _as_matrix(rho)
    o = _as_matrix(obs)
    scale = max(1.0, np.abs(o).max())
    if np.max(np.abs(o - o.conj().T)) > 1e-10 * scale:
        raise ValueError("expectation requires a Hermitian observable")
    val = np.trace(r @ o)
    return float(val.real)


def purity(rho) -> float:
    """Tr(rho^2); 1 for pure states, 1/4 for the maximally mixed state."""
    r = _as_matrix(rho)
    return float(np.trace(r @ r).real)
