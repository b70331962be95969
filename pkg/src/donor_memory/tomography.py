"""State and process tomography with maximum-likelihood physicality projection.

State tomography follows the XY-sweep scheme: the readout basis
sigma_phi = cos(phi) sigma_x + sin(phi) sigma_y is scanned by a pi/2 pulse of
phase phi before Z readout, the resulting probability curve is fit by
offset + amplitude*cos(phi - phase), and <sigma_x>, <sigma_y> come from the
fit (the Z component is measured separately with no basis change). Process
tomography maps four spanning inputs through the channel, inverts linearly
for chi in the {I, X, iY, Z} operator basis, and projects onto the physical
set by a weighted least-squares fit over a T^dagger T parametrization.
Error bars on everything come from Monte Carlo resampling of the
reconstructed states within their measurement uncertainties.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import channels
from .fitting import nlls_fit, weighted_linear_regression
from .noise import NoiseConfig, ShotRecord, estimate_probability, measure_electron_z, reported_probability
from .rng import stream
from .spin_core import DensityMatrix4, _as_matrix

# Stream-domain tags keeping tomography and Monte Carlo draws independent.
_DOMAIN_TOMO = 1
_DOMAIN_MC = 2

_MLE_RESTART_SEED = 0x5EED  # deterministic internal perturbation seed for restarts


@dataclass(frozen=True)
class TomographyPlan:
    """Measurement bases: XY-plane phases in degrees plus an optional Z point."""

    phases: tuple[float, ...] = tuple(float(p) for p in range(0, 360, 15))
    include_z: bool = True

    def __post_init__(self):
        object.__setattr__(self, "phases", tuple(float(p) for p in self.phases))
        if len(set(self.phases)) != len(self.phases):
            raise ValueError("tomography phases must be distinct")
        if any(not 0.0 <= p < 360.0 for p in self.phases):
            raise ValueError("tomography phases must lie in [0, 360)")
        if list(self.phases) != sorted(self.phases):
            raise ValueError("tomography phases must be sorted")


@dataclass
class BlochVector:
    x: float
    y: float
    z: float
    x_err: float = 0.0
    y_err: float = 0.0
    z_err: float = 0.0

    def norm(self) -> float:
        return math.sqrt(self.x ** 2 + self.y ** 2 + self.z ** 2)

    def projected(self) -> "BlochVector":
        """Radially rescale onto the unit ball if the estimate overshoots."""
        n = self.norm()
        if n <= 1.0:
            return self
        return BlochVector(
            self.x / n, self.y / n, self.z / n, self.x_err, self.y_err, self.z_err
        )

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.z)


@dataclass
class SinusoidFit:
    amplitude: float
    phase_deg: Optional[float]
    offset: float
    amplitude_err: float
    phase_err_deg: float
    offset_err: float
    covariance: np.ndarray        # over (offset, a, b) with a,b the cos/sin coefficients
    a: float
    b: float
    phase_defined: bool
    converged: bool
    message: str = ""


def sinusoid_fit(phases_deg, probs, prob_errs=None) -> SinusoidFit:
    """Least-squares fit of offset + amplitude*cos(phi - phase) to a phase sweep.

    Linear in (offset, a, b) with a = amplitude*cos(phase), b = amplitude*sin(phase),
    so the fit is exact and deterministic. A fit whose amplitude is consistent
    with zero within one sigma reports the phase as undefined.
    """
    phases_deg = np.asarray(phases_deg, dtype=float)
    probs = np.asarray(probs, dtype=float)
    if phases_deg.size < 4:
        raise ValueError("sinusoid_fit needs at least 4 points")
    rad = np.radians(phases_deg)
    design = np.column_stack([np.ones_like(rad), np.cos(rad), np.sin(rad)])
    errs = None
    if prob_errs is not None:
        errs = np.asarray(prob_errs, dtype=float)
        if np.all(errs <= 0):
            errs = None
        else:
            errs = np.clip(errs, max(1e-12, errs[errs > 0].min() * 1e-3), None)
    try:
        params, cov = weighted_linear_regression(design, probs, errs)
    except np.linalg.LinAlgError:
        return SinusoidFit(
            amplitude=0.0, phase_deg=None, offset=float(np.mean(probs)),
            amplitude_err=math.inf, phase_err_deg=math.inf, offset_err=math.inf,
            covariance=np.full((3, 3), np.nan), a=0.0, b=0.0,
            phase_defined=False, converged=False, message="singular design matrix",
        )
    offset, a, b = params
    if errs is None and probs.size > 3:
        # unweighted fit: scale the covariance by the residual variance
        resid = probs - design @ params
        cov = cov * float(resid @ resid) / (probs.size - 3)
    amp = math.hypot(a, b)
    saa, sbb, sab = cov[1, 1], cov[2, 2], cov[1, 2]
    if amp > 0:
        amp_err = math.sqrt(max(0.0, (a * a * saa + b * b * sbb + 2 * a * b * sab))) / amp
        ph_err = math.degrees(
            math.sqrt(max(0.0, (b * b * saa + a * a * sbb - 2 * a * b * sab))) / amp ** 2
        )
    else:
        amp_err = math.sqrt(max(saa, sbb, 0.0))
        ph_err = math.inf
    defined = amp > max(amp_err, 1e-12)
    phase = math.degrees(math.atan2(b, a)) % 360.0 if defined else None
    return SinusoidFit(
        amplitude=amp, phase_deg=phase, offset=float(offset),
        amplitude_err=amp_err, phase_err_deg=ph_err,
        offset_err=math.sqrt(max(cov[0, 0], 0.0)),
        covariance=cov, a=float(a), b=float(b),
        phase_defined=defined, converged=True,
    )


@dataclass
class XYTomographyData:
    """Per-phase probability estimates of one XY sweep plus the Z point."""

    phases: tuple[float, ...]
    means: np.ndarray
    stds: np.ndarray
    z_mean: Optional[float]
    z_std: Optional[float]
    records: list[ShotRecord] = field(default_factory=list)
    analytic: bool = False


def run_xy_tomography(
    prepare: Callable[[Optional[float]], DensityMatrix4],
    plan: TomographyPlan,
    cfg: NoiseConfig,
    *,
    analytic: bool = False,
    seed_path: tuple[int, ...] = (),
) -> XYTomographyData:
    """Sweep the tomography pulse phase and estimate the click probability.

    `prepare(phi)` must return the pre-readout state with the tomography
    pi/2 pulse at phase phi appended (phi=None for the bare Z readout).
    In analytic mode the visibility-scaled probabilities are recorded
    exactly; otherwise each (point, repetition) draws from its own stream.
    """
    means, stds, records = [], [], []
    for idx, phi in enumerate(plan.phases):
        rho = prepare(phi)
        means_i, stds_i = _measure_point(
            rho, cfg, analytic, (*seed_path, _DOMAIN_TOMO, idx), phi, records
        )
        means.append(means_i)
        stds.append(stds_i)
    z_mean = z_std = None
    if plan.include_z:
        rho = prepare(None)
        z_mean, z_std = _measure_point(
            rho, cfg, analytic, (*seed_path, _DOMAIN_TOMO, len(plan.phases)), None, records
        )
    return XYTomographyData(
        phases=plan.phases, means=np.array(means), stds=np.array(stds),
        z_mean=z_mean, z_std=z_std, records=records, analytic=analytic,
    )


def _measure_point(rho, cfg, analytic, path, phi, records) -> tuple[float, float]:
    if analytic:
        mat = _as_matrix(rho)
        p_up = float(np.clip((mat[0, 0] + mat[1, 1]).real, 0.0, 1.0))
        return reported_probability(p_up, cfg.readout_visibility), 0.0
    recs = [
        measure_electron_z(
            rho, cfg, stream(cfg.rng_seed, *path, rep), basis_phase=phi, repetition_index=rep
        )
        for rep in range(cfg.repetitions)
    ]
    records.extend(recs)
    return estimate_probability(recs)


def fit_point_errors(stds, repetitions: int) -> Optional[np.ndarray]:
    """Per-point uncertainties for curve fits: std of the mean over
    repetitions, floored at half-count resolution to keep weights finite."""
    stds = np.asarray(stds, dtype=float)
    if stds.size == 0 or np.all(stds <= 0):
        return None
    floor = 1.0 / (2.0 * max(1, repetitions)) * 1e-3
    return np.clip(stds / math.sqrt(max(1, repetitions)), floor, None)


def bloch_from_tomography(
    fit: SinusoidFit,
    z_estimate: Optional[tuple[float, float]],
    visibility: float,
) -> BlochVector:
    """Bloch components from the XY fit and the separate Z estimate.

    <sx> = 2*amplitude*cos(phase)/v, <sy> = 2*amplitude*sin(phase)/v,
    <sz> = (2*z - 1)/v, errors propagated to first order from the fit
    covariance and the Z statistics.
    """
    if visibility == 0:
        raise ValueError("visibility must be nonzero to unscale Bloch components")
    x = 2.0 * fit.a / visibility
    y = 2.0 * fit.b / visibility
    x_err = 2.0 * math.sqrt(max(fit.covariance[1, 1], 0.0)) / visibility
    y_err = 2.0 * math.sqrt(max(fit.covariance[2, 2], 0.0)) / visibility
    if z_estimate is None:
        z, z_err = 0.0, 0.0
    else:
        z = (2.0 * z_estimate[0] - 1.0) / visibility
        z_err = 2.0 * z_estimate[1] / visibility
    return BlochVector(x, y, z, x_err, y_err, z_err)


def density_from_bloch(b) -> np.ndarray:
    """2x2 electron-subspace density matrix (I + b.sigma)/2, radially projected."""
    if isinstance(b, BlochVector):
        vec = np.array([b.x, b.y, b.z], dtype=float)
    else:
        vec = np.asarray(b, dtype=float)
    n = np.linalg.norm(vec)
    if n > 1.0:
        vec = vec / n
    return 0.5 * (
        channels.SIGMA_I
        + vec[0] * channels.SIGMA_X
        + vec[1] * channels.SIGMA_Y
        + vec[2] * channels.SIGMA_Z
    )


def state_fidelity(rho, target) -> float:
    """<psi|rho|psi> for a pure target given as a ket or rank-1 density matrix."""
    rho = np.asarray(rho, dtype=complex)
    target = np.asarray(target, dtype=complex)
    if target.ndim == 1:
        val = target.conj() @ rho @ target
    else:
        val = np.trace(target @ rho)
    return float(val.real)


def electron_bloch(rho4) -> tuple[float, float, float]:
    """Bloch vector of the electron after tracing out the nucleus."""
    m = _as_matrix(rho4)
    e01 = m[0, 2] + m[1, 3]
    x = 2.0 * e01.real
    y = -2.0 * e01.imag
    z = float((m[0, 0] + m[1, 1] - m[2, 2] - m[3, 3]).real)
    return (x, y, z)


# --- process tomography ------------------------------------------------------

@dataclass
class ProcessMatrix:
    """chi over {I, X, iY, Z} with element-wise error estimates.

    Errors are complex: the real part is the std of Re(chi), the imaginary
    part the std of Im(chi), both from Monte Carlo resampling.
    """

    chi: np.ndarray
    errors: Optional[np.ndarray] = None
    basis: tuple[str, ...] = channels.BASIS_LABELS
    mle_converged: bool = True
    flagged: bool = False

    @property
    def process_fidelity(self) -> float:
        return float(self.chi[0, 0].real)

    def pauli_weights(self) -> dict[str, float]:
        return {lbl: float(self.chi[k, k].real) for k, lbl in enumerate(self.basis)}


def linear_inversion_chi(inputs: Sequence[np.ndarray], outputs: Sequence[np.ndarray]) -> np.ndarray:
    """chi from exact linear inversion of four input/output pairs."""
    if len(inputs) != 4 or len(outputs) != 4:
        raise ValueError("process tomography needs exactly four input/output pairs")
    vin = np.column_stack([np.asarray(r, dtype=complex).flatten(order="F") for r in inputs])
    vout = np.column_stack([np.asarray(r, dtype=complex).flatten(order="F") for r in outputs])
    if abs(np.linalg.det(vin)) < 1e-12:
        raise ValueError("input states do not span the operator space")
    superop = vout @ np.linalg.inv(vin)
    basis_map = np.zeros((16, 16), dtype=complex)
    for m, em in enumerate(channels.OPERATOR_BASIS):
        for n, en in enumerate(channels.OPERATOR_BASIS):
            basis_map[:, 4 * m + n] = np.kron(en.conj(), em).flatten(order="C")
    chi_vec = np.linalg.solve(basis_map, superop.flatten(order="C"))
    return chi_vec.reshape(4, 4)


_OFF_DIAG = ((1, 0), (2, 0), (2, 1), (3, 0), (3, 1), (3, 2))
_OFF_ROWS = np.array([ij[0] for ij in _OFF_DIAG])
_OFF_COLS = np.array([ij[1] for ij in _OFF_DIAG])


def _lower_triangular(theta: np.ndarray) -> np.ndarray:
    t = np.zeros((4, 4), dtype=complex)
    t[np.arange(4), np.arange(4)] = theta[0:4]
    t[_OFF_ROWS, _OFF_COLS] = theta[4::2] + 1j * theta[5::2]
    return t


def _theta_from_chi(chi: np.ndarray) -> np.ndarray:
    """Cholesky-style parametrization of the nearest PSD unit-trace matrix."""
    h = 0.5 * (chi + chi.conj().T)
    evals, evecs = np.linalg.eigh(h)
    evals = np.clip(evals.real, 1e-10, None)
    psd = (evecs * evals) @ evecs.conj().T
    psd = psd / np.trace(psd).real
    t = np.linalg.cholesky(psd + 1e-12 * np.eye(4))  # lower triangular
    theta = np.zeros(16)
    theta[0:4] = np.real(np.diag(t))
    theta[4::2] = t[_OFF_ROWS, _OFF_COLS].real
    theta[5::2] = t[_OFF_ROWS, _OFF_COLS].imag
    return theta


def _chi_from_theta(theta: np.ndarray) -> np.ndarray:
    t = _lower_triangular(theta)
    chi = t @ t.conj().T
    tr = np.trace(chi).real
    if tr <= 0:
        return np.eye(4, dtype=complex) / 4.0
    return chi / tr


_TP_MATRICES = np.array(
    [
        [en.conj().T @ em for en in channels.OPERATOR_BASIS]
        for em in channels.OPERATOR_BASIS
    ]
)  # shape (4, 4, 2, 2), indexed [m, n]


def _rho_components(rho: np.ndarray) -> np.ndarray:
    return np.array([rho[0, 0].real, rho[1, 1].real, rho[0, 1].real, rho[0, 1].imag])


def _hermitian_coords(chi: np.ndarray) -> np.ndarray:
    c = np.zeros(16)
    c[0:4] = np.diag(chi).real
    k = 4
    for i in range(4):
        for j in range(i + 1, 4):
            c[k] = chi[i, j].real
            c[k + 1] = chi[i, j].imag
            k += 2
    return c


def _chi_from_hermitian_coords(c: np.ndarray) -> np.ndarray:
    chi = np.zeros((4, 4), dtype=complex)
    chi[np.arange(4), np.arange(4)] = c[0:4]
    k = 4
    for i in range(4):
        for j in range(i + 1, 4):
            chi[i, j] = c[k] + 1j * c[k + 1]
            chi[j, i] = c[k] - 1j * c[k + 1]
            k += 2
    return chi


_TP_K, _TP_PINV, _TP_TARGET = None, None, None


def _project_trace_preserving(chi: np.ndarray) -> np.ndarray:
    """Frobenius projection of a Hermitian chi onto the TP affine set."""
    global _TP_K, _TP_PINV, _TP_TARGET
    if _TP_K is None:
        rows = _component_rows(_TP_MATRICES)
        _TP_K = np.column_stack([rows @ _chi_real_vec(h) for h in _HERMITIAN_BASIS])
        _TP_PINV = _TP_K.T @ np.linalg.inv(_TP_K @ _TP_K.T)
        _TP_TARGET = np.array([1.0, 1.0, 0.0, 0.0])
    c = _hermitian_coords(chi)
    c = c - _TP_PINV @ (_TP_K @ c - _TP_TARGET)
    return _chi_from_hermitian_coords(c)


def _project_psd_unit_trace(chi: np.ndarray) -> np.ndarray:
    """Projection onto {PSD, trace 1} by eigenvalue simplex projection."""
    h = 0.5 * (chi + chi.conj().T)
    evals, evecs = np.linalg.eigh(h)
    lam = np.sort(evals)[::-1]
    csum = np.cumsum(lam)
    positive = np.nonzero(lam - (csum - 1.0) / np.arange(1, lam.size + 1) > 0)[0]
    k = positive[-1] + 1 if positive.size else 1
    tau = (csum[k - 1] - 1.0) / k
    clipped = np.clip(evals - tau, 0.0, None)
    return (evecs * clipped) @ evecs.conj().T


def _enforce_physicality(chi: np.ndarray, max_iter: int = 2000, tol: float = 1e-10) -> np.ndarray:
    """Dykstra alternating projection onto the physical (CPTP-like) set.

    A no-op when chi is already feasible; otherwise moves to the nearest
    point of {trace-preserving} intersect {PSD, unit trace}, which is
    nonempty, so the iteration converges.
    """
    x = 0.5 * (chi + chi.conj().T)
    p = np.zeros_like(x)
    q = np.zeros_like(x)
    for _ in range(max_iter):
        y = _project_psd_unit_trace(x + p)
        p = x + p - y
        x_new = _project_trace_preserving(y + q)
        q = y + q - x_new
        if (
            np.abs(x_new - y).max() < tol
            and np.linalg.eigvalsh(x_new).min() > -tol
        ):
            return x_new
        x = x_new
    return x


def _hermitian_basis() -> np.ndarray:
    mats = []
    for i in range(4):
        m = np.zeros((4, 4), dtype=complex)
        m[i, i] = 1.0
        mats.append(m)
    for i in range(4):
        for j in range(i + 1, 4):
            m = np.zeros((4, 4), dtype=complex)
            m[i, j] = 1.0
            m[j, i] = 1.0
            mats.append(m)
            m = np.zeros((4, 4), dtype=complex)
            m[i, j] = 1j
            m[j, i] = -1j
            mats.append(m)
    return np.stack(mats)


_HERMITIAN_BASIS = _hermitian_basis()


# Constant basis matrices of the lower-triangular parametrization: T = sum theta_k B_k.
def _parametrization_basis() -> list[np.ndarray]:
    mats = []
    for i in range(4):
        b = np.zeros((4, 4), dtype=complex)
        b[i, i] = 1.0
        mats.append(b)
    for (i, j) in [(1, 0), (2, 0), (2, 1), (3, 0), (3, 1), (3, 2)]:
        b = np.zeros((4, 4), dtype=complex)
        b[i, j] = 1.0
        mats.append(b)
        bi = np.zeros((4, 4), dtype=complex)
        bi[i, j] = 1j
        mats.append(bi)
    return mats


_PARAM_BASIS = _parametrization_basis()
_PARAM_STACK = np.stack(_PARAM_BASIS)


def _component_rows(mats: np.ndarray) -> np.ndarray:
    """Real-linear rows mapping (Re chi, Im chi) to the four Hermitian
    components (p00, p11, Re p01, Im p01) of sum_mn chi_mn * mats[m, n]."""
    rows = np.zeros((4, 32))
    picks = ((0, 0, "re"), (1, 1, "re"), (0, 1, "re"), (0, 1, "im"))
    for r, (a, b, part) in enumerate(picks):
        gvals = mats[:, :, a, b].ravel()
        if part == "re":
            rows[r, :16] = gvals.real
            rows[r, 16:] = -gvals.imag
        else:
            rows[r, :16] = gvals.imag
            rows[r, 16:] = gvals.real
    return rows


def _chi_real_vec(chi: np.ndarray) -> np.ndarray:
    return np.concatenate([chi.real.ravel(), chi.imag.ravel()])


def mle_project(
    raw_chi: np.ndarray,
    inputs: Sequence[np.ndarray],
    measured_outputs: Sequence[np.ndarray],
    measurement_errors: Optional[Sequence[np.ndarray]] = None,
    *,
    penalty: float = 1e3,
    restarts: int = 5,
) -> ProcessMatrix:
    """Nearest physical chi by weighted least squares over chi = T^dag T / tr.

    The parametrization guarantees Hermiticity and positivity; trace
    preservation is enforced through a penalty of `penalty` relative to the
    data weights on the components of sum_mn chi_mn E_n^dag E_m - 1.
    Restarts with perturbed initializations are attempted if the optimizer
    stalls; a non-converged result is returned flagged, carrying the best
    chi found.
    """
    inputs = [np.asarray(r, dtype=complex) for r in inputs]
    measured = [np.asarray(r, dtype=complex) for r in measured_outputs]
    if measurement_errors is None:
        sig = [np.ones(4) for _ in measured]
    else:
        sig = [np.clip(np.asarray(s, dtype=float), 1e-6, None) for s in measurement_errors]

    # Residuals are linear in chi: precompute the real map A from
    # (Re chi, Im chi) to all weighted data components plus the TP penalty.
    blocks = []
    y_blocks = []
    for j, rho in enumerate(inputs):
        g = np.empty((4, 4, 2, 2), dtype=complex)
        for m, em in enumerate(channels.OPERATOR_BASIS):
            for n, en in enumerate(channels.OPERATOR_BASIS):
                g[m, n] = em @ rho @ en.conj().T
        blocks.append(_component_rows(g) / np.asarray(sig[j])[:, None])
        y_blocks.append(_rho_components(measured[j]) / sig[j])
    tp_weight = penalty * float(np.mean([1.0 / s for s in sig]))
    blocks.append(_component_rows(_TP_MATRICES) * tp_weight)
    y_blocks.append(tp_weight * np.array([1.0, 1.0, 0.0, 0.0]))
    a_map = np.vstack(blocks)
    # Gauge row: chi = T T^dag / tr is scale-invariant in T, which leaves a
    # flat direction in the fit; pinning tr(T T^dag) = 1 removes it without
    # affecting chi.
    gauge_weight = tp_weight
    y_data = np.concatenate(y_blocks + [np.array([0.0])])

    def model(_x, theta):
        t = _lower_triangular(theta)
        gram = t @ t.conj().T
        tr = np.trace(gram).real
        chi = gram / tr if tr > 0 else np.eye(4, dtype=complex) / 4.0
        return np.concatenate(
            [a_map @ _chi_real_vec(chi), [gauge_weight * (tr - 1.0)]]
        )

    def jacobian(_x, theta):
        t = _lower_triangular(theta)
        gram = t @ t.conj().T
        tr = np.trace(gram).real
        if tr <= 0:
            return np.zeros((a_map.shape[0] + 1, 16))
        chi = gram / tr
        bt = np.einsum("kij,jl->kil", _PARAM_STACK, t.conj().T)
        raw = bt + bt.conj().transpose(0, 2, 1)
        dtr = np.einsum("kii->k", raw).real
        dchi = raw / tr - chi[None, :, :] * (dtr / tr)[:, None, None]
        vecs = np.concatenate(
            [dchi.real.reshape(16, 16), dchi.imag.reshape(16, 16)], axis=1
        )
        return np.vstack([a_map @ vecs.T, gauge_weight * dtr])

    # Initialize from the unconstrained Hermitian least-squares optimum
    # clipped onto the PSD cone; the optimizer then only has to walk the
    # clip distance. Fall back to the raw inversion if the solve fails.
    try:
        cols = np.column_stack([a_map @ _chi_real_vec(h) for h in _HERMITIAN_BASIS])
        coef, *_ = np.linalg.lstsq(cols, y_data[:-1], rcond=None)
        chi_init = np.tensordot(coef, _HERMITIAN_BASIS, axes=(0, 0))
    except np.linalg.LinAlgError:
        chi_init = raw_chi
    theta0 = _theta_from_chi(chi_init)

    best = None
    for attempt in range(max(1, restarts)):
        if attempt == 0:
            theta_init = theta0
        else:
            rng = stream(_MLE_RESTART_SEED, attempt)
            theta_init = theta0 + 0.02 * rng.standard_normal(16)
        res = nlls_fit(
            model, None, y_data, None, theta_init,
            jacobian=jacobian, max_iter=400, gtol=1e-12, ftol=1e-10,
        )
        if best is None or res.residual_norm < best.residual_norm:
            best = res
        if res.converged:
            break
    chi = _chi_from_theta(best.params)
    # The factorized parametrization can stall on the boundary of the PSD
    # cone; finish with an exact feasibility projection so the returned chi
    # always satisfies the physicality invariants.
    chi = _enforce_physicality(chi)
    return ProcessMatrix(chi=chi, mle_converged=best.converged, flagged=not best.converged)


def process_tomography(
    inputs: Sequence[np.ndarray],
    outputs: Sequence[np.ndarray],
    output_errors: Optional[Sequence[np.ndarray]] = None,
    *,
    mle: bool = True,
    penalty: float = 1e3,
) -> ProcessMatrix:
    """Linear inversion of four spanning inputs, then MLE projection."""
    raw = linear_inversion_chi(inputs, outputs)
    if not mle:
        return ProcessMatrix(chi=raw)
    return mle_project(raw, inputs, outputs, output_errors, penalty=penalty)


# --- Monte Carlo error estimation -------------------------------------------

@dataclass
class MonteCarloResult:
    chi_mean: np.ndarray
    chi_std: np.ndarray            # complex: std(Re) + i std(Im)
    process_fidelity_std: float
    state_fidelity_stds: np.ndarray
    n_samples: int


def _mc_single_sample(args):
    inputs, blochs, bloch_errs, targets, seed, seed_path, index, penalty = args
    rng = stream(seed, *seed_path, _DOMAIN_MC, index)
    outputs = []
    sfs = []
    for b, e, target in zip(blochs, bloch_errs, targets):
        perturbed = np.asarray(b, dtype=float) + rng.standard_normal(3) * np.asarray(e, dtype=float)
        rho = density_from_bloch(perturbed)
        outputs.append(rho)
        sfs.append(state_fidelity(rho, target))
    errors = [np.array([e[2] / 2, e[2] / 2, e[0] / 2, e[1] / 2]) for e in bloch_errs]
    pm = process_tomography(inputs, outputs, errors, penalty=penalty)
    return index, pm.chi, np.array(sfs)


def monte_carlo_errors(
    inputs: Sequence[np.ndarray],
    blochs: Sequence[Sequence[float]],
    bloch_errs: Sequence[Sequence[float]],
    targets: Sequence[np.ndarray],
    n_samples: int = 20000,
    seed: int = 0,
    *,
    workers: int = 1,
    penalty: float = 1e3,
    seed_path: tuple[int, ...] = (),
) -> MonteCarloResult:
    """Element-wise chi and fidelity error bars by Gaussian resampling.

    Each sample perturbs the reconstructed Bloch components within their
    measurement uncertainties, reruns the full inversion + MLE pipeline, and
    the spread across samples is reported. Sample index seeds its own
    stream, so results are identical for any worker count.
    """
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    jobs = [
        (list(inputs), [tuple(b) for b in blochs], [tuple(e) for e in bloch_errs],
         list(targets), seed, tuple(seed_path), i, penalty)
        for i in range(n_samples)
    ]
    results: list = [None] * n_samples
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for index, chi, sfs in pool.map(_mc_single_sample, jobs, chunksize=64):
                results[index] = (chi, sfs)
    else:
        for job in jobs:
            index, chi, sfs = _mc_single_sample(job)
            results[index] = (chi, sfs)
    chis = np.array([r[0] for r in results])
    sfs = np.array([r[1] for r in results])
    chi_std = chis.real.std(axis=0, ddof=1) + 1j * chis.imag.std(axis=0, ddof=1)
    return MonteCarloResult(
        chi_mean=chis.mean(axis=0),
        chi_std=chi_std,
        process_fidelity_std=float(chis[:, 0, 0].real.std(ddof=1)),
        state_fidelity_stds=sfs.std(axis=0, ddof=1),
        n_samples=n_samples,
    )


def _counts_bootstrap_sample(args):
    (datasets, targets, ideal_inputs, visibility, shots, reps, seed, seed_path, index,
     penalty) = args
    rng = stream(seed, *seed_path, _DOMAIN_MC, index)
    outputs, errors, sfs = [], [], []
    for phases, means, z_mean in datasets:
        res_means, res_stds = [], []
        for p_hat in means:
            fractions = rng.binomial(shots, np.clip(p_hat, 0.0, 1.0), size=reps) / shots
            res_means.append(fractions.mean())
            res_stds.append(fractions.std(ddof=1))
        fit = sinusoid_fit(np.asarray(phases), np.array(res_means),
                           fit_point_errors(res_stds, reps))
        z_est = None
        if z_mean is not None:
            z_fr = rng.binomial(shots, np.clip(z_mean, 0.0, 1.0), size=reps) / shots
            z_est = (float(z_fr.mean()), float(z_fr.std(ddof=1)) / math.sqrt(reps))
        bloch = bloch_from_tomography(fit, z_est, visibility)
        outputs.append(density_from_bloch(bloch))
        errors.append(np.array([bloch.z_err / 2, bloch.z_err / 2, bloch.x_err / 2, bloch.y_err / 2]))
    pm = process_tomography(ideal_inputs, outputs, errors, penalty=penalty)
    for rho, target in zip(outputs, targets):
        sfs.append(state_fidelity(rho, target))
    return index, pm.chi, np.array(sfs)


def counts_bootstrap_errors(
    ideal_inputs: Sequence[np.ndarray],
    datasets: Sequence[tuple],
    targets: Sequence[np.ndarray],
    visibility: float,
    shots: int,
    repetitions: int,
    n_samples: int = 2000,
    seed: int = 0,
    *,
    workers: int = 1,
    penalty: float = 1e3,
    seed_path: tuple[int, ...] = (),
) -> MonteCarloResult:
    """Counts-level alternative to `monte_carlo_errors`: instead of
    perturbing reconstructed states, each sample redraws every tomography
    point's counts binomially around the measured click probability and
    reruns the whole fit + inversion + MLE pipeline.

    `datasets` holds one (phases, click_means, z_mean) triple per input
    state, e.g. straight from the XY tomography data.
    """
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    jobs = [
        (
            [(tuple(p), tuple(m), z) for p, m, z in datasets],
            list(targets), list(ideal_inputs), visibility, shots, repetitions,
            seed, tuple(seed_path), i, penalty,
        )
        for i in range(n_samples)
    ]
    results: list = [None] * n_samples
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for index, chi, sfs in pool.map(_counts_bootstrap_sample, jobs, chunksize=32):
                results[index] = (chi, sfs)
    else:
        for job in jobs:
            index, chi, sfs = _counts_bootstrap_sample(job)
            results[index] = (chi, sfs)
    chis = np.array([r[0] for r in results])
    sfs = np.array([r[1] for r in results])
    return MonteCarloResult(
        chi_mean=chis.mean(axis=0),
        chi_std=chis.real.std(axis=0, ddof=1) + 1j * chis.imag.std(axis=0, ddof=1),
        process_fidelity_std=float(chis[:, 0, 0].real.std(ddof=1)),
        state_fidelity_stds=sfs.std(axis=0, ddof=1),
        n_samples=n_samples,
    )


def memory_fidelity(
    f_p: float, f_i: float, f_p_err: float = 0.0, f_i_err: float = 0.0
) -> tuple[float, float]:
    """F_m = F_p / F_i with first-order error propagation."""
    if f_i == 0:
        raise ValueError("initialization fidelity must be nonzero")
    f_m = f_p / f_i
    err = abs(f_m) * math.sqrt((f_p_err / f_p) ** 2 + (f_i_err / f_i) ** 2) if f_p else abs(f_p_err / f_i)
    return f_m, err


@dataclass
class FidelityReport:
    """Per-state and process-level fidelities with their deconvolution."""

    states: tuple[str, ...]
    sf_init: dict
    sf_process: dict
    sf_memory: dict
    f_i: float
    f_p: float
    f_m: float
    f_i_err: float = 0.0
    f_p_err: float = 0.0
    f_m_err: float = 0.0

    def to_dict(self) -> dict:
        return {
            "states": list(self.states),
            "sf_init": {k: list(v) for k, v in self.sf_init.items()},
            "sf_process": {k: list(v) for k, v in self.sf_process.items()},
            "sf_memory": {k: list(v) for k, v in self.sf_memory.items()},
            "f_i": [self.f_i, self.f_i_err],
            "f_p": [self.f_p, self.f_p_err],
            "f_m": [self.f_m, self.f_m_err],
        }


def build_fidelity_report(
    labels: Sequence[str],
    sf_init: Sequence[tuple[float, float]],
    sf_process: Sequence[tuple[float, float]],
    f_i: tuple[float, float],
    f_p: tuple[float, float],
) -> FidelityReport:
    sf_mem = {}
    for lbl, (si, si_e), (sp, sp_e) in zip(labels, sf_init, sf_process):
        fm, fm_e = memory_fidelity(sp, si, sp_e, si_e)
        sf_mem[lbl] = (fm, fm_e)
    f_m, f_m_err = memory_fidelity(f_p[0], f_i[0], f_p[1], f_i[1])
    return FidelityReport(
        states=tuple(labels),
        sf_init={l: v for l, v in zip(labels, sf_init)},
        sf_process={l: v for l, v in zip(labels, sf_process)},
        sf_memory=sf_mem,
        f_i=f_i[0], f_p=f_p[0], f_m=f_m,
        f_i_err=f_i[1], f_p_err=f_p[1], f_m_err=f_m_err,
    )
