"""Nonlinear least squares and the decay-law fits used by the analysis chain.

The engine is a damped Gauss-Newton (Levenberg-style) iteration on
chi^2 = sum(((y - model(x, theta)) / y_err)^2) with numeric central-difference
Jacobians by default and box bounds applied by step clipping. Parameter
errors come from the covariance of the linearized problem at the solution,
inv(J^T J), without rescaling by the reduced chi-square.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np


@dataclass
class FitResult:
    params: np.ndarray
    errors: np.ndarray
    covariance: np.ndarray
    residual_norm: float
    converged: bool
    iterations: int
    message: str = ""


def finite_difference_jacobian(model, x, params: np.ndarray) -> np.ndarray:
    """Central-difference Jacobian d model / d params, shape (npoints, nparams)."""
    params = np.asarray(params, dtype=float)
    n = params.size
    cols = []
    for i in range(n):
        h = 1e-5 * max(abs(params[i]), 1e-8)
        up = params.copy()
        dn = params.copy()
        up[i] += h
        dn[i] -= h
        cols.append((np.asarray(model(x, up), dtype=float) - np.asarray(model(x, dn), dtype=float)) / (2 * h))
    return np.column_stack(cols)


def nlls_fit(
    model: Callable,
    x,
    y,
    y_err=None,
    init: Sequence[float] = (),
    *,
    jacobian: Optional[Callable] = None,
    bounds: Optional[Sequence[tuple[float, float]]] = None,
    max_iter: int = 200,
    gtol: float = 1e-10,
    ftol: float = 1e-12,
    xtol: float = 1e-13,
) -> FitResult:
    """Weighted least-squares fit of model(x, params) to (y, y_err).

    Convergence is declared when the gradient norm falls below gtol on the
    scale of the problem (1 + |J|_F |r|), when an accepted step reduces the
    cost by less than ftol relatively, or when the step itself is below
    xtol. Deterministic for fixed inputs; returns converged=False with the
    best point found when the iteration budget is exhausted.
    """
    y = np.asarray(y, dtype=float)
    theta = np.asarray(init, dtype=float).copy()
    if y_err is None:
        sigma = np.ones_like(y)
    else:
        sigma = np.asarray(y_err, dtype=float)
        if sigma.shape != y.shape:
            raise ValueError("y and y_err lengths must match")
        if np.any(sigma <= 0):
            raise ValueError("y_err entries must be > 0")
    pred0 = np.asarray(model(x, theta), dtype=float)
    if pred0.shape != y.shape:
        raise ValueError("model output length must match y")

    lo = np.full(theta.shape, -np.inf)
    hi = np.full(theta.shape, np.inf)
    if bounds is not None:
        for i, (a, b) in enumerate(bounds):
            lo[i], hi[i] = a, b
        theta = np.clip(theta, lo, hi)

    def residuals(t):
        return (y - np.asarray(model(x, t), dtype=float)) / sigma

    def jac(t):
        if jacobian is not None:
            j = np.asarray(jacobian(x, t), dtype=float)
        else:
            j = finite_difference_jacobian(model, x, t)
        return j / sigma[:, None]

    r = residuals(theta)
    cost = float(r @ r)
    lam = 1e-3
    lam_max = 1e15
    converged = False
    message = "max iterations exceeded"
    iterations = 0
    plateau = 0
    # An essentially exact fit: residuals negligible on the scale of the data.
    weighted_norm2 = float((y / sigma) @ (y / sigma))
    cost_floor = 1e-16 * (1.0 + weighted_norm2)

    for iterations in range(1, max_iter + 1):
        if cost <= cost_floor:
            converged = True
            message = "residual below data-scale floor"
            break
        J = jac(theta)
        g = J.T @ r
        gnorm = float(np.max(np.abs(g))) if g.size else 0.0
        scale = 1.0 + float(np.linalg.norm(J)) * math.sqrt(cost)
        if gnorm < gtol * scale:
            converged = True
            message = "gradient below tolerance"
            break
        JtJ = J.T @ J
        damping = np.clip(np.diag(JtJ), 1e-12, None)
        accepted = False
        while lam <= lam_max:
            A = JtJ + lam * np.diag(damping)
            try:
                step = np.linalg.solve(A, g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            cand = np.clip(theta + step, lo, hi)
            r_cand = residuals(cand)
            cost_cand = float(r_cand @ r_cand)
            if not math.isfinite(cost_cand) or cost_cand > cost:
                lam *= 10.0
                continue
            # Marquardt-Fletcher gain ratio: actual vs predicted decrease.
            predicted = float(step @ (lam * damping * step + g))
            drop = cost - cost_cand
            moved = float(np.max(np.abs(cand - theta)))
            theta, r, cost = cand, r_cand, cost_cand
            if predicted > 0 and math.isfinite(predicted):
                rho = drop / predicted
                lam = max(lam * max(1.0 / 3.0, 1.0 - (2.0 * rho - 1.0) ** 3), 1e-14)
            else:
                lam = max(lam / 3.0, 1e-14)
            accepted = True
            if moved < xtol * (np.max(np.abs(theta)) + xtol):
                converged = True
                message = "step below tolerance"
                break
            # Require a sustained plateau before stopping on ftol, so one
            # damped micro-step cannot end the fit prematurely.
            plateau = plateau + 1 if drop <= ftol * max(cost, 1e-300) else 0
            if plateau >= 3:
                converged = True
                message = "cost decrease below tolerance"
            break
        if converged:
            break
        if not accepted:
            converged = True
            message = "no descent step within damping budget (local minimum)"
            break

    # undamped Gauss-Newton polish: exact for (near-)linear problems, kept
    # only when it actually lowers the cost
    for _ in range(2):
        J = jac(theta)
        step, *_ = np.linalg.lstsq(J, r, rcond=None)
        cand = np.clip(theta + step, lo, hi)
        r_cand = residuals(cand)
        cost_cand = float(r_cand @ r_cand)
        if math.isfinite(cost_cand) and cost_cand < cost:
            theta, r, cost = cand, r_cand, cost_cand
        else:
            break

    J = jac(theta)
    JtJ = J.T @ J
    try:
        cov = np.linalg.inv(JtJ)
    except np.linalg.LinAlgError:
        cov = np.linalg.pinv(JtJ)
    if y_err is None and y.size > theta.size:
        # unweighted fit: scale by the residual variance (plain OLS errors)
        cov = cov * (cost / (y.size - theta.size))
    errors = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    return FitResult(
        params=theta,
        errors=errors,
        covariance=cov,
        residual_norm=math.sqrt(cost),
        converged=converged,
        iterations=iterations,
        message=message,
    )


def weighted_linear_regression(design: np.ndarray, y: np.ndarray, y_err=None):
    """Closed-form weighted least squares; returns (params, covariance)."""
    design = np.asarray(design, dtype=float)
    y = np.asarray(y, dtype=float)
    if y_err is None:
        w = np.ones_like(y)
    else:
        w = 1.0 / np.asarray(y_err, dtype=float)
    A = design * w[:, None]
    b = y * w
    ata = A.T @ A
    try:
        cov = np.linalg.inv(ata)
    except np.linalg.LinAlgError:
        cov = np.linalg.pinv(ata)
    params = cov @ (A.T @ b)
    return params, cov


# --- stretched exponential decay -------------------------------------------

def stretched_exp_model(tau, params):
    y0, amp, t2, alpha = params
    tau = np.asarray(tau, dtype=float)
    u = np.clip(tau / t2, 1e-300, None)  # keeps u**alpha finite for any alpha
    return y0 + amp * np.exp(-(u ** alpha))


def stretched_exp_jacobian(tau, params):
    y0, amp, t2, alpha = params
    tau = np.asarray(tau, dtype=float)
    u = np.clip(tau / t2, 1e-300, None)
    ua = u ** alpha
    e = np.exp(-ua)
    d_y0 = np.ones_like(tau)
    d_amp = e
    d_t2 = amp * e * alpha * ua / t2
    d_alpha = -amp * e * ua * np.log(u)
    return np.column_stack([d_y0, d_amp, d_t2, d_alpha])


@dataclass
class StretchedExpFit:
    y0: float
    amplitude: float
    t2: float
    alpha: float
    errors: np.ndarray
    degenerate: bool
    fit: FitResult


def stretched_exp_fit(tau, signal, signal_err=None) -> StretchedExpFit:
    """Fit y = y0 + K exp(-(tau/T2)^alpha).

    Initialization: y0 from the tail mean, K from head minus tail, T2 from
    the half-decay time, alpha = 1. alpha is constrained to (0, 4] and
    T2 to positive values. A fit with amplitude consistent with zero is
    flagged degenerate (T2 unidentifiable).
    """
    tau = np.asarray(tau, dtype=float)
    signal = np.asarray(signal, dtype=float)
    if tau.size < 5:
        raise ValueError("stretched_exp_fit needs at least 5 points")
    order = np.argsort(tau)
    ts, ys = tau[order], signal[order]
    k_tail = max(2, ts.size // 5)
    y_tail = float(ys[-k_tail:].mean())
    y_head = float(ys[:k_tail].mean())
    amp0 = y_head - y_tail
    half = y_tail + amp0 / 2.0
    below = np.nonzero(ys <= half if amp0 >= 0 else ys >= half)[0]
    t2_0 = float(ts[below[0]]) if below.size and ts[below[0]] > 0 else float(ts[ts.size // 2])
    if t2_0 <= 0:
        t2_0 = float(np.max(ts[ts > 0], initial=1.0))
    init = np.array([y_tail, amp0, t2_0, 1.0])
    bounds = [(-np.inf, np.inf), (-np.inf, np.inf), (1e-300, np.inf), (1e-6, 4.0)]
    res = nlls_fit(
        stretched_exp_model, tau, signal, signal_err, init,
        jacobian=stretched_exp_jacobian, bounds=bounds,
    )
    y0, amp, t2, alpha = res.params
    degenerate = (amp0 == 0.0) or (abs(amp) <= res.errors[1]) or not res.converged
    return StretchedExpFit(
        y0=float(y0), amplitude=float(amp), t2=float(t2), alpha=float(alpha),
        errors=res.errors, degenerate=degenerate, fit=res,
    )


# --- power law ---------------------------------------------------------------

@dataclass
class PowerLawFit:
    prefactor: float
    exponent: float
    prefactor_err: float
    exponent_err: float


def power_law_fit(n, t2, t2_err=None) -> PowerLawFit:
    """Fit t2 = prefactor * n**exponent by weighted regression in log-log space."""
    n = np.asarray(n, dtype=float)
    t2 = np.asarray(t2, dtype=float)
    if n.size < 3:
        raise ValueError("power_law_fit needs at least 3 points")
    if np.any(n < 1):
        raise ValueError("pulse counts must be >= 1")
    if np.any(t2 <= 0):
        raise ValueError("coherence times must be > 0")
    log_err = None
    if t2_err is not None:
        t2_err = np.asarray(t2_err, dtype=float)
        if np.any(t2_err <= 0):
            raise ValueError("t2_err entries must be > 0")
        log_err = t2_err / t2
    design = np.column_stack([np.ones_like(n), np.log(n)])
    params, cov = weighted_linear_regression(design, np.log(t2), log_err)
    pre = math.exp(params[0])
    pre_err = pre * math.sqrt(max(cov[0, 0], 0.0))
    return PowerLawFit(
        prefactor=pre,
        exponent=float(params[1]),
        prefactor_err=pre_err,
        exponent_err=math.sqrt(max(cov[1, 1], 0.0)),
    )
