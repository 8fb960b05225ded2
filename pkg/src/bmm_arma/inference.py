"""Asymptotic covariance, standard errors and efficiency of MM-type estimates.

For parameters ordered (phi, theta, mu) the limit covariance of
sqrt(n - p) (beta_hat - beta0) is

    D = s0^2 E psi^2(a/s0) / E^2 psi'(a/s0) * blockdiag(C^{-1} / sigma_a^2, 1 / zeta0^2)

with zeta0 = -(1 - sum phi) / (1 - sum theta) and C built from the
coefficients of 1/phi(B) and 1/theta(B).
"""
from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .arma_core import EXPANSION_TOL, ArmaParams, expand_ratio, lag_polynomial
from .kernels import (QUADRATIC, RHO2, Calibration, RhoKernel, calibrate, normal_efficiency,
                      normal_expectation)

Z95 = float(stats.norm.ppf(0.975))


@dataclass(frozen=True)
class AsymptoticCov:
    D: np.ndarray
    scalar_factor: float
    C: np.ndarray
    zeta0: float
    condition_number: float


@dataclass(frozen=True)
class ParameterSummary:
    name: str
    estimate: float
    se: float
    ci_low: float
    ci_high: float


def _inverse_series(coefs, tol) -> np.ndarray:
    exp = expand_ratio([1.0], lag_polynomial(coefs), tol=tol)
    if not exp.converged:
        raise ArithmeticError("inverse polynomial expansion did not converge")
    return np.concatenate(([1.0], exp.coeffs))


def _lagged_inner(a, b, lag: int) -> float:
    """sum_k a_k b_{k+lag}, treating both as zero beyond their length."""
    m = min(a.size, b.size - lag)
    return float(a[:m] @ b[lag:lag + m]) if m > 0 else 0.0


def c_matrix(phi0, theta0, tol: float = EXPANSION_TOL) -> np.ndarray:
    phi0 = np.atleast_1d(np.asarray(phi0, dtype=float))
    theta0 = np.atleast_1d(np.asarray(theta0, dtype=float))
    p, q = phi0.size, theta0.size
    v = _inverse_series(phi0, tol)
    w = _inverse_series(theta0, tol)
    C = np.zeros((p + q, p + q))
    for i in range(p):
        for j in range(i, p):
            C[i, j] = C[j, i] = _lagged_inner(v, v, j - i)
    for i in range(q):
        for j in range(i, q):
            C[p + i, p + j] = C[p + j, p + i] = _lagged_inner(w, w, j - i)
    for i in range(p):
        for j in range(q):
            if i <= j:
                val = -_lagged_inner(w, v, j - i)
            else:
                val = -_lagged_inner(v, w, i - j)
            C[i, p + j] = C[p + j, i] = val
    return C


@functools.lru_cache(maxsize=64)
def _psi_moments(kernel: RhoKernel, ratio: float) -> tuple[float, float]:
    """(E psi^2(a/s0), E psi'(a/s0)) for a ~ N(0, sigma_a^2), ratio = sigma_a / s0."""
    breaks = [k / ratio for k in kernel.knots]
    e_psi2 = normal_expectation(lambda z: kernel.derivative(ratio * z) ** 2, breaks=breaks)
    e_dpsi = normal_expectation(lambda z: kernel.second_derivative(ratio * z), breaks=breaks)
    return e_psi2, e_dpsi


def zeta0(phi0, theta0) -> float:
    return -(1.0 - float(np.sum(phi0))) / (1.0 - float(np.sum(theta0)))


def asymptotic_cov(beta0: ArmaParams, s0: float, sigma_a: float,
                   calib: Calibration | None = None,
                   kernel2: RhoKernel = RHO2) -> AsymptoticCov:
    if not (s0 > 0 and sigma_a > 0):
        raise ValueError("s0 and sigma_a must be positive")
    denom = 1.0 - sum(beta0.theta)
    if abs(denom) < 1e-12:
        raise ArithmeticError("1 - sum(theta) vanishes")
    e_psi2, e_dpsi = _psi_moments(kernel2, float(sigma_a / s0))
    if e_dpsi <= 0:
        raise ArithmeticError("E psi' is not positive")
    factor = s0**2 * e_psi2 / e_dpsi**2
    C = c_matrix(beta0.phi, beta0.theta)
    k = beta0.p + beta0.q
    D = np.zeros((k + 1, k + 1))
    cond = 1.0
    if k:
        cond = float(np.linalg.cond(C))
        if not np.isfinite(cond) or cond > 1e12:
            raise np.linalg.LinAlgError(f"C is near singular (condition number {cond:.3g})")
        D[:k, :k] = factor * np.linalg.inv(C) / sigma_a**2
        D[:k, :k] = 0.5 * (D[:k, :k] + D[:k, :k].T)
    z0 = zeta0(beta0.phi, beta0.theta)
    D[k, k] = factor / z0**2
    return AsymptoticCov(D=D, scalar_factor=factor, C=C, zeta0=z0, condition_number=cond)


def standard_errors(fit, n: int | None = None, level: float = 0.95) -> list[ParameterSummary]:
    """Plug-in standard errors and normal intervals for a fitted model.

    The residual scale s* stands in for both s0 and sigma_a (they coincide
    under normal innovations).
    """
    n = fit.n_obs if n is None else n
    kernel = QUADRATIC if fit.estimator == "MLE" else RHO2
    beta = fit.beta_hat
    cov = asymptotic_cov(beta, fit.s_star, fit.s_star, kernel2=kernel)
    se = np.sqrt(np.diag(cov.D) / (n - beta.p))
    z = Z95 if level == 0.95 else float(stats.norm.ppf(0.5 + level / 2))
    est = beta.to_vector()
    return [ParameterSummary(name, float(e), float(s), float(e - z * s), float(e + z * s))
            for name, e, s in zip(beta.names(), est, se)]


def efficiency_at_normal(kernel2: RhoKernel = RHO2, calib: Calibration | None = None) -> float:
    calib = calibrate() if calib is None else calib
    return normal_efficiency(kernel2, calib.s0)
