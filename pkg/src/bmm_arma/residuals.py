"""Residual recursions for the ARMA and bounded-propagation (BIP) models.

Residuals are conditional on the first p observations: a_t = 0 for t <= p,
and the returned vectors cover t = p+1..n.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import _numeric
from .arma_core import EXPANSION_MAX_LEN, EXPANSION_TOL, ArmaParams, min_root_modulus
from .kernels import Calibration, calibrate, eta

MAD_CONSTANT = 1.4826


class Flavor(str, Enum):
    ARMA = "ARMA"
    BIP = "BIP"


@dataclass(frozen=True)
class ResidualTrace:
    values: np.ndarray
    flavor: Flavor
    params: ArmaParams
    sigma_used: float | None = None


def _prepare(y, params: ArmaParams) -> np.ndarray:
    y = np.ascontiguousarray(y, dtype=float)
    if y.ndim != 1:
        raise ValueError("series must be one-dimensional")
    if y.size <= params.p:
        raise ValueError(f"series length {y.size} must exceed the AR order {params.p}")
    return y


def arma_residuals(y, params: ArmaParams) -> ResidualTrace:
    y = _prepare(y, params)
    a = _numeric.residuals(y, params.phi_array, params.theta_array, params.mu, 1.0, False)
    return ResidualTrace(a, Flavor.ARMA, params)


def bip_residuals(y, params: ArmaParams, sigma: float) -> ResidualTrace:
    """Residuals where lagged innovations enter through sigma * eta(a / sigma).

    An isolated outlier is absorbed by the residual at its own time point
    and does not carry over to later residuals once |a| > 3 sigma.
    """
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    y = _prepare(y, params)
    a = _numeric.residuals(y, params.phi_array, params.theta_array, params.mu,
                           float(sigma), True)
    return ResidualTrace(a, Flavor.BIP, params, float(sigma))


def robust_sd(y) -> float:
    """Normalized MAD."""
    y = np.asarray(y, dtype=float)
    if y.size < 2:
        raise ValueError("need at least two observations")
    mad = np.median(np.abs(y - np.median(y)))
    if mad == 0:
        raise ValueError("degenerate series: MAD is zero")
    return MAD_CONSTANT * float(mad)


def psi_weight_sum_sq(params: ArmaParams) -> float:
    """sum lambda_i^2 for theta(B)/phi(B) = 1 + sum lambda_i B^i."""
    rmin = min_root_modulus(params.phi)
    ratio = 1.0 / rmin if np.isfinite(rmin) else 0.0
    total, tail = _numeric.sum_sq_weights(params.phi_array, params.theta_array, ratio,
                                          EXPANSION_TOL, EXPANSION_MAX_LEN)
    if not tail <= EXPANSION_TOL:
        raise ArithmeticError("MA(infinity) expansion did not converge")
    return float(total)


def sigma_hat(params: ArmaParams, sigma_y_robust: float,
              calib: Calibration | None = None) -> float:
    """Innovation scale implied by a robust series scale under the BIP model."""
    if not sigma_y_robust > 0:
        raise ValueError("sigma_y_robust must be positive")
    calib = calibrate() if calib is None else calib
    return float(sigma_y_robust / np.sqrt(1.0 + calib.kappa_sq * psi_weight_sum_sq(params)))


def cleaned_series(y, params: ArmaParams, sigma: float) -> np.ndarray:
    """y*_t = y_t - a_t + sigma eta(a_t / sigma) with BIP residuals a_t.

    Points whose residual lies in the identity zone of eta are returned
    unchanged; the first p values are passed through.
    """
    y = _prepare(y, params)
    a = bip_residuals(y, params, sigma).values
    out = y.copy()
    z = a / sigma
    hit = np.abs(z) > 2.0
    tail = out[params.p:]
    tail[hit] = y[params.p:][hit] - a[hit] + sigma * eta(z[hit])
    return out
