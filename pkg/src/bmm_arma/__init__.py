"""Bounded MM (BMM) robust estimation of ARMA models."""
__version__ = "0.1.0"

from .arma_core import ArmaParams, min_root_modulus, psi_weights, region_check, simulate_arma
from .contamination import ContaminationSpec, Kind, Placement, SignRule, contaminate
from .estimators import FitConfig, FitError, FitResult, fit_bmm, fit_cls, fit_mm
from .inference import asymptotic_cov, c_matrix, standard_errors
from .kernels import RHO1, RHO2, calibrate, eta, psi2, rho1, rho2
from .mscale import solve_m_scale
from .residuals import arma_residuals, bip_residuals, cleaned_series, sigma_hat

__all__ = [
    "ArmaParams", "ContaminationSpec", "FitConfig", "FitError", "FitResult", "Kind",
    "Placement", "RHO1", "RHO2", "SignRule", "arma_residuals", "asymptotic_cov",
    "bip_residuals", "c_matrix", "calibrate", "cleaned_series", "contaminate", "eta",
    "fit_bmm", "fit_cls", "fit_mm", "min_root_modulus", "psi2", "psi_weights",
    "region_check", "rho1", "rho2", "sigma_hat", "simulate_arma", "solve_m_scale",
    "standard_errors",
]
