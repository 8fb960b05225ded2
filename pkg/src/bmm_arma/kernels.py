"""Bounded loss functions and their normal-theory calibration constants.

The base loss is the smooth octic-spliced function

    rho2(x) = x^2/2                                    |x| <= 2
              0.002x^8 - 0.052x^6 + 0.432x^4
                       - 0.972x^2 + 1.792              2 < |x| <= 3
              3.25                                     |x| > 3

with rho1(x) = rho2(x / 0.405) used for the S-scale and eta = rho2' used as
the shrinkage function in the bounded-propagation residuals.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize, stats

from . import _numeric

RHO1_TUNING = 0.405
OCTIC_MAX = _numeric.OCTIC_MAX


@dataclass(frozen=True)
class RhoKernel:
    """A member of the family rho(x) = base(x / tuning).

    ``base`` is either the bounded octic loss or the (unbounded) quadratic
    x^2/2, which gives conditional least squares when used as an M-loss.
    """

    tuning: float = 1.0
    quadratic: bool = False
    tuning_note: str = ""

    @property
    def code(self) -> int:
        return _numeric.KERNEL_QUADRATIC if self.quadratic else _numeric.KERNEL_OCTIC

    @property
    def max_value(self) -> float:
        return np.inf if self.quadratic else OCTIC_MAX

    @property
    def knots(self) -> tuple[float, ...]:
        """Points where the piecewise definition switches branch (x >= 0)."""
        if self.quadratic:
            return ()
        return (2.0 * self.tuning, 3.0 * self.tuning)

    def evaluate(self, x):
        z = np.asarray(x, dtype=float) / self.tuning
        if self.quadratic:
            return 0.5 * z * z
        return rho2(z)

    def derivative(self, x):
        z = np.asarray(x, dtype=float) / self.tuning
        if self.quadratic:
            return z / self.tuning
        return psi2(z) / self.tuning

    def second_derivative(self, x):
        z = np.asarray(x, dtype=float) / self.tuning
        if self.quadratic:
            return np.ones_like(z) / self.tuning**2
        return psi2_prime(z) / self.tuning**2

    __call__ = evaluate


def _vectorize(scalar_fn):
    vec = np.vectorize(scalar_fn, otypes=[float])

    @functools.wraps(scalar_fn)
    def wrapper(x):
        out = vec(np.asarray(x, dtype=float))
        return float(out) if out.ndim == 0 else out

    return wrapper


rho2 = _vectorize(_numeric.rho_octic.py_func)
rho2.__doc__ = "Bounded octic-spliced loss; quadratic on [-2, 2], constant 3.25 beyond 3."
psi2 = _vectorize(_numeric.psi_octic.py_func)
psi2.__doc__ = "Derivative of rho2; odd, redescending, identity on [-2, 2]."
psi2_prime = _vectorize(_numeric.dpsi_octic.py_func)
psi2_prime.__doc__ = "Second derivative of rho2."

# the shrinkage function of the bounded-propagation recursion
eta = psi2


def rho1(x):
    """rho2 stretched so the M-scale is consistent at the normal."""
    return rho2(np.asarray(x, dtype=float) / RHO1_TUNING)


RHO1 = RhoKernel(RHO1_TUNING, tuning_note="S-scale loss, normal consistent with b = 1.625")
RHO2 = RhoKernel(1.0, tuning_note="M-step loss")
QUADRATIC = RhoKernel(1.0, quadratic=True, tuning_note="least squares")


@dataclass(frozen=True)
class Calibration:
    b: float
    kappa_sq: float
    eff: float
    s0: float
    e_rho1: float


def normal_expectation(fn, scale: float = 1.0, breaks=(), rel_tol: float = 1e-10) -> float:
    """E[fn(X)] for X ~ N(0, scale^2) by adaptive quadrature.

    ``breaks`` are kink locations of ``fn`` (in units of X); the integral is
    split there so that the piecewise kernels are integrated accurately.
    """
    pts = sorted({float(v) for v in breaks} | {-float(v) for v in breaks})
    edges = [-np.inf, *pts, np.inf]
    pdf = stats.norm(scale=scale).pdf
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        val, err = integrate.quad(
            lambda x: fn(x) * pdf(x), lo, hi, epsabs=1e-14, epsrel=rel_tol, limit=200
        )
        if not np.isfinite(val) or err > max(1e-12, 10 * rel_tol * abs(val)):
            raise ArithmeticError(f"quadrature did not converge on [{lo}, {hi}]")
        total += val
    return total


def consistency_scale(kernel: RhoKernel = RHO1, b: float | None = None) -> float:
    """s0 solving E rho(Z / s0) = b with Z standard normal."""
    b = kernel.max_value / 2 if b is None else b

    def gap(s):
        breaks = [k * s for k in kernel.knots]
        return normal_expectation(lambda z: kernel.evaluate(z / s), breaks=breaks) - b

    return optimize.brentq(gap, 0.2, 5.0, xtol=1e-14, rtol=1e-13)


def normal_efficiency(kernel2: RhoKernel, s0: float, sigma_a: float = 1.0) -> float:
    """Efficiency of the M-step relative to normal conditional ML.

    sigma_a^2 E^2[psi'(a/s0)] / (s0^2 E[psi^2(a/s0)]) with a ~ N(0, sigma_a^2).
    Invariant to multiplying the loss by a constant.
    """
    breaks = [k * s0 for k in kernel2.knots]
    e_dpsi = normal_expectation(
        lambda a: kernel2.second_derivative(a / s0), scale=sigma_a, breaks=breaks
    )
    e_psi2 = normal_expectation(
        lambda a: kernel2.derivative(a / s0) ** 2, scale=sigma_a, breaks=breaks
    )
    return sigma_a**2 * e_dpsi**2 / (s0**2 * e_psi2)


@functools.lru_cache(maxsize=None)
def calibrate() -> Calibration:
    """Population constants under N(0, 1), computed once and cached."""
    b = OCTIC_MAX / 2
    kappa_sq = normal_expectation(lambda z: psi2(z) ** 2, breaks=(2.0, 3.0))
    e_rho1 = normal_expectation(rho1, breaks=(2 * RHO1_TUNING, 3 * RHO1_TUNING))
    s0 = consistency_scale(RHO1, b)
    eff = normal_efficiency(RHO2, s0)
    return Calibration(b=b, kappa_sq=kappa_sq, eff=eff, s0=s0, e_rho1=e_rho1)
