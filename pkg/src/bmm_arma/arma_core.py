"""ARMA parameters, the stationarity/invertibility region and simulation.

Sign convention throughout the package:

    phi(B) (x_t - mu) = theta(B) a_t,
    phi(B) = 1 - sum phi_i B^i,   theta(B) = 1 - sum theta_i B^i.

So an MA(1) with theta = -0.5 is x_t = a_t + 0.5 a_{t-1}. Software that
writes theta(B) = 1 + sum theta_i B^i reports the MA coefficients negated.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

from . import _numeric

DEFAULT_ZETA = 0.02
EXPANSION_TOL = 1e-12
EXPANSION_MAX_LEN = 10_000


def make_rng(seed) -> np.random.Generator:
    """The package-wide generator: PCG64 seeded through numpy's SeedSequence."""
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True)
class ArmaParams:
    phi: tuple[float, ...] = ()
    theta: tuple[float, ...] = ()
    mu: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "phi", tuple(float(v) for v in np.atleast_1d(self.phi)))
        object.__setattr__(self, "theta", tuple(float(v) for v in np.atleast_1d(self.theta)))
        object.__setattr__(self, "mu", float(self.mu))

    @property
    def p(self) -> int:
        return len(self.phi)

    @property
    def q(self) -> int:
        return len(self.theta)

    @property
    def phi_array(self) -> np.ndarray:
        return np.array(self.phi, dtype=float)

    @property
    def theta_array(self) -> np.ndarray:
        return np.array(self.theta, dtype=float)

    def to_vector(self) -> np.ndarray:
        """(phi_1..phi_p, theta_1..theta_q, mu)."""
        return np.array([*self.phi, *self.theta, self.mu], dtype=float)

    @classmethod
    def from_vector(cls, beta, p: int, q: int) -> "ArmaParams":
        beta = np.asarray(beta, dtype=float)
        if beta.shape != (p + q + 1,):
            raise ValueError(f"expected {p + q + 1} parameters, got {beta.shape}")
        return cls(beta[:p], beta[p:p + q], beta[p + q])

    def names(self) -> list[str]:
        return [f"phi{i + 1}" for i in range(self.p)] + [
            f"theta{j + 1}" for j in range(self.q)
        ] + ["mu"]

    def replace(self, **changes) -> "ArmaParams":
        data = {"phi": self.phi, "theta": self.theta, "mu": self.mu}
        data.update(changes)
        return ArmaParams(**data)


@dataclass(frozen=True)
class SeriesExpansion:
    """Coefficients c_1..c_K of a power series 1 + sum c_i B^i."""

    coeffs: np.ndarray
    truncation_len: int
    tail_bound: float
    converged: bool = True


@dataclass(frozen=True)
class SimulatedSeries:
    values: np.ndarray
    innovations: np.ndarray
    seed: object
    burn_in: int
    params: ArmaParams = field(default_factory=ArmaParams)
    sigma_a: float = 1.0


def lag_polynomial(coefs) -> np.ndarray:
    """Coefficients (increasing powers) of 1 - sum c_i B^i."""
    return np.concatenate(([1.0], -np.asarray(coefs, dtype=float)))


def root_moduli(coefs) -> np.ndarray:
    """Moduli of the roots of 1 - sum c_i B^i (companion-matrix eigenvalues)."""
    poly = lag_polynomial(coefs)
    # trim negligible top coefficients: they only add roots near infinity and
    # would overflow the companion matrix
    nz = np.flatnonzero(np.abs(poly) > 1e-14 * np.abs(poly).max())
    poly = poly[: nz[-1] + 1]
    if poly.size <= 1:
        return np.empty(0)
    return np.abs(np.roots(poly[::-1]))


def min_root_modulus(coefs) -> float:
    mods = root_moduli(coefs)
    return float(mods.min()) if mods.size else np.inf


def region_check(params: ArmaParams, zeta: float = DEFAULT_ZETA) -> bool:
    """True iff all roots of phi(B) and theta(B) have modulus >= 1 + zeta."""
    if zeta <= 0:
        raise ValueError("zeta must be positive")
    return (
        min_root_modulus(params.phi) >= 1 + zeta
        and min_root_modulus(params.theta) >= 1 + zeta
    )


def expand_ratio(numer, denom, tol: float = EXPANSION_TOL,
                 max_len: int = EXPANSION_MAX_LEN) -> SeriesExpansion:
    """Power series of numer(B)/denom(B) by long division.

    Both arguments are coefficient sequences in increasing powers of B with
    leading coefficient 1 (e.g. ``[1, -0.5]`` for 1 - 0.5B). Division stops
    once the geometric tail estimate, based on the smallest root modulus of
    ``denom``, drops below ``tol``.
    """
    numer = np.atleast_1d(np.asarray(numer, dtype=float))
    denom = np.atleast_1d(np.asarray(denom, dtype=float))
    if numer[0] != 1.0 or denom[0] != 1.0:
        raise ValueError("numer and denom must have leading coefficient 1")
    if denom.size > 1:
        rmin = min_root_modulus(-denom[1:])
        ratio = 1.0 / rmin
    else:
        ratio = 0.0
    coeffs, tail = _numeric.expand(numer, denom, ratio, tol, int(max_len))
    return SeriesExpansion(coeffs, coeffs.size, float(tail), bool(tail <= tol))


def psi_weights(params: ArmaParams, tol: float = EXPANSION_TOL,
                max_len: int = EXPANSION_MAX_LEN) -> SeriesExpansion:
    """lambda_i of the MA(infinity) form theta(B)/phi(B) = 1 + sum lambda_i B^i."""
    return expand_ratio(lag_polynomial(params.theta), lag_polynomial(params.phi), tol, max_len)


def simulate_arma(params: ArmaParams, sigma_a: float = 1.0, n: int = 200, seed=None,
                  burn_in: int = 500, zeta: float = DEFAULT_ZETA,
                  innovations=None) -> SimulatedSeries:
    """Gaussian ARMA sample from a zero initial state, burn-in discarded.

    If ``innovations`` (length n + burn_in) is given it replaces the
    Gaussian draws.
    """
    if not region_check(params, zeta):
        raise ValueError(
            "parameters outside the region: min root moduli "
            f"phi={min_root_modulus(params.phi):.6g}, "
            f"theta={min_root_modulus(params.theta):.6g}, need >= {1 + zeta:g}"
        )
    if n <= params.p:
        raise ValueError("n must exceed the AR order")
    if sigma_a <= 0:
        raise ValueError("sigma_a must be positive")
    total = n + burn_in
    if innovations is None:
        e = make_rng(seed).standard_normal(total) * sigma_a
    else:
        e = np.asarray(innovations, dtype=float)
        if e.shape != (total,):
            raise ValueError(f"need {total} innovations")
    x = _filter(params.phi_array, params.theta_array, e)
    return SimulatedSeries(
        values=x[burn_in:] + params.mu,
        innovations=e[burn_in:].copy(),
        seed=seed,
        burn_in=burn_in,
        params=params,
        sigma_a=sigma_a,
    )


def _filter(phi, theta, e):
    # w_t = sum phi_i w_{t-i} + e_t - sum theta_j e_{t-j}
    return lfilter(lag_polynomial(theta), lag_polynomial(phi), e)
