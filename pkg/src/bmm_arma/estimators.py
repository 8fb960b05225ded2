"""Two-step bounded MM (BMM) estimation of ARMA(p, q) models.

Step 1 computes S-estimates under the ARMA and the BIP residual recursions
and keeps the smaller residual scale s*. Step 2 minimizes the bounded
M-objective mean(rho2(a_t / s*)) under both recursions, starting from the
Step-1 estimate that produced s*, and keeps the branch with the smaller
objective. Every minimization is a Levenberg-Marquardt least-squares
refinement of a grid (or multistart) initial value.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple

import numpy as np

from . import _numeric
from .arma_core import DEFAULT_ZETA, ArmaParams, make_rng, region_check
from .kernels import QUADRATIC, RHO1, RHO2, Calibration, RhoKernel, calibrate
from .residuals import Flavor, psi_weight_sum_sq, robust_sd

logger = logging.getLogger(__name__)

MIN_EXTRA_OBS = 10


class Objective(str, Enum):
    S_ARMA = "S_ARMA"
    S_BIP = "S_BIP"
    M_ARMA = "M_ARMA"
    M_BIP = "M_BIP"

    @property
    def is_scale(self) -> bool:
        return self in (Objective.S_ARMA, Objective.S_BIP)

    @property
    def bip(self) -> bool:
        return self in (Objective.S_BIP, Objective.M_BIP)


class FitError(RuntimeError):
    """Raised when a fitting stage cannot produce an estimate."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@dataclass(frozen=True)
class FitConfig:
    zeta: float = DEFAULT_ZETA
    grid_points_per_param: int = 20
    grid_limit: float = 0.95
    mu_grid_offsets: tuple[float, ...] = (-2.0, -1.0, 0.0, 1.0, 2.0)
    random_starts: int = 200
    max_iter: int = 100
    step_tol: float = 1e-8
    objective_tol: float = 1e-12
    seed: int = 0
    fix_mu: float | None = None
    scale_tol: float = 1e-12
    max_damping: float = 1e10

    def __post_init__(self):
        if self.grid_points_per_param < 2:
            raise ValueError("grid_points_per_param must be >= 2")
        if self.step_tol <= 0 or self.objective_tol <= 0 or self.scale_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.zeta <= 0:
            raise ValueError("zeta must be positive")


class StageFit(NamedTuple):
    params: ArmaParams
    value: float
    converged: bool
    iterations: int


@dataclass
class FitResult:
    beta_hat: ArmaParams
    s_star: float
    branch: Flavor
    s_arma: float
    s_bip: float
    m_arma: float
    m_bip: float
    covariance: np.ndarray
    n_obs: int
    estimator: str = "BMM"
    diagnostics: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return all(d.get("converged", True) for d in self.diagnostics.get("stages", {}).values())

    def to_dict(self) -> dict:
        names = self.beta_hat.names()
        return {
            "estimator": self.estimator,
            "p": self.beta_hat.p,
            "q": self.beta_hat.q,
            "n": self.n_obs,
            "params": dict(zip(names, self.beta_hat.to_vector().tolist())),
            "s_star": self.s_star,
            "branch": self.branch.value,
            "s_arma": self.s_arma,
            "s_bip": self.s_bip,
            "m_arma": self.m_arma,
            "m_bip": self.m_bip,
            "covariance": np.asarray(self.covariance).tolist(),
            "converged": self.converged,
            "diagnostics": self.diagnostics,
        }


class _Problem:
    """One objective on one series, parametrized by a free vector x.

    x holds (phi, theta, mu), or (phi, theta) when mu is fixed.
    """

    def __init__(self, y, p: int, q: int, objective: Objective, cfg: FitConfig,
                 scale: float | None = None, kernel: RhoKernel | None = None,
                 calib: Calibration | None = None, sigma_y: float | None = None):
        self.y = np.ascontiguousarray(y, dtype=float)
        self.p, self.q = p, q
        self.objective = Objective(objective)
        self.cfg = cfg
        self.calib = calibrate() if calib is None else calib
        if kernel is None:
            kernel = RHO1 if self.objective.is_scale else RHO2
        self.kernel = kernel
        self.b = self.calib.b
        if not self.objective.is_scale:
            if scale is None or not scale > 0:
                raise ValueError("M-objectives need a positive scale")
        self.scale = scale
        self.sigma_y = robust_sd(self.y) if sigma_y is None else sigma_y
        self.fixed_mu = cfg.fix_mu
        k = p + q
        self.dim = k if self.fixed_mu is not None else k + 1
        typical = np.ones(self.dim)
        if self.fixed_mu is None:
            typical[-1] = self.sigma_y
        self.typical = typical
        self._sigma_cache: dict[tuple, float] = {}

    def params(self, x) -> ArmaParams:
        x = np.asarray(x, dtype=float)
        mu = self.fixed_mu if self.fixed_mu is not None else x[-1]
        return ArmaParams(x[: self.p], x[self.p:self.p + self.q], mu)

    def vector(self, params: ArmaParams) -> np.ndarray:
        v = params.to_vector()
        return v if self.fixed_mu is None else v[:-1]

    def inside(self, x) -> bool:
        return region_check(self.params(x), self.cfg.zeta)

    def eta_sigma(self, phi, theta) -> float:
        """Scale used inside the BIP recursion."""
        if not self.objective.is_scale:
            return self.scale
        key = (*phi, *theta)
        s = self._sigma_cache.get(key)
        if s is None:
            lam2 = psi_weight_sum_sq(ArmaParams(phi, theta))
            s = self.sigma_y / np.sqrt(1.0 + self.calib.kappa_sq * lam2)
            if len(self._sigma_cache) < 100_000:
                self._sigma_cache[key] = s
        return s

    def _split(self, x):
        x = np.asarray(x, dtype=float)
        phi = np.ascontiguousarray(x[: self.p])
        theta = np.ascontiguousarray(x[self.p:self.p + self.q])
        mu = self.fixed_mu if self.fixed_mu is not None else float(x[-1])
        return phi, theta, mu

    def raw_residuals(self, x) -> np.ndarray:
        phi, theta, mu = self._split(x)
        bip = self.objective.bip
        sigma = self.eta_sigma(tuple(phi), tuple(theta)) if bip else 1.0
        return _numeric.residuals(self.y, phi, theta, mu, sigma, bip)

    def evaluate(self, x) -> tuple[np.ndarray, float]:
        """NLS residual vector (sum of squares = objective^2 for S, objective for M)."""
        a = self.raw_residuals(x)
        k = self.kernel
        if self.objective.is_scale:
            r, s, status = _numeric.s_residuals(a, k.code, k.tuning, self.b, k.max_value,
                                                self.cfg.scale_tol, 200)
            if status == _numeric.SCALE_NONMONOTONE or not np.isfinite(s):
                return r, np.inf
            return r, float(s)
        r, m = _numeric.m_residuals(a, self.scale, k.code, k.tuning)
        return r, float(m)

    def value(self, x) -> float:
        a = self.raw_residuals(x)
        k = self.kernel
        if self.objective.is_scale:
            s, _, status = _numeric.mscale(a, k.code, k.tuning, self.b, k.max_value,
                                           self.cfg.scale_tol, 200)
            return float(s) if status != _numeric.SCALE_NONMONOTONE and np.isfinite(s) else np.inf
        return float(_numeric.mean_rho(a, 1.0 / self.scale, k.code, k.tuning))


def _coefficient_candidates(p: int, q: int, cfg: FitConfig) -> list[tuple[float, ...]]:
    k = p + q
    if k == 0:
        return [()]
    if k <= 3:
        axis = np.linspace(-cfg.grid_limit, cfg.grid_limit, cfg.grid_points_per_param)
        combos = itertools.product(axis, repeat=k)
        return [c for c in combos
                if region_check(ArmaParams(c[:p], c[p:]), cfg.zeta)]
    rng = make_rng(cfg.seed)
    starts = []
    attempts = 0
    while len(starts) < cfg.random_starts:
        attempts += 1
        if attempts > 1000 * cfg.random_starts:
            break
        phi = _from_partial_autocorrelations(rng.uniform(-cfg.grid_limit, cfg.grid_limit, p))
        theta = _from_partial_autocorrelations(rng.uniform(-cfg.grid_limit, cfg.grid_limit, q))
        if region_check(ArmaParams(phi, theta), cfg.zeta):
            starts.append((*phi, *theta))
    return starts


def _from_partial_autocorrelations(pacf) -> np.ndarray:
    """Durbin-Levinson map from partial autocorrelations in (-1, 1) to
    coefficients of a polynomial 1 - sum c_i B^i with roots outside the unit circle."""
    coefs = np.empty(0)
    for k, r in enumerate(pacf):
        coefs = np.concatenate((coefs - r * coefs[::-1], [r])) if k else np.array([r])
    return coefs


def _mu_candidates(y, cfg: FitConfig) -> list[float]:
    if cfg.fix_mu is not None:
        return []
    center = float(np.median(y))
    spread = robust_sd(y)
    return [center + off * spread for off in cfg.mu_grid_offsets]


def grid_init(y, p: int, q: int, objective: Objective | str, cfg: FitConfig = FitConfig(),
              scale: float | None = None, kernel: RhoKernel | None = None,
              calib: Calibration | None = None) -> ArmaParams:
    """Best point of a coefficient grid crossed with a location grid.

    For p + q <= 3 the coefficient grid is ``grid_points_per_param``
    equispaced values per coefficient restricted to the region; otherwise
    ``random_starts`` seeded draws from the region are used.
    """
    problem = _Problem(y, p, q, Objective(objective), cfg, scale, kernel, calib)
    params, _ = _grid_search(problem)
    return params


def _grid_search(problem: _Problem) -> tuple[ArmaParams, float]:
    cfg = problem.cfg
    coefs = _coefficient_candidates(problem.p, problem.q, cfg)
    mus = _mu_candidates(problem.y, cfg)
    best_val, best_x = np.inf, None
    for c in coefs:
        for mu in (mus or [None]):
            x = np.array([*c] if mu is None else [*c, mu], dtype=float)
            val = problem.value(x)
            if val < best_val:
                best_val, best_x = val, x
    if best_x is None:
        raise FitError("grid", "no grid point gave a finite objective")
    return problem.params(best_x), best_val


class _LMOutcome(NamedTuple):
    x: np.ndarray
    value: float
    converged: bool
    iterations: int


def _jacobian(problem: _Problem, x, r0) -> np.ndarray:
    J = np.empty((r0.size, x.size))
    for j in range(x.size):
        h = 1e-6 * max(abs(x[j]), problem.typical[j])
        xp, xm = x.copy(), x.copy()
        xp[j] += h
        xm[j] -= h
        rp, _ = problem.evaluate(xp)
        rm, _ = problem.evaluate(xm)
        J[:, j] = (rp - rm) / (2 * h)
    return J


def _cost(problem: _Problem, x) -> float:
    r, val = problem.evaluate(x)
    return float(r @ r) if np.isfinite(val) else np.inf


def _cost_hessian(problem: _Problem, x, cost) -> np.ndarray | None:
    """Central-difference Hessian of 0.5 * sum r^2, or None if any probe fails."""
    k = x.size
    h = 1e-4 * np.maximum(np.abs(x), problem.typical)
    H = np.empty((k, k))
    for i in range(k):
        e_i = np.zeros(k)
        e_i[i] = h[i]
        cp, cm = _cost(problem, x + e_i), _cost(problem, x - e_i)
        H[i, i] = (cp - 2 * cost + cm) / h[i] ** 2
        for j in range(i):
            e_j = np.zeros(k)
            e_j[j] = h[j]
            c = (_cost(problem, x + e_i + e_j) - _cost(problem, x + e_i - e_j)
                 - _cost(problem, x - e_i + e_j) + _cost(problem, x - e_i - e_j))
            H[i, j] = H[j, i] = c / (4 * h[i] * h[j])
    if not np.all(np.isfinite(H)):
        return None
    return 0.5 * H


def _levenberg_marquardt(problem: _Problem, x0) -> _LMOutcome:
    cfg = problem.cfg
    x = np.asarray(x0, dtype=float).copy()
    if x.size == 0:
        return _LMOutcome(x, problem.value(x), True, 0)
    r, val = problem.evaluate(x)
    cost = float(r @ r)
    lam = 1e-3
    converged = False
    it = 0
    for it in range(1, cfg.max_iter + 1):
        J = _jacobian(problem, x, r)
        A = J.T @ J
        g = J.T @ r
        d = np.diag(A).copy()
        d[d <= 0] = max(d.max(), 1.0) * 1e-12
        if problem.objective.is_scale:
            # the scale couples every residual, so J'J misses a large
            # second-order term; use the true curvature when it is convex
            H = _cost_hessian(problem, x, cost)
            if H is not None and np.all(np.linalg.eigvalsh(H) > 0):
                A = H
        accepted = False
        while lam <= cfg.max_damping:
            try:
                step = np.linalg.solve(A + lam * np.diag(d), -g)
            except np.linalg.LinAlgError:
                lam *= 10
                continue
            x_new = x + step
            halvings = 0
            while not problem.inside(x_new) and halvings < 60:
                step *= 0.5
                x_new = x + step
                halvings += 1
            r_new, val_new = problem.evaluate(x_new)
            cost_new = float(r_new @ r_new)
            if np.isfinite(val_new) and cost_new < cost:
                accepted = True
                break
            lam *= 10
        if not accepted:
            # no descent at any damping: stationary to numerical resolution
            converged = True
            break
        small_step = np.all(np.abs(step) <= cfg.step_tol * (np.abs(x) + problem.typical))
        small_gain = (cost - cost_new) <= cfg.objective_tol * cost
        x, r, val, cost = x_new, r_new, val_new, cost_new
        lam = max(lam / 10, 1e-12)
        if small_step or small_gain:
            converged = True
            break
    return _LMOutcome(x, float(val), converged, it)


def nls_refine(y, init: ArmaParams, objective: Objective | str, cfg: FitConfig = FitConfig(),
               scale: float | None = None, kernel: RhoKernel | None = None,
               calib: Calibration | None = None) -> StageFit:
    """Damped Gauss-Newton refinement of one objective from ``init``.

    S-objectives are written as sum r_t^2 = S_n^2 with
    r_t = sign(a_t) S_n (b (n-p))^(-1/2) rho1(a_t/S_n)^(1/2); M-objectives as
    sum r_t^2 = mean rho2(a_t / scale). Steps leaving the region are halved
    until they re-enter it, and only steps that decrease the objective are
    accepted.
    """
    problem = _Problem(y, init.p, init.q, Objective(objective), cfg, scale, kernel, calib)
    return _refine(problem, init)


def _refine(problem: _Problem, init: ArmaParams) -> StageFit:
    if not region_check(init, problem.cfg.zeta):
        raise FitError(problem.objective.value, "initial value outside the region")
    out = _levenberg_marquardt(problem, problem.vector(init))
    return StageFit(problem.params(out.x), out.value, out.converged, out.iterations)


def _check_length(y, p, q):
    y = np.asarray(y, dtype=float)
    if y.ndim != 1:
        raise ValueError("series must be one-dimensional")
    if y.size <= p + q + MIN_EXTRA_OBS:
        raise ValueError(f"need more than {p + q + MIN_EXTRA_OBS} observations, got {y.size}")
    if not np.all(np.isfinite(y)):
        raise ValueError("series contains non-finite values")
    return y


def _s_fit(y, p, q, objective, cfg, calib) -> StageFit:
    y = _check_length(y, p, q)
    problem = _Problem(y, p, q, objective, cfg, calib=calib)
    start, _ = _grid_search(problem)
    fit = _refine(problem, start)
    if not fit.converged:
        logger.warning("%s refinement did not converge in %d iterations",
                       objective.value, fit.iterations)
    return fit


def s_fit_arma(y, p: int, q: int, cfg: FitConfig = FitConfig(),
               calib: Calibration | None = None) -> StageFit:
    """S-estimate: minimize the M-scale of the ARMA residuals."""
    return _s_fit(y, p, q, Objective.S_ARMA, cfg, calib)


def s_fit_bip(y, p: int, q: int, cfg: FitConfig = FitConfig(),
              calib: Calibration | None = None) -> StageFit:
    """S-estimate under the BIP recursion, with the recursion scale
    recomputed from the robust series scale at every candidate (phi, theta)."""
    return _s_fit(y, p, q, Objective.S_BIP, cfg, calib)


def m_fit(y, s_star: float, flavor: Flavor | str, init: ArmaParams,
          cfg: FitConfig = FitConfig(), kernel: RhoKernel = RHO2,
          calib: Calibration | None = None) -> StageFit:
    """Minimize mean rho(a_t / s_star) from ``init`` under the given recursion."""
    if not s_star > 0:
        raise FitError("M", "s_star must be positive")
    objective = Objective.M_BIP if Flavor(flavor) is Flavor.BIP else Objective.M_ARMA
    problem = _Problem(y, init.p, init.q, objective, cfg, s_star, kernel, calib)
    return _refine(problem, init)


def m_objective(y, params: ArmaParams, s_star: float, flavor: Flavor | str,
                kernel: RhoKernel = RHO2) -> float:
    """mean rho(a_t / s_star) for residuals of the given flavor at ``params``."""
    y = np.ascontiguousarray(y, dtype=float)
    bip = Flavor(flavor) is Flavor.BIP
    a = _numeric.residuals(y, params.phi_array, params.theta_array, params.mu,
                           float(s_star), bip)
    return float(_numeric.mean_rho(a, 1.0 / s_star, kernel.code, kernel.tuning))


def _stage_diag(fit: StageFit) -> dict:
    return {"converged": bool(fit.converged), "iterations": int(fit.iterations),
            "value": float(fit.value)}


def _covariance(params: ArmaParams, s_star: float, n: int, kernel: RhoKernel,
                calib: Calibration, diagnostics: dict) -> np.ndarray:
    from .inference import asymptotic_cov

    k = params.p + params.q + 1
    try:
        cov = asymptotic_cov(params, s_star, s_star, calib, kernel2=kernel)
    except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        diagnostics["covariance_error"] = str(exc)
        return np.full((k, k), np.nan)
    return cov.D / (n - params.p)


def _staged(stage: str, fn, *args) -> StageFit:
    try:
        return fn(*args)
    except FitError:
        raise
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        raise FitError(stage, str(exc)) from exc


def fit_bmm(y, p: int, q: int, cfg: FitConfig = FitConfig(),
            calib: Calibration | None = None) -> FitResult:
    """Bounded MM estimate of an ARMA(p, q) model.

    Ties in either selection step go to the ARMA branch.
    """
    calib = calibrate() if calib is None else calib
    y = _check_length(y, p, q)
    s_arma = _staged("S_ARMA", s_fit_arma, y, p, q, cfg, calib)
    s_bip = _staged("S_BIP", s_fit_bip, y, p, q, cfg, calib)

    if s_arma.value <= s_bip.value:
        s_star, start = s_arma.value, s_arma.params
    else:
        s_star, start = s_bip.value, s_bip.params
    if not (np.isfinite(s_star) and s_star > 0):
        raise FitError("S", f"degenerate residual scale {s_star}")

    m_arma = _staged("M_ARMA", m_fit, y, s_star, Flavor.ARMA, start, cfg, RHO2, calib)
    m_bip = _staged("M_BIP", m_fit, y, s_star, Flavor.BIP, start, cfg, RHO2, calib)
    if m_arma.value <= m_bip.value:
        branch, chosen = Flavor.ARMA, m_arma.params
    else:
        branch, chosen = Flavor.BIP, m_bip.params

    diagnostics = {
        "stages": {
            "S_ARMA": _stage_diag(s_arma),
            "S_BIP": _stage_diag(s_bip),
            "M_ARMA": _stage_diag(m_arma),
            "M_BIP": _stage_diag(m_bip),
        },
        "step1_start": "ARMA" if s_arma.value <= s_bip.value else "BIP",
        # objective of the BIP recursion at the ARMA-branch minimizer
        "m_bip_at_arma": m_objective(y, m_arma.params, s_star, Flavor.BIP),
    }
    cov = _covariance(chosen, s_star, y.size, RHO2, calib, diagnostics)
    return FitResult(
        beta_hat=chosen, s_star=float(s_star), branch=branch,
        s_arma=float(s_arma.value), s_bip=float(s_bip.value),
        m_arma=float(m_arma.value), m_bip=float(m_bip.value),
        covariance=cov, n_obs=int(y.size), estimator="BMM", diagnostics=diagnostics,
    )


def fit_mm(y, p: int, q: int, cfg: FitConfig = FitConfig(),
           calib: Calibration | None = None) -> FitResult:
    """MM estimate with ordinary ARMA residuals in both steps (no BIP branch)."""
    calib = calibrate() if calib is None else calib
    y = _check_length(y, p, q)
    s_arma = s_fit_arma(y, p, q, cfg, calib)
    if not (np.isfinite(s_arma.value) and s_arma.value > 0):
        raise FitError("S", f"degenerate residual scale {s_arma.value}")
    m_arma = m_fit(y, s_arma.value, Flavor.ARMA, s_arma.params, cfg, RHO2, calib)
    diagnostics = {"stages": {"S_ARMA": _stage_diag(s_arma), "M_ARMA": _stage_diag(m_arma)}}
    cov = _covariance(m_arma.params, s_arma.value, y.size, RHO2, calib, diagnostics)
    return FitResult(
        beta_hat=m_arma.params, s_star=float(s_arma.value), branch=Flavor.ARMA,
        s_arma=float(s_arma.value), s_bip=np.nan, m_arma=float(m_arma.value), m_bip=np.nan,
        covariance=cov, n_obs=int(y.size), estimator="MM", diagnostics=diagnostics,
    )


def fit_cls(y, p: int, q: int, cfg: FitConfig = FitConfig(),
            calib: Calibration | None = None) -> FitResult:
    """Conditional least squares, i.e. the conditional Gaussian ML estimate.

    The reported scale is the root mean squared residual.
    """
    calib = calibrate() if calib is None else calib
    y = _check_length(y, p, q)
    scale = robust_sd(y)
    problem = _Problem(y, p, q, Objective.M_ARMA, cfg, scale, QUADRATIC, calib)
    start, _ = _grid_search(problem)
    fit = _refine(problem, start)
    sigma = scale * float(np.sqrt(2.0 * fit.value))
    diagnostics = {"stages": {"CLS": _stage_diag(fit)}}
    cov = _covariance(fit.params, sigma, y.size, QUADRATIC, calib, diagnostics)
    return FitResult(
        beta_hat=fit.params, s_star=sigma, branch=Flavor.ARMA,
        s_arma=sigma, s_bip=np.nan, m_arma=float(fit.value), m_bip=np.nan,
        covariance=cov, n_obs=int(y.size), estimator="MLE", diagnostics=diagnostics,
    )


ESTIMATORS = {"BMM": fit_bmm, "MM": fit_mm, "MLE": fit_cls}
