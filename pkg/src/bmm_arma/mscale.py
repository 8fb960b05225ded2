"""M-estimates of scale: the positive root s of mean(rho(u_i / s)) = b."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _numeric
from .kernels import RHO1, RhoKernel


class ScaleError(ArithmeticError):
    pass


@dataclass(frozen=True)
class ScaleResult:
    s: float
    iterations: int
    converged: bool
    imploded: bool = False


def solve_m_scale(u, kernel: RhoKernel = RHO1, b: float | None = None,
                  tol: float = 1e-10, max_iter: int = 200) -> ScaleResult:
    """Solve the M-scale equation for a bounded ``kernel``.

    Returns ``s = 0`` (flagged ``imploded``) when at least a fraction
    1 - b/max(rho) of the entries are exactly zero; the equation then has
    no positive root.
    """
    u = np.ascontiguousarray(u, dtype=float)
    if u.ndim != 1 or u.size == 0:
        raise ValueError("u must be a non-empty vector")
    if not np.all(np.isfinite(u)):
        raise ValueError("u contains non-finite values")
    max_rho = kernel.max_value
    b = max_rho / 2 if b is None else float(b)
    if not 0 < b < max_rho:
        raise ValueError("need 0 < b < max rho")
    s, it, status = _numeric.mscale(u, kernel.code, kernel.tuning, b, max_rho, tol, max_iter)
    if status == _numeric.SCALE_NONMONOTONE:
        raise ScaleError("scale equation not monotone on the bracket")
    if status == _numeric.SCALE_MAXITER and not np.isfinite(s):
        # bounded rho with b < max rho and a nonzero entry always brackets
        raise ScaleError("could not bracket the scale equation")
    return ScaleResult(
        s=float(s),
        iterations=int(it),
        converged=status in (_numeric.SCALE_OK, _numeric.SCALE_IMPLODED),
        imploded=status == _numeric.SCALE_IMPLODED,
    )
