"""Outlier injection: z_t = (1 - zeta_t) x_t + zeta_t w_t.

Additive outliers use w_t = x_t + k, replacement outliers w_t = k. The
0/1 indicators zeta_t are either equally spaced (every m-th point with
m = floor(1/epsilon), starting at t = m) or i.i.d. Bernoulli(epsilon).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .arma_core import make_rng


class Kind(str, Enum):
    ADDITIVE = "additive"
    REPLACEMENT = "replacement"


class Placement(str, Enum):
    EQUALLY_SPACED = "equally_spaced"
    IID_BERNOULLI = "iid_bernoulli"


class SignRule(str, Enum):
    POSITIVE = "positive"
    ALTERNATING = "alternating"
    RANDOM_SIGN = "random_sign"


@dataclass(frozen=True)
class ContaminationSpec:
    epsilon: float = 0.0
    kind: Kind = Kind.ADDITIVE
    size_k: float = 0.0
    placement: Placement = Placement.EQUALLY_SPACED
    sign_rule: SignRule = SignRule.POSITIVE
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.epsilon < 1.0:
            raise ValueError(f"epsilon must lie in [0, 1), got {self.epsilon}")
        if not np.isfinite(self.size_k):
            raise ValueError("size_k must be finite")
        object.__setattr__(self, "kind", Kind(self.kind))
        object.__setattr__(self, "placement", Placement(self.placement))
        object.__setattr__(self, "sign_rule", SignRule(self.sign_rule))

    @property
    def label(self) -> str:
        if self.epsilon == 0:
            return "clean"
        return f"{self.kind.value}_eps{self.epsilon:g}_k{self.size_k:g}"

    def with_seed(self, seed: int) -> "ContaminationSpec":
        return replace(self, seed=int(seed))


def _floor(x: float) -> int:
    # guard against 0.1 * 200 = 20.000000000000004 style noise in both directions
    return int(math.floor(x + 1e-9))


def outlier_positions(n: int, spec: ContaminationSpec,
                      rng: np.random.Generator | None = None) -> np.ndarray:
    """0-based indices of the contaminated time points."""
    if spec.epsilon == 0 or spec.epsilon * n < 1:
        return np.empty(0, dtype=np.int64)
    if spec.placement is Placement.EQUALLY_SPACED:
        m = _floor(1.0 / spec.epsilon)
        count = min(_floor(spec.epsilon * n), n // m)
        return (np.arange(1, count + 1, dtype=np.int64) * m) - 1
    rng = make_rng(spec.seed) if rng is None else rng
    return np.flatnonzero(rng.random(n) < spec.epsilon).astype(np.int64)


def contaminate(x, spec: ContaminationSpec) -> tuple[np.ndarray, np.ndarray]:
    """Return the contaminated copy of ``x`` and the 0-based outlier indices."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("series must be one-dimensional")
    n = x.size
    if spec.epsilon > 0 and spec.epsilon * n < 1:
        warnings.warn(f"epsilon * n = {spec.epsilon * n:g} < 1: no outliers placed",
                      RuntimeWarning, stacklevel=2)
    rng = make_rng(spec.seed)
    idx = outlier_positions(n, spec, rng)
    z = x.copy()
    if idx.size == 0:
        return z, idx
    if spec.sign_rule is SignRule.POSITIVE:
        signs = np.ones(idx.size)
    elif spec.sign_rule is SignRule.ALTERNATING:
        signs = np.where(np.arange(idx.size) % 2 == 0, 1.0, -1.0)
    else:
        signs = rng.choice(np.array([-1.0, 1.0]), size=idx.size)
    if spec.kind is Kind.ADDITIVE:
        z[idx] += signs * spec.size_k
    else:
        z[idx] = signs * spec.size_k
    return z, idx
