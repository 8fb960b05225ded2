import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.optimize import brentq

from bmm_arma.kernels import RHO1, RHO2, rho1
from bmm_arma.mscale import solve_m_scale

B = 1.625


def test_constant_vector():
    r_star = brentq(lambda r: rho1(r) - B, 0.0, 3 * 0.405, xtol=1e-15)
    for c in (0.5, 3.0):
        res = solve_m_scale(np.full(25, c), b=B)
        assert res.converged
        assert res.s == pytest.approx(c / r_star, rel=1e-9)


def test_normal_consistency(rng):
    res = solve_m_scale(rng.standard_normal(10_000), b=B)
    assert abs(res.s - 1.0) < 0.03


def test_doubling_is_exact(rng):
    u = rng.standard_normal(300)
    assert solve_m_scale(2 * u, b=B).s == 2 * solve_m_scale(u, b=B).s


@pytest.mark.parametrize("c", [-3.0, 0.1, 7.0])
def test_equivariance(rng, c):
    u = rng.standard_t(3, 200)
    assert solve_m_scale(c * u, b=B).s == pytest.approx(abs(c) * solve_m_scale(u, b=B).s,
                                                       rel=1e-12)


finite = st.floats(-1e6, 1e6, allow_nan=False)


@given(arrays(np.float64, st.integers(1, 80), elements=finite))
def test_defining_equation_holds(u):
    res = solve_m_scale(u, b=B)
    assert res.converged
    if res.s > 0:
        # a tiny scale may push u / s to inf, where rho1 is at its bound
        with np.errstate(over="ignore"):
            z = u / res.s
        assert abs(np.mean(rho1(z)) - B) <= 1e-10 * B
    else:
        assert np.mean(u == 0) >= 1 - B / RHO1.max_value


def test_implosion():
    u = np.array([0.0] * 5 + [1.0, -2.0, 3.0, 4.0, 5.0])
    res = solve_m_scale(u, b=B)
    assert res.s == 0.0 and res.converged and res.imploded
    # one fewer zero and the root is positive again
    assert solve_m_scale(np.r_[0.5, u[1:]], b=B).s > 0


def test_explosion_breakdown(rng):
    n = 100
    u = rng.standard_normal(n)
    base = solve_m_scale(u, b=B).s
    limit = int(np.ceil(n * B / RHO1.max_value))
    z = u.copy()
    z[: limit - 1] = 1e9
    assert solve_m_scale(z, b=B).s < 20 * base
    z[: limit + 1] = 1e9
    assert solve_m_scale(z, b=B).s > 1e8


def test_other_kernel_and_default_b(rng):
    u = rng.standard_normal(500)
    res = solve_m_scale(u, kernel=RHO2)
    assert abs(np.mean(RHO2(u / res.s)) - RHO2.max_value / 2) <= 1e-10 * B


def test_input_errors():
    with pytest.raises(ValueError):
        solve_m_scale(np.array([]), b=B)
    with pytest.raises(ValueError):
        solve_m_scale(np.array([1.0, np.nan]), b=B)
    with pytest.raises(ValueError):
        solve_m_scale(np.array([1.0]), b=3.25)
