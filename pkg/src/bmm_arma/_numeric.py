"""Compiled inner loops: kernels, residual recursions, M-scale root finding.

Everything here works on plain float64 arrays so that the Python layer can
stay readable while grid searches and Jacobians run at native speed.
"""
import numpy as np
from numba import njit

KERNEL_OCTIC = 0
KERNEL_QUADRATIC = 1

OCTIC_MAX = 3.25

# status codes returned by mscale
SCALE_OK = 0
SCALE_IMPLODED = 1
SCALE_MAXITER = 2
SCALE_NONMONOTONE = 3


@njit(cache=True)
def rho_octic(x):
    ax = abs(x)
    if ax <= 2.0:
        return 0.5 * x * x
    if ax < 3.0:
        u = x * x
        # == 0.002x^8 - 0.052x^6 + 0.432x^4 - 0.972x^2 + 1.792
        return OCTIC_MAX + 0.002 * (u - 9.0) ** 3 * (u + 1.0)
    return OCTIC_MAX


@njit(cache=True)
def psi_octic(x):
    ax = abs(x)
    if ax <= 2.0:
        return x
    if ax < 3.0:
        u = x * x
        # == 0.016x^7 - 0.312x^5 + 1.728x^3 - 1.944x
        return 0.016 * x * (u - 9.0) ** 2 * (u - 1.5)
    return 0.0


@njit(cache=True)
def dpsi_octic(x):
    ax = abs(x)
    if ax <= 2.0:
        return 1.0
    if ax < 3.0:
        u = x * x
        # == 0.112x^6 - 1.56x^4 + 5.184x^2 - 1.944
        return 0.016 * (u - 9.0) * (7.0 * u * u - 34.5 * u + 13.5)
    return 0.0


@njit(cache=True)
def rho(x, code, c):
    if code == KERNEL_QUADRATIC:
        z = x / c
        return 0.5 * z * z
    return rho_octic(x / c)


@njit(cache=True)
def mean_rho(u, inv_s, code, c):
    acc = 0.0
    for i in range(u.shape[0]):
        acc += rho(u[i] * inv_s, code, c)
    return acc / u.shape[0]


@njit(cache=True)
def residuals(y, phi, theta, mu, sigma, bip):
    """a_t for t >= p (0-based); zero before. Returns the tail a[p:].

    With ``bip`` the lagged residuals enter through sigma*eta(a/sigma);
    inside the identity zone of eta the lag term is written exactly as the
    pure ARMA one, so both recursions agree bit for bit there.
    """
    n = y.shape[0]
    p = phi.shape[0]
    q = theta.shape[0]
    r = max(p, q)
    a = np.zeros(n)
    for t in range(p, n):
        v = y[t] - mu
        for i in range(1, p + 1):
            v -= phi[i - 1] * (y[t - i] - mu)
        for i in range(1, r + 1):
            if t - i < p:
                break
            ai = a[t - i]
            th = theta[i - 1] if i <= q else 0.0
            if not bip or abs(ai / sigma) <= 2.0:
                v += th * ai
            else:
                ph = phi[i - 1] if i <= p else 0.0
                v += ph * ai + (th - ph) * sigma * psi_octic(ai / sigma)
        a[t] = v
    return a[p:]


@njit(cache=True)
def expand(numer, denom, ratio, tol, max_len):
    """Long division numer(B)/denom(B) = 1 + sum c_i B^i.

    ``numer`` and ``denom`` are full coefficient arrays with a leading 1.
    ``ratio`` bounds the geometric decay (inverse of the smallest root
    modulus of denom). Returns (c_1..c_K, tail_estimate).
    """
    dn = numer.shape[0] - 1
    dd = denom.shape[0] - 1
    out = np.zeros(max_len + 1)
    out[0] = 1.0
    kmin = max(dn, dd, 1)
    window = max(dd, 1)
    if ratio >= 1.0:
        geom = np.inf
    else:
        geom = ratio / (1.0 - ratio)
    tail = np.inf
    k_end = max_len
    for k in range(1, max_len + 1):
        v = numer[k] if k <= dn else 0.0
        for j in range(1, min(k, dd) + 1):
            v -= denom[j] * out[k - j]
        out[k] = v
        if k >= kmin:
            m = 0.0
            for j in range(k - window + 1, k + 1):
                if abs(out[j]) > m:
                    m = abs(out[j])
            if dd == 0:
                tail = 0.0
            else:
                tail = m * geom
            if tail < tol:
                k_end = k
                break
    return out[1:k_end + 1].copy(), tail


@njit(cache=True)
def sum_sq_weights(phi, theta, ratio, tol, max_len):
    """sum_{i>=1} lambda_i^2 for lambda(B) = theta(B)/phi(B) in the 1 - sum convention."""
    p = phi.shape[0]
    q = theta.shape[0]
    numer = np.empty(q + 1)
    denom = np.empty(p + 1)
    numer[0] = 1.0
    denom[0] = 1.0
    for i in range(q):
        numer[i + 1] = -theta[i]
    for i in range(p):
        denom[i + 1] = -phi[i]
    c, tail = expand(numer, denom, ratio, tol, max_len)
    acc = 0.0
    for i in range(c.shape[0]):
        acc += c[i] * c[i]
    return acc, tail


@njit(cache=True)
def mscale(u, code, c, b, max_rho, rtol, max_iter):
    """Root of mean rho(u/s) = b. Returns (s, iterations, status)."""
    n = u.shape[0]
    nzero = 0
    amax = 0.0
    for i in range(n):
        au = abs(u[i])
        if au == 0.0:
            nzero += 1
        if au > amax:
            amax = au
    if nzero >= n * (1.0 - b / max_rho) or amax == 0.0:
        return 0.0, 0, SCALE_IMPLODED

    med = np.median(np.abs(u))
    lo = med / 10.0 if med > 0.0 else amax * 1e-3
    hi = 10.0 * amax
    f_lo = mean_rho(u, 1.0 / lo, code, c) - b
    it = 0
    while f_lo <= 0.0 and it < 2000:
        lo *= 0.5
        f_lo = mean_rho(u, 1.0 / lo, code, c) - b
        it += 1
    f_hi = mean_rho(u, 1.0 / hi, code, c) - b
    while f_hi >= 0.0 and it < 2000:
        hi *= 2.0
        f_hi = mean_rho(u, 1.0 / hi, code, c) - b
        it += 1
    if f_lo <= 0.0 or f_hi >= 0.0:
        return np.nan, it, SCALE_MAXITER

    # Illinois false position on a bracket [lo, hi] with f(lo) > 0 > f(hi).
    ftol = 0.1 * rtol * b
    true_lo = f_lo
    true_hi = f_hi
    side = 0
    s = 0.5 * (lo + hi)
    status = SCALE_MAXITER
    for k in range(max_iter):
        s = (lo * f_hi - hi * f_lo) / (f_hi - f_lo)
        if not (lo < s < hi):
            s = 0.5 * (lo + hi)
        f_s = mean_rho(u, 1.0 / s, code, c) - b
        it += 1
        if f_s > true_lo or f_s < true_hi:
            return s, it, SCALE_NONMONOTONE
        if abs(f_s) <= ftol or (hi - lo) <= 1e-15 * s:
            status = SCALE_OK
            break
        if f_s > 0.0:
            lo, f_lo, true_lo = s, f_s, f_s
            if side == 1:
                f_hi *= 0.5
            side = 1
        else:
            hi, f_hi, true_hi = s, f_s, f_s
            if side == -1:
                f_lo *= 0.5
            side = -1
        if (hi - lo) <= rtol * 1e-2 * lo:
            s = lo if abs(true_lo) < abs(true_hi) else hi
            status = SCALE_OK
            break
    return s, it, status


@njit(cache=True)
def s_residuals(a, code, c, b, max_rho, rtol, max_iter):
    """NLS residuals whose squared sum equals the M-scale squared."""
    s, it, status = mscale(a, code, c, b, max_rho, rtol, max_iter)
    m = a.shape[0]
    r = np.zeros(m)
    if s > 0.0 and np.isfinite(s):
        k = s / np.sqrt(m * b)
        inv = 1.0 / s
        for i in range(m):
            v = np.sqrt(rho(a[i] * inv, code, c))
            r[i] = k * v if a[i] >= 0.0 else -k * v
    return r, s, status


@njit(cache=True)
def m_residuals(a, scale, code, c):
    """NLS residuals whose squared sum equals mean rho(a/scale)."""
    m = a.shape[0]
    r = np.empty(m)
    inv = 1.0 / scale
    k = 1.0 / np.sqrt(m)
    acc = 0.0
    for i in range(m):
        v = rho(a[i] * inv, code, c)
        acc += v
        v = np.sqrt(v)
        r[i] = k * v if a[i] >= 0.0 else -k * v
    return r, acc / m
