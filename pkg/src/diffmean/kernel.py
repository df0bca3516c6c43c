"""Modified Bessel function K0 and the convolution kernels v1 and v.

Three evaluation routes exist for v1:

* ``direct``   -- adaptive quadrature of the defining convolution integral,
* ``spectral`` -- (4/pi) * int_0^inf K0(y)^2 cos(tau y) dy,
* ``agm``      -- the closed form 2*pi / AGM(2, sqrt(tau^2 + 4)).

``agm`` is exact to rounding and vectorizes, so it is the default for bulk
work; the other two exist as independent cross-checks.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

EULER_GAMMA = 0.57721566490153286061

_SERIES_MAX = 2.0
_ASYMPTOTIC_MIN = 20.0
_SERIES_TERMS = 18


@dataclass(frozen=True)
class QuadratureConfig:
    abs_tol: float = 1e-13
    rel_tol: float = 1e-12
    max_subdivisions: int = 400
    tail_cut: float = 40.0

    def __post_init__(self):
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ValueError("quadrature tolerances must be positive")
        if self.max_subdivisions < 16:
            raise ValueError("max_subdivisions must be >= 16")
        if self.tail_cut <= 10:
            raise ValueError("tail_cut must exceed 10")


DEFAULT_QUAD = QuadratureConfig()


# ---------------------------------------------------------------------------
# K0
# ---------------------------------------------------------------------------

def _k0_series(y: np.ndarray) -> np.ndarray:
    z = 0.25 * y * y
    term = np.ones_like(y)
    i0 = np.ones_like(y)
    tail = np.zeros_like(y)
    harmonic = 0.0
    for k in range(1, _SERIES_TERMS + 1):
        term = term * z / (k * k)
        harmonic += 1.0 / k
        i0 = i0 + term
        tail = tail + harmonic * term
    return -(np.log(0.5 * y) + EULER_GAMMA) * i0 + tail


def k0_series_remainder_bound(y: float) -> float:
    """Upper bound on the truncation error of the ascending series, y <= 2."""
    z = 0.25 * y * y
    k = _SERIES_TERMS + 1
    first = z ** k / math.factorial(k) ** 2
    # geometric majorant: consecutive term ratio <= z/(k+1)^2 <= 1/400
    log_part = abs(math.log(0.5 * y) + EULER_GAMMA) + math.log(k) + 1.0
    return first * log_part / (1.0 - z / (k + 1) ** 2)


def _k0_asymptotic_scaled(y: np.ndarray) -> np.ndarray:
    """e^y K0(y) by the asymptotic series."""
    # terms alternate in sign; the first omitted term bounds the remainder
    total = np.ones_like(y)
    term = np.ones_like(y)
    for k in range(1, 60):
        term = -term * (2 * k - 1) ** 2 / (8.0 * k * y)
        total = total + term
        if np.all(np.abs(term) < 1e-17 * np.abs(total)):
            break
    return np.sqrt(np.pi / (2.0 * y)) * total


def _k0_asymptotic(y: np.ndarray) -> np.ndarray:
    return _k0_asymptotic_scaled(y) * np.exp(-y)


def k0_asymptotic_remainder_bound(y: float, terms: int) -> float:
    """|first omitted term| of the asymptotic series after ``terms`` terms."""
    t = 1.0
    for k in range(1, terms + 1):
        t *= (2 * k - 1) ** 2 / (8.0 * k * y)
    return math.sqrt(math.pi / (2.0 * y)) * math.exp(-y) * t


def _k0_cosh_trapezoid(y: np.ndarray, step: float = 0.05) -> np.ndarray:
    # K0(y) = int_0^inf exp(-y cosh u) du; the trapezoid rule converges like
    # exp(-pi^2 / step) for this integrand.
    u_max = np.arccosh(1.0 + 745.0 / np.min(y))
    u = np.arange(0.0, u_max + step, step)
    w = np.full(u.shape, step)
    w[0] = 0.5 * step
    expo = -np.outer(y, np.cosh(u) - 1.0)
    return np.exp(expo) @ w * np.exp(-y)


def bessel_k0(y):
    """K0(y) for y > 0, scalar or array."""
    arr = np.asarray(y, dtype=float)
    if np.any(~(arr > 0)):
        raise ValueError("K0 is defined only for y > 0")
    flat = arr.ravel()
    out = np.empty_like(flat)
    lo = flat <= _SERIES_MAX
    hi = flat >= _ASYMPTOTIC_MIN
    mid = ~(lo | hi)
    if lo.any():
        out[lo] = _k0_series(flat[lo])
    if hi.any():
        out[hi] = _k0_asymptotic(flat[hi])
    if mid.any():
        out[mid] = _k0_cosh_trapezoid(flat[mid])
    out = out.reshape(arr.shape)
    return float(out) if out.ndim == 0 else out


def log_k0(y):
    """log K0(y); stays finite where K0 underflows."""
    arr = np.asarray(y, dtype=float)
    out = np.empty_like(arr)
    big = arr >= _ASYMPTOTIC_MIN
    if big.any():
        yb = arr[big]
        out[big] = np.log(_k0_asymptotic_scaled(yb)) - yb
    if (~big).any():
        out[~big] = np.log(bessel_k0(arr[~big]))
    return float(out) if out.ndim == 0 else out


def k0_direct(y: float, cfg: QuadratureConfig = DEFAULT_QUAD) -> float:
    """K0 from its cosine-integral definition (test oracle only)."""
    if y <= 0:
        raise ValueError("K0 is defined only for y > 0")
    val, _ = integrate.quad(lambda x: 1.0 / math.sqrt(1.0 + x * x), 0.0, np.inf,
                            weight="cos", wvar=y, limlst=200)
    return val


# ---------------------------------------------------------------------------
# integrals of powers of K0
# ---------------------------------------------------------------------------

def _log_power_integrand_lower(s: np.ndarray, p: int) -> np.ndarray:
    # substitution y = exp(-s) on (0, 1]
    return p * np.log(bessel_k0(np.exp(-s))) - s


def log_k0_power_integral(p: int, cfg: QuadratureConfig = DEFAULT_QUAD) -> float:
    """log of int_0^inf K0(y)^p dy, finite for every p.

    The logarithmic singularity at 0 is removed by y = exp(-s); the peak of
    the substituted integrand sits near s = p and is factored out before
    integrating.  The tail beyond ``cfg.tail_cut`` is below
    K0(tail_cut)^p / p and is dropped.
    """
    if p < 1:
        raise ValueError("power must be >= 1")
    s_grid = np.linspace(0.0, 3.0 * p + 60.0, 4001)
    lg = _log_power_integrand_lower(s_grid, p)
    shift = float(np.max(lg))
    s_peak = float(s_grid[np.argmax(lg)])

    def lower(s):
        return math.exp(_log_power_integrand_lower(np.array([s]), p)[0] - shift)

    a, _ = integrate.quad(lower, 0.0, float(s_grid[-1]),
                          points=[s_peak] if s_peak > 0 else None,
                          epsabs=cfg.abs_tol, epsrel=cfg.rel_tol,
                          limit=cfg.max_subdivisions)

    def upper(y):
        return math.exp(p * float(log_k0(y)) - shift)

    b, _ = integrate.quad(upper, 1.0, cfg.tail_cut, epsabs=cfg.abs_tol,
                          epsrel=cfg.rel_tol, limit=cfg.max_subdivisions)
    return shift + math.log(a + b)


def k0_power_integral(p: int, tau: float = 0.0,
                      cfg: QuadratureConfig = DEFAULT_QUAD) -> float:
    """int_0^inf K0(y)^p cos(tau y) dy on the linear scale."""
    def lower(s):
        y = math.exp(-s)
        return float(bessel_k0(y)) ** p * math.cos(tau * y) * y

    # below y = exp(-(3p + 60)) the integrand mass is under exp(-60) of the total
    a, _ = integrate.quad(lower, 0.0, 3.0 * p + 60.0, points=[float(p)],
                          epsabs=cfg.abs_tol, epsrel=cfg.rel_tol,
                          limit=cfg.max_subdivisions)

    def upper(y):
        return float(bessel_k0(y)) ** p

    if tau == 0.0:
        b, _ = integrate.quad(upper, 1.0, cfg.tail_cut, epsabs=cfg.abs_tol,
                              epsrel=cfg.rel_tol, limit=cfg.max_subdivisions)
    else:
        b, _ = integrate.quad(upper, 1.0, cfg.tail_cut, weight="cos", wvar=tau,
                              epsabs=cfg.abs_tol, epsrel=cfg.rel_tol,
                              limit=cfg.max_subdivisions)
    return a + b


def tail_remainder_bound(p: int, cfg: QuadratureConfig = DEFAULT_QUAD) -> float:
    """Bound on int_{tail_cut}^inf K0^p, using K0(y) <= K0(T) exp(-(y - T))."""
    return float(bessel_k0(cfg.tail_cut)) ** p / p


# ---------------------------------------------------------------------------
# v1 and v
# ---------------------------------------------------------------------------

def _agm(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    for _ in range(64):
        a, b = 0.5 * (a + b), np.sqrt(a * b)
        if np.all(np.abs(a - b) <= 4e-16 * a):
            break
    return 0.5 * (a + b)


def _v1_agm(tau):
    tau = np.abs(np.asarray(tau, dtype=float))
    # sqrt(tau^2 + 4) without overflow for huge tau
    return 2.0 * np.pi / _agm(np.full(tau.shape, 2.0), np.hypot(tau, 2.0))


def v1_scalar(tau: float) -> float:
    """Scalar AGM route without array overhead, for use inside quadrature."""
    a, b = 2.0, math.hypot(tau, 2.0)
    while abs(a - b) > 1e-15 * a:
        a, b = 0.5 * (a + b), math.sqrt(a * b)
    return 2.0 * math.pi / (0.5 * (a + b))


def _v1_direct(tau: float, cfg: QuadratureConfig) -> float:
    tau = abs(tau)

    def f(x):
        return 1.0 / math.sqrt((1.0 + x * x) * (1.0 + (tau - x) ** 2))

    # symmetric about tau/2
    kw = dict(epsabs=cfg.abs_tol, epsrel=cfg.rel_tol, limit=cfg.max_subdivisions)
    if tau == 0.0:
        a = 0.0
    else:
        a, _ = integrate.quad(f, 0.5 * tau, tau, **kw)
    b, _ = integrate.quad(f, tau, np.inf, **kw)
    return 2.0 * (a + b)


def _v1_spectral(tau: float, cfg: QuadratureConfig) -> float:
    return 4.0 / math.pi * k0_power_integral(2, abs(tau), cfg)


def v1(tau, method: str = "agm", cfg: QuadratureConfig = DEFAULT_QUAD):
    """v1(tau) = int dt / sqrt((1 + t^2)(1 + (tau - t)^2))."""
    if method == "agm":
        out = _v1_agm(tau)
        return float(out) if out.ndim == 0 else out
    if method == "direct":
        fn = _v1_direct
    elif method == "spectral":
        fn = _v1_spectral
    else:
        raise ValueError(f"unknown v1 method {method!r}")
    arr = np.asarray(tau, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("tau must be finite")
    if arr.ndim == 0:
        return fn(float(arr), cfg)
    return np.array([fn(float(t), cfg) for t in arr.ravel()]).reshape(arr.shape)


def v(t, method: str = "agm", cfg: QuadratureConfig = DEFAULT_QUAD):
    """v(t) = v1(arccosh t) for t >= 1."""
    arr = np.asarray(t, dtype=float)
    if np.any(~(arr >= 1.0)):
        raise ValueError("v is defined only for t >= 1")
    return v1(np.arccosh(arr), method=method, cfg=cfg)


def log_v1(tau):
    return np.log(_v1_agm(tau))


# ---------------------------------------------------------------------------
# Chain integral
# ---------------------------------------------------------------------------

CHAIN_LINEAR_MAX = 24


def chain_integral(n: int, log: bool = False, cfg: QuadratureConfig = DEFAULT_QUAD) -> float:
    """n-fold chain integral of prod 1/sqrt(1 + (x_{j+1} - x_j)^2).

    Evaluated as (2^(n+1) / pi) int_0^inf K0(y)^(n+1) dy.  With ``log=True``
    returns its natural logarithm, which is the only option beyond n = 24.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not log and n > CHAIN_LINEAR_MAX:
        raise ValueError(f"n > {CHAIN_LINEAR_MAX} overflows; pass log=True")
    if n > 400:
        raise ValueError("n > 400 is not supported")
    logval = (n + 1) * math.log(2.0) - math.log(math.pi) + log_k0_power_integral(n + 1, cfg=cfg)
    return logval if log else math.exp(logval)


def chain_bracket_ratio(n: int) -> float:
    """I_n / (2^(n+1) (n+1)!), the quantity bracketed by two constants."""
    log_ratio = chain_integral(n, log=True) - (n + 1) * math.log(2.0) - math.lgamma(n + 2)
    return math.exp(log_ratio)


def k0_small_argument_bracket(y: float, eps0: float) -> tuple[float, float]:
    """(-ln(y/eps0), -ln(y/2)), the two-sided bracket for K0 near 0."""
    return -math.log(y / eps0), -math.log(y / 2.0)


def k0_exponential_constant(eps0: float, y_max: float = 200.0, points: int = 4000) -> float:
    """Measured sup_{y >= eps0} K0(y) e^y on a scan grid."""
    ys = np.linspace(eps0, y_max, points)
    return float(np.max(np.exp(log_k0(ys) + ys)))
