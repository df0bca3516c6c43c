"""Brownian paths on [0, 1] and their transport to diffeomorphisms.

Paths are piecewise linear between the nodes k/m.  The map ``a_inv`` sends a
path xi to q(t) = int_0^t e^xi / int_0^1 e^xi, with integrals done by the
composite trapezoid rule and node derivatives set to e^{xi_k}/Z, so values
and derivatives come from one and the same quadrature.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import GridDiffeo

DEFAULT_DELTA = 0.4
_ALL_PAIRS_MAX = 1024


def _is_power_of_two(m: int) -> bool:
    return m >= 2 and (m & (m - 1)) == 0


def check_resolution(m: int) -> None:
    if not isinstance(m, (int, np.integer)) or not _is_power_of_two(int(m)):
        raise ValueError(f"grid resolution must be a power of two >= 2, got {m!r}")


@dataclass(frozen=True, eq=False)
class Path:
    values: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if v.ndim != 1:
            raise ValueError("path values must be one-dimensional")
        check_resolution(v.size - 1)
        if v[0] != 0.0:
            raise ValueError("a path must start at 0")
        if not np.all(np.isfinite(v)):
            raise ValueError("path values must be finite")

    @property
    def m(self) -> int:
        return self.values.size - 1

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.m + 1)

    @classmethod
    def from_function(cls, fn, m: int) -> "Path":
        vals = np.asarray(fn(np.linspace(0.0, 1.0, m + 1)), dtype=float)
        return cls(vals - vals[0])

    def reversed(self) -> "Path":
        return Path(reverse_paths(self.values))


@dataclass(frozen=True)
class EstimateResult:
    value: float
    std_error: float
    n_samples: int

    def __post_init__(self):
        if not math.isfinite(self.std_error) or self.std_error < 0:
            raise ValueError("std_error must be finite and non-negative")
        if self.n_samples < 2:
            raise ValueError("an estimate needs at least two samples")

    @classmethod
    def from_samples(cls, x) -> "EstimateResult":
        x = np.asarray(x, dtype=float)
        n = x.size
        return cls(float(np.mean(x)), float(np.std(x, ddof=1) / math.sqrt(n)), n)

    def to_dict(self) -> dict:
        return {"value": self.value, "std_error": self.std_error, "n_samples": self.n_samples}


# -- sampling ---------------------------------------------------------------

def sample_paths(m: int, count: int, seed) -> np.ndarray:
    """``count`` Brownian paths at resolution m as a (count, m+1) array."""
    check_resolution(m)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    inc = rng.standard_normal((count, m)) / math.sqrt(m)
    out = np.zeros((count, m + 1))
    np.cumsum(inc, axis=1, out=out[:, 1:])
    return out


def sample_path(m: int, seed) -> Path:
    return Path(sample_paths(m, 1, seed)[0])


def reverse_paths(xi: np.ndarray) -> np.ndarray:
    """zeta(t) = xi(1 - t) - xi(1), node-wise."""
    xi = np.asarray(xi, dtype=float)
    z = xi[..., ::-1] - xi[..., -1:]
    z[..., 0] = 0.0
    return z


# -- transport ----------------------------------------------------------------

def a_inv_arrays(xi: np.ndarray):
    """Vectorized A^{-1}: returns (values, derivs, log_derivs), all shaped like xi."""
    xi = np.asarray(xi, dtype=float)
    m = xi.shape[-1] - 1
    h = 1.0 / m
    shift = np.max(xi, axis=-1, keepdims=True)
    e = np.exp(xi - shift)
    cells = 0.5 * h * (e[..., 1:] + e[..., :-1])
    cum = np.zeros_like(xi)
    np.cumsum(cells, axis=-1, out=cum[..., 1:])
    z = cum[..., -1:]
    values = cum / z
    values[..., -1] = 1.0
    log_z = np.log(z) + shift
    log_d = xi - log_z
    return values, np.exp(log_d), log_d


def a_inv(xi: Path) -> GridDiffeo:
    values, _, log_d = a_inv_arrays(xi.values)
    return GridDiffeo(xi.nodes, values, log_derivs=log_d)


def a_map(q: GridDiffeo) -> Path:
    check_resolution(q.m)
    if not q.is_uniform:
        raise ValueError("A maps onto uniform-grid paths; q must live on k/m nodes")
    ld = q.log_derivs
    out = ld - ld[0]
    out[0] = 0.0
    return Path(out)


def endpoint_derivs(xi: np.ndarray):
    """(q'(0), q'(1)) for q = A^{-1}(xi), vectorized over leading axes."""
    _, _, log_d = a_inv_arrays(xi)
    return np.exp(log_d[..., 0]), np.exp(log_d[..., -1])


# -- Hölder norms -------------------------------------------------------------

def holder_seminorm(values: np.ndarray, delta: float, nodes: np.ndarray | None = None,
                    all_pairs: bool | None = None) -> np.ndarray:
    """max over node pairs of |x(t2) - x(t1)| / |t2 - t1|^delta.

    Works on the last axis.  All index lags are used up to 1024 nodes;
    beyond that only dyadic lags (1, 2, 4, ...) are scanned.
    """
    if not 0.0 < delta < 1.0:
        raise ValueError("Hölder exponent must lie in (0, 1)")
    x = np.asarray(values, dtype=float)
    npts = x.shape[-1]
    t = np.linspace(0.0, 1.0, npts) if nodes is None else np.asarray(nodes, dtype=float)
    if all_pairs is None:
        all_pairs = npts - 1 <= _ALL_PAIRS_MAX
    lags = range(1, npts) if all_pairs else [1 << j for j in range(int(math.log2(npts - 1)) + 1)]
    best = np.zeros(x.shape[:-1])
    for lag in lags:
        if lag >= npts:
            break
        num = np.abs(x[..., lag:] - x[..., :-lag])
        den = (t[lag:] - t[:-lag]) ** delta
        best = np.maximum(best, np.max(num / den, axis=-1))
    return best


@dataclass(frozen=True)
class HolderNorms:
    seminorm: float
    p_value: float


def holder_norms(xi: Path, delta: float, log_d0: float = 0.0) -> HolderNorms:
    """Seminorm of xi and p = |ln f'(0)| + seminorm, with ln f'(0) supplied by the caller."""
    semi = float(holder_seminorm(xi.values, delta))
    return HolderNorms(semi, abs(log_d0) + semi)


def p_delta(f: GridDiffeo, delta: float) -> float:
    """p(f) = |ln f'(0)| + Hölder seminorm of ln f' on f's nodes."""
    ld = f.log_derivs
    return float(abs(ld[0]) + holder_seminorm(ld, delta, nodes=f.nodes))


# -- endpoint moments ---------------------------------------------------------

@dataclass(frozen=True)
class EndpointMoments:
    l: int
    m0: EstimateResult
    m1: EstimateResult
    energy: EstimateResult
    pooled_se: float
    q0: np.ndarray
    q1: np.ndarray

    @property
    def z_score(self) -> float:
        if self.pooled_se == 0:
            return 0.0
        return abs(self.m0.value - self.m1.value) / self.pooled_se


def energy_integral(log_d: np.ndarray) -> np.ndarray:
    """Trapezoid value of int_0^1 q'(t)^2 dt on a uniform grid."""
    m = log_d.shape[-1] - 1
    sq = np.exp(2.0 * log_d)
    return (np.sum(sq, axis=-1) - 0.5 * (sq[..., 0] + sq[..., -1])) / m


def endpoint_moments(l: int, N: int, m: int, seed, chunk: int = 4096) -> EndpointMoments:
    if l not in (1, 2, 3):
        raise ValueError("moment order must be 1, 2 or 3")
    if N < 100:
        raise ValueError("need at least 100 samples")
    rng = np.random.default_rng(seed)
    q0, q1, en = [], [], []
    done = 0
    while done < N:
        k = min(chunk, N - done)
        xi = sample_paths(m, k, rng)
        _, _, ld = a_inv_arrays(xi)
        q0.append(np.exp(ld[:, 0]))
        q1.append(np.exp(ld[:, -1]))
        en.append(energy_integral(ld))
        done += k
    q0 = np.concatenate(q0)
    q1 = np.concatenate(q1)
    en = np.concatenate(en)
    m0 = EstimateResult.from_samples(q0 ** l)
    m1 = EstimateResult.from_samples(q1 ** l)
    pooled = math.hypot(m0.std_error, m1.std_error)
    return EndpointMoments(l, m0, m1, EstimateResult.from_samples(en), pooled, q0, q1)


@dataclass(frozen=True)
class C4Estimate:
    M1: float
    M2: float
    energy: float
    c4: float
    std_error: float


def estimate_c4(N: int, m: int, seed) -> C4Estimate:
    """c4 = 1 + M1 + M2 + E[int (q')^2], with M_l taken as E[q'(1)^l]."""
    mom1 = endpoint_moments(1, N, m, seed)
    M1 = mom1.m1.value
    M2 = float(np.mean(mom1.q1 ** 2))
    se2 = float(np.std(mom1.q1 ** 2, ddof=1) / math.sqrt(N))
    en = mom1.energy.value
    c4 = 1.0 + M1 + M2 + en
    se = math.sqrt(mom1.m1.std_error ** 2 + se2 ** 2 + mom1.energy.std_error ** 2)
    return C4Estimate(M1, M2, en, c4, se)
