"""The gluing map Q_n, the finite-n averaging functional and its drift,
the tail event statistic and the group-averaging map pi_delta."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import logsumexp

from .diffeo import SmoothDiffeo, compose, compose_inverse, invert, power, schwarzian, smoothness_constant
from .grid import GridDiffeo
from .simplex import McmcConfig, SimplexPoint, sample_un
from .wiener import DEFAULT_DELTA, EstimateResult, a_inv_arrays, p_delta, sample_paths


# -- test functionals ---------------------------------------------------------

@dataclass(frozen=True)
class TestFunctional:
    name: str
    fn: Callable[[GridDiffeo, float], float]
    bound: float
    nonnegative: bool
    description: str = ""

    __test__ = False  # keep pytest from collecting this class

    def __call__(self, f: GridDiffeo, delta: float = DEFAULT_DELTA) -> float:
        return float(self.fn(f, delta))


def _f_const(f, delta):
    return 1.0


def _f_mid(f, delta):
    return 1.0 / (1.0 + (float(f(0.5)) - 0.5) ** 2)


def _f_sup(f, delta):
    ld = f.log_derivs
    return math.exp(-float(np.max(np.abs(ld - ld[0]))))


def _f_deriv0(f, delta):
    return 1.0 / (1.0 + abs(float(f.log_derivs[0])))


def _f_p(f, delta):
    return 1.0 / (1.0 + p_delta(f, delta))


CATALOG: dict[str, TestFunctional] = {
    "F_CONST": TestFunctional("F_CONST", _f_const, 1.0, True, "constant 1"),
    "F_MID": TestFunctional("F_MID", _f_mid, 1.0, True, "1/(1+(f(1/2)-1/2)^2)"),
    "F_SUP": TestFunctional("F_SUP", _f_sup, 1.0, True, "exp(-sup|ln f' - ln f'(0)|)"),
    "F_DERIV0": TestFunctional("F_DERIV0", _f_deriv0, 1.0, True, "1/(1+|ln f'(0)|)"),
    "F_P": TestFunctional("F_P", _f_p, 1.0, True, "1/(1+p_delta(f))"),
}


def get_functional(name: str) -> TestFunctional:
    try:
        return CATALOG[name]
    except KeyError:
        raise ValueError(f"unknown functional {name!r}; choose from {sorted(CATALOG)}") from None


# -- Q_n ------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class QnResult:
    q: GridDiffeo
    junction_left: np.ndarray
    junction_right: np.ndarray
    block_widths: np.ndarray

    @property
    def junction_mismatch(self) -> float:
        """max_k |left/right derivative ratio - 1| at the images of k/n."""
        if self.junction_left.size == 0:
            return 0.0
        return float(np.max(np.abs(np.expm1(self.junction_left - self.junction_right))))


def _phi_data(phi):
    if isinstance(phi, GridDiffeo):
        return phi.nodes, phi.values, phi.log_derivs
    return phi


def build_qn_detailed(xbar: SimplexPoint, phis: Sequence) -> QnResult:
    """Q_n(xbar, phi_1..phi_n) = f_n o l_n^{-1} built in the log domain.

    Block k occupies [W_{k-1}, W_k] in the argument of Q with width
    w_k = gap_k P_k / sum_j gap_j P_j, where
    P_k = prod_{j=2..k} phi_j'(0) / phi_{j-1}'(1).  On that block
    Q(W_{k-1} + w_k u) = x_{k-1} + gap_k phi_k(u) and
    ln Q' = ln gap_k - ln w_k + ln phi_k'(u).

    ``phis`` holds GridDiffeos or (nodes, values, log_derivs) triples.
    """
    n = xbar.n
    if len(phis) != n:
        raise ValueError(f"need {n} blocks, got {len(phis)}")
    data = [_phi_data(p) for p in phis]
    lg = xbar.log_gaps
    d0 = np.array([d[2][0] for d in data])
    d1 = np.array([d[2][-1] for d in data])
    log_p = np.concatenate([[0.0], np.cumsum(d0[1:] - d1[:-1])])
    lw = lg + log_p
    lw = lw - logsumexp(lw)
    W = np.concatenate([[0.0], np.cumsum(np.exp(lw))])
    W[-1] = 1.0
    X = np.concatenate([[0.0], np.cumsum(np.exp(lg))])
    X[-1] = 1.0
    gaps = np.exp(lg)

    s_parts, v_parts, d_parts = [np.zeros(1)], [np.zeros(1)], [np.array([lg[0] - lw[0] + d0[0]])]
    for k in range(n):
        u, phv, phd = data[k]
        s = W[k] + np.exp(lw[k]) * u[1:]
        s[-1] = W[k + 1]
        v = X[k] + gaps[k] * phv[1:]
        v[-1] = X[k + 1]
        s_parts.append(s)
        v_parts.append(v)
        d_parts.append(lg[k] - lw[k] + phd[1:])
    s = np.concatenate(s_parts)
    v = np.concatenate(v_parts)
    ld = np.concatenate(d_parts)
    # blocks narrower than the float spacing at their position collapse onto
    # a single node; keep the first node of each run of equal positions.
    # W_{k-1} + w_k u can round past W_k, so clamp to a monotone sequence first
    s = np.maximum.accumulate(np.clip(s, 0.0, 1.0))
    keep = np.concatenate([[True], np.diff(s) > 0])
    s, v, ld = s[keep], v[keep], ld[keep]
    s[-1] = 1.0
    v = np.maximum.accumulate(np.clip(v, 0.0, 1.0))
    v[-1] = 1.0
    left = lg[:-1] - lw[:-1] + d1[:-1]
    right = lg[1:] - lw[1:] + d0[1:]
    return QnResult(GridDiffeo(s, v, log_derivs=ld), left, right, np.exp(lw))


def build_qn(xbar: SimplexPoint, phis: Sequence) -> GridDiffeo:
    return build_qn_detailed(xbar, phis).q


def sample_phis(n: int, m: int, rng: np.random.Generator):
    """n independent draws from nu as (nodes, values, log_derivs) triples."""
    xi = sample_paths(m, n, rng)
    vals, _, ld = a_inv_arrays(xi)
    nodes = np.linspace(0.0, 1.0, m + 1)
    return [(nodes, vals[i], ld[i]) for i in range(n)]


# -- finite-n functional ---------------------------------------------------------

def _draw_partitions(n: int, Nx: int, rng_seed, mcmc: McmcConfig | None) -> list[SimplexPoint]:
    if n == 1:
        return [SimplexPoint(np.zeros(1))] * Nx
    return sample_un(n, Nx, mcmc or McmcConfig(), rng_seed).points()


def _batch_estimate(batches: np.ndarray, Nphi: int) -> EstimateResult:
    Nx = batches.shape[0]
    if Nx >= 2:
        means = batches.mean(axis=1)
        se = float(np.std(means, ddof=1) / math.sqrt(Nx))
        return EstimateResult(float(np.mean(means)), se, Nx * Nphi)
    return EstimateResult.from_samples(batches.ravel())


def _check_counts(n: int, Nx: int, Nphi: int, delta: float):
    if n < 1 or Nx < 1 or Nphi < 1:
        raise ValueError("n, Nx and Nphi must be positive")
    if Nx * Nphi < 2:
        raise ValueError("need at least two draws in total")
    if not 0.0 < delta < 0.5:
        raise ValueError("delta must lie in (0, 1/2)")


def estimate_L(F: TestFunctional, n: int, delta: float, Nx: int, Nphi: int, m: int, seed,
               mcmc: McmcConfig | None = None) -> EstimateResult:
    """Monte Carlo L_{delta,n}(F): xbar ~ u_n, phi_k ~ nu, average F(Q_n)."""
    _check_counts(n, Nx, Nphi, delta)
    x_ss, phi_ss = np.random.SeedSequence(seed).spawn(2)
    xbars = _draw_partitions(n, Nx, x_ss, mcmc)
    rng = np.random.default_rng(phi_ss)
    vals = np.empty((Nx, Nphi))
    for i, xb in enumerate(xbars):
        for j in range(Nphi):
            vals[i, j] = F(build_qn(xb, sample_phis(n, m, rng)), delta)
    return _batch_estimate(vals, Nphi)


@dataclass(frozen=True)
class DriftResult:
    delta_n: float
    se: float
    L_F: EstimateResult
    L_Fg: EstimateResult

    def to_dict(self) -> dict:
        return {"delta_n": self.delta_n, "se": self.se, "L_F": self.L_F.to_dict(), "L_Fg": self.L_Fg.to_dict()}


def estimate_drift(F: TestFunctional, g: SmoothDiffeo, n: int, delta: float, Nx: int, Nphi: int,
                   m: int, seed, mcmc: McmcConfig | None = None) -> DriftResult:
    """|L(F_g) - L(F)| with F_g(f) = F(g^{-1} o f), on common random numbers."""
    if not g.in_diff3_0:
        raise ValueError("the drift needs g'(0) = g'(1) = 1")
    _check_counts(n, Nx, Nphi, delta)
    x_ss, phi_ss = np.random.SeedSequence(seed).spawn(2)
    xbars = _draw_partitions(n, Nx, x_ss, mcmc)
    rng = np.random.default_rng(phi_ss)
    base = np.empty((Nx, Nphi))
    moved = np.empty((Nx, Nphi))
    for i, xb in enumerate(xbars):
        for j in range(Nphi):
            q = build_qn(xb, sample_phis(n, m, rng))
            base[i, j] = F(q, delta)
            moved[i, j] = F(compose_inverse(g, q), delta)
    diff = _batch_estimate(moved - base, Nphi)
    return DriftResult(abs(diff.value), diff.std_error, _batch_estimate(base, Nphi),
                       _batch_estimate(moved, Nphi))


# -- tail event statistic ---------------------------------------------------------

@dataclass(frozen=True, eq=False)
class EventStatistic:
    f1: np.ndarray
    f2: np.ndarray

    def threshold(self, r: float, c4: float, C_g: float) -> float:
        return 4.0 * c4 * C_g * r

    def in_X(self, r: float, c4: float, C_g: float) -> np.ndarray:
        return np.abs(self.f1 + self.f2) <= self.threshold(r, c4, C_g)


def event_statistic(g: SmoothDiffeo, xbar: SimplexPoint, values: np.ndarray,
                    log_derivs: np.ndarray) -> EventStatistic:
    """f1 and f2 for tuples q_1..q_n given as (N, n, m+1) arrays on uniform grids.

    f1 = sum_k gap_k (rho(x_{k-1}) q_k'(0) - rho(x_k) q_k'(1)), rho = g''/g'
    f2 = sum_k gap_k^2 int S_g(x_{k-1} + gap_k q_k(t)) q_k'(t)^2 dt
    """
    values = np.asarray(values, dtype=float)
    log_derivs = np.asarray(log_derivs, dtype=float)
    n = xbar.n
    if values.shape[-2] != n:
        raise ValueError("tuple length must equal the partition size")
    gaps = xbar.gaps
    X = np.concatenate([[0.0], np.cumsum(gaps)])
    X[-1] = 1.0
    rho = g.d2(X) / g.d1(X)
    q0 = np.exp(log_derivs[..., 0])
    q1 = np.exp(log_derivs[..., -1])
    f1 = np.sum(gaps * (rho[:-1] * q0 - rho[1:] * q1), axis=-1)
    m = values.shape[-1] - 1
    arg = X[:-1, None] + gaps[:, None] * values
    integrand = schwarzian(g, arg) * np.exp(2.0 * log_derivs)
    integral = (np.sum(integrand, axis=-1) - 0.5 * (integrand[..., 0] + integrand[..., -1])) / m
    f2 = np.sum(gaps ** 2 * integral, axis=-1)
    return EventStatistic(f1, f2)


@dataclass(frozen=True)
class TailEventResult:
    complement_mass: EstimateResult
    bound: float
    r: float
    c4: float
    C_g: float
    mean_f1: EstimateResult
    predicted_f1: float


def tail_event_statistics(g: SmoothDiffeo, xbar: SimplexPoint, epsilon: float, N: int, m: int, seed,
                      c4: float, M1: float) -> TailEventResult:
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    n = xbar.n
    xi = sample_paths(m, N * n, rng).reshape(N, n, m + 1)
    vals, _, ld = a_inv_arrays(xi)
    ev = event_statistic(g, xbar, vals, ld)
    C_g = smoothness_constant(g).C_g
    r = epsilon ** (1.0 / 3.0)
    outside = (~ev.in_X(r, c4, C_g)).astype(float)
    gaps = xbar.gaps
    X = np.concatenate([[0.0], np.cumsum(gaps)])
    X[-1] = 1.0
    rho = g.d2(X) / g.d1(X)
    predicted = M1 * float(np.sum(gaps * (rho[:-1] - rho[1:])))
    return TailEventResult(EstimateResult.from_samples(outside), 2.0 * r, r, c4, C_g,
                        EstimateResult.from_samples(ev.f1), predicted)


# -- pi_delta ------------------------------------------------------------------

def theta(t: np.ndarray) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise AssertionError("theta is only ever evaluated at p - r >= 0")
    return np.where(t <= 1.0, 1.0 - t, 0.0)


@dataclass(frozen=True, eq=False)
class PiDeltaResult:
    value: float
    r: float
    p_values: np.ndarray
    weights: np.ndarray
    boundary_flag: bool


def act_inverse(h: SmoothDiffeo | GridDiffeo, f: GridDiffeo) -> GridDiffeo:
    """h^{-1} o f."""
    if isinstance(h, SmoothDiffeo):
        return compose_inverse(h, f)
    return compose(invert(h), f)


def pi_delta(fvals: Sequence[float], group: Sequence[SmoothDiffeo | GridDiffeo], f: GridDiffeo,
             delta: float = DEFAULT_DELTA, boundary: Sequence[bool] | None = None) -> PiDeltaResult:
    """Weighted average of fvals with weights theta(p(h^{-1} o f) - r(f)).

    ``group`` is a finite truncation of the group; ``boundary`` marks the
    elements on the edge of the truncation.  If any of them gets a positive
    weight the truncation may have cut off part of the support, and the
    result is flagged.
    """
    if len(group) == 0:
        raise ValueError("the group truncation is empty")
    if len(fvals) != len(group):
        raise ValueError("one value per group element is required")
    p = np.array([p_delta(act_inverse(h, f), delta) for h in group])
    r = float(np.min(p))
    w = theta(p - r)
    val = float(np.dot(w, np.asarray(fvals, dtype=float)) / np.sum(w))
    flag = bool(boundary is not None and np.any(np.asarray(boundary) & (w > 0)))
    return PiDeltaResult(val, r, p, w, flag)


@dataclass(frozen=True)
class CyclicBall:
    exponents: np.ndarray
    elements: list
    boundary: np.ndarray


def cyclic_ball(g: SmoothDiffeo, radius: int) -> CyclicBall:
    """{g^k : |k| <= radius}, with |k| = radius marked as boundary."""
    ks = np.arange(-radius, radius + 1)
    return CyclicBall(ks, [power(g, int(k)) for k in ks], np.abs(ks) == radius)
