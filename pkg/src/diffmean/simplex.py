"""The partition simplex D_n, the kernel-product density u_n and its sampler.

Points are stored through their log-gaps ln(x_k - x_{k-1}), k = 1..n, because
u_n concentrates on partitions whose gap ratios exceed the float range of
the gaps themselves.  The cyclic convention x_{-1} = x_{n-1} - 1 makes the
wrap-around gap equal to the last gap, so the k-th kernel argument is
cosh(|ln g_k - ln g_{k-1}| / 2) with g_0 := g_n.

Sampling runs in chain coordinates t_1..t_{2n-1} (t_0 = t_{2n} = 0) with
target prod_i 1/sqrt(1 + (t_i - t_{i-1})^2); the even coordinates give the
gaps through t_{2k} = ln(g_k / g_n) / 2.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np
from scipy import integrate
from scipy.special import logsumexp

from . import kernel
from .wiener import EstimateResult


@dataclass(frozen=True, eq=False)
class SimplexPoint:
    log_gaps: np.ndarray

    def __post_init__(self):
        lg = np.ascontiguousarray(self.log_gaps, dtype=float)
        object.__setattr__(self, "log_gaps", lg)
        if lg.ndim != 1 or lg.size < 1:
            raise ValueError("log_gaps must be a non-empty vector")
        if not np.all(np.isfinite(lg)):
            raise ValueError("log-gaps must be finite")
        if abs(float(logsumexp(lg))) > 1e-9:
            raise ValueError("gaps must sum to 1")

    @classmethod
    def from_x(cls, x: Sequence[float]) -> "SimplexPoint":
        x = np.asarray(x, dtype=float)
        full = np.concatenate([[0.0], x, [1.0]])
        gaps = np.diff(full)
        if np.any(gaps <= 0):
            raise ValueError("need 0 < x_1 < ... < x_{n-1} < 1")
        return cls(np.log(gaps))

    @classmethod
    def uniform(cls, n: int) -> "SimplexPoint":
        return cls(np.full(n, -math.log(n)))

    @property
    def n(self) -> int:
        return self.log_gaps.size

    @property
    def gaps(self) -> np.ndarray:
        return np.exp(self.log_gaps)

    @property
    def x(self) -> np.ndarray:
        return np.cumsum(self.gaps)[:-1]

    def x_at(self, k: int) -> float:
        """x_k for k in -1..n with the cyclic convention."""
        if k == -1:
            return self.x_at(self.n - 1) - 1.0
        if k == 0:
            return 0.0
        if k == self.n:
            return 1.0
        return float(self.x[k - 1])

    @property
    def wrap_gap(self) -> float:
        return self.x_at(0) - self.x_at(-1)

    def half_log_ratios(self) -> np.ndarray:
        return half_log_ratios(self.log_gaps)

    def v_arguments(self) -> np.ndarray:
        with np.errstate(over="ignore"):  # inf is the honest value past ~1e308
            return np.cosh(self.half_log_ratios())


def half_log_ratios(log_gaps: np.ndarray) -> np.ndarray:
    """|ln g_k - ln g_{k-1}| / 2 with g_0 := g_n, along the last axis."""
    lg = np.asarray(log_gaps, dtype=float)
    prev = np.roll(lg, 1, axis=-1)
    return 0.5 * np.abs(lg - prev)


def log_u1n_arrays(log_gaps: np.ndarray) -> np.ndarray:
    lg = np.asarray(log_gaps, dtype=float)
    if lg.shape[-1] == 1:
        return np.full(lg.shape[:-1], math.log(math.pi))
    return -np.sum(lg, axis=-1) + np.sum(kernel.log_v1(half_log_ratios(lg)), axis=-1)


def u1n(xbar: SimplexPoint, log: bool = False) -> float:
    val = float(log_u1n_arrays(xbar.log_gaps))
    return val if log else math.exp(val)


# -- normalisation ---------------------------------------------------------------

def jn(n: int, method: str = "spectral", log: bool = False) -> float:
    """J_n = int_{D_n} u_{1,n}."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if method == "spectral":
        # J_n = 2^{n-1} I_{2n-1} = (2^{3n-1}/pi) int K0^{2n}
        if log:
            return (n - 1) * math.log(2.0) + kernel.chain_integral(2 * n - 1, log=True)
        return 2.0 ** (n - 1) * kernel.chain_integral(2 * n - 1)
    if method == "bruteforce":
        if n > 3:
            raise ValueError("bruteforce quadrature is offered only for n <= 3")
        val = _jn_bruteforce(n)
        return math.log(val) if log else val
    raise ValueError(f"unknown method {method!r}")


def _log_gaps_from_logits(s: np.ndarray) -> np.ndarray:
    z = np.concatenate([s, [0.0]])
    return z - logsumexp(z)


def _jn_bruteforce(n: int) -> float:
    # additive-log-ratio coordinates s_k = ln(g_k/g_n) regularise both ends of
    # every gap, with dx_1..dx_{n-1} = g_1...g_n ds
    if n == 1:
        return u1n(SimplexPoint(np.zeros(1)))
    if n == 2:
        def integrand(s):
            lg = _log_gaps_from_logits(np.array([s]))
            return math.exp(float(log_u1n_arrays(lg)) + float(np.sum(lg)))

        opts = {"epsabs": 1e-12, "epsrel": 1e-10, "limit": 400}
        a, _ = integrate.quad(integrand, 0.0, np.inf, **opts)
        b, _ = integrate.quad(integrand, -np.inf, 0.0, **opts)
        return a + b
    return _jn3_nested()


def _jn3_nested() -> float:
    # integrand v1(|s1|/2) v1(|s2-s1|/2) v1(|s2|/2) is symmetric under
    # (s1, s2) -> (-s1, -s2); inner pieces are split where factors peak
    v1 = kernel.v1_scalar
    inner_opts = {"epsabs": 1e-13, "epsrel": 1e-10, "limit": 200}

    def inner(s2):
        c = v1(0.5 * abs(s2))
        pts = sorted({0.0, s2})
        f = lambda s1: v1(0.5 * abs(s1)) * v1(0.5 * abs(s2 - s1))
        tot = integrate.quad(f, -np.inf, pts[0], **inner_opts)[0]
        if len(pts) == 2:
            tot += integrate.quad(f, pts[0], pts[1], **inner_opts)[0]
        tot += integrate.quad(f, pts[-1], np.inf, **inner_opts)[0]
        return c * tot

    val, _ = integrate.quad(inner, 0.0, np.inf, epsabs=1e-11, epsrel=1e-9, limit=400)
    return 2.0 * val


def jn_bracket_ratio(n: int) -> float:
    return math.exp(jn(n, log=True) - ((3 * n - 1) * math.log(2.0) + math.lgamma(2 * n + 1)))


# -- chain coordinates ------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ChainPoint:
    t: np.ndarray

    def __post_init__(self):
        t = np.ascontiguousarray(self.t, dtype=float)
        object.__setattr__(self, "t", t)
        if t.ndim != 1 or t.size % 2 != 1:
            raise ValueError("chain coordinates come in odd count 2n-1")
        if not np.all(np.isfinite(t)):
            raise ValueError("chain coordinates must be finite")

    @property
    def n(self) -> int:
        return (self.t.size + 1) // 2

    def increments(self) -> np.ndarray:
        full = np.concatenate([[0.0], self.t, [0.0]])
        return np.diff(full)

    def log_density(self) -> float:
        return float(chain_log_density(self.increments()))

    def to_simplex(self) -> SimplexPoint:
        return SimplexPoint(increments_to_log_gaps(self.increments()))

    @classmethod
    def from_simplex(cls, p: SimplexPoint, odd: np.ndarray | None = None) -> "ChainPoint":
        """Even coordinates from p; odd coordinates default to midpoints."""
        n = p.n
        even = 0.5 * (p.log_gaps - p.log_gaps[-1])
        t = np.zeros(2 * n - 1)
        t[1::2] = even[:-1]
        if odd is None:
            padded = np.concatenate([[0.0], even])
            odd = 0.5 * (padded[:-1] + padded[1:])
        t[0::2] = odd
        return cls(t)


def chain_log_density(inc: np.ndarray) -> np.ndarray:
    return -np.sum(np.log(np.hypot(1.0, inc)), axis=-1)


def pair_sums(inc: np.ndarray) -> np.ndarray:
    inc = np.asarray(inc, dtype=float)
    return np.abs(inc[..., 0::2] + inc[..., 1::2])


def increments_to_log_gaps(inc: np.ndarray) -> np.ndarray:
    inc = np.asarray(inc, dtype=float)
    pos = np.cumsum(inc, axis=-1)
    even = pos[..., 1::2].copy()
    even[..., -1] = 0.0
    two = 2.0 * even
    out = two - logsumexp(two, axis=-1, keepdims=True)
    # at |t| ~ 1e10 the first pass leaves a residue of order ulp(|t|); the
    # second pass works on values near 0 and is exact to rounding
    return out - logsumexp(out, axis=-1, keepdims=True)


# -- sampler ------------------------------------------------------------------

@dataclass(frozen=True)
class McmcConfig:
    burn_in: int = 10_000
    thinning: int | None = None
    proposal_scale: float = 1.0
    chain_count: int = 64

    def __post_init__(self):
        if self.burn_in < 1000:
            raise ValueError("burn_in must be >= 1000")
        if self.thinning is not None and self.thinning < 1:
            raise ValueError("thinning must be >= 1")
        if not self.proposal_scale > 0:
            raise ValueError("proposal_scale must be positive")
        if self.chain_count < 2:
            raise ValueError("need at least two chains")

    def thinning_for(self, n: int) -> int:
        return self.thinning if self.thinning is not None else 2 * n - 1


@dataclass(frozen=True, eq=False)
class UnSamples:
    n: int
    log_gaps: np.ndarray
    chain_ids: np.ndarray
    site_acceptance: float
    scale_acceptance: float
    chain_count: int
    increments: np.ndarray = field(repr=False)

    @property
    def half_ratios(self) -> np.ndarray:
        """|t_{2k} - t_{2k-2}| from the stored increments, exact where positions are not."""
        return pair_sums(self.increments)

    def __len__(self) -> int:
        return self.log_gaps.shape[0]

    def __iter__(self) -> Iterator[SimplexPoint]:
        for row in self.log_gaps:
            yield SimplexPoint(row)

    def points(self) -> list[SimplexPoint]:
        return list(self)

    def estimate(self, values: np.ndarray) -> EstimateResult:
        return chain_mean_estimate(values, self.chain_ids, self.chain_count)

    def ess(self, values: np.ndarray | None = None) -> float:
        """Effective sample size var / SE^2 from between-chain means."""
        if values is None:
            values = np.log1p(self.half_ratios[:, 0])
        est = self.estimate(values)
        var = float(np.var(values, ddof=1))
        if est.std_error == 0:
            return float(len(self))
        return var / est.std_error ** 2

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n"] + [f"x{k}" for k in range(1, self.n)])
        for row in self.log_gaps:
            x = np.cumsum(np.exp(row))[:-1]
            w.writerow([self.n] + [repr(float(v)) for v in x])
        return buf.getvalue()


def chain_mean_estimate(values: np.ndarray, chain_ids: np.ndarray, chain_count: int) -> EstimateResult:
    values = np.asarray(values, dtype=float)
    means = np.array([values[chain_ids == c].mean() for c in range(chain_count)])
    se = float(np.std(means, ddof=1) / math.sqrt(chain_count))
    return EstimateResult(float(values.mean()), se, values.size)


def _envelope_log_ratio(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """log[target / envelope] for the increment pair (a, b); lies in [0, ln 2]."""
    return (np.log1p(np.abs(a)) + np.log1p(np.abs(b))
            - np.log(np.hypot(1.0, a)) - np.log(np.hypot(1.0, b)))


def _propose_pair(s: np.ndarray, rng: np.random.Generator):
    """Draw (a, b) with a + b = s from the envelope 1/((1+|a|)(1+|b|)).

    The envelope splits into two tails and a middle part, each inverted in
    closed form; increments are built relative to the nearer centre so that
    small values are not lost against a large sum.
    """
    D = np.abs(s)
    sg = np.where(s < 0, -1.0, 1.0)
    L = np.log1p(D)
    small = D < 1e-12
    Dsafe = np.where(small, 1.0, D)
    tail = np.where(small, 1.0, L / Dsafe)
    mid = 2.0 * L / (2.0 + D)
    total = 2.0 * tail + mid
    u_region = rng.random(s.shape) * total
    u = rng.random(s.shape)
    w = np.expm1(u * L)
    with np.errstate(divide="ignore", over="ignore"):
        rel = w / Dsafe
        tail_u = np.where(small, u / (1.0 - u), w * (1.0 + 1.0 / Dsafe) / (1.0 - rel))
    near = w  # middle component measured from its centre

    left = u_region < tail
    right = (u_region >= tail) & (u_region < 2.0 * tail)
    middle = ~(left | right)
    pick_a = rng.random(s.shape) < 0.5

    a = np.empty_like(s)
    b = np.empty_like(s)
    a[left] = -sg[left] * tail_u[left]
    b[left] = sg[left] * (D[left] + tail_u[left])
    b[right] = -sg[right] * tail_u[right]
    a[right] = sg[right] * (D[right] + tail_u[right])
    ma = middle & pick_a
    mb = middle & ~pick_a
    a[ma] = sg[ma] * near[ma]
    b[ma] = sg[ma] * (D[ma] - near[ma])
    b[mb] = sg[mb] * near[mb]
    a[mb] = sg[mb] * (D[mb] - near[mb])
    return a, b


def _pair_update(inc: np.ndarray, first: np.ndarray, rng: np.random.Generator) -> tuple[int, int]:
    a0 = inc[:, first]
    b0 = inc[:, first + 1]
    s = a0 + b0
    a1, b1 = _propose_pair(s, rng)
    log_acc = _envelope_log_ratio(a1, b1) - _envelope_log_ratio(a0, b0)
    ok = np.log(rng.random(s.shape)) < log_acc
    inc[:, first] = np.where(ok, a1, a0)
    inc[:, first + 1] = np.where(ok, b1, b0)
    return int(ok.sum()), ok.size


def _scale_update(inc: np.ndarray, sigma: float, rng: np.random.Generator) -> tuple[int, int]:
    dim = inc.shape[1] - 1
    log_lam = sigma * rng.standard_normal(inc.shape[0])
    new = inc * np.exp(log_lam)[:, None]
    log_acc = chain_log_density(new) - chain_log_density(inc) + dim * log_lam
    ok = np.log(rng.random(inc.shape[0])) < log_acc
    inc[ok] = new[ok]
    return int(ok.sum()), ok.size


def sample_un(n: int, count: int, cfg: McmcConfig = McmcConfig(), seed=0) -> UnSamples:
    """Draw ``count`` points from u_n with ``cfg.chain_count`` parallel chains.

    One sweep updates every odd site, then every even site (each site move
    is an independence proposal from the envelope of its two-factor
    conditional), then applies a global scale move to the increments.
    """
    if n < 2:
        raise ValueError("sampling needs n >= 2")
    if count < 1:
        raise ValueError("count must be positive")
    rng = np.random.default_rng(seed)
    C = cfg.chain_count
    thin = cfg.thinning_for(n)
    per_chain = -(-count // C)
    inc = np.zeros((C, 2 * n))
    odd_first = np.arange(0, 2 * n, 2)
    even_first = np.arange(1, 2 * n - 1, 2)
    site_acc = site_tot = sc_acc = sc_tot = 0
    out_inc = np.empty((per_chain, C, 2 * n))

    total_sweeps = cfg.burn_in + per_chain * thin
    kept = 0
    for sweep in range(total_sweeps):
        a, t = _pair_update(inc, odd_first, rng)
        site_acc += a
        site_tot += t
        if even_first.size:
            a, t = _pair_update(inc, even_first, rng)
            site_acc += a
            site_tot += t
        a, t = _scale_update(inc, cfg.proposal_scale, rng)
        sc_acc += a
        sc_tot += t
        if sweep >= cfg.burn_in and (sweep - cfg.burn_in + 1) % thin == 0:
            out_inc[kept] = inc
            kept += 1
    flat = out_inc.transpose(1, 0, 2).reshape(C * per_chain, 2 * n)
    ids = np.repeat(np.arange(C), per_chain)
    flat, ids = flat[:count], ids[:count]
    return UnSamples(n, increments_to_log_gaps(flat), ids, site_acc / site_tot, sc_acc / sc_tot,
                     C, flat)


def u2_logit_cdf(s: np.ndarray, step: float = 0.004, cut: float = 30.0) -> np.ndarray:
    """CDF of ln(x_1 / (1 - x_1)) under u_2.

    The density is proportional to v1(|z|/2)^2; after z = sinh(w) it decays
    like w^2 e^{-|w|}, so a fine cumulative trapezoid in w is tabulated once
    and interpolated.
    """
    w = np.arange(-cut, cut + step / 2, step)
    dens = np.exp(2.0 * kernel.log_v1(np.abs(np.sinh(w)) / 2.0)) * np.cosh(w)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * step * (dens[1:] + dens[:-1]))])
    cum /= cum[-1]
    return np.interp(np.arcsinh(np.asarray(s, dtype=float)), w, cum)


def u2_cdf(x: np.ndarray) -> np.ndarray:
    x = np.clip(np.atleast_1d(np.asarray(x, dtype=float)), 1e-300, 1.0 - 1e-16)
    return u2_logit_cdf(np.log(x) - np.log1p(-x))


# -- importance-sampling route for J_n ---------------------------------------------

_LOG_CUT = 500.0


def _log_skeleton_density(E: np.ndarray) -> np.ndarray:
    # |E| has ln(1+|E|) ~ 2/(1+L)^3 on [0, _LOG_CUT], symmetric sign
    L = np.log1p(np.abs(E))
    mass = 1.0 - 1.0 / (1.0 + _LOG_CUT) ** 2
    return -math.log(mass) - L - 3.0 * np.log1p(L)


def _log_envelope_mass(D: np.ndarray) -> np.ndarray:
    """log of int 1/((1+|a|)(1+|D-a|)) da over the real line."""
    l = np.log1p(D)
    small = D < 1e-12
    tail = np.where(small, 1.0, l / np.where(small, 1.0, D))
    return np.log(2.0 * tail + 2.0 * l / (2.0 + D))


def jn_monte_carlo(n: int, N: int, seed, chunk: int = 250_000) -> EstimateResult:
    """Importance-sampling estimate of J_n in chain coordinates.

    Even-coordinate increments E_1..E_n (summing to zero) come from an equal
    mixture over the closing index j: the other n-1 are iid with tails
    heavier than the target's, and E_j closes the sum (unit Jacobian).  Each
    odd coordinate is drawn from the envelope of its two factors, whose
    mass is known in closed form and whose ratio to the target lies in
    [1, 2].  The weights therefore have finite variance.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    sums = []
    done = 0
    while done < N:
        C = min(chunk, N - done)
        j = rng.integers(0, n, C)
        cmax = 1.0 - 1.0 / (1.0 + _LOG_CUT) ** 2
        L = 1.0 / np.sqrt(1.0 - rng.random((C, n)) * cmax) - 1.0
        E = np.expm1(L) * np.where(rng.random((C, n)) < 0.5, -1.0, 1.0)
        closing = np.arange(n)[None, :] == j[:, None]
        E[closing] = 0.0
        E[closing] = -E.sum(axis=1)
        lh = _log_skeleton_density(E)
        lq = logsumexp(lh.sum(axis=1, keepdims=True) - lh, axis=1) - math.log(n)
        a, b = _propose_pair(E, rng)
        lw = np.sum(_envelope_log_ratio(a, b) + _log_envelope_mass(np.abs(E)), axis=1) - lq
        sums.append(np.exp(lw + (n - 1) * math.log(2.0)))
        done += C
    return EstimateResult.from_samples(np.concatenate(sums))


# -- tail statistics ----------------------------------------------------------

@dataclass(frozen=True)
class TailStatistics:
    spacing_mass: EstimateResult
    ratio_mass: EstimateResult


def spacing_indicator(log_gaps: np.ndarray, epsilon: float) -> np.ndarray:
    return (np.max(log_gaps, axis=-1) > math.log(epsilon)).astype(float)


def ratio_indicator(half_ratios: np.ndarray, r: float) -> np.ndarray:
    """min_k v-argument <= r, given the half-log-ratios cosh^{-1} of the arguments."""
    return (np.min(half_ratios, axis=-1) <= math.acosh(r)).astype(float)


def tail_statistics(samples: UnSamples, epsilon: float, r: float) -> TailStatistics:
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must lie in (0, 1)")
    if not r > 1.0:
        raise ValueError("r must exceed 1")
    sp = samples.estimate(spacing_indicator(samples.log_gaps, epsilon))
    ra = samples.estimate(ratio_indicator(samples.half_ratios, r))
    return TailStatistics(sp, ra)


# -- kernel product inequality scan ---------------------------------------------

_Y_FLOOR = 1e-12


def c3_ratio(a, y1, y2) -> np.ndarray:
    """v(..y1,a..) v(..a,y2..) / v(..y1,y2..) in half-log coordinates."""
    la, l1, l2 = np.log(a), np.log(y1), np.log(y2)
    num = kernel.log_v1(0.5 * np.abs(l1 - la)) + kernel.log_v1(0.5 * np.abs(la - l2))
    return np.exp(num - kernel.log_v1(0.5 * np.abs(l1 - l2)))


def c3_scan(epsilon: float, grid_size: int = 50) -> float:
    """Largest ratio over a grid with a in [eps, 1], y1 + y2 <= 1 (log-spaced y)."""
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must lie in (0, 1)")
    a = np.geomspace(epsilon, 1.0, grid_size)
    y = np.geomspace(_Y_FLOOR, 1.0, grid_size)
    best = 0.0
    Y1, Y2 = np.meshgrid(y, y, indexing="ij")
    ok = Y1 + Y2 <= 1.0
    y1, y2 = Y1[ok], Y2[ok]
    for ai in a:
        best = max(best, float(np.max(c3_ratio(ai, y1, y2))))
    return best


@dataclass(frozen=True)
class ProbeResult:
    max_ratio: float
    violations: int
    probes: int


def c3_probe(epsilon: float, c3: float, probes: int, seed) -> ProbeResult:
    """Random triples, half uniform and half log-uniform in y, checked against c3."""
    rng = np.random.default_rng(seed)
    a = rng.uniform(epsilon, 1.0, probes)
    half = probes // 2
    y1 = np.concatenate([rng.uniform(0, 1, half), np.exp(rng.uniform(math.log(_Y_FLOOR), 0, probes - half))])
    y2 = np.concatenate([rng.uniform(0, 1, half), np.exp(rng.uniform(math.log(_Y_FLOOR), 0, probes - half))])
    y1 = np.maximum(y1, _Y_FLOOR)
    s = y1 + y2
    scale = np.where(s > 1.0, 1.0 / s, 1.0)
    y1, y2 = y1 * scale, np.maximum(y2 * scale, _Y_FLOOR)
    rat = c3_ratio(a, y1, y2)
    return ProbeResult(float(np.max(rat)), int(np.sum(rat > c3)), probes)
