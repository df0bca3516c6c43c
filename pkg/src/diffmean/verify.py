"""Verification harness: one reproducible numerical check per statement.

Every check fills ``statistics`` and ``bounds``.  A bound named ``X.max``
requires statistics[X] <= bound, ``X.min`` requires statistics[X] >= bound,
and ``pass`` is the conjunction, so it can be recomputed from the report
alone (see :func:`evaluate`).
"""
from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Callable

import numpy as np

from . import diffeo, functional, kernel, simplex, wiener

CHECK_IDS = ("L1", "L2", "L3", "L4", "L5", "L6", "L7", "L8", "L9", "T3", "RN", "GLUE")

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


# -- report ---------------------------------------------------------------------

def _clean(x):
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


def evaluate(statistics: dict, bounds: dict) -> bool:
    ok = True
    for key, b in bounds.items():
        name, _, kind = key.rpartition(".")
        val = statistics.get(name)
        if val is None or b is None:
            return False
        if kind == "max":
            ok &= val <= b
        elif kind == "min":
            ok &= val >= b
        else:
            raise ValueError(f"bound {key!r} must end in .max or .min")
    return bool(ok)


@dataclass
class CheckReport:
    check_id: str
    params: dict
    seed: int
    statistics: dict
    bounds: dict
    constants: dict = field(default_factory=dict)
    passed: bool = False
    wall_time_ms: float = 0.0

    def __post_init__(self):
        self.params = _clean(self.params)
        self.statistics = _clean(self.statistics)
        self.bounds = _clean(self.bounds)
        self.constants = _clean(self.constants)

    def to_dict(self, wall_time: bool = True) -> dict:
        d = {"schema_version": SCHEMA_VERSION, "check_id": self.check_id, "params": self.params,
             "seed": self.seed, "statistics": self.statistics, "bounds": self.bounds,
             "constants": self.constants, "pass": self.passed}
        if wall_time:
            d["wall_time_ms"] = self.wall_time_ms
        return d

    def to_json(self, wall_time: bool = True) -> str:
        return json.dumps(self.to_dict(wall_time), sort_keys=True, indent=2) + "\n"

    def canonical(self) -> str:
        """Serialization without the wall-time field, for determinism checks."""
        return self.to_json(wall_time=False)

    @classmethod
    def from_dict(cls, d: dict) -> "CheckReport":
        return cls(d["check_id"], d["params"], d["seed"], d["statistics"], d["bounds"],
                   d.get("constants", {}), d["pass"], d.get("wall_time_ms", 0.0))

    @classmethod
    def from_json(cls, text: str) -> "CheckReport":
        return cls.from_dict(json.loads(text))


# -- configuration -----------------------------------------------------------------

DEFAULTS: dict[str, dict[str, Any]] = {
    "L1": {"n_min": 1, "n_max": 10, "bracket_from": 4, "max_ratio": 3.0},
    "L2": {"t_min": 0.1, "t_max": 10.0, "t_step": 0.1, "slack": 1e-3},
    "L3": {"n": 2, "rel_tol": 1e-4, "mc_n": 3, "mc_samples": 4_000_000, "mc_rel_tol": 0.01,
           "bracket_n_max": 8},
    "L4": {"epsilon": 0.1, "grid": 50, "refined_grid": 100, "probes": 100_000, "factor": 1.05},
    "L5": {"epsilon": 0.25, "ns": [4, 8, 16, 32], "count": 13_000, "chains": 100, "min_ess": 10_000},
    "L6": {"r": 2.0, "ns": [4, 8, 16, 32], "count": 13_000, "chains": 100, "min_ess": 10_000},
    "L7": {"N": 20_000, "m": 512, "orders": [1, 2]},
    "L8": {"a": 0.5, "n": 32, "epsilon": 0.05, "N": 1000, "m": 512, "c4_samples": 20_000},
    "L9": {"a": 0.5, "rhos": [1e-2, 1e-3, 1e-4, 1e-6, 1e-8, 1e-10, 1e-12]},
    "T3": {"a": 0.2, "functional": "F_MID", "ns": [2, 4, 8], "delta": wiener.DEFAULT_DELTA,
           "Nx": 200, "Nphi": 20, "m": 256},
    "RN": {"as": [0.02, 0.05, 0.1], "N": 20_000, "m": 512, "max_cv": 0.1},
    "GLUE": {"draws": 1000, "n_max": 16, "m": 64, "rel_tol": 1e-9, "identity_tol": 1e-12},
}

# smallest budgets for which the statistics mean anything
MINIMUMS: dict[str, dict[str, int]] = {
    "L3": {"mc_samples": 10_000},
    "L4": {"grid": 5, "probes": 100},
    "L5": {"count": 1000, "chains": 2},
    "L6": {"count": 1000, "chains": 2},
    "L7": {"N": 100, "m": 2},
    "L8": {"N": 100, "m": 2, "c4_samples": 100},
    "T3": {"Nx": 2, "Nphi": 1, "m": 2},
    "RN": {"N": 1000, "m": 2},
    "GLUE": {"draws": 1, "m": 2},
}


def resolve_params(check_id: str, overrides: dict | None = None) -> dict:
    if check_id not in DEFAULTS:
        raise ConfigError(f"unknown check id {check_id!r}; valid ids: {', '.join(CHECK_IDS)}")
    params = dict(DEFAULTS[check_id])
    for k, v in (overrides or {}).items():
        if k not in params:
            raise ConfigError(f"{check_id} has no parameter {k!r}; known: {sorted(params)}")
        params[k] = v
    for k, lo in MINIMUMS.get(check_id, {}).items():
        if params[k] < lo:
            raise ConfigError(f"{check_id}: {k} = {params[k]} is below the minimum {lo}")
    return params


# -- checks ---------------------------------------------------------------------

def _check_l1(p, seed):
    ns = range(p["n_min"], p["n_max"] + 1)
    ratios = {n: kernel.chain_bracket_ratio(n) for n in ns}
    tail = [ratios[n] for n in ns if n >= p["bracket_from"]]
    c1, c2 = min(tail), max(tail)
    # K0 brackets: small-argument two-sided bound and exponential decay constant
    eps0 = 0.5
    ys = np.geomspace(1e-8, 0.25, 200)
    k = kernel.bessel_k0(ys)
    small_ok = all(lo < kv < hi for y, kv in zip(ys, k)
                   for lo, hi in [kernel.k0_small_argument_bracket(float(y), eps0)])
    stats = {"bracket_ratio": c2 / c1, "small_argument_violations": 0 if small_ok else 1,
             **{f"ratio_n{n}": r for n, r in ratios.items()}}
    bounds = {"bracket_ratio.max": p["max_ratio"], "small_argument_violations.max": 0}
    consts = {"c1": c1, "c2": c2, "k0_exp_constant": kernel.k0_exponential_constant(eps0)}
    return stats, bounds, consts


def _check_l2(p, seed):
    t = np.arange(p["t_min"], p["t_max"] + 0.5 * p["t_step"], p["t_step"])
    h = 1e-5 * np.maximum(1.0, t)
    d = (kernel.v1(t + h) - kernel.v1(t - h)) / (2 * h)
    v = kernel.v1(t)
    ratio = np.abs(d) / (4.0 / t * v)
    stats = {"max_derivative": float(np.max(d)), "nonnegative_count": int(np.sum(d >= 0)),
             "max_bound_ratio": float(np.max(ratio)), "grid_points": int(t.size)}
    bounds = {"nonnegative_count.max": 0, "max_bound_ratio.max": 1.0 + p["slack"]}
    return stats, bounds, {}


def _check_l3(p, seed):
    n = p["n"]
    spec = simplex.jn(n)
    brute = simplex.jn(n, method="bruteforce")
    stats = {"jn_spectral": spec, "jn_bruteforce": brute, "bruteforce_rel_diff": abs(spec - brute) / spec}
    bounds = {"bruteforce_rel_diff.max": p["rel_tol"]}
    ratios = [simplex.jn_bracket_ratio(k) for k in range(2, p["bracket_n_max"] + 1)]
    consts = {"jn_c1": min(ratios), "jn_c2": max(ratios)}
    stats["jn_bracket_ratio"] = max(ratios) / min(ratios)
    bounds["jn_bracket_ratio.max"] = 3.0
    if p["mc_n"]:
        target = simplex.jn(p["mc_n"])
        mc = simplex.jn_monte_carlo(p["mc_n"], p["mc_samples"], seed)
        stats.update({"mc_value": mc.value, "mc_std_error": mc.std_error, "mc_target": target,
                      "mc_rel_diff": abs(mc.value - target) / target,
                      "mc_z": abs(mc.value - target) / mc.std_error})
        bounds.update({"mc_rel_diff.max": p["mc_rel_tol"], "mc_z.max": 3.0})
    return stats, bounds, consts


def _check_l4(p, seed):
    eps = p["epsilon"]
    base = simplex.c3_scan(eps, p["grid"])
    fine = simplex.c3_scan(eps, p["refined_grid"])
    c3 = p["factor"] * max(base, fine)
    probe = simplex.c3_probe(eps, c3, p["probes"], seed)
    stats = {"scan_max": base, "refined_scan_max": fine, "refinement_growth": fine / base - 1.0,
             "probe_max": probe.max_ratio, "probe_violations": probe.violations}
    bounds = {"refinement_growth.max": 0.1, "probe_violations.max": 0}
    return stats, bounds, {"c3": c3}


def _significant_increases(vals, ses, z: float = 3.0) -> int:
    """Consecutive steps that rise by more than z pooled standard errors."""
    return sum(1 for i in range(len(vals) - 1)
               if vals[i + 1] - vals[i] > z * math.hypot(ses[i], ses[i + 1]))


@lru_cache(maxsize=16)
def _un_samples(n: int, count: int, chains: int, seed: int) -> simplex.UnSamples:
    return simplex.sample_un(n, count, simplex.McmcConfig(chain_count=chains), seed)


def _tail_check(p, seed, which: str):
    ns = list(p["ns"])
    vals, ses, ess = [], [], []
    stats = {}
    for i, n in enumerate(ns):
        smp = _un_samples(n, p["count"], p["chains"], _sub_seed(seed, n))
        if which == "spacing":
            ind = simplex.spacing_indicator(smp.log_gaps, p["epsilon"])
        else:
            ind = simplex.ratio_indicator(smp.half_ratios, p["r"])
        est = smp.estimate(ind)
        e = smp.ess(ind)
        vals.append((2 * n - 1) * est.value)
        ses.append((2 * n - 1) * est.std_error)
        ess.append(e)
        stats[f"mass_n{n}"] = est.value
        stats[f"scaled_n{n}"] = vals[-1]
        stats[f"scaled_se_n{n}"] = ses[-1]
        stats[f"ess_n{n}"] = e
        stats[f"site_acceptance_n{n}"] = smp.site_acceptance
    stats["significant_increases"] = _significant_increases(vals, ses)
    stats["min_ess"] = min(ess)
    bounds = {"significant_increases.max": 0, "min_ess.min": p["min_ess"]}
    return stats, bounds, {}


def _check_l5(p, seed):
    return _tail_check(p, seed, "spacing")


def _check_l6(p, seed):
    return _tail_check(p, seed, "ratio")


def _check_l7(p, seed):
    stats, consts = {}, {}
    for l in p["orders"]:
        mom = wiener.endpoint_moments(l, p["N"], p["m"], _sub_seed(seed, l))
        stats[f"z_l{l}"] = mom.z_score
        stats[f"m0_l{l}"] = mom.m0.value
        stats[f"m1_l{l}"] = mom.m1.value
        consts[f"M{l}"] = mom.m1.value
    # path-wise reversal: q'(0) of the reversed path against q'(1) of the original
    xi = wiener.sample_paths(p["m"], min(p["N"], 4096), _sub_seed(seed, 0))
    q0r, _ = wiener.endpoint_derivs(wiener.reverse_paths(xi))
    _, q1 = wiener.endpoint_derivs(xi)
    stats["reversal_max_rel_diff"] = float(np.max(np.abs(q0r / q1 - 1.0)))
    stats["max_z"] = max(stats[f"z_l{l}"] for l in p["orders"])
    bounds = {"max_z.max": 3.0, "reversal_max_rel_diff.max": 1e-12}
    return stats, bounds, consts


def _check_l8(p, seed):
    g = diffeo.make_bump(p["a"])
    c4 = wiener.estimate_c4(p["c4_samples"], p["m"], _sub_seed(seed, 1))
    res = functional.tail_event_statistics(g, simplex.SimplexPoint.uniform(p["n"]), p["epsilon"],
                                       p["N"], p["m"], _sub_seed(seed, 2), c4.c4, c4.M1)
    f1 = res.mean_f1
    z = abs(f1.value - res.predicted_f1) / f1.std_error if f1.std_error > 0 else 0.0
    stats = {"complement_mass": res.complement_mass.value,
             "complement_mass_se": res.complement_mass.std_error,
             "f1_mean": f1.value, "f1_predicted": res.predicted_f1, "f1_z": z}
    bounds = {"complement_mass.max": res.bound, "f1_z.max": 3.0}
    consts = {"c4": c4.c4, "M1": c4.M1, "M2": c4.M2, "C_g": res.C_g}
    return stats, bounds, consts


def _increments(g: diffeo.SmoothDiffeo, x: np.ndarray, d: np.ndarray) -> np.ndarray:
    """g(x + d) - g(x), by third-order Taylor where plain differences cancel."""
    taylor = g.d1(x) * d + 0.5 * g.d2(x) * d * d + g.d3(x) * d ** 3 / 6.0
    return np.where(d < 1e-3, taylor, g(np.minimum(x + d, 1.0)) - g(x))


def alternating_deviation(g: diffeo.SmoothDiffeo, rho: float, pairs: int):
    """ln of the v-ratio product for gaps alternating rho : 1, and min v-argument."""
    gaps = np.tile([rho, 1.0], pairs)
    gaps /= gaps.sum()
    x = np.concatenate([[0.0], np.cumsum(gaps)[:-1]])
    gi = _increments(g, x, gaps)
    prev, gprev = np.roll(gaps, 1), np.roll(gi, 1)
    sigma = float(np.sum(kernel.log_v1(0.5 * np.abs(np.log(gi / gprev)))
                         - kernel.log_v1(0.5 * np.abs(np.log(gaps / prev)))))
    t_min = float(np.min((gaps + prev) / (2.0 * np.sqrt(gaps * prev))))
    return sigma, t_min, float(gaps.max())


def _check_l9(p, seed):
    g = diffeo.make_bump(p["a"])
    scan = np.linspace(0.0, 1.0, 100_001)
    C = float(np.max(np.abs(g.d2(scan))))
    delta1 = 1.0 / (400.0 * (C + 1.0))
    pairs = int(math.floor(1.0 / delta1)) + 1
    devs, ts, maxgap = [], [], 0.0
    for rho in p["rhos"]:
        s, t, mg = alternating_deviation(g, rho, pairs)
        devs.append(abs(math.expm1(s)))
        ts.append(t)
        maxgap = max(maxgap, mg)
    order = np.argsort(ts)
    d_sorted = np.asarray(devs)[order]
    K = max(abs(d) * math.log(t) for d, t in zip(devs, ts))
    stats = {"deviation_increases": int(np.sum(np.diff(d_sorted) > 0)), "fitted_K": K,
             "max_gap_over_delta1": maxgap / delta1,
             **{f"deviation_{i}": d for i, d in enumerate(devs)},
             **{f"t_min_{i}": t for i, t in enumerate(ts)}}
    bounds = {"deviation_increases.max": 0, "fitted_K.max": 800.0 * C, "max_gap_over_delta1.max": 1.0}
    return stats, bounds, {"C": C, "delta1": delta1, "partition_size": 2 * pairs}


def _check_t3(p, seed):
    g = diffeo.make_bump(p["a"])
    F = functional.get_functional(p["functional"])
    ds, ses, stats = [], [], {}
    for n in p["ns"]:
        r = functional.estimate_drift(F, g, n, p["delta"], p["Nx"], p["Nphi"], p["m"], _sub_seed(seed, n))
        ds.append(r.delta_n)
        ses.append(r.se)
        stats[f"drift_n{n}"] = r.delta_n
        stats[f"se_n{n}"] = r.se
    stats["significant_increases"] = _significant_increases(ds, ses)
    return stats, {"significant_increases.max": 0}, {}


def _check_rn(p, seed):
    stats, kappas = {}, []
    for i, a in enumerate(p["as"]):
        r = diffeo.rn_consistency(diffeo.make_bump(a), diffeo._mid_value, p["N"], p["m"], _sub_seed(seed, i))
        kappas.append(r.kappa_fit)
        stats[f"kappa_a{a}"] = r.kappa_fit
        stats[f"kappa_se_a{a}"] = r.kappa_se
        stats[f"z_fitted_a{a}"] = r.z_fitted
        stats[f"z_printed_a{a}"] = r.z_printed
        stats[f"kappa_z_a{a}"] = r.kappa_z
    k = np.asarray(kappas)
    stats["kappa_cv"] = float(np.std(k, ddof=1) / abs(np.mean(k))) if k.size > 1 else 0.0
    stats["max_z_fitted"] = max(stats[f"z_fitted_a{a}"] for a in p["as"])
    # informational: is the pooled kappa consistent with the printed value 1?
    w = np.array([1.0 / stats[f"kappa_se_a{a}"] ** 2 for a in p["as"]])
    pooled = float(np.sum(w * k) / np.sum(w))
    stats["kappa_pooled"] = pooled
    stats["kappa_pooled_z_vs_1"] = abs(pooled - 1.0) * math.sqrt(float(np.sum(w)))
    bounds = {"kappa_cv.max": p["max_cv"], "max_z_fitted.max": 3.0}
    return stats, bounds, {"kappa": pooled}


def _check_glue(p, seed):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(p["draws"]):
        n = int(rng.integers(1, p["n_max"] + 1))
        lg = rng.standard_normal(n) * 3.0
        lg -= np.logaddexp.reduce(lg)
        lg -= np.logaddexp.reduce(lg)
        res = functional.build_qn_detailed(simplex.SimplexPoint(lg), functional.sample_phis(n, p["m"], rng))
        worst = max(worst, res.junction_mismatch)
    xb = simplex.SimplexPoint(np.log(rng.dirichlet(np.ones(7))))
    t =np.linspace(0.0, 1.0, p["m"] + 1)
    ident = [(t, t, np.zeros_like(t))] * 7
    q = functional.build_qn(xb, ident)
    s = np.linspace(0.0, 1.0, 10_001)
    id_err = max(float(np.max(np.abs(q(s) - s))), float(np.max(np.abs(q.values - q.nodes))))
    stats = {"junction_max_rel": worst, "identity_sup": id_err}
    bounds = {"junction_max_rel.max": p["rel_tol"], "identity_sup.max": p["identity_tol"]}
    return stats, bounds, {}


_CHECKS: dict[str, Callable] = {
    "L1": _check_l1, "L2": _check_l2, "L3": _check_l3, "L4": _check_l4, "L5": _check_l5,
    "L6": _check_l6, "L7": _check_l7, "L8": _check_l8, "L9": _check_l9, "T3": _check_t3,
    "RN": _check_rn, "GLUE": _check_glue,
}


def _sub_seed(seed: int, tag: int) -> int:
    """Deterministic child seed for the ``tag``-th stream of a check."""
    return int(np.random.SeedSequence([int(seed), int(tag)]).generate_state(1, np.uint64)[0])


def run_check(check_id: str, params: dict | None = None, seed: int = 0) -> CheckReport:
    p = resolve_params(check_id, params)
    t0 = time.perf_counter()
    stats, bounds, consts = _CHECKS[check_id](p, int(seed))
    wall = (time.perf_counter() - t0) * 1000.0
    rep = CheckReport(check_id, p, int(seed), stats, bounds, consts)
    rep.passed = evaluate(rep.statistics, rep.bounds)
    rep.wall_time_ms = wall
    return rep


def _run_one(args):
    cid, params, seed = args
    return run_check(cid, params, seed)


def suite(seed: int = 0, ids=CHECK_IDS, params: dict[str, dict] | None = None,
          threads: int = 1) -> list[CheckReport]:
    """Run the checks; results come back in ``ids`` order whatever ``threads`` is."""
    jobs = [(cid, (params or {}).get(cid), seed) for cid in ids]
    for cid, p, _ in jobs:
        resolve_params(cid, p)
    if threads <= 1:
        return [_run_one(j) for j in jobs]
    from concurrent.futures import ProcessPoolExecutor
    with ProcessPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(_run_one, jobs))


# -- summaries --------------------------------------------------------------------

SUMMARY_FIELDS = ["check_id", "seed", "pass", "duplicate", "wall_time_ms"]


def summary_csv(reports: list[CheckReport]) -> str:
    """One row per report; repeated check ids are kept and flagged."""
    counts: dict[str, int] = {}
    for r in reports:
        counts[r.check_id] = counts.get(r.check_id, 0) + 1
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_FIELDS)
    for r in reports:
        w.writerow([r.check_id, r.seed, str(r.passed).lower(), str(counts[r.check_id] > 1).lower(),
                    f"{r.wall_time_ms:.1f}"])
    w.writerow(["ALL", "", str(all(r.passed for r in reports)).lower(), "", ""])
    return buf.getvalue()
