"""Command-line entry point.

Exit codes: 0 success, 1 a check (or merged summary) failed, 2 usage or
input error.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from . import diffeo, functional, kernel, simplex, verify, wiener

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _seed(text: str) -> int:
    try:
        s = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}") from None
    if not 0 <= s < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return s


def _delta(text: str) -> float:
    d = float(text)
    if not 0.0 < d < 0.5:
        raise argparse.ArgumentTypeError("delta must lie in (0, 1/2)")
    return d


def _grid(text: str) -> int:
    m = int(text)
    try:
        wiener.check_resolution(m)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from None
    return m


def _positive(text: str) -> int:
    k = int(text)
    if k < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return k


def _param(text: str):
    key, sep, val = text.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError("expected KEY=VALUE")
    try:
        return key, json.loads(val)
    except json.JSONDecodeError:
        return key, val


def _write(text: str, out: str | None) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


# -- kernel -------------------------------------------------------------------

def cmd_kernel_eval(a) -> int:
    fn = a.fn
    if fn in ("jn", "chain"):
        n = int(a.at)
        if n != a.at or n < 1:
            raise UsageError(f"--fn {fn} needs a positive integer --at")
        if fn == "jn":
            val = simplex.jn(n, method=a.method or "spectral", log=a.log)
        else:
            val = kernel.chain_integral(n, log=a.log)
    elif fn == "k0":
        val = float(kernel.log_k0(a.at) if a.log else kernel.bessel_k0(a.at))
    elif fn == "v1":
        val = float(kernel.log_v1(a.at)) if a.log else float(kernel.v1(a.at, method=a.method or "agm"))
    elif fn == "v":
        if a.at < 1:
            raise UsageError("v is defined for arguments >= 1")
        val = float(kernel.v(a.at, method=a.method or "agm"))
        if a.log:
            val = math.log(val)
    else:  # pragma: no cover - argparse restricts choices
        raise UsageError(fn)
    print(repr(float(val)))
    return EXIT_OK


# -- sample -------------------------------------------------------------------

def cmd_sample_path(a) -> int:
    xi = wiener.sample_paths(a.grid, a.count, a.seed)
    if a.format == "json":
        text = _dump({"m": a.grid, "seed": a.seed, "paths": xi.tolist()})
    else:
        rows = [",".join(["path"] + [f"t{k}" for k in range(a.grid + 1)])]
        rows += [",".join([str(i)] + [repr(float(v)) for v in row]) for i, row in enumerate(xi)]
        text = "\n".join(rows) + "\n"
    _write(text, a.out)
    return EXIT_OK


def cmd_sample_simplex(a) -> int:
    if a.n < 2:
        raise UsageError("--n must be at least 2")
    cfg = simplex.McmcConfig(burn_in=a.burn_in, chain_count=a.chains)
    smp = simplex.sample_un(a.n, a.count, cfg, a.seed)
    if a.format == "json":
        import numpy as np
        x = np.cumsum(np.exp(smp.log_gaps), axis=1)[:, :-1]
        text = _dump({"n": a.n, "seed": a.seed, "site_acceptance": smp.site_acceptance,
                      "scale_acceptance": smp.scale_acceptance, "x": x.tolist()})
    else:
        text = smp.to_csv()
    _write(text, a.out)
    return EXIT_OK


# -- estimate ---------------------------------------------------------------------

def _mcmc(a):
    return simplex.McmcConfig(burn_in=a.burn_in, chain_count=a.chains)


def cmd_estimate_l(a) -> int:
    F = functional.get_functional(a.functional)
    est = functional.estimate_L(F, a.n, a.delta, a.nx, a.nphi, a.grid, a.seed, _mcmc(a))
    rec = {"functional": a.functional, "n": a.n, "delta": a.delta,
           "params": {"Nx": a.nx, "Nphi": a.nphi, "m": a.grid, "burn_in": a.burn_in, "chains": a.chains},
           "value": est.value, "se": est.std_error, "seed": a.seed}
    _write(_dump(rec), a.out)
    return EXIT_OK


def cmd_estimate_drift(a) -> int:
    F = functional.get_functional(a.functional)
    g = diffeo.make_bump(a.bump)
    res = functional.estimate_drift(F, g, a.n, a.delta, a.nx, a.nphi, a.grid, a.seed, _mcmc(a))
    rec = {"functional": a.functional, "n": a.n, "delta": a.delta,
           "params": {"Nx": a.nx, "Nphi": a.nphi, "m": a.grid, "bump": a.bump,
                      "burn_in": a.burn_in, "chains": a.chains},
           "value": res.delta_n, "se": res.se, "seed": a.seed,
           "L_F": res.L_F.value, "L_Fg": res.L_Fg.value}
    _write(_dump(rec), a.out)
    return EXIT_OK


# -- check / report -----------------------------------------------------------------

def cmd_check_run(a) -> int:
    params = dict(a.param or [])
    for key in ("n", "N", "m"):
        val = getattr(a, f"p_{key}", None)
        if val is not None:
            params[key] = val
    rep = verify.run_check(a.id, params, a.seed)
    _write(rep.to_json(), a.out)
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_check_suite(a) -> int:
    ids = a.ids.split(",") if a.ids else list(verify.CHECK_IDS)
    reports = verify.suite(a.seed, ids, threads=a.threads)
    if a.out_dir:
        out = Path(a.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for r in reports:
            (out / f"{r.check_id}.json").write_text(r.to_json())
        (out / "summary.csv").write_text(verify.summary_csv(reports))
    else:
        sys.stdout.write(verify.summary_csv(reports))
    return EXIT_OK if all(r.passed for r in reports) else EXIT_FAIL


def cmd_report_merge(a) -> int:
    reports = []
    for p in a.paths:
        try:
            reports.append(verify.CheckReport.from_json(Path(p).read_text()))
        except (OSError, ValueError, KeyError, TypeError) as e:
            raise UsageError(f"cannot read report {p}: {e}") from None
    _write(verify.summary_csv(reports), a.out)
    return EXIT_OK if all(r.passed for r in reports) else EXIT_FAIL


# -- parser -------------------------------------------------------------------------

def _sub(parent, name, **kw):
    return parent.add_parser(name, allow_abbrev=False, **kw)


def _add_common(p, seed=True, out=True):
    if seed:
        p.add_argument("--seed", type=_seed, required=True)
    if out:
        p.add_argument("--out", default=None, help="output file (default stdout)")
    p.add_argument("--threads", type=_positive, default=1,
                   help="worker processes; never changes numerical results")


def _add_mc(p):
    p.add_argument("--functional", required=True, choices=sorted(functional.CATALOG))
    p.add_argument("--n", type=_positive, required=True)
    p.add_argument("--delta", type=_delta, default=wiener.DEFAULT_DELTA)
    p.add_argument("--nx", type=_positive, required=True)
    p.add_argument("--nphi", type=_positive, required=True)
    p.add_argument("--grid", type=_grid, default=512)
    p.add_argument("--burn-in", type=int, default=10_000)
    p.add_argument("--chains", type=int, default=64)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="diffmean", allow_abbrev=False,
                                 description="Numerical constructions around averaging on interval diffeomorphisms.")
    top = ap.add_subparsers(dest="group", required=True)

    kp = _sub(top, "kernel").add_subparsers(dest="action", required=True)
    p = _sub(kp, "eval", help="evaluate k0, v1, v, jn or chain")
    p.add_argument("--fn", required=True, choices=["k0", "v1", "v", "jn", "chain"])
    p.add_argument("--at", type=float, required=True)
    p.add_argument("--method", default=None, choices=["agm", "direct", "spectral", "bruteforce"])
    p.add_argument("--log", action="store_true")
    p.set_defaults(func=cmd_kernel_eval)

    sp = _sub(top, "sample").add_subparsers(dest="action", required=True)
    p = _sub(sp, "path", help="Brownian paths on k/m nodes")
    p.add_argument("--grid", type=_grid, default=512)
    p.add_argument("--count", type=_positive, default=1)
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    _add_common(p)
    p.set_defaults(func=cmd_sample_path)
    p = _sub(sp, "simplex", help="MCMC draws from u_n")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--count", type=_positive, required=True)
    p.add_argument("--burn-in", type=int, default=10_000)
    p.add_argument("--chains", type=int, default=64)
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    _add_common(p)
    p.set_defaults(func=cmd_sample_simplex)

    ep = _sub(top, "estimate").add_subparsers(dest="action", required=True)
    p = _sub(ep, "L", help="finite-n averaging functional")
    _add_mc(p)
    _add_common(p)
    p.set_defaults(func=cmd_estimate_l)
    p = _sub(ep, "drift", help="|L(F_g) - L(F)| with common random numbers")
    _add_mc(p)
    p.add_argument("--bump", type=float, required=True, help="amplitude a of the bump diffeomorphism")
    _add_common(p)
    p.set_defaults(func=cmd_estimate_drift)

    cp = _sub(top, "check").add_subparsers(dest="action", required=True)
    p = _sub(cp, "run", help="run one check")
    p.add_argument("--id", required=True, choices=list(verify.CHECK_IDS))
    p.add_argument("--n", dest="p_n", type=int, default=None)
    p.add_argument("--samples", dest="p_N", type=int, default=None)
    p.add_argument("--grid", dest="p_m", type=_grid, default=None)
    p.add_argument("--param", type=_param, action="append", help="override a check parameter, KEY=JSON")
    _add_common(p)
    p.set_defaults(func=cmd_check_run)
    p = _sub(cp, "suite", help="run every check")
    p.add_argument("--ids", default=None, help="comma-separated subset")
    p.add_argument("--out-dir", default=None)
    _add_common(p, out=False)
    p.set_defaults(func=cmd_check_suite)

    rp = _sub(top, "report").add_subparsers(dest="action", required=True)
    p = _sub(rp, "merge", help="CSV summary of report files")
    p.add_argument("paths", nargs="+")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_report_merge)
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    try:
        a = ap.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else EXIT_OK
    try:
        return a.func(a)
    except (UsageError, verify.ConfigError, ValueError) as e:
        print(f"diffmean: error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
