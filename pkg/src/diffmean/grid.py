"""Grid-sampled increasing diffeomorphisms of [0, 1].

A ``GridDiffeo`` stores node positions, node values and log node
derivatives.  Between nodes it is evaluated by cubic Hermite interpolation on
the stored derivatives, so the interpolant is C^1 and reproduces the node
data exactly.

Derivatives are kept in log form because glued maps can carry slopes far
outside the float range.  For the same reason node values are only required
to be non-decreasing: a block of width 1e-300 is increasing in exact
arithmetic but collapses to a repeated value in floating point.
"""
from __future__ import annotations

import numpy as np

HERMITE = "cubic-hermite"


def _hermite_basis(u: np.ndarray):
    u2 = u * u
    u3 = u2 * u
    return (2 * u3 - 3 * u2 + 1, u3 - 2 * u2 + u, -2 * u3 + 3 * u2, u3 - u2)


def _hermite_basis_d(u: np.ndarray):
    u2 = u * u
    return (6 * u2 - 6 * u, 3 * u2 - 4 * u + 1, -6 * u2 + 6 * u, 3 * u2 - 2 * u)


class GridDiffeo:
    __slots__ = ("nodes", "values", "log_derivs", "interpolation")

    def __init__(self, nodes, values, derivs=None, *, log_derivs=None, check: bool = True,
                 interpolation: str = HERMITE):
        t = np.ascontiguousarray(nodes, dtype=float)
        f = np.ascontiguousarray(values, dtype=float)
        if (derivs is None) == (log_derivs is None):
            raise ValueError("pass exactly one of derivs / log_derivs")
        if log_derivs is None:
            d = np.asarray(derivs, dtype=float)
            if np.any(d <= 0):
                raise ValueError("node derivatives must be positive")
            ld = np.log(d)
        else:
            ld = np.ascontiguousarray(log_derivs, dtype=float)
        self.nodes, self.values, self.log_derivs = t, f, ld
        self.interpolation = interpolation
        if check:
            self._validate()

    def _validate(self):
        t, f, ld = self.nodes, self.values, self.log_derivs
        if t.ndim != 1 or t.shape != f.shape or t.shape != ld.shape or t.size < 2:
            raise ValueError("nodes, values and derivatives must be 1-D arrays of equal length >= 2")
        if t[0] != 0.0 or t[-1] != 1.0 or np.any(np.diff(t) <= 0):
            raise ValueError("nodes must increase strictly from 0 to 1")
        if f[0] != 0.0 or f[-1] != 1.0:
            raise ValueError("a diffeomorphism of [0,1] must fix both endpoints")
        if np.any(np.diff(f) < 0):
            raise ValueError("node values must be increasing")
        if not np.all(np.isfinite(ld)):
            raise ValueError("node derivatives must be finite and positive")

    def __repr__(self) -> str:
        return f"GridDiffeo(m={self.m}, interpolation={self.interpolation!r})"

    @property
    def derivs(self) -> np.ndarray:
        return np.exp(self.log_derivs)

    @property
    def m(self) -> int:
        return self.nodes.size - 1

    @property
    def is_uniform(self) -> bool:
        return bool(np.allclose(self.nodes, np.linspace(0.0, 1.0, self.nodes.size), rtol=0, atol=1e-15))

    @classmethod
    def identity(cls, m: int) -> "GridDiffeo":
        t = np.linspace(0.0, 1.0, m + 1)
        return cls(t, t.copy(), log_derivs=np.zeros(m + 1))

    @classmethod
    def from_function(cls, f, df, m: int) -> "GridDiffeo":
        t = np.linspace(0.0, 1.0, m + 1)
        vals = np.asarray(f(t), dtype=float).copy()
        vals[0], vals[-1] = 0.0, 1.0
        return cls(t, vals, np.asarray(df(t), dtype=float))

    def _locate(self, s: np.ndarray):
        s = np.clip(np.asarray(s, dtype=float), 0.0, 1.0)
        idx = np.clip(np.searchsorted(self.nodes, s, side="right") - 1, 0, self.m - 1)
        h = self.nodes[idx + 1] - self.nodes[idx]
        return idx, (s - self.nodes[idx]) / h, h

    def __call__(self, s):
        idx, u, h = self._locate(s)
        d = self.derivs
        b0, b1, b2, b3 = _hermite_basis(u)
        return (b0 * self.values[idx] + b1 * h * d[idx]
                + b2 * self.values[idx + 1] + b3 * h * d[idx + 1])

    def derivative(self, s):
        idx, u, h = self._locate(s)
        d = self.derivs
        b0, b1, b2, b3 = _hermite_basis_d(u)
        return ((b0 * self.values[idx] + b2 * self.values[idx + 1]) / h
                + b1 * d[idx] + b3 * d[idx + 1])

    def is_monotone_interpolant(self) -> bool:
        """Fritsch-Carlson sufficient condition on every cell."""
        sec = np.diff(self.values) / np.diff(self.nodes)
        d = self.derivs
        with np.errstate(divide="ignore", invalid="ignore"):
            a = d[:-1] / sec
            b = d[1:] / sec
        ok = (a + b <= 3.0) | (a * a + b * b <= 9.0)
        return bool(np.all(ok | (sec == 0)))

    def sup_distance(self, other: "GridDiffeo", points: int = 4097) -> float:
        s = np.linspace(0.0, 1.0, points)
        return float(np.max(np.abs(self(s) - other(s))))


def cell_inverse(f: GridDiffeo, y: np.ndarray, tol: float = 1e-15, max_iter: int = 60) -> np.ndarray:
    """Solve f(s) = y for each y by safeguarded Newton inside the bracketing cell."""
    y = np.asarray(y, dtype=float)
    idx = np.clip(np.searchsorted(f.values, y, side="right") - 1, 0, f.m - 1)
    lo = f.nodes[idx].copy()
    hi = f.nodes[idx + 1].copy()
    rise = f.values[idx + 1] - f.values[idx]
    frac = np.where(rise > 0, (y - f.values[idx]) / np.where(rise > 0, rise, 1.0), 0.0)
    s = lo + frac * (hi - lo)
    for _ in range(max_iter):
        r = f(s) - y
        lo = np.where(r < 0, s, lo)
        hi = np.where(r > 0, s, hi)
        s_new = s - r / f.derivative(s)
        bad = (s_new <= lo) | (s_new >= hi) | ~np.isfinite(s_new)
        s_new = np.where(bad, 0.5 * (lo + hi), s_new)
        step = np.max(np.abs(s_new - s), initial=0.0)
        s = s_new
        if step <= tol:
            break
    return np.where(y == f.values[idx], f.nodes[idx], s)
