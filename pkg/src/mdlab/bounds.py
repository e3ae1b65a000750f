"""Tabulated CGF bound functions and the f+/f- transforms.

A :class:`BoundFunction` stores f on a geometric lambda grid.  Between grid
points we interpolate the ratio f(lam)/lam**2 linearly (it is the quantity
whose small-lambda limit matters), below the grid the ratio is held constant,
and above ``lambda_max`` the function is +inf.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
import math

import numpy as np

from .errors import DomainError, RangeError

INF = math.inf
P_POINTS = 512
P_CAP = 1e6
GOLDEN_ITERS = 80
_GR = (math.sqrt(5.0) - 1.0) / 2.0


def default_grid(n: int = 512, lo: float = 1e-4, hi: float = 0.999) -> np.ndarray:
    return np.geomspace(lo, hi, n)


@dataclass
class BoundFunction:
    lambda_grid: np.ndarray
    values: np.ndarray
    lambda_max: float | None = None
    # grid points where every candidate of the inner optimisation was +inf
    infeasible: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        g = np.asarray(self.lambda_grid, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if g.ndim != 1 or g.size == 0:
            raise DomainError("lambda grid must be a non-empty 1-d array")
        if g.shape != v.shape:
            raise ValueError("grid and values differ in length")
        if np.any(g <= 0) or np.any(np.diff(g) <= 0):
            raise DomainError("lambda grid must be positive and strictly increasing")
        if np.any(np.isnan(v)) or np.any(v < 0):
            raise ValueError("bound function values must be in [0, inf]")
        self.lambda_grid = g
        self.values = v
        if self.lambda_max is None:
            self.lambda_max = float(g[-1])
        if self.infeasible is None:
            self.infeasible = np.zeros(g.size, dtype=bool)

    @classmethod
    def from_callable(cls, fn, grid=None, lambda_max=None):
        grid = default_grid() if grid is None else np.asarray(grid, dtype=float)
        vals = np.array([fn(x) for x in grid], dtype=float)
        return cls(grid, vals, lambda_max)

    @classmethod
    def quadratic(cls, a: float, grid=None):
        """f(lam) = a*lam**2 tabulated on ``grid``."""
        grid = default_grid() if grid is None else np.asarray(grid, dtype=float)
        return cls(grid, a * grid**2)

    @property
    def ratio(self) -> np.ndarray:
        return self.values / self.lambda_grid**2

    def __call__(self, lam):
        x = np.asarray(lam, dtype=float)
        scalar = x.ndim == 0
        x = np.atleast_1d(x)
        g = self.lambda_grid
        r = self.ratio
        out = np.empty_like(x)

        above = x > self.lambda_max
        below = x < g[0]
        inside = ~(above | below)
        out[above] = INF
        out[below] = r[0] * x[below] ** 2 if np.isfinite(r[0]) else INF
        if g.size == 1:
            out[inside] = r[0] * x[inside] ** 2
        else:
            xi = np.minimum(x[inside], g[-1])
            i = np.clip(np.searchsorted(g, xi, side="right") - 1, 0, g.size - 2)
            w = (xi - g[i]) / (g[i + 1] - g[i])
            r0, r1 = r[i], r[i + 1]
            inf = (np.isinf(r0) & (w < 1.0)) | (np.isinf(r1) & (w > 0.0))
            with np.errstate(invalid="ignore"):
                ri = np.where(w <= 0.0, r0, np.where(w >= 1.0, r1, (1 - w) * r0 + w * r1))
            ri = np.where(inf, INF, ri)
            out[inside] = ri * x[inside] ** 2
        out[x <= 0] = 0.0
        return float(out[0]) if scalar else out

    def with_values(self, values, infeasible=None) -> "BoundFunction":
        return BoundFunction(self.lambda_grid.copy(), values, self.lambda_max, infeasible)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["lambda", "value"])
            for lam, v in zip(self.lambda_grid, self.values):
                w.writerow([repr(float(lam)), "inf" if math.isinf(v) else repr(float(v))])

    @classmethod
    def from_csv(cls, path, lambda_max=None) -> "BoundFunction":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if rows[0] != ["lambda", "value"]:
            raise ValueError(f"{path}: expected header lambda,value")
        grid = [float(r[0]) for r in rows[1:]]
        vals = [INF if r[1] == "inf" else float(r[1]) for r in rows[1:]]
        return cls(np.array(grid), np.array(vals), lambda_max)


@dataclass(frozen=True)
class ChainBudget:
    C_list: tuple
    theta: float = 0.5
    epsilon: float = 0.5

    def __post_init__(self):
        C = tuple(float(c) for c in self.C_list)
        if not C:
            raise ValueError("C_list must be non-empty")
        if any(c < 0 or not math.isfinite(c) for c in C):
            raise ValueError("budgets C_k must be finite and >= 0")
        if not (0 < self.theta < 1 and 0 < self.epsilon < 1):
            raise ValueError("theta and epsilon must lie in (0, 1)")
        object.__setattr__(self, "C_list", C)

    @classmethod
    def geometric(cls, M: float, theta: float, n: int, epsilon: float = 0.5):
        """C_k = M (2 theta)^k for k = 0..n."""
        return cls(tuple(M * (2 * theta) ** k for k in range(n + 1)), theta, epsilon)

    @property
    def n(self) -> int:
        return len(self.C_list) - 1

    @property
    def M(self) -> float:
        return max(c / (2 * self.theta) ** k for k, c in enumerate(self.C_list))


def _as_budget(budget) -> ChainBudget:
    return budget if isinstance(budget, ChainBudget) else ChainBudget(tuple(budget))


def _golden(obj, a, b, iters=GOLDEN_ITERS):
    """Vectorised golden-section minimisation of obj on rows [a, b]."""
    c = b - _GR * (b - a)
    d = a + _GR * (b - a)
    fc, fd = obj(c), obj(d)
    for _ in range(iters):
        left = fc <= fd
        a, b = np.where(left, a, c), np.where(left, d, b)
        c_new = np.where(left, b - _GR * (b - a), d)
        d_new = np.where(left, c, a + _GR * (b - a))
        probe = obj(np.where(left, c_new, d_new))
        fc, fd = np.where(left, probe, fd), np.where(left, fc, probe)
        c, d = c_new, d_new
    pick = fc <= fd
    return np.where(pick, c, d), np.where(pick, fc, fd)


def _optimise(objective, lam, p_lo, p_hi, n_p=P_POINTS, refine=True):
    """min over p in [p_lo, p_hi] of objective(p, lam), rowwise.

    Returns (value, argmin, all_inf).  ``objective`` accepts arrays of p with
    lam broadcast against them.
    """
    k = lam.size
    t = np.linspace(0.0, 1.0, n_p)
    logp = np.log(p_lo)[:, None] + t[None, :] * (np.log(p_hi) - np.log(p_lo))[:, None]
    P = np.exp(logp)
    P[:, 0] = p_lo
    P[:, -1] = p_hi
    vals = objective(P, lam[:, None])
    j = np.argmin(vals, axis=1)
    rows = np.arange(k)
    best = vals[rows, j]
    arg = P[rows, j]
    all_inf = np.all(np.isinf(vals), axis=1)
    if refine and n_p > 2:
        a = P[rows, np.maximum(j - 1, 0)]
        b = P[rows, np.minimum(j + 1, n_p - 1)]
        x, fx = _golden(lambda p: objective(p, lam), a, b)
        take = fx < best
        best = np.where(take, fx, best)
        arg = np.where(take, x, arg)
    return best, arg, all_inf


def f_plus(f: BoundFunction, C: float, n_p: int = P_POINTS, refine: bool = True) -> BoundFunction:
    """f+[C](lam) = inf_{p >= 1/(1-lam)} (2/p) f(p lam) + p/(p-1) C lam^2; +inf for lam >= 1."""
    if C < 0:
        raise ValueError("C must be >= 0")
    g = f.lambda_grid
    out = np.full(g.size, INF)
    flag = np.zeros(g.size, dtype=bool)
    ok = g < 1.0
    lam = g[ok]
    if lam.size:
        p_lo = 1.0 / (1.0 - lam)
        p_hi = np.minimum(P_CAP, f.lambda_max / lam)
        live = p_hi >= p_lo
        res = np.full(lam.size, INF)
        if np.any(live):
            L = lam[live]

            def obj(p, lm):
                cl2 = C * lm * lm
                with np.errstate(invalid="ignore"):
                    pen = np.where(cl2 == 0, 0.0, p / (p - 1.0) * cl2)
                # p <= lambda_max/lam, so the clip only undoes rounding at the endpoint
                return 2.0 / p * f(np.minimum(p * lm, f.lambda_max)) + pen

            best, _, _ = _optimise(obj, L, p_lo[live], np.maximum(p_hi[live], p_lo[live]), n_p, refine)
            res[live] = best
        out[ok] = res
        fl = np.isinf(res)
        flag[np.flatnonzero(ok)[fl]] = True
    return f.with_values(out, flag)


def f_minus(f: BoundFunction, C: float, n_p: int = P_POINTS, refine: bool = True) -> BoundFunction:
    """f-[C](lam) = sup_{p >= lam+1} 2p f(lam/p) - C lam^2/(p-1), clipped at 0."""
    if C < 0:
        raise ValueError("C must be >= 0")
    lam = f.lambda_grid
    p_lo = lam + 1.0
    p_hi = np.maximum(np.full(lam.size, P_CAP), p_lo)

    def obj(p, lm):
        cl2 = C * lm * lm
        fv = f(lm / p)
        return -(2.0 * p * fv - np.where(cl2 == 0, 0.0, cl2 / (p - 1.0)))

    best, _, _ = _optimise(obj, lam, p_lo, p_hi, n_p, refine)
    vals = np.maximum(-best, 0.0)
    return f.with_values(vals, np.isinf(vals))


def chain_plus(f: BoundFunction, budget, **kw) -> BoundFunction:
    """Left fold of f_plus over C_0..C_n."""
    out = f
    for c in _as_budget(budget).C_list:
        out = f_plus(out, c, **kw)
    return out


def chain_minus(f: BoundFunction, budget, **kw) -> BoundFunction:
    out = f
    for c in _as_budget(budget).C_list:
        out = f_minus(out, c, **kw)
    return out


# closed-form bounds on 2^{-(n+1)} times the folded chain ------------------


def _f(f, x):
    return float(f(x))


def _sigma_min(C_list):
    t = np.array([2.0 ** (-k / 2) * math.sqrt(c) for k, c in enumerate(C_list)])
    return float(t.sum()), float(t.min())


def lemma2_bound(f, C_list, lam: float) -> float:
    n = len(C_list) - 1
    if not 0 < lam < 1.0 / (n + 1):
        raise DomainError(f"lambda={lam} outside (0, 1/{n + 1})")
    s = 1.0 - (n + 1) * lam
    tail = 0.5 * lam * sum(2.0 ** (-k) * c for k, c in enumerate(C_list))
    return s * _f(f, lam / s) + tail


def lemma3_window(C_list, eps: float) -> float:
    sigma, m = _sigma_min(C_list)
    return 0.0 if sigma == 0 else eps * m / sigma


def lemma3_bound(f, C_list, eps: float, lam: float) -> float:
    if not 0 < eps < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    sigma, _ = _sigma_min(C_list)
    hi = lemma3_window(C_list, eps)
    if not 0 < lam <= hi:
        raise RangeError(f"lambda={lam} outside (0, {hi:.6g}]")
    return (1 - eps) * _f(f, lam / (1 - eps)) + lam * lam * sigma * sigma / (2 * eps)


def lemma12_bound(f, C_list, lam: float) -> float:
    if lam <= 0:
        raise DomainError("lambda must be positive")
    n = len(C_list) - 1
    s = 1.0 + (n + 1) * lam
    tail = 0.5 * lam * sum(2.0 ** (-k) * c for k, c in enumerate(C_list))
    return s * _f(f, lam / s) - tail


def lemma13_window(C_list, eps: float) -> float:
    return lemma3_window(C_list, eps) / (1 - eps)


def lemma13_bound(f, C_list, eps: float, lam: float) -> float:
    if not 0 < eps < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    sigma, _ = _sigma_min(C_list)
    hi = lemma13_window(C_list, eps)
    if not 0 < lam <= hi:
        raise RangeError(f"lambda={lam} outside (0, {hi:.6g}]")
    return _f(f, (1 - eps) * lam) / (1 - eps) - (1 - eps) / (2 * eps) * lam * lam * sigma * sigma


def _prop_common(budget, variant, m, lam, lower):
    b = _as_budget(budget)
    n, th, eps = b.n, b.theta, b.epsilon
    sq = 1.0 - math.sqrt(th)
    M = b.M
    if lam <= 0:
        raise RangeError("lambda must be positive")
    if variant == "a":
        hi = eps * th ** (n / 2) * sq
        if lam > hi:
            raise RangeError(f"lambda={lam} outside (0, {hi:.6g}]")
        return b, lam, lam * lam * M / (2 * eps * sq * sq)
    if variant != "b":
        raise ValueError("variant must be 'a' or 'b'")
    if m is None or not 0 <= m <= n - 1:
        raise RangeError(f"level m must lie in 0..{n - 1}")
    if lower:
        mu = lam / (1 + (n - m) * lam)
    else:
        if (n - m) * lam >= 1:
            raise RangeError("(n-m)*lambda must be < 1")
        mu = lam / (1 - (n - m) * lam)
    hi = eps * th ** (m / 2) * sq
    if mu > hi:
        raise RangeError(f"mu={mu:.6g} outside (0, {hi:.6g}]")
    noise = (mu * mu / (2 * eps * sq * sq) + 0.5 * lam * th ** (m + 1) / (1 - th)) * M
    return b, mu, noise


def prop44_bound(f, budget, lam: float, variant: str = "a", m: int | None = None) -> float:
    b, x, noise = _prop_common(budget, variant, m, lam, lower=False)
    eps = b.epsilon
    return (1 - eps) * _f(f, x / (1 - eps)) + noise


def prop444_bound(f, budget, lam: float, variant: str = "a", m: int | None = None) -> float:
    b, x, noise = _prop_common(budget, variant, m, lam, lower=True)
    eps = b.epsilon
    return _f(f, (1 - eps) * x) / (1 - eps) - noise
