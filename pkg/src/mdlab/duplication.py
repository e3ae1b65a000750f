"""Duplication chains by Monte Carlo, empirical CGFs and the sandwich test.

Level indexing: ``levels[j]`` holds samples of X_{j+1}; X_1 is the base law
and X_{n+1} = X_n + X_n' + Z_n with Z_n ~ N(0, 2 C_n), so ln E exp(lam Z_n) =
C_n lam^2 exactly.  Every level is sampled from scratch (2^j base draws per
sample), so different levels are independent.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math
import warnings

import numpy as np
from scipy.special import gammaln

from .bounds import INF, BoundFunction, ChainBudget, chain_minus, chain_plus
from .errors import BudgetViolation, Degenerate
from .rng import as_generator

EULER_GAMMA = float(np.euler_gamma)
ESS_FRACTION = 0.01
CHUNK = 1 << 20  # base draws per chunk


# ------------------------------------------------------------ base laws --


@dataclass(frozen=True)
class Gaussian:
    sigma: float = 1.0

    def sample(self, rng, size):
        return self.sigma * rng.standard_normal(size)

    def cgf(self, lam):
        return 0.5 * self.sigma**2 * np.asarray(lam, dtype=float) ** 2

    @property
    def variance(self):
        return self.sigma**2


@dataclass(frozen=True)
class ExpMixture:
    """Centred mixture of exponentials: E - E[E] with E ~ sum_i w_i Exp(rate_i)."""

    weights: tuple = (0.5, 0.5)
    rates: tuple = (1.0, 3.0)

    def __post_init__(self):
        w = np.asarray(self.weights, float)
        if np.any(w <= 0) or abs(w.sum() - 1) > 1e-12 or np.any(np.asarray(self.rates) <= 0):
            raise ValueError("weights must be positive and sum to 1, rates positive")

    @property
    def mean(self):
        return float(sum(w / b for w, b in zip(self.weights, self.rates)))

    def sample(self, rng, size):
        w = np.asarray(self.weights)
        b = np.asarray(self.rates)
        comp = rng.choice(len(w), size=size, p=w)
        return rng.standard_exponential(size) / b[comp] - self.mean

    def cgf(self, lam):
        lam = np.asarray(lam, dtype=float)
        b = np.asarray(self.rates)
        w = np.asarray(self.weights)
        with np.errstate(divide="ignore", invalid="ignore"):
            mgf = (w * b / (b - lam[..., None])).sum(axis=-1)
            out = np.log(mgf) - lam * self.mean
        return np.where(lam < b.min(), out, INF)

    @property
    def variance(self):
        second = sum(2 * w / b**2 for w, b in zip(self.weights, self.rates))
        return float(second - self.mean**2)


@dataclass(frozen=True)
class LogAbsGaussian:
    """alpha * (ln|zeta| + C_Euler/2) with zeta standard complex Gaussian (mean zero)."""

    alpha: float = 1.0

    def sample(self, rng, size):
        e = rng.standard_exponential(size)  # |zeta|^2 ~ Exp(1)
        return self.alpha * (0.5 * np.log(e) + 0.5 * EULER_GAMMA)

    def cgf(self, lam):
        lam = np.asarray(lam, dtype=float)
        s = self.alpha * lam
        with np.errstate(invalid="ignore"):
            out = gammaln(1 + 0.5 * s) + 0.5 * s * EULER_GAMMA
        return np.where(1 + 0.5 * s > 0, out, INF)

    @property
    def variance(self):
        return self.alpha**2 * math.pi**2 / 24


def make_law(spec: dict):
    kind = spec.get("kind", "gaussian")
    if kind == "gaussian":
        return Gaussian(float(spec.get("sigma", 1.0)))
    if kind == "exp_mixture":
        return ExpMixture(tuple(spec["weights"]), tuple(spec["rates"]))
    if kind == "log_abs_gaussian":
        return LogAbsGaussian(float(spec.get("alpha", 1.0)))
    raise ValueError(f"unknown base law {kind!r}")


# ---------------------------------------------------------------- chain --


def constant_budget(C: float):
    return lambda n: float(C)


def geometric_budget(M: float, theta: float):
    return lambda n: float(M * (2 * theta) ** n)


@dataclass
class DuplicationChainSpec:
    base: object
    budget: object = field(default_factory=lambda: constant_budget(0.0))
    depth: int = 1
    samples: int = 10_000
    # noise variance is noise_factor * 2 C_n; above 1 the budget is broken
    noise_factor: float = 1.0
    strict_budget: bool = True

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if self.samples < 100:
            raise ValueError("need at least 100 samples per level")
        if not callable(self.budget):
            seq = [float(c) for c in self.budget]
            self.budget = lambda n, seq=seq: seq[n - 1]
        if self.strict_budget and self.noise_factor > 1.0:
            raise BudgetViolation(
                f"noise variance {self.noise_factor} x 2C_n gives CGF {self.noise_factor} C_n lam^2 > C_n lam^2"
            )

    def C(self, n: int) -> float:
        """Budget of the step X_n -> X_{n+1} (n >= 1)."""
        return float(self.budget(n))

    def chain_budget(self, n: int, theta: float = 0.5, epsilon: float = 0.5) -> ChainBudget:
        """Budgets C_1..C_{n-1} linking X_1 to X_n."""
        return ChainBudget(tuple(self.C(k) for k in range(1, n)), theta, epsilon)

    def analytic_cgf(self, n: int, lam):
        """ln E exp(lam X_n) = 2^{n-1} K_base + sum_k 2^{n-1-k} * factor * C_k * lam^2."""
        lam = np.asarray(lam, dtype=float)
        noise = sum(2.0 ** (n - 1 - k) * self.noise_factor * self.C(k) for k in range(1, n))
        return 2.0 ** (n - 1) * self.base.cgf(lam) + noise * lam**2


def simulate_level(spec: DuplicationChainSpec, n: int, stream, samples: int | None = None) -> np.ndarray:
    """M fresh samples of X_n, built bottom-up from 2^{n-1} base draws each."""
    M = spec.samples if samples is None else samples
    width = 1 << (n - 1)
    rows = max(1, CHUNK // width)
    out = np.empty(M)
    for c, start in enumerate(range(0, M, rows)):
        stop = min(M, start + rows)
        rng = as_generator(stream.child(n, c))
        x = spec.base.sample(rng, (stop - start, width))
        for k in range(1, n):
            x = x[:, 0::2] + x[:, 1::2]
            var = 2.0 * spec.noise_factor * spec.C(k)
            if var > 0:
                x = x + math.sqrt(var) * rng.standard_normal(x.shape)
        out[start:stop] = x[:, 0]
    return out


def simulate_chain(spec: DuplicationChainSpec, stream) -> list[np.ndarray]:
    """Independent sample arrays for X_1 .. X_{depth+1}."""
    return [simulate_level(spec, n, stream) for n in range(1, spec.depth + 2)]


# ---------------------------------------------------------- empirical CGF --


@dataclass
class EmpiricalCGF:
    lambda_grid: np.ndarray
    estimates: np.ndarray
    standard_errors: np.ndarray
    ess: np.ndarray
    sample_count: int
    degenerate: bool = False

    @property
    def reliable(self) -> np.ndarray:
        return self.ess >= ESS_FRACTION * self.sample_count

    def rows(self):
        for lam, e, s, r in zip(self.lambda_grid, self.estimates, self.standard_errors, self.reliable):
            yield {"lambda": float(lam), "estimate": float(e), "se": float(s), "reliable": bool(r)}


class CGFAccumulator:
    """Streaming, mergeable sums for ln mean exp(lam S).

    Per lambda it keeps a shift m and the shifted sums of w = exp(lam S - m)
    and w^2; merging rescales to the larger shift, so the result does not
    depend on how samples were split (up to floating-point rounding order,
    which is fixed by merging in index order).
    """

    def __init__(self, lambda_grid):
        self.lam = np.asarray(lambda_grid, dtype=float)
        self.m = np.full(self.lam.shape, -np.inf)
        self.s1 = np.zeros(self.lam.shape)
        self.s2 = np.zeros(self.lam.shape)
        self.n = 0
        self.lo = np.inf
        self.hi = -np.inf

    def update(self, samples):
        S = np.asarray(samples, dtype=float).ravel()
        if S.size == 0:
            return self
        if not np.all(np.isfinite(S)):
            raise ValueError("samples must be finite")
        x = self.lam[:, None] * S[None, :]
        m = x.max(axis=1)
        w = np.exp(x - m[:, None])
        self._merge(m, w.sum(axis=1), (w * w).sum(axis=1), S.size, S.min(), S.max())
        return self

    def _merge(self, m, s1, s2, n, lo, hi):
        new_m = np.maximum(self.m, m)
        a = np.exp(self.m - new_m)
        b = np.exp(m - new_m)
        self.s1 = self.s1 * a + s1 * b
        self.s2 = self.s2 * a * a + s2 * b * b
        self.m = new_m
        self.n += n
        self.lo = min(self.lo, lo)
        self.hi = max(self.hi, hi)

    def merge(self, other: "CGFAccumulator"):
        if not np.array_equal(self.lam, other.lam):
            raise ValueError("lambda grids differ")
        if other.n:
            self._merge(other.m, other.s1, other.s2, other.n, other.lo, other.hi)
        return self

    def result(self, allow_degenerate: bool = True) -> EmpiricalCGF:
        M = self.n
        if M == 0:
            raise ValueError("no samples")
        if self.lo == self.hi:
            if not allow_degenerate:
                raise Degenerate("all samples are equal")
            c = self.lo
            return EmpiricalCGF(self.lam.copy(), self.lam * c, np.zeros_like(self.lam),
                                np.full(self.lam.shape, float(M)), M, degenerate=True)
        mean_w = self.s1 / M
        var_w = np.maximum(self.s2 / M - mean_w**2, 0.0)
        est = np.log(mean_w) + self.m
        se = np.sqrt(var_w / M) / mean_w
        ess = self.s1**2 / self.s2
        zero = self.lam == 0
        est[zero] = 0.0
        se[zero] = 0.0
        ess[zero] = M
        out = EmpiricalCGF(self.lam.copy(), est, se, ess, M)
        if not out.reliable.all():
            warnings.warn(
                f"{int((~out.reliable).sum())} lambda points have effective sample size below "
                f"{ESS_FRACTION:g}*M", RuntimeWarning, stacklevel=2,
            )
        return out


def empirical_cgf(samples, lambda_grid, allow_degenerate: bool = True) -> EmpiricalCGF:
    S = np.asarray(samples, dtype=float).ravel()
    if S.size == 0:
        raise ValueError("no samples")
    return CGFAccumulator(lambda_grid).update(S).result(allow_degenerate)


def symmetric_cgf(samples, lam: float) -> tuple[float, float]:
    """(K(lam) + K(-lam)) / 2 with a delta-method standard error.

    Odd cumulants cancel, which removes the dominant first-order noise term.
    """
    S = np.asarray(samples, dtype=float)
    M = S.size
    x = lam * S
    m = np.abs(x).max()
    a = np.exp(x - m)
    b = np.exp(-x - m)
    A, B = a.mean(), b.mean()
    est = 0.5 * (np.log(A) + np.log(B)) + m
    ca = a / A - 1
    cb = b / B - 1
    var = np.mean((0.5 * (ca + cb)) ** 2) / M
    return float(est), float(math.sqrt(var))


# ------------------------------------------------------------- sandwich --


@dataclass
class SandwichReport:
    lambdas: np.ndarray
    lower: np.ndarray
    empirical: np.ndarray
    upper: np.ndarray
    se: np.ndarray
    passed: np.ndarray
    counted: np.ndarray
    fraction: float
    ok: bool

    def rows(self):
        for i in range(self.lambdas.size):
            yield {
                "lambda": float(self.lambdas[i]),
                "lower": float(self.lower[i]),
                "empirical": float(self.empirical[i]),
                "upper": float(self.upper[i]),
                "se": float(self.se[i]),
                "pass": bool(self.passed[i]),
            }

    @property
    def lower_margin(self):
        return self.empirical - self.lower

    @property
    def upper_margin(self):
        return self.upper - self.empirical


def _band(f1: EmpiricalCGF, k: float):
    pos = f1.lambda_grid > 0
    lam = f1.lambda_grid[pos]
    est = f1.estimates[pos]
    se = f1.standard_errors[pos]
    rel = f1.reliable[pos]
    hi = np.where(rel, np.maximum(est + k * se, 0.0), INF)
    lo = np.where(rel, np.maximum(est - k * se, 0.0), 0.0)
    return BoundFunction(lam, hi), BoundFunction(lam, lo)


def sandwich_check(f1: EmpiricalCGF, budget, fn: EmpiricalCGF, n: int,
                   band: float = 2.0, lam_n_max: float = 0.2, quorum: float = 0.95) -> SandwichReport:
    """Check chain_minus(f1 - band*SE) <= fn <= chain_plus(f1 + band*SE) pointwise.

    ``budget`` holds C_1..C_{n-1}.  The tolerance per point is 2*SE(fn); the
    overall verdict needs ``quorum`` of the reliable points with lam*n <=
    ``lam_n_max`` to pass.
    """
    upper_f, lower_f = _band(f1, band)
    if isinstance(budget, ChainBudget):
        C = budget.C_list
    else:
        C = tuple(budget)
    if len(C) != n - 1:
        raise ValueError(f"need {n - 1} budgets to go from level 1 to level {n}")
    up = chain_plus(upper_f, C) if C else upper_f
    lo = chain_minus(lower_f, C) if C else lower_f
    lam = fn.lambda_grid
    pos = lam > 0
    lam = lam[pos]
    emp = fn.estimates[pos]
    se = fn.standard_errors[pos]
    U = up(lam)
    L = lo(lam)
    tol = 2.0 * se + 1e-12
    passed = (L - tol <= emp) & (emp <= U + tol)
    counted = fn.reliable[pos] & (lam * n <= lam_n_max)
    frac = float(passed[counted].mean()) if counted.any() else 0.0
    return SandwichReport(lam, L, emp, U, se, passed, counted, frac, bool(counted.any() and frac >= quorum))


# ----------------------------------------------------------- Theorem A --


@dataclass
class LimitEstimate:
    n_list: list
    lambdas: list
    values: np.ndarray
    errors: np.ndarray
    limit: float
    limit_se: float
    slope: float
    reliable: bool


def _fit_limit(n_list, values, errors):
    """Weighted least squares of values = a + b/n; returns (a, se(a), b)."""
    x = 1.0 / np.asarray(n_list, dtype=float)
    y = np.asarray(values, dtype=float)
    s = np.asarray(errors, dtype=float)
    if np.any(s <= 0):
        s = np.where(s <= 0, max(float(s.max()), 1e-300) if s.max() > 0 else 1.0, s)
    w = 1.0 / s**2
    X = np.stack([np.ones_like(x), x], axis=1)
    A = X.T @ (w[:, None] * X)
    coef = np.linalg.solve(A, X.T @ (w * y))
    cov = np.linalg.inv(A)
    return float(coef[0]), float(math.sqrt(cov[0, 0])), float(coef[1])


def theoremA_limit_estimate(spec: DuplicationChainSpec, n_list, stream, delta: float = 0.5,
                            samples: int | None = None) -> LimitEstimate:
    """Monte Carlo (1/2^n lam^2) ln E exp(lam X_n) along lam = delta/n, extrapolated in 1/n."""
    n_list = sorted(int(n) for n in n_list)
    vals, errs, lams = [], [], []
    reliable = True
    for n in n_list:
        lam = delta / n
        S = simulate_level(spec, n, stream, samples)
        est, se = symmetric_cgf(S, lam)
        ess = empirical_cgf(S, [lam, -lam]).reliable
        reliable &= bool(ess.all())
        norm = 2.0**n * lam * lam
        vals.append(est / norm)
        errs.append(se / norm)
        lams.append(lam)
    a, sa, b = _fit_limit(n_list, vals, errs)
    return LimitEstimate(n_list, lams, np.array(vals), np.array(errs), a, sa, b, reliable)


def theoremA_limit_analytic(spec: DuplicationChainSpec, n_list, delta: float = 0.5) -> LimitEstimate:
    """Same pipeline on the exact level CGFs (no sampling)."""
    n_list = sorted(int(n) for n in n_list)
    lams = [delta / n for n in n_list]
    vals = np.array([float(spec.analytic_cgf(n, lam)) / (2.0**n * lam * lam) for n, lam in zip(n_list, lams)])
    errs = np.ones_like(vals)
    a, _, b = _fit_limit(n_list, vals, errs)
    return LimitEstimate(n_list, lams, vals, np.zeros_like(vals), a, 0.0, b, True)
