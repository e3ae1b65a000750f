"""Exact and Monte-Carlo checks of the Gaussian inequalities.

Discrete checks run in 50-digit arithmetic (mpmath), so a reported violation
is a bug and not rounding.  Monte-Carlo checks are one-sided: they pass when
estimate - 3 SE stays below the bound.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math
from pathlib import Path

import mpmath
import numpy as np
from scipy.stats import ncx2

from . import fields
from .errors import ConditionDUncertified, QuadratureTooCoarse, UnreliableEstimate
from .rng import as_generator, sample_standard_complex

DPS = 50


def _mp():
    ctx = mpmath.mp.clone()
    ctx.dps = DPS
    return ctx


MP = _mp()
SLACK = MP.mpf("1e-30")


# ----------------------------------------------------- discrete laws --


@dataclass(frozen=True)
class DiscreteDistribution:
    """Finitely many atoms; expectations are exact sums in 50-digit arithmetic."""

    values: tuple
    probs: tuple

    def __post_init__(self):
        if len(self.values) != len(self.probs) or not self.values:
            raise ValueError("values and probs must be non-empty and of equal length")
        if any(MP.mpf(p) <= 0 for p in self.probs):
            raise ValueError("probabilities must be positive")
        if abs(MP.fsum(MP.mpf(p) for p in self.probs) - 1) > 1e-12:
            raise ValueError("probabilities must sum to 1")

    @classmethod
    def point(cls, x=0.0):
        return cls((x,), (1.0,))

    @classmethod
    def coin(cls, a: float):
        return cls((-a, a), (0.5, 0.5))

    def _atoms(self):
        total = MP.fsum(MP.mpf(p) for p in self.probs)
        return [(MP.mpf(v), MP.mpf(p) / total) for v, p in zip(self.values, self.probs)]

    def expect(self, fn):
        return MP.fsum(p * fn(v) for v, p in self._atoms())

    def mean(self):
        return self.expect(lambda v: v)

    def centered(self) -> "DiscreteDistribution":
        m = self.mean()
        return DiscreteDistribution(tuple(MP.mpf(v) - m for v in self.values), self.probs)

    def log_mgf(self, lam):
        lam = MP.mpf(lam)
        return MP.log(self.expect(lambda v: MP.exp(lam * v)))


def random_distribution(rng, max_atoms: int = 6, scale: float = 2.0, centered: bool = False) -> DiscreteDistribution:
    rng = as_generator(rng)
    k = int(rng.integers(1, max_atoms + 1))
    vals = rng.normal(0.0, scale, size=k)
    probs = rng.dirichlet(np.ones(k))
    probs = np.maximum(probs, 1e-6)
    d = DiscreteDistribution(tuple(float(v) for v in vals), tuple(float(p) for p in probs / probs.sum()))
    return d.centered() if centered else d


def _f(x) -> float:
    return float(x)


@dataclass
class ExactReport:
    passed: bool | None
    quantities: dict
    margins: dict
    precondition_met: bool = True

    def as_dict(self):
        return {
            "passed": self.passed,
            "precondition_met": self.precondition_met,
            "quantities": {k: _f(v) for k, v in self.quantities.items()},
            "margins": {k: _f(v) for k, v in self.margins.items()},
        }


def holder_split_check(X: DiscreteDistribution, Y: DiscreteDistribution, p: float) -> ExactReport:
    """Both sides of the Hoelder split for independent X, Y, evaluated exactly."""
    if p <= 1:
        raise ValueError("p must exceed 1")
    p = MP.mpf(p)
    q = p - 1
    lower = p * X.log_mgf(1 / p) - q * Y.log_mgf(-1 / q)
    middle = X.log_mgf(1) + Y.log_mgf(1)  # independence: ln E e^{X+Y} factorises
    joint = MP.log(MP.fsum(px * py * MP.exp(x + y) for x, px in X._atoms() for y, py in Y._atoms()))
    upper = X.log_mgf(p) / p + (q / p) * Y.log_mgf(p / q)
    tol = SLACK * (1 + abs(joint))
    m_lo, m_hi = joint - lower, upper - joint
    return ExactReport(
        bool(m_lo >= -tol and m_hi >= -tol),
        {"lower": lower, "middle": joint, "middle_factorised": middle, "upper": upper},
        {"lower": m_lo, "upper": m_hi},
    )


def cosh_contraction_check(X: DiscreteDistribution, C: float, lam: float) -> ExactReport:
    if not -1 <= lam <= 1:
        raise ValueError("lambda must lie in [-1, 1]")
    C, lam = MP.mpf(C), MP.mpf(lam)
    ec = X.expect(MP.cosh)
    pre = ec <= MP.cosh(C) * (1 + SLACK)
    lhs = X.expect(lambda v: MP.cosh(lam * v))
    rhs = MP.cosh(lam * C)
    q = {"E_cosh_X": ec, "cosh_C": MP.cosh(C), "lhs": lhs, "rhs": rhs}
    if not pre:
        return ExactReport(None, q, {}, precondition_met=False)
    margin = rhs - lhs
    return ExactReport(bool(margin >= -SLACK * rhs), q, {"bound": margin})


def _ratio(x):
    """ln(2 cosh x - 1) / x^2, written to stay accurate near 0."""
    x = np.asarray(x, float)
    return np.log1p(4.0 * np.sinh(0.5 * x) ** 2) / (x * x)


@dataclass
class SubgaussianConstant:
    value: float
    argmax: float
    grid_max: float
    grid_argmax: float
    limit_at_zero: float
    refinement_change: float

    def as_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def subgaussian_constant(n_grid: int = 10**6, x_max: float = 50.0) -> SubgaussianConstant:
    """sup over x in (0, x_max] of ln(2 cosh x - 1) / x^2.

    The grid is logarithmic, so it crowds towards 0 where the supremum sits.
    The ratio is 1 - 5 x^2 / 12 + O(x^4) there, so the sup is the limit 1 at
    0+ and is not attained.
    """
    def scan(n):
        x = np.geomspace(1e-8, x_max, n)
        r = _ratio(x)
        i = int(np.argmax(r))
        return float(r[i]), float(x[i])

    gmax, garg = scan(n_grid)
    gmax2, _ = scan(2 * n_grid)
    limit = 1.0
    value = max(gmax, limit)
    argmax = 0.0 if value == limit else garg
    return SubgaussianConstant(value, argmax, gmax, garg, limit, abs(gmax2 - gmax) / value)


def subgaussian_bound_check(X: DiscreteDistribution, C: float | None = None, lam_grid=None,
                            A: float | None = None) -> ExactReport:
    """E e^{lam X} <= exp(A C^2 lam^2) for centred X with E e^{|X|} <= cosh C.

    C defaults to arccosh(E e^{|X|}), the smallest admissible value.
    """
    A = MP.mpf(subgaussian_constant().value if A is None else A)
    lam_grid = np.linspace(-1, 1, 41) if lam_grid is None else lam_grid
    mean = X.mean()
    ea = X.expect(lambda v: MP.exp(abs(v)))
    C = MP.acosh(ea) if C is None else MP.mpf(C)
    pre = abs(mean) <= MP.mpf("1e-40") and ea <= MP.cosh(C) * (1 + SLACK)
    q = {"E_exp_abs": ea, "C": C, "mean": mean}
    if not pre:
        return ExactReport(None, q, {}, precondition_met=False)
    worst = None
    for lam in lam_grid:
        lam = MP.mpf(float(lam))
        lhs = X.log_mgf(lam)
        rhs = A * C * C * lam * lam
        m = rhs - lhs
        worst = m if worst is None else min(worst, m)
    return ExactReport(bool(worst >= -SLACK), q, {"min_log_margin": worst})


# --------------------------------------------------------- Jensen --


@dataclass
class McReport:
    passed: bool
    lhs: float
    rhs: float
    se: float
    extra: dict = field(default_factory=dict)

    def as_dict(self):
        d = {"passed": self.passed, "lhs": self.lhs, "rhs": self.rhs, "se": self.se}
        d.update(self.extra)
        return d


def jensen_average_check(samples, r: float, lam: float, check_quadrature: bool = True) -> McReport:
    """E exp((lam/r)|int_0^r X|) <= (1/r) int_0^r E exp(lam |X_t|) dt.

    ``samples`` has shape (M, n) on the uniform grid of [0, r].  With
    trapezoid weights the inequality holds sample by sample, so the SE is
    that of the per-sample difference.  The quadrature error of the right
    side is estimated by comparing steps h and 2h (n odd).
    """
    X = np.asarray(samples, float)
    M, n = X.shape
    h = r / (n - 1)
    w = fields.trapezoid_weights(n, h)
    lhs_i = np.exp(lam / r * np.abs(X @ w))
    E = np.exp(lam * np.abs(X))
    rhs_i = E @ w / r
    diff = rhs_i - lhs_i
    se = float(diff.std(ddof=1) / math.sqrt(M)) if M > 1 else 0.0
    se_rhs = float(rhs_i.std(ddof=1) / math.sqrt(M)) if M > 1 else 0.0
    quad_err = None
    if (n - 1) % 2 == 0 and n >= 3:
        w2 = fields.trapezoid_weights((n + 1) // 2, 2 * h)
        quad_err = abs(float(np.mean(rhs_i) - np.mean(E[:, ::2] @ w2 / r))) / 3
        if check_quadrature and quad_err > se_rhs and quad_err > 1e-12 * abs(np.mean(rhs_i)):
            raise QuadratureTooCoarse(f"quadrature error {quad_err:.3g} exceeds SE {se_rhs:.3g}")
    lhs, rhs = float(lhs_i.mean()), float(rhs_i.mean())
    return McReport(bool(lhs - 3 * se <= rhs), lhs, rhs, se,
                    {"quadrature_error": quad_err, "margin": rhs - lhs, "min_pathwise_margin": float(diff.min())})


# ------------------------------------------------------------ B5 --


@dataclass(frozen=True)
class GaussianBump:
    """f(z) = height * exp(-|z - c|^2 / s^2)."""

    center: complex = 0j
    width: float = 1.0
    height: float = 1.0

    def __call__(self, z):
        return self.height * np.exp(-np.abs(np.asarray(z) - self.center) ** 2 / self.width ** 2)

    def smoothed(self, y):
        s2 = self.width ** 2
        return self.height * s2 / (1 + s2) * np.exp(-np.abs(np.asarray(y) - self.center) ** 2 / (1 + s2))

    def sup_smoothed(self) -> float:
        return float(self.smoothed(self.center))


@dataclass(frozen=True)
class DiskIndicator:
    center: complex = 0j
    radius: float = 1.0

    def __call__(self, z):
        return (np.abs(np.asarray(z) - self.center) <= self.radius).astype(float)

    def smoothed(self, y):
        d2 = np.abs(np.asarray(y) - self.center) ** 2
        return ncx2.cdf(2 * self.radius ** 2, 2, 2 * d2)

    def sup_smoothed(self) -> float:
        return float(_grid_sup(self, self.center, self.radius + 6.0, sup_f=1.0))

    def tail_bound(self, d: float) -> float:
        """Bound on the smoothed value at distance >= d from the centre."""
        return math.exp(-max(d - self.radius, 0.0) ** 2)


@dataclass(frozen=True)
class GridFunction:
    """A general bounded f >= 0 vanishing outside a disk; smoothing by Gauss-Hermite."""

    fn: object
    sup_value: float
    center: complex = 0j
    support_radius: float = 1.0
    nodes: int = 48

    def __call__(self, z):
        return self.fn(np.asarray(z, complex))

    def smoothed(self, y):
        x, w = np.polynomial.hermite.hermgauss(self.nodes)
        Z = (x[:, None] + 1j * x[None, :]).ravel()
        W = np.outer(w, w).ravel() / math.pi
        y = np.atleast_1d(np.asarray(y, complex))
        return (self.fn(y[:, None] + Z[None, :]) * W).sum(axis=1)

    def sup_smoothed(self) -> float:
        return float(_grid_sup(self, self.center, self.support_radius + 6.0, sup_f=self.sup_value))

    def tail_bound(self, d: float) -> float:
        return self.sup_value * math.exp(-max(d - self.support_radius, 0.0) ** 2)


def _grid_sup(f, center, half_width: float, sup_f: float, n: int = 41, tol: float = 1e-3,
              max_levels: int = 30, max_cells: int = 200_000) -> float:
    """Rigorous upper bound on sup_y of the smoothed function by branch and bound.

    |grad (f * gamma)| <= sup f * 2 / sqrt(pi), so a square cell of half-side
    d is bounded by its centre value plus that constant times d * sqrt(2).
    Cells that cannot beat the best value found by more than ``tol`` are
    dropped, the rest are split in four.  Outside the box the tail bound holds.
    """
    lip = sup_f * 2 / math.sqrt(math.pi)
    d = half_width / n
    ax = -half_width + d * (2 * np.arange(n) + 1)
    cells = (center + ax[:, None] + 1j * ax[None, :]).ravel()
    best = -np.inf
    for _ in range(max_levels):
        g = np.asarray(f.smoothed(cells), float)
        best = max(best, float(g.max()))
        ub = g + lip * d * math.sqrt(2)
        keep = ub > best + tol
        if not keep.any():
            break
        if 4 * keep.sum() > max_cells:
            return max(float(ub.max()), f.tail_bound(half_width))
        cells = cells[keep]
        d *= 0.5
        off = d * np.array([1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j])
        cells = (cells[:, None] + off[None, :]).ravel()
    else:
        return max(float(ub.max()), f.tail_bound(half_width))
    return max(best + tol, f.tail_bound(half_width))


def gram_lambda_min(X) -> float:
    X = np.asarray(X, complex)
    G = X @ X.conj().T
    return float(np.linalg.eigvalsh(0.5 * (G + G.conj().T)).min())


def b5_check(X, fs, M: int, stream, chunk: int = 20000) -> McReport:
    """int gamma^N(du) prod f_k(<x_k, u>) against prod sup_y int gamma^1(dz) f_k(y + z)."""
    X = np.asarray(X, complex)
    if X.ndim == 1:
        X = X[None, :]
    n, N = X.shape
    rng = as_generator(stream)
    vals = []
    for start in range(0, M, chunk):
        sz = min(chunk, M - start)
        u = sample_standard_complex(rng, N, size=sz)
        proj = u.conj() @ X.T  # <x_k, u>
        prod = np.ones(sz)
        for k, f in enumerate(fs):
            prod *= f(proj[:, k])
        vals.append(prod)
    v = np.concatenate(vals)
    lhs = float(v.mean())
    se = float(v.std(ddof=1) / math.sqrt(M))
    sups = [float(f.sup_smoothed()) for f in fs]
    rhs = float(np.prod(sups))
    lmin = gram_lambda_min(X)
    return McReport(bool(lhs - 3 * se <= rhs), lhs, rhs, se,
                    {"gram_lambda_min": lmin, "hypothesis_met": lmin >= 1 - 1e-10, "sups": sups})


# ------------------------------------------------------------ B4 --


@dataclass
class CloseMeasureInstance:
    """Vectors x_k = y_k (+) z_k with certified closeness constants A, B."""

    Y: np.ndarray  # (K, m)
    Z: np.ndarray  # (K, n)
    A: float | None = None
    B: float | None = None

    def __post_init__(self):
        self.Y = np.atleast_2d(np.asarray(self.Y, complex))
        self.Z = np.atleast_2d(np.asarray(self.Z, complex))
        if self.Y.shape[0] != self.Z.shape[0]:
            raise ValueError("Y and Z need the same number of rows")
        a = math.fsum(np.linalg.norm(self.Z, axis=1))
        if self.A is None:
            self.A = a
        if self.B is None:
            self.B = self.b_certificate()

    @property
    def K(self) -> int:
        return self.Y.shape[0]

    def b_certificate(self) -> float:
        smax = float(np.linalg.svd(self.Z, compute_uv=False).max()) if self.Z.size else 0.0
        return min(float(self.A), math.sqrt(self.K) * smax)

    def gram_lambda_min(self) -> float:
        return gram_lambda_min(np.concatenate([self.Y, self.Z], axis=1))

    def conditions(self) -> dict:
        a = math.fsum(np.linalg.norm(self.Z, axis=1))
        return {
            "a": a <= self.A,
            "b": self.B >= self.b_certificate() * (1 - 1e-12),
            "c": self.gram_lambda_min() >= 1 - 1e-10,
        }

    @property
    def bound_log(self) -> float:
        return math.pi * (self.A + self.B ** 2)

    def write(self, path) -> None:
        """Plain text: 'K m n' then one row per k with y_k and z_k as interleaved re/im."""
        m, n = self.Y.shape[1], self.Z.shape[1]
        lines = [f"{self.K} {m} {n}"]
        for k in range(self.K):
            row = np.concatenate([self.Y[k], self.Z[k]])
            lines.append(" ".join(f"{float(v.real)!r} {float(v.imag)!r}" for v in row.astype(complex)))
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def read(cls, path) -> "CloseMeasureInstance":
        rows = [ln.split("#")[0].split() for ln in Path(path).read_text().splitlines()]
        rows = [r for r in rows if r]
        K, m, n = (int(v) for v in rows[0])
        data = np.array([[float(v) for v in r] for r in rows[1:1 + K]])
        if data.shape != (K, 2 * (m + n)):
            raise ValueError(f"expected {K} rows of {2 * (m + n)} numbers")
        c = data[:, 0::2] + 1j * data[:, 1::2]
        return cls(c[:, :m], c[:, m:])


def b4_check(inst: CloseMeasureInstance, M: int, stream, chunk: int = 20000, strict: bool = True) -> McReport:
    """E exp sum_k ln+ |<y_k,u> + <z_k,v>| / |<y_k,u> + <z_k,w>| against exp(pi (A + B^2))."""
    rng = as_generator(stream)
    m, n = inst.Y.shape[1], inst.Z.shape[1]
    S = []
    for start in range(0, M, chunk):
        sz = min(chunk, M - start)
        u = sample_standard_complex(rng, m, size=sz)
        v = sample_standard_complex(rng, n, size=sz)
        w = sample_standard_complex(rng, n, size=sz)
        a = u.conj() @ inst.Y.T
        num = np.abs(a + v.conj() @ inst.Z.T)
        den = np.abs(a + w.conj() @ inst.Z.T)
        with np.errstate(divide="ignore", invalid="ignore"):
            lr = np.log(num) - np.log(den)
        lr = np.where(num == den, 0.0, lr)
        S.append(np.maximum(lr, 0.0).sum(axis=1))
    S = np.concatenate(S)
    est, se, ess = fields._exp_summary(S)
    reliable = ess >= 0.01 * M
    extra = {"ess": ess, "reliable": reliable, "bound_log": inst.bound_log, "A": inst.A, "B": inst.B,
             "conditions": inst.conditions()}
    if strict and not reliable:
        raise UnreliableEstimate(f"effective sample size {ess:.1f} of {M}")
    lo = est - 3 * se
    passed = lo <= 0 or math.log(lo) <= inst.bound_log + 1e-12
    return McReport(bool(passed), est, math.exp(min(inst.bound_log, 700.0)), se, extra)


# -------------------------------------------------------- Th. 3.1 --


def th31_tail_bound(T1: float, T2: float) -> float:
    """Bound on the mean of int_{T1}^{T2} ln+ for the 1-d instance (eta variance Phi(-t/2))."""
    return fields.lnplus_tail_bound(lambda t: fields.Phi(-0.5 * t), T1, T2)


def th31_estimate(M: int, stream, T: float = 4.0, h: float = 1.0 / 16, instance=None,
                  zero_eta: bool = False, chunk: int = 1000, strict: bool = False) -> McReport:
    """E exp int_0^T ln+(|xi + eta'| / |xi + eta|) dt for the 1-d split process.

    The processes are sampled at s = t/4.  Values at T/2 and at step 2h come
    from the same samples for the monotonicity and step diagnostics.
    """
    inst = fields.th31_instance(T, h) if instance is None else instance
    n = int(round(T / h))
    t = np.arange(n + 1) * h
    w = fields.trapezoid_weights(n + 1, h)
    half = n // 2
    wh = fields.trapezoid_weights(half + 1, h)
    w2 = fields.trapezoid_weights(half + 1, 2 * h) if n % 2 == 0 else None
    I, Ih, I2 = [], [], []
    if zero_eta:
        I = [np.zeros(M)]
        Ih = [np.zeros(M)]
        I2 = [np.zeros(M)]
    else:
        for start in range(0, M, chunk):
            sz = min(chunk, M - start)
            S = fields.sample_split_1d(t / 4, stream, sz, start)
            xi = S.xi(1, 1)
            num = np.abs(xi + S.xi(-1, 1))
            den = np.abs(xi + S.xi(-1, -1))
            with np.errstate(divide="ignore"):
                g = np.maximum(np.log(num) - np.log(den), 0.0)
            I.append(g @ w)
            Ih.append(g[:, : half + 1] @ wh)
            if w2 is not None:
                I2.append(g[:, ::2] @ w2)
    I = np.concatenate(I)
    est, se, ess = fields._exp_summary(I)
    est_half = fields._exp_summary(np.concatenate(Ih))[0]
    est_coarse = fields._exp_summary(np.concatenate(I2))[0] if I2 else float("nan")
    reliable = ess >= 0.01 * M
    if strict and not reliable:
        raise UnreliableEstimate(f"effective sample size {ess:.1f} of {M}")
    lo = est - 3 * se
    passed = lo <= 0 or math.log(lo) <= inst.bound_log
    extra = {"ess": ess, "reliable": reliable, "estimate_half_T": est_half, "estimate_2h": est_coarse,
             "mean_integral": float(I.mean()), "bound_log": inst.bound_log, "R": inst.R, "C": inst.C,
             "certified": inst.certified}
    rep = McReport(bool(passed), est, math.exp(min(inst.bound_log, 700.0)), se, extra)
    rep.integrals = I
    if not inst.certified:
        err = ConditionDUncertified(f"lambda_min * R^2 = {inst.gram_lambda_min * inst.R ** 2:.6g} < 1")
        err.report = rep
        raise err
    return rep
