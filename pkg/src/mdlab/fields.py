"""Split Gaussian processes on the line and fields on the plane.

1-d: the kernel Xi(t)(s) = (2/pi)^{1/4} exp(-(s-t)^2) has
<Xi(s), Xi(t)> = exp(-(s-t)^2/2).  Cutting it at s = 0 gives two half-kernels
whose Gram matrices are Phi(-s-t) exp(-(s-t)^2/2) and Phi(s+t) exp(-(s-t)^2/2).

2-d: Xi(t)(r) = pi^{-1/2} exp(-i t^r - |r-t|^2/2) (t^r = t1 r2 - t2 r1) has
<Xi(s), Xi(t)> = exp(-i s^t - |s-t|^2/2); cutting along both axes gives four
quadrant kernels.  Points of the plane are complex numbers throughout.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
import hashlib
import math

import mpmath
import numpy as np
from scipy.special import erfc, gammaln, ndtr

from .rng import as_generator, covariance_factor, sample_standard_complex

EULER_GAMMA = float(np.euler_gamma)
GL_NODES = 160
TAIL_WIDTH = 6.0
SIGNS = (-1, 1)


def _sidx(sign: int) -> int:
    return 0 if sign < 0 else 1


# ------------------------------------------------------------------ 1-d --


def Phi(x):
    """Standard normal CDF."""
    return ndtr(x)


def cov_exact_1d(s, t):
    return np.exp(-0.5 * (np.asarray(s) - np.asarray(t)) ** 2)


def cov_minus_1d(s, t):
    s, t = np.asarray(s, float), np.asarray(t, float)
    return Phi(-s - t) * np.exp(-0.5 * (s - t) ** 2)


def cov_plus_1d(s, t):
    s, t = np.asarray(s, float), np.asarray(t, float)
    return Phi(s + t) * np.exp(-0.5 * (s - t) ** 2)


def kernel_1d(t, s):
    return (2 / math.pi) ** 0.25 * np.exp(-((np.asarray(s) - np.asarray(t)) ** 2))


@lru_cache(maxsize=32)
def _gl(n: int):
    return np.polynomial.legendre.leggauss(n)


def half_line_nodes(L: float, side: int, n: int = GL_NODES):
    """Gauss-Legendre nodes/weights on [-L, 0] (side < 0) or [0, L] (side > 0)."""
    x, w = _gl(n)
    r = 0.5 * L * (x + 1.0)
    return (r if side > 0 else -r), 0.5 * L * w


def kernel_matrix_1d(points, side: int | None, L: float | None = None, n: int = GL_NODES):
    """Rows Xi_side(t)(r) * sqrt(w) over quadrature nodes; V V^T is the Gram matrix."""
    pts = np.atleast_1d(np.asarray(points, float))
    L = (np.abs(pts).max() + TAIL_WIDTH) if L is None else L
    if side is None:
        mats = [kernel_matrix_1d(pts, s, L, n) for s in SIGNS]
        return np.concatenate(mats, axis=1)
    r, w = half_line_nodes(L, side, n)
    return kernel_1d(pts[:, None], r[None, :]) * np.sqrt(w)[None, :]


def quad_inner_1d(s, t, side: int | None = None, n: int = GL_NODES) -> np.ndarray:
    """<Xi_side(s), Xi_side(t)> by quadrature (side None = whole line)."""
    s = np.atleast_1d(np.asarray(s, float))
    t = np.atleast_1d(np.asarray(t, float))
    L = max(np.abs(s).max(), np.abs(t).max()) + TAIL_WIDTH
    return kernel_matrix_1d(s, side, L, n) @ kernel_matrix_1d(t, side, L, n).T


def _grid_key(points) -> str:
    a = np.ascontiguousarray(points)
    return hashlib.sha1(a.tobytes() + str(a.dtype).encode()).hexdigest()


_FACTOR_CACHE: dict = {}


def _cached_factor(tag, points, build):
    key = (tag, _grid_key(points))
    if key not in _FACTOR_CACHE:
        K = build()
        _FACTOR_CACHE[key] = (K, covariance_factor(K))
    return _FACTOR_CACHE[key]


def split_covariances_1d(grid):
    """(K_minus, K_plus) on the grid by quadrature, each PSD by construction."""
    grid = np.asarray(grid, float)
    out = []
    for side in SIGNS:
        def build(side=side):
            V = kernel_matrix_1d(grid, side)
            return V @ V.T
        out.append(_cached_factor(("1d", side), grid, build))
    return out


@dataclass
class SplitGaussian1D:
    """Four independent half-kernel processes on a grid, shape (M, n) each.

    ``comps[a, b]`` holds xi_a^b with index 0 for '-' and 1 for '+'.
    """

    grid: np.ndarray
    comps: np.ndarray  # (2, 2, M, n) complex

    def xi(self, a: int, b: int) -> np.ndarray:
        return self.comps[_sidx(a), _sidx(b)]

    def combined(self, b_minus: int, b_plus: int) -> np.ndarray:
        """xi_-^{b_minus} + xi_+^{b_plus}."""
        return self.xi(-1, b_minus) + self.xi(1, b_plus)

    def X(self, which: str) -> np.ndarray:
        pairs = {"0": (-1, 1), "-": (-1, -1), "+": (1, 1)}
        bm, bp = pairs[which]
        with np.errstate(divide="ignore"):
            return np.log(np.abs(self.combined(bm, bp))) + 0.5 * EULER_GAMMA

    @staticmethod
    def component_sets():
        return {"0": {(-1, -1), (1, 1)}, "-": {(-1, -1), (1, -1)}, "+": {(-1, 1), (1, 1)}}


def sample_split_1d(grid, stream, size: int = 1, first_index: int = 0) -> SplitGaussian1D:
    """``size`` independent draws; draw i uses stream.child(first_index + i)."""
    grid = np.asarray(grid, float)
    (_, Lm), (_, Lp) = split_covariances_1d(grid)
    n = grid.size
    comps = np.empty((2, 2, size, n), dtype=np.complex128)
    for i in range(size):
        g = sample_standard_complex(stream.child(first_index + i), 4 * Lm.shape[1]).reshape(4, -1)
        comps[0, 0, i] = Lm @ g[0]
        comps[0, 1, i] = Lm @ g[1]
        comps[1, 0, i] = Lp @ g[2]
        comps[1, 1, i] = Lp @ g[3]
    return SplitGaussian1D(grid, comps)


def trapezoid_weights(n: int, h: float) -> np.ndarray:
    w = np.full(n, h)
    if n:
        w[0] = w[-1] = 0.5 * h
    if n == 1:
        w[0] = 0.0
    return w


B_LNPLUS = 2 ** 0.75 * math.exp(0.75 * gammaln(1.0 / 3.0))


def lnplus_tail_bound(variance_fn, a: float, b: float, n: int = 2001) -> float:
    """Integral over [a, b] of 2^{3/4} Gamma(1/3)^{3/4} sqrt(v(t)).

    Bounds the mean of ln+ |x + e'| / |x + e| when e, e' are i.i.d. complex
    Gaussians of variance v(t) independent of x and x + e has variance 1.
    """
    if b <= a:
        return 0.0
    t = np.linspace(a, b, n)
    f = B_LNPLUS * np.sqrt(variance_fn(t))
    # the integrand decreases on the half-lines used here; right Riemann sums would
    # undercount, so take the left sum which is an upper bound for decreasing f
    return float(np.sum(f[:-1]) * (t[1] - t[0]))


@dataclass
class ExpIntegralReport:
    estimate: float
    se: float
    ess: float
    samples: int
    estimate_coarse: float
    inner_estimate: float | None
    mean_increment: float | None
    tail_bound: float | None
    reliable: bool

    def as_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _exp_summary(I):
    I = np.asarray(I, float)
    m = I.max()
    w = np.exp(I - m)
    est = w.mean() * math.exp(m)
    se = w.std(ddof=1) / math.sqrt(I.size) * math.exp(m) if I.size > 1 else 0.0
    ess = w.sum() ** 2 / (w * w).sum()
    return float(est), float(se), float(ess)


def def_c_estimate(T: float, h: float, M: int, stream, chunk: int = 500) -> ExpIntegralReport:
    """E exp( int_{-T}^0 |X^- - X^0| + int_0^T |X^+ - X^0| ) by MC and trapezoid rule.

    The same samples also give the value at step 2h and on [-T/2, T/2]; the
    mean increment between the two windows is compared with the tail bound.
    """
    if T <= 0:
        return ExpIntegralReport(1.0, 0.0, float(M), M, 1.0, 1.0, 0.0, 0.0, True)
    n = int(round(T / h))
    t = np.arange(-n, n + 1) * h
    w = trapezoid_weights(n + 1, h)
    half = n // 2
    I, Ic, Iin = [], [], []
    for start in range(0, M, chunk):
        sz = min(chunk, M - start)
        S = sample_split_1d(t, stream, sz, start)
        X0, Xm, Xp = S.X("0"), S.X("-"), S.X("+")
        left = np.abs(Xm[:, : n + 1] - X0[:, : n + 1])  # t in [-T, 0]
        right = np.abs(Xp[:, n:] - X0[:, n:])  # t in [0, T]
        I.append(left @ w[::-1] + right @ w)
        wc = trapezoid_weights(half + 1, 2 * h) if n % 2 == 0 else None
        if wc is not None:
            Ic.append(left[:, ::2] @ wc[::-1] + right[:, ::2] @ wc)
        wi = trapezoid_weights(half + 1, h)
        Iin.append(left[:, n - half:] @ wi[::-1] + right[:, : half + 1] @ wi)
    I = np.concatenate(I)
    est, se, ess = _exp_summary(I)
    coarse = _exp_summary(np.concatenate(Ic))[0] if Ic else float("nan")
    Iin = np.concatenate(Iin)
    inner = _exp_summary(Iin)[0]
    inc = float(np.mean(I - Iin))
    tail = 2 * 2 * lnplus_tail_bound(lambda x: Phi(-2 * x), half * h, n * h)
    return ExpIntegralReport(est, se, ess, M, coarse, inner, inc, tail, ess >= 0.01 * M)


# ------------------------------------------------- Fourier certificate --


def theta_sum(lam, period: float, lmax: int = 6):
    lam = np.asarray(lam, float)
    l = np.arange(-lmax, lmax + 1)
    return np.exp(-0.5 * (lam[..., None] + period * l) ** 2).sum(axis=-1)


def theta_remainder(period: float, lmax: int = 6) -> float:
    """Bound on the terms |l| > lmax for lam in [0, period]."""
    j = np.arange(lmax, lmax + 50)
    return float(2 * np.exp(-0.5 * (period * j) ** 2).sum())


def lattice_gram_lambda_min(step: float, K: int, dps: int = 80) -> float:
    """Smallest eigenvalue of [exp(-(step (k - k'))^2 / 2)]_{k,k'=0..K} in high precision."""
    mpmath.mp.dps = dps
    try:
        G = mpmath.matrix(K + 1, K + 1)
        for i in range(K + 1):
            for j in range(K + 1):
                G[i, j] = mpmath.exp(-mpmath.mpf(step * (i - j)) ** 2 / 2)
        ev = mpmath.eigsy(G, eigvals_only=True)
        return float(min(ev))
    finally:
        mpmath.mp.dps = 15


@dataclass
class FourierBound:
    step: float
    period: float
    c_min: float
    R: float
    argmin: float
    remainder: float
    gram_lambda_min: float | None
    K_lattice: int | None

    @property
    def consistent(self) -> bool | None:
        if self.gram_lambda_min is None:
            return None
        return self.c_min <= self.gram_lambda_min

    def as_dict(self):
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["consistent"] = self.consistent
        return d


def fourier_lower_bound(step: float = 0.25, K_lattice: int | None = 32, n_grid: int = 4097) -> FourierBound:
    """c_min = (2 pi)^{-1/2} P inf_{lam in (0, P)} sum_l exp(-(lam + P l)^2 / 2), P = 2 pi / step."""
    P = 2 * math.pi / step
    lam = np.linspace(0, P, n_grid)[1:-1]
    th = theta_sum(lam, P)
    i = int(np.argmin(th))
    a, b = lam[max(i - 1, 0)], lam[min(i + 1, lam.size - 1)]
    gr = (math.sqrt(5) - 1) / 2
    for _ in range(100):
        c, d = b - gr * (b - a), a + gr * (b - a)
        if theta_sum(c, P) <= theta_sum(d, P):
            b = d
        else:
            a = c
    x = 0.5 * (a + b)
    inf_th = min(float(theta_sum(x, P)), float(th[i]))
    c_min = P / math.sqrt(2 * math.pi) * inf_th
    gl = lattice_gram_lambda_min(step, K_lattice) if K_lattice is not None else None
    return FourierBound(step, P, c_min, c_min ** -0.5, x, theta_remainder(P), gl, K_lattice)


# ------------------------------------------------------------------ 2-d --


def wedge(s, t):
    """s ^ t = s1 t2 - s2 t1 for points given as complex numbers."""
    return np.imag(np.conj(s) * t)


def cov_field_2d(s, t):
    s = np.asarray(s, complex)
    t = np.asarray(t, complex)
    return np.exp(-1j * wedge(s, t) - 0.5 * np.abs(s - t) ** 2)


def kernel_2d(t, r):
    t = np.asarray(t, complex)
    r = np.asarray(r, complex)
    return np.exp(-1j * wedge(t, r) - 0.5 * np.abs(r - t) ** 2) / math.sqrt(math.pi)


def _half_integral(a, m, side):
    """int over the half-line of exp(i a r - (r - m)^2) dr in closed form."""
    c = m + 0.5j * a
    pref = np.exp(1j * a * m - 0.25 * a * a) * (0.5 * math.sqrt(math.pi))
    return pref * (erfc(-c) if side > 0 else erfc(c))


def quadrant_cov_exact(s, t, a1: int, a2: int):
    """<Xi_{a1,a2}(s), Xi_{a1,a2}(t)> via complementary error functions."""
    s = np.asarray(s, complex)
    t = np.asarray(t, complex)
    d = s - t
    m = 0.5 * (s + t)
    j1 = _half_integral(d.imag, m.real, a1)
    j2 = _half_integral(-d.real, m.imag, a2)
    return np.exp(-0.25 * np.abs(d) ** 2) * j1 * j2 / math.pi


def _quadrant_factor_matrices(points, a1, a2, L, n):
    """Per-axis pieces of the kernel so that Gram = sum over nodes (separable)."""
    r1, w1 = half_line_nodes(L, a1, n)
    r2, w2 = half_line_nodes(L, a2, n)
    return r1, w1, r2, w2


def quad_inner_2d(s, t, a1: int | None = None, a2: int | None = None, n: int = GL_NODES):
    """Quadrant (or whole-plane if a1 is None) inner products by tensor Gauss-Legendre.

    The integrand factorises over the two coordinates of the integration
    variable, so the double integral is a product of two 1-d quadratures.
    """
    s = np.atleast_1d(np.asarray(s, complex))[:, None]
    t = np.atleast_1d(np.asarray(t, complex))[None, :]
    L = max(np.abs(s).max(), np.abs(t).max()) + TAIL_WIDTH
    if a1 is None:
        return sum(quad_inner_2d(s[:, 0], t[0], b1, b2, n) for b1 in SIGNS for b2 in SIGNS)
    r1, w1 = half_line_nodes(L, a1, n)
    r2, w2 = half_line_nodes(L, a2, n)
    d = s - t
    m = 0.5 * (s + t)
    # exp(-i d^r - |r - m|^2 - |d|^2/4) with d^r = d1 r2 - d2 r1
    f1 = (np.exp(1j * d.imag[..., None] * r1 - (r1 - m.real[..., None]) ** 2) * w1).sum(-1)
    f2 = (np.exp(-1j * d.real[..., None] * r2 - (r2 - m.imag[..., None]) ** 2) * w2).sum(-1)
    return np.exp(-0.25 * np.abs(d) ** 2) * f1 * f2 / math.pi


def quadrant_covariances_2d(points):
    """Covariance matrices and factors of the four quadrant fields on the points."""
    points = np.asarray(points, complex)
    out = {}
    for a1 in SIGNS:
        for a2 in SIGNS:
            def build(a1=a1, a2=a2):
                K = quad_inner_2d(points, points, a1, a2)
                return 0.5 * (K + K.conj().T)
            out[(a1, a2)] = _cached_factor(("2d", a1, a2), points, build)
    return out


def square_grid(T: float, h: float) -> tuple[np.ndarray, np.ndarray]:
    """Points of [-T, T]^2 with step h, flattened, plus the 1-d axis."""
    n = int(round(T / h))
    ax = np.arange(-n, n + 1) * h
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    return (X + 1j * Y).ravel(), ax


@dataclass
class SplitGaussian2D:
    """Sixteen independent quadrant fields, ``comps[a1, a2, b1, b2]`` of shape (M, n)."""

    points: np.ndarray
    comps: np.ndarray  # (2, 2, 2, 2, M, n)
    alpha: float

    @staticmethod
    def component_set(k: int, l: int) -> set:
        out = set()
        for a1 in SIGNS:
            for a2 in SIGNS:
                out.add((a1, a2, a1 if k == 0 else k, a2 if l == 0 else l))
        return out

    def xi(self, k: int, l: int) -> np.ndarray:
        """Recombined complex field feeding X^{k,l}."""
        acc = 0
        for a1, a2, b1, b2 in sorted(self.component_set(k, l)):
            acc = acc + self.comps[_sidx(a1), _sidx(a2), _sidx(b1), _sidx(b2)]
        return acc

    def X(self, k: int, l: int) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return self.alpha * np.log(np.abs(self.xi(k, l))) + 0.5 * self.alpha * EULER_GAMMA


def sample_split_2d(points, alpha: float, stream, size: int = 1, first_index: int = 0) -> SplitGaussian2D:
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    points = np.asarray(points, complex)
    facs = quadrant_covariances_2d(points)
    n = points.size
    comps = np.empty((2, 2, 2, 2, size, n), dtype=np.complex128)
    order = [(a1, a2) for a1 in SIGNS for a2 in SIGNS]
    for i in range(size):
        rng = as_generator(stream.child(first_index + i))
        for a1, a2 in order:
            Lf = facs[(a1, a2)][1]
            g = sample_standard_complex(rng, Lf.shape[1], size=4)  # one per (b1, b2)
            vals = g @ Lf.T
            comps[_sidx(a1), _sidx(a2), :, :, i] = vals.reshape(2, 2, n)
    return SplitGaussian2D(points, comps, alpha)


def defE3_c3_estimate(T: float, h: float, M: int, stream, alpha: float, chunk: int = 250,
                      alphas_extra=()) -> dict:
    """E exp of the (c3) double integral, with step-2h and half-window companions.

    ``alphas_extra`` re-weights the same samples at other coefficients (the
    integrand is linear in alpha).
    """
    if T <= 0:
        rep = ExpIntegralReport(1.0, 0.0, float(M), M, 1.0, 1.0, 0.0, None, True)
        return {"report": rep, "by_alpha": {float(alpha): 1.0}}
    pts, ax = square_grid(T, h)
    n = ax.size
    w1 = trapezoid_weights(n, h)
    W = np.outer(w1, w1).ravel()
    s1 = np.sign(pts.real).astype(int)
    s2 = np.sign(pts.imag).astype(int)
    even = (n - 1) % 2 == 0
    sub = np.zeros((n, n), bool)
    if even:
        sub[::2, ::2] = True
    wc = trapezoid_weights((n + 1) // 2, 2 * h)
    Wc = np.outer(wc, wc).ravel()
    q = (n - 1) // 4
    inner = np.zeros((n, n), bool)
    lo, hi = (n - 1) // 2 - q, (n - 1) // 2 + q
    inner[lo:hi + 1, lo:hi + 1] = True
    wi = trapezoid_weights(2 * q + 1, h)
    Wi = np.outer(wi, wi).ravel()
    I, Ic, Iin = [], [], []
    for start in range(0, M, chunk):
        sz = min(chunk, M - start)
        S = sample_split_2d(pts, 1.0, stream, sz, start)
        X = {(k, l): S.X(k, l) for k in (-1, 0, 1) for l in (-1, 0, 1)}
        D = np.zeros((sz, pts.size))
        for sa in (-1, 0, 1):
            for sb in (-1, 0, 1):
                sel = (s1 == sa) & (s2 == sb)
                if sel.any():
                    D[:, sel] = (X[(0, 0)][:, sel] - X[(sa, 0)][:, sel] - X[(0, sb)][:, sel]
                                 + X[(sa, sb)][:, sel])
        D = np.abs(D)
        I.append(D @ W)
        if even:
            Ic.append(D[:, sub.ravel()] @ Wc)
        Iin.append(D[:, inner.ravel()] @ Wi)
    base = np.concatenate(I)  # alpha = 1 integrals
    est, se, ess = _exp_summary(alpha * base)
    coarse = _exp_summary(alpha * np.concatenate(Ic))[0] if Ic else float("nan")
    Iin = np.concatenate(Iin)
    inner_est = _exp_summary(alpha * Iin)[0]
    rep = ExpIntegralReport(est, se, ess, M, coarse, inner_est, float(np.mean(alpha * (base - Iin))), None,
                            ess >= 0.01 * M)
    by_alpha = {float(a): _exp_summary(a * base)[0] for a in (alpha, *alphas_extra)}
    return {"report": rep, "by_alpha": by_alpha}


# --------------------------------------------------------- alpha choice --


def off_diagonal_row_sum(alpha: float, kmax: int = 200) -> tuple[float, float]:
    """Sum over l != 0 in Z^2 of 4 exp(-|l|^2 / (64 alpha)), truncated, plus a tail bound.

    Equals 4 (theta3(q)^2 - 1) with q = exp(-1/(64 alpha)).  The one-dimensional
    series is cut at |j| <= kmax; the remainder is bounded geometrically.
    """
    q = math.exp(-1.0 / (64.0 * alpha))
    j = np.arange(1, kmax + 1)
    terms = q ** (j.astype(float) ** 2)
    th = 1.0 + 2.0 * terms.sum()
    # sum_{j > kmax} q^{j^2} <= q^{(kmax+1)^2} / (1 - q^{2 kmax + 3})
    rem1 = 2.0 * q ** ((kmax + 1) ** 2) / (1.0 - q ** (2 * kmax + 3))
    S = 4.0 * (th * th - 1.0)
    tail = 4.0 * (2 * th * rem1 + rem1 * rem1)
    return S, tail


def lattice_gram_2d(alpha: float, side: int = 20, u: float = 0.0, v: float = 0.0) -> np.ndarray:
    """Gram matrix of x_k = 2 Xi((k + (u, v)) / sqrt(32 alpha)) on a side x side block."""
    k = np.arange(side)
    K1, K2 = np.meshgrid(k + u, k + v, indexing="ij")
    pts = ((K1 + 1j * K2) / math.sqrt(32 * alpha)).ravel()
    return 4.0 * cov_field_2d(pts[:, None], pts[None, :])


@dataclass
class AlphaChoice:
    alpha: float
    row_sum: float
    row_sum_tail: float
    gram_lambda_min: float
    iterations: int

    def as_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def alpha_select(tolerance: float = 1e-3, side: int = 20, max_iter: int = 200) -> AlphaChoice:
    """Largest alpha (bisection) whose rigorous row-sum bound is <= 3, within ``tolerance``."""
    def upper(a):
        S, tail = off_diagonal_row_sum(a)
        return S + tail

    lo, hi = 1e-6, 1.0
    if upper(lo) > 3:
        raise RuntimeError("row sum exceeds 3 even for tiny alpha")
    it = 0
    while it < max_iter:
        it += 1
        mid = 0.5 * (lo + hi)
        if upper(mid) <= 3.0:
            lo = mid
        else:
            hi = mid
        if upper(lo) > 3.0 - tolerance and upper(lo) <= 3.0:
            break
    S, tail = off_diagonal_row_sum(lo)
    G = lattice_gram_2d(lo, side)
    lmin = float(np.linalg.eigvalsh(G).min())
    return AlphaChoice(lo, S, tail, lmin, it)


# ----------------------------------------------------- exported instances --


def b4_lattice_instance(points=(-1.5, -1.0, -0.5)):
    """(Y, Z, scale) for Prop. B4 built from the 1-d kernel cut at 0.

    Rows y_k, z_k represent scale*Xi_-(t_k) and scale*Xi_+(t_k) in orthonormal
    coordinates; the scale makes the Gram matrix of x_k = y_k + z_k have
    smallest eigenvalue 1.
    """
    t = np.asarray(points, float)
    Km = cov_minus_1d(t[:, None], t[None, :])
    Kp = cov_plus_1d(t[:, None], t[None, :])
    lmin = np.linalg.eigvalsh(Km + Kp).min()
    scale = 1.0 / math.sqrt(lmin * (1 - 1e-9))
    Y = covariance_factor(Km) * scale
    Z = covariance_factor(Kp) * scale
    return Y.astype(complex), Z.astype(complex), scale


def euler_gamma_quadrature() -> float:
    """-int_0^inf ln(x) e^{-x} dx, an independent route to C_Euler."""
    from scipy import integrate

    opts = dict(epsabs=1e-14, epsrel=1e-13, limit=400)
    a = integrate.quad(lambda x: math.log(x) * math.exp(-x), 0, 1, **opts)[0]
    b = integrate.quad(lambda x: math.log(x) * math.exp(-x), 1, np.inf, **opts)[0]
    return -(a + b)


@dataclass
class Th31Instance:
    """The 1-d process in the form (xi, eta, eta') on (0, T), time rescaled by 1/4.

    At time t the three processes are R xi_+^+(t/4), R xi_-^-(t/4) and
    R xi_-^+(t/4).  The log-ratio integrand does not depend on R; R and C
    enter only the bound.
    """

    T: float
    h: float
    R: float
    C: float
    gram_lambda_min: float
    certified: bool

    @property
    def grid(self) -> np.ndarray:
        n = int(round(self.T / self.h))
        return np.arange(n + 1) * self.h

    @property
    def bound_log(self) -> float:
        """ln of exp(2 pi (C^2 + C))."""
        return 2 * math.pi * (self.C ** 2 + self.C)

    def as_dict(self):
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["bound_log"] = self.bound_log
        return d


def eta_tail_sum(R: float, kmax: int) -> float:
    """R * sum_{k >= 0} sqrt(Phi(-k/2)) (the variance of R xi_-(k/4) is R^2 Phi(-k/2)).

    Terms beyond kmax are bounded with Phi(-x) <= exp(-x^2/2)/2, then by a
    geometric series.
    """
    k = np.arange(kmax + 1)
    head = np.sqrt(Phi(-0.5 * k)).sum()
    j = kmax + 1
    first = math.exp(-(0.5 * j) ** 2 / 4) / math.sqrt(2)
    ratio = math.exp(-(2 * j + 1) / 16)
    return R * (head + first / (1 - ratio))


def th31_instance(T: float = 4.0, h: float = 1.0 / 16, R: float | None = None, kmax: int = 60) -> Th31Instance:
    """Constants for the 1-d instance.  R defaults to the finite-section value.

    The Gram matrix of x_k = R Xi((k + u)/4), k = 0..ceil(T), does not depend
    on u; condition (d) asks for lambda_min >= 1.
    """
    n = int(math.ceil(T)) + 1
    k = np.arange(n)
    G = np.exp(-((k[:, None] - k[None, :]) ** 2) / 32.0)
    lmin = float(np.linalg.eigvalsh(G).min())
    if R is None:
        R = 1.0 / math.sqrt(lmin * (1 - 1e-9))
    certified = R * R * lmin >= 1.0
    return Th31Instance(T, h, R, eta_tail_sum(R, kmax), lmin, certified)


# ------------------------------------------------------- serialisation --


def ensemble_to_csv(S: SplitGaussian1D | SplitGaussian2D, path) -> None:
    """One row per (sample, grid point): coordinates then re/im of every component."""
    import csv

    if isinstance(S, SplitGaussian1D):
        labels = [f"{a}{b}" for a in "-+" for b in "-+"]
        flat = S.comps.reshape(4, *S.comps.shape[2:])
        coords = [("t", S.grid)]
    else:
        labels = [f"{a1}{a2}{b1}{b2}" for a1 in "-+" for a2 in "-+" for b1 in "-+" for b2 in "-+"]
        flat = S.comps.reshape(16, *S.comps.shape[4:])
        coords = [("t1", S.points.real), ("t2", S.points.imag)]
    M, n = flat.shape[1:]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        header = ["sample"] + [c for c, _ in coords]
        for lab in labels:
            header += [f"re{lab}", f"im{lab}"]
        w.writerow(header)
        for i in range(M):
            for j in range(n):
                row = [i] + [repr(float(v[j])) for _, v in coords]
                for c in range(len(labels)):
                    z = flat[c, i, j]
                    row += [repr(float(z.real)), repr(float(z.imag))]
                w.writerow(row)


def ensemble_from_csv(path, alpha: float = 1.0):
    import csv

    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], np.array(rows[1:], dtype=float)
    two_d = header[1] == "t1"
    nc = 16 if two_d else 4
    off = 3 if two_d else 2
    M = int(body[:, 0].max()) + 1
    n = body.shape[0] // M
    vals = body[:, off::2] + 1j * body[:, off + 1::2]
    comps = vals.reshape(M, n, nc).transpose(2, 0, 1)
    if two_d:
        pts = body[:n, 1] + 1j * body[:n, 2]
        return SplitGaussian2D(pts, comps.reshape(2, 2, 2, 2, M, n), alpha)
    return SplitGaussian1D(body[:n, 1], comps.reshape(2, 2, M, n))
