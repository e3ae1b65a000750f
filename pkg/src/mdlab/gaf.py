"""The planar Gaussian entire function psi(z) = sum zeta_k z^k / sqrt(k!) and its zeros.

Coefficients are stored in a rescaled variable w = z / s with s = sqrt(N), and
normalised by their largest modulus, so nothing over- or underflows up to the
largest supported window:

    psi(z) = exp(log_scale) * p(z / s),    p(w) = sum_k b_k w^k.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np
from scipy.special import gammaln
from scipy.stats import poisson

from . import _kernels
from .errors import ValidationMismatch, WindowOverflow, WindowTooLarge
from .rng import sample_standard_complex

MAX_WINDOW = 16.0
HEADROOM = 1.0
TAIL_TOL = 1e-16  # eps_tr^2 with eps_tr = 1e-8
POLISH_TOL = 1e-8
EULER_GAMMA = float(np.euler_gamma)


def truncation_degree(radius: float, tail_tol: float = TAIL_TOL) -> int:
    """Smallest N with sum_{k>N} radius^{2k}/k! <= tail_tol * exp(radius^2)."""
    lam = radius * radius
    n = int(lam)
    while poisson.sf(n, lam) > tail_tol:
        n += max(1, int(math.sqrt(lam + 1)) // 4)
    while n > 0 and poisson.sf(n - 1, lam) <= tail_tol:
        n -= 1
    return max(n, 1)


def scaled_coefficients(zeta: np.ndarray, s: float) -> tuple[np.ndarray, float]:
    k = np.arange(zeta.size)
    logmag = k * math.log(s) - 0.5 * gammaln(k + 1.0)
    top = float(logmag.max())
    return zeta * np.exp(logmag - top), top


@dataclass
class GafSample:
    zeta: np.ndarray
    window_radius: float
    trunc_radius: float
    eps_tr: float = math.sqrt(TAIL_TOL)
    b: np.ndarray = field(init=False, repr=False)
    s: float = field(init=False)
    log_scale: float = field(init=False)

    def __post_init__(self):
        self.zeta = np.asarray(self.zeta, dtype=np.complex128)
        self.s = math.sqrt(max(self.N, 1))
        self.b, self.log_scale = scaled_coefficients(self.zeta, self.s)

    @property
    def N(self) -> int:
        return self.zeta.size - 1

    def coefficients(self) -> np.ndarray:
        """zeta_k / sqrt(k!) (underflows to 0 for very large k)."""
        k = np.arange(self.zeta.size)
        return self.zeta * np.exp(-0.5 * gammaln(k + 1.0))

    def __call__(self, z):
        z = np.asarray(z, dtype=np.complex128)
        w = np.atleast_1d(z).ravel() / self.s
        val = _kernels.horner(self.b, w) * math.exp(self.log_scale)
        return val.reshape(z.shape) if z.ndim else complex(val[0])

    def log_abs(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=np.complex128)
        w = np.atleast_1d(z).ravel() / self.s
        with np.errstate(divide="ignore"):
            val = np.log(np.abs(_kernels.horner(self.b, w))) + self.log_scale
        return val.reshape(z.shape)


def sample_gaf(window_radius: float, stream, headroom: float = HEADROOM, N: int | None = None) -> GafSample:
    if window_radius > MAX_WINDOW:
        raise WindowTooLarge(f"window radius {window_radius} exceeds {MAX_WINDOW}")
    if window_radius <= 0:
        raise ValueError("window radius must be positive")
    R = window_radius + headroom
    N = truncation_degree(R) if N is None else N
    zeta = sample_standard_complex(stream, N + 1)
    return GafSample(zeta, window_radius, R)


# --------------------------------------------------------------- zeros --


def _newton_polygon_start(b: np.ndarray, offset: float = 0.4) -> np.ndarray:
    """Starting points on circles whose radii come from the upper convex hull of log|b_k|."""
    n = b.size - 1
    with np.errstate(divide="ignore"):
        y = np.log(np.abs(b))
    pts = [k for k in range(n + 1) if np.isfinite(y[k])]
    hull: list[int] = []
    for k in pts:
        while len(hull) >= 2:
            i, j = hull[-2], hull[-1]
            if (y[j] - y[i]) * (k - i) <= (y[k] - y[i]) * (j - i):
                hull.pop()
            else:
                break
        hull.append(k)
    z = np.empty(n, dtype=np.complex128)
    pos = 0
    for i, j in zip(hull[:-1], hull[1:]):
        m = j - i
        u = math.exp((y[i] - y[j]) / m)
        ang = 2 * math.pi * np.arange(m) / m + 2 * math.pi * i / n + offset
        z[pos:pos + m] = u * np.exp(1j * ang)
        pos += m
    # zeros at the origin (b_0 = 0) are left at a tiny radius
    if pos < n:
        z[pos:] = 1e-3 * np.exp(1j * (2 * math.pi * np.arange(n - pos) / max(n - pos, 1) + offset))
    return z


def polynomial_roots(b: np.ndarray, maxit: int = 200, tol: float = 4 * np.finfo(float).eps, aberth=None):
    """All roots of sum b_k w^k by Aberth-Ehrlich."""
    aberth = _kernels.aberth if aberth is None else aberth
    z0 = _newton_polygon_start(b)
    roots, sweeps = aberth(np.ascontiguousarray(b, dtype=np.complex128), z0, maxit, tol)
    return roots, sweeps


def companion_roots(gaf: GafSample) -> np.ndarray:
    """Cross-check: eigenvalues of the companion matrix, in z coordinates."""
    if gaf.N > 512:
        raise ValueError("companion cross-check limited to N <= 512")
    # scaling by the window radius keeps the in-window eigenvalues well conditioned
    s = max(1.0, gaf.window_radius)
    b, _ = scaled_coefficients(gaf.zeta, s)
    return np.roots(b[::-1]) * s


def _polish(b, w, iters=4):
    p, dp = _kernels.horner_d(b, w)
    for _ in range(iters):
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(dp != 0, p / dp, 0.0)
        w2 = w - step
        p2, dp2 = _kernels.horner_d(b, w2)
        better = np.abs(p2) < np.abs(p)
        w = np.where(better, w2, w)
        p = np.where(better, p2, p)
        dp = np.where(better, dp2, dp)
        if not better.any():
            break
    return w, p


def winding_number(gaf: GafSample, radius: float, n0: int | None = None, max_depth: int = 24) -> tuple[int, int]:
    """Winding number of psi around |z| = radius.

    The phase increment between neighbouring nodes must stay below pi/4.
    Arcs that violate this are bisected locally until they comply.  The
    initial node count grows with radius^2, the expected number of enclosed
    zeros.  Returns (count, nodes used).
    """
    if n0 is None:
        n0 = max(512, 1 << int(math.ceil(math.log2(16 * radius * radius + 1))))
    scale = radius / gaf.s
    th = 2 * math.pi * np.arange(n0 + 1) / n0
    p = _kernels.horner(gaf.b, scale * np.exp(1j * th))
    p[-1] = p[0]
    for _ in range(max_depth):
        d = np.angle(p[1:] / p[:-1])
        bad = np.flatnonzero(np.abs(d) > math.pi / 4)
        if bad.size == 0:
            break
        mid = 0.5 * (th[bad] + th[bad + 1])
        pm = _kernels.horner(gaf.b, scale * np.exp(1j * mid))
        th = np.insert(th, bad + 1, mid)
        p = np.insert(p, bad + 1, pm)
    d = np.angle(p[1:] / p[:-1])
    total = float(d.sum()) / (2 * math.pi)
    return int(round(total)), th.size - 1


@dataclass
class ZeroSet:
    zeros: np.ndarray
    validation_count: int
    polish_residuals: np.ndarray
    window_radius: float
    contour_radius: float
    sweeps: int = 0
    retries: int = 0

    def __len__(self):
        return self.zeros.size


def find_zeros(gaf: GafSample, window_radius: float | None = None, contour_gap: float = 1e-3) -> ZeroSet:
    R = gaf.window_radius if window_radius is None else window_radius
    if R > gaf.trunc_radius:
        raise ValueError("window exceeds the truncation radius of the sample")
    w, sweeps = polynomial_roots(gaf.b)
    w, pw = _polish(gaf.b, w)
    z = w * gaf.s
    az = np.abs(z)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        resid = np.abs(pw) * np.exp(gaf.log_scale - 0.5 * az**2)

    radii = [R]
    if np.any(np.abs(az - R) < contour_gap):
        radii = [R * (1 + 1e-3), R * (1 - 1e-3)]
    last = None
    for attempt, rho in enumerate(radii):
        if np.any(np.abs(az - rho) < contour_gap):
            continue
        count, _ = winding_number(gaf, rho)
        inside = int(np.count_nonzero(az < rho))
        if count == inside:
            keep = az <= R
            bad = resid[keep] > POLISH_TOL
            if bad.any():
                raise ValidationMismatch(f"{int(bad.sum())} zeros fail the residual bound")
            return ZeroSet(z[keep], int(np.count_nonzero(keep)), resid[keep], R, rho, sweeps, attempt)
        last = (rho, count, inside)
    raise ValidationMismatch(f"root count disagrees with winding number: {last}")


# ----------------------------------------------------------- statistics --


def linear_statistic(zeros: ZeroSet | np.ndarray, h, r: float, window_radius: float | None = None):
    """(raw, centred) values of sum h(z/r) and sum h(z/r) - (r^2/pi) * integral(h)."""
    z = zeros.zeros if isinstance(zeros, ZeroSet) else np.asarray(zeros)
    Rw = zeros.window_radius if isinstance(zeros, ZeroSet) else window_radius
    if Rw is not None and r * h.support_radius > Rw - HEADROOM + 1e-12:
        raise WindowOverflow(f"r*support = {r * h.support_radius} exceeds window margin {Rw - HEADROOM}")
    raw = float(np.sum(h(z / r))) if z.size else 0.0
    return raw, raw - r * r / math.pi * h.integral


def log_field(gaf: GafSample, t, alpha: float | None = None, floor: float = 1e-300):
    """ln|xi_t| = ln|psi(t)| - |t|^2/2, or alpha*ln|xi_t| + alpha*C_E/2 when alpha is given.

    Points where |psi| underflows ``floor`` come back as nan (excluded samples).
    """
    t = np.asarray(t, dtype=np.complex128)
    if np.any(np.abs(t) > gaf.trunc_radius):
        raise ValueError("points outside the truncation radius")
    la = gaf.log_abs(t)
    la = np.where(la < math.log(floor), np.nan, la)
    val = la - 0.5 * np.abs(t) ** 2
    if alpha is not None:
        val = alpha * val + 0.5 * alpha * EULER_GAMMA
    return val if val.ndim else float(val)


def green_statistic(gaf: GafSample, h, r: float, step: float = 1.0 / 32):
    """(1/2pi) * integral of ln|xi| * Laplacian(h_r) by the trapezoid rule.

    Returns (value at step, value at 2*step, error estimate, excluded node
    count).  The grid at 2*step has four cosets inside the grid at step; the
    error estimate is the largest distance from the fine value to any of the
    four coarse coset sums.  A single coarse comparison is not enough here:
    the log singularities at the zeros and the kink of the Laplacian on the
    support boundary make the error oscillate with the grid offset, so
    |Q_h - Q_2h| alone is sometimes far smaller than the actual error.
    """
    hr = h.dilate(r)
    c, a = hr.center, hr.scale
    n = int(math.ceil(a / step))
    xs = np.arange(-n, n + 1) * step
    X, Y = np.meshgrid(c.real + xs, c.imag + xs, indexing="ij")
    Z = X + 1j * Y
    lap = hr.laplacian(Z)
    mask = lap != 0
    vals = np.zeros_like(lap)
    lf = log_field(gaf, Z[mask])
    excluded = int(np.count_nonzero(np.isnan(lf)))
    vals[mask] = np.nan_to_num(lf, nan=0.0) * lap[mask]
    # the bump's Laplacian vanishes on the square boundary, so plain sums are trapezoid sums
    q1 = vals.sum() * step * step / (2 * math.pi)
    cosets = [vals[i::2, j::2].sum() * (2 * step) ** 2 / (2 * math.pi) for i in (0, 1) for j in (0, 1)]
    err = max(abs(q1 - q) for q in cosets)
    return float(q1), float(cosets[0]), float(err), excluded
