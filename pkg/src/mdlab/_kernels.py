"""Hot loops: Horner evaluation and Aberth-Ehrlich root finding.

Each kernel exists twice, a numba version (``*_nb``) and a vectorised numpy
version (``*_np``).  The public names pick one according to ``_accel``.
Polynomials are stored lowest degree first: p(w) = sum_k b[k] w^k.
"""
import numpy as np

from ._accel import USE_NUMBA, njit

EPS = np.finfo(float).eps


# ---------------------------------------------------------------- numba --


@njit
def _eval_one_nb(b, w):
    """p(w), p'(w) and sum |b_k||w|^k at a single point."""
    n = b.shape[0] - 1
    aw = abs(w)
    if aw <= 1.0:
        p = b[n]
        dp = 0.0 + 0.0j
        s = abs(b[n])
        for k in range(n - 1, -1, -1):
            dp = dp * w + p
            p = p * w + b[k]
            s = s * aw + abs(b[k])
        return p, dp, s, False
    # reversed polynomial at y = 1/w, returns q, q' and the Newton ratio later
    y = 1.0 / w
    ay = 1.0 / aw
    q = b[0]
    dq = 0.0 + 0.0j
    s = abs(b[0])
    for k in range(1, n + 1):
        dq = dq * y + q
        q = q * y + b[k]
        s = s * ay + abs(b[k])
    return q, dq, s, True


@njit
def newton_ratio_nb(b, w):
    """Return (p/p', backward-error flag) at w."""
    n = b.shape[0] - 1
    p, dp, s, rev = _eval_one_nb(b, w)
    small = abs(p) <= 8.0 * EPS * s
    if not rev:
        if dp == 0:
            return 0.0 + 0.0j, small
        return p / dp, small
    y = 1.0 / w
    den = n * p - y * dp
    if den == 0:
        return 0.0 + 0.0j, small
    return w * p / den, small


@njit
def aberth_nb(b, z0, maxit, tol):
    """Gauss-Seidel Aberth iteration.  Returns roots and sweeps used."""
    z = z0.copy()
    n = z.shape[0]
    done = np.zeros(n, dtype=np.bool_)
    it = 0
    for it in range(1, maxit + 1):
        active = 0
        for i in range(n):
            if done[i]:
                continue
            active += 1
            r, small = newton_ratio_nb(b, z[i])
            if small:
                done[i] = True
                continue
            s = 0.0 + 0.0j
            zi = z[i]
            for j in range(n):
                if j != i:
                    s += 1.0 / (zi - z[j])
            step = r / (1.0 - r * s)
            z[i] = zi - step
            if abs(step) <= tol * abs(z[i]):
                done[i] = True
        if active == 0:
            break
    return z, it


@njit
def horner_nb(b, w):
    """p(w) for an array of points (direct Horner, no reversal).

    The loop over points is innermost and works on split real and imaginary
    parts, so LLVM vectorises it; a per-point loop is latency bound.
    """
    n = b.shape[0] - 1
    m = w.shape[0]
    xr = w.real.copy()
    xi = w.imag.copy()
    pr = np.full(m, b[n].real)
    pi = np.full(m, b[n].imag)
    for k in range(n - 1, -1, -1):
        br = b[k].real
        bi = b[k].imag
        for i in range(m):
            a = pr[i] * xr[i] - pi[i] * xi[i] + br
            pi[i] = pr[i] * xi[i] + pi[i] * xr[i] + bi
            pr[i] = a
    out = np.empty(m, dtype=np.complex128)
    for i in range(m):
        out[i] = complex(pr[i], pi[i])
    return out


@njit
def horner_d_nb(b, w):
    n = b.shape[0] - 1
    m = w.shape[0]
    xr = w.real.copy()
    xi = w.imag.copy()
    pr = np.full(m, b[n].real)
    pi = np.full(m, b[n].imag)
    dr = np.zeros(m)
    di = np.zeros(m)
    for k in range(n - 1, -1, -1):
        br = b[k].real
        bi = b[k].imag
        for i in range(m):
            a = dr[i] * xr[i] - di[i] * xi[i] + pr[i]
            di[i] = dr[i] * xi[i] + di[i] * xr[i] + pi[i]
            dr[i] = a
            a = pr[i] * xr[i] - pi[i] * xi[i] + br
            pi[i] = pr[i] * xi[i] + pi[i] * xr[i] + bi
            pr[i] = a
    out = np.empty(m, dtype=np.complex128)
    dout = np.empty(m, dtype=np.complex128)
    for i in range(m):
        out[i] = complex(pr[i], pi[i])
        dout[i] = complex(dr[i], di[i])
    return out, dout


# ---------------------------------------------------------------- numpy --


def horner_np(b, w):
    w = np.asarray(w, dtype=np.complex128)
    p = np.full(w.shape, b[-1], dtype=np.complex128)
    for k in range(b.shape[0] - 2, -1, -1):
        p = p * w + b[k]
    return p


def horner_d_np(b, w):
    w = np.asarray(w, dtype=np.complex128)
    p = np.full(w.shape, b[-1], dtype=np.complex128)
    dp = np.zeros(w.shape, dtype=np.complex128)
    for k in range(b.shape[0] - 2, -1, -1):
        dp = dp * w + p
        p = p * w + b[k]
    return p, dp


def newton_ratio_np(b, w):
    """Vectorised p/p' with reversal for |w| > 1, plus the backward-error flag."""
    n = b.shape[0] - 1
    w = np.asarray(w, dtype=np.complex128)
    aw = np.abs(w)
    inner = aw <= 1.0
    x = np.where(inner, w, 1.0 / np.where(inner, 1.0, w))
    ax = np.where(inner, aw, 1.0 / np.where(inner, 1.0, aw))
    lead = np.where(inner, b[n], b[0])
    p = np.full(w.shape, 0j) + lead
    dp = np.zeros(w.shape, dtype=np.complex128)
    s = np.abs(lead).astype(float)
    for k in range(1, n + 1):
        c = np.where(inner, b[n - k], b[k])
        dp = dp * x + p
        p = p * x + c
        s = s * ax + np.abs(c)
    small = np.abs(p) <= 8.0 * EPS * s
    with np.errstate(divide="ignore", invalid="ignore"):
        r_in = p / dp
        r_out = w * p / (n * p - x * dp)
    r = np.where(inner, r_in, r_out)
    r = np.where(np.isfinite(r), r, 0.0)
    return r, small


def aberth_np(b, z0, maxit, tol):
    """Jacobi (simultaneous) Aberth iteration, vectorised over roots."""
    z = np.array(z0, dtype=np.complex128)
    n = z.size
    done = np.zeros(n, dtype=bool)
    it = 0
    eye = np.eye(n, dtype=bool)
    for it in range(1, maxit + 1):
        act = ~done
        if not act.any():
            break
        r, small = newton_ratio_np(b, z[act])
        diff = z[act][:, None] - z[None, :]
        diff[eye[act]] = 1.0
        s = (1.0 / diff).sum(axis=1) - 1.0
        step = np.where(small, 0.0, r / (1.0 - r * s))
        idx = np.flatnonzero(act)
        z[idx] = z[idx] - step
        done[idx] = small | (np.abs(step) <= tol * np.abs(z[idx]))
    return z, it


if USE_NUMBA:
    aberth, horner, horner_d = aberth_nb, horner_nb, horner_d_nb
else:
    aberth, horner, horner_d = aberth_np, horner_np, horner_d_np


def kernels(backend: str):
    """Explicit access to one backend (used by the benchmark and tests)."""
    if backend == "numba":
        return {"aberth": aberth_nb, "horner": horner_nb, "horner_d": horner_d_nb}
    if backend == "numpy":
        return {"aberth": aberth_np, "horner": horner_np, "horner_d": horner_d_np}
    raise ValueError(f"unknown backend {backend!r}")
