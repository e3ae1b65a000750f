"""Reproducible Gaussian sampling.

Every random draw in the package goes through a :class:`SeededStream`, a
value type naming a Philox (counter-based) generator by ``(master_seed,
stream_index, *sub)``.  Work that is split across processes derives one
stream per sample index, so results never depend on how the work was divided.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import hashlib

import numpy as np
import scipy.linalg

from .errors import NotPSD

PSD_TOL = 1e-10


@dataclass(frozen=True)
class SeededStream:
    master_seed: int
    stream_index: int = 0
    sub: tuple = field(default=())

    def __post_init__(self):
        if self.stream_index < 0 or any(s < 0 for s in self.sub):
            raise ValueError("stream indices must be non-negative")

    def generator(self) -> np.random.Generator:
        key = (self.stream_index,) + tuple(self.sub)
        seq = np.random.SeedSequence(self.master_seed & ((1 << 64) - 1), spawn_key=key)
        return np.random.Generator(np.random.Philox(seq))

    def child(self, *indices: int) -> "SeededStream":
        return SeededStream(self.master_seed, self.stream_index, tuple(self.sub) + tuple(indices))


def as_generator(stream) -> np.random.Generator:
    if isinstance(stream, np.random.Generator):
        return stream
    return stream.generator()


def sample_standard_complex(stream, n: int, size: int | None = None) -> np.ndarray:
    """i.i.d. standard complex Gaussians, E|z|^2 = 1 (each part variance 1/2).

    Returns shape ``(n,)`` or ``(size, n)``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = as_generator(stream)
    shape = (n,) if size is None else (size, n)
    parts = rng.standard_normal(shape + (2,))
    return (parts[..., 0] + 1j * parts[..., 1]) * np.sqrt(0.5)


def covariance_factor(K, tol: float = PSD_TOL) -> np.ndarray:
    """Return L with L @ L.conj().T == K (up to clipping of tiny eigenvalues).

    Pivoted Cholesky first; rank-deficient or indefinite-by-roundoff matrices
    fall back to an eigendecomposition with eigenvalues in [-tol*|K|, 0)
    clipped to zero.
    """
    K = np.asarray(K)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise ValueError("covariance must be square")
    iscomplex = np.iscomplexobj(K)
    K = K.astype(np.complex128 if iscomplex else np.float64)
    K = 0.5 * (K + K.conj().T)
    n = K.shape[0]
    scale = np.abs(K).max() if n else 0.0
    if scale == 0.0:
        return np.zeros_like(K)

    pstrf = scipy.linalg.lapack.zpstrf if iscomplex else scipy.linalg.lapack.dpstrf
    c, piv, rank, info = pstrf(K, lower=1, tol=-1.0)
    if info == 0 and rank == n:
        L = np.tril(c)
        P = np.zeros((n, n))
        P[piv - 1, np.arange(n)] = 1.0
        return P @ L

    w, V = np.linalg.eigh(K)
    norm = max(abs(w[0]), abs(w[-1]))
    if w[0] < -tol * norm:
        raise NotPSD(f"smallest eigenvalue {w[0]:.3e} below -{tol:g}*|K| = {-tol * norm:.3e}")
    w = np.clip(w, 0.0, None)
    return V * np.sqrt(w)


def sample_from_covariance(stream, K, size: int | None = None, factor=None) -> np.ndarray:
    """Centered complex Gaussian vector(s) with E v v* = K."""
    L = covariance_factor(K) if factor is None else factor
    n = L.shape[0]
    g = sample_standard_complex(stream, L.shape[1], size=size)
    out = g @ L.T
    return out if size is not None else out.reshape(n)


class FactorCache:
    """Memo of covariance factors keyed by a hash of the matrix bytes."""

    def __init__(self):
        self._store = {}

    @staticmethod
    def key(K) -> str:
        K = np.ascontiguousarray(K)
        return hashlib.sha1(K.tobytes() + str(K.shape).encode()).hexdigest()

    def factor(self, K):
        k = self.key(K)
        if k not in self._store:
            self._store[k] = covariance_factor(K)
        return self._store[k]

    def __len__(self):
        return len(self._store)


FACTORS = FactorCache()
