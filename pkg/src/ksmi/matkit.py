"""Linear algebra helpers, seeded random streams and Stiefel sampling.

Matrices are plain ``float64`` numpy arrays.  Randomness is drawn from
:class:`RngStream` values, which wrap numpy's counter-based Philox generator
keyed by ``(base_seed, stream_id)`` so that any consumer can derive an
independent, reproducible substream from a tag and an index.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "RngStream",
    "StiefelFrame",
    "as_matrix",
    "stream_key",
    "sample_gaussian_matrix",
    "qr_orthonormalize",
    "sample_stiefel",
    "sym_eig",
    "matrix_sqrt_psd",
    "operator_norm",
    "empirical_covariance",
    "digamma",
]

_U64 = (1 << 64) - 1
EULER_GAMMA = 0.57721566490153286061


def stream_key(parent: int, tag: str, index: int = 0) -> int:
    """Stable 64-bit id for the substream ``(parent, tag, index)``."""
    text = f"{parent & _U64}:{tag}:{int(index)}".encode()
    return int.from_bytes(hashlib.blake2b(text, digest_size=8).digest(), "little")


@dataclass(frozen=True)
class RngStream:
    """A reproducible random stream identified by ``(base_seed, stream_id)``.

    The stream is a value: :meth:`generator` always restarts it from the
    beginning, so two calls return identical sequences.  Use :meth:`child`
    to obtain statistically independent substreams.
    """

    base_seed: int
    stream_id: int = 0

    def child(self, tag: str, index: int = 0) -> RngStream:
        return RngStream(self.base_seed, stream_key(self.stream_id, tag, index))

    def generator(self) -> np.random.Generator:
        key = ((self.base_seed & _U64) << 64) | (self.stream_id & _U64)
        return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class StiefelFrame:
    """A ``d x k`` matrix with orthonormal columns."""

    cols: np.ndarray

    def __post_init__(self):
        cols = as_matrix(self.cols)
        d, k = cols.shape
        if not 1 <= k <= d:
            raise ValueError(f"frame needs 1 <= k <= d, got k={k}, d={d}")
        err = np.linalg.norm(cols.T @ cols - np.eye(k))
        if err >= 1e-10:
            raise ValueError(f"columns are not orthonormal (Frobenius error {err:.3e})")
        cols.setflags(write=False)
        object.__setattr__(self, "cols", cols)

    @property
    def d(self) -> int:
        return self.cols.shape[0]

    @property
    def k(self) -> int:
        return self.cols.shape[1]

    @classmethod
    def coordinate(cls, d: int, k: int) -> StiefelFrame:
        """Frame selecting the first ``k`` coordinates of ``R^d``."""
        return cls(np.eye(d, k))


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Return ``a`` as a finite 2-D float64 array (copying only if needed)."""
    m = np.array(a, dtype=np.float64, copy=None)
    if m.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains NaN or Inf")
    return m


def sample_gaussian_matrix(rows: int, cols: int, rng: RngStream) -> np.ndarray:
    """I.i.d. standard normal ``rows x cols`` matrix drawn from ``rng``."""
    if rows < 1 or cols < 1:
        raise ValueError(f"shape must be positive, got ({rows}, {cols})")
    return rng.generator().standard_normal((rows, cols))


def qr_orthonormalize(m) -> np.ndarray:
    """Orthonormal basis of the column space of ``m``.

    The thin QR factor is returned with signs chosen so that ``R`` has a
    non-negative diagonal, which makes the result unique.
    """
    m = as_matrix(m)
    rows, cols = m.shape
    if rows < cols:
        raise ValueError(f"need rows >= cols, got {m.shape}")
    q, r = np.linalg.qr(m, mode="reduced")
    diag = np.diag(r)
    scale = max(float(np.max(np.abs(m))), np.finfo(float).tiny)
    if np.any(np.abs(diag) < 1e-12 * scale):
        raise ValueError("matrix is rank deficient")
    return q * np.where(diag < 0, -1.0, 1.0)


def sample_stiefel(k: int, d: int, rng: RngStream) -> StiefelFrame:
    """Haar-uniform draw from the Stiefel manifold ``St(k, d)``."""
    if not 1 <= k <= d:
        raise ValueError(f"need 1 <= k <= d, got k={k}, d={d}")
    return StiefelFrame(qr_orthonormalize(sample_gaussian_matrix(d, k, rng)))


def _check_symmetric(m: np.ndarray) -> None:
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"matrix must be square, got {m.shape}")
    scale = max(1.0, float(np.max(np.abs(m)))) if m.size else 1.0
    if m.size and np.max(np.abs(m - m.T)) > 1e-10 * scale:
        raise ValueError("matrix is not symmetric")


def sym_eig(m) -> tuple[np.ndarray, np.ndarray]:
    """Ascending eigenvalues and orthonormal eigenvectors of a symmetric matrix."""
    m = as_matrix(m)
    _check_symmetric(m)
    return np.linalg.eigh(0.5 * (m + m.T))


def matrix_sqrt_psd(m) -> np.ndarray:
    """Symmetric PSD square root; eigenvalues below ``1e-12 * max`` are floored to 0."""
    lam, v = sym_eig(m)
    top = max(float(lam[-1]), 0.0)
    if lam[0] < -1e-8 * top:
        raise ValueError(f"matrix is not PSD (min eigenvalue {lam[0]:.3e})")
    lam = np.where(lam < 1e-12 * top, 0.0, lam)
    s = (v * np.sqrt(lam)) @ v.T
    return 0.5 * (s + s.T)


def operator_norm(m) -> float:
    """Largest singular value."""
    m = as_matrix(m)
    if m.size == 0:
        return 0.0
    return float(np.linalg.norm(m, 2))


def empirical_covariance(samples) -> np.ndarray:
    """Mean-centred covariance of the rows of ``samples`` with ``1/(n-1)`` scaling."""
    x = as_matrix(samples, "samples")
    n = x.shape[0]
    if n < 2:
        raise ValueError(f"need at least 2 samples, got {n}")
    xc = x - x.mean(axis=0)
    cov = xc.T @ xc / (n - 1)
    return 0.5 * (cov + cov.T)


# Asymptotic series coefficients B_2j / (2j) for psi(x) ~ ln x - 1/(2x) - sum c_j x^-2j
_PSI_SERIES = (
    1.0 / 12,
    -1.0 / 120,
    1.0 / 252,
    -1.0 / 240,
    1.0 / 132,
    -691.0 / 32760,
    1.0 / 12,
)


def _digamma_scalar(x: float) -> float:
    acc = 0.0
    while x < 6.0:
        acc -= 1.0 / x
        x += 1.0
    inv2 = 1.0 / (x * x)
    series = 0.0
    for c in reversed(_PSI_SERIES):
        series = series * inv2 + c
    return acc + math.log(x) - 0.5 / x - series * inv2


def digamma(x):
    """Digamma function for positive arguments (scalar or array).

    Shifts the argument above 6 with ``psi(x + 1) = psi(x) + 1/x`` and then
    sums the asymptotic expansion; absolute error is below 1e-12.
    """
    if np.isscalar(x):
        x = float(x)
        if not x > 0:
            raise ValueError(f"digamma needs x > 0, got {x}")
        return _digamma_scalar(x)
    x = np.asarray(x, dtype=np.float64)
    if not np.all(x > 0):
        raise ValueError("digamma needs x > 0")
    x = x.copy()
    acc = np.zeros_like(x)
    low = x < 6.0
    while np.any(low):
        acc[low] -= 1.0 / x[low]
        x[low] += 1.0
        low = x < 6.0
    inv2 = 1.0 / (x * x)
    series = np.zeros_like(x)
    for c in reversed(_PSI_SERIES):
        series = series * inv2 + c
    return acc + np.log(x) - 0.5 / x - series * inv2
