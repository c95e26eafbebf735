"""Jointly Gaussian models: closed-form (projected) mutual information,
the large-dimension k-SMI approximation, and synthetic data generators.

All information quantities are in nats.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .matkit import (
    RngStream,
    StiefelFrame,
    as_matrix,
    matrix_sqrt_psd,
    operator_norm,
    sample_gaussian_matrix,
    sample_stiefel,
    sym_eig,
)

__all__ = [
    "GaussianJoint",
    "PairedSamples",
    "SyntheticModelSpec",
    "gaussian_mi",
    "projected_gaussian_mi",
    "projected_mi_values",
    "frame_pair",
    "gaussian_ksmi_exact_mc",
    "gaussian_ksmi_asymptotic",
    "fisher_opnorm",
    "sample_joint",
    "make_common_signal_model",
    "make_isotropic_model",
    "sample_sinusoidal_model",
    "sample_model",
]

log = logging.getLogger(__name__)

# Singular values of projected correlation matrices are clamped here before
# the log-det; only reachable through round-off.
_CORR_CLAMP = 1.0 - 1e-10


@dataclass(frozen=True)
class PairedSamples:
    """``n`` paired observations; row ``i`` of ``x`` goes with row ``i`` of ``y``."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = as_matrix(self.x, "x")
        y = as_matrix(self.y, "y")
        if x.shape[0] != y.shape[0]:
            raise ValueError(f"x has {x.shape[0]} rows but y has {y.shape[0]}")
        if x.shape[0] < 1:
            raise ValueError("need at least one sample")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def dx(self) -> int:
        return self.x.shape[1]

    @property
    def dy(self) -> int:
        return self.y.shape[1]


@dataclass(frozen=True)
class GaussianJoint:
    """Zero-mean Gaussian law of ``(X, Y)`` with marginal covariances and
    cross-covariance ``cross = E[X Y^T]``."""

    sigma_x: np.ndarray
    sigma_y: np.ndarray
    cross: np.ndarray

    def __post_init__(self):
        sx = as_matrix(self.sigma_x, "sigma_x")
        sy = as_matrix(self.sigma_y, "sigma_y")
        c = as_matrix(self.cross, "cross")
        if sx.shape[0] != sx.shape[1] or sy.shape[0] != sy.shape[1]:
            raise ValueError("marginal covariances must be square")
        if c.shape != (sx.shape[0], sy.shape[0]):
            raise ValueError(f"cross has shape {c.shape}, expected {(sx.shape[0], sy.shape[0])}")
        for name, m in (("sigma_x", sx), ("sigma_y", sy), ("cross", c)):
            m.setflags(write=False)
            object.__setattr__(self, name, m)
        # raises if the assembled covariance is not symmetric PSD
        matrix_sqrt_psd(self.joint_cov)

    @property
    def dx(self) -> int:
        return self.sigma_x.shape[0]

    @property
    def dy(self) -> int:
        return self.sigma_y.shape[0]

    @property
    def joint_cov(self) -> np.ndarray:
        return np.block([[self.sigma_x, self.cross], [self.cross.T, self.sigma_y]])

    def correlation(self) -> np.ndarray:
        """``Sigma_X^{-1/2} C Sigma_Y^{-1/2}``; raises for singular marginals."""
        return _inv_sqrt(self.sigma_x) @ self.cross @ _inv_sqrt(self.sigma_y)

    def transformed(self, u, v) -> GaussianJoint:
        """Law of ``(U X, V Y)`` for square matrices ``u``, ``v``."""
        u = as_matrix(u)
        v = as_matrix(v)
        return GaussianJoint(u @ self.sigma_x @ u.T, v @ self.sigma_y @ v.T, u @ self.cross @ v.T)

    @classmethod
    def block_diagonal(cls, first: GaussianJoint, second: GaussianJoint) -> GaussianJoint:
        """Law of ``((X1, X2), (Y1, Y2))`` with the two pairs independent."""

        def blk(a, b):
            return np.block(
                [[a, np.zeros((a.shape[0], b.shape[1]))], [np.zeros((b.shape[0], a.shape[1])), b]]
            )

        return cls(
            blk(first.sigma_x, second.sigma_x),
            blk(first.sigma_y, second.sigma_y),
            blk(first.cross, second.cross),
        )


@dataclass(frozen=True)
class SyntheticModelSpec:
    """Named synthetic family: ``common_signal`` (Gaussian) or ``sinusoidal``."""

    family: str
    d: int
    rank: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.family not in ("common_signal", "sinusoidal"):
            raise ValueError(f"unknown family {self.family!r}")
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if self.family == "common_signal" and not 1 <= self.rank <= self.d:
            raise ValueError(f"rank must lie in [1, d], got {self.rank}")


def _inv_sqrt(m: np.ndarray) -> np.ndarray:
    lam, v = sym_eig(m)
    if lam[0] <= 1e-12 * max(lam[-1], 0.0) or lam[0] <= 0:
        raise ValueError("covariance matrix is singular")
    return (v / np.sqrt(lam)) @ v.T


def _logdet_mi(r: np.ndarray) -> float:
    s = np.linalg.svd(r, compute_uv=False)
    s = np.minimum(s, _CORR_CLAMP)
    return float(-0.5 * np.sum(np.log1p(-s * s)))


def gaussian_mi(model: GaussianJoint) -> float:
    """``I(X; Y) = -1/2 log det(I - R R^T)`` with ``R`` the correlation matrix."""
    r = model.correlation()
    if r.size and operator_norm(r) >= _CORR_CLAMP:
        raise ValueError("correlation has operator norm >= 1; mutual information is infinite")
    return max(_logdet_mi(r), 0.0)


def projected_gaussian_mi(model: GaussianJoint, a: StiefelFrame, b: StiefelFrame) -> float:
    """Exact ``I(A^T X; B^T Y)`` for frames ``a`` (on X) and ``b`` (on Y)."""
    if a.d != model.dx or b.d != model.dy:
        raise ValueError(
            f"frame dimensions ({a.d}, {b.d}) do not match model ({model.dx}, {model.dy})"
        )
    if a.k != b.k:
        raise ValueError(f"frames must have equal k, got {a.k} and {b.k}")
    return _projected_mi(model, a.cols, b.cols)


def _projected_mi(model: GaussianJoint, a: np.ndarray, b: np.ndarray) -> float:
    # Equivalent to -1/2 logdet(I - Rt Rt^T) with Rt = At^T R Bt, but works
    # directly with the projected covariances so singular Sigma_X, Sigma_Y
    # are fine as long as the projected ones are not.
    pxx = a.T @ model.sigma_x @ a
    pyy = b.T @ model.sigma_y @ b
    pxy = a.T @ model.cross @ b
    r = _inv_sqrt(pxx) @ pxy @ _inv_sqrt(pyy)
    return _logdet_mi(r)


def projected_mi_values(model: GaussianJoint, k: int, m: int, rng: RngStream) -> np.ndarray:
    """Exact projected MI for ``m`` independent Haar frame pairs.

    Frame pair ``j`` is drawn from the substreams ``("frame_x", j)`` and
    ``("frame_y", j)`` of ``rng``, the same ones the sample estimator uses.
    """
    if not 1 <= k <= min(model.dx, model.dy):
        raise ValueError(f"need 1 <= k <= min(dx, dy), got k={k}")
    out = np.empty(m)
    for j in range(m):
        a, b = frame_pair(model.dx, model.dy, k, rng, j)
        out[j] = _projected_mi(model, a.cols, b.cols)
    return out


def frame_pair(dx: int, dy: int, k: int, rng: RngStream, j: int) -> tuple[StiefelFrame, StiefelFrame]:
    """The ``j``-th independent ``(A, B)`` draw of a Monte-Carlo run."""
    return (
        sample_stiefel(k, dx, rng.child("frame_x", j)),
        sample_stiefel(k, dy, rng.child("frame_y", j)),
    )


def gaussian_ksmi_exact_mc(
    model: GaussianJoint, k: int, m: int, rng: RngStream
) -> tuple[float, float]:
    """Monte-Carlo k-SMI with the exact projected-MI integrand.

    Returns the mean over ``m`` frame pairs and the sample standard
    deviation of the per-pair values.
    """
    if m < 2:
        raise ValueError(f"need m >= 2, got {m}")
    vals = projected_mi_values(model, k, m, rng)
    return float(np.mean(vals)), float(np.std(vals, ddof=1))


def gaussian_ksmi_asymptotic(model: GaussianJoint, k: int) -> float:
    """Leading-order k-SMI ``k^2 ||C||_F^2 / (2 tr(Sigma_X) tr(Sigma_Y))``.

    The approximation is only guaranteed for bounded condition numbers and
    ``||Sigma_X^{-1/2} C Sigma_Y^{-1}||_op < 1``; violations are logged.
    """
    _warn_outside_regime(model)
    num = k * k * float(np.sum(model.cross**2))
    return num / (2.0 * float(np.trace(model.sigma_x)) * float(np.trace(model.sigma_y)))


def _warn_outside_regime(model: GaussianJoint) -> None:
    try:
        lx = sym_eig(model.sigma_x)[0]
        ly = sym_eig(model.sigma_y)[0]
        kappa = max(lx[-1] / lx[0], ly[-1] / ly[0])
        rho = operator_norm(_inv_sqrt(model.sigma_x) @ model.cross @ np.linalg.inv(model.sigma_y))
    except (ValueError, np.linalg.LinAlgError):
        log.warning("asymptotic k-SMI: singular marginal covariance")
        return
    if rho >= 1.0:
        log.warning("asymptotic k-SMI: correlation bound %.3f >= 1 (condition number %.3g)", rho, kappa)


def fisher_opnorm(model: GaussianJoint) -> float:
    """``||Sigma_XY^{-1}||_op``, the Fisher-information operator norm of the model."""
    lam = sym_eig(model.joint_cov)[0]
    if lam[0] <= 1e-12 * max(lam[-1], 0.0) or lam[0] <= 0:
        raise ValueError("joint covariance is singular")
    return float(1.0 / lam[0])


def sample_joint(model: GaussianJoint, n: int, rng: RngStream) -> PairedSamples:
    """``n`` i.i.d. draws ``Sigma_XY^{1/2} z`` with ``z`` standard normal."""
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    root = matrix_sqrt_psd(model.joint_cov)
    z = sample_gaussian_matrix(n, model.dx + model.dy, rng) @ root
    return PairedSamples(z[:, : model.dx], z[:, model.dx :])


def make_common_signal_model(d: int, rank: int, seed: int) -> GaussianJoint:
    """``X = P1 V + Z1``, ``Y = P2 V + Z2`` with a shared ``rank``-dimensional
    signal ``V`` and Gaussian loading matrices drawn from ``seed``."""
    SyntheticModelSpec("common_signal", d, rank, seed)
    root = RngStream(seed).child("common_signal", d * 1000 + rank)
    p1 = sample_gaussian_matrix(d, rank, root.child("P1"))
    p2 = sample_gaussian_matrix(d, rank, root.child("P2"))
    eye = np.eye(d)
    return GaussianJoint(eye + p1 @ p1.T, eye + p2 @ p2.T, p1 @ p2.T)


def make_isotropic_model(d: int, c: float) -> GaussianJoint:
    """``Sigma_X = Sigma_Y = I_d`` and ``C = c I_d``."""
    eye = np.eye(d)
    return GaussianJoint(eye, eye, c * eye)


def sample_sinusoidal_model(d: int, n: int, rng: RngStream) -> PairedSamples:
    """``Y = (sin(1^T X) 1 / sqrt(d) + Z) / sqrt(2)`` with ``X, Z ~ N(0, I_d)``."""
    if d < 1 or n < 1:
        raise ValueError(f"need d, n >= 1, got d={d}, n={n}")
    x = sample_gaussian_matrix(n, d, rng.child("X"))
    z = sample_gaussian_matrix(n, d, rng.child("Z"))
    feature = np.sin(x.sum(axis=1, keepdims=True)) / np.sqrt(d)
    return PairedSamples(x, (feature + z) / np.sqrt(2.0))


def sample_model(spec: SyntheticModelSpec, n: int, rng: RngStream) -> PairedSamples:
    """Draw ``n`` samples from a named synthetic family."""
    if spec.family == "common_signal":
        return sample_joint(make_common_signal_model(spec.d, spec.rank, spec.seed), n, rng)
    return sample_sinusoidal_model(spec.d, n, rng)
