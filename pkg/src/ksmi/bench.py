"""Synthetic experiment harness: independence-testing AUC, dimension sweeps
of the Gaussian k-SMI and its Monte-Carlo spread, and neural-estimator
convergence sweeps."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Union

import numpy as np

from .estimator import KsmiConfig, bound_constant, estimate_ksmi
from .gaussmodel import (
    GaussianJoint,
    PairedSamples,
    SyntheticModelSpec,
    fisher_opnorm,
    make_common_signal_model,
    make_isotropic_model,
    projected_mi_values,
    sample_joint,
    sample_sinusoidal_model,
)
from .knn_mi import KsgConfig
from .matkit import RngStream, operator_norm
from .neural_mi import TrainConfig, derangement_shift

__all__ = [
    "IsotropicFamily",
    "TrialSpec",
    "RocPoint",
    "auc_from_scores",
    "roc_curve",
    "run_independence_benchmark",
    "run_dimension_sweep",
    "run_neural_rate_sweep",
    "INDEPENDENCE_COLUMNS",
    "DIMENSION_COLUMNS",
    "NEURAL_COLUMNS",
]

log = logging.getLogger(__name__)

INDEPENDENCE_COLUMNS = ("d", "k", "n", "auc")
DIMENSION_COLUMNS = ("d", "k", "population_ksmi_nats", "empirical_std_nats", "theory_bound_nats")
NEURAL_COLUMNS = ("k", "d", "n", "estimate_nats", "truth_nats", "abs_error_nats")


@dataclass(frozen=True)
class IsotropicFamily:
    """``Sigma_X = Sigma_Y = I_d``, ``C = c I_d``; ``c = 1`` gives ``X = Y``."""

    c: float = 0.5

    def __call__(self, d: int) -> GaussianJoint:
        return make_isotropic_model(d, self.c)


ModelLike = Union[SyntheticModelSpec, GaussianJoint, Callable[[int], GaussianJoint]]


@dataclass(frozen=True)
class TrialSpec:
    """Grid experiment description.

    ``model`` is a named synthetic family (its ``d`` is replaced by each
    entry of ``d_grid``), a fixed :class:`GaussianJoint`, or a callable
    mapping ``d`` to a Gaussian model.
    """

    model: ModelLike
    n_grid: tuple[int, ...] = (1000,)
    k_grid: tuple[int, ...] = (1,)
    d_grid: tuple[int, ...] = (10,)
    m: int = 1000
    trials: int = 100
    inner: str = "ksg"
    ksg: KsgConfig = field(default_factory=KsgConfig)
    neural: TrainConfig = field(default_factory=TrainConfig)
    seed: int = 0

    def __post_init__(self):
        for name in ("n_grid", "k_grid", "d_grid"):
            grid = tuple(getattr(self, name))
            if not grid:
                raise ValueError(f"{name} must be nonempty")
            if any(v < 1 for v in grid):
                raise ValueError(f"{name} entries must be positive")
            object.__setattr__(self, name, grid)
        if self.trials < 1 or self.m < 1:
            raise ValueError("trials and m must be >= 1")
        if isinstance(self.model, GaussianJoint) and self.d_grid != (self.model.dx,):
            object.__setattr__(self, "d_grid", (self.model.dx,))

    def gaussian(self, d: int) -> GaussianJoint | None:
        """The Gaussian law at dimension ``d``, or None for non-Gaussian families."""
        if isinstance(self.model, GaussianJoint):
            return self.model
        if isinstance(self.model, SyntheticModelSpec):
            if self.model.family == "common_signal":
                return make_common_signal_model(d, self.model.rank, self.model.seed)
            return None
        return self.model(d)

    def sinusoidal(self) -> bool:
        return isinstance(self.model, SyntheticModelSpec) and self.model.family == "sinusoidal"


@dataclass(frozen=True)
class RocPoint:
    threshold: float
    tpr: float
    fpr: float


def auc_from_scores(null_scores, dep_scores) -> float:
    """Exact Mann-Whitney AUC, ``P(dep > null) + P(dep = null) / 2``."""
    null = np.sort(np.asarray(null_scores, dtype=np.float64))
    dep = np.asarray(dep_scores, dtype=np.float64)
    if null.size == 0 or dep.size == 0:
        raise ValueError("score sets must be nonempty")
    below = np.searchsorted(null, dep, side="left")
    upto = np.searchsorted(null, dep, side="right")
    # integer counts, halved ties: exact up to the final division
    twice = int(np.sum(below + upto))
    return twice / (2.0 * null.size * dep.size)


def roc_curve(null_scores, dep_scores) -> list[RocPoint]:
    """ROC points of the test "declare dependence when score >= threshold",
    swept over every distinct score from high to low (plus the empty test)."""
    null = np.asarray(null_scores, dtype=np.float64)
    dep = np.asarray(dep_scores, dtype=np.float64)
    pts = [RocPoint(math.inf, 0.0, 0.0)]
    for thr in np.unique(np.concatenate([null, dep]))[::-1]:
        pts.append(RocPoint(float(thr), float(np.mean(dep >= thr)), float(np.mean(null >= thr))))
    return pts


def _dependent(spec: TrialSpec, d: int, n: int, rng: RngStream) -> PairedSamples:
    if spec.sinusoidal():
        return sample_sinusoidal_model(d, n, rng)
    return sample_joint(spec.gaussian(d), n, rng)


def _null(spec: TrialSpec, d: int, n: int, rng: RngStream) -> PairedSamples:
    if spec.sinusoidal():
        s = sample_sinusoidal_model(d, n, rng)
        if n < 2:
            return s
        return PairedSamples(s.x, s.y[derangement_shift(n)])
    g = spec.gaussian(d)
    return sample_joint(GaussianJoint(g.sigma_x, g.sigma_y, np.zeros_like(g.cross)), n, rng)


def _estimator(spec: TrialSpec, k: int, m: int, seed: int) -> KsmiConfig:
    return KsmiConfig(k=k, m=m, inner=spec.inner, ksg=spec.ksg, neural=spec.neural, seed=seed)


def _seed_of(rng: RngStream) -> int:
    return rng.stream_id & ((1 << 63) - 1)


class BenchmarkTimeout(TimeoutError):
    """Raised when a benchmark passes its deadline; ``rows`` holds finished cells."""

    def __init__(self, message: str, rows: list[tuple]):
        super().__init__(message)
        self.rows = rows


def run_independence_benchmark(
    spec: TrialSpec,
    workers: int = 1,
    progress: Callable[[str], None] | None = None,
    deadline: float | None = None,
) -> list[tuple]:
    """AUC of the thresholded k-SMI independence test for every ``(d, k, n)``.

    Each cell scores ``trials`` dependent datasets and ``trials`` null
    datasets (same marginals; Gaussian models set the cross-covariance to
    zero, the sinusoidal model pairs ``x_i`` with ``y_{i+1}``).  Datasets
    are shared across ``k`` within a ``(d, n)`` pair.

    ``deadline`` is a ``time.monotonic()`` instant checked before every
    trial; passing it raises :class:`BenchmarkTimeout`.
    """
    rows = []
    root = RngStream(spec.seed)
    for d in spec.d_grid:
        for k in spec.k_grid:
            if k > d:
                raise ValueError(f"k={k} exceeds d={d}")
            for n in spec.n_grid:
                dep, null = [], []
                for t in range(spec.trials):
                    if deadline is not None and time.monotonic() > deadline:
                        raise BenchmarkTimeout(f"deadline passed at d={d} k={k} n={n} trial {t}", rows)
                    cell = root.child("d", d).child("n", n).child("trial", t)
                    cfg = _estimator(spec, k, spec.m, _seed_of(cell.child("frames", k)))
                    dep.append(estimate_ksmi(_dependent(spec, d, n, cell.child("dep")), cfg, workers=workers).estimate)
                    null.append(estimate_ksmi(_null(spec, d, n, cell.child("null")), cfg, workers=workers).estimate)
                auc = auc_from_scores(null, dep)
                rows.append((d, k, n, auc))
                if progress:
                    progress(f"d={d} k={k} n={n} auc={auc:.4f}")
    return rows


def run_dimension_sweep(spec: TrialSpec) -> list[tuple]:
    """Exact-oracle k-SMI and per-projection spread versus ``d`` and ``k``.

    Columns are :data:`DIMENSION_COLUMNS`; the first two values are averaged
    over ``spec.trials`` independent frame seeds of ``spec.m`` frames each,
    and the bound column is ``C(mu) sqrt(k (dx + dy) / (dx dy))``, the
    quantity the spread is bounded by.
    """
    rows = []
    root = RngStream(spec.seed)
    for d in sorted(spec.d_grid):
        model = spec.gaussian(d)
        if model is None:
            raise ValueError("dimension sweeps need a Gaussian model")
        try:
            c = bound_constant(operator_norm(model.sigma_x), operator_norm(model.sigma_y), fisher_opnorm(model))
        except ValueError:
            c = math.inf
        for k in sorted(spec.k_grid):
            means, stds = [], []
            for t in range(spec.trials):
                vals = projected_mi_values(model, k, max(spec.m, 2), root.child("d", d).child("trial", t))
                means.append(np.mean(vals))
                stds.append(np.std(vals, ddof=1))
            bound = c * math.sqrt(k * (model.dx + model.dy) / (model.dx * model.dy))
            rows.append((d, k, float(np.mean(means)), float(np.mean(stds)), bound))
    return rows


def run_neural_rate_sweep(
    spec: TrialSpec, truth_m: int = 5000, workers: int = 1, progress: Callable[[str], None] | None = None
) -> list[tuple]:
    """Neural k-SMI estimates with ``n = m`` growing along ``spec.n_grid``.

    The truth column is the exact-oracle k-SMI with ``truth_m`` frames from
    a stream that does not depend on the schedule.  ``estimate`` is the
    mean over ``spec.trials`` repetitions and ``abs_error`` the mean absolute
    error of the individual repetitions.
    """
    rows = []
    root = RngStream(spec.seed)
    for d in spec.d_grid:
        model = spec.gaussian(d)
        if model is None:
            raise ValueError("neural rate sweeps need a Gaussian model with known truth")
        for k in spec.k_grid:
            truth = float(np.mean(projected_mi_values(model, k, truth_m, root.child("truth").child("d", d))))
            for n in spec.n_grid:
                ests = []
                for t in range(spec.trials):
                    cell = root.child("d", d).child("n", n).child("trial", t)
                    cfg = _estimator(spec, k, n, _seed_of(cell.child("frames", k)))
                    cfg = replace(cfg, inner="neural")
                    ests.append(estimate_ksmi(sample_joint(model, n, cell.child("data")), cfg, workers=workers).estimate)
                ests = np.asarray(ests)
                rows.append((k, d, n, float(ests.mean()), truth, float(np.mean(np.abs(ests - truth)))))
                if progress:
                    progress(f"k={k} d={d} n=m={n} estimate={ests.mean():.4f} truth={truth:.4f}")
    return rows
