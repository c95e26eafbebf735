import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ksmi import bench
from ksmi.bench import (
    BenchmarkTimeout,
    IsotropicFamily,
    TrialSpec,
    auc_from_scores,
    roc_curve,
    run_dimension_sweep,
    run_independence_benchmark,
    run_neural_rate_sweep,
)
from ksmi.gaussmodel import GaussianJoint, SyntheticModelSpec, make_common_signal_model
from ksmi.neural_mi import TrainConfig


def pairwise_auc(null, dep):
    wins = sum((d > n) + 0.5 * (d == n) for d, n in itertools.product(dep, null))
    return wins / (len(null) * len(dep))


def threshold_auc(null, dep):
    """Trapezoidal area under the ROC traced by every threshold."""
    pts = roc_curve(null, dep)
    pts.append(type(pts[0])(-np.inf, 1.0, 1.0))
    fpr = [p.fpr for p in pts]
    tpr = [p.tpr for p in pts]
    return float(np.sum(np.diff(fpr) * (np.array(tpr[1:]) + np.array(tpr[:-1])) / 2))


class TestAuc:
    def test_hand_sets(self):
        assert auc_from_scores([0.1, 0.2], [0.3, 0.4]) == 1.0
        assert auc_from_scores([0.1, 0.3], [0.2, 0.4]) == 0.75

    def test_hand_sets_by_threshold_enumeration(self):
        assert threshold_auc([0.1, 0.2], [0.3, 0.4]) == 1.0
        assert threshold_auc([0.1, 0.3], [0.2, 0.4]) == 0.75

    def test_tie(self):
        assert auc_from_scores([1.0], [1.0]) == 0.5

    def test_separated(self):
        assert auc_from_scores(np.arange(10.0), np.arange(10.0) + 100) == 1.0

    def test_empty(self):
        with pytest.raises(ValueError):
            auc_from_scores([], [1.0])

    @pytest.mark.parametrize("seed", range(60))
    def test_vs_pairwise(self, seed):
        g = np.random.default_rng(seed)
        null = np.round(g.standard_normal(50), 1)
        dep = np.round(g.standard_normal(50) + 0.5, 1)
        assert abs(auc_from_scores(null, dep) - pairwise_auc(null, dep)) < 1e-12
        assert abs(threshold_auc(null, dep) - pairwise_auc(null, dep)) < 1e-12

    @settings(max_examples=100, deadline=None)
    @given(
        st.lists(st.integers(-5, 5), min_size=1, max_size=30),
        st.lists(st.integers(-5, 5), min_size=1, max_size=30),
    )
    def test_range_and_swap(self, null, dep):
        a = auc_from_scores(null, dep)
        assert 0.0 <= a <= 1.0
        assert a + auc_from_scores(dep, null) == 1.0


class TestTrialSpec:
    def test_grid_validation(self):
        with pytest.raises(ValueError):
            TrialSpec(IsotropicFamily(), n_grid=())
        with pytest.raises(ValueError):
            TrialSpec(IsotropicFamily(), k_grid=(0,))
        with pytest.raises(ValueError):
            TrialSpec(IsotropicFamily(), trials=0)

    def test_fixed_model_pins_dimension(self):
        spec = TrialSpec(make_common_signal_model(4, 2, 0), d_grid=(10, 20))
        assert spec.d_grid == (4,)


class TestIndependence:
    def test_null_vs_null_is_chance(self):
        spec = TrialSpec(IsotropicFamily(0.0), n_grid=(200,), k_grid=(1,), d_grid=(3,), m=3, trials=100, seed=1)
        [(d, k, n, auc)] = run_independence_benchmark(spec)
        assert (d, k, n) == (3, 1, 200)
        assert abs(auc - 0.5) <= 0.1

    def test_strong_signal(self):
        spec = TrialSpec(IsotropicFamily(0.8), n_grid=(200,), d_grid=(2,), m=3, trials=10)
        assert run_independence_benchmark(spec)[0][3] == 1.0

    def test_sinusoidal_null_by_shift(self):
        spec = TrialSpec(SyntheticModelSpec("sinusoidal", 2), n_grid=(300,), d_grid=(2,), m=4, trials=8)
        [(_, _, _, auc)] = run_independence_benchmark(spec)
        assert 0.0 <= auc <= 1.0

    def test_deterministic(self):
        spec = TrialSpec(
            SyntheticModelSpec("common_signal", 4, 2, 0), n_grid=(100, 150), k_grid=(1, 2), d_grid=(4,), m=3, trials=4
        )
        assert run_independence_benchmark(spec) == run_independence_benchmark(spec)

    def test_k_above_d(self):
        spec = TrialSpec(IsotropicFamily(), k_grid=(3,), d_grid=(2,), m=2, trials=2, n_grid=(50,))
        with pytest.raises(ValueError):
            run_independence_benchmark(spec)

    def test_deadline_keeps_finished_cells(self, monkeypatch):
        spec = TrialSpec(IsotropicFamily(0.8), n_grid=(60, 80), d_grid=(2,), m=2, trials=3)
        full = run_independence_benchmark(spec, deadline=float("inf"))
        assert full == run_independence_benchmark(spec)
        # clock reads 0 for the first cell's three checks, then jumps past the deadline
        ticks = iter([0.0, 0.0, 0.0])
        monkeypatch.setattr(bench.time, "monotonic", lambda: next(ticks, 10.0))
        with pytest.raises(BenchmarkTimeout) as info:
            run_independence_benchmark(spec, deadline=1.0)
        assert info.value.rows == full[:1]


class TestDimensionSweep:
    def test_isotropic_halves(self):
        spec = TrialSpec(IsotropicFamily(0.5), d_grid=(40, 10, 20), k_grid=(2, 1), m=400, trials=3)
        rows = run_dimension_sweep(spec)
        assert [(r[0], r[1]) for r in rows] == [(10, 1), (10, 2), (20, 1), (20, 2), (40, 1), (40, 2)]
        pop = {(r[0], r[1]): r[2] for r in rows}
        std = {(r[0], r[1]): r[3] for r in rows}
        for k in (1, 2):
            for d in (10, 20):
                # MC slack: 3 standard errors of each mean, relative to the value
                slack = 3 * (std[(d, k)] / pop[(d, k)] + std[(2 * d, k)] / pop[(2 * d, k)]) / np.sqrt(1200)
                assert abs(pop[(2 * d, k)] / pop[(d, k)] - 0.5) < 0.5 * (0.15 + slack)
        for d in (10, 20, 40):
            assert pop[(d, 2)] > pop[(d, 1)]

    def test_independent_rows_zero(self):
        spec = TrialSpec(IsotropicFamily(0.0), d_grid=(5,), k_grid=(1, 2), m=20, trials=2)
        for row in run_dimension_sweep(spec):
            assert row[2] == 0.0 and row[3] == 0.0

    def test_bound_column(self):
        spec = TrialSpec(IsotropicFamily(0.0), d_grid=(10,), k_grid=(1,), m=5, trials=1)
        [row] = run_dimension_sweep(spec)
        assert row[4] == pytest.approx(21 * np.sqrt(20 / 100))

    def test_rejects_non_gaussian(self):
        with pytest.raises(ValueError):
            run_dimension_sweep(TrialSpec(SyntheticModelSpec("sinusoidal", 3), d_grid=(3,), m=2, trials=1))


class TestNeuralSweep:
    fast = TrainConfig(steps=200, hidden=16)

    def test_independent_model(self):
        spec = TrialSpec(IsotropicFamily(0.0), n_grid=(128, 256), d_grid=(2,), k_grid=(1,), trials=1, neural=self.fast)
        for k, d, n, est, truth, err in run_neural_rate_sweep(spec, truth_m=50):
            assert truth == 0.0
            assert -0.02 <= est <= 0.05

    def test_truth_independent_of_schedule(self):
        base = dict(model=IsotropicFamily(0.7), d_grid=(2,), k_grid=(1,), trials=1, neural=TrainConfig(steps=20, hidden=4))
        a = run_neural_rate_sweep(TrialSpec(n_grid=(64,), **base), truth_m=300)
        b = run_neural_rate_sweep(TrialSpec(n_grid=(32, 128), **base), truth_m=300)
        assert a[0][4] == b[0][4] == b[1][4]

    def test_error_shrinks(self):
        spec = TrialSpec(
            GaussianJoint(np.eye(2), np.eye(2), 0.9 * np.eye(2)),
            n_grid=(32, 256),
            k_grid=(1,),
            trials=2,
            neural=TrainConfig(steps=300, hidden=16),
        )
        rows = run_neural_rate_sweep(spec, truth_m=2000)
        assert rows[-1][5] <= rows[0][5]
