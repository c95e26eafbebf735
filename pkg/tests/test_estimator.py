import math

import numpy as np
import pytest

from ksmi.estimator import (
    KsmiConfig,
    KsmiReport,
    bound_constant,
    estimate_ksmi,
    fit_gaussian_surrogate,
    lipschitz_check,
    mc_error_bound,
    model_bound,
    project_samples,
    projected_entropy,
    residual_vs_gaussian,
)
from ksmi.gaussmodel import (
    GaussianJoint,
    PairedSamples,
    frame_pair,
    make_common_signal_model,
    make_isotropic_model,
    projected_mi_values,
    sample_joint,
    sample_sinusoidal_model,
)
from ksmi.knn_mi import ksg_mi
from ksmi.matkit import RngStream, StiefelFrame, sample_stiefel
from ksmi.neural_mi import TrainConfig


def independent_samples(n, d, seed):
    g = RngStream(seed).generator()
    return PairedSamples(g.standard_normal((n, d)), g.standard_normal((n, d)))


class TestConfig:
    @pytest.mark.parametrize("kw", [{"k": 0}, {"m": 0}, {"inner": "mine"}])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            KsmiConfig(**kw)

    def test_k_above_dimension(self):
        with pytest.raises(ValueError):
            estimate_ksmi(independent_samples(50, 2, 0), KsmiConfig(k=3, m=2))


class TestProjection:
    def test_identity_frame(self):
        s = independent_samples(20, 3, 1)
        out = project_samples(s, StiefelFrame(np.eye(3)), StiefelFrame(np.eye(3)))
        assert np.array_equal(out.x, s.x) and np.array_equal(out.y, s.y)

    def test_first_coordinate(self):
        s = independent_samples(20, 3, 1)
        e1 = StiefelFrame.coordinate(3, 1)
        out = project_samples(s, e1, e1)
        assert np.array_equal(out.x[:, 0], s.x[:, 0]) and np.array_equal(out.y[:, 0], s.y[:, 0])

    def test_contraction(self):
        s = independent_samples(200, 6, 2)
        a = sample_stiefel(2, 6, RngStream(1))
        out = project_samples(s, a, a)
        assert np.all(np.linalg.norm(out.x, axis=1) <= np.linalg.norm(s.x, axis=1) + 1e-12)

    def test_mismatch(self):
        s = independent_samples(20, 3, 1)
        with pytest.raises(ValueError):
            project_samples(s, StiefelFrame.coordinate(4, 1), StiefelFrame.coordinate(3, 1))
        with pytest.raises(ValueError):
            project_samples(s, StiefelFrame.coordinate(3, 1), StiefelFrame.coordinate(3, 2))


class TestEstimate:
    def test_independent_zero_band(self):
        rep = estimate_ksmi(independent_samples(4000, 5, 3), KsmiConfig(k=1, m=100))
        assert abs(rep.estimate) <= 0.02

    def test_report_fields(self):
        s = independent_samples(300, 4, 1)
        rep = estimate_ksmi(s, KsmiConfig(k=2, m=7, seed=3))
        assert (rep.k, rep.m, rep.n) == (2, 7, 300)
        assert rep.per_projection_mi.shape == (7,)
        assert abs(rep.estimate - rep.per_projection_mi.mean()) < 1e-12
        assert rep.empirical_std == pytest.approx(np.std(rep.per_projection_mi, ddof=1))
        assert rep.theory_bound is None

    def test_values_are_ksg_on_each_frame(self):
        s = sample_joint(make_common_signal_model(4, 2, 0), 400, RngStream(2))
        cfg = KsmiConfig(k=2, m=3, seed=5)
        rep = estimate_ksmi(s, cfg)
        for j in range(3):
            a, b = frame_pair(4, 4, 2, cfg.frames, j)
            assert rep.per_projection_mi[j] == ksg_mi(project_samples(s, a, b), cfg.ksg)

    def test_threads_do_not_change_output(self):
        s = sample_joint(make_common_signal_model(5, 2, 0), 500, RngStream(2))
        cfg = KsmiConfig(k=2, m=12, seed=1)
        a = estimate_ksmi(s, cfg, workers=1)
        b = estimate_ksmi(s, cfg, workers=4)
        assert np.array_equal(a.per_projection_mi, b.per_projection_mi)

    def test_neural_threads_do_not_change_output(self):
        s = sample_joint(make_common_signal_model(3, 1, 0), 300, RngStream(2))
        cfg = KsmiConfig(k=1, m=20, inner="neural", neural=TrainConfig(steps=40, hidden=8))
        a = estimate_ksmi(s, cfg, workers=1)
        b = estimate_ksmi(s, cfg, workers=3)
        assert np.array_equal(a.per_projection_mi, b.per_projection_mi)

    def test_theory_bound_populated(self):
        model = make_common_signal_model(5, 2, 0)
        s = sample_joint(model, 200, RngStream(0))
        rep = estimate_ksmi(s, KsmiConfig(k=1, m=4), theory_model=model)
        assert rep.theory_bound == pytest.approx(model_bound(model, 1, 4))

    def test_inner_failure_names_projection(self):
        s = PairedSamples(np.zeros((3, 2)), np.zeros((3, 2)))
        with pytest.raises(RuntimeError, match="projection 0"):
            estimate_ksmi(s, KsmiConfig(k=1, m=2))

    def test_from_values_single(self):
        rep = KsmiReport.from_values([0.25], k=1, n=10)
        assert rep.estimate == 0.25 and rep.empirical_std == 0.0


class TestBound:
    def test_plug_in(self):
        assert mc_error_bound(1, 10, 10, 1000, 1.0, 1.0, 1.0) == pytest.approx(0.296984848098350, abs=1e-12)

    def test_constant(self):
        assert bound_constant(1.0, 1.0, 1.0) == 21.0
        assert bound_constant(2.0, 8.0, 0.5) == pytest.approx(42.0)

    def test_m_scaling(self):
        b1 = mc_error_bound(2, 7, 9, 100, 1.3, 2.0, 0.7)
        b4 = mc_error_bound(2, 7, 9, 400, 1.3, 2.0, 0.7)
        assert b4 == pytest.approx(b1 / 2, rel=1e-15)

    def test_d_scaling(self):
        b1 = mc_error_bound(1, 10, 10, 100, 1.0, 1.0, 1.0)
        b2 = mc_error_bound(1, 20, 20, 100, 1.0, 1.0, 1.0)
        assert b2 == pytest.approx(b1 / math.sqrt(2), rel=1e-15)

    @pytest.mark.parametrize("bad", [0, -1.0])
    def test_rejects_non_positive(self, bad):
        with pytest.raises(ValueError):
            mc_error_bound(1, 10, 10, 100, bad, 1.0, 1.0)

    def test_model_bound_identity(self):
        model = GaussianJoint(np.eye(10), np.eye(10), np.zeros((10, 10)))
        assert model_bound(model, 1, 1000) == pytest.approx(0.296984848098350, abs=1e-12)

    @pytest.mark.parametrize("d", [10, 20, 40])
    @pytest.mark.parametrize("k", [1, 2])
    def test_constant_dominates_std(self, d, k):
        model = make_common_signal_model(d, 2, 0)
        vals = projected_mi_values(model, k, 300, RngStream(d * 10 + k))
        c = model_bound(model, k, 1)
        assert np.std(vals, ddof=1) <= c


class TestSurrogate:
    def test_recovers_covariance(self):
        model = make_common_signal_model(3, 1, 0)
        sur = fit_gaussian_surrogate(sample_joint(model, 100_000, RngStream(1)))
        scale = max(1.0, np.max(np.abs(model.joint_cov)))
        assert np.max(np.abs(sur.joint_cov - model.joint_cov)) < 0.05 * scale

    def test_duplicated_rows(self):
        s = independent_samples(500, 2, 4)
        twice = PairedSamples(np.vstack([s.x, s.x]), np.vstack([s.y, s.y]))
        a = fit_gaussian_surrogate(s).joint_cov
        b = fit_gaussian_surrogate(twice).joint_cov
        # 1/(n-1) scaling: b = a (n - 1) n2 / (n (n2 - 1)) with n2 = 2n
        n = 500
        np.testing.assert_allclose(b, a * (n - 1) * 2 * n / (n * (2 * n - 1)), atol=1e-12)

    def test_independent_cross_block(self):
        n = 20_000
        sur = fit_gaussian_surrogate(independent_samples(n, 3, 5))
        assert np.all(np.abs(sur.cross) < 3 / math.sqrt(n))

    def test_too_few(self):
        with pytest.raises(ValueError):
            fit_gaussian_surrogate(independent_samples(1, 2, 0))

    def test_warns_when_underdetermined(self, caplog):
        with caplog.at_level("WARNING"):
            fit_gaussian_surrogate(independent_samples(4, 3, 0))
        assert "samples" in caplog.text


class TestResidual:
    def test_gaussian_data_small(self):
        model = make_common_signal_model(6, 2, 0)
        s = sample_joint(model, 4000, RngStream(3))
        cfg = KsmiConfig(k=1, m=100, seed=2)
        res = residual_vs_gaussian(s, cfg, oracle_m=2000)
        assert res.residual == pytest.approx(res.ksmi_hat - res.ksmi_gauss)
        # KSG bias at this size is a few 1e-3; the shared frames cancel most MC noise
        assert abs(res.residual) < 0.03 + 3 * res.hat_report.empirical_std / math.sqrt(cfg.m)

    def test_sinusoidal_finite(self):
        s = sample_sinusoidal_model(10, 2000, RngStream(1))
        res = residual_vs_gaussian(s, KsmiConfig(k=1, m=20), oracle_m=200)
        assert math.isfinite(res.residual)

    def test_independent_non_gaussian(self):
        g = RngStream(6).generator()
        s = PairedSamples(g.exponential(size=(3000, 3)), g.uniform(size=(3000, 3)))
        res = residual_vs_gaussian(s, KsmiConfig(k=1, m=40), oracle_m=500)
        assert abs(res.ksmi_hat) < 0.02 and abs(res.ksmi_gauss) < 0.01
        assert abs(res.residual) < 0.03


class TestLipschitz:
    def test_same_frame(self):
        sigma = np.diag([1.0, 2.0, 3.0])
        a = sample_stiefel(2, 3, RngStream(0)).cols
        assert projected_entropy(sigma, a) - projected_entropy(sigma, a) == 0.0

    def test_isotropic_constant_entropy(self):
        sigma = 2.5 * np.eye(5)
        h = [projected_entropy(sigma, sample_stiefel(2, 5, RngStream(i)).cols) for i in range(20)]
        assert np.ptp(h) < 1e-12
        model = GaussianJoint(sigma, np.eye(1), np.zeros((5, 1)))
        assert lipschitz_check(model, 2, 50, RngStream(1)) < 0

    def test_entropy_closed_form(self):
        sigma = np.diag([4.0, 9.0])
        h = projected_entropy(sigma, np.eye(2)[:, :1])
        assert h == pytest.approx(0.5 * math.log(2 * math.pi * math.e * 4.0))

    def test_anisotropic(self):
        d = 8
        model = GaussianJoint(np.diag(np.arange(1.0, d + 1)), np.eye(1), np.zeros((d, 1)))
        assert lipschitz_check(model, 2, 1000, RngStream(4)) <= 1e-9

    def test_near_pairs_are_tight(self):
        # the near-frame trials make the bound nearly active, so the margin is small
        d = 6
        model = GaussianJoint(np.diag(np.geomspace(0.1, 10, d)), np.eye(1), np.zeros((d, 1)))
        worst = lipschitz_check(model, 1, 200, RngStream(2))
        assert -0.1 < worst <= 1e-9

    def test_bad_trials(self):
        with pytest.raises(ValueError):
            lipschitz_check(make_isotropic_model(3, 0.0), 1, 0, RngStream(0))
