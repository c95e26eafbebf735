"""k-sliced mutual information: Monte-Carlo estimation over random
k-dimensional projections, exact Gaussian oracles, error bounds and
synthetic benchmarks."""

from .bench import (
    TrialSpec,
    auc_from_scores,
    run_dimension_sweep,
    run_independence_benchmark,
    run_neural_rate_sweep,
)
from .estimator import (
    KsmiConfig,
    KsmiReport,
    estimate_ksmi,
    lipschitz_check,
    mc_error_bound,
    residual_vs_gaussian,
)
from .gaussmodel import (
    GaussianJoint,
    PairedSamples,
    SyntheticModelSpec,
    gaussian_ksmi_asymptotic,
    gaussian_ksmi_exact_mc,
    gaussian_mi,
    make_common_signal_model,
    make_isotropic_model,
    projected_gaussian_mi,
    sample_joint,
    sample_sinusoidal_model,
)
from .knn_mi import KsgConfig, ksg_mi
from .matkit import RngStream, StiefelFrame, sample_stiefel
from .neural_mi import ReluNet, TrainConfig, train_dv_mi

__version__ = "0.1.0"
