"""Command-line interface: ``ksmi <subcommand> [options]``.

Exit codes are 0 on success, 1 for runtime or domain errors (bad data,
failed estimation, I/O) and 2 for usage errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import os
import sys
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import bench
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
    sample_joint,
    sample_sinusoidal_model,
)
from .knn_mi import KsgConfig
from .matkit import RngStream
from .neural_mi import TrainConfig

log = logging.getLogger("ksmi")

FAMILIES = ("common-signal", "sinusoidal", "isotropic")
REPORT_COLUMNS = ("k", "m", "n", "estimate_nats", "empirical_std", "theory_bound")


class UsageError(Exception):
    """Raised for invalid combinations of otherwise well-formed flags."""


@dataclass
class RunConfig:
    subcommand: str
    args: argparse.Namespace
    seed: int
    threads: int


# ---------------------------------------------------------------------------
# argument types


def _int_at_least(lo: int):
    def conv(text: str) -> int:
        try:
            v = int(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
        if v < lo:
            raise argparse.ArgumentTypeError(f"must be >= {lo}, got {v}")
        return v

    return conv


def _positive_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not (v > 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError(f"must be a positive finite number, got {text}")
    return v


def _nonneg_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not (v >= 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError(f"must be a non-negative finite number, got {text}")
    return v


def _unit_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not 0 <= v < 1:
        raise argparse.ArgumentTypeError(f"must lie in [0, 1), got {text}")
    return v


def _corr(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not -1 <= v <= 1:
        raise argparse.ArgumentTypeError(f"must lie in [-1, 1], got {text}")
    return v


def _int_list(text: str) -> tuple[int, ...]:
    try:
        vals = tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals or min(vals) < 1:
        raise argparse.ArgumentTypeError(f"expected positive integers, got {text!r}")
    return vals


pos_int = _int_at_least(1)


# ---------------------------------------------------------------------------
# parser


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=_int_at_least(0), default=None,
                   help="base seed (default: $KSMI_SEED, else 0)")
    p.add_argument("--threads", type=pos_int, default=1, help="worker threads")
    p.add_argument("--output", "-o", default=None, help="output CSV path (default: stdout)")
    p.add_argument("--verbose", "-v", action="store_true")


def _model_flags(p: argparse.ArgumentParser, required: bool = True) -> None:
    p.add_argument("--family", choices=FAMILIES, required=required, default=None)
    p.add_argument("--d", type=pos_int, default=10, help="dimension of X and Y")
    p.add_argument("--rank", type=pos_int, default=2, help="common-signal rank")
    p.add_argument("--c", type=_corr, default=0.5, help="isotropic cross-covariance scale")
    p.add_argument("--model-seed", type=_int_at_least(0), default=0,
                   help="seed of the random loadings of the common-signal family")


def _estimator_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--k", type=pos_int, default=1, help="projection dimension")
    p.add_argument("--m", type=pos_int, default=100, help="number of projection pairs")
    p.add_argument("--inner", choices=("ksg", "neural"), default="ksg")
    p.add_argument("--k-neighbors", type=pos_int, default=3, help="KSG neighbour order")
    p.add_argument("--jitter", type=_nonneg_float, default=1e-10, help="KSG tie-breaking noise scale")
    p.add_argument("--ell", type=pos_int, default=64, help="hidden units of the neural critic")
    p.add_argument("--steps", type=pos_int, default=4000, help="neural training steps")
    p.add_argument("--batch-size", type=pos_int, default=256)
    p.add_argument("--lr", type=_positive_float, default=5e-3, help="learning rate")
    p.add_argument("--momentum", type=_unit_float, default=0.9)
    p.add_argument("--project", action="store_true", help="project the critic onto the bounded class")
    p.add_argument("--bound-a", type=_positive_float, default=None, help="bounded-class parameter a")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ksmi", description="k-sliced mutual information estimation and benchmarks"
    )
    sub = parser.add_subparsers(dest="subcommand", required=True, metavar="SUBCOMMAND")

    p = sub.add_parser("sample", help="write a synthetic dataset to CSV")
    _model_flags(p)
    p.add_argument("--n", type=pos_int, required=True, help="number of samples")
    _common(p)

    p = sub.add_parser("estimate", help="estimate k-SMI of a paired CSV dataset")
    p.add_argument("--input", "-i", required=True, help="paired CSV (x1..,y1..)")
    _estimator_flags(p)
    _model_flags(p, required=False)
    _common(p)

    p = sub.add_parser("gaussian", help="exact Gaussian oracle values")
    _model_flags(p)
    p.add_argument("--k", type=pos_int, default=1)
    p.add_argument("--m", type=_int_at_least(2), default=2000)
    _common(p)

    p = sub.add_parser("bound", help="Monte-Carlo error bound")
    p.add_argument("--k", type=pos_int, required=True)
    p.add_argument("--dx", type=pos_int, required=True)
    p.add_argument("--dy", type=pos_int, required=True)
    p.add_argument("--m", type=pos_int, required=True)
    p.add_argument("--sigma-x-op", type=_positive_float, required=True)
    p.add_argument("--sigma-y-op", type=_positive_float, required=True)
    p.add_argument("--fisher-op", type=_positive_float, required=True)
    _common(p)

    p = sub.add_parser("residual", help="gap to the moment-matched Gaussian k-SMI")
    p.add_argument("--input", "-i", required=True)
    _estimator_flags(p)
    p.add_argument("--oracle-m", type=_int_at_least(2), default=5000)
    _common(p)

    for name, helptext in (
        ("bench-independence", "independence-testing AUC grid"),
        ("bench-dimension", "exact k-SMI and spread versus dimension"),
        ("bench-neural", "neural estimator with n = m growing"),
    ):
        p = sub.add_parser(name, help=helptext)
        _model_flags(p)
        _estimator_flags(p)
        p.add_argument("--d-grid", type=_int_list, default=None, help="comma-separated dimensions")
        p.add_argument("--k-grid", type=_int_list, default=None, help="comma-separated k values")
        p.add_argument("--n-grid", type=_int_list, default=None, help="comma-separated sample sizes")
        p.add_argument("--trials", type=pos_int, default=100 if name == "bench-independence" else 5)
        if name == "bench-neural":
            p.add_argument("--truth-m", type=_int_at_least(2), default=5000)
        p.add_argument("--plot", default=None, help="also write an SVG line plot here")
        _common(p)

    p = sub.add_parser("check-lipschitz", help="check the projected-entropy Lipschitz bound")
    p.add_argument("--d", type=pos_int, default=10)
    p.add_argument("--k", type=pos_int, default=2)
    p.add_argument("--trials", type=pos_int, default=1000)
    _common(p)
    return parser


def _seed_default(explicit: int | None) -> int:
    if explicit is not None:
        return explicit
    env = os.environ.get("KSMI_SEED")
    if env is None or env == "":
        return 0
    try:
        v = int(env)
    except ValueError:
        raise UsageError(f"KSMI_SEED must be a non-negative integer, got {env!r}") from None
    if v < 0:
        raise UsageError(f"KSMI_SEED must be a non-negative integer, got {env!r}")
    return v


def _validate(ns: argparse.Namespace) -> None:
    k = getattr(ns, "k", None)
    if ns.subcommand in ("sample", "gaussian") or ns.subcommand.startswith("bench-"):
        if ns.family == "common-signal" and ns.rank > ns.d:
            raise UsageError(f"--rank {ns.rank} exceeds --d {ns.d}")
    if ns.subcommand == "gaussian":
        if ns.family == "sinusoidal":
            raise UsageError("--family sinusoidal has no Gaussian oracle")
        if k > ns.d:
            raise UsageError(f"--k {k} exceeds --d {ns.d}")
    if ns.subcommand == "check-lipschitz" and k > ns.d:
        raise UsageError(f"--k {k} exceeds --d {ns.d}")
    if ns.subcommand == "bound" and k > min(ns.dx, ns.dy):
        raise UsageError(f"--k {k} exceeds min(--dx, --dy)")
    if ns.subcommand in ("bench-dimension", "bench-neural") and ns.family == "sinusoidal":
        raise UsageError(f"{ns.subcommand} needs a Gaussian --family")


def parse_args(argv: Sequence[str] | None = None) -> RunConfig:
    """Parse and validate; usage errors exit with status 2."""
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        _validate(ns)
        seed = _seed_default(ns.seed)
    except UsageError as exc:
        parser.error(str(exc))
    return RunConfig(ns.subcommand, ns, seed, ns.threads)


# ---------------------------------------------------------------------------
# I/O


def read_paired_csv(path: str) -> PairedSamples:
    """Read a CSV whose header is ``x1..x{dx},y1..y{dy}``.

    Raises ValueError naming the offending line for a malformed header,
    ragged rows, non-numeric cells or non-finite values.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or not any(c.strip() for c in rows[0]):
        raise ValueError(f"{path}: empty file")
    header = [c.strip() for c in rows[0]]
    dx = 0
    while dx < len(header) and header[dx] == f"x{dx + 1}":
        dx += 1
    dy = len(header) - dx
    if dx == 0 or dy == 0 or header[dx:] != [f"y{j + 1}" for j in range(dy)]:
        raise ValueError(f"{path}:1: header must be x1..x<dx>,y1..y<dy>, got {','.join(header)}")
    data = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != len(header):
            raise ValueError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            vals = [float(c) for c in row]
        except ValueError:
            raise ValueError(f"{path}:{lineno}: non-numeric value") from None
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"{path}:{lineno}: NaN or infinite value")
        data.append(vals)
    if not data:
        raise ValueError(f"{path}: no data rows")
    arr = np.asarray(data)
    return PairedSamples(arr[:, :dx], arr[:, dx:])


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.12g}"


def format_table(columns: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def report_row(report: KsmiReport) -> tuple:
    return (report.k, report.m, report.n, report.estimate, report.empirical_std, report.theory_bound)


def write_report(report_or_rows, path: str | None, columns: Sequence[str] = REPORT_COLUMNS) -> None:
    """Write a :class:`KsmiReport` (one row) or a table to CSV; ``None`` means stdout."""
    if isinstance(report_or_rows, KsmiReport):
        rows = [report_row(report_or_rows)]
        columns = REPORT_COLUMNS
    else:
        rows = report_or_rows
    text = format_table(columns, rows)
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="") as fh:
            fh.write(text)


def write_samples(samples: PairedSamples, path: str | None) -> None:
    cols = [f"x{i + 1}" for i in range(samples.dx)] + [f"y{j + 1}" for j in range(samples.dy)]
    rows = np.hstack([samples.x, samples.y])
    body = "\n".join(",".join(repr(float(v)) for v in r) for r in rows)
    text = ",".join(cols) + "\n" + body + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="") as fh:
            fh.write(text)


def plot_table(columns, rows, x: str, ys: Sequence[str], group: str | None, path: str) -> None:
    """SVG line plot of ``ys`` against ``x``, one line per value of ``group``."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "ksmi"
    idx = {c: i for i, c in enumerate(columns)}
    fig, axes = plt.subplots(1, len(ys), figsize=(4.5 * len(ys), 3.5), squeeze=False)
    keys = sorted({r[idx[group]] for r in rows}) if group else [None]
    for ax, y in zip(axes[0], ys):
        for key in keys:
            sel = [r for r in rows if group is None or r[idx[group]] == key]
            sel.sort(key=lambda r: r[idx[x]])
            label = f"{group}={key}" if group else None
            ax.plot([r[idx[x]] for r in sel], [r[idx[y]] for r in sel], marker="o", label=label)
        ax.set_xlabel(x)
        ax.set_ylabel(y)
        if group:
            ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


# ---------------------------------------------------------------------------
# dispatch


def _gaussian_model(ns) -> GaussianJoint:
    if ns.family == "common-signal":
        return make_common_signal_model(ns.d, ns.rank, ns.model_seed)
    if ns.family == "isotropic":
        return make_isotropic_model(ns.d, ns.c)
    raise ValueError(f"family {ns.family} is not Gaussian")


def _ksmi_config(ns, seed: int) -> KsmiConfig:
    return KsmiConfig(
        k=ns.k,
        m=ns.m,
        inner=ns.inner,
        ksg=KsgConfig(ns.k_neighbors, ns.jitter),
        neural=_train_config(ns, seed),
        seed=seed,
    )


def _train_config(ns, seed: int) -> TrainConfig:
    return TrainConfig(
        steps=ns.steps,
        batch_size=ns.batch_size,
        learning_rate=ns.lr,
        momentum=ns.momentum,
        hidden=ns.ell,
        constraint_projection=ns.project,
        a=ns.bound_a,
        seed=seed,
    )


def _trial_model(ns):
    if ns.family == "sinusoidal":
        return SyntheticModelSpec("sinusoidal", ns.d)
    if ns.family == "common-signal":
        return SyntheticModelSpec("common_signal", ns.d, ns.rank, ns.model_seed)
    return bench.IsotropicFamily(ns.c)


def _cmd_sample(cfg: RunConfig) -> int:
    ns = cfg.args
    rng = RngStream(cfg.seed).child("sample")
    if ns.family == "sinusoidal":
        samples = sample_sinusoidal_model(ns.d, ns.n, rng)
    else:
        samples = sample_joint(_gaussian_model(ns), ns.n, rng)
    write_samples(samples, ns.output)
    return 0


def _cmd_estimate(cfg: RunConfig) -> int:
    ns = cfg.args
    samples = read_paired_csv(ns.input)
    model = None
    if ns.family is not None:
        model = _gaussian_model(ns)
        if (model.dx, model.dy) != (samples.dx, samples.dy):
            raise ValueError("--family/--d do not match the dataset dimensions")
    report = estimate_ksmi(samples, _ksmi_config(ns, cfg.seed), theory_model=model, workers=cfg.threads)
    write_report(report, ns.output)
    return 0


def _cmd_gaussian(cfg: RunConfig) -> int:
    ns = cfg.args
    model = _gaussian_model(ns)
    mean, std = gaussian_ksmi_exact_mc(model, ns.k, ns.m, RngStream(cfg.seed).child("frames"))
    try:
        full = gaussian_mi(model)
    except ValueError:
        full = math.inf
    cols = ("k", "m", "d", "exact_mc_nats", "exact_mc_std_nats", "asymptotic_nats", "full_mi_nats")
    write_report([(ns.k, ns.m, ns.d, mean, std, gaussian_ksmi_asymptotic(model, ns.k), full)], ns.output, cols)
    return 0


def _cmd_bound(cfg: RunConfig) -> int:
    ns = cfg.args
    b = mc_error_bound(ns.k, ns.dx, ns.dy, ns.m, ns.sigma_x_op, ns.sigma_y_op, ns.fisher_op)
    write_report([(ns.k, ns.dx, ns.dy, ns.m, b)], ns.output, ("k", "dx", "dy", "m", "bound_nats"))
    return 0


def _cmd_residual(cfg: RunConfig) -> int:
    ns = cfg.args
    samples = read_paired_csv(ns.input)
    res = residual_vs_gaussian(samples, _ksmi_config(ns, cfg.seed), ns.oracle_m, workers=cfg.threads)
    cols = ("k", "m", "n", "ksmi_hat_nats", "ksmi_gauss_nats", "residual_nats")
    write_report([(ns.k, ns.m, samples.n, res.ksmi_hat, res.ksmi_gauss, res.residual)], ns.output, cols)
    return 0


def _trial_spec(ns, seed: int, d_grid, k_grid, n_grid) -> bench.TrialSpec:
    return bench.TrialSpec(
        model=_trial_model(ns),
        n_grid=n_grid,
        k_grid=k_grid,
        d_grid=d_grid,
        m=ns.m,
        trials=ns.trials,
        inner=ns.inner,
        ksg=KsgConfig(ns.k_neighbors, ns.jitter),
        neural=_train_config(ns, seed),
        seed=seed,
    )


def _check_grid(d_grid, k_grid):
    if max(k_grid) > min(d_grid):
        raise ValueError(f"k={max(k_grid)} exceeds d={min(d_grid)}")


def _cmd_bench(cfg: RunConfig) -> int:
    ns = cfg.args
    d_grid = ns.d_grid or (ns.d,)
    k_grid = ns.k_grid or (ns.k,)
    _check_grid(d_grid, k_grid)
    progress = log.info
    if cfg.subcommand == "bench-independence":
        spec = _trial_spec(ns, cfg.seed, d_grid, k_grid, ns.n_grid or (500, 1000, 2000, 4000))
        rows = bench.run_independence_benchmark(spec, workers=cfg.threads, progress=progress)
        cols, x, ys, group = bench.INDEPENDENCE_COLUMNS, "n", ["auc"], "k"
    elif cfg.subcommand == "bench-dimension":
        spec = _trial_spec(ns, cfg.seed, d_grid, k_grid, (1,))
        rows = bench.run_dimension_sweep(spec)
        cols, x, ys, group = bench.DIMENSION_COLUMNS, "d", list(bench.DIMENSION_COLUMNS[2:4]), "k"
    else:
        spec = _trial_spec(ns, cfg.seed, d_grid, k_grid, ns.n_grid or (64, 128, 256, 512))
        rows = bench.run_neural_rate_sweep(spec, ns.truth_m, workers=cfg.threads, progress=progress)
        cols, x, ys, group = bench.NEURAL_COLUMNS, "n", ["estimate_nats", "abs_error_nats"], "k"
    write_report(rows, ns.output, cols)
    if ns.plot:
        plot_table(cols, rows, x, ys, group, ns.plot)
    return 0


def _cmd_lipschitz(cfg: RunConfig) -> int:
    ns = cfg.args
    root = RngStream(cfg.seed).child("lipschitz_models")
    worst = -math.inf
    # one random anisotropic marginal per trial, checked on a Haar pair and a near pair
    for t in range(ns.trials):
        g = root.child("model", t).generator()
        q, _ = np.linalg.qr(g.standard_normal((ns.d, ns.d)))
        sigma = (q * np.exp(g.uniform(-2, 2, ns.d))) @ q.T
        sigma = 0.5 * (sigma + sigma.T)
        model = GaussianJoint(sigma, np.eye(1), np.zeros((ns.d, 1)))
        worst = max(worst, lipschitz_check(model, ns.k, 2, root.child("frames", t)))
    holds = worst <= 1e-9
    write_report([(ns.d, ns.k, ns.trials, worst, int(holds))], ns.output,
                 ("d", "k", "trials", "max_violation_nats", "holds"))
    return 0 if holds else 1


_COMMANDS = {
    "sample": _cmd_sample,
    "estimate": _cmd_estimate,
    "gaussian": _cmd_gaussian,
    "bound": _cmd_bound,
    "residual": _cmd_residual,
    "bench-independence": _cmd_bench,
    "bench-dimension": _cmd_bench,
    "bench-neural": _cmd_bench,
    "check-lipschitz": _cmd_lipschitz,
}


def dispatch(cfg: RunConfig) -> int:
    """Run a parsed command; domain and I/O errors become exit code 1."""
    try:
        return _COMMANDS[cfg.subcommand](cfg)
    except (ValueError, RuntimeError, OSError, np.linalg.LinAlgError) as exc:
        print(f"ksmi {cfg.subcommand}: error: {exc}", file=sys.stderr)
        return 1


def main(argv: Sequence[str] | None = None) -> int:
    cfg = parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if cfg.args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    return dispatch(cfg)


if __name__ == "__main__":
    sys.exit(main())
