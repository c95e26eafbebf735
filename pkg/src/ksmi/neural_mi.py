"""Donsker-Varadhan neural MI estimation with single-hidden-layer ReLU nets.

The potential is ``g(z) = sum_i beta_i relu(<w_i, z> + b_i) + <w0, z> + b0``
on ``z = (u, v)``.  Gradients are written out by hand.  Internally every
array carries a leading "net" axis so that many independent nets (one per
projection) train in one vectorised loop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .gaussmodel import PairedSamples
from .matkit import RngStream

__all__ = [
    "ReluNet",
    "TrainConfig",
    "default_bound",
    "net_forward",
    "dv_value",
    "net_gradient",
    "derangement_shift",
    "project_constraints",
    "train_dv_mi",
    "train_dv_many",
]

_PARAMS = ("beta", "w", "b", "w0", "b0")


def default_bound(hidden: int) -> float:
    """``max(log log hidden, 1)``, taken as 1 where the double log is undefined."""
    if hidden <= math.e:
        return 1.0
    return max(math.log(math.log(hidden)), 1.0)


@dataclass
class ReluNet:
    """Parameters of one ``hidden``-neuron net on ``input_dim`` inputs.

    ``beta`` (hidden,), ``w`` (hidden, input_dim), ``b`` (hidden,),
    ``w0`` (input_dim,), ``b0`` scalar.  ``a`` is the constraint bound used
    by :func:`project_constraints`.
    """

    beta: np.ndarray
    w: np.ndarray
    b: np.ndarray
    w0: np.ndarray
    b0: float = 0.0
    a: float = 1.0

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=np.float64)
        self.w = np.atleast_2d(np.asarray(self.w, dtype=np.float64))
        self.b = np.asarray(self.b, dtype=np.float64)
        self.w0 = np.asarray(self.w0, dtype=np.float64)
        self.b0 = float(self.b0)
        ell, dim = self.w.shape
        if self.beta.shape != (ell,) or self.b.shape != (ell,) or self.w0.shape != (dim,):
            raise ValueError("inconsistent parameter shapes")

    @property
    def input_dim(self) -> int:
        return self.w.shape[1]

    @property
    def hidden(self) -> int:
        return self.w.shape[0]

    @classmethod
    def zeros(cls, input_dim: int, hidden: int, a: float | None = None) -> ReluNet:
        return cls(
            np.zeros(hidden),
            np.zeros((hidden, input_dim)),
            np.zeros(hidden),
            np.zeros(input_dim),
            0.0,
            default_bound(hidden) if a is None else a,
        )

    def flat(self) -> np.ndarray:
        """All parameters as one vector (order beta, w, b, w0, b0)."""
        return np.concatenate([self.beta, self.w.ravel(), self.b, self.w0, [self.b0]])

    def with_flat(self, theta) -> ReluNet:
        theta = np.asarray(theta, dtype=np.float64)
        ell, dim = self.w.shape
        cuts = np.cumsum([ell, ell * dim, ell, dim])
        beta, w, b, w0, b0 = np.split(theta, cuts)
        return ReluNet(beta, w.reshape(ell, dim), b, w0, float(b0[0]), self.a)


@dataclass(frozen=True)
class TrainConfig:
    """Optimiser settings for :func:`train_dv_mi`.

    Plain SGD with momentum; ``constraint_projection`` enforces the bounded
    parameter class after every step, ``a`` defaults to
    :func:`default_bound` of ``hidden``.
    """

    steps: int = 4000
    batch_size: int = 256
    learning_rate: float = 5e-3
    momentum: float = 0.9
    hidden: int = 64
    constraint_projection: bool = False
    a: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.steps < 1 or self.batch_size < 1 or self.hidden < 1:
            raise ValueError("steps, batch_size and hidden must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")

    @property
    def bound(self) -> float:
        return default_bound(self.hidden) if self.a is None else float(self.a)


# ---------------------------------------------------------------------------
# stacked (leading net axis) kernels


@dataclass
class _Stack:
    beta: np.ndarray  # (P, L)
    w: np.ndarray  # (P, L, D)
    b: np.ndarray  # (P, L)
    w0: np.ndarray  # (P, D)
    b0: np.ndarray  # (P,)

    @classmethod
    def of(cls, nets: list[ReluNet]) -> _Stack:
        return cls(*(np.stack([np.asarray(getattr(n, f), dtype=np.float64) for n in nets]) for f in _PARAMS))

    def net(self, p: int, a: float) -> ReluNet:
        return ReluNet(self.beta[p], self.w[p], self.b[p], self.w0[p], float(self.b0[p]), a)

    def zeros_like(self) -> _Stack:
        return _Stack(*(np.zeros_like(getattr(self, f)) for f in _PARAMS))


def _hidden(s: _Stack, z: np.ndarray) -> np.ndarray:
    return np.matmul(z, s.w.transpose(0, 2, 1)) + s.b[:, None, :]


def _forward(s: _Stack, z: np.ndarray) -> np.ndarray:
    # z: (P, B, D) -> (P, B)
    h = _hidden(s, z)
    return (
        np.einsum("pbl,pl->pb", np.maximum(h, 0.0), s.beta)
        + np.einsum("pbd,pd->pb", z, s.w0)
        + s.b0[:, None]
    )


def _logmeanexp(g: np.ndarray) -> np.ndarray:
    top = np.max(g, axis=-1, keepdims=True)
    return top[..., 0] + np.log(np.mean(np.exp(g - top), axis=-1))


def _dv(s: _Stack, pos: np.ndarray, neg: np.ndarray) -> np.ndarray:
    return np.mean(_forward(s, pos), axis=-1) - _logmeanexp(_forward(s, neg))


def _grad(s: _Stack, pos: np.ndarray, neg: np.ndarray) -> _Stack:
    """Gradient of the DV objective: a signed weighted sum of per-sample
    gradients of g, weights ``1/n`` on positives and ``-softmax(g)`` on negatives."""
    g_neg = _forward(s, neg)
    soft = np.exp(g_neg - np.max(g_neg, axis=-1, keepdims=True))
    soft /= soft.sum(axis=-1, keepdims=True)
    z = np.concatenate([pos, neg], axis=1)
    c = np.concatenate([np.full(pos.shape[:2], 1.0 / pos.shape[1]), -soft], axis=1)
    h = _hidden(s, z)
    act = np.maximum(h, 0.0)
    # relu'(0) taken as 0
    gate = (h > 0.0) * (c[:, :, None] * s.beta[:, None, :])
    return _Stack(
        beta=np.einsum("pb,pbl->pl", c, act),
        w=np.einsum("pbl,pbd->pld", gate, z),
        b=gate.sum(axis=1),
        w0=np.einsum("pb,pbd->pd", c, z),
        b0=c.sum(axis=1),
    )


def _project_l1(v: np.ndarray, radius: np.ndarray | float) -> np.ndarray:
    """Euclidean projection of each row of ``v`` onto the l1 ball (sort-based)."""
    radius = np.broadcast_to(np.asarray(radius, dtype=np.float64), v.shape[:-1])
    absv = np.abs(v)
    inside = absv.sum(axis=-1) <= radius
    mu = -np.sort(-absv, axis=-1)
    css = np.cumsum(mu, axis=-1) - radius[..., None]
    idx = np.arange(1, v.shape[-1] + 1)
    cond = mu - css / idx > 0
    rho = v.shape[-1] - 1 - np.argmax(cond[..., ::-1], axis=-1)
    theta = np.take_along_axis(css, rho[..., None], axis=-1)[..., 0] / (rho + 1)
    out = np.sign(v) * np.maximum(absv - np.maximum(theta, 0.0)[..., None], 0.0)
    return np.where(inside[..., None], v, out)


def _project_stack(s: _Stack, a: float) -> None:
    ell = s.beta.shape[-1]
    s.w[...] = _project_l1(s.w, 1.0)
    np.clip(s.b, -1.0, 1.0, out=s.b)
    np.clip(s.beta, -a / (2 * ell), a / (2 * ell), out=s.beta)
    s.w0[...] = _project_l1(s.w0, a)
    np.clip(s.b0, -a, a, out=s.b0)


# ---------------------------------------------------------------------------
# single-net API


def _rows(m) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    return m[None, :] if m.ndim == 1 else m


def net_forward(net: ReluNet, z) -> float:
    """``g(z)`` for one input vector."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (net.input_dim,):
        raise ValueError(f"expected input of length {net.input_dim}, got shape {z.shape}")
    return float(_forward(_Stack.of([net]), z[None, None, :])[0, 0])


def _check_batches(net: ReluNet, pos, neg) -> tuple[np.ndarray, np.ndarray]:
    pos, neg = _rows(pos), _rows(neg)
    if pos.shape[0] < 1 or neg.shape[0] < 1:
        raise ValueError("positive and negative batches must be nonempty")
    if pos.shape[1] != net.input_dim or neg.shape[1] != net.input_dim:
        raise ValueError("batch width does not match the net input dimension")
    return pos, neg


def dv_value(net: ReluNet, pos, neg) -> float:
    """Empirical DV objective ``mean g(pos) - log mean exp g(neg)`` in nats."""
    pos, neg = _check_batches(net, pos, neg)
    return float(_dv(_Stack.of([net]), pos[None], neg[None])[0])


def net_gradient(net: ReluNet, pos, neg) -> ReluNet:
    """Exact gradient of :func:`dv_value`, returned as a :class:`ReluNet`."""
    pos, neg = _check_batches(net, pos, neg)
    return _grad(_Stack.of([net]), pos[None], neg[None]).net(0, net.a)


def derangement_shift(n: int) -> np.ndarray:
    """Cyclic fixed-point-free permutation ``i -> i + 1 mod n``."""
    if n < 2:
        raise ValueError(f"need n >= 2, got {n}")
    return np.roll(np.arange(n), -1)


def project_constraints(net: ReluNet) -> ReluNet:
    """Project onto ``||w_i||_1, |b_i| <= 1``, ``|beta_i| <= a / (2 hidden)``,
    ``||w0||_1, |b0| <= a``."""
    s = _Stack.of([net])
    _project_stack(s, net.a)
    return s.net(0, net.a)


# ---------------------------------------------------------------------------
# training


def _standardize(m: np.ndarray) -> np.ndarray:
    sd = m.std(axis=-2, keepdims=True)
    return (m - m.mean(axis=-2, keepdims=True)) / np.where(sd > 0, sd, 1.0)


def _init_stack(count: int, dim: int, cfg: TrainConfig, rngs: list[RngStream]) -> _Stack:
    ell = cfg.hidden
    nets = []
    for r in rngs:
        gen = r.child("init").generator()
        nets.append(
            ReluNet(
                gen.normal(0.0, 1.0 / math.sqrt(ell), ell),
                gen.normal(0.0, 1.0 / math.sqrt(dim), (ell, dim)),
                gen.uniform(-1.0, 1.0, ell),
                np.zeros(dim),
                0.0,
            )
        )
    return _Stack.of(nets)


@dataclass
class TrainResult:
    estimates: np.ndarray
    nets: list[ReluNet]
    history: list[np.ndarray] = field(default_factory=list)


def train_dv_many(
    u: np.ndarray,
    v: np.ndarray,
    cfg: TrainConfig,
    rngs: list[RngStream],
    history_every: int = 0,
) -> TrainResult:
    """Train ``P`` independent nets, net ``p`` on the pair ``(u[p], v[p])``.

    ``u`` and ``v`` have shape ``(P, n, du)`` and ``(P, n, dv)``.  Each net
    draws minibatches from its own stream ``rngs[p]``; negatives pair each
    ``u`` row of a batch with the cyclically next ``v`` row.  Inputs are
    standardised per coordinate, which leaves the MI unchanged.  Returns the
    full-sample DV value of every final net.
    """
    u = _standardize(np.asarray(u, dtype=np.float64))
    v = _standardize(np.asarray(v, dtype=np.float64))
    count, n, _ = u.shape
    if n < 2:
        raise ValueError(f"need n >= 2, got {n}")
    if len(rngs) != count:
        raise ValueError("need one random stream per net")
    z = np.concatenate([u, v], axis=2)
    du = u.shape[2]
    shift = derangement_shift(n)
    z_neg_full = np.concatenate([u, v[:, shift]], axis=2)
    batch = min(cfg.batch_size, n)
    bshift = derangement_shift(batch) if batch >= 2 else np.zeros(1, dtype=np.int64)
    a = cfg.bound

    s = _init_stack(count, z.shape[2], cfg, rngs)
    if cfg.constraint_projection:
        _project_stack(s, a)
    vel = s.zeros_like()
    gens = [r.child("batches").generator() for r in rngs]
    rows = np.arange(count)[:, None]
    history = []
    chunk = 32
    for start in range(0, cfg.steps, chunk):
        todo = min(chunk, cfg.steps - start)
        idx = np.stack([g.integers(0, n, size=(todo, batch)) for g in gens], axis=1)
        for t in range(todo):
            pos = z[rows, idx[t]]
            neg = np.concatenate([pos[:, :, :du], pos[:, bshift, du:]], axis=2)
            grad = _grad(s, pos, neg)
            for f in _PARAMS:
                vf = getattr(vel, f)
                vf *= cfg.momentum
                vf += getattr(grad, f)
                getattr(s, f)[...] += cfg.learning_rate * vf
            if cfg.constraint_projection:
                _project_stack(s, a)
            step = start + t + 1
            if history_every and step % history_every == 0:
                history.append(_dv(s, z, z_neg_full))
    est = _dv(s, z, z_neg_full)
    return TrainResult(est, [s.net(p, a) for p in range(count)], history)


def train_dv_mi(samples: PairedSamples, cfg: TrainConfig = TrainConfig()) -> tuple[float, ReluNet]:
    """Neural DV estimate of ``I(X; Y)`` in nats and the trained net.

    Note the returned net acts on standardised inputs.
    """
    if samples.n < 2:
        raise ValueError(f"need n >= 2, got {samples.n}")
    res = train_dv_many(samples.x[None], samples.y[None], cfg, [RngStream(cfg.seed).child("net", 0)])
    return float(res.estimates[0]), res.nets[0]
