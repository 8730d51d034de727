"""Desk-scale federated learning over the analog aggregation channel.

Each round: every device runs phi local SGD steps, the accumulated gradients
are normalized and sent through the fading channel under the configured
power-control scheme, and the server updates the global model from the noisy
aggregate.  Schemes cover the error-free benchmark, the alternating-
optimization allocation, both learned controllers, and the fixed baselines.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import seeds
from .aircomp import GradientPayload, PowerAllocation, denormalize, instantaneous_mse, transmit_aggregate
from .analysis import heterogeneity_chi
from .channel import ChannelTrace, ConfigError, SystemConfig
from .datasets import DeskData
from .net import KNOWLEDGE_FREE, KNOWLEDGE_GUIDED, InferenceNet, NetParams
from .opt import optimal_eta

ERROR_FREE = "error_free"
ALTERNATING_OPT = "alternating_opt"
FULL_POWER = "full_power"
CHANNEL_INVERSION = "channel_inversion"
ALL_SCHEMES = (ERROR_FREE, ALTERNATING_OPT, KNOWLEDGE_GUIDED, KNOWLEDGE_FREE,
               FULL_POWER, CHANNEL_INVERSION)

CHANNEL_INVERSION_EPS = 0.1


# ---------------------------------------------------------------- desk models

class SoftmaxRegression:
    """Multinomial logistic regression on a flat parameter vector.

    Parameters are laid out as a (C, D+1) matrix (weights plus bias column),
    flattened row-major.
    """

    def __init__(self, n_features: int, n_classes: int):
        self.D = n_features
        self.C = n_classes
        self.dim = n_classes * (n_features + 1)

    def init_w(self, rng: np.random.Generator | None = None) -> np.ndarray:
        return np.zeros(self.dim)

    def _logits(self, w, X):
        W = w.reshape(self.C, self.D + 1)
        return X @ W[:, :-1].T + W[:, -1]

    @staticmethod
    def _softmax(logits):
        z = logits - logits.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)

    def loss(self, w, X, y) -> float:
        probs = self._softmax(self._logits(w, X))
        return float(-np.mean(np.log(probs[np.arange(len(y)), y] + 1e-300)))

    def grad(self, w, X, y) -> np.ndarray:
        n = X.shape[0]
        probs = self._softmax(self._logits(w, X))
        probs[np.arange(n), y] -= 1.0
        gw = probs.T @ X / n
        gb = probs.mean(axis=0)
        return np.concatenate([gw, gb[:, None]], axis=1).ravel()

    def accuracy(self, w, X, y) -> float:
        return float(np.mean(self._logits(w, X).argmax(axis=1) == y))


class OneHiddenMlp:
    """One-hidden-layer ReLU network; non-convex desk alternative."""

    def __init__(self, n_features: int, n_classes: int, hidden: int = 32):
        self.D = n_features
        self.C = n_classes
        self.H = hidden
        self.dim = hidden * (n_features + 1) + n_classes * (hidden + 1)

    def init_w(self, rng: np.random.Generator | None = None) -> np.ndarray:
        if rng is None:
            rng = np.random.default_rng(0)
        s1 = np.sqrt(2.0 / self.D)
        s2 = np.sqrt(2.0 / self.H)
        w1 = np.concatenate([rng.normal(scale=s1, size=(self.H, self.D)),
                             np.zeros((self.H, 1))], axis=1)
        w2 = np.concatenate([rng.normal(scale=s2, size=(self.C, self.H)),
                             np.zeros((self.C, 1))], axis=1)
        return np.concatenate([w1.ravel(), w2.ravel()])

    def _unpack(self, w):
        n1 = self.H * (self.D + 1)
        return w[:n1].reshape(self.H, self.D + 1), w[n1:].reshape(self.C, self.H + 1)

    def _forward(self, w, X):
        W1, W2 = self._unpack(w)
        z = np.maximum(X @ W1[:, :-1].T + W1[:, -1], 0.0)
        return z, z @ W2[:, :-1].T + W2[:, -1]

    def loss(self, w, X, y) -> float:
        _, logits = self._forward(w, X)
        probs = SoftmaxRegression._softmax(logits)
        return float(-np.mean(np.log(probs[np.arange(len(y)), y] + 1e-300)))

    def grad(self, w, X, y) -> np.ndarray:
        n = X.shape[0]
        W1, W2 = self._unpack(w)
        z, logits = self._forward(w, X)
        dlogits = SoftmaxRegression._softmax(logits)
        dlogits[np.arange(n), y] -= 1.0
        dlogits /= n
        g2 = np.concatenate([dlogits.T @ z, dlogits.sum(axis=0)[:, None]], axis=1)
        dz = (dlogits @ W2[:, :-1]) * (z > 0.0)
        g1 = np.concatenate([dz.T @ X, dz.sum(axis=0)[:, None]], axis=1)
        return np.concatenate([g1.ravel(), g2.ravel()])

    def accuracy(self, w, X, y) -> float:
        _, logits = self._forward(w, X)
        return float(np.mean(logits.argmax(axis=1) == y))


def make_model(arch: str, n_features: int, n_classes: int, hidden: int = 32):
    if arch == "logistic":
        return SoftmaxRegression(n_features, n_classes)
    if arch == "mlp":
        return OneHiddenMlp(n_features, n_classes, hidden)
    raise ConfigError(f"unknown model architecture {arch!r}")


# --------------------------------------------------------------- FL plumbing

@dataclass
class FLConfig:
    """Federated loop parameters and dataset/partition spec."""

    phi: int = 3
    lam: float = 0.05
    batch_size: int = 32
    T: int = 100
    scheme: str = ERROR_FREE
    model: str = "logistic"
    model_hidden: int = 32
    dataset: dict = field(default_factory=lambda: {"name": "digits"})
    n_shards: int = 40
    shards_per_device: int = 2

    def __post_init__(self):
        if self.phi < 1:
            raise ConfigError("phi must be >= 1")
        if self.lam <= 0.0:
            raise ConfigError("lambda must be positive")
        if self.scheme not in ALL_SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "FLConfig":
        d = dict(d)
        if "lambda" in d:
            d["lam"] = d.pop("lambda")
        kwargs = {k: d[k] for k in d if k in cls.__dataclass_fields__}
        return cls(**kwargs)


@dataclass(frozen=True)
class RoundMetrics:
    """Metrics at the start of round t (mse describes the round that follows;
    it is NaN on the terminal row, where no round follows)."""

    round: int
    loss: float
    accuracy: float
    mse: float
    grad_norm_sq: float
    chi: float


@dataclass
class SchemeAssets:
    """Solver output / trained controllers required by some schemes."""

    allocation: PowerAllocation | None = None
    params: NetParams | None = None


def partition_noniid(
    labels: np.ndarray,
    K: int,
    n_shards: int,
    shards_per_device: int,
    rng: np.random.Generator,
) -> list[np.ndarray]:
    """Label-sorted shard partition: each device draws shards without replacement.

    All devices end up with the same sample count.  When
    K * shards_per_device == n_shards the shards form an exact partition of
    the dataset; with fewer devices a subset of shards is used, so the used
    data grows with K.
    """
    labels = np.asarray(labels)
    n = labels.shape[0]
    if n % n_shards != 0:
        raise ConfigError(f"dataset size {n} not divisible by n_shards={n_shards}")
    if K * shards_per_device > n_shards:
        raise ConfigError(
            f"need {K * shards_per_device} shards for K={K} devices, only {n_shards} available")
    shard_size = n // n_shards
    order = np.argsort(labels, kind="stable")
    shards = order.reshape(n_shards, shard_size)
    perm = rng.permutation(n_shards)
    return [
        np.sort(np.concatenate(
            [shards[perm[k * shards_per_device + j]] for j in range(shards_per_device)]))
        for k in range(K)
    ]


def local_sgd(model, w_global, X_k, y_k, phi: int, lam: float, B: int,
              rng: np.random.Generator) -> np.ndarray:
    """phi mini-batch SGD steps from the global model; returns the accumulated
    gradient theta_k = (w_start - w_end) / lambda."""
    n_k = X_k.shape[0]
    if n_k < B:
        raise ConfigError(f"device holds {n_k} samples, fewer than batch size {B}")
    w = w_global.copy()
    for _ in range(phi):
        idx = rng.choice(n_k, size=B, replace=False)
        w = w - lam * model.grad(w, X_k[idx], y_k[idx])
    return (w_global - w) / lam


def global_update(w: np.ndarray, theta_hat: np.ndarray, lam: float) -> np.ndarray:
    """w(t+1) = w(t) - lambda * theta_hat(t)."""
    if w.shape != theta_hat.shape:
        raise ValueError(f"shape mismatch: w {w.shape} vs theta_hat {theta_hat.shape}")
    return w - lam * theta_hat


# ------------------------------------------------------------ power policies

def policy_full_power(p_bar: np.ndarray, h_mags: np.ndarray, sigma2: float):
    """Every device at its average budget; eta is the matched closed form."""
    p = np.asarray(p_bar, dtype=float).copy()
    return p, optimal_eta(p, h_mags, sigma2)


def policy_channel_inversion(p_bar: np.ndarray, h_mags: np.ndarray, sigma2: float,
                             eps_c: float = CHANNEL_INVERSION_EPS):
    """Truncated channel inversion: devices below the quality threshold stay
    silent; the rest invert toward the worst amplitude-matching factor."""
    p_bar = np.asarray(p_bar, dtype=float)
    h = np.asarray(h_mags, dtype=float)
    live = h > 0.0
    if not np.any(live):
        return np.zeros_like(h), 1.0
    eta = float(np.min((sigma2 + p_bar[live] * h[live] ** 2) / (np.sqrt(p_bar[live]) * h[live])))
    p = np.zeros_like(h)
    active = live & (p_bar * h**2 >= eps_c)
    p[active] = np.minimum(p_bar[active], eta / h[active] ** 2)
    return p, eta


# ------------------------------------------------------------------ FL loop

@dataclass
class FLRunResult:
    metrics: list[RoundMetrics]
    w_final: np.ndarray
    scheme: str

    @property
    def final_accuracy(self) -> float:
        return self.metrics[-1].accuracy

    @property
    def mse_trace(self) -> np.ndarray:
        return np.array([m.mse for m in self.metrics[:-1]])


def _check_assets(scheme: str, assets: SchemeAssets | None, sys_cfg: SystemConfig):
    if scheme == ALTERNATING_OPT:
        if assets is None or assets.allocation is None:
            raise ConfigError("alternating_opt requires a solved PowerAllocation asset")
        if assets.allocation.K != sys_cfg.K or assets.allocation.T != sys_cfg.T:
            raise ConfigError(
                f"allocation shape {assets.allocation.p.shape} does not match system (K={sys_cfg.K}, T={sys_cfg.T})")
    if scheme in (KNOWLEDGE_GUIDED, KNOWLEDGE_FREE):
        if assets is None or assets.params is None:
            raise ConfigError(f"{scheme} requires trained NetParams")
        if assets.params.mode != scheme:
            raise ConfigError(
                f"params were trained in mode {assets.params.mode!r}, scheme is {scheme!r}")
        if assets.params.K != sys_cfg.K:
            raise ConfigError(
                f"params trained for K={assets.params.K}, system has K={sys_cfg.K}")


def run_training(
    fl_cfg: FLConfig,
    sys_cfg: SystemConfig,
    data: DeskData,
    trace: ChannelTrace | None = None,
    assets: SchemeAssets | None = None,
    seed: int = 0,
) -> FLRunResult:
    """Run T federated rounds under one scheme; returns T+1 metric rows
    (row t is evaluated at the model entering round t)."""
    scheme = fl_cfg.scheme
    _check_assets(scheme, assets, sys_cfg)
    if scheme != ERROR_FREE:
        if trace is None:
            raise ConfigError(f"scheme {scheme!r} requires a channel trace")
        if trace.K != sys_cfg.K or trace.T < fl_cfg.T:
            raise ConfigError(
                f"trace shape {trace.magnitude.shape} too small for K={sys_cfg.K}, T={fl_cfg.T}")

    model = make_model(fl_cfg.model, data.n_features, data.n_classes, fl_cfg.model_hidden)
    parts = partition_noniid(
        data.y_train, sys_cfg.K, fl_cfg.n_shards, fl_cfg.shards_per_device,
        seeds.substream(seed, seeds.PARTITION))
    device_data = [(data.X_train[idx], data.y_train[idx]) for idx in parts]
    used = np.concatenate(parts)
    X_used, y_used = data.X_train[used], data.y_train[used]

    infer_net = InferenceNet(assets.params) if scheme in (KNOWLEDGE_GUIDED, KNOWLEDGE_FREE) else None
    w = model.init_w(seeds.substream(seed, seeds.INIT))
    metrics: list[RoundMetrics] = []

    def eval_row(t: int, mse: float) -> RoundMetrics:
        local_grads = np.stack([model.grad(w, Xk, yk) for Xk, yk in device_data])
        mean_grad = local_grads.mean(axis=0)
        return RoundMetrics(
            round=t,
            loss=model.loss(w, X_used, y_used),
            accuracy=model.accuracy(w, data.X_test, data.y_test),
            mse=mse,
            grad_norm_sq=float(mean_grad @ mean_grad),
            chi=heterogeneity_chi(local_grads),
        )

    for t in range(fl_cfg.T):
        thetas = np.stack([
            local_sgd(model, w, Xk, yk, fl_cfg.phi, fl_cfg.lam, fl_cfg.batch_size,
                      seeds.substream(seed, seeds.BATCH, t, k))
            for k, (Xk, yk) in enumerate(device_data)
        ])
        payload = GradientPayload.build(thetas)
        stats = payload.stats

        if scheme == ERROR_FREE:
            mse = 0.0
            theta_hat = thetas.mean(axis=0)
        else:
            h_t = trace.magnitude[:, t]
            if scheme == ALTERNATING_OPT:
                p_t, eta_t = assets.allocation.p[:, t], float(assets.allocation.eta[t])
            elif scheme in (KNOWLEDGE_GUIDED, KNOWLEDGE_FREE):
                p_t, eta_t = infer_net(h_t)
            elif scheme == FULL_POWER:
                p_t, eta_t = policy_full_power(sys_cfg.p_bar, h_t, sys_cfg.sigma2)
            else:
                p_t, eta_t = policy_channel_inversion(sys_cfg.p_bar, h_t, sys_cfg.sigma2)
            mse = instantaneous_mse(p_t, h_t, eta_t, sys_cfg.sigma2)
            if payload.s is None or not np.any(p_t > 0.0):
                # degenerate variance or fully silenced round: fall back to the
                # shared mean (known through the statistics side channel)
                theta_hat = np.full(payload.N, stats.theta_bar)
            else:
                s_hat = transmit_aggregate(
                    payload.s, p_t, h_t, eta_t, sys_cfg.sigma2,
                    seeds.substream(seed, seeds.NOISE, t))
                theta_hat = denormalize(s_hat, stats.pi, stats.theta_bar, sys_cfg.K)

        metrics.append(eval_row(t, mse))
        w = global_update(w, theta_hat, fl_cfg.lam)

    metrics.append(eval_row(fl_cfg.T, float("nan")))
    return FLRunResult(metrics=metrics, w_final=w, scheme=scheme)
