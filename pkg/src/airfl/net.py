"""Learned power control: a fully-connected network with batch normalization
that maps one round's channel magnitudes to the transceiver configuration.

Two variants share the hidden layers:

* knowledge-guided: the sigmoid output is read as dual variables (mu_1..mu_K)
  and the receive normalizing factor eta; a fixed structure-mapping layer then
  produces powers p_k = min((sqrt(eta)|h_k| / (|h_k|^2 + mu_k eta))^2, p_max),
  i.e. the closed form of the optimal schedule, so the network only searches
  the low-dimensional dual space.
* knowledge-free: the sigmoid output is read directly as powers (scaled by
  p_bar) and eta.

Training is unsupervised: the loss is the batch-mean aggregation MSE plus a
one-sided penalty on the batch-average power exceeding p_bar.  Gradients are
computed analytically, including through the structure-mapping layer
(zero on the clamped branch) and through the batch statistics of the
normalization layers.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, replace

import numpy as np

from . import seeds
from .channel import SystemConfig, sample_magnitudes

KNOWLEDGE_GUIDED = "knowledge_guided"
KNOWLEDGE_FREE = "knowledge_free"

DEFAULT_HIDDEN = (256, 64)
BN_MOMENTUM = 0.9
BN_EPS = 1e-5

PARAMS_MAGIC = b"AFPC"
PARAMS_VERSION = 1


class TrainingDivergedError(RuntimeError):
    """Training loss became non-finite."""


@dataclass
class TrainConfig:
    """Hyperparameters of the unsupervised training run."""

    batch_size: int = 128
    gamma: float = 100.0
    learning_rate: float = 1e-3
    epochs: int = 200
    seed: int = 0
    mode: str = KNOWLEDGE_GUIDED
    n_samples: int = 51200
    holdout_fraction: float = 0.1
    hidden: tuple[int, int] = DEFAULT_HIDDEN
    mu_scale: float | None = None
    eta_scale: float | None = None

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.gamma < 0.0:
            raise ValueError("gamma must be >= 0")
        if self.mode not in (KNOWLEDGE_GUIDED, KNOWLEDGE_FREE):
            raise ValueError(f"unknown mode {self.mode!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        kwargs = {k: d[k] for k in d if k in cls.__dataclass_fields__}
        if "hidden" in kwargs:
            kwargs["hidden"] = tuple(kwargs["hidden"])
        return cls(**kwargs)


@dataclass
class NetParams:
    """Weights, biases, batch-norm state, and output de-normalization scales."""

    mode: str
    q: list[np.ndarray]          # weight matrices, q[d] has shape (c_{d+1}, c_d)
    b: list[np.ndarray]          # biases
    bn_gamma: list[np.ndarray]   # one entry per hidden layer
    bn_beta: list[np.ndarray]
    bn_mean: list[np.ndarray]    # running means (inference)
    bn_var: list[np.ndarray]     # running variances (inference)
    mu_scale: float
    eta_scale: float
    p_max: np.ndarray            # (K,)
    p_bar: np.ndarray            # (K,)
    sigma2: float
    bn_momentum: float = BN_MOMENTUM
    bn_eps: float = BN_EPS

    @property
    def K(self) -> int:
        return self.q[0].shape[1]

    @property
    def dims(self) -> list[int]:
        return [self.q[0].shape[1]] + [w.shape[0] for w in self.q]

    def copy(self) -> "NetParams":
        return replace(
            self,
            q=[w.copy() for w in self.q],
            b=[v.copy() for v in self.b],
            bn_gamma=[v.copy() for v in self.bn_gamma],
            bn_beta=[v.copy() for v in self.bn_beta],
            bn_mean=[v.copy() for v in self.bn_mean],
            bn_var=[v.copy() for v in self.bn_var],
            p_max=self.p_max.copy(),
            p_bar=self.p_bar.copy(),
        )

    def trainable(self) -> dict[str, np.ndarray]:
        """Name -> array view of every trained parameter."""
        out = {}
        for d in range(len(self.q)):
            out[f"q{d + 1}"] = self.q[d]
            out[f"b{d + 1}"] = self.b[d]
        for d in range(len(self.bn_gamma)):
            out[f"bn{d + 1}_gamma"] = self.bn_gamma[d]
            out[f"bn{d + 1}_beta"] = self.bn_beta[d]
        return out


def default_scales(sys_cfg: SystemConfig) -> tuple[float, float]:
    """De-normalization constants for the sigmoid outputs.

    eta_scale is the closed-form optimal eta at full average power over
    unit-gain channels; solved normalizing factors sit below that point, so
    typical optima land in the well-conditioned part of the sigmoid range.
    mu_scale = 2 / mean(p_bar) covers the dual values seen in practice.
    """
    k = sys_cfg.K
    pb = float(sys_cfg.p_bar.mean())
    eta_ref = (sys_cfg.sigma2 + k * pb) ** 2 / (k**2 * pb)
    return 2.0 / pb, eta_ref


def init_params(
    sys_cfg: SystemConfig,
    mode: str = KNOWLEDGE_GUIDED,
    rng: np.random.Generator | None = None,
    hidden: tuple[int, int] = DEFAULT_HIDDEN,
    mu_scale: float | None = None,
    eta_scale: float | None = None,
) -> NetParams:
    """Glorot-uniform weight init; batch-norm starts as the identity."""
    if rng is None:
        rng = seeds.substream(sys_cfg.seed, seeds.INIT)
    k = sys_cfg.K
    dims = [k, *hidden, k + 1]
    q, bvec = [], []
    for c_in, c_out in zip(dims[:-1], dims[1:]):
        bound = np.sqrt(6.0 / (c_in + c_out))
        q.append(rng.uniform(-bound, bound, size=(c_out, c_in)))
        bvec.append(np.zeros(c_out))
    if mode == KNOWLEDGE_GUIDED:
        # start the dual heads low: the policy then begins near capped channel
        # inversion, and training mostly shapes the normalizing factor
        bvec[-1][:k] = -5.0
    ms, es = default_scales(sys_cfg)
    return NetParams(
        mode=mode,
        q=q,
        b=bvec,
        bn_gamma=[np.ones(c) for c in hidden],
        bn_beta=[np.zeros(c) for c in hidden],
        bn_mean=[np.zeros(c) for c in hidden],
        bn_var=[np.ones(c) for c in hidden],
        mu_scale=float(mu_scale if mu_scale is not None else ms),
        eta_scale=float(eta_scale if eta_scale is not None else es),
        p_max=np.asarray(sys_cfg.p_max, dtype=float).copy(),
        p_bar=np.asarray(sys_cfg.p_bar, dtype=float).copy(),
        sigma2=float(sys_cfg.sigma2),
    )


def structure_map(mu: np.ndarray, eta: np.ndarray, h_mags: np.ndarray, p_max: np.ndarray) -> np.ndarray:
    """Powers from dual variables: min((sqrt(eta)|h| / (|h|^2 + mu eta))^2, p_max).

    Accepts (K,) vectors or (B, K) batches with eta scalar or (B,); dead
    channels (|h| = 0) get zero power.
    """
    mu = np.asarray(mu, dtype=float)
    h = np.asarray(h_mags, dtype=float)
    eta_arr = np.asarray(eta, dtype=float)
    if h.ndim == 2 and eta_arr.ndim == 1:
        eta_arr = eta_arr[:, None]
    shape = np.broadcast_shapes(mu.shape, h.shape, eta_arr.shape)
    hb = np.broadcast_to(h, shape)
    mub = np.broadcast_to(mu, shape)
    etab = np.broadcast_to(eta_arr, shape)
    raw = np.zeros(shape)
    live = hb > 0.0
    hl, ml, el = hb[live], mub[live], etab[live]
    raw[live] = (np.sqrt(el) * hl / (hl * hl + ml * el)) ** 2
    return np.minimum(raw, p_max)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0.0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _forward_core(params: NetParams, H: np.ndarray, train_mode: bool) -> dict:
    """Shared hidden stack + sigmoid output; returns every intermediate."""
    H = np.asarray(H, dtype=float)
    if H.ndim != 2 or H.shape[1] != params.K:
        raise ValueError(f"expected (B, {params.K}) magnitudes, got shape {H.shape}")
    cache: dict = {"H": H, "train_mode": train_mode}
    z = H
    for d in range(len(params.bn_gamma)):
        a = z @ params.q[d].T + params.b[d]
        if train_mode:
            mean = a.mean(axis=0)
            var = a.var(axis=0)
            params.bn_mean[d] = params.bn_momentum * params.bn_mean[d] + (1.0 - params.bn_momentum) * mean
            params.bn_var[d] = params.bn_momentum * params.bn_var[d] + (1.0 - params.bn_momentum) * var
        else:
            mean = params.bn_mean[d]
            var = params.bn_var[d]
        ivar = 1.0 / np.sqrt(var + params.bn_eps)
        xhat = (a - mean) * ivar
        y = params.bn_gamma[d] * xhat + params.bn_beta[d]
        z_next = np.maximum(y, 0.0)
        cache[f"z{d}"] = z
        cache[f"a{d + 1}"] = a
        cache[f"mean{d + 1}"] = mean
        cache[f"ivar{d + 1}"] = ivar
        cache[f"xhat{d + 1}"] = xhat
        cache[f"y{d + 1}"] = y
        z = z_next
    d_out = len(params.q) - 1
    a_out = z @ params.q[d_out].T + params.b[d_out]
    y_out = _sigmoid(a_out)
    cache["z_last"] = z
    cache["y_out"] = y_out
    return cache


def forward(
    params: NetParams,
    h_mags: np.ndarray,
    train_mode: bool = False,
    _cache: dict | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Knowledge-guided pass: returns (mu, eta, p) for a (B, K) batch."""
    if params.mode != KNOWLEDGE_GUIDED:
        raise ValueError(f"forward() requires knowledge-guided params, got mode {params.mode!r}")
    cache = _forward_core(params, h_mags, train_mode)
    y = cache["y_out"]
    K = params.K
    mu = params.mu_scale * y[:, :K]
    eta = params.eta_scale * y[:, K]
    p = structure_map(mu, eta, cache["H"], params.p_max)
    cache.update(mu=mu, eta=eta, p=p)
    if _cache is not None:
        _cache.update(cache)
    return mu, eta, p


def forward_knowledge_free(
    params: NetParams,
    h_mags: np.ndarray,
    train_mode: bool = False,
    _cache: dict | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Knowledge-free pass: returns (p, eta); p_k = p_bar_k * sigmoid output."""
    if params.mode != KNOWLEDGE_FREE:
        raise ValueError(f"forward_knowledge_free() requires knowledge-free params, got {params.mode!r}")
    cache = _forward_core(params, h_mags, train_mode)
    y = cache["y_out"]
    K = params.K
    p = params.p_bar * y[:, :K]
    eta = params.eta_scale * y[:, K]
    cache.update(p=p, eta=eta)
    if _cache is not None:
        _cache.update(cache)
    return p, eta


def net_outputs(params: NetParams, h_mags: np.ndarray, train_mode: bool = False,
                _cache: dict | None = None) -> tuple[np.ndarray, np.ndarray]:
    """(p, eta) under either mode."""
    if params.mode == KNOWLEDGE_GUIDED:
        _, eta, p = forward(params, h_mags, train_mode, _cache=_cache)
    else:
        p, eta = forward_knowledge_free(params, h_mags, train_mode, _cache=_cache)
    return p, eta


def batch_mse(p: np.ndarray, eta: np.ndarray, H: np.ndarray, sigma2: float) -> np.ndarray:
    """Per-sample aggregation MSE for a batch of rounds."""
    amps = np.sqrt(p) * H / np.sqrt(eta)[:, None]
    return np.sum((amps - 1.0) ** 2, axis=1) + sigma2 / eta


def loss(params: NetParams, batch: np.ndarray, cfg: TrainConfig,
         train_mode: bool = False) -> tuple[float, float, float]:
    """(total, mean_mse, penalty) of the unsupervised objective on a batch."""
    p, eta = net_outputs(params, batch, train_mode)
    mse = batch_mse(p, eta, np.asarray(batch, dtype=float), params.sigma2)
    mean_mse = float(mse.mean())
    penalty = float(np.sum(np.maximum(p.mean(axis=0) - params.p_bar, 0.0)))
    return mean_mse + cfg.gamma * penalty, mean_mse, penalty


def _bn_backward(dy, xhat, ivar, a, mean, gamma):
    B = a.shape[0]
    dgamma = np.sum(dy * xhat, axis=0)
    dbeta = np.sum(dy, axis=0)
    dxhat = dy * gamma
    centered = a - mean
    dvar = np.sum(dxhat * centered, axis=0) * (-0.5) * ivar**3
    dmean = -ivar * np.sum(dxhat, axis=0) + dvar * (-2.0) * centered.mean(axis=0)
    dx = dxhat * ivar + dvar * 2.0 * centered / B + dmean / B
    return dx, dgamma, dbeta


def backward(params: NetParams, cache: dict, gamma: float) -> dict[str, np.ndarray]:
    """Analytic gradients of the training loss w.r.t. every trained parameter.

    Requires a cache produced by a train-mode forward pass on the same batch.
    The min() in the structure map uses the zero subgradient on the clamped
    branch; dead channels contribute nothing.
    """
    H = cache["H"]
    B, K = H.shape
    p = cache["p"]
    eta = cache["eta"]
    y = cache["y_out"]

    amps = np.sqrt(p) * H / np.sqrt(eta)[:, None]
    # dL/dp holding eta fixed: MSE term (alpha - 1) * alpha / p plus the
    # one-sided average-power penalty.
    dmse_dp = np.zeros_like(p)
    live_p = p > 0.0
    dmse_dp[live_p] = (amps[live_p] - 1.0) * amps[live_p] / p[live_p]
    viol = (p.mean(axis=0) - params.p_bar) > 0.0
    dL_dp = dmse_dp / B + (gamma / B) * viol[None, :]
    # dL/deta holding p fixed
    dL_deta = (-np.sum((amps - 1.0) * amps, axis=1) / eta - params.sigma2 / eta**2) / B

    dy = np.zeros_like(y)
    if params.mode == KNOWLEDGE_GUIDED:
        mu = cache["mu"]
        live = (H > 0.0) & (p < params.p_max)  # unclamped branch only
        hl = H[live]
        ml = mu[live]
        el = np.broadcast_to(eta[:, None], p.shape)[live]
        den3 = (hl * hl + ml * el) ** 3
        dp_dmu = np.zeros_like(p)
        dp_deta = np.zeros_like(p)
        dp_dmu[live] = -2.0 * el**2 * hl**2 / den3
        dp_deta[live] = hl**2 * (hl**2 - ml * el) / den3
        dy[:, :K] = dL_dp * dp_dmu * params.mu_scale
        dy[:, K] = (dL_deta + np.sum(dL_dp * dp_deta, axis=1)) * params.eta_scale
    else:
        dy[:, :K] = dL_dp * params.p_bar
        dy[:, K] = dL_deta * params.eta_scale

    grads: dict[str, np.ndarray] = {}
    da = dy * y * (1.0 - y)  # sigmoid
    d_out = len(params.q) - 1
    grads[f"q{d_out + 1}"] = da.T @ cache["z_last"]
    grads[f"b{d_out + 1}"] = da.sum(axis=0)
    dz = da @ params.q[d_out]
    for d in reversed(range(len(params.bn_gamma))):
        dy_bn = dz * (cache[f"y{d + 1}"] > 0.0)  # relu
        dx, dg, dbeta = _bn_backward(
            dy_bn, cache[f"xhat{d + 1}"], cache[f"ivar{d + 1}"],
            cache[f"a{d + 1}"], cache[f"mean{d + 1}"], params.bn_gamma[d])
        grads[f"bn{d + 1}_gamma"] = dg
        grads[f"bn{d + 1}_beta"] = dbeta
        grads[f"q{d + 1}"] = dx.T @ cache[f"z{d}"]
        grads[f"b{d + 1}"] = dx.sum(axis=0)
        dz = dx @ params.q[d]
    return grads


def loss_and_grads(params: NetParams, batch: np.ndarray, cfg: TrainConfig):
    """Train-mode loss with its analytic gradients (single forward/backward)."""
    cache: dict = {}
    net_outputs(params, batch, train_mode=True, _cache=cache)
    mse = batch_mse(cache["p"], cache["eta"], cache["H"], params.sigma2)
    penalty = float(np.sum(np.maximum(cache["p"].mean(axis=0) - params.p_bar, 0.0)))
    total = float(mse.mean()) + cfg.gamma * penalty
    return total, float(mse.mean()), penalty, backward(params, cache, cfg.gamma)


def feasible_fraction(params: NetParams, H: np.ndarray, batch_size: int) -> float:
    """Fraction of consecutive batches whose batch-average power meets p_bar."""
    p, _ = net_outputs(params, H, train_mode=False)
    n = (H.shape[0] // batch_size) * batch_size
    if n == 0:
        raise ValueError("not enough samples for a single batch")
    means = p[:n].reshape(-1, batch_size, params.K).mean(axis=1)
    return float(np.mean(np.all(means <= params.p_bar, axis=1)))


@dataclass(frozen=True)
class EpochLog:
    epoch: int
    loss: float
    penalty: float
    feasible_fraction: float


def train(
    cfg: TrainConfig,
    sys_cfg: SystemConfig,
    channel_sampler=None,
) -> tuple[NetParams, list[EpochLog]]:
    """Plain-SGD unsupervised training on i.i.d. channel draws.

    The sample pool is split 90/10 into train/held-out streams derived from
    disjoint substreams of cfg.seed; the held-out part feeds the per-epoch
    feasibility log.  Raises TrainingDivergedError on a non-finite loss.
    """
    if channel_sampler is None:
        def channel_sampler(n, rng):
            return sample_magnitudes(n, sys_cfg.K, rng)

    n_hold = max(int(cfg.n_samples * cfg.holdout_fraction), cfg.batch_size)
    n_train = cfg.n_samples - n_hold
    if n_train < cfg.batch_size:
        raise ValueError("n_samples too small for the requested batch size")
    H_train = channel_sampler(n_train, seeds.substream(cfg.seed, seeds.DATA))
    H_hold = channel_sampler(n_hold, seeds.substream(cfg.seed, seeds.EVAL))

    params = init_params(
        sys_cfg, mode=cfg.mode, rng=seeds.substream(cfg.seed, seeds.INIT),
        hidden=cfg.hidden, mu_scale=cfg.mu_scale, eta_scale=cfg.eta_scale)
    shuffle_rng = seeds.substream(cfg.seed, seeds.SHUFFLE)
    n_batches = n_train // cfg.batch_size
    log: list[EpochLog] = []
    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(n_train)
        epoch_loss = 0.0
        epoch_pen = 0.0
        for i in range(n_batches):
            batch = H_train[order[i * cfg.batch_size:(i + 1) * cfg.batch_size]]
            total, _, pen, grads = loss_and_grads(params, batch, cfg)
            if not np.isfinite(total):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, batch {i}: {total}")
            epoch_loss += total
            epoch_pen += pen
            for name, arr in params.trainable().items():
                arr -= cfg.learning_rate * grads[name]
        log.append(EpochLog(
            epoch=epoch,
            loss=epoch_loss / n_batches,
            penalty=epoch_pen / n_batches,
            feasible_fraction=feasible_fraction(params, H_hold, cfg.batch_size),
        ))
    return params, log


class InferenceNet:
    """Inference-only view with batch norm folded into the affine layers.

    Meant for the per-round deployment path: one forward per communication
    round from a (K,) magnitude vector.
    """

    def __init__(self, params: NetParams):
        self.mode = params.mode
        self.mu_scale = params.mu_scale
        self.eta_scale = params.eta_scale
        self.p_max = params.p_max
        self.p_bar = params.p_bar
        self.K = params.K
        self.w = []
        self.c = []
        for d in range(len(params.bn_gamma)):
            scale = params.bn_gamma[d] / np.sqrt(params.bn_var[d] + params.bn_eps)
            self.w.append(scale[:, None] * params.q[d])
            self.c.append(scale * (params.b[d] - params.bn_mean[d]) + params.bn_beta[d])
        self.w.append(params.q[-1].copy())
        self.c.append(params.b[-1].copy())

    def __call__(self, h: np.ndarray) -> tuple[np.ndarray, float]:
        """(p, eta) for a single round's magnitudes."""
        z = h
        for w, c in zip(self.w[:-1], self.c[:-1]):
            z = np.maximum(w @ z + c, 0.0)
        y = _sigmoid(self.w[-1] @ z + self.c[-1])
        eta = self.eta_scale * y[self.K]
        if self.mode == KNOWLEDGE_GUIDED:
            p = structure_map(self.mu_scale * y[:self.K], eta, h, self.p_max)
        else:
            p = self.p_bar * y[:self.K]
        return p, float(eta)


def save_params(path, params: NetParams) -> None:
    """Versioned binary file: magic, version, JSON header, raw float64 arrays."""
    with open(path, "wb") as fh:
        _write_params(fh, params)


def _write_params(fh, params: NetParams) -> None:
    arrays: list[tuple[str, np.ndarray]] = []
    for d in range(len(params.q)):
        arrays.append((f"q{d + 1}", params.q[d]))
        arrays.append((f"b{d + 1}", params.b[d]))
    for d in range(len(params.bn_gamma)):
        arrays.append((f"bn{d + 1}_gamma", params.bn_gamma[d]))
        arrays.append((f"bn{d + 1}_beta", params.bn_beta[d]))
        arrays.append((f"bn{d + 1}_mean", params.bn_mean[d]))
        arrays.append((f"bn{d + 1}_var", params.bn_var[d]))
    arrays.append(("p_max", params.p_max))
    arrays.append(("p_bar", params.p_bar))
    header = {
        "version": PARAMS_VERSION,
        "mode": params.mode,
        "dims": params.dims,
        "mu_scale": params.mu_scale,
        "eta_scale": params.eta_scale,
        "sigma2": params.sigma2,
        "bn_momentum": params.bn_momentum,
        "bn_eps": params.bn_eps,
        "arrays": [[name, list(arr.shape)] for name, arr in arrays],
    }
    blob = json.dumps(header).encode()
    fh.write(PARAMS_MAGIC)
    fh.write(struct.pack("<HI", PARAMS_VERSION, len(blob)))
    fh.write(blob)
    for _, arr in arrays:
        fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_params(path_or_bytes) -> NetParams:
    if isinstance(path_or_bytes, (bytes, bytearray)):
        fh = io.BytesIO(path_or_bytes)
        return _read_params(fh)
    with open(path_or_bytes, "rb") as fh:
        return _read_params(fh)


def _read_params(fh) -> NetParams:
    magic = fh.read(4)
    if magic != PARAMS_MAGIC:
        raise ValueError(f"not a power-control params file (magic {magic!r})")
    version, hlen = struct.unpack("<HI", fh.read(6))
    if version != PARAMS_VERSION:
        raise ValueError(f"unsupported params version {version}")
    header = json.loads(fh.read(hlen).decode())
    data: dict[str, np.ndarray] = {}
    for name, shape in header["arrays"]:
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(fh.read(8 * count), dtype="<f8").reshape(shape).copy()
        data[name] = arr
    n_fc = sum(1 for name, _ in header["arrays"] if name.startswith("q"))
    n_bn = n_fc - 1
    return NetParams(
        mode=header["mode"],
        q=[data[f"q{d + 1}"] for d in range(n_fc)],
        b=[data[f"b{d + 1}"] for d in range(n_fc)],
        bn_gamma=[data[f"bn{d + 1}_gamma"] for d in range(n_bn)],
        bn_beta=[data[f"bn{d + 1}_beta"] for d in range(n_bn)],
        bn_mean=[data[f"bn{d + 1}_mean"] for d in range(n_bn)],
        bn_var=[data[f"bn{d + 1}_var"] for d in range(n_bn)],
        mu_scale=float(header["mu_scale"]),
        eta_scale=float(header["eta_scale"]),
        p_max=data["p_max"],
        p_bar=data["p_bar"],
        sigma2=float(header["sigma2"]),
        bn_momentum=float(header["bn_momentum"]),
        bn_eps=float(header["bn_eps"]),
    )


def params_to_bytes(params: NetParams) -> bytes:
    buf = io.BytesIO()
    _write_params(buf, params)
    return buf.getvalue()
