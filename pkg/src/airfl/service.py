"""HTTP service exposing the simulator: channel generation, the alternating
solver, network training and inference, federated simulation, benchmarking,
and the convergence-bound report.

The CLI is a thin client of this app; it can also be served standalone with
``uvicorn airfl.service:app``.  All numeric work happens in the core modules;
endpoints only validate, marshal, and orchestrate.
"""

from __future__ import annotations

import base64
import platform
import tempfile
import time

import numpy as np
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import __version__, analysis, datasets, flsim, net, opt, seeds
from .channel import ChannelTrace, ConfigError, SystemConfig, generate_channels
from .net import TrainingDivergedError

SEED_MIX = 1_000_003


def channel_seed(base_seed: int, run_seed: int) -> int:
    """Per-run channel seed; all schemes of one run share the same trace."""
    return (base_seed * SEED_MIX + run_seed) % (2**63 - 1)


# ------------------------------------------------------------------- schemas

class SystemModel(BaseModel):
    K: int = Field(ge=1)
    T: int = Field(ge=1)
    sigma2: float = 0.1
    snr_db: float = 10.0
    seed: int = 0
    p_bar: list[float] | None = None
    p_max: list[float] | None = None

    def to_config(self, seed: int | None = None, T: int | None = None) -> SystemConfig:
        return SystemConfig.create(
            K=self.K, T=self.T if T is None else T,
            snr_db=self.snr_db, sigma2=self.sigma2,
            seed=self.seed if seed is None else seed,
            p_bar=self.p_bar, p_max=self.p_max)


class TraceModel(BaseModel):
    magnitude: list[list[float]]
    phase: list[list[float]] | None = None

    def to_trace(self) -> ChannelTrace:
        mag = np.asarray(self.magnitude, dtype=float)
        ph = np.asarray(self.phase, dtype=float) if self.phase is not None else np.zeros_like(mag)
        return ChannelTrace(magnitude=mag, phase=ph)

    @classmethod
    def from_trace(cls, trace: ChannelTrace) -> "TraceModel":
        return cls(magnitude=trace.magnitude.tolist(), phase=trace.phase.tolist())


class TrainModel(BaseModel):
    batch_size: int = 128
    gamma: float = 100.0
    learning_rate: float = 1e-3
    epochs: int = 200
    seed: int = 0
    mode: str = net.KNOWLEDGE_GUIDED
    n_samples: int = 51200
    holdout_fraction: float = 0.1
    hidden: tuple[int, int] = net.DEFAULT_HIDDEN
    mu_scale: float | None = None
    eta_scale: float | None = None

    def to_config(self) -> net.TrainConfig:
        return net.TrainConfig(**self.model_dump())


class FLModel(BaseModel):
    phi: int = 3
    lam: float = Field(default=0.05, alias="lambda")
    batch_size: int = 32
    T: int = 100
    model: str = "logistic"
    model_hidden: int = 32
    dataset: dict = Field(default_factory=lambda: {"name": "digits"})
    n_shards: int = 40
    shards_per_device: int = 2

    model_config = {"populate_by_name": True, "protected_namespaces": ()}

    def to_config(self, scheme: str) -> flsim.FLConfig:
        return flsim.FLConfig(
            phi=self.phi, lam=self.lam, batch_size=self.batch_size, T=self.T,
            scheme=scheme, model=self.model, model_hidden=self.model_hidden,
            dataset=self.dataset, n_shards=self.n_shards,
            shards_per_device=self.shards_per_device)


class ChannelRequest(BaseModel):
    sys: SystemModel


class ChannelResponse(BaseModel):
    magnitude: list[list[float]]
    phase: list[list[float]]
    p_bar: list[float]
    p_max: list[float]


class OptimizeRequest(BaseModel):
    sys: SystemModel
    trace: TraceModel | None = None
    eps0: float = 1e-6
    max_iter: int = 200


class KKTModel(BaseModel):
    max_power: float
    nonneg: float
    avg_power: float
    dual: float
    stationarity: float
    complementary_slackness: float
    max_residual: float


class OptimizeResponse(BaseModel):
    p: list[list[float]]
    eta: list[float]
    mu: list[float]
    mse_history: list[float]
    iterations: int
    converged: bool
    time_average_mse: float
    kkt: list[KKTModel]


class TrainRequest(BaseModel):
    sys: SystemModel
    train: TrainModel


class EpochModel(BaseModel):
    epoch: int
    loss: float
    penalty: float
    feasible_fraction: float


class TrainResponse(BaseModel):
    params_b64: str
    log: list[EpochModel]
    final_feasible_fraction: float


class InferRequest(BaseModel):
    params_b64: str
    h: list[list[float]]


class InferResponse(BaseModel):
    p: list[list[float]]
    eta: list[float]
    mu: list[list[float]] | None = None


class SimulateRequest(BaseModel):
    sys: SystemModel
    fl: FLModel
    schemes: list[str]
    seed: int = 0
    kg_params_b64: str | None = None
    kf_params_b64: str | None = None
    eps0: float = 1e-6
    max_iter: int = 200


class MetricsModel(BaseModel):
    round: int
    loss: float
    accuracy: float
    mse: float
    grad_norm_sq: float
    chi: float


class SchemeRunModel(BaseModel):
    metrics: list[MetricsModel]
    final_accuracy: float


class SimulateResponse(BaseModel):
    runs: dict[str, SchemeRunModel]
    channel_seed: int


class BenchRequest(BaseModel):
    sys: SystemModel
    params_b64: str
    repeats: int = 5
    eps0: float = 1e-6
    max_iter: int = 200


class BenchResponse(BaseModel):
    solver_seconds: float
    net_seconds: float                 # one batched forward over the whole trace
    net_seconds_round_loop: float      # T sequential single-round forwards
    speedup: float                     # solver_seconds / net_seconds
    feasible_fraction: float
    solver_iterations: int
    hardware: str


class BoundRequest(BaseModel):
    sys: SystemModel
    fl: FLModel
    scheme: str = flsim.FULL_POWER
    seed: int = 0
    calib_rounds: int = 30


class BoundResponse(BaseModel):
    bound: dict
    constants: dict
    empirical_time_avg_grad_norm_sq: float
    bound_holds: bool
    chi_max: float
    f_star_is_surrogate: bool = True


# ----------------------------------------------------------------- app logic

def _params_from_b64(blob: str) -> net.NetParams:
    try:
        return net.load_params(base64.b64decode(blob))
    except Exception as exc:
        raise HTTPException(status_code=400, detail=f"invalid params blob: {exc}") from exc


def _http_guard(fn, *args, **kwargs):
    """Map domain errors onto HTTP codes: bad config -> 400, numerics -> 500."""
    try:
        return fn(*args, **kwargs)
    except (ConfigError, ValueError) as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc
    except (TrainingDivergedError, opt.NoSignalError, FloatingPointError) as exc:
        raise HTTPException(status_code=500, detail=f"numerical failure: {exc}") from exc


def _simulate(req: SimulateRequest) -> SimulateResponse:
    ch_seed = channel_seed(req.sys.seed, req.seed)
    sys_cfg = req.sys.to_config(seed=ch_seed, T=req.fl.T)
    trace = generate_channels(sys_cfg)
    with tempfile.TemporaryDirectory() as workdir:
        data = datasets.materialize(req.fl.dataset, workdir,
                                    seed=req.fl.dataset.get("seed", 0))
    runs: dict[str, SchemeRunModel] = {}
    solved = None
    for scheme in req.schemes:
        assets = flsim.SchemeAssets()
        if scheme == flsim.ALTERNATING_OPT:
            if solved is None:
                solved = opt.alternating_optimize(sys_cfg, trace, eps0=req.eps0,
                                                  max_iter=req.max_iter)
            assets.allocation = solved.allocation
        elif scheme == net.KNOWLEDGE_GUIDED:
            if req.kg_params_b64 is None:
                raise ConfigError("knowledge_guided scheme needs kg_params_b64")
            assets.params = _params_from_b64(req.kg_params_b64)
        elif scheme == net.KNOWLEDGE_FREE:
            if req.kf_params_b64 is None:
                raise ConfigError("knowledge_free scheme needs kf_params_b64")
            assets.params = _params_from_b64(req.kf_params_b64)
        result = flsim.run_training(
            req.fl.to_config(scheme), sys_cfg, data, trace=trace, assets=assets,
            seed=req.seed)
        runs[scheme] = SchemeRunModel(
            metrics=[MetricsModel(**m.__dict__) for m in result.metrics],
            final_accuracy=result.final_accuracy)
    return SimulateResponse(runs=runs, channel_seed=ch_seed)


def _bench(req: BenchRequest) -> BenchResponse:
    sys_cfg = req.sys.to_config()
    trace = generate_channels(sys_cfg)
    params = _params_from_b64(req.params_b64)
    if params.K != sys_cfg.K:
        raise ConfigError(f"params trained for K={params.K}, system has K={sys_cfg.K}")

    solver_times = []
    result = None
    for _ in range(req.repeats):
        t0 = time.perf_counter()
        result = opt.alternating_optimize(sys_cfg, trace, eps0=req.eps0, max_iter=req.max_iter)
        solver_times.append(time.perf_counter() - t0)

    infer = net.InferenceNet(params)
    mags = trace.magnitude
    H = np.ascontiguousarray(mags.T)
    loop_times = []
    powers = np.empty((sys_cfg.K, sys_cfg.T))
    for _ in range(req.repeats):
        t0 = time.perf_counter()
        for t in range(sys_cfg.T):
            powers[:, t], _ = infer(mags[:, t])
        loop_times.append(time.perf_counter() - t0)
    batch_times = []
    for _ in range(req.repeats):
        t0 = time.perf_counter()
        net.net_outputs(params, H)
        batch_times.append(time.perf_counter() - t0)

    # feasibility of the net allocation over the trace, in training-batch units
    bsz = min(128, sys_cfg.T)
    n = (sys_cfg.T // bsz) * bsz
    batch_means = powers[:, :n].reshape(sys_cfg.K, -1, bsz).mean(axis=2)
    feas = float(np.mean(np.all(batch_means <= params.p_bar[:, None], axis=0)))

    solver_s = float(np.median(solver_times))
    net_s = float(np.median(batch_times))
    return BenchResponse(
        solver_seconds=solver_s,
        net_seconds=net_s,
        net_seconds_round_loop=float(np.median(loop_times)),
        speedup=solver_s / net_s,
        feasible_fraction=feas,
        solver_iterations=result.iterations,
        hardware=f"{platform.machine()} / {platform.processor() or 'unknown-cpu'} / "
                 f"python {platform.python_version()} / numpy {np.__version__}",
    )


def _bound(req: BoundRequest) -> BoundResponse:
    ch_seed = channel_seed(req.sys.seed, req.seed)
    sys_cfg = req.sys.to_config(seed=ch_seed, T=req.fl.T)
    trace = generate_channels(sys_cfg)
    with tempfile.TemporaryDirectory() as workdir:
        data = datasets.materialize(req.fl.dataset, workdir,
                                    seed=req.fl.dataset.get("seed", 0))
    fl_cfg = req.fl.to_config(req.scheme)
    assets = flsim.SchemeAssets()
    if req.scheme == flsim.ALTERNATING_OPT:
        assets.allocation = opt.alternating_optimize(sys_cfg, trace).allocation
    result = flsim.run_training(fl_cfg, sys_cfg, data, trace=trace, assets=assets, seed=req.seed)

    model = flsim.make_model(fl_cfg.model, data.n_features, data.n_classes)
    parts = flsim.partition_noniid(
        data.y_train, sys_cfg.K, fl_cfg.n_shards, fl_cfg.shards_per_device,
        seeds.substream(req.seed, seeds.PARTITION))
    device_data = [(data.X_train[i], data.y_train[i]) for i in parts]
    consts = analysis.estimate_constants(
        model, device_data, fl_cfg.phi, fl_cfg.lam, fl_cfg.batch_size,
        calib_rounds=req.calib_rounds, seed=req.seed)

    rounds = result.metrics[:-1]
    chi_max = max(m.chi for m in rounds)
    inputs = analysis.BoundInputs(
        F0=rounds[0].loss, F_star=consts.F_star, L=consts.L, xi2=consts.xi2,
        Gamma=consts.Gamma, chi=chi_max, lam=fl_cfg.lam, phi=fl_cfg.phi,
        K=sys_cfg.K, T=fl_cfg.T, N=model.dim,
        mse_trace=np.array([m.mse for m in rounds]))
    report = analysis.convergence_bound(inputs)
    lhs = float(np.mean([m.grad_norm_sq for m in rounds]))
    return BoundResponse(
        bound=report.to_dict(), constants=consts.to_dict(),
        empirical_time_avg_grad_norm_sq=lhs,
        bound_holds=lhs <= report.total, chi_max=chi_max)


def create_app() -> FastAPI:
    app = FastAPI(title="airfl", version=__version__)

    @app.get("/health")
    def health():
        return {"status": "ok", "version": __version__}

    @app.post("/channels/generate", response_model=ChannelResponse)
    def channels_generate(req: ChannelRequest):
        def work():
            cfg = req.sys.to_config()
            trace = generate_channels(cfg)
            return ChannelResponse(
                magnitude=trace.magnitude.tolist(), phase=trace.phase.tolist(),
                p_bar=cfg.p_bar.tolist(), p_max=cfg.p_max.tolist())
        return _http_guard(work)

    @app.post("/optimize", response_model=OptimizeResponse)
    def optimize(req: OptimizeRequest):
        def work():
            cfg = req.sys.to_config()
            trace = req.trace.to_trace() if req.trace is not None else generate_channels(cfg)
            result = opt.alternating_optimize(cfg, trace, eps0=req.eps0, max_iter=req.max_iter)
            reports = opt.solver_kkt_report(result, trace, cfg)
            return OptimizeResponse(
                p=result.allocation.p.tolist(), eta=result.allocation.eta.tolist(),
                mu=result.mu.tolist(), mse_history=list(result.mse_history),
                iterations=result.iterations, converged=result.converged,
                time_average_mse=result.mse_history[-1],
                kkt=[KKTModel(**r.to_dict()) for r in reports])
        return _http_guard(work)

    @app.post("/net/train", response_model=TrainResponse)
    def net_train(req: TrainRequest):
        def work():
            params, log = net.train(req.train.to_config(), req.sys.to_config())
            return TrainResponse(
                params_b64=base64.b64encode(net.params_to_bytes(params)).decode(),
                log=[EpochModel(**e.__dict__) for e in log],
                final_feasible_fraction=log[-1].feasible_fraction if log else 0.0)
        return _http_guard(work)

    @app.post("/net/infer", response_model=InferResponse)
    def net_infer(req: InferRequest):
        def work():
            params = _params_from_b64(req.params_b64)
            H = np.asarray(req.h, dtype=float)
            if params.mode == net.KNOWLEDGE_GUIDED:
                mu, eta, p = net.forward(params, H)
                return InferResponse(p=p.tolist(), eta=eta.tolist(), mu=mu.tolist())
            p, eta = net.forward_knowledge_free(params, H)
            return InferResponse(p=p.tolist(), eta=eta.tolist())
        return _http_guard(work)

    @app.post("/simulate", response_model=SimulateResponse)
    def simulate(req: SimulateRequest):
        return _http_guard(_simulate, req)

    @app.post("/bench", response_model=BenchResponse)
    def bench(req: BenchRequest):
        return _http_guard(_bench, req)

    @app.post("/bound", response_model=BoundResponse)
    def bound(req: BoundRequest):
        return _http_guard(_bound, req)

    return app


app = create_app()
