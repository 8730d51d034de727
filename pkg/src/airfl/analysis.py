"""Convergence-theory instrumentation: gradient-heterogeneity metric,
step-size condition, the time-average gradient-norm bound and its inputs,
empirical constant estimation, and a Monte-Carlo check of the aggregation
error / MSE inequality.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from . import seeds
from .aircomp import GradientPayload, compute_stats, instantaneous_mse


def heterogeneity_chi(local_grads: np.ndarray) -> float:
    """(mean of squared local-gradient norms) / (squared norm of mean gradient).

    Equals 1 for identical gradients and is >= 1 in general; returns +inf when
    the mean gradient vanishes.
    """
    g = np.asarray(local_grads, dtype=float)
    if g.ndim != 2:
        raise ValueError(f"expected (K, N) gradients, got shape {g.shape}")
    mean_sq = float(np.mean(np.sum(g * g, axis=1)))
    mean_g = g.mean(axis=0)
    denom = float(mean_g @ mean_g)
    if denom <= 0.0:
        return float("inf")
    return mean_sq / denom


def check_condition(lam: float, phi: int, L: float, chi: float) -> bool:
    """Step-size hypothesis of the convergence bound: phi^2 L^2 lam^2 chi + 2 phi lam L <= 1."""
    return phi**2 * L**2 * lam**2 * chi + 2.0 * phi * lam * L <= 1.0


@dataclass(frozen=True)
class BoundInputs:
    """Everything the gradient-norm bound consumes."""

    F0: float
    F_star: float
    L: float
    xi2: float
    Gamma: float
    chi: float
    lam: float
    phi: int
    K: int
    T: int
    N: int
    mse_trace: np.ndarray  # (T,) per-round MSE

    def __post_init__(self):
        if self.L < 0 or self.xi2 < 0 or self.Gamma < 0:
            raise ValueError("L, xi2, Gamma must be non-negative")
        if self.chi < 1.0:
            raise ValueError(f"chi must be >= 1, got {self.chi}")


@dataclass(frozen=True)
class BoundReport:
    total: float
    term_initial: float
    term_variance: float
    term_mse: float
    condition_ok: bool

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "term_initial": self.term_initial,
            "term_variance": self.term_variance,
            "term_mse": self.term_mse,
            "condition_ok": self.condition_ok,
        }


def convergence_bound(inputs: BoundInputs) -> BoundReport:
    """Upper bound on (1/T) sum_t ||grad F(w(t))||^2:

    2(F0 - F*) / (lam (phi-1) T)
    + (2/(phi-1)) (phi^2 lam^2 L^2 / 2 + phi lam L / K) xi^2
    + ((1 + 2 lam L)/(phi-1)) (N Gamma (K+1)/K^2) (1/T) sum_t MSE(t)

    Requires phi >= 2 (the bound divides by phi - 1).
    """
    if inputs.phi < 2:
        raise ValueError(f"the bound requires phi >= 2, got phi={inputs.phi}")
    mse_trace = np.asarray(inputs.mse_trace, dtype=float)
    if mse_trace.shape[0] != inputs.T:
        raise ValueError(f"mse_trace length {mse_trace.shape[0]} != T={inputs.T}")
    lam, phi, L, K, T = inputs.lam, inputs.phi, inputs.L, inputs.K, inputs.T
    term_initial = 2.0 * (inputs.F0 - inputs.F_star) / (lam * (phi - 1) * T)
    term_variance = (2.0 / (phi - 1)) * (phi**2 * lam**2 * L**2 / 2.0 + phi * lam * L / K) * inputs.xi2
    term_mse = ((1.0 + 2.0 * lam * L) / (phi - 1)) * (inputs.N * inputs.Gamma * (K + 1) / K**2) \
        * float(mse_trace.mean())
    return BoundReport(
        total=term_initial + term_variance + term_mse,
        term_initial=term_initial,
        term_variance=term_variance,
        term_mse=term_mse,
        condition_ok=check_condition(lam, phi, L, inputs.chi),
    )


# --------------------------------------------------------- constant estimation

@dataclass(frozen=True)
class ConstantEstimates:
    """Empirical stand-ins for the smoothness/variance constants.

    These are measured, not assumed: L is an analytic Hessian bound (logistic
    models only), xi2 and Gamma are maxima over sampled states, F_star is the
    best loss reached by full-batch descent, so the bound check is a one-sided
    validity test.
    """

    L: float
    xi2: float
    Gamma: float
    F_star: float

    def to_dict(self) -> dict:
        return {"L": self.L, "xi2": self.xi2, "Gamma": self.Gamma, "F_star": self.F_star}


def logistic_smoothness(X: np.ndarray) -> float:
    """Analytic smoothness constant of softmax cross-entropy over features X:
    half the largest eigenvalue of the (bias-augmented) second-moment matrix."""
    Xb = np.concatenate([X, np.ones((X.shape[0], 1))], axis=1)
    second_moment = Xb.T @ Xb / X.shape[0]
    return 0.5 * float(np.linalg.eigvalsh(second_moment)[-1])


def estimate_constants(
    model,
    device_data: list[tuple[np.ndarray, np.ndarray]],
    phi: int,
    lam: float,
    batch_size: int,
    calib_rounds: int = 30,
    n_var_draws: int = 50,
    seed: int = 0,
) -> ConstantEstimates:
    """Measure (L, xi2, Gamma, F_star) on a device partition.

    A short error-free calibration run supplies the visited models; xi2 is the
    max mini-batch gradient variance over (device, model) pairs, Gamma is
    twice the max per-device gradient variance statistic seen, F_star comes
    from full-batch descent on the pooled data.
    """
    X_all = np.concatenate([X for X, _ in device_data])
    y_all = np.concatenate([y for _, y in device_data])
    if model.__class__.__name__ != "SoftmaxRegression":
        raise ValueError("analytic smoothness constant is only available for logistic models")
    L = logistic_smoothness(X_all)

    rng = seeds.substream(seed, seeds.EVAL)
    w = model.init_w()
    visited = [w.copy()]
    gamma_max = 0.0
    # error-free calibration trajectory
    for _ in range(calib_rounds):
        thetas = []
        for Xk, yk in device_data:
            wk = w.copy()
            for _ in range(phi):
                idx = rng.choice(Xk.shape[0], size=min(batch_size, Xk.shape[0]), replace=False)
                wk = wk - lam * model.grad(wk, Xk[idx], yk[idx])
            thetas.append((w - wk) / lam)
        stats = compute_stats(np.stack(thetas))
        gamma_max = max(gamma_max, float(stats.pi2_k.max()))
        w = w - lam * np.stack(thetas).mean(axis=0)
        visited.append(w.copy())

    # xi2: max mini-batch variance over sampled (device, model) pairs
    xi2 = 0.0
    probe_ws = visited[:: max(1, len(visited) // 8)]
    for w_probe in probe_ws:
        for Xk, yk in device_data:
            full = model.grad(w_probe, Xk, yk)
            bsz = min(batch_size, Xk.shape[0])
            devs = []
            for _ in range(n_var_draws):
                idx = rng.choice(Xk.shape[0], size=bsz, replace=False)
                d = model.grad(w_probe, Xk[idx], yk[idx]) - full
                devs.append(d @ d)
            xi2 = max(xi2, float(np.mean(devs)))

    res = minimize(
        lambda v: model.loss(v, X_all, y_all), w,
        jac=lambda v: model.grad(v, X_all, y_all), method="L-BFGS-B",
        options={"maxiter": 2000, "ftol": 1e-14, "gtol": 1e-10})
    f_star = min(float(res.fun), model.loss(w, X_all, y_all))
    return ConstantEstimates(L=L, xi2=xi2, Gamma=2.0 * gamma_max, F_star=f_star)


# ------------------------------------------------------------- aggregation-error inequality check

@dataclass(frozen=True)
class AggregationErrorReport:
    estimate: float
    std_error: float
    bound: float
    mse: float
    gamma: float

    @property
    def holds(self) -> bool:
        return self.estimate <= self.bound + 3.0 * self.std_error

    def to_dict(self) -> dict:
        return {
            "estimate": self.estimate,
            "std_error": self.std_error,
            "bound": self.bound,
            "mse": self.mse,
            "gamma": self.gamma,
            "holds": self.holds,
        }


def aggregation_error_check(
    p: np.ndarray,
    h_mags: np.ndarray,
    eta: float,
    sigma2: float,
    payload: GradientPayload,
    n_draws: int = 10_000,
    seed: int = 0,
) -> AggregationErrorReport:
    """Monte-Carlo estimate of E||e(t)||^2 with e = (pi/K)(s_hat - s), compared
    against N * Gamma (K+1) / K^2 * MSE(t) with Gamma = max_k pi_k^2.

    Expectation is over receiver noise; the aggregation payload stays fixed.
    """
    if n_draws < 1000:
        raise ValueError("use at least 1e3 draws for a stable estimate")
    if payload.s is None:
        raise ValueError("payload has degenerate variance; nothing is transmitted")
    stats = payload.stats
    K, N = payload.K, payload.N
    s = payload.s
    s_sum = s.sum(axis=0)

    amps = np.sqrt(np.asarray(p, dtype=float)) * np.asarray(h_mags, dtype=float) / np.sqrt(eta)
    signal = amps @ s  # noiseless received signal
    rng = seeds.substream(seed, seeds.NOISE)
    errs = np.empty(n_draws)
    block = max(1, min(n_draws, int(2e6 // max(N, 1))))
    done = 0
    while done < n_draws:
        b = min(block, n_draws - done)
        noise = rng.normal(scale=np.sqrt(sigma2), size=(b, N)) if sigma2 > 0 else np.zeros((b, N))
        s_hat = signal[None, :] + noise / np.sqrt(eta)
        e = (stats.pi / K) * (s_hat - s_sum[None, :])
        errs[done:done + b] = np.sum(e * e, axis=1)
        done += b

    gamma = float(stats.pi2_k.max())
    mse = instantaneous_mse(p, h_mags, eta, sigma2)
    return AggregationErrorReport(
        estimate=float(errs.mean()),
        std_error=float(errs.std(ddof=1) / np.sqrt(n_draws)) if n_draws > 1 else 0.0,
        bound=N * gamma * (K + 1) / K**2 * mse,
        mse=mse,
        gamma=gamma,
    )


def bound_report_json(report: BoundReport, constants: ConstantEstimates,
                      empirical_lhs: float, extra: dict | None = None) -> str:
    payload = {
        "bound": report.to_dict(),
        "constants": constants.to_dict(),
        "empirical_time_avg_grad_norm_sq": empirical_lhs,
        "bound_holds": empirical_lhs <= report.total,
        # F_star is a descent-based surrogate, so term_initial is an estimate
        "f_star_is_surrogate": True,
    }
    if extra:
        payload.update(extra)
    return json.dumps(payload, indent=2)
