"""Alternating optimization of transmit powers and receive normalizing factors.

The time-average MSE objective decouples into two convex subproblems that are
solved to global optimality in closed form:

* for fixed powers, the optimal per-round normalizing factor is
  eta* = ((sigma2 + sum_k p_k |h_k|^2) / (sum_k sqrt(p_k) |h_k|))^2;
* for fixed factors, the optimal per-device power schedule either caps the
  channel inversion eta(t)/|h(t)|^2 at p_max, or, when that schedule would
  exceed the average budget, takes the dual form
  ( sqrt(eta) |h| / (|h|^2 + mu * eta) )^2 capped at p_max, with the dual
  variable mu found by bisection so the average-power constraint is tight.

The outer loop alternates the two updates and records a monotone MSE history.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .aircomp import PowerAllocation
from .channel import ChannelTrace, SystemConfig

BISECT_REL_TOL = 1e-9
MAX_BRACKET_DOUBLINGS = 200
MAX_BISECT_STEPS = 400


class NoSignalError(ValueError):
    """No device delivers any effective amplitude; eta is undefined."""


class BracketingError(ValueError):
    """The dual problem has no positive root (the capped inversion is feasible)."""


def optimal_eta(p: np.ndarray, h_mags: np.ndarray, sigma2: float) -> float:
    """Closed-form minimizer of the one-round MSE over eta for fixed powers."""
    p = np.asarray(p, dtype=float)
    h_mags = np.asarray(h_mags, dtype=float)
    amps = np.sqrt(p) * h_mags
    denom = amps.sum()
    if denom <= 0.0:
        raise NoSignalError("all effective amplitudes sqrt(p_k)|h_k| are zero")
    return float(((sigma2 + np.sum(amps**2)) / denom) ** 2)


def power_given_mu(h_t: np.ndarray, eta_t: np.ndarray, mu: float, p_max: float) -> np.ndarray:
    """Per-round powers of the dual form, capped at p_max; zero on dead rounds."""
    h_t = np.asarray(h_t, dtype=float)
    eta_t = np.asarray(eta_t, dtype=float)
    p = np.zeros_like(h_t)
    live = h_t > 0.0
    hl, el = h_t[live], eta_t[live]
    p[live] = np.minimum((np.sqrt(el) * hl / (hl * hl + mu * el)) ** 2, p_max)
    return p


def _capped_inversion(h_t: np.ndarray, eta_t: np.ndarray, p_max: float) -> np.ndarray:
    p = np.zeros_like(h_t)
    live = h_t > 0.0
    p[live] = np.minimum(eta_t[live] / h_t[live] ** 2, p_max)
    return p


def bisect_mu(
    h_t: np.ndarray,
    eta_t: np.ndarray,
    p_max: float,
    p_bar: float,
    T: int,
    tol: float | None = None,
) -> float:
    """Find mu > 0 with sum_t p_t(mu) = T * p_bar by bisection.

    g(mu) = sum_t min((sqrt(eta)|h| / (|h|^2 + mu eta))^2, p_max) is continuous
    and decreasing to zero, so doubling the upper end from 1 always brackets.
    """
    h_t = np.asarray(h_t, dtype=float)
    eta_t = np.asarray(eta_t, dtype=float)
    target = T * p_bar
    if tol is None:
        tol = BISECT_REL_TOL * target

    def g(mu: float) -> float:
        return float(power_given_mu(h_t, eta_t, mu, p_max).sum())

    if g(0.0) <= target:
        raise BracketingError("capped channel inversion already meets the average budget")
    lo, hi = 0.0, 1.0
    for _ in range(MAX_BRACKET_DOUBLINGS):
        if g(hi) < target:
            break
        lo, hi = hi, 2.0 * hi
    for _ in range(MAX_BISECT_STEPS):
        mid = 0.5 * (lo + hi)
        val = g(mid)
        if abs(val - target) <= tol:
            return mid
        if val > target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= np.finfo(float).eps * max(hi, 1.0):
            break
    return 0.5 * (lo + hi)


def optimal_power_device(
    h_t: np.ndarray,
    eta_t: np.ndarray,
    p_max: float,
    p_bar: float,
    T: int | None = None,
) -> tuple[np.ndarray, float]:
    """Optimal power schedule of one device for fixed eta(t); returns (p_t, mu).

    Rounds with |h(t)| = 0 are assigned zero power.
    """
    h_t = np.asarray(h_t, dtype=float)
    eta_t = np.asarray(eta_t, dtype=float)
    if np.any(eta_t <= 0.0):
        raise ValueError("eta_t must be positive")
    if T is None:
        T = h_t.shape[0]
    cap = _capped_inversion(h_t, eta_t, p_max)
    if cap.sum() <= T * p_bar:
        return cap, 0.0
    mu = bisect_mu(h_t, eta_t, p_max, p_bar, T)
    return power_given_mu(h_t, eta_t, mu, p_max), mu


@dataclass(frozen=True)
class OptResult:
    """Output of the alternating solver."""

    allocation: PowerAllocation
    mse_history: list[float]
    iterations: int
    converged: bool
    mu: np.ndarray  # (K,) final dual variables

    def to_dict(self) -> dict:
        return {
            "p": self.allocation.p.tolist(),
            "eta": self.allocation.eta.tolist(),
            "mse_history": list(self.mse_history),
            "iterations": self.iterations,
            "converged": self.converged,
            "mu": self.mu.tolist(),
        }


def _eta_per_round(p: np.ndarray, mags: np.ndarray, sigma2: float) -> np.ndarray:
    amps = np.sqrt(p) * mags  # (K, T)
    denom = amps.sum(axis=0)
    if np.any(denom <= 0.0):
        raise NoSignalError("a round has zero total effective amplitude")
    return ((sigma2 + np.sum(amps**2, axis=0)) / denom) ** 2


def alternating_optimize(
    cfg: SystemConfig,
    trace: ChannelTrace,
    init_policy: np.ndarray | str = "full_power",
    eps0: float = 1e-6,
    max_iter: int = 200,
) -> OptResult:
    """Alternate the closed-form eta update and the per-device power update
    until the relative MSE decrease drops below eps0.

    The first history entry is the MSE of the initial powers with their
    optimal eta, so one iteration is recorded even when eps0 stops
    immediately.
    """
    if trace.K != cfg.K or trace.T != cfg.T:
        raise ValueError(f"trace {trace.magnitude.shape} does not match config (K={cfg.K}, T={cfg.T})")
    mags = trace.magnitude
    if isinstance(init_policy, str):
        if init_policy != "full_power":
            raise ValueError(f"unknown init policy {init_policy!r}")
        p = np.broadcast_to(cfg.p_bar[:, None], (cfg.K, cfg.T)).copy()
    else:
        p = np.asarray(init_policy, dtype=float).reshape(cfg.K, cfg.T).copy()
    mu = np.zeros(cfg.K)

    def total_mse(p_arr, eta_arr) -> float:
        amps = np.sqrt(p_arr) * mags / np.sqrt(eta_arr)[None, :]
        return float(np.sum((amps - 1.0) ** 2) + np.sum(cfg.sigma2 / eta_arr))

    eta = _eta_per_round(p, mags, cfg.sigma2)
    history = [total_mse(p, eta)]
    converged = False
    iterations = 0
    for i in range(max_iter):
        iterations += 1
        if i > 0:
            eta = _eta_per_round(p, mags, cfg.sigma2)
        for k in range(cfg.K):
            p[k], mu[k] = optimal_power_device(
                mags[k], eta, float(cfg.p_max[k]), float(cfg.p_bar[k]), cfg.T)
        history.append(total_mse(p, eta))
        if history[-1] == 0.0 or (history[-2] - history[-1]) < eps0 * history[-1]:
            converged = True
            break
    return OptResult(
        allocation=PowerAllocation(p=p, eta=eta),
        mse_history=history,
        iterations=iterations,
        converged=converged,
        mu=mu,
    )


@dataclass(frozen=True)
class KKTReport:
    """First-order optimality residuals of one device's power schedule.

    All residuals are non-negative; values near zero certify optimality.
    ``stationarity`` compares p(t) against the dual closed form on rounds where
    the p_max cap is inactive; ``complementary_slackness`` is the relative
    average-power gap when mu > 0.
    """

    max_power: float
    nonneg: float
    avg_power: float
    dual: float
    stationarity: float
    complementary_slackness: float

    def max_residual(self) -> float:
        return max(
            self.max_power, self.nonneg, self.avg_power,
            self.dual, self.stationarity, self.complementary_slackness,
        )

    def to_dict(self) -> dict:
        return {
            "max_power": self.max_power,
            "nonneg": self.nonneg,
            "avg_power": self.avg_power,
            "dual": self.dual,
            "stationarity": self.stationarity,
            "complementary_slackness": self.complementary_slackness,
            "max_residual": self.max_residual(),
        }


def kkt_residuals(
    p_t: np.ndarray,
    mu: float,
    h_t: np.ndarray,
    eta_t: np.ndarray,
    p_max: float,
    p_bar: float,
    T: int | None = None,
) -> KKTReport:
    """Diagnostic residuals of the per-device KKT system for a candidate (p, mu)."""
    p_t = np.asarray(p_t, dtype=float)
    h_t = np.asarray(h_t, dtype=float)
    eta_t = np.asarray(eta_t, dtype=float)
    if T is None:
        T = p_t.shape[0]
    target = T * p_bar

    stationary = power_given_mu(h_t, eta_t, mu, p_max)
    interior = p_t < p_max
    if np.any(interior):
        stat = float(np.max(np.abs(p_t[interior] - stationary[interior])))
    else:
        stat = 0.0
    total = float(p_t.sum())
    return KKTReport(
        max_power=float(max(0.0, np.max(p_t - p_max))),
        nonneg=float(max(0.0, np.max(-p_t))),
        avg_power=max(0.0, (total - target) / target),
        dual=max(0.0, -mu),
        stationarity=stat,
        complementary_slackness=(abs(total - target) / target if mu > 0.0 else 0.0),
    )


def solver_kkt_report(result: OptResult, trace: ChannelTrace, cfg: SystemConfig) -> list[KKTReport]:
    """KKT residuals of every device in a solver result."""
    return [
        kkt_residuals(
            result.allocation.p[k], float(result.mu[k]), trace.magnitude[k],
            result.allocation.eta, float(cfg.p_max[k]), float(cfg.p_bar[k]), cfg.T)
        for k in range(cfg.K)
    ]
