"""Analog aggregation pipeline: gradient statistics, normalization, noisy
superposition at the receiver, de-normalization, and the aggregation MSE.

Channel phases are pre-compensated at the transmitter, so everything here
operates on real signals and channel magnitudes.  Receiver noise is real AWGN
with per-component variance sigma2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelTrace

VARIANCE_TOL = 1e-12


class DegenerateVarianceError(ValueError):
    """All devices produced near-constant gradients; normalization undefined."""


@dataclass(frozen=True)
class GradientStats:
    """Per-device and global first/second moments of the accumulated gradients."""

    theta_bar_k: np.ndarray  # (K,) per-device means
    pi2_k: np.ndarray        # (K,) per-device population variances
    theta_bar: float         # global mean: average of theta_bar_k
    pi2: float               # global variance: average of pi2_k

    @property
    def pi(self) -> float:
        return float(np.sqrt(self.pi2))


def compute_stats(theta_all: np.ndarray) -> GradientStats:
    """Per-device mean/variance and the global (theta_bar, pi^2) of a (K, N) stack."""
    theta_all = np.asarray(theta_all, dtype=float)
    if theta_all.ndim != 2 or theta_all.shape[1] < 1:
        raise ValueError(f"expected (K, N) gradients with N >= 1, got shape {theta_all.shape}")
    theta_bar_k = theta_all.mean(axis=1)
    pi2_k = theta_all.var(axis=1)  # population variance
    return GradientStats(
        theta_bar_k=theta_bar_k,
        pi2_k=pi2_k,
        theta_bar=float(theta_bar_k.mean()),
        pi2=float(pi2_k.mean()),
    )


def normalize(theta_k: np.ndarray, theta_bar: float, pi: float) -> np.ndarray:
    """s_k = (theta_k - theta_bar) / pi."""
    if pi <= VARIANCE_TOL:
        raise DegenerateVarianceError(
            f"global gradient std {pi} below tolerance; transmit the shared mean instead")
    return (np.asarray(theta_k, dtype=float) - theta_bar) / pi


def denormalize(s_hat: np.ndarray, pi: float, theta_bar: float, K: int) -> np.ndarray:
    """theta_hat = (pi * s_hat + K * theta_bar) / K."""
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    return (pi * np.asarray(s_hat, dtype=float) + K * theta_bar) / K


@dataclass(frozen=True)
class GradientPayload:
    """Accumulated local gradients with their statistics and normalized signals.

    ``s`` is None when the global variance is degenerate (all devices sent the
    same constant gradient); the caller then falls back to the shared mean.
    """

    theta: np.ndarray  # (K, N)
    stats: GradientStats
    s: np.ndarray | None  # (K, N)

    @classmethod
    def build(cls, theta_all: np.ndarray) -> "GradientPayload":
        theta_all = np.asarray(theta_all, dtype=float)
        stats = compute_stats(theta_all)
        if stats.pi <= VARIANCE_TOL:
            s = None
        else:
            s = normalize(theta_all, stats.theta_bar, stats.pi)
        return cls(theta=theta_all, stats=stats, s=s)

    @property
    def K(self) -> int:
        return self.theta.shape[0]

    @property
    def N(self) -> int:
        return self.theta.shape[1]


def transmit_aggregate(
    s_all: np.ndarray,
    p: np.ndarray,
    h_mags: np.ndarray,
    eta: float,
    sigma2: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Noisy superposition at the receiver after normalization by sqrt(eta).

    s_hat = sum_k (sqrt(p_k) |h_k| / sqrt(eta)) s_k + n / sqrt(eta),
    with n ~ N(0, sigma2 * I).
    """
    s_all = np.asarray(s_all, dtype=float)
    p = np.asarray(p, dtype=float)
    h_mags = np.asarray(h_mags, dtype=float)
    if eta <= 0.0:
        raise ValueError(f"eta must be positive, got {eta}")
    if np.any(p < 0.0):
        raise ValueError("transmit powers must be non-negative")
    amps = np.sqrt(p) * h_mags / np.sqrt(eta)  # (K,)
    s_hat = amps @ s_all
    if sigma2 > 0.0:
        s_hat = s_hat + rng.normal(scale=np.sqrt(sigma2), size=s_all.shape[1]) / np.sqrt(eta)
    return s_hat


def instantaneous_mse(p: np.ndarray, h_mags: np.ndarray, eta: float, sigma2: float) -> float:
    """Aggregation error metric of one round:

    sum_k (sqrt(p_k) |h_k| / sqrt(eta) - 1)^2 + sigma2 / eta
    """
    if eta <= 0.0:
        raise ValueError(f"eta must be positive, got {eta}")
    p = np.asarray(p, dtype=float)
    h_mags = np.asarray(h_mags, dtype=float)
    amps = np.sqrt(p) * h_mags / np.sqrt(eta)
    return float(np.sum((amps - 1.0) ** 2) + sigma2 / eta)


@dataclass(frozen=True)
class PowerAllocation:
    """Per-round transmit powers and receive normalizing factors."""

    p: np.ndarray    # (K, T), >= 0
    eta: np.ndarray  # (T,), > 0

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        eta = np.asarray(self.eta, dtype=float)
        if p.ndim != 2 or eta.ndim != 1 or p.shape[1] != eta.shape[0]:
            raise ValueError(f"allocation shapes inconsistent: p {p.shape}, eta {eta.shape}")
        if np.any(p < 0.0):
            raise ValueError("powers must be non-negative")
        if np.any(eta <= 0.0):
            raise ValueError("eta must be positive")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "eta", eta)

    @property
    def K(self) -> int:
        return self.p.shape[0]

    @property
    def T(self) -> int:
        return self.p.shape[1]

    def feasibility_violations(self, p_max: np.ndarray, p_bar: np.ndarray) -> dict:
        """Worst-case constraint gaps (positive numbers mean violation)."""
        p_max = np.asarray(p_max, dtype=float)
        p_bar = np.asarray(p_bar, dtype=float)
        return {
            "max_power": float(np.max(self.p - p_max[:, None])),
            "nonneg": float(np.max(-self.p)),
            "avg_power": float(np.max(self.p.mean(axis=1) - p_bar)),
        }

    def is_feasible(self, p_max: np.ndarray, p_bar: np.ndarray, tol: float = 1e-9) -> bool:
        v = self.feasibility_violations(p_max, p_bar)
        return all(gap <= tol for gap in v.values())


def time_average_mse(
    allocation: PowerAllocation,
    trace: ChannelTrace,
    sigma2: float,
    mean: bool = False,
) -> float:
    """Sum over rounds of the instantaneous MSE (the optimization objective).

    The per-round mean is available with ``mean=True`` for reporting.
    """
    if allocation.K != trace.K or allocation.T != trace.T:
        raise ValueError(
            f"allocation {allocation.p.shape} does not match trace {trace.magnitude.shape}")
    amps = np.sqrt(allocation.p) * trace.magnitude / np.sqrt(allocation.eta)[None, :]
    total = float(np.sum((amps - 1.0) ** 2) + np.sum(sigma2 / allocation.eta))
    return total / allocation.T if mean else total
