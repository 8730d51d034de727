"""Independent brute-force oracles used by the test suite.

Everything here is deliberately written from first principles (grid searches,
direct recomputation, reference loops) so it shares no code path with the
implementations it checks.
"""

from __future__ import annotations

import numpy as np


def mse_of_omega(omega, p, h, sigma2):
    """One-round MSE as a function of omega = 1/sqrt(eta), direct from the
    definition; vectorized over omega."""
    omega = np.asarray(omega, dtype=float)
    a = np.sqrt(p) * h
    return (np.sum(a * a) + sigma2) * omega**2 - 2.0 * np.sum(a) * omega + len(p)


def grid_eta_search(p, h, sigma2, n_grid=100_000):
    """Two-phase grid search over omega; returns (eta_best, mse_best).

    Phase 1 localizes the basin on a wide log grid; phase 2 refines with a
    dense linear grid around it.
    """
    coarse = np.logspace(-8, 8, 1000)
    vals = mse_of_omega(coarse, p, h, sigma2)
    om0 = coarse[np.argmin(vals)]
    fine = np.linspace(om0 / 10.0, om0 * 10.0, n_grid)
    fine = fine[fine > 0]
    vals = mse_of_omega(fine, p, h, sigma2)
    i = np.argmin(vals)
    return 1.0 / fine[i] ** 2, float(vals[i])


def misalignment(p, a):
    """sum_t (sqrt(p_t) a_t - 1)^2 with a = h / sqrt(eta)."""
    return float(np.sum((np.sqrt(p) * a - 1.0) ** 2))


def brute_force_power(h, eta, p_max, p_bar, levels=7, pts=9):
    """Constraint-respecting grid refinement for the per-device power problem.

    Minimizes the misalignment over the box [0, p_max]^T intersected with
    sum(p) <= T * p_bar, shrinking the grid around the best feasible point.
    Final grid spacing is well below 1e-3 for the sizes used in tests.
    """
    h = np.asarray(h, dtype=float)
    eta = np.asarray(eta, dtype=float)
    T = len(h)
    a = h / np.sqrt(eta)
    budget = T * p_bar

    axes = [np.linspace(0.0, p_max, pts) for _ in range(T)]
    best = None
    best_val = np.inf
    half = p_max / 2.0
    for level in range(levels):
        grids = np.meshgrid(*axes, indexing="ij")
        pcand = np.stack([g.ravel() for g in grids], axis=1)
        pcand = pcand[pcand.sum(axis=1) <= budget + 1e-12]
        vals = np.sum((np.sqrt(pcand) * a - 1.0) ** 2, axis=1)
        i = int(np.argmin(vals))
        if vals[i] < best_val:
            best_val = float(vals[i])
            best = pcand[i]
        # shrink around the incumbent; keep the previous spacing covered
        spacing = axes[0][1] - axes[0][0]
        half = 1.5 * spacing
        axes = [
            np.linspace(max(0.0, b - half), min(p_max, b + half), pts)
            for b in best
        ]
    return best, best_val


def secant_root(fn, x0, x1, tol=1e-12, max_iter=200):
    """Plain secant iteration, as an alternative 1-D root finder."""
    f0, f1 = fn(x0), fn(x1)
    for _ in range(max_iter):
        if f1 == f0:
            break
        x2 = x1 - f1 * (x1 - x0) / (f1 - f0)
        x2 = max(x2, 0.0)
        if abs(x2 - x1) <= tol * max(1.0, abs(x1)):
            return x2
        x0, f0, x1, f1 = x1, f1, x2, fn(x2)
    return x1


def two_pass_stats(vec):
    """Textbook two-pass mean and population variance of one vector."""
    vec = np.asarray(vec, dtype=float)
    m = float(sum(vec) / len(vec))
    v = float(sum((x - m) ** 2 for x in vec) / len(vec))
    return m, v


def reference_fedavg(model, w0, device_data, phi, lam, B, T, batch_rng_factory):
    """Plain FedAvg loop written independently: phi local steps per device,
    equal-weight average of the accumulated gradients, global step.

    batch_rng_factory(t, k) must return the RNG used for device k's batches
    in round t, so a simulator run with the same streams is comparable.
    """
    w = w0.copy()
    trajectory = [w.copy()]
    for t in range(T):
        updates = []
        for k, (Xk, yk) in enumerate(device_data):
            rng = batch_rng_factory(t, k)
            wk = w.copy()
            for _ in range(phi):
                idx = rng.choice(Xk.shape[0], size=B, replace=False)
                wk = wk - lam * model.grad(wk, Xk[idx], yk[idx])
            updates.append((w - wk) / lam)
        w = w - lam * np.mean(updates, axis=0)
        trajectory.append(w.copy())
    return trajectory
