import numpy as np
import pytest

from airfl import opt
from airfl.channel import SystemConfig, generate_channels
from airfl.opt import (
    BracketingError,
    NoSignalError,
    alternating_optimize,
    bisect_mu,
    kkt_residuals,
    optimal_eta,
    optimal_power_device,
    power_given_mu,
    solver_kkt_report,
)

from oracles import brute_force_power, grid_eta_search, misalignment, mse_of_omega, secant_root


class TestOptimalEta:
    def test_single_device_perfect(self):
        eta = optimal_eta(np.array([1.0]), np.array([1.0]), 0.0)
        assert eta == pytest.approx(1.0)
        assert mse_of_omega(1.0 / np.sqrt(eta), [1.0], [1.0], 0.0) == pytest.approx(0.0)

    def test_two_device_reference_value(self):
        eta = optimal_eta(np.array([1.0, 1.0]), np.array([1.0, 2.0]), 0.1)
        assert eta == pytest.approx((5.1 / 3.0) ** 2, rel=1e-12)
        eta_grid, _ = grid_eta_search(np.array([1.0, 1.0]), np.array([1.0, 2.0]), 0.1)
        mse_cf = mse_of_omega(1 / np.sqrt(eta), [1.0, 1.0], [1.0, 2.0], 0.1)
        mse_gr = mse_of_omega(1 / np.sqrt(eta_grid), [1.0, 1.0], [1.0, 2.0], 0.1)
        assert abs(mse_cf - mse_gr) <= 1e-6 * abs(mse_gr)

    def test_beats_random_probes(self, rng):
        for _ in range(20):
            K = int(rng.integers(1, 12))
            p = rng.uniform(0.01, 3.0, K)
            h = rng.rayleigh(np.sqrt(0.5), K)
            sigma2 = float(rng.uniform(0.0, 0.5))
            eta = optimal_eta(p, h, sigma2)
            best = mse_of_omega(1.0 / np.sqrt(eta), p, h, sigma2)
            probes = rng.uniform(0.01, 10.0, 1000)
            vals = mse_of_omega(1.0 / np.sqrt(probes), p, h, sigma2)
            assert best <= vals.min() + 1e-12

    def test_zero_signal_raises(self):
        with pytest.raises(NoSignalError):
            optimal_eta(np.zeros(3), np.ones(3), 0.1)


class TestOptimalPowerDevice:
    def test_unconstrained_channel_inversion(self):
        h = np.array([0.5, 1.0, 2.0])
        eta = np.array([1.0, 2.0, 0.5])
        p, mu = optimal_power_device(h, eta, 1e9, 1e9)
        assert mu == 0.0
        assert np.allclose(p, eta / h**2, rtol=1e-12)

    def test_power_decreases_with_mu(self):
        h = np.array([0.5, 1.0, 2.0])
        eta = np.ones(3)
        prev = power_given_mu(h, eta, 0.0, 3.0).sum()
        for mu in [0.1, 1.0, 10.0, 100.0]:
            cur = power_given_mu(h, eta, mu, 3.0).sum()
            assert cur < prev
            prev = cur
        assert power_given_mu(h, eta, 1e9, 3.0).sum() < 1e-12

    def test_reference_branch_case(self):
        # capped inversion sums to 4.25 > 3 = T*p_bar, so the dual branch fires
        h = np.array([0.5, 1.0, 2.0])
        eta = np.ones(3)
        assert np.minimum(eta / h**2, 3.0).sum() == pytest.approx(4.25)
        p, mu = optimal_power_device(h, eta, 3.0, 1.0)
        assert mu > 0.0
        assert p.sum() == pytest.approx(3.0, abs=1e-8)
        p_oracle, _ = brute_force_power(h, eta, 3.0, 1.0)
        assert np.max(np.abs(p - p_oracle)) <= 1e-3

    def test_matches_brute_force_on_random_instances(self, rng):
        for trial in range(10):
            T = int(rng.integers(2, 5))
            h = rng.rayleigh(np.sqrt(0.5), T)
            eta = rng.uniform(0.5, 3.0, T)
            p_max = 3.0
            p_bar = float(rng.uniform(0.3, 1.5))
            p, mu = optimal_power_device(h, eta, p_max, p_bar)
            p_oracle, val_oracle = brute_force_power(h, eta, p_max, p_bar)
            assert np.max(np.abs(p - p_oracle)) <= 1e-3
            a = h / np.sqrt(eta)
            assert misalignment(p, a) <= val_oracle + 1e-6

    def test_dead_round_gets_zero_power(self):
        h = np.array([0.0, 1.0])
        p, mu = optimal_power_device(h, np.ones(2), 3.0, 10.0)
        assert p[0] == 0.0
        assert p[1] == pytest.approx(1.0)

    def test_beats_random_feasible_probes(self, rng):
        for _ in range(10):
            T = int(rng.integers(3, 40))
            h = rng.rayleigh(np.sqrt(0.5), T)
            eta = rng.uniform(0.5, 3.0, T)
            p_bar = float(rng.uniform(0.3, 1.5))
            p, _ = optimal_power_device(h, eta, 3.0, p_bar)
            a = h / np.sqrt(eta)
            best = misalignment(p, a)
            for _ in range(200):
                probe = rng.uniform(0.0, 3.0, T)
                excess = probe.sum() / (T * p_bar)
                if excess > 1.0:
                    probe = probe / excess  # project onto the budget
                assert best <= misalignment(probe, a) + 1e-9


class TestBisectMu:
    def test_bracket_always_found(self, rng):
        for _ in range(20):
            T = int(rng.integers(3, 50))
            h = rng.rayleigh(np.sqrt(0.5), T)
            eta = rng.uniform(0.5, 3.0, T)
            p_bar = 0.2  # tight budget forces mu > 0
            if np.minimum(eta / h**2, 3.0).sum() <= T * p_bar:
                continue
            mu = bisect_mu(h, eta, 3.0, p_bar, T)
            assert power_given_mu(h, eta, mu, 3.0).sum() == pytest.approx(
                T * p_bar, abs=1e-9 * T * p_bar)

    def test_raises_when_budget_slack(self):
        h = np.ones(3)
        with pytest.raises(BracketingError):
            bisect_mu(h, np.ones(3), 3.0, 10.0, 3)

    def test_agrees_with_secant_oracle(self, rng):
        for _ in range(10):
            T = int(rng.integers(3, 30))
            h = rng.rayleigh(np.sqrt(0.5), T)
            eta = rng.uniform(0.5, 3.0, T)
            p_bar = 0.3
            if np.minimum(eta / h**2, 3.0).sum() <= T * p_bar:
                continue
            mu = bisect_mu(h, eta, 3.0, p_bar, T, tol=1e-12 * T * p_bar)

            def g_minus_target(m):
                return power_given_mu(h, eta, m, 3.0).sum() - T * p_bar

            mu_secant = secant_root(g_minus_target, max(mu * 0.5, 1e-6), mu * 1.5 + 1e-6)
            assert mu == pytest.approx(mu_secant, rel=1e-8, abs=1e-8)


class TestAlternatingOptimize:
    def test_single_device_fixed_point(self):
        # in the vanishing-noise limit the single-device solution aligns
        # perfectly and only the noise term survives
        cfg = SystemConfig.create(K=1, T=1, sigma2=1e-6, p_bar=[5.0], p_max=[1e9], seed=0)
        trace = generate_channels(cfg)
        res = alternating_optimize(cfg, trace)
        assert res.converged
        assert res.iterations <= 2
        eta = res.allocation.eta[0]
        amp = np.sqrt(res.allocation.p[0, 0]) * trace.magnitude[0, 0] / np.sqrt(eta)
        assert (amp - 1.0) ** 2 <= 1e-10  # alignment term vanishes
        assert res.mse_history[-1] == pytest.approx(cfg.sigma2 / eta, rel=1e-3)

    def test_monotone_descent_random_instances(self):
        for seed in range(15):
            cfg = SystemConfig.create(K=6, T=20, snr_db=10, sigma2=0.1, seed=seed)
            trace = generate_channels(cfg)
            res = alternating_optimize(cfg, trace, max_iter=300)
            hist = np.array(res.mse_history)
            assert np.all(np.diff(hist) <= 1e-9 * hist[:-1] + 1e-15)
            assert res.allocation.is_feasible(cfg.p_max, cfg.p_bar)

    def test_beats_full_power_baseline(self):
        from airfl.aircomp import time_average_mse
        from airfl.flsim import policy_full_power
        for seed in range(5):
            cfg = SystemConfig.create(K=20, T=50, snr_db=10, sigma2=0.1, seed=seed)
            trace = generate_channels(cfg)
            res = alternating_optimize(cfg, trace)
            fp_eta = np.array([
                policy_full_power(cfg.p_bar, trace.magnitude[:, t], cfg.sigma2)[1]
                for t in range(cfg.T)])
            from airfl.aircomp import PowerAllocation
            fp = PowerAllocation(p=np.tile(cfg.p_bar[:, None], (1, cfg.T)), eta=fp_eta)
            assert res.mse_history[-1] < time_average_mse(fp, trace, cfg.sigma2)

    def test_eps0_infinity_stops_after_one_iteration(self, paper_cfg):
        trace = generate_channels(paper_cfg)
        res = alternating_optimize(paper_cfg, trace, eps0=float("inf"))
        assert res.iterations == 1
        assert res.converged

    def test_max_iter_flags_unconverged(self, paper_cfg):
        trace = generate_channels(paper_cfg)
        res = alternating_optimize(paper_cfg, trace, eps0=0.0, max_iter=3)
        assert not res.converged
        assert res.iterations == 3
        assert res.allocation.is_feasible(paper_cfg.p_max, paper_cfg.p_bar)

    def test_trace_shape_mismatch_rejected(self, paper_cfg):
        bad = generate_channels(SystemConfig.create(K=3, T=7, seed=1))
        with pytest.raises(ValueError):
            alternating_optimize(paper_cfg, bad)


class TestKktResiduals:
    def test_solver_output_satisfies_kkt(self, rng):
        for seed in range(5):
            cfg = SystemConfig.create(K=8, T=60, snr_db=10, sigma2=0.1, seed=seed)
            trace = generate_channels(cfg)
            res = alternating_optimize(cfg, trace)
            for rep in solver_kkt_report(res, trace, cfg):
                assert rep.max_residual() <= 1e-7

    def test_perturbation_detected(self):
        cfg = SystemConfig.create(K=1, T=30, snr_db=10, sigma2=0.1, seed=2)
        trace = generate_channels(cfg)
        res = alternating_optimize(cfg, trace)
        p = res.allocation.p[0].copy()
        interior = np.flatnonzero(p < cfg.p_max[0] - 1e-6)
        p[interior[0]] *= 1.01
        rep = kkt_residuals(p, float(res.mu[0]), trace.magnitude[0],
                            res.allocation.eta, float(cfg.p_max[0]), float(cfg.p_bar[0]))
        assert rep.stationarity > 1e-4

    def test_mu_zero_branch_trivial_slackness(self):
        h = np.array([1.0, 1.0])
        eta = np.ones(2)
        p, mu = optimal_power_device(h, eta, 3.0, 10.0)
        assert mu == 0.0
        rep = kkt_residuals(p, mu, h, eta, 3.0, 10.0)
        assert rep.complementary_slackness == 0.0
        assert rep.max_residual() <= 1e-12
