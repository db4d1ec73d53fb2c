import numpy as np
import pytest
from scipy.stats import norm

from directbart import (
    Scenario1Spec,
    Scenario2Spec,
    calibrate_scenario1,
    calibrate_scenario2,
    generate_scenario1,
    generate_scenario2,
)
from directbart.dgp import (
    _S2_SIGMA_Z,
    _s1_draw_z_given_x,
    _s1_f,
    _s1_g_int_base,
    _s1_g_slope,
    _s2_conditional_z_given_x0,
    _s2_gamma_nu,
    _s2_mu_star,
    _s2_tau_star,
    constants_rows,
    scenario1_constants,
    scenario2_constants,
)


class TestScenario1Calibration:
    def test_small_case_variance_target(self):
        alpha_mu, _ = calibrate_scenario1("small", n_mc=400_000, seed=1)
        # independent check with a different seed
        rng = np.random.default_rng(99)
        zc, z5 = _s1_draw_z_given_x(np.zeros(400_000), rng)
        var = (alpha_mu * _s1_g_int_base(zc, z5)).var()
        assert 0.98 < var < 1.02

    def test_large_case_variance_target(self):
        alpha_mu, _ = calibrate_scenario1("large", n_mc=400_000, seed=1)
        rng = np.random.default_rng(98)
        zc, z5 = _s1_draw_z_given_x(np.zeros(400_000), rng)
        var = (alpha_mu * _s1_g_int_base(zc, z5)).var()
        assert 14.7 < var < 15.3

    def test_tau_variance_target(self):
        _, alpha_tau = calibrate_scenario1("small", n_mc=400_000, seed=1)
        from directbart.dgp import _s1_tau_base

        rng = np.random.default_rng(97)
        zc, z5 = _s1_draw_z_given_x(np.zeros(400_000), rng)
        var = (alpha_tau * _s1_tau_base(zc, z5)).var()
        assert 0.49 < var < 0.51

    def test_alpha_tau_shared_across_cases(self):
        _, t_small = scenario1_constants("small")
        _, t_large = scenario1_constants("large")
        assert t_small == t_large

    def test_deterministic_given_seed(self):
        a = calibrate_scenario1("small", n_mc=200_000, seed=5)
        b = calibrate_scenario1("small", n_mc=200_000, seed=5)
        assert a == b


class TestScenario1Generation:
    def test_noiseless_identity(self):
        spec = Scenario1Spec(n=400, case="small", sigma2=0.0, seed=3)
        sim = generate_scenario1(spec)
        ds = sim.dataset
        alpha_mu, _ = scenario1_constants("small")
        # recompute mu from the encoded covariates: indicators invert exactly
        z5 = np.where(ds.z[:, 4] == 1, 1, np.where(ds.z[:, 5] == 1, 2, 3))
        zc = ds.z[:, :4]
        mu = alpha_mu * _s1_g_int_base(zc, z5) + _s1_g_slope(zc, z5) * _s1_f(ds.x)
        resid = ds.y - mu - ds.treated * sim.true_tau
        assert np.max(np.abs(resid)) < 1e-12

    def test_f_vanishes_at_cutoff(self):
        assert _s1_f(np.array([0.0]))[0] == 0.0

    def test_running_covariate_correlation(self):
        spec = Scenario1Spec(n=100_000, case="small", sigma2=0.25, seed=4)
        sim = generate_scenario1(spec)
        ds = sim.dataset
        corr = np.corrcoef(ds.x, ds.z[:, 0])[0, 1]
        assert 0.25 < corr < 0.35

    def test_one_hot_validity(self):
        sim = generate_scenario1(Scenario1Spec(n=2000, sigma2=0.25, seed=5))
        onehot = sim.dataset.z[:, 4:]
        sums = onehot.sum(axis=1)
        assert np.all((sums == 0) | (sums == 1))
        assert set(np.unique(onehot)) <= {0.0, 1.0}
        # all three levels appear
        assert (sums == 0).any() and (onehot[:, 0] == 1).any() and (onehot[:, 1] == 1).any()

    def test_split_half_control_treated(self):
        sim = generate_scenario1(Scenario1Spec(n=1200, sigma2=0.25, seed=6))
        ds = sim.dataset
        assert int(ds.treated.sum()) == 600
        assert np.all(ds.x[:600] <= 0) and np.all(ds.x[600:] >= 0)

    def test_targets_shape_and_determinism(self):
        s1 = generate_scenario1(Scenario1Spec(n=400, sigma2=0.25, seed=7))
        s2 = generate_scenario1(Scenario1Spec(n=400, sigma2=0.25, seed=7))
        assert s1.targets.shape == (200, 6)
        np.testing.assert_array_equal(s1.targets, s2.targets)
        np.testing.assert_array_equal(s1.dataset.y, s2.dataset.y)

    def test_rejects_odd_n(self):
        with pytest.raises(ValueError):
            Scenario1Spec(n=1201)


class TestScenario2Calibration:
    def test_covariance_is_positive_definite(self):
        assert np.linalg.eigvalsh(_S2_SIGMA_Z).min() > 0

    def test_rho_zero_closed_form(self):
        g, nu = _s2_gamma_nu(0.0)
        assert g == 0.0 and nu == 1.0

    def test_moment_constraints_rho_half(self):
        g, nu = _s2_gamma_nu(0.5)
        rng = np.random.default_rng(0)
        L = np.linalg.cholesky(_S2_SIGMA_Z)
        z = rng.standard_normal((400_000, 4)) @ L.T
        x = 1.0 + g * z.sum(axis=1) + np.sqrt(nu) * rng.standard_normal(400_000)
        assert 0.98 < x.var() < 1.02
        gz = g * z.sum(axis=1)
        assert 0.48 < np.corrcoef(x, gz)[0, 1] < 0.52

    def test_tau_calibration_targets(self):
        _, _, _, alpha_tau, beta_tau = calibrate_scenario2(0.0, n_mc=400_000, seed=1)
        mean, chol = _s2_conditional_z_given_x0(0.0)
        rng = np.random.default_rng(55)
        z = mean + rng.standard_normal((400_000, 4)) @ chol.T
        tau = alpha_tau + beta_tau * _s2_tau_star(z[:, 0])
        assert 0.98 < tau.std() < 1.02
        assert -0.02 < tau.min() < 0.02

    def test_mu_calibration_target(self):
        _, _, beta_mu, _, _ = calibrate_scenario2(0.25, n_mc=400_000, seed=1)
        mean, chol = _s2_conditional_z_given_x0(0.25)
        rng = np.random.default_rng(56)
        z = mean + rng.standard_normal((400_000, 4)) @ chol.T
        zstar = z.sum(axis=1) / 2.0
        mu0 = beta_mu * _s2_mu_star(np.zeros(400_000), zstar)
        assert 0.98 < mu0.var() < 1.02

    def test_rho_bounds(self):
        with pytest.raises(ValueError):
            calibrate_scenario2(1.0)


class TestScenario2Generation:
    def test_zstar_hand_value(self):
        z = np.ones((1, 4))
        assert z.sum() / 2.0 == 2.0

    def test_mu_star_hand_value(self):
        # x = 0, zstar = 0: 1 + 4 * 1 = 5
        assert _s2_mu_star(np.array([0.0]), np.array([0.0]))[0] == pytest.approx(5.0)

    def test_noiseless_identity(self):
        spec = Scenario2Spec(n=300, rho=0.25, sigma2=0.0, seed=2)
        sim = generate_scenario2(spec)
        ds = sim.dataset
        _, _, beta_mu, _, _ = scenario2_constants(0.25)
        zstar = ds.z.sum(axis=1) / 2.0
        mu = beta_mu * _s2_mu_star(ds.x, zstar)
        resid = ds.y - mu - ds.treated * sim.true_tau
        assert np.max(np.abs(resid)) < 1e-12

    def test_empirical_covariance_matches(self):
        spec = Scenario2Spec(n=100_000, rho=0.0, sigma2=0.5, seed=8)
        sim = generate_scenario2(spec)
        emp = np.cov(sim.dataset.z.T)
        assert np.max(np.abs(emp - _S2_SIGMA_Z)) < 0.02

    def test_target_conditional_mean(self):
        spec = Scenario2Spec(n=600, rho=0.5, sigma2=0.5, seed=9)
        sims = [generate_scenario2(Scenario2Spec(n=600, rho=0.5, sigma2=0.5, seed=s))
                for s in range(9, 29)]
        targets = np.vstack([s.targets for s in sims])
        mean, _ = _s2_conditional_z_given_x0(0.5)
        se = np.sqrt(np.diag(_S2_SIGMA_Z) / targets.shape[0])
        assert np.all(np.abs(targets.mean(axis=0) - mean) < 5 * se)

    def test_asymmetric_running_variable(self):
        sim = generate_scenario2(Scenario2Spec(n=50_000, rho=0.0, sigma2=0.5, seed=10))
        # mean shifted to 1: most units treated
        frac = sim.dataset.treated.mean()
        assert 0.78 < frac < 0.88

    def test_determinism(self):
        a = generate_scenario2(Scenario2Spec(n=200, rho=0.25, sigma2=1.0, seed=11))
        b = generate_scenario2(Scenario2Spec(n=200, rho=0.25, sigma2=1.0, seed=11))
        np.testing.assert_array_equal(a.dataset.y, b.dataset.y)
        np.testing.assert_array_equal(a.true_tau_targets, b.true_tau_targets)


class TestConstantsPersistence:
    def test_rows_and_roundtrip(self, tmp_path):
        from directbart.dgp import save_constants

        rows = constants_rows(2, 0.25)
        names = [r[1] for r in rows]
        assert names == ["gamma", "nu", "beta_mu", "alpha_tau", "beta_tau"]
        path = tmp_path / "constants.csv"
        save_constants(path, rows)
        text = path.read_text().splitlines()
        assert text[0] == "scenario,parameter,value,calibration_seed"
        assert len(text) == 6
