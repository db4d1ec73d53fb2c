import numpy as np
import pytest
from scipy import stats

from directbart import Dataset, LocalLinearPrior, LocalLinearState, build_design
from directbart.data import vec
from directbart.locallinear import BSampler, b_posterior, sample_B, sample_omega


def make_design(n, q, d, seed=0, h=10.0, x=None):
    rng = np.random.default_rng(seed)
    if x is None:
        x = rng.uniform(-1, 1, n)
    z = rng.normal(size=(n, d))
    ds = Dataset(np.zeros(n), x, z, 0.0)
    return build_design(ds, q, h), rng


class TestPrior:
    def test_default_values(self):
        p = LocalLinearPrior.default(q=2, d=3)
        assert p.M0.shape == (5, 4)
        np.testing.assert_array_equal(p.V0, 100 * np.eye(5))
        np.testing.assert_array_equal(p.U0, np.eye(4))
        assert p.nu0 == 1.0 and p.eta0 == 1.0

    def test_vec_cov_is_kron(self):
        rng = np.random.default_rng(0)
        A = rng.normal(size=(3, 3))
        V0 = A @ A.T + np.eye(3)
        B = rng.normal(size=(2, 2))
        U0 = B @ B.T + np.eye(2)
        p = LocalLinearPrior(M0=np.zeros((3, 2)), V0=V0, U0=U0)
        np.testing.assert_allclose(p.vec_cov, np.kron(U0, V0))
        np.testing.assert_allclose(p.vec_precision @ p.vec_cov, np.eye(6), atol=1e-10)

    def test_rejects_bad_shapes(self):
        with pytest.raises(ValueError):
            LocalLinearPrior(M0=np.zeros((3, 2)), V0=np.eye(2), U0=np.eye(2))

    def test_state_validation(self):
        with pytest.raises(ValueError):
            LocalLinearState(B=np.zeros((2, 2)), omega=-1.0)


class TestSampleB:
    def test_no_data_reduces_to_prior(self):
        design, _ = make_design(10, q=1, d=1, h=10.0)
        # zero out every weight: posterior equals prior
        design = type(design)(
            x_basis=design.x_basis, z_tilde=design.z_tilde, kron=design.kron,
            weights=np.zeros(10),
        )
        prior = LocalLinearPrior(
            M0=np.array([[0.5, -0.2], [1.0, 0.0], [0.0, 0.3]]),
            V0=np.diag([1.0, 2.0, 0.5]),
            U0=np.diag([1.0, 3.0]),
        )
        rng = np.random.default_rng(1)
        n_draws = 100_000
        draws = np.empty((n_draws, 6))
        for i in range(n_draws):
            draws[i] = vec(sample_B(np.zeros(10), design, 1.0, prior, rng))
        cov = prior.vec_cov
        sd = np.sqrt(np.diag(cov))
        se_mean = sd / np.sqrt(n_draws)
        np.testing.assert_array_less(
            np.abs(draws.mean(axis=0) - prior.vec_mean), 4 * se_mean
        )
        # variance of each coordinate within 4 se of the prior variance
        var_se = np.diag(cov) * np.sqrt(2.0 / n_draws)
        np.testing.assert_array_less(
            np.abs(draws.var(axis=0) - np.diag(cov)), 4 * var_se
        )

    def test_posterior_mean_matches_dense_solve(self):
        # q=1, d=1, n=6, all weights 1, fixed omega: generalized ridge form
        design, rng = make_design(6, q=1, d=1, seed=2, h=100.0)
        assert np.all(design.weights == 1.0)
        r = rng.normal(size=6)
        omega = 1.7
        prior = LocalLinearPrior.default(q=1, d=1)
        mean, _ = b_posterior(r, design, omega, prior)
        # independent dense solve built from first principles
        X = design.kron
        Sigma0 = np.linalg.inv(np.kron(prior.U0, prior.V0))
        lhs = omega * X.T @ X + Sigma0
        rhs = omega * X.T @ r + Sigma0 @ vec(prior.M0)
        expected = np.linalg.solve(lhs, rhs)
        assert np.max(np.abs(mean - expected)) < 1e-8

    def test_noiseless_recovery(self):
        rng = np.random.default_rng(3)
        n, q, d = 200, 1, 2
        design, _ = make_design(n, q=q, d=d, seed=3, h=100.0)
        B_true = rng.normal(size=(2 * q + 1, d + 1))
        r = design.kron @ vec(B_true)  # noiseless
        prior = LocalLinearPrior(
            M0=np.zeros((2 * q + 1, d + 1)),
            V0=1e6 * np.eye(2 * q + 1),
            U0=np.eye(d + 1),
        )
        mean, _ = b_posterior(r, design, 1.0, prior)
        assert np.max(np.abs(mean - vec(B_true))) < 1e-3

    def test_draw_covariance(self):
        design, rng = make_design(20, q=1, d=1, seed=4, h=100.0)
        r = rng.normal(size=20)
        prior = LocalLinearPrior.default(q=1, d=1)
        omega = 2.0
        mean, L = b_posterior(r, design, omega, prior)
        cov = np.linalg.inv(L @ L.T)
        rng2 = np.random.default_rng(5)
        n_draws = 50_000
        draws = np.array([
            vec(sample_B(r, design, omega, prior, rng2)) for _ in range(n_draws)
        ])
        np.testing.assert_allclose(draws.mean(axis=0), mean, atol=1e-2)
        # covariance entries fluctuate with se ~ sqrt(2/n) * scale
        atol = 4 * np.sqrt(2.0 / n_draws) * float(np.abs(cov).max())
        np.testing.assert_allclose(np.cov(draws.T), cov, atol=atol)

    def test_bsampler_matches_oneshot(self):
        design, rng = make_design(30, q=2, d=2, seed=6, h=0.7)
        r = rng.normal(size=30)
        prior = LocalLinearPrior.default(q=2, d=2)
        m1, L1 = b_posterior(r, design, 1.3, prior)
        m2, L2 = BSampler(design, prior).posterior(r, 1.3)
        np.testing.assert_allclose(m1, m2, atol=1e-12)
        np.testing.assert_allclose(L1, L2, atol=1e-12)


class TestSampleOmega:
    def test_zero_residuals(self):
        prior = LocalLinearPrior.default(q=1, d=1)
        w = np.ones(40)
        rng = np.random.default_rng(0)
        n_draws = 100_000
        draws = np.array([
            sample_omega(np.zeros(40), w, prior, rng) for _ in range(n_draws)
        ])
        shape = prior.nu0 + 20.0
        mean = shape / prior.eta0
        assert abs(draws.mean() - mean) < 4 * np.sqrt(shape) / prior.eta0 / np.sqrt(n_draws) * np.sqrt(shape)

    def test_no_data_reduces_to_prior(self):
        prior = LocalLinearPrior.default(q=1, d=1)
        rng = np.random.default_rng(1)
        draws = np.array([
            sample_omega(np.ones(10), np.zeros(10), prior, rng)
            for _ in range(50_000)
        ])
        d_ks = stats.kstest(draws, stats.gamma(a=1.0, scale=1.0).cdf).statistic
        assert d_ks < 0.01

    def test_subset_conjugacy_ks(self):
        # binary weights: identical law to unweighted conjugacy on the subset
        rng = np.random.default_rng(2)
        resid = rng.normal(scale=0.7, size=100)
        w = (rng.uniform(size=100) < 0.6).astype(float)
        prior = LocalLinearPrior.default(q=1, d=1)
        shape = prior.nu0 + w.sum() / 2
        rate = prior.eta0 + 0.5 * float(w @ resid**2)
        n_draws = 100_000
        draws = np.array([
            sample_omega(resid, w, prior, rng) for _ in range(n_draws)
        ])
        d_ks = stats.kstest(draws, stats.gamma(a=shape, scale=1 / rate).cdf).statistic
        assert d_ks < 0.01

    def test_nonfinite_residual_rejected(self):
        from directbart.errors import NumericError

        prior = LocalLinearPrior.default(q=1, d=1)
        with pytest.raises(NumericError):
            sample_omega(np.array([1.0, np.inf]), np.ones(2), prior,
                         np.random.default_rng(0))


class TestFullVsSubsetEquivalence:
    def test_binary_kernel_subset_identity(self):
        # with the uniform kernel, conditionals on full data equal those on
        # the in-window subsample exactly
        rng = np.random.default_rng(7)
        n = 50
        x = rng.uniform(-2, 2, n)
        z = rng.normal(size=(n, 2))
        ds = Dataset(np.zeros(n), x, z, 0.0)
        design_full = build_design(ds, 1, h=0.8)
        keep = design_full.weights > 0
        ds_sub = Dataset(np.zeros(int(keep.sum())), x[keep], z[keep], 0.0)
        design_sub = build_design(ds_sub, 1, h=0.8)
        prior = LocalLinearPrior.default(q=1, d=2)
        r = rng.normal(size=n)
        m_full, L_full = b_posterior(r, design_full, 1.1, prior)
        m_sub, L_sub = b_posterior(r[keep], design_sub, 1.1, prior)
        np.testing.assert_allclose(m_full, m_sub, atol=1e-12)
        np.testing.assert_allclose(L_full, L_sub, atol=1e-12)
