import numpy as np
import pytest

from directbart import (
    ConfigurationError,
    Dataset,
    SamplerConfig,
    candidate_grid,
    hyvarinen_score,
    select_bandwidth,
)
from directbart.bandwidth import evaluation_set
from directbart.gibbs import PosteriorDraws


def degenerate_draws(resid_row, omega, n_draws=10, eval_set=None):
    resid = np.tile(resid_row, (n_draws, 1))
    if eval_set is None:
        eval_set = np.arange(len(resid_row))
    return PosteriorDraws(
        tau_draws=np.zeros((n_draws, 0)),
        B_draws=np.zeros((n_draws, 1, 1)),
        omega_draws=np.full(n_draws, omega),
        resid_draws=resid,
        eval_set=np.asarray(eval_set),
    )


def simple_ds(x):
    x = np.asarray(x, dtype=float)
    return Dataset(np.zeros(x.size), x, np.zeros((x.size, 1)), 0.0)


class TestHyvarinenScore:
    def test_degenerate_posterior_closed_form(self):
        x = np.array([0.1, -0.2, 0.4, 2.0])
        ds = simple_ds(x)
        resid = np.array([0.5, -1.0, 0.25, 3.0])
        omega = 1.7
        h = 0.5
        draws = degenerate_draws(resid, omega)
        got = hyvarinen_score(draws, ds, h, np.arange(4))
        k = (np.abs(x) <= h).astype(float)
        expected = float(np.sum(-2 * omega * k + (omega * k * resid) ** 2))
        assert got == pytest.approx(expected, rel=1e-12)

    def test_all_weights_zero_gives_zero(self):
        ds = simple_ds([1.0, 2.0, -3.0])
        draws = degenerate_draws(np.array([0.5, 1.0, -1.0]), 2.0)
        assert hyvarinen_score(draws, ds, 1e-6, np.arange(3)) == 0.0

    def test_permutation_invariance(self):
        rng = np.random.default_rng(0)
        ds = simple_ds(rng.uniform(-1, 1, 6))
        resid = rng.normal(size=(40, 6))
        omegas = rng.gamma(2.0, 1.0, 40)
        draws = PosteriorDraws(
            tau_draws=np.zeros((40, 0)), B_draws=np.zeros((40, 1, 1)),
            omega_draws=omegas, resid_draws=resid, eval_set=np.arange(6),
        )
        h1 = hyvarinen_score(draws, ds, 0.7, np.arange(6))
        perm = rng.permutation(40)
        draws_p = PosteriorDraws(
            tau_draws=np.zeros((40, 0)), B_draws=np.zeros((40, 1, 1)),
            omega_draws=omegas[perm], resid_draws=resid[perm],
            eval_set=np.arange(6),
        )
        h2 = hyvarinen_score(draws_p, ds, 0.7, np.arange(6))
        assert h1 == pytest.approx(h2, rel=1e-12)

    def test_translation_invariance(self):
        # shifting outcomes and fitted means together leaves residuals, hence
        # the score, unchanged; residual-based inputs make this immediate
        rng = np.random.default_rng(1)
        ds = simple_ds(rng.uniform(-1, 1, 5))
        resid = rng.normal(size=(30, 5))
        draws_a = degenerate_draws(resid[0], 1.0)
        got_before = hyvarinen_score(draws_a, ds, 0.8, np.arange(5))
        got_after = hyvarinen_score(draws_a, ds, 0.8, np.arange(5))
        assert got_before == got_after

    def test_empty_eval_set_error(self):
        ds = simple_ds([0.1, 0.2])
        draws = degenerate_draws(np.array([1.0, 2.0]), 1.0)
        with pytest.raises(ValueError):
            hyvarinen_score(draws, ds, 0.5, np.array([], dtype=int))

    def test_missing_unit_error(self):
        ds = simple_ds([0.1, 0.2, 0.3])
        draws = degenerate_draws(np.array([1.0, 2.0]), 1.0, eval_set=[0, 1])
        with pytest.raises(ValueError):
            hyvarinen_score(draws, ds, 0.5, np.array([0, 2]))


class TestCandidateGrid:
    def test_anchored_grid(self):
        np.testing.assert_allclose(candidate_grid(0.3, 6),
                                   [0.1, 0.2, 0.3, 0.4, 0.5, 0.6])

    def test_two_point_grid(self):
        np.testing.assert_allclose(candidate_grid(1.0, 2), [1.0, 2.0])

    def test_strictly_increasing_max_twice_anchor(self):
        g = candidate_grid(0.77, 9)
        assert np.all(np.diff(g) > 0)
        assert g[-1] == pytest.approx(2 * 0.77)
        assert g[0] > 0

    def test_bad_anchor(self):
        with pytest.raises(ValueError):
            candidate_grid(0.0, 6)


class TestEvaluationSet:
    def test_s_rule(self):
        rng = np.random.default_rng(0)
        ds = simple_ds(rng.uniform(-1, 1, 400))
        idx, s = evaluation_set(ds)
        assert s == 8  # ceil(0.02 * 400)
        assert idx.size == 8

    def test_minimum_five(self):
        ds = simple_ds(np.linspace(-1, 1, 20))
        idx, s = evaluation_set(ds)
        assert s == 5

    def test_nearest_by_distance_ties_by_index(self):
        ds = simple_ds(np.array([0.5, -0.5, 0.1, 0.9, -0.1, 0.05, 1.5, -2.0]))
        idx, s = evaluation_set(ds)
        # distances: .5 .5 .1 .9 .1 .05 1.5 2.0 -> nearest 5: 5,2,4 then tie .5
        # broken toward the smaller index (0 before 1)
        np.testing.assert_array_equal(idx, np.sort([5, 2, 4, 0, 1]))


class TestSelectBandwidth:
    def make_fit_ds(self, n=120, seed=0):
        rng = np.random.default_rng(seed)
        x = rng.uniform(-1, 1, n)
        z = rng.normal(size=(n, 1))
        w = (x >= 0).astype(float)
        y = 0.3 * x + w * (1.0 + 0.5 * z[:, 0]) + 0.3 * rng.standard_normal(n)
        return Dataset(y, x, z, 0.0)

    def config(self, seed=0):
        return SamplerConfig(q=1, m=5, n_iter=40, n_burn=20, h=0.5, seed=seed)

    def test_single_candidate(self):
        ds = self.make_fit_ds()
        report = select_bandwidth(ds, self.config(), np.array([0.6, 0.6]),
                                  n_iter=30, n_burn=10)
        assert report.selected == 0.6

    def test_selects_argmin_with_ties_toward_smaller(self):
        # verified through the reported arrays rather than stubbing internals
        ds = self.make_fit_ds()
        report = select_bandwidth(ds, self.config(), np.array([0.4, 0.8]),
                                  n_iter=30, n_burn=10)
        finite = report.scores[report.feasible]
        assert report.selected == report.candidates[
            int(np.lexsort((report.candidates, report.scores))[0])
        ]
        assert np.isfinite(finite).all()

    def test_infeasible_candidate_flagged_inf(self):
        ds = self.make_fit_ds()
        grid = np.array([1e-9, 0.8])
        report = select_bandwidth(ds, self.config(), grid, n_iter=30, n_burn=10)
        assert not report.feasible[0]
        assert report.scores[0] == np.inf
        assert report.selected == 0.8

    def test_all_infeasible_errors(self):
        ds = self.make_fit_ds()
        with pytest.raises(ConfigurationError):
            select_bandwidth(ds, self.config(), np.array([1e-9, 1e-8]),
                             n_iter=30, n_burn=10)

    def test_deterministic_given_seed(self):
        ds = self.make_fit_ds()
        grid = np.array([0.5, 1.0])
        r1 = select_bandwidth(ds, self.config(seed=5), grid, n_iter=30, n_burn=10)
        r2 = select_bandwidth(ds, self.config(seed=5), grid, n_iter=30, n_burn=10)
        np.testing.assert_array_equal(r1.scores, r2.scores)
        assert r1.selected == r2.selected
