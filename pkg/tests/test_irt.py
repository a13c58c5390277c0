import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from bnassess.exceptions import CalibrationError, ModelError
from bnassess.irt import (
    CatConfig,
    OnlineConfig,
    RaschItem,
    RaschResponder,
    ThetaGrid,
    calibrate_rasch,
    calibrate_rasch_online,
    expected_posterior_variance,
    expected_posterior_variances,
    lltm_fit,
    lltm_predict,
    normal_grid,
    posterior_moments,
    rasch_prob,
    run_cat,
    select_next,
    simulate_rasch,
    trace_to_json,
    update_theta,
)


def brute_expected_variance(grid, beta):
    """Enumerate both outcomes explicitly."""
    total = 0.0
    for x in (0, 1):
        p = rasch_prob(grid.points, beta)
        like = p if x == 1 else 1 - p
        joint = grid.weights * like
        px = joint.sum()
        post = joint / px
        mean = post @ grid.points
        total += px * (post @ (grid.points - mean) ** 2)
    return total


def pool_of(betas):
    return [RaschItem(f"i{k:03d}", b) for k, b in enumerate(betas)]


class TestRaschProb:
    def test_symmetry_point(self):
        assert rasch_prob(0.3, 0.3) == 0.5

    def test_logistic_value(self):
        assert rasch_prob(1.0, 0.0) == pytest.approx(0.73106, abs=5e-6)

    def test_extreme_arguments(self):
        assert rasch_prob(50, 0) == pytest.approx(1.0)
        assert 0 < rasch_prob(-50, 0) < 1e-20

    @settings(max_examples=200, deadline=None)
    @given(st.floats(-50, 50), st.floats(-50, 50))
    def test_negation_symmetry(self, theta, beta):
        assert rasch_prob(theta, beta) + rasch_prob(-theta, -beta) == pytest.approx(1.0, abs=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(st.floats(-10, 10), st.floats(0.01, 5), st.floats(-10, 10))
    def test_monotone(self, theta, step, beta):
        assert rasch_prob(theta, beta) < rasch_prob(theta + step, beta)


class TestGrid:
    def test_invalid_grids(self):
        with pytest.raises(ModelError):
            ThetaGrid([0, 0], [0.5, 0.5])
        with pytest.raises(ModelError):
            ThetaGrid([0, 1], [0.5, 0.6])

    def test_normal_quadrature(self):
        mean, var = posterior_moments(normal_grid())
        assert abs(mean) < 1e-9
        assert abs(var - 1) < 0.01

    def test_point_mass(self):
        assert posterior_moments(ThetaGrid([-1, 0, 1], [0, 1, 0])) == (0.0, 0.0)

    def test_two_point_update(self):
        g = update_theta(ThetaGrid([-1, 1], [0.5, 0.5]), RaschItem("a", 0.0), 1)
        np.testing.assert_allclose(g.weights, [0.268941, 0.731059], atol=1e-6)

    def test_easy_item_barely_moves(self):
        g = normal_grid()
        np.testing.assert_allclose(update_theta(g, RaschItem("a", -50.0), 1).weights, g.weights, atol=1e-15)

    def test_commutative(self):
        g = normal_grid()
        it = RaschItem("a", 0.4)
        a = update_theta(update_theta(g, it, 1), it, 0)
        b = update_theta(update_theta(g, it, 0), it, 1)
        np.testing.assert_allclose(a.weights, b.weights, atol=1e-15)

    def test_likelihood_factorization(self):
        rng = np.random.default_rng(0)
        g = normal_grid()
        betas = rng.normal(size=8)
        xs = rng.integers(0, 2, 8)
        seq = g
        for k, (b, x) in enumerate(zip(betas, xs)):
            seq = update_theta(seq, RaschItem(str(k), b), int(x))
        p = rasch_prob(g.points[:, None], betas[None, :])
        like = np.prod(np.where(xs == 1, p, 1 - p), axis=1)
        direct = g.weights * like
        np.testing.assert_allclose(seq.weights, direct / direct.sum(), atol=1e-12)

    def test_grid_refinement(self):
        rng = np.random.default_rng(3)
        items = [RaschItem(str(k), b) for k, b in enumerate(rng.normal(size=10))]
        xs = rng.integers(0, 2, 10)
        means = []
        for n in (61, 121):
            g = normal_grid(n)
            for it, x in zip(items, xs):
                g = update_theta(g, it, int(x))
            means.append(posterior_moments(g)[0])
        assert abs(means[0] - means[1]) < 1e-3


class TestExpectedVariance:
    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(-6, 6))
    def test_matches_enumeration_and_shrinks(self, seed, beta):
        rng = np.random.default_rng(seed)
        g = ThetaGrid(np.linspace(-4, 4, 31), rng.dirichlet(np.ones(31)))
        ev = expected_posterior_variance(g, RaschItem("a", beta))
        assert ev == pytest.approx(brute_expected_variance(g, beta), abs=1e-12)
        assert ev <= posterior_moments(g)[1] + 1e-12

    def test_uninformative_limits(self):
        g = normal_grid()
        var = posterior_moments(g)[1]
        for b in (-50.0, 50.0):
            assert abs(expected_posterior_variance(g, RaschItem("a", b)) - var) < 1e-6

    def test_centered_item_is_better(self):
        g = normal_grid()
        e0, e3 = expected_posterior_variances(g, [0.0, 3.0])
        assert e0 < e3

    def test_vector_matches_scalar(self):
        g = normal_grid(mean=0.3, sd=0.8)
        betas = np.linspace(-3, 3, 13)
        vec = expected_posterior_variances(g, betas)
        for b, v in zip(betas, vec):
            assert v == pytest.approx(expected_posterior_variance(g, RaschItem("a", b)), rel=1e-12)


class TestSelectNext:
    def test_picks_centered(self):
        pool = pool_of([-2.0, 0.0, 2.0])
        assert select_next(normal_grid(), pool, CatConfig()).beta == 0.0

    def test_single_item(self):
        pool = pool_of([2.5])
        assert select_next(normal_grid(), pool, CatConfig()).id == "i000"

    def test_constraint_filters(self):
        pool = [RaschItem("a", -2.0, (0,)), RaschItem("b", 0.0, (1,)), RaschItem("c", 1.0, (0,))]
        cfg = CatConfig(constraint=lambda it: it.features[0] == 0)
        assert select_next(normal_grid(), pool, cfg).id == "c"

    def test_administered_excluded(self):
        pool = pool_of([-2.0, 0.0, 2.0])
        assert select_next(normal_grid(), pool, CatConfig(), {"i001"}).id in ("i000", "i002")

    def test_tie_breaks_on_id(self):
        pool = [RaschItem("z", 1.0), RaschItem("m", -1.0)]
        # symmetric prior: both items are equally informative
        assert select_next(normal_grid(), pool, CatConfig()).id == "m"

    def test_empty(self):
        with pytest.raises(ModelError):
            select_next(normal_grid(), pool_of([0.0]), CatConfig(), {"i000"})

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_order_invariant(self, seed):
        rng = np.random.default_rng(seed)
        pool = pool_of(np.round(rng.uniform(-3, 3, 20), 1))
        g = normal_grid(mean=float(rng.uniform(-1, 1)))
        ref = select_next(g, pool, CatConfig()).id
        shuffled = [pool[i] for i in rng.permutation(len(pool))]
        assert select_next(g, shuffled, CatConfig()).id == ref


class TestRunCat:
    def test_huge_stop_sd(self):
        s = run_cat(RaschResponder(0.0, np.random.default_rng(0)), pool_of([0, 1]), normal_grid(), CatConfig(stop_sd=10))
        assert s.n_items == 1

    def test_no_repeats_and_trace(self):
        rng = np.random.default_rng(1)
        pool = pool_of(rng.uniform(-3, 3, 40))
        s = run_cat(RaschResponder(0.5, rng), pool, normal_grid(), CatConfig(stop_sd=0.01, max_items=40))
        ids = [r.item for r in s.records]
        assert len(ids) == len(set(ids)) == 40
        assert s.records[-1].sd == pytest.approx(s.sd)
        rows = json.loads(trace_to_json(s))
        assert set(rows[0]) == {"item", "beta", "response", "mean", "sd"}

    def test_random_selector_needs_rng(self):
        with pytest.raises(ModelError):
            run_cat(lambda it: 1, pool_of([0]), normal_grid(), CatConfig(), selector="random")

    def test_bad_responder(self):
        with pytest.raises(ModelError):
            run_cat(lambda it: 3, pool_of([0]), normal_grid(), CatConfig())

    def test_coverage_at_theta_one(self):
        rng = np.random.default_rng(2)
        pool = pool_of(rng.uniform(-3, 3, 200))
        hits = 0
        for _ in range(500):
            s = run_cat(RaschResponder(1.0, rng), pool, normal_grid(), CatConfig(stop_sd=0.35, max_items=200))
            hits += abs(s.mean - 1.0) <= 3 * s.sd
        assert hits / 500 >= 0.95


class TestLltm:
    def test_noiseless(self):
        rng = np.random.default_rng(0)
        Y = np.column_stack([np.ones(20), rng.integers(0, 2, (20, 2))])
        eta = np.array([0.5, -1.0, 2.0])
        fit = lltm_fit(Y @ eta, Y)
        np.testing.assert_allclose(fit.eta, eta, atol=1e-12)
        assert fit.sigma2 == pytest.approx(0.0, abs=1e-20)
        assert lltm_predict(Y[3], fit)[0] == pytest.approx((Y @ eta)[3], abs=1e-12)

    def test_intercept_only(self):
        b = np.array([0.1, 0.7, -0.2, 1.4])
        fit = lltm_fit(b, np.ones((4, 1)))
        assert fit.eta[0] == pytest.approx(b.mean())
        assert fit.sigma2 == pytest.approx(b.var(ddof=1))

    def test_zero_features(self):
        fit = lltm_fit([0.1, 0.7, -0.2, 1.4], np.column_stack([np.ones(4), [0, 1, 0, 1]]))
        assert lltm_predict([0, 0], fit) == (0.0, fit.sigma2)

    def test_rank_deficient(self):
        Y = np.column_stack([np.ones(5), np.ones(5)])
        with pytest.raises(ModelError):
            lltm_fit(np.arange(5.0), Y)

    def test_too_few_items(self):
        with pytest.raises(ModelError):
            lltm_fit([1.0, 2.0], np.eye(2))

    def test_dimension_mismatch(self):
        fit = lltm_fit(np.arange(5.0), np.ones((5, 1)))
        with pytest.raises(ModelError):
            lltm_predict([1, 2], fit)

    def test_standard_errors_match_ols(self):
        rng = np.random.default_rng(4)
        Y = np.column_stack([np.ones(60), rng.normal(size=(60, 2))])
        b = Y @ [0.2, 1.0, -0.5] + rng.normal(0, 0.5, 60)
        fit = lltm_fit(b, Y)
        resid = b - Y @ fit.eta
        cov = resid @ resid / 57 * np.linalg.inv(Y.T @ Y)
        np.testing.assert_allclose(fit.standard_errors, np.sqrt(np.diag(cov)), rtol=1e-10)


class TestOnlineCalibration:
    def test_no_responses_gives_prior(self):
        x_old = np.ones((0, 3))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            out = calibrate_rasch_online(
                x_old, [0, 1, 2], np.empty((0, 1)), 0.7, 0.5,
                OnlineConfig(iterations=20000, burn_in=100, proposal_sd=1.0, seed=2),
            )
        assert out[0].mean == pytest.approx(0.7, abs=0.05)
        assert out[0].sd == pytest.approx(np.sqrt(0.5), abs=0.05)

    def test_missing_new_responses_give_prior(self):
        rng = np.random.default_rng(0)
        x_old = simulate_rasch(rng.normal(size=50), [0.0, 1.0], rng)
        x_new = np.full((50, 1), np.nan)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            out = calibrate_rasch_online(
                x_old, [0.0, 1.0], x_new, -0.4, 0.3, OnlineConfig(iterations=20000, proposal_sd=0.8, seed=1)
            )
        assert out[0].mean == pytest.approx(-0.4, abs=0.05)

    def test_twin_of_old_item(self):
        rng = np.random.default_rng(5)
        theta = rng.normal(size=2000)
        b_old = rng.uniform(-2, 2, 10)
        x_old = simulate_rasch(theta, b_old, rng)
        x_new = simulate_rasch(theta, [b_old[3]], rng)
        out = calibrate_rasch_online(x_old, b_old, x_new, 0.0, 4.0, OnlineConfig(iterations=600, burn_in=200, seed=3))
        assert abs(out[0].mean - b_old[3]) < 0.15

    def test_lltm_prior_shrinks(self):
        rng = np.random.default_rng(8)
        theta = rng.normal(size=60)
        b_old = rng.uniform(-2, 2, 10)
        x_old = simulate_rasch(theta, b_old, rng)
        x_new = simulate_rasch(theta, [1.5], rng)
        cfg = OnlineConfig(iterations=3000, burn_in=300, seed=4)
        flat = calibrate_rasch_online(x_old, b_old, x_new, 0.0, 100.0, cfg)[0].mean
        informed = calibrate_rasch_online(x_old, b_old, x_new, -1.0, 0.1, cfg)[0].mean
        assert -1.0 < informed < flat

    def test_acceptance_warning(self):
        rng = np.random.default_rng(0)
        theta = rng.normal(size=200)
        x_old = simulate_rasch(theta, [0.0], rng)
        x_new = simulate_rasch(theta, [0.0], rng)
        with pytest.warns(UserWarning, match="acceptance"):
            calibrate_rasch_online(x_old, [0.0], x_new, 0.0, 1.0, OnlineConfig(iterations=200, proposal_sd=50.0))

    def test_shape_errors(self):
        with pytest.raises(CalibrationError):
            calibrate_rasch_online(np.ones((3, 2)), [0.0], np.ones((3, 1)), 0, 1)
        with pytest.raises(CalibrationError):
            calibrate_rasch_online(np.ones((3, 1)), [0.0], np.ones((4, 1)), 0, 1)
        with pytest.raises(CalibrationError):
            calibrate_rasch_online(np.ones((3, 1)), [0.0], np.ones((3, 1)), 0, -1)

    def test_startup_calibration(self):
        rng = np.random.default_rng(6)
        betas = np.array([-1.5, -0.5, 0.0, 0.8, 1.6])
        x = simulate_rasch(rng.normal(size=1500), betas, rng)
        out = calibrate_rasch(x, OnlineConfig(iterations=800, burn_in=300, proposal_sd=0.05, seed=1), item_ids=list("abcde"))
        assert [o.item for o in out] == list("abcde")
        for o, b in zip(out, betas):
            assert abs(o.mean - b) < 4 * o.sd + 0.05

    @pytest.mark.slow
    def test_coverage_twenty_old_two_new(self):
        rng = np.random.default_rng(11)
        hits = total = 0
        for rep in range(100):
            theta = rng.normal(size=500)
            b_old = rng.uniform(-2, 2, 20)
            b_new = rng.uniform(-2, 2, 2)
            x_old = simulate_rasch(theta, b_old, rng)
            x_new = simulate_rasch(theta, b_new, rng)
            out = calibrate_rasch_online(
                x_old, b_old, x_new, 0.0, 4.0, OnlineConfig(iterations=600, burn_in=150, seed=rep)
            )
            for o, b in zip(out, b_new):
                hits += abs(o.mean - b) <= 3 * o.sd
                total += 1
        assert hits / total >= 0.90
