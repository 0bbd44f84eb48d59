import math

import numpy as np
import pytest
from scipy import stats

from tailmle import asymptotics, gpd, simulation as sim
from tailmle.errors import InfeasibleSchedule, InvalidInput, InvalidModel, NoInteriorSolution
from tailmle.simulation import MonteCarloConfig, SecondOrderModel

T_GRID = [1e-4, 1e-3, 1e-2, 0.1, 0.25, 0.5]
X_GRID = [0.1, 0.25, 0.5, 1.0, 2.0, 5.0, 10.0]


def grid_points():
    """(t, x) pairs with t*x <= 1, compared in the precision used for evaluation."""
    return [(t, x) for t in T_GRID for x in X_GRID if np.longdouble(t) * np.longdouble(x) <= 1]


def second_order_ratio(model, t, x):
    """Normalized second-order remainder, evaluated in long double."""
    t_, x_ = np.longdouble(t), np.longdouble(x)
    g = np.longdouble(model.gamma0)
    first = -np.log(x_) if model.gamma0 == 0 else (x_ ** -g - 1) / g
    q = sim.tail_quantile(model, np.asarray([t_ * x_, t_]))
    return ((q[0] - q[1]) / model.a(t_) - first) / model.phi(t_)


class TestModel:
    def test_pure_flag(self):
        assert SecondOrderModel(0.3).pure_gpd
        assert not SecondOrderModel(0.5, -1.0, 0.1).pure_gpd

    @pytest.mark.parametrize("args", [(0.5, -0.5, 0.1), (0.5, 0.2, 0.1), (-0.5, -1.0, 0.0), (0.5, -1.0, -2.0)])
    def test_invalid(self, args):
        with pytest.raises(InvalidModel):
            SecondOrderModel(*args)

    def test_amplitude(self):
        assert SecondOrderModel(0.5, -1.0, 0.1).amplitude == pytest.approx(-0.2)


class TestTailQuantile:
    def test_pure_gpd(self):
        assert sim.tail_quantile(SecondOrderModel(1.0), 0.5) == pytest.approx(1.0, rel=1e-15)

    def test_at_one(self):
        assert sim.tail_quantile(SecondOrderModel(0.5, -1.0, 0.1), 1.0) == pytest.approx(-0.2, rel=1e-15)

    def test_zero_index_is_log(self):
        assert sim.tail_quantile(SecondOrderModel(0.0), 0.25) == pytest.approx(math.log(4), rel=1e-15)

    def test_matches_gpd_quantile(self):
        m = SecondOrderModel(-0.3)
        u = np.linspace(0.01, 0.99, 50)
        assert np.allclose(sim.tail_quantile(m, 1 - u), gpd.quantile(gpd.GpdParams(-0.3, 1), u), rtol=1e-13)

    @pytest.mark.parametrize("t", [0.0, -0.1, 1.5])
    def test_out_of_range(self, t):
        with pytest.raises(InvalidInput):
            sim.tail_quantile(SecondOrderModel(0.2), t)

    def test_identity_example(self):
        m = SecondOrderModel(0.5, -1.0, 0.1)
        assert float(second_order_ratio(m, 0.01, 2.0)) == pytest.approx(asymptotics.psi(2.0, 0.5, -1.0), abs=1e-10)

    def test_identity_conditioning_bound(self):
        # for rho = -2 the ratio divides an O(t^2) difference by c t^2, so its
        # error is bounded by the rounding of the quantiles over that amplitude
        m = SecondOrderModel(0.5, -2.0, 0.2)
        eps = np.finfo(np.longdouble).eps
        for t, x in grid_points():
            q = abs(float(sim.tail_quantile(m, t * x))) + abs(float(sim.tail_quantile(m, t)))
            bound = 8 * eps * q / (float(m.a(t)) * float(m.phi(t)))
            err = abs(float(second_order_ratio(m, t, x)) - asymptotics.psi(x, 0.5, -2.0))
            assert err <= max(bound, 1e-12)


class TestSampleModel:
    def test_exponential(self):
        x = sim.sample_model(SecondOrderModel(0.0), 100_000, seed=20040301)
        assert stats.kstest(x, "expon").statistic < 0.01

    def test_deterministic(self):
        m = SecondOrderModel(0.5, -1.0, 0.1)
        assert np.array_equal(sim.sample_model(m, 50, 3), sim.sample_model(m, 50, 3))

    def test_threshold_stability(self):
        x = sim.sample_model(SecondOrderModel(0.5), 100_000, seed=20040301)
        xs = np.sort(x)
        u = xs[-1001]
        y = xs[-1000:] - u
        p = gpd.GpdParams(0.5, 1.0 + 0.5 * u)
        assert stats.kstest(y, lambda v: gpd.cdf(p, v)).pvalue > 0.01

    def test_bad_n(self):
        with pytest.raises(InvalidInput):
            sim.sample_model(SecondOrderModel(0.0), 0, 1)


class TestKSchedule:
    def test_closed_form(self):
        assert sim.k_schedule(SecondOrderModel(0.5, -1.0, 1.0), 10_000, 1.0) == 464

    def test_monotone_in_n(self):
        m = SecondOrderModel(0.5, -1.0, 1.0)
        ks = [sim.k_schedule(m, n, 1.0) for n in (10_000, 20_000, 40_000, 80_000)]
        assert all(a < b for a, b in zip(ks, ks[1:]))

    def test_zero_lambda(self):
        with pytest.raises(InfeasibleSchedule):
            sim.k_schedule(SecondOrderModel(0.5, -1.0, 1.0), 10_000, 0.0)

    def test_needs_amplitude(self):
        with pytest.raises(InfeasibleSchedule):
            sim.k_schedule(SecondOrderModel(0.5), 10_000, 1.0)

    def test_no_solution(self):
        with pytest.raises(InfeasibleSchedule):
            sim.k_schedule(SecondOrderModel(0.5, -1.0, 1.0), 100, 1e6)


def small_config(**kw):
    base = dict(model=SecondOrderModel(0.0), n=400, k=40, replications=20,
                estimators=("mle", "explicit_zero"), seed=5)
    base.update(kw)
    return MonteCarloConfig(**base)


class TestMonteCarlo:
    def test_config_validation(self):
        with pytest.raises(InvalidInput):
            small_config(replications=1)
        with pytest.raises(InvalidInput):
            small_config(k=400)
        with pytest.raises(InvalidInput):
            small_config(estimators=("hill",))
        with pytest.raises(InvalidInput):
            small_config(k=None)

    def test_lambda_resolves_k(self):
        cfg = small_config(model=SecondOrderModel(0.5, -1.0, 1.0), n=10_000, k=None, lam=1.0)
        assert cfg.k == 464
        assert cfg.effective_lambda == pytest.approx(1.0, rel=0.01)

    def test_deterministic(self):
        a = sim.run_monte_carlo(small_config()).to_dict()
        b = sim.run_monte_carlo(small_config()).to_dict()
        assert a == b

    def test_order_independent(self):
        cfg = small_config()
        rows = [sim.replicate(cfg, r) for r in range(cfg.replications)]
        shuffled = {r: sim.replicate(cfg, r) for r in np.random.default_rng(0).permutation(cfg.replications)}
        again = [shuffled[r] for r in range(cfg.replications)]
        assert rows == again
        assert sim.aggregate(cfg, rows).to_dict() == sim.aggregate(cfg, again).to_dict()

    def test_parallel_matches_serial(self):
        a = sim.run_monte_carlo(small_config(replications=8)).to_dict()
        b = sim.run_monte_carlo(small_config(replications=8, workers=2)).to_dict()
        assert a == b

    def test_failures_counted_and_flagged(self, monkeypatch):
        real = sim.estimation.fit

        def flaky(x, k, method="mle"):
            if method == "mle" and x[0] < np.median(x):
                raise NoInteriorSolution("injected")
            return real(x, k, method)

        monkeypatch.setattr(sim.estimation, "fit", flaky)
        report = sim.run_monte_carlo(small_config(replications=40))
        s = report["mle"]
        assert s.failures == s.errors["NoInteriorSolution"] > 0
        assert s.n_ok + s.failures == 40
        assert s.flagged
        assert report["explicit_zero"].failures == 0
        assert report.to_dict()["estimators"]["mle"]["flagged"] is True

    def test_report_covariance_symmetric(self):
        report = sim.run_monte_carlo(small_config())
        c = report["mle"].cov
        assert np.array_equal(c, c.T)
        assert report.target.lam == 0.0

    def test_moment_scale_target(self):
        cfg = small_config(model=SecondOrderModel(0.5), estimators=("moment",))
        t = cfg.k / cfg.n
        assert sim._scale_target(cfg, "moment") == pytest.approx(t ** -0.5 / ((t ** -0.5 - 1) / 0.5))

    def test_equivalence_gap_shrinks_with_k(self):
        # on exact exponential tails the excess law does not depend on n, so the
        # equivalence claim is exercised through growing k instead
        gaps = []
        for k in (100, 400, 1600):
            cfg = MonteCarloConfig(SecondOrderModel(0.0), n=4 * k, k=k, replications=200,
                                   estimators=("mle", "explicit_zero"), seed=11)
            gaps.append(sim.run_monte_carlo(cfg).paired_gap("mle", "explicit_zero"))
        assert gaps[0] > gaps[1] > gaps[2]


@pytest.mark.slow
def test_finite_k_mean_shift_shrinks():
    # the standardized MLE mean carries an O(1/sqrt(k)) small-sample shift on
    # exact GPD tails; ten times more excesses cut it by roughly sqrt(10)
    from conftest import monte_carlo

    small = monte_carlo(0.0, 20000, k=500, replications=2000)["mle"].mean
    large = monte_carlo(0.0, 200_000, k=5000, replications=2000)["mle"].mean
    assert np.all(np.abs(large) < np.abs(small) / 2)
