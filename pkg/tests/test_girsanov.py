import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from girsanov_diffusion.girsanov import (cross_term_estimate, cumulative_kl_profile, kl_drift_formula,
                                         kl_monte_carlo, log_likelihood_ratio, transition_log_ratio)
from girsanov_diffusion.score import GaussianScore, perturbed_score
from girsanov_diffusion.sde import (DriftField, GaussianSpec, TimeGrid, Trajectory, constant_drift,
                                    forward_marginal, offset_drift, ou_drift, reverse_drift, score_drift, simulate_batch)


def gaussian_logpdf(y, mean, var):
    """Isotropic Gaussian log density, written out independently of the package."""
    y, mean = np.asarray(y, float), np.asarray(mean, float)
    return float(-0.5 * np.sum((y - mean) ** 2) / var - 0.5 * y.size * math.log(2 * math.pi * var))


def transition_oracle(traj, b, b_prime):
    h = traj.grid.h
    total = 0.0
    for k in range(traj.grid.N):
        x, y = traj.states[k], traj.states[k + 1]
        total += gaussian_logpdf(y, x + h * b(k, x[None])[0], 2 * h)
        total -= gaussian_logpdf(y, x + h * b_prime(k, x[None])[0], 2 * h)
    return total


class TestLogLikelihoodRatio:
    def test_identical_drifts(self):
        g = TimeGrid(1, 10)
        batch = simulate_batch(GaussianSpec.standard(2), ou_drift(), g, 3, 0, "em")
        llr = log_likelihood_ratio(batch[1], ou_drift(), ou_drift())
        assert llr.total == 0 and np.all(llr.per_step == 0)

    def test_single_step_hand_value(self):
        # x_1 = x_0 + h b with g = 0: log N(x1; x0+b, 2) - log N(x1; x0+b', 2) = (b-b')^2 / 4
        g = TimeGrid(1.0, 1)
        traj = Trajectory(g, np.array([[0.0], [1.0]]), np.array([[0.0]]))
        llr = log_likelihood_ratio(traj, constant_drift([1.0]), constant_drift([0.0]))
        assert llr.total == pytest.approx(0.25, abs=1e-15)
        assert transition_oracle(traj, constant_drift([1.0]), constant_drift([0.0])) == pytest.approx(0.25)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 3), st.integers(1, 40))
    def test_matches_transition_densities(self, seed, d, N):
        g = TimeGrid(0.7, N)
        q = GaussianSpec(np.linspace(-1, 1, d), np.linspace(0.5, 3, d))
        b = reverse_drift(perturbed_score(GaussianScore(q), 0.3, "random_direction", seed=seed,
                                          bucket_width=g.h), g)
        b_prime = reverse_drift(GaussianScore(q), g)
        traj = simulate_batch(GaussianSpec.standard(d), b, g, 1, seed, "em")[0]
        llr = log_likelihood_ratio(traj, b, b_prime)
        assert abs(llr.total - transition_oracle(traj, b, b_prime)) < 1e-8
        assert abs(llr.total - transition_log_ratio(traj, b, b_prime)) < 1e-8
        assert abs(llr.total - math.fsum(llr.per_step)) <= 1e-10 * max(1.0, abs(llr.total))

    def test_grid_mismatch(self):
        g1, g2 = TimeGrid(1, 10), TimeGrid(2, 10)
        s = GaussianScore(GaussianSpec.standard(1))
        traj = simulate_batch(GaussianSpec.standard(1), reverse_drift(s, g1), g1, 1, 0)[0]
        with pytest.raises(ValueError):
            log_likelihood_ratio(traj, reverse_drift(s, g2), reverse_drift(s, g1))


class TestKlEstimators:
    def test_identical(self):
        g = TimeGrid(1, 20)
        batch = simulate_batch(GaussianSpec.standard(1), ou_drift(), g, 200, 0)
        for est in (kl_drift_formula(batch, ou_drift(), ou_drift()),
                    kl_monte_carlo(batch, ou_drift(), ou_drift())):
            assert est.value == 0 and est.std_error == 0

    def test_constant_mismatch_closed_form(self):
        g = TimeGrid(1.0, 100)
        b = offset_drift(ou_drift(), [0.2])
        batch = simulate_batch(GaussianSpec.standard(1), b, g, 1000, 1)
        est = kl_drift_formula(batch, b, ou_drift())
        assert est.value == pytest.approx(0.01, abs=1e-14)
        assert est.std_error < 1e-15

    def test_state_dependent_mismatch_estimators_agree(self):
        g = TimeGrid(1.0, 50)
        b = ou_drift()
        b_prime = DriftField(lambda k, x: -0.3 * x + 0.1 * np.sin(x), label="other")
        batch = simulate_batch(GaussianSpec([1.0], [2.0]), b, g, 20_000, 3)
        f, m = kl_drift_formula(batch, b, b_prime), kl_monte_carlo(batch, b, b_prime)
        assert f.value > 0
        assert abs(f.value - m.value) <= 3 * math.hypot(f.std_error, m.std_error)

    def test_scaling_law(self):
        g = TimeGrid(1.0, 40)
        base = ou_drift()
        batch = simulate_batch(GaussianSpec.standard(2), base, g, 100, 4)
        ref = kl_drift_formula(batch, offset_drift(base, [0.1, -0.2]), base).value
        for c in (0.5, 2.0, 3.0):
            v = kl_drift_formula(batch, offset_drift(base, [0.1 * c, -0.2 * c]), base).value
            assert v == pytest.approx(c * c * ref, rel=1e-12)

    @pytest.mark.parametrize("T", [0.5, 1.0, 2.0])
    def test_reverse_process_kl_is_T_eps_squared(self, T):
        # drift x + 2 s: a score error eps is a drift error 2 eps, so KL = T eps^2
        q = GaussianSpec([2.0], [4.0])
        g = TimeGrid(T, 100)
        exact = GaussianScore(q)
        b = reverse_drift(perturbed_score(exact, 0.2), g)
        batch = simulate_batch(forward_marginal(q, T), b, g, 200, 5)
        assert kl_drift_formula(batch, b, reverse_drift(exact, g)).value == pytest.approx(T * 0.04, rel=1e-12)

    @pytest.mark.parametrize("T", [0.5, 1.0, 2.0])
    def test_score_chain_kl_is_T_eps_squared_over_4(self, T):
        q = GaussianSpec([2.0], [4.0])
        g = TimeGrid(T, 100)
        exact = GaussianScore(q)
        b = score_drift(perturbed_score(exact, 0.2), g)
        batch = simulate_batch(q, b, g, 200, 5)
        assert kl_drift_formula(batch, b, score_drift(exact, g)).value == pytest.approx(T * 0.01, rel=1e-12)

    def test_nonnegative(self):
        g = TimeGrid(1.0, 30)
        b = ou_drift()
        b_prime = DriftField(lambda k, x: np.tanh(x), label="tanh")
        batch = simulate_batch(GaussianSpec.standard(1), b, g, 2000, 9)
        assert kl_drift_formula(batch, b, b_prime).value >= 0
        m = kl_monte_carlo(batch, b, b_prime)
        assert m.value >= -3 * m.std_error

    def test_cross_term_zero_mean(self):
        g = TimeGrid(1.0, 50)
        b = ou_drift()
        b_prime = DriftField(lambda k, x: -0.3 * x, label="slow")
        batch = simulate_batch(GaussianSpec.standard(1), b, g, 20_000, 2)
        c = cross_term_estimate(batch, b, b_prime)
        assert abs(c.value) <= 3 * c.std_error

    def test_empty_batch(self):
        g = TimeGrid(1.0, 5)
        batch = simulate_batch(GaussianSpec.standard(1), ou_drift(), g, 1, 0)
        empty = type(batch)(g, batch.states[:0], batch.noises[:0], 0)
        for fn in (kl_drift_formula, kl_monte_carlo, cumulative_kl_profile):
            with pytest.raises(ValueError):
                fn(empty, ou_drift(), ou_drift())


class TestProfile:
    def test_identical(self):
        g = TimeGrid(1, 10)
        batch = simulate_batch(GaussianSpec.standard(1), ou_drift(), g, 10, 0)
        assert np.all(cumulative_kl_profile(batch, ou_drift(), ou_drift()) == 0)

    @pytest.mark.parametrize("delta", [0.05, 0.2, 1.0])
    def test_constant_mismatch_exactly_linear(self, delta):
        g = TimeGrid(1.0, 100)
        b = offset_drift(ou_drift(), [delta])
        batch = simulate_batch(GaussianSpec.standard(1), b, g, 50, 0)
        prof = cumulative_kl_profile(batch, b, ou_drift())
        assert prof.shape == (101,)
        np.testing.assert_allclose(prof, np.arange(101) * g.h * delta ** 2 / 4, atol=1e-14)
        t = g.times()
        slope, icpt = np.polyfit(t, prof, 1)
        resid = prof - (slope * t + icpt)
        r2 = 1 - np.sum(resid ** 2) / np.sum((prof - prof.mean()) ** 2)
        assert r2 >= 0.999

    def test_profile_nondecreasing(self):
        g = TimeGrid(1.0, 40)
        b = offset_drift(ou_drift(), [0.3])
        b_prime = DriftField(lambda k, x: -x - 0.1 * x ** 2, label="quad")
        batch = simulate_batch(GaussianSpec.standard(1), b, g, 300, 1)
        assert np.all(np.diff(cumulative_kl_profile(batch, b, b_prime)) >= 0)
