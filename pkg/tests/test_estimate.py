import numpy as np
import pytest

from conftest import M2_PHI2, random_family
from markovgeom.errors import InputError
from markovgeom.estimate import (
    Trajectory,
    cramer_rao_report,
    estimate_curved,
    estimate_expectation,
    estimate_natural,
    initial_fisher,
    left_score_variance,
    sample_mean,
    variance_sandwich,
)
from markovgeom.expfam import eta
from markovgeom.models import reference_curve
from markovgeom.simulate import exhaustive_fisher


class TestTrajectory:
    def test_counts(self):
        t = Trajectory([0, 1, 1, 0, 1], size=2)
        assert t.n == 4
        # c[to, from]
        assert np.array_equal(t.pair_counts(), [[0, 1], [2, 1]])

    def test_validation(self):
        with pytest.raises(InputError):
            Trajectory([0])
        with pytest.raises(InputError):
            Trajectory([0, 2], size=2)
        with pytest.raises(InputError):
            Trajectory([0.5, 1.0])


class TestSampleMean:
    def test_hand_computed(self, m2):
        # g = 1{x = 1}: two of the four steps land in state 1
        t = Trajectory([0, 1, 0, 0, 1], size=2)
        assert sample_mean(t, m2.gens)[0] == 0.5

    def test_offset(self, m2):
        t = Trajectory([1, 1, 0], size=2)
        assert sample_mean(t, m2.gens, h=[0.0, 2.0])[0] == (1 + 2) / 2
        with pytest.raises(InputError):
            sample_mean(t, m2.gens, h=[1.0])

    def test_natural_estimate(self, m2):
        rep = estimate_natural(estimate_expectation(Trajectory([0, 1, 1, 0, 0], 2), m2), m2)
        assert abs(eta(m2, rep.theta_hat)[0] - 0.5) < 1e-10

    def test_boundary_estimate(self, m2):
        # every step lands in state 1: eta = 1 sits on the boundary, reached only as theta -> inf
        rep = estimate_natural(estimate_expectation(Trajectory([1, 1, 1], 2), m2), m2)
        assert rep.theta_hat[0] > 15 and abs(eta(m2, rep.theta_hat)[0] - 1) <= 1e-10

    def test_solver_failure_is_a_diagnostic(self, m2):
        from dataclasses import replace

        rep = replace(estimate_expectation(Trajectory([1, 0, 1], 2), m2), eta_hat=np.array([1.5]))
        rep = estimate_natural(rep, m2)
        assert rep.theta_hat is None and "RangeError" in rep.diagnostics[0]

    def test_curved(self):
        cf = reference_curve()
        states = np.array([0, 1, 2, 0, 0, 1, 1, 2, 2, 0, 2, 1, 0, 1, 2, 0, 2, 2, 1, 1])
        rep = estimate_curved(Trajectory(states, 3), cf)
        assert rep.xi_hat is not None and rep.divergence > 0


class TestBounds:
    def test_sandwich_clamps(self):
        lo, hi = variance_sandwich(1.0, 4.0, 1)
        assert lo == 0.0 and hi == 25.0

    def test_m2_joint_fisher(self, m2):
        rep = cramer_rao_report(m2, 0.0, 5)
        assert abs(rep.fisher_rate[0, 0] - M2_PHI2) < 1e-7
        exact = exhaustive_fisher(m2, 0.0, 5)
        assert abs(rep.joint_fisher[0, 0] / exact[0, 0] - 1) < 1e-6

    def test_fixed_initial_law(self, m2):
        rep = cramer_rao_report(m2, 0.2, 4, initial=[1.0, 0.0])
        assert np.all(rep.initial_fisher == 0) and rep.diagnostics
        assert np.allclose(rep.joint_fisher, exhaustive_fisher(m2, 0.2, 4, initial=[1.0, 0.0]), rtol=1e-6)

    def test_multiparameter(self, rng):
        fam = random_family(rng, 3, 2)
        t = rng.normal(size=2) * 0.3
        rep = cramer_rao_report(fam, t, 3)
        assert np.allclose(rep.joint_fisher, exhaustive_fisher(fam, t, 3), rtol=1e-5)
        assert rep.variance_bounds is None
        # bound is below H/n in the positive-semidefinite order
        assert np.linalg.eigvalsh(rep.asymptotic_bound - rep.cr_bound_eta)[0] >= -1e-12

    def test_score_variance_is_normalisation_free(self, m2):
        assert left_score_variance(m2, 0.3)[0, 0] >= 0
        assert initial_fisher(m2, 0.3)[0, 0] > 0

    def test_bad_n(self, m2):
        with pytest.raises(InputError):
            cramer_rao_report(m2, 0.0, 0)


def test_fixed_start_cr_bound_uses_exact_fisher(m2):
    rep = cramer_rao_report(m2, -0.4, 3, initial=[0.0, 1.0])
    exact = exhaustive_fisher(m2, -0.4, 3, initial=[0.0, 1.0])
    h = rep.fisher_rate
    assert np.allclose(rep.cr_bound_eta, h @ np.linalg.solve(exact, h), rtol=1e-6)
