import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_family, random_kernel
from markovgeom.divergence import stationary_form
from markovgeom.errors import InputError, StructuralError
from markovgeom.expfam import ExpFamily, GeneratorSet, eta, fisher, point
from markovgeom.models import bistochastic_mixture, reference_curve, reference_kernel
from markovgeom.pf_core import TransitionKernel, uniform_kernel
from markovgeom.projection import (
    CurvedFamily,
    MixtureConstraints,
    curved_estimate,
    curved_fisher,
    e_project,
    m_project,
    pair_expectation,
    pythagoras_point,
    pythagorean_residual,
)


class TestPythagoras:
    @given(st.integers(0, 10**6), st.integers(2, 4))
    def test_residual(self, seed, d):
        rng = np.random.default_rng(seed)
        fam = random_family(rng, 4, d)
        k = int(rng.integers(1, d))
        r = pythagorean_residual(fam, rng.normal(size=d), rng.normal(size=d), k)
        assert abs(r["residual"]) < 1e-7
        assert r["d_first"] >= 0 and r["d_second"] >= 0

    def test_mixed_coordinates_of_the_point(self, rng):
        fam = random_family(rng, 3, 3)
        a, b = rng.normal(size=3), rng.normal(size=3)
        p = pythagoras_point(fam, a, b, 1)
        assert abs(p.eta[0] - eta(fam, a)[0]) < 1e-10
        assert np.array_equal(p.theta[1:], b[1:])

    def test_k_range(self, m2):
        with pytest.raises(InputError):
            pythagoras_point(m2, [0.1], [0.2], 1)


class TestMixtureProjection:
    def test_bistochastic_projection(self):
        bm = bistochastic_mixture(3)
        p = m_project(reference_kernel(3), bm.constraints)
        assert np.allclose(p.kernel.matrix.sum(axis=1), 1, atol=1e-10)
        assert np.allclose(bm.constraints.residual(p.kernel), 0, atol=1e-10)

    def test_projection_minimises_divergence(self, rng):
        v = random_kernel(rng, 3)
        bm = bistochastic_mixture(3)
        p = m_project(v, bm.constraints)
        base = stationary_form(p.kernel, v)
        for _ in range(10):
            # another bistochastic kernel: mix with a random permutation
            perm = rng.permutation(3)
            other = 0.7 * p.kernel.matrix + 0.3 * np.eye(3)[perm]
            assert stationary_form(TransitionKernel.from_columns(other), v) >= base - 1e-12

    def test_constraint_validation(self):
        with pytest.raises(InputError):
            MixtureConstraints(GeneratorSet.empty(2), [])
        with pytest.raises(InputError):
            MixtureConstraints(GeneratorSet(np.ones((1, 2, 2))), [0.0, 1.0])


class TestExpProjection:
    @given(st.integers(0, 10**6))
    def test_pythagorean_relation(self, seed):
        rng = np.random.default_rng(seed)
        fam = random_family(rng, 3, 2)
        w = random_kernel(rng, 3)
        p = e_project(w, fam)
        assert np.allclose(p.eta, pair_expectation(w, fam.gens), atol=1e-9)
        other = point(fam, rng.normal(size=2))
        lhs = stationary_form(w, other.kernel)
        rhs = stationary_form(w, p.kernel) + stationary_form(p.kernel, other.kernel, p.stationary)
        assert abs(lhs - rhs) < 1e-8

    def test_support_mismatch(self):
        sparse = TransitionKernel.from_columns([[0.0, 1.0], [1.0, 0.0]])
        fam = ExpFamily(sparse, GeneratorSet(np.array([[[0.0, 1.0], [0.0, 0.0]]])))
        with pytest.raises(StructuralError):
            e_project(uniform_kernel(2), fam)


class TestCurved:
    def test_affine_shapes(self, rng):
        fam = random_family(rng, 3, 2)
        cf = CurvedFamily.affine(fam, [[1.0, -0.5]])
        assert cf.matrix.shape == (2, 1)
        with pytest.raises(InputError):
            CurvedFamily.affine(fam, np.ones((3, 1)))
        with pytest.raises(InputError):
            cf.theta([1.0, 2.0])

    def test_identity_embedding_gives_fisher_inverse(self, rng):
        fam = random_family(rng, 3, 2)
        cf = CurvedFamily.affine(fam, np.eye(2))
        t = rng.normal(size=2) * 0.3
        h = fisher(fam, t).entries
        assert np.allclose(curved_fisher(cf, t).entries, h, rtol=1e-6)

    def test_rank_deficient(self, rng):
        fam = random_family(rng, 3, 2)
        cf = CurvedFamily.from_map(fam, lambda x: np.array([x[0] ** 3, 0.0]), 1)
        with pytest.raises(StructuralError):
            curved_fisher(cf, [0.0])

    @pytest.mark.parametrize("path", ["bregman", "stationary"])
    def test_recovers_point_on_curve(self, path):
        cf = reference_curve()
        xi = np.array([0.7])
        est = curved_estimate(cf, eta(cf.ambient, cf.theta(xi)), eval_path=path)
        assert abs(est.xi[0] - xi[0]) < 1e-6 and est.divergence < 1e-10
        assert all(b <= a + 1e-15 for a, b in zip(est.trace, est.trace[1:]))

    def test_paths_agree_off_curve(self, rng):
        cf = reference_curve()
        e = eta(cf.ambient, [0.4, 0.3])
        a = curved_estimate(cf, e, eval_path="bregman")
        b = curved_estimate(cf, e, eval_path="stationary", optimizer="nelder_mead")
        assert abs(a.xi[0] - b.xi[0]) < 1e-6
        assert abs(a.divergence - b.divergence) < 1e-9

    def test_bad_options(self):
        cf = reference_curve()
        with pytest.raises(InputError):
            curved_estimate(cf, [0.3, 0.1], optimizer="bfgs")
        with pytest.raises(InputError):
            curved_estimate(cf, [0.3, 0.1], eval_path="kl")
