import warnings

import numpy as np
import pytest

from markovgeom.errors import InputError, StructuralError
from markovgeom.expfam import ExpFamily, eta
from markovgeom.models import (
    MODEL_NAMES,
    bistochastic_mixture,
    full_positive_family,
    get_model,
    permutation_matrix,
    reference_curve,
    reference_kernel,
    restricted_support_family,
    two_state_reference,
)
from markovgeom.pf_core import TransitionKernel, stationary_distribution, uniform_kernel
from markovgeom.projection import CurvedFamily


@pytest.mark.parametrize("m", [1, 2, 3])
def test_full_family_dimension(m):
    fam = full_positive_family(m + 1)
    assert fam.d == m * m + m and fam.independence.independent


def test_full_family_reaches_any_positive_kernel(rng):
    fam = full_positive_family(3)
    a = rng.random((3, 3)) + 0.1
    target = TransitionKernel.from_columns(a / a.sum(axis=0))
    from markovgeom.projection import e_project

    assert np.allclose(e_project(target, fam).kernel.matrix, target.matrix, atol=1e-9)


def test_restricted_dimension():
    k = TransitionKernel.from_columns([[0.0, 0.5, 0.3], [0.5, 0.0, 0.7], [0.5, 0.5, 0.0]])
    fam = restricted_support_family(k)
    assert fam.d == 6 - 3 and fam.independence.independent
    assert restricted_support_family(uniform_kernel(3)).d == 6


def test_restricted_single_point():
    cycle = TransitionKernel.from_columns(np.roll(np.eye(3), 1, axis=0))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        fam = restricted_support_family(cycle)
    assert fam.d == 0 and caught


def test_restricted_greedy_fallback():
    # dropped pairs (2,0), (3,1), (0,2), (1,3) pair up {0,2} and {1,3}; the
    # indicator of {1,3} is then a trivial function vanishing on them
    m = np.zeros((4, 4))
    for to, frm in [(2, 0), (3, 0), (3, 1), (0, 2), (2, 2), (1, 3), (2, 3)]:
        m[to, frm] = 1.0
    fam = restricted_support_family(TransitionKernel.from_columns(m / m.sum(axis=0)))
    assert fam.d == 7 - 4 and fam.independence.independent


def test_restricted_needs_irreducible():
    with pytest.raises(StructuralError):
        restricted_support_family(TransitionKernel.from_columns(np.eye(2)))


def test_permutation_matrix():
    assert np.array_equal(permutation_matrix([1, 2, 0]), np.roll(np.eye(3), 1, axis=0))


@pytest.mark.parametrize("m", [1, 2, 3])
def test_bistochastic_counts_and_duality(m):
    bm = bistochastic_mixture(m + 1)
    assert len(bm.labels) == m * m
    assert bm.family_generators().d == m * m + m
    assert bm.dual_check < 1e-10


@pytest.mark.parametrize("m", [1, 2])
def test_bistochastic_expectation_parameters(m, rng):
    bm = bistochastic_mixture(m + 1)
    for _ in range(5):
        w = rng.dirichlet(np.ones(len(bm.labels) + 1))
        e = w[1:]
        k = TransitionKernel.from_columns(bm.kernel(e))
        pi = stationary_distribution(k)
        joint = k.matrix * pi[None, :]
        got = np.einsum("jxy,xy->j", bm.family_generators().generators, joint)
        assert np.allclose(got, np.concatenate([np.zeros(m), e]), atol=1e-10)


def test_bistochastic_offsets():
    assert np.allclose(bistochastic_mixture(2).offsets, [-0.5])
    assert np.allclose(bistochastic_mixture(3).offsets[:3], -1 / 3)


def test_reference_models():
    m2 = two_state_reference()
    assert m2.constants["phi2_0"] == 156 / 343
    assert abs(eta(m2.family, 0.0)[0] - m2.constants["eta0"]) < 1e-14
    cf = reference_curve()
    assert isinstance(cf, CurvedFamily) and cf.d_prime == 1 and cf.ambient.d == 2
    k = reference_kernel(4)
    assert np.all(k.matrix > 0)


def test_get_model():
    for name in MODEL_NAMES:
        assert get_model(name, 3).name == name
    with pytest.raises(InputError):
        get_model("nope")
    with pytest.raises(InputError):
        full_positive_family(1)
    assert isinstance(get_model("full").family, ExpFamily)
