"""Independent derivations of the frozen constants used across the suite."""

import numpy as np
import sympy as sp

from conftest import M2_D_UNIFORM, M2_ETA0, M2_PHI2, M2_STATIONARY


def _m2_phi():
    t = sp.symbols("t")
    tr = sp.Rational(7, 10) + sp.Rational(6, 10) * sp.exp(t)
    det = sp.Rational(3, 10) * sp.exp(t)
    lam = (tr + sp.sqrt(tr**2 - 4 * det)) / 2
    return t, sp.log(lam)


def test_m2_phi_second_derivative_exact():
    t, phi = _m2_phi()
    exact = sp.nsimplify(sp.simplify(sp.diff(phi, t, 2).subs(t, 0)))
    assert exact == sp.Rational(156, 343)
    assert abs(float(exact) - M2_PHI2) < 1e-15
    assert abs(M2_PHI2 - 0.45481) < 1e-5


def test_m2_eta_is_first_derivative():
    t, phi = _m2_phi()
    assert sp.nsimplify(sp.simplify(sp.diff(phi, t).subs(t, 0))) == sp.Rational(3, 7)
    assert M2_ETA0 == 3 / 7


def test_m2_stationary_by_linear_solve():
    pi = sp.Matrix(sp.symbols("a b"))
    w = sp.Matrix([[sp.Rational(7, 10), sp.Rational(4, 10)], [sp.Rational(3, 10), sp.Rational(6, 10)]])
    sol = sp.solve(list(w * pi - pi) + [sum(pi) - 1], list(pi))
    assert (sol[pi[0]], sol[pi[1]]) == (sp.Rational(4, 7), sp.Rational(3, 7))
    assert np.allclose(M2_STATIONARY, (4 / 7, 3 / 7), atol=0)


def test_m2_divergence_to_uniform_by_hand():
    kl0 = 0.7 * np.log(0.7 / 0.5) + 0.3 * np.log(0.3 / 0.5)
    kl1 = 0.4 * np.log(0.4 / 0.5) + 0.6 * np.log(0.6 / 0.5)
    assert abs((4 / 7) * kl0 + (3 / 7) * kl1 - M2_D_UNIFORM) < 1e-15
    assert abs(M2_D_UNIFORM - 0.05565) < 1e-4


def test_two_observation_bernoulli_variance():
    # g = 1{x=1}, n = 1: X_2 is stationary, so V = (3/7)(4/7)
    assert abs((3 / 7) * (4 / 7) - 12 / 49) < 1e-16
