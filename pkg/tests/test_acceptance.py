"""One pass/fail test per acceptance criterion, at the stated tolerances."""

import subprocess
import sys
import time

import numpy as np
import pytest
from scipy import stats

from conftest import M2_D_UNIFORM, M2_PHI2, random_family, random_kernel
from markovgeom.divergence import fisher_from_divergence, relative_entropy
from markovgeom.estimate import cramer_rao_report
from markovgeom.expfam import eta, fisher, point, theta_from_eta
from markovgeom.models import bistochastic_mixture, full_positive_family, reference_curve, two_state_reference
from markovgeom.pf_core import TransitionKernel, kernel_product, stationary_distribution, uniform_kernel
from markovgeom.projection import curved_fisher, pythagorean_residual
from markovgeom.simulate import (
    SamplerConfig,
    divergence_rate_fit,
    exhaustive_fisher,
    exhaustive_moments,
    run_monte_carlo,
)


def m2_family():
    return two_state_reference().family


def test_c01_exact_unbiasedness():
    start = time.perf_counter()
    rng = np.random.default_rng(101)
    cases = [(m2_family(), np.array([0.3])), (random_family(rng, 3, 2), rng.normal(size=2) * 0.5)]
    for fam, theta in cases:
        pt = point(fam, theta)
        for n in range(1, 9):
            mom = exhaustive_moments(pt.kernel, "stationary", fam.gens, n)
            assert np.max(np.abs(mom.mean / n - pt.eta)) <= 1e-12
    assert time.perf_counter() - start < 10


def test_c02_variance_sandwich():
    start = time.perf_counter()
    for seed in range(10):
        rng = np.random.default_rng(seed)
        fam = random_family(rng, int(rng.integers(2, 4)), 1)
        theta = rng.normal(size=1) * 0.5
        pt = point(fam, theta)
        for n in range(2, 9):
            var = exhaustive_moments(pt.kernel, "stationary", fam.gens, n).covariance[0, 0]
            lo, hi = cramer_rao_report(fam, theta, n).variance_bounds
            assert lo <= var <= hi, (seed, n, lo, var, hi)
    assert time.perf_counter() - start < 30


def test_c03_asymptotic_variance():
    start = time.perf_counter()
    fam = m2_family()
    for initial in ("stationary", [1.0, 0.0]):
        cfg = SamplerConfig(fam.base, 10**4, master_seed=7, trials=10**4, initial=initial)
        rep = run_monte_carlo(cfg, fam, at=0.0, workers=4)
        assert abs(rep.n_times_variance[0, 0] / M2_PHI2 - 1) < 0.05
    assert abs(M2_PHI2 - 0.45481) < 1e-5
    assert time.perf_counter() - start < 60


def test_c04_fisher_decomposition():
    fam = m2_family()
    for theta in (-0.5, 0.0, 0.5):
        for n in range(2, 9):
            exact = exhaustive_fisher(fam, theta, n)[0, 0]
            decomposed = cramer_rao_report(fam, theta, n).joint_fisher[0, 0]
            assert abs(decomposed / exact - 1) <= 1e-5


def test_c05_pythagorean_identity():
    start = time.perf_counter()
    for seed in range(50):
        rng = np.random.default_rng(1000 + seed)
        size = int(rng.integers(2, 6))
        d = min(int(rng.integers(2, 5)), size * size - size)
        fam = random_family(rng, size, d)
        k = int(rng.integers(1, d))
        r = pythagorean_residual(fam, rng.normal(size=d), rng.normal(size=d), k)
        assert abs(r["residual"]) < 1e-7, (seed, r["residual"])
    assert time.perf_counter() - start < 120


def nested_pair(rng):
    size = int(rng.integers(2, 6))
    v = rng.random((size, size)) + 0.05
    mask = rng.random((size, size)) < 0.7
    np.fill_diagonal(mask, True)
    mask[(np.arange(size) + 1) % size, np.arange(size)] = True  # keep a cycle: irreducible
    w = np.where(mask, rng.random((size, size)) + 0.05, 0.0)
    return TransitionKernel.from_columns(w / w.sum(axis=0)), TransitionKernel.from_columns(v / v.sum(axis=0))


def test_c06_divergence_definitions_agree():
    rng = np.random.default_rng(6)
    for _ in range(100):
        w, v = nested_pair(rng)
        r = relative_entropy(w, v, method="both")
        assert r.finite and r.agreement <= 1e-7
    m2 = relative_entropy(m2_family().base, uniform_kernel(2)).value
    assert abs(m2 - 0.05565) <= 1e-4 and abs(m2 - M2_D_UNIFORM) < 1e-9
    for _ in range(20):
        w1, v1, w2, v2 = (random_kernel(rng, s) for s in (2, 2, 3, 3))
        joint = relative_entropy(kernel_product(w1, w2), kernel_product(v1, v2), method="stationary_form").value
        parts = relative_entropy(w1, v1, method="stationary_form").value + relative_entropy(w2, v2, method="stationary_form").value
        assert abs(joint - parts) <= 1e-10


def test_c07_divergence_rate_limit():
    w, v = m2_family().base, uniform_kernel(2)
    for p_init, q_init in (("stationary", "stationary"), ([1.0, 0.0], [0.5, 0.5])):
        fit = divergence_rate_fit(w, v, p_init, q_init, ns=range(2, 13))
        # C is fitted as the smallest envelope constant; residuals must also shrink monotonically
        assert fit.decreasing
        assert all(r <= fit.c_bound / n * (1 + 1e-12) for n, r in zip(fit.ns, fit.residuals))
        assert 0 < fit.c_bound < 1.0
    # the exact stationary-start residual is D(pi_w || pi_v) / n, so the fitted C is that constant
    pi_w, pi_v = stationary_distribution(w), stationary_distribution(v)
    fit = divergence_rate_fit(w, v, ns=range(2, 13))
    assert abs(fit.c_fit - float(np.sum(pi_w * np.log(pi_w / pi_v)))) < 1e-12


def test_c08_fisher_from_divergence():
    for seed in range(20):
        rng = np.random.default_rng(800 + seed)
        size = int(rng.integers(2, 5))
        fam = random_family(rng, size, min(int(rng.integers(1, 4)), size * size - size))
        theta = rng.normal(size=fam.d) * 0.5
        c = rng.normal(size=fam.d)
        s = float(rng.choice([0.0, rng.uniform(-0.5, 1.0)]))
        expect = (1 + s) * float(c @ fisher(fam, theta).entries @ c)
        got = fisher_from_divergence(fam, theta, c, s)
        assert abs(got / expect - 1) <= 1e-4, (seed, s, got, expect)


def test_c09_legendre_round_trip():
    full = full_positive_family(3)
    assert full.d == 6
    for seed in range(50):
        rng = np.random.default_rng(900 + seed)
        if seed % 5 == 0:
            fam = full
        else:
            size = int(rng.integers(2, 5))
            fam = random_family(rng, size, min(int(rng.integers(1, 7)), size * size - size))
        theta = rng.uniform(-1, 1, fam.d)
        back = theta_from_eta(fam, eta(fam, theta))
        assert np.max(np.abs(back - theta)) <= 1e-6
    for seed in range(3):
        theta = np.random.default_rng(seed).uniform(-1, 1, 6)
        back = theta_from_eta(full, eta(full, theta), method="nelder_mead")
        assert np.max(np.abs(back - theta)) <= 1e-6


def test_c10_curved_efficiency():
    start = time.perf_counter()
    cf = reference_curve()
    assert cf.ambient.d == 2 and cf.ambient.size == 3 and cf.d_prime == 1
    xi0 = np.array([0.2])
    kernel = point(cf.ambient, cf.theta(xi0)).kernel
    rep = run_monte_carlo(SamplerConfig(kernel, 10**4, master_seed=11, trials=10**4), cf, xi0, workers=4)
    h_inv = rep.targets["curved_fisher_inverse"][0, 0]
    assert abs(np.linalg.inv(curved_fisher(cf, xi0).entries)[0, 0] - h_inv) == 0
    assert rep.failures == 0
    assert abs(rep.xi_n_mse[0, 0] / h_inv - 1) <= 0.10
    z = (rep.xi_hats[:, 0] - xi0[0]) / np.sqrt(h_inv / 10**4)
    assert stats.kstest(z, "norm").pvalue > 0.01
    assert time.perf_counter() - start < 600


@pytest.mark.parametrize("m", [1, 2])
def test_c11_bistochastic(m):
    bm = bistochastic_mixture(m + 1)
    assert len(bm.labels) == m * m and bm.family_generators().d == m * m + m
    assert bm.dual_check <= 1e-10
    rng = np.random.default_rng(11 + m)
    gens = bm.family_generators().generators
    for _ in range(10):
        e = rng.dirichlet(np.ones(m * m + 1))[1:]
        k = TransitionKernel.from_columns(bm.kernel(e))
        joint = k.matrix * stationary_distribution(k)[None, :]
        got = np.einsum("jxy,xy->j", gens, joint)
        assert np.max(np.abs(got - np.concatenate([np.zeros(m), e]))) <= 1e-10


def _simulate(*extra):
    cmd = [sys.executable, "-m", "markovgeom", "simulate", "--seed", "2024", *extra]
    return subprocess.run(cmd, capture_output=True, check=True).stdout


def test_c12_determinism():
    for model in (["--model", "m2", "--n", "500", "--trials", "1000"],
                  ["--model", "curve3", "--xi", "0.1", "--n", "300", "--trials", "60"]):
        outs = [_simulate(*model, "--workers", w) for w in ("1", "1", "2", "4")]
        assert len(set(outs)) == 1 and outs[0]
