"""Seeded sampling, Monte Carlo aggregation and exhaustive-enumeration oracles.

Randomness is counter based: trial ``i`` of a run with master seed ``s``
draws its uniforms from a Philox stream keyed ``(s, i)``, the ``k``-th
uniform (``k = 0`` for the initial state, ``k = j`` for step ``j``) coming
from the ``k``-th counter position.  Any trial can be regenerated on its
own, so results do not depend on how trials are scheduled.
"""

from __future__ import annotations

import csv
import time
from bisect import bisect_right
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .divergence import relative_entropy
from .errors import InputError, MarkovGeomError, NumericalError, SizeError
from .estimate import Trajectory
from .expfam import ExpFamily, GeneratorSet, _theta, fisher, point, theta_from_eta
from .pf_core import TransitionKernel, ensure_kernel, stationary_distribution
from .projection import CurvedFamily, curved_estimate, curved_fisher

ENUMERATION_CAP = 10**7
PROBABILITY_TOL = 1e-10
BLOCK = 256
SEED_MOD = 2**64


@dataclass(frozen=True, eq=False)
class SamplerConfig:
    kernel: TransitionKernel
    n: int
    master_seed: int = 0
    trials: int = 1
    initial: object = "stationary"  # "stationary" or a probability vector

    def __post_init__(self):
        object.__setattr__(self, "kernel", ensure_kernel(self.kernel))
        if int(self.n) != self.n or self.n < 1 or int(self.trials) != self.trials or self.trials < 1:
            raise InputError("n and trials must be positive integers")
        if int(self.master_seed) != self.master_seed:
            raise InputError("master_seed must be an integer")
        object.__setattr__(self, "master_seed", int(self.master_seed) % SEED_MOD)
        object.__setattr__(self, "initial", initial_law(self.kernel, self.initial))


def initial_law(kernel: TransitionKernel, initial) -> np.ndarray | str:
    """Normalise an initial-law argument: ``"stationary"`` or a probability vector."""
    if isinstance(initial, str):
        if initial != "stationary":
            raise InputError("initial must be 'stationary' or a probability vector")
        return "stationary"
    p = np.asarray(initial, dtype=float).ravel()
    if p.size != kernel.size or not np.all(np.isfinite(p)) or np.any(p < 0) or abs(p.sum() - 1) > 1e-12:
        raise InputError("initial law must be a probability vector over the states (sum 1 within 1e-12)")
    p.setflags(write=False)
    return p


def _initial_vector(kernel: TransitionKernel, initial) -> np.ndarray:
    return stationary_distribution(kernel) if isinstance(initial, str) else np.asarray(initial, dtype=float)


def _cdf_rows(cols: np.ndarray) -> np.ndarray:
    # cols[:, f] is a probability vector; row f of the result is its CDF with the
    # last positive entry and beyond set to +inf so rounding never selects a null state
    cdf = np.cumsum(cols, axis=0).T.copy()
    for f in range(cdf.shape[0]):
        last = int(np.flatnonzero(cols[:, f] > 0)[-1])
        cdf[f, last:] = np.inf
    return cdf


def _uniforms(seed: int, trial: int, count: int) -> np.ndarray:
    return np.random.Generator(np.random.Philox(key=[seed, trial])).random(count)


def _sample_block(cdf: np.ndarray, init_cdf: np.ndarray, n: int, seed: int, trials: range) -> np.ndarray:
    u = np.stack([_uniforms(seed, i, n + 1) for i in trials])
    out = np.empty((len(trials), n + 1), dtype=np.int64)
    x = np.sum(u[:, :1] >= init_cdf[None, :], axis=1)
    out[:, 0] = x
    for k in range(1, n + 1):
        x = np.sum(u[:, k : k + 1] >= cdf[x], axis=1)
        out[:, k] = x
    return out


def _sample_one(cdf: np.ndarray, init_cdf: np.ndarray, n: int, seed: int, trial: int) -> np.ndarray:
    # scalar path for long single trajectories; same inverse-CDF rule as the block path
    u = _uniforms(seed, trial, n + 1).tolist()
    rows = [list(r) for r in cdf]
    x = bisect_right(list(init_cdf), u[0])
    out = [x]
    for k in range(1, n + 1):
        x = bisect_right(rows[x], u[k])
        out.append(x)
    return np.array(out, dtype=np.int64)


def _tables(config: SamplerConfig):
    cdf = _cdf_rows(config.kernel.matrix)
    init_cdf = _cdf_rows(_initial_vector(config.kernel, config.initial)[:, None])[0]
    return cdf, init_cdf


def sample(config: SamplerConfig, trial: int = 0) -> Trajectory:
    """Trajectory ``x_1 .. x_{n+1}`` of trial ``trial`` (deterministic in the seed and index)."""
    cdf, init_cdf = _tables(config)
    states = _sample_one(cdf, init_cdf, config.n, config.master_seed, int(trial))
    return Trajectory(states, config.kernel.size)


def sample_trials(config: SamplerConfig, start: int = 0, stop: int | None = None) -> np.ndarray:
    """States of trials ``start .. stop-1`` as an array of shape ``(trials, n+1)``."""
    stop = config.trials if stop is None else stop
    cdf, init_cdf = _tables(config)
    return _sample_block(cdf, init_cdf, config.n, config.master_seed, range(start, stop))


def _block_means(states: np.ndarray, gens: GeneratorSet) -> np.ndarray:
    b, size = states.shape[0], gens.size
    flat = states[:, 1:] * size + states[:, :-1] + (np.arange(b) * size * size)[:, None]
    counts = np.bincount(flat.ravel(), minlength=b * size * size).reshape(b, size, size)
    return np.einsum("jxy,bxy->bj", gens.generators, counts) / (states.shape[1] - 1)


# ---------------------------------------------------------------- Monte Carlo


@dataclass(frozen=True)
class MonteCarloReport:
    n: int
    trials: int
    master_seed: int
    eta_hats: np.ndarray
    mean: np.ndarray
    covariance: np.ndarray | None  # None when trials == 1
    n_times_variance: np.ndarray | None
    targets: dict = field(default_factory=dict)
    xi_hats: np.ndarray | None = None
    xi_mean: np.ndarray | None = None
    xi_n_mse: np.ndarray | None = None
    failures: int = 0
    runtime: float = 0.0

    @property
    def covariance_defined(self) -> bool:
        return self.covariance is not None


def _welford(rows: np.ndarray) -> tuple[np.ndarray, np.ndarray | None]:
    # one pass in trial order; the reduction order is fixed by the trial index
    mean = np.zeros(rows.shape[1])
    m2 = np.zeros((rows.shape[1], rows.shape[1]))
    for k, r in enumerate(rows, start=1):
        delta = r - mean
        mean = mean + delta / k
        m2 = m2 + np.outer(delta, r - mean)
    cov = m2 / (len(rows) - 1) if len(rows) > 1 else None
    return mean, cov


def _curved_one(cf: CurvedFamily, eta_hat: np.ndarray, eval_path: str, box) -> np.ndarray:
    try:
        t = theta_from_eta(cf.ambient, eta_hat)
        return curved_estimate(cf, eta_hat, eval_path=eval_path, theta_hat=t, box=box).xi
    except MarkovGeomError:
        return np.full(cf.d_prime, np.nan)


def run_monte_carlo(config: SamplerConfig, model: ExpFamily | CurvedFamily, at=None, *, workers: int = 1,
                    csv_path: str | None = None, eval_path: str = "bregman", box=(-5.0, 5.0)) -> MonteCarloReport:
    """Sample ``config.trials`` trajectories and aggregate the estimators.

    ``model`` is the exponential family whose generators define ``S_n``, or a
    curved family (then each trial is also projected onto the curve).  ``at``
    is the true ``theta`` (or ``xi``) used for the analytic targets
    ``eta``, ``H`` (and ``H~^-1``).  Blocks of trials run on ``workers``
    threads; the output does not depend on ``workers``.
    """
    start = time.perf_counter()
    cf = model if isinstance(model, CurvedFamily) else None
    fam = cf.ambient if cf is not None else model
    if fam.size != config.kernel.size:
        raise InputError("model and sampling kernel have different sizes")
    cdf, init_cdf = _tables(config)
    blocks = [range(a, min(a + BLOCK, config.trials)) for a in range(0, config.trials, BLOCK)]

    def run(block):
        states = _sample_block(cdf, init_cdf, config.n, config.master_seed, block)
        etas = _block_means(states, fam.gens)
        xis = np.array([_curved_one(cf, e, eval_path, box) for e in etas]) if cf is not None else None
        return etas, xis

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, blocks))
    else:
        parts = [run(b) for b in blocks]
    eta_hats = np.concatenate([p[0] for p in parts])
    mean, cov = _welford(eta_hats)
    targets = {}
    xi_hats = xi_mean = xi_mse = None
    failures = 0
    if at is not None:
        if cf is not None:
            xi0 = np.atleast_1d(np.asarray(at, dtype=float))
            theta = cf.theta(xi0)
            targets["xi"] = xi0
            targets["curved_fisher_inverse"] = np.linalg.inv(curved_fisher(cf, xi0).entries)
        else:
            theta = _theta(fam, at)
        targets["theta"] = theta
        targets["eta"] = point(fam, theta).eta
        targets["fisher"] = fisher(fam, theta).entries
    if cf is not None:
        xi_hats = np.concatenate([p[1] for p in parts])
        ok = np.all(np.isfinite(xi_hats), axis=1)
        failures = int(np.sum(~ok))
        if ok.any():
            xi_mean, _ = _welford(xi_hats[ok])
            if "xi" in targets:
                err = xi_hats[ok] - targets["xi"]
                xi_mse = config.n * (err.T @ err) / ok.sum()
    if csv_path is not None:
        write_trials_csv(csv_path, fam.gens.names, eta_hats, xi_hats)
    return MonteCarloReport(
        config.n, config.trials, config.master_seed, eta_hats, mean, cov,
        None if cov is None else config.n * cov, targets, xi_hats, xi_mean, xi_mse,
        failures, time.perf_counter() - start,
    )


def write_trials_csv(path: str, names, eta_hats: np.ndarray, xi_hats: np.ndarray | None = None) -> None:
    header = ["trial_index"] + [f"eta_{nm}" for nm in names]
    if xi_hats is not None:
        header += [f"xi_{j}" for j in range(xi_hats.shape[1])]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh)
        out.writerow(header)
        for i, row in enumerate(eta_hats):
            vals = list(row) + ([] if xi_hats is None else list(xi_hats[i]))
            out.writerow([i] + [format(float(v), ".17g") for v in vals])


# ---------------------------------------------------------------- enumeration


def _check_size(size: int, n: int) -> None:
    if n < 1:
        raise InputError("n must be >= 1")
    if size ** (n + 1) > ENUMERATION_CAP:
        raise SizeError(f"{size}^{n + 1} trajectories exceed the enumeration cap {ENUMERATION_CAP}")


def _log(a: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(a)


def _path_logprob(matrix: np.ndarray, init: np.ndarray, n: int) -> np.ndarray:
    """Log probability of every path, index ``x_1 S^n + x_2 S^{n-1} + ... + x_{n+1}``."""
    size = init.size
    logw = _log(matrix)
    logp = _log(init)
    last = np.arange(size)
    for _ in range(n):
        logp = (logp[:, None] + logw[:, last].T).ravel()
        last = np.tile(np.arange(size), last.size)
    return logp


def _path_sums(gens: np.ndarray, size: int, n: int) -> np.ndarray:
    """``g^n`` for every path, same ordering as :func:`_path_logprob`; shape ``(N, d)``."""
    g = np.moveaxis(gens, 0, -1)  # [to, from, j]
    acc = np.zeros((size, gens.shape[0]))
    last = np.arange(size)
    for _ in range(n):
        acc = (acc[:, None, :] + np.transpose(g[:, last, :], (1, 0, 2))).reshape(-1, gens.shape[0])
        last = np.tile(np.arange(size), last.size)
    return acc


def _probabilities(logp: np.ndarray) -> np.ndarray:
    p = np.exp(logp)
    total = float(p.sum())
    if abs(total - 1.0) > PROBABILITY_TOL:
        raise NumericalError(f"path probabilities sum to {total!r}, not 1")
    return p


@dataclass(frozen=True)
class ExactMoments:
    mean: np.ndarray  # E[g^n]
    covariance: np.ndarray  # Cov[g^n]
    total_probability: float
    paths: int


def exhaustive_moments(kernel, initial, gens: GeneratorSet, n: int) -> ExactMoments:
    """Exact mean and covariance of ``g^n = sum_i g(X_{i+1}, X_i)`` by enumeration."""
    kernel = ensure_kernel(kernel)
    _check_size(kernel.size, n)
    init = _initial_vector(kernel, initial_law(kernel, initial))
    p = _probabilities(_path_logprob(kernel.matrix, init, n))
    sums = _path_sums(gens.generators, kernel.size, n)
    mean = p @ sums
    centred = sums - mean
    cov = centred.T @ (p[:, None] * centred)
    return ExactMoments(mean, cov, float(p.sum()), p.size)


def exhaustive_fisher(fam: ExpFamily, theta, n: int, initial="stationary", h: float = 1e-5) -> np.ndarray:
    """Exact Fisher information of the law of ``X_1 .. X_{n+1}`` at ``theta``.

    Scores are central differences (step ``h``) of the log-likelihood of each
    path; ``initial`` is ``"stationary"`` (the law moves with ``theta``) or a
    fixed vector.
    """
    t = _theta(fam, theta)
    _check_size(fam.size, n)
    fixed = None if isinstance(initial, str) else initial_law(fam.base, initial)
    if isinstance(initial, str) and initial != "stationary":
        raise InputError("initial must be 'stationary' or a probability vector")

    def logp(tt):
        pt = point(fam, tt)
        return _path_logprob(pt.kernel.matrix, pt.stationary if fixed is None else fixed, n)

    base = logp(t)
    p = _probabilities(base)
    live = p > 0
    scores = []
    for j in range(fam.d):
        e = np.zeros_like(t)
        e[j] = h
        scores.append((logp(t + e)[live] - logp(t - e)[live]) / (2 * h))
    s = np.array(scores).T
    return s.T @ (p[live][:, None] * s)


def joint_divergence_rate(w, v, p_init, q_init, n: int, s: float | None = None) -> float:
    """``(1/n) D(W^n x P || V^n x Q)`` (or the Renyi version of order ``1+s``)."""
    w, v = ensure_kernel(w), ensure_kernel(v)
    _check_size(w.size, n)
    p0 = _initial_vector(w, initial_law(w, p_init))
    q0 = _initial_vector(v, initial_law(v, q_init))
    lp = _path_logprob(w.matrix, p0, n)
    lq = _path_logprob(v.matrix, q0, n)
    p = _probabilities(lp)
    live = p > 0
    nested = np.all(np.isfinite(lq[live]))
    if s is None or s == 0:
        if not nested:
            return float("inf")
        return float(np.sum(p[live] * (lp[live] - lq[live])) / n)
    if s > 0 and not nested:
        return float("inf")
    both = live & np.isfinite(lq)
    return float(logsumexp((1 + s) * lp[both] - s * lq[both]) / s / n)


@dataclass(frozen=True)
class RateFit:
    ns: tuple[int, ...]
    rates: tuple[float, ...]
    limit: float
    residuals: tuple[float, ...]
    c_bound: float  # max_n n |rate(n) - D|
    c_fit: float  # least-squares slope of residual against 1/n
    decreasing: bool


def divergence_rate_fit(w, v, p_init="stationary", q_init="stationary", ns=range(2, 13)) -> RateFit:
    """Exact rates for each ``n`` against ``D(W||V)`` with the ``C/n`` envelope."""
    ns = tuple(int(k) for k in ns)
    # the stationary form keeps full precision; the eigen derivative carries ~1e-11 step error
    limit = relative_entropy(w, v, method="stationary_form").value
    rates = tuple(joint_divergence_rate(w, v, p_init, q_init, k) for k in ns)
    res = np.abs(np.array(rates) - limit)
    inv = 1.0 / np.array(ns, dtype=float)
    c_fit = float((res @ inv) / (inv @ inv))
    return RateFit(ns, rates, limit, tuple(res.tolist()), float(np.max(res * ns)), c_fit,
                   bool(np.all(np.diff(res) < 0)))
