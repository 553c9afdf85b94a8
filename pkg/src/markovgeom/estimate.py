"""Sample-mean estimators of the expectation parameter and their bounds.

For a trajectory ``x_1, ..., x_{n+1}`` the estimator is
``S_n = (sum_i g(x_{i+1}, x_i) + h(x_1)) / n`` with no bias correction; the
natural parameter follows by the Legendre solve and the curved parameter by
divergence projection onto the curve.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InputError, MarkovGeomError
from .expfam import ExpFamily, GeneratorSet, _theta, fisher, point, theta_from_eta
from .projection import CurvedFamily, curved_estimate

J1_STEP = 1e-5


@dataclass(frozen=True, eq=False)
class Trajectory:
    """States ``x_1 .. x_{n+1}`` in time order."""

    states: np.ndarray
    size: int | None = None

    def __post_init__(self):
        s = np.asarray(self.states)
        if s.ndim != 1 or s.size < 2:
            raise InputError("a trajectory needs at least two states")
        if not np.issubdtype(s.dtype, np.integer):
            if not np.all(s == np.round(s)):
                raise InputError("states must be integers")
        s = s.astype(np.int64)
        size = int(s.max()) + 1 if self.size is None else int(self.size)
        if s.min() < 0 or s.max() >= size:
            raise InputError(f"states must lie in [0, {size})")
        s.setflags(write=False)
        object.__setattr__(self, "states", s)
        object.__setattr__(self, "size", size)

    @property
    def n(self) -> int:
        return self.states.size - 1

    def pair_counts(self) -> np.ndarray:
        """``c[to, from]`` = number of steps ``from -> to``."""
        s = self.states
        flat = np.bincount(s[1:] * self.size + s[:-1], minlength=self.size**2)
        return flat.reshape(self.size, self.size)


def sample_mean(traj: Trajectory, gens: GeneratorSet, h=None) -> np.ndarray:
    """``(sum_i g_j(x_{i+1}, x_i) + h(x_1)) / n`` for each generator.

    The sum is taken over integer pair counts, so the trajectory enters only
    through exact counts.
    """
    if gens.size < traj.size:
        raise InputError("trajectory visits states outside the generator shape")
    counts = np.zeros((gens.size, gens.size))
    c = traj.pair_counts()
    counts[: c.shape[0], : c.shape[1]] = c
    total = np.einsum("jab,ab->j", gens.generators, counts)
    if h is not None:
        h = np.asarray(h, dtype=float).ravel()
        if h.size != gens.size:
            raise InputError("offset h needs one value per state")
        total = total + h[traj.states[0]]
    return total / traj.n


@dataclass(frozen=True)
class EstimateReport:
    eta_hat: np.ndarray
    n: int
    theta_hat: np.ndarray | None = None
    xi_hat: np.ndarray | None = None
    divergence: float | None = None
    diagnostics: tuple[str, ...] = ()


def estimate_expectation(traj: Trajectory, fam: ExpFamily, h=None) -> EstimateReport:
    fam.require_independent()
    return EstimateReport(sample_mean(traj, fam.gens, h), traj.n)


def estimate_natural(report: EstimateReport, fam: ExpFamily, method: str = "newton") -> EstimateReport:
    """Attach ``theta_hat = theta(eta_hat)``; solver failures become diagnostics."""
    try:
        theta = theta_from_eta(fam, report.eta_hat, method=method)
    except MarkovGeomError as exc:
        return replace(report, theta_hat=None, diagnostics=report.diagnostics + (f"{type(exc).__name__}: {exc}",))
    return replace(report, theta_hat=theta)


def estimate_curved(traj: Trajectory, cf: CurvedFamily, eval_path: str = "bregman",
                    optimizer: str = "grid_then_nm", box=(-5.0, 5.0)) -> EstimateReport:
    """Sample mean, then ``theta_hat``, then projection onto the curve."""
    rep = estimate_natural(estimate_expectation(traj, cf.ambient), cf.ambient)
    if rep.theta_hat is None:
        return rep
    try:
        est = curved_estimate(cf, rep.eta_hat, optimizer=optimizer, eval_path=eval_path,
                              box=box, theta_hat=rep.theta_hat)
    except MarkovGeomError as exc:
        return replace(rep, diagnostics=rep.diagnostics + (f"{type(exc).__name__}: {exc}",))
    return replace(rep, xi_hat=est.xi, divergence=est.divergence)


def _log_vector_jacobian(fam: ExpFamily, t: np.ndarray, which: str, h: float = J1_STEP) -> np.ndarray:
    # rows: states, columns: d/dtheta_j of log(vector)
    cols = []
    for j in range(fam.d):
        e = np.zeros_like(t)
        e[j] = h
        if which == "stationary":
            up, down = point(fam, t + e).stationary, point(fam, t - e).stationary
        else:
            up, down = point(fam, t + e).pf.left_vec, point(fam, t - e).pf.left_vec
        cols.append((np.log(up) - np.log(down)) / (2 * h))
    return np.array(cols).T


def initial_fisher(fam: ExpFamily, theta) -> np.ndarray:
    """``J^1``: Fisher information of the stationary law ``P1_theta``."""
    t = _theta(fam, theta)
    pi = point(fam, t).stationary
    score = _log_vector_jacobian(fam, t, "stationary")
    return score.T @ (pi[:, None] * score)


def left_score_variance(fam: ExpFamily, theta) -> np.ndarray:
    """Covariance under ``P1`` of ``d/dtheta log P3`` (left PF vector).

    Centring removes the dependence on how the left vector is normalised.
    """
    t = _theta(fam, theta)
    pi = point(fam, t).stationary
    score = _log_vector_jacobian(fam, t, "left")
    score = score - pi @ score
    return score.T @ (pi[:, None] * score)


def conditional_fisher(fam: ExpFamily, theta) -> np.ndarray:
    """``F[x']``: Fisher information of the column law ``W_theta(.|x')``, shape ``(size, d, d)``."""
    t = _theta(fam, theta)
    kern = point(fam, t).kernel.matrix
    live = kern > 0
    scores = []
    for j in range(fam.d):
        e = np.zeros_like(t)
        e[j] = J1_STEP
        up, down = point(fam, t + e).kernel.matrix, point(fam, t - e).kernel.matrix
        scores.append(np.where(live, (np.log(np.where(live, up, 1.0)) - np.log(np.where(live, down, 1.0))) / (2 * J1_STEP), 0.0))
    s = np.array(scores)  # [j, to, from]
    return np.einsum("ixy,jxy,xy->yij", s, s, kern)


def fixed_start_fisher(fam: ExpFamily, theta, n: int, p1) -> np.ndarray:
    """Fisher information of ``X_1 .. X_{n+1}`` when ``X_1 ~ p1`` does not depend on ``theta``.

    ``sum_{i=1}^n E_{p_i}[F(X_i)]`` with ``p_i`` the law of ``X_i``.
    """
    t = _theta(fam, theta)
    kern = point(fam, t).kernel.matrix
    f = conditional_fisher(fam, t)
    p = np.asarray(p1, dtype=float).ravel()
    total = np.zeros((fam.d, fam.d))
    for _ in range(n):
        total += np.einsum("y,yij->ij", p, f)
        p = kern @ p
    return (total + total.T) / 2


@dataclass(frozen=True)
class CramerRaoReport:
    n: int
    fisher_rate: np.ndarray  # H = Hessian of phi
    initial_fisher: np.ndarray  # J^1 (zero for a theta-independent initial law)
    joint_fisher: np.ndarray  # n H + J^1 (stationary start) or the transient sum (fixed start)
    cr_bound_eta: np.ndarray  # H (nH + J^1)^-1 H, bound on Cov of unbiased eta estimators
    asymptotic_bound: np.ndarray  # H / n
    variance_bounds: tuple[float, float] | None = None  # bounds on V[g^n], one-parameter case
    v_hat: float | None = None
    diagnostics: tuple[str, ...] = field(default=())


def variance_sandwich(phi2: float, v_hat: float, n: int) -> tuple[float, float]:
    """Bounds on ``V[g^n]`` from ``| ||A|| - ||B|| | <= ||A - B||``.

    ``n phi'' (1 -+ 2 sqrt(v_hat / (n phi'')))^2``; the lower bound is only a
    bound while the bracket is nonnegative and is clamped at 0 otherwise.
    """
    root = np.sqrt(n * phi2)
    corr = 2 * np.sqrt(v_hat)
    return float(max(root - corr, 0.0) ** 2), float((root + corr) ** 2)


def cramer_rao_report(fam: ExpFamily, theta, n: int, initial="stationary") -> CramerRaoReport:
    """Fisher information and Cramer-Rao quantities for ``n`` transitions.

    ``initial`` is ``"stationary"`` (``P1_theta``, contributing ``J^1``) or a
    fixed probability vector (contributing nothing).
    """
    fam.require_independent()
    if int(n) != n or n < 1:
        raise InputError("n must be a positive integer")
    t = _theta(fam, theta)
    h = fisher(fam, t).entries
    diagnostics = ()
    if isinstance(initial, str):
        if initial != "stationary":
            raise InputError("initial must be 'stationary' or a probability vector")
        j1 = initial_fisher(fam, t)
    else:
        p = np.asarray(initial, dtype=float).ravel()
        if p.size != fam.size or np.any(p < 0) or abs(p.sum() - 1) > 1e-12:
            raise InputError("initial law must be a probability vector over the states")
        j1 = np.zeros((fam.d, fam.d))
        diagnostics = ("fixed initial law: no initial-law information, joint Fisher summed over the transient, S_n biased at finite n",)
    joint = n * h + j1 if isinstance(initial, str) else fixed_start_fisher(fam, t, n, p)
    cr = h @ np.linalg.solve(joint, h)
    bounds = v_hat = None
    if fam.d == 1 and isinstance(initial, str):
        v_hat = float(left_score_variance(fam, t)[0, 0])
        bounds = variance_sandwich(float(h[0, 0]), v_hat, n)
    return CramerRaoReport(int(n), h, j1, joint, (cr + cr.T) / 2, h / n, bounds, v_hat, diagnostics)
