"""Exponential families of transition matrices.

A family is generated by a base kernel ``W`` and two-input functions
``g_j(x, x')``.  The tilted matrix ``W(x|x') exp(sum_j theta_j g_j(x, x'))`` has
Perron-Frobenius eigenvalue ``lambda_theta``; the potential is
``phi(theta) = log lambda_theta`` and the family member is the stochastic
rescaling ``W_theta = diag(u) Wbar diag(u)^-1 / lambda`` with ``u`` the left PF
vector.  ``eta = grad phi`` is the stationary expectation of the generators.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy import optimize

from .errors import InputError, NumericalError, RangeError, SolverError, StructuralError
from .pf_core import PFDecomposition, TransitionKernel, perron_frobenius, log_pf_eigenvalue

INDEPENDENCE_THRESHOLD = 1e-9
ESCAPE_RADIUS = 1e3


class IndependenceCertificate(NamedTuple):
    independent: bool
    min_singular_value: float


@dataclass(frozen=True, eq=False)
class GeneratorSet:
    """Stack of ``d`` generator matrices, shape ``(d, size, size)``, ``[to][from]``."""

    generators: np.ndarray
    names: tuple[str, ...] = ()

    def __post_init__(self):
        g = np.array(self.generators, dtype=float)
        if g.ndim == 2:
            g = g[None]
        if g.ndim != 3 or g.shape[1] != g.shape[2]:
            raise InputError(f"generators must have shape (d, n, n), got {g.shape}")
        if not np.all(np.isfinite(g)):
            raise InputError("generators must be finite")
        g.setflags(write=False)
        object.__setattr__(self, "generators", g)
        names = tuple(self.names) or tuple(f"g{j}" for j in range(g.shape[0]))
        if len(names) != g.shape[0] or len(set(names)) != len(names):
            raise InputError("generator names must be unique, one per generator")
        object.__setattr__(self, "names", names)

    @classmethod
    def of(cls, *mats, names: Sequence[str] = ()) -> "GeneratorSet":
        return cls(np.array(mats, dtype=float), tuple(names))

    @classmethod
    def empty(cls, size: int) -> "GeneratorSet":
        return cls(np.zeros((0, size, size)))

    @property
    def d(self) -> int:
        return self.generators.shape[0]

    @property
    def size(self) -> int:
        return self.generators.shape[1]

    def combine(self, coeffs) -> np.ndarray:
        """``sum_j coeffs[j] * g_j`` as a single matrix."""
        return np.tensordot(np.asarray(coeffs, dtype=float), self.generators, axes=1)

    def recombine(self, m) -> "GeneratorSet":
        """New set ``g'_i = sum_j m[i, j] g_j``."""
        return GeneratorSet(np.tensordot(np.asarray(m, dtype=float), self.generators, axes=1))


def check_independence(base: TransitionKernel, gens: GeneratorSet) -> IndependenceCertificate:
    """Linear independence of ``gens`` modulo ``f(x) - f(x') + c`` on the support.

    Generators are restricted to the support entries and projected onto the
    orthogonal complement of the span of the trivial functions; the smallest
    singular value of the projection decides.
    """
    if gens.d == 0:
        return IndependenceCertificate(True, float("inf"))
    if gens.size != base.size:
        raise InputError("generator shape does not match the state space")
    to, frm = np.nonzero(base.support)
    size = base.size
    trivial = np.zeros((to.size, size + 1))
    trivial[np.arange(to.size), to] += 1.0
    trivial[np.arange(to.size), frm] -= 1.0
    trivial[:, size] = 1.0
    u, s, _ = np.linalg.svd(trivial, full_matrices=False)
    q = u[:, s > 1e-10 * s[0]]
    g = gens.generators[:, to, frm].T
    resid = g - q @ (q.T @ g)
    if gens.d > resid.shape[0]:
        return IndependenceCertificate(False, 0.0)
    smin = float(np.linalg.svd(resid, compute_uv=False)[-1])
    return IndependenceCertificate(smin > INDEPENDENCE_THRESHOLD, smin)


@dataclass(frozen=True, eq=False)
class ExpFamily:
    base: TransitionKernel
    gens: GeneratorSet
    independence: IndependenceCertificate = field(default=None)

    def __post_init__(self):
        if not self.base.irreducible:
            raise StructuralError("exponential family needs an irreducible base kernel")
        if self.gens.size != self.base.size:
            raise InputError("generator shape does not match the base kernel")
        if self.independence is None:
            object.__setattr__(self, "independence", check_independence(self.base, self.gens))

    @property
    def d(self) -> int:
        return self.gens.d

    @property
    def size(self) -> int:
        return self.base.size

    def require_independent(self):
        if not self.independence.independent:
            raise StructuralError(
                "generators are not independent modulo f(x)-f(x')+c "
                f"(min singular value {self.independence.min_singular_value:.3e})"
            )


@dataclass(frozen=True, eq=False)
class FamilyPoint:
    theta: np.ndarray
    phi: float
    kernel: TransitionKernel
    stationary: np.ndarray
    eta: np.ndarray
    pf: PFDecomposition = field(repr=False)


@dataclass(frozen=True)
class FisherMatrix:
    entries: np.ndarray
    step: float


def _theta(fam: ExpFamily, theta) -> np.ndarray:
    t = np.atleast_1d(np.asarray(theta, dtype=float)).ravel()
    if fam.d == 0 and t.size == 0:
        return np.zeros(0)
    if t.size != fam.d:
        raise InputError(f"theta must have length {fam.d}, got {t.size}")
    if not np.all(np.isfinite(t)):
        raise InputError("theta must be finite")
    return t


def _log_tilt(fam: ExpFamily, t: np.ndarray) -> tuple[np.ndarray, float]:
    # tilted matrix scaled by exp(-shift) to stay in floating range
    expo = fam.gens.combine(t) if fam.d else np.zeros((fam.size, fam.size))
    expo = np.where(fam.base.support, expo, -np.inf)
    shift = float(np.max(expo))
    m = np.where(fam.base.support, fam.base.matrix * np.exp(expo - shift), 0.0)
    if np.count_nonzero(m) < np.count_nonzero(fam.base.support):
        raise SolverError("tilted matrix underflows at this theta")
    return m, shift


def tilt(fam: ExpFamily, theta) -> np.ndarray:
    """``W(x|x') * exp(sum_j theta_j g_j(x, x'))`` entrywise."""
    t = _theta(fam, theta)
    expo = fam.gens.combine(t) if fam.d else 0.0
    return np.where(fam.base.support, fam.base.matrix * np.exp(expo), 0.0)


def potential(fam: ExpFamily, theta) -> float:
    """``phi(theta)``: log PF eigenvalue of the tilted matrix."""
    t = _theta(fam, theta)
    if fam.d == 0 or not np.any(t):
        return 0.0
    m, shift = _log_tilt(fam, t)
    return log_pf_eigenvalue(m) + shift


def point(fam: ExpFamily, theta) -> FamilyPoint:
    t = _theta(fam, theta)
    m, shift = _log_tilt(fam, t)
    pf = perron_frobenius(m, check=False)
    u = pf.left_vec
    w = (u[:, None] * m) / u[None, :]
    kernel = TransitionKernel._trusted(w, fam.base)
    pi = pf.left_vec * pf.right_vec
    pi = pi / pi.sum()
    joint = kernel.matrix * pi[None, :]
    eta = np.einsum("jab,ab->j", fam.gens.generators, joint)
    phi = 0.0 if not np.any(t) else pf.log_eigenvalue + shift
    t = t.copy()
    for a in (t, pi, eta):
        a.setflags(write=False)
    return FamilyPoint(t, float(phi), kernel, pi, eta, pf)


def eta(fam: ExpFamily, theta) -> np.ndarray:
    return point(fam, theta).eta


def _fd_jacobian(fam: ExpFamily, t: np.ndarray, free: np.ndarray, h: float) -> np.ndarray:
    cols = []
    for j in free:
        e = np.zeros_like(t)
        e[j] = h
        cols.append((point(fam, t + e).eta[free] - point(fam, t - e).eta[free]) / (2 * h))
    jac = np.array(cols).T
    return (jac + jac.T) / 2


def fisher(fam: ExpFamily, theta) -> FisherMatrix:
    """Hessian of ``phi`` by central differences of the exact gradient ``eta``.

    Step ``1e-4 * max(1, |theta|)``.  With independent generators a
    non-positive-definite result raises :class:`NumericalError`.
    """
    t = _theta(fam, theta)
    h = 1e-4 * max(1.0, float(np.linalg.norm(t)))
    entries = _fd_jacobian(fam, t, np.arange(fam.d), h)
    if fam.independence.independent and fam.d and np.linalg.eigvalsh(entries)[0] <= 0:
        raise NumericalError("Fisher matrix is not positive definite; try a smaller step")
    entries.setflags(write=False)
    return FisherMatrix(entries, h)


def _objective(fam, t, free, target):
    return float(target @ t[free]) - potential(fam, t)


def _newton_mixed(fam, free, target, t0, tol, max_iter):
    t = t0.copy()
    for it in range(max_iter):
        if np.linalg.norm(t) > ESCAPE_RADIUS:
            raise RangeError("eta outside achievable set (iterates escaped)", best=t)
        pt = point(fam, t)
        r = target - pt.eta[free]
        if np.max(np.abs(r)) <= tol:
            return t, it
        h = 1e-4 * max(1.0, float(np.linalg.norm(t)))
        try:
            hess = _fd_jacobian(fam, t, free, h)
        except SolverError:
            # neighbours of an accepted iterate underflow: the ascent has reached
            # the edge of the floating range, which only an escaping target does
            raise RangeError("eta outside achievable set (tilt underflows along the ascent)", best=t) from None
        try:
            np.linalg.cholesky(hess)
            step = np.linalg.solve(hess, r)
            # a weakly curved start can throw a full step onto a flat plateau
            # far away; the cap still lets escaping iterates grow geometrically
            cap = max(2.0, float(np.linalg.norm(t)))
            norm = float(np.linalg.norm(step))
            if norm > cap:
                step *= cap / norm
        except np.linalg.LinAlgError:
            # flat curvature: the objective keeps rising along r, so grow the step
            # geometrically and let an unachievable target escape quickly
            step = r * max(1.0, float(np.linalg.norm(t))) / max(float(np.linalg.norm(r)), 1e-300)
        f0 = float(target @ t[free]) - pt.phi
        slope = float(r @ step)
        alpha = 1.0
        while True:
            trial = t.copy()
            trial[free] += alpha * step
            if np.linalg.norm(trial) > ESCAPE_RADIUS:
                if alpha < 1e-8:
                    raise RangeError("eta outside achievable set (iterates escaped)", best=t)
                alpha /= 2
                continue
            if alpha * np.linalg.norm(step) < 1e-7:
                # inside the quadratic basin the objective change is below rounding
                break
            try:
                f1 = _objective(fam, trial, free, target)
            except SolverError:
                f1 = -np.inf  # potential not computable this far out: shorten the step
            if f1 >= f0 + 1e-4 * alpha * slope:
                break
            if alpha < 1e-12:
                raise SolverError("line search failed", residual=float(np.max(np.abs(r))), best=t)
            alpha /= 2
        t = trial
    pt = point(fam, t)
    raise SolverError("Newton iteration limit reached", residual=float(np.max(np.abs(target - pt.eta[free]))), best=t)


def _nelder_mead_mixed(fam, free, target, t0, tol, max_iter):
    def negobj(x):
        t = t0.copy()
        t[free] = x
        if np.linalg.norm(t) > ESCAPE_RADIUS:
            return np.inf
        return potential(fam, t) - float(target @ x)

    x = t0[free].copy()
    scale = 0.5
    evals = 0
    resid = np.inf
    t = t0.copy()
    for _ in range(min(max_iter, 10)):
        simplex = np.vstack([x] + [x + scale * e for e in np.eye(free.size)])
        res = optimize.minimize(
            negobj, x, method="Nelder-Mead",
            options=dict(initial_simplex=simplex, xatol=1e-10, fatol=1e-15,
                         maxiter=5000 * free.size, adaptive=free.size > 2),
        )
        evals += res.nfev
        moved = float(np.max(np.abs(res.x - x)))
        x = res.x
        if np.linalg.norm(x) > ESCAPE_RADIUS or not np.isfinite(res.fun):
            raise RangeError("eta outside achievable set (iterates escaped)", best=x)
        t = t0.copy()
        t[free] = x
        # the exact gradient is only used to decide when to stop
        resid = float(np.max(np.abs(target - point(fam, t).eta[free])))
        if resid <= tol:
            return t, evals
        if moved == 0.0:
            break
        scale = max(min(scale, 10 * moved), 1e-7)
    raise SolverError("Nelder-Mead stalled above tolerance", residual=resid, best=t)


def _solve(fam, free, target, t0, method, tol, max_iter):
    fam.require_independent()
    target = np.asarray(target, dtype=float)
    if method == "newton":
        return _newton_mixed(fam, free, target, t0, 1e-10 if tol is None else tol, max_iter)
    if method == "nelder_mead":
        # function values carry ~1e-16 relative error, which caps gradient accuracy near 1e-9
        return _nelder_mead_mixed(fam, free, target, t0, 1e-8 if tol is None else tol, max_iter)
    raise InputError(f"unknown method {method!r}")


def theta_from_eta(fam: ExpFamily, eta_target, method: str = "newton", theta0=None,
                   tol: float | None = None, max_iter: int = 200, full_output: bool = False):
    """Natural parameter with ``eta(theta) = eta_target``.

    Solves ``argmax_theta eta_target . theta - phi(theta)``.  ``newton`` uses the
    closed-form gradient with a finite-difference Hessian and backtracking;
    ``nelder_mead`` only evaluates ``phi`` (restarted simplex searches).  With
    ``full_output`` also returns ``{"nu": Legendre transform value, "iterations"}``.

    Raises :class:`RangeError` when the iterates escape, i.e. the target is not
    an achievable expectation.
    """
    target = np.atleast_1d(np.asarray(eta_target, dtype=float))
    if target.size != fam.d or not np.all(np.isfinite(target)):
        raise InputError(f"eta must be a finite vector of length {fam.d}")
    t0 = np.zeros(fam.d) if theta0 is None else _theta(fam, theta0).copy()
    t, its = _solve(fam, np.arange(fam.d), target, t0, method, tol, max_iter)
    if not full_output:
        return t
    return t, {"nu": float(target @ t) - potential(fam, t), "iterations": its}


def solve_mixed_coordinates(fam: ExpFamily, eta_head, theta_tail, method: str = "newton",
                            tol: float | None = None, max_iter: int = 200) -> FamilyPoint:
    """Point whose first ``k`` expectation coordinates equal ``eta_head`` and
    whose last ``d - k`` natural coordinates equal ``theta_tail``."""
    head = np.atleast_1d(np.asarray(eta_head, dtype=float))
    tail = np.atleast_1d(np.asarray(theta_tail, dtype=float)) if np.size(theta_tail) else np.zeros(0)
    k = head.size
    if not 1 <= k <= fam.d or k + tail.size != fam.d:
        raise InputError(f"need 1 <= k <= d and k + len(theta_tail) = d (d={fam.d})")
    t0 = np.concatenate([np.zeros(k), tail])
    t, _ = _solve(fam, np.arange(k), head, t0, method, tol, max_iter)
    return point(fam, t)


def bregman_divergence(fam: ExpFamily, theta, theta_prime) -> float:
    """``(theta - theta') . eta(theta) - phi(theta) + phi(theta')``."""
    p = point(fam, theta)
    tp = _theta(fam, theta_prime)
    return float((p.theta - tp) @ p.eta) - p.phi + potential(fam, tp)


def legendre_divergence(fam: ExpFamily, eta_a, eta_b) -> float:
    """Dual form ``theta(eta_b) . (eta_b - eta_a) - nu(eta_b) + nu(eta_a)``."""
    ta, info_a = theta_from_eta(fam, eta_a, full_output=True)
    tb, info_b = theta_from_eta(fam, eta_b, full_output=True)
    eta_a = np.asarray(eta_a, dtype=float)
    eta_b = np.asarray(eta_b, dtype=float)
    return float(tb @ (eta_b - eta_a)) - info_b["nu"] + info_a["nu"]
