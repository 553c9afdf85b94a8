"""Pythagorean geometry inside and between families of transition kernels.

Mixed coordinates, m-projection onto a mixture family (the minimiser of
``D(W||V)`` over kernels with prescribed stationary expectations lies in the
exponential family through ``V``), e-projection onto an exponential family,
and curved exponential families ``xi -> theta(xi)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize

from .divergence import stationary_form
from .errors import InputError, SolverError, StructuralError
from .expfam import (
    ExpFamily,
    FamilyPoint,
    GeneratorSet,
    _theta,
    fisher,
    point,
    potential,
    solve_mixed_coordinates,
    theta_from_eta,
)
from .pf_core import TransitionKernel, ensure_kernel, stationary_distribution

RANK_THRESHOLD = 1e-8
GRID_POINTS = 17


def pythagoras_point(fam: ExpFamily, theta_prime, theta_dprime, k: int, method: str = "newton") -> FamilyPoint:
    """Intersection of the mixture subfamily through ``theta'`` (first ``k``
    expectation coordinates fixed) with the exponential subfamily through
    ``theta''`` (last ``d - k`` natural coordinates fixed)."""
    tp = _theta(fam, theta_prime)
    tpp = _theta(fam, theta_dprime)
    if not 1 <= k < fam.d:
        raise InputError(f"need 1 <= k < d (d={fam.d}, k={k})")
    head = point(fam, tp).eta[:k]
    return solve_mixed_coordinates(fam, head, tpp[k:], method=method)


def pythagorean_residual(fam: ExpFamily, theta_prime, theta_dprime, k: int) -> dict:
    """Three divergences of the Pythagorean triangle and its residual.

    Divergences are between the kernels themselves (stationary form), not
    the Bregman expression, so the check is independent of the potential.
    """
    mid = pythagoras_point(fam, theta_prime, theta_dprime, k)
    pa, pb = point(fam, theta_prime), point(fam, theta_dprime)
    d_ab = stationary_form(pa.kernel, pb.kernel, pa.stationary)
    d_am = stationary_form(pa.kernel, mid.kernel, pa.stationary)
    d_mb = stationary_form(mid.kernel, pb.kernel, mid.stationary)
    return {
        "theta_tilde": mid.theta,
        "d_total": d_ab,
        "d_first": d_am,
        "d_second": d_mb,
        "residual": d_ab - d_am - d_mb,
    }


@dataclass(frozen=True, eq=False)
class MixtureConstraints:
    """Kernels whose stationary expectations satisfy ``E[g_j] = b_j``."""

    gens: GeneratorSet
    targets: np.ndarray

    def __post_init__(self):
        b = np.atleast_1d(np.asarray(self.targets, dtype=float)).ravel()
        if self.gens.d < 1:
            raise InputError("a mixture family needs at least one constraint")
        if b.size != self.gens.d or not np.all(np.isfinite(b)):
            raise InputError("targets must be finite, one per constraint")
        b.setflags(write=False)
        object.__setattr__(self, "targets", b)

    def residual(self, k: TransitionKernel) -> np.ndarray:
        """Stationary expectations of the constraints under ``k`` minus targets."""
        joint = k.matrix * stationary_distribution(k)[None, :]
        return np.einsum("jab,ab->j", self.gens.generators, joint) - self.targets


def m_project(v, constraints: MixtureConstraints, method: str = "newton") -> FamilyPoint:
    """``argmin_{W in M} D(W||V)``: the member of the exponential family through
    ``v`` generated by the constraint functions that meets the targets."""
    fam = ExpFamily(ensure_kernel(v), constraints.gens)
    theta = theta_from_eta(fam, constraints.targets, method=method)
    return point(fam, theta)


def pair_expectation(w: TransitionKernel, gens: GeneratorSet) -> np.ndarray:
    """``E[g_j(X_2, X_1)]`` with ``X_1`` stationary for ``w``."""
    joint = w.matrix * stationary_distribution(w)[None, :]
    return np.einsum("jab,ab->j", gens.generators, joint)


def e_project(w, fam: ExpFamily, method: str = "newton") -> FamilyPoint:
    """``argmin_theta D(w||W_theta)``.

    With the stationary pair law ``Q_w`` the objective is
    ``phi(theta) - theta . E_Q[g] + const``, whose gradient is
    ``eta(theta) - E_Q[g]``; the minimiser therefore solves
    ``eta(theta) = E_Q[g]``.
    """
    w = ensure_kernel(w)
    if w.size != fam.size:
        raise InputError("kernel and family have different sizes")
    if not w.irreducible:
        raise StructuralError("e-projection needs an irreducible kernel")
    if not np.all(fam.base.support[w.support]):
        raise StructuralError("kernel support leaves the family support; D is infinite everywhere")
    return point(fam, theta_from_eta(fam, pair_expectation(w, fam.gens), method=method))


@dataclass(frozen=True, eq=False)
class CurvedFamily:
    """Smooth embedding ``xi -> theta(xi)`` into an ambient exponential family.

    Build with :meth:`affine` (``theta = C xi + t0``) or :meth:`from_map`.
    """

    ambient: ExpFamily
    d_prime: int
    matrix: np.ndarray | None = None
    offset: np.ndarray | None = None
    embed: Callable[[np.ndarray], np.ndarray] | None = field(default=None, repr=False)

    def __post_init__(self):
        if not 1 <= self.d_prime <= self.ambient.d:
            raise InputError(f"curve dimension must satisfy 1 <= d' <= d (d={self.ambient.d})")
        if self.embed is None:
            c = np.atleast_2d(np.asarray(self.matrix, dtype=float))
            t0 = np.zeros(self.ambient.d) if self.offset is None else np.asarray(self.offset, dtype=float).ravel()
            if c.shape != (self.ambient.d, self.d_prime) or t0.size != self.ambient.d:
                raise InputError(f"affine embedding needs C of shape ({self.ambient.d}, {self.d_prime}) and t0 of length {self.ambient.d}")
            if not (np.all(np.isfinite(c)) and np.all(np.isfinite(t0))):
                raise InputError("embedding must be finite")
            c.setflags(write=False)
            t0.setflags(write=False)
            object.__setattr__(self, "matrix", c)
            object.__setattr__(self, "offset", t0)

    @classmethod
    def affine(cls, ambient: ExpFamily, matrix, offset=None) -> "CurvedFamily":
        c = np.atleast_2d(np.asarray(matrix, dtype=float))
        if c.shape[0] != ambient.d and c.shape[1] == ambient.d:
            c = c.T
        return cls(ambient, c.shape[1], c, offset)

    @classmethod
    def from_map(cls, ambient: ExpFamily, embed: Callable, d_prime: int) -> "CurvedFamily":
        return cls(ambient, int(d_prime), embed=embed)

    def theta(self, xi) -> np.ndarray:
        x = np.atleast_1d(np.asarray(xi, dtype=float)).ravel()
        if x.size != self.d_prime or not np.all(np.isfinite(x)):
            raise InputError(f"xi must be a finite vector of length {self.d_prime}")
        if self.embed is None:
            return self.matrix @ x + self.offset
        return _theta(self.ambient, self.embed(x))

    def eta_jacobian(self, xi, h: float = 1e-5) -> np.ndarray:
        """``A[i, j] = d eta_i / d xi_j`` by central differences."""
        x = np.atleast_1d(np.asarray(xi, dtype=float)).ravel()
        cols = []
        for j in range(self.d_prime):
            e = np.zeros_like(x)
            e[j] = h
            up = point(self.ambient, self.theta(x + e)).eta
            down = point(self.ambient, self.theta(x - e)).eta
            cols.append((up - down) / (2 * h))
        return np.array(cols).T


@dataclass(frozen=True)
class CurvedFisher:
    entries: np.ndarray
    min_singular_value: float


def curved_fisher(cf: CurvedFamily, xi) -> CurvedFisher:
    """``A^T H^-1 A`` with ``A`` the Jacobian of ``eta(theta(xi))`` in ``xi``."""
    a = cf.eta_jacobian(xi)
    smin = float(np.linalg.svd(a, compute_uv=False)[-1])
    if smin <= RANK_THRESHOLD:
        raise StructuralError(f"embedding is rank deficient at xi (min singular value {smin:.3e})")
    h = fisher(cf.ambient, cf.theta(xi)).entries
    m = a.T @ np.linalg.solve(h, a)
    m = (m + m.T) / 2
    m.setflags(write=False)
    return CurvedFisher(m, smin)


@dataclass(frozen=True)
class CurvedEstimate:
    xi: np.ndarray
    divergence: float
    theta_hat: np.ndarray
    trace: tuple[float, ...]
    evaluations: int


def _objective(cf: CurvedFamily, eta_hat: np.ndarray, theta_hat: np.ndarray, eval_path: str):
    fam = cf.ambient
    if eval_path == "bregman":
        # D(W_hat || W_xi) = phi(theta(xi)) - theta(xi).eta_hat + [theta_hat.eta_hat - phi(theta_hat)]
        const = float(theta_hat @ eta_hat) - potential(fam, theta_hat)

        def f(x):
            t = cf.theta(x)
            return potential(fam, t) - float(t @ eta_hat) + const

        return f
    if eval_path == "stationary":
        ref = point(fam, theta_hat)

        def f(x):
            return stationary_form(ref.kernel, point(fam, cf.theta(x)).kernel, ref.stationary)

        return f
    raise InputError("eval_path must be 'bregman' or 'stationary'")


def curved_estimate(cf: CurvedFamily, eta_hat, optimizer: str = "grid_then_nm", eval_path: str = "bregman",
                    box: tuple[float, float] = (-5.0, 5.0), xi0=None, theta_hat=None,
                    max_iter: int | None = None) -> CurvedEstimate:
    """``argmin_xi D(W_{theta(eta_hat)} || W_{theta(xi)})`` by Nelder-Mead.

    ``grid_then_nm`` seeds the simplex at the best of a 17-point-per-axis grid
    over ``box``; ``nelder_mead`` starts at ``xi0`` (default zero).  The
    simplex stops once its diameter is below 1e-9 and the spread of its values
    is below 1e-12.  ``theta_hat`` may be passed to skip the ambient solve.
    """
    fam = cf.ambient
    eta_hat = np.atleast_1d(np.asarray(eta_hat, dtype=float)).ravel()
    if eta_hat.size != fam.d:
        raise InputError(f"eta_hat must have length {fam.d}")
    t_hat = theta_from_eta(fam, eta_hat) if theta_hat is None else _theta(fam, theta_hat)
    f = _objective(cf, eta_hat, t_hat, eval_path)
    evals = 0
    lo, hi = map(float, box)
    if optimizer == "grid_then_nm":
        axis = np.linspace(lo, hi, GRID_POINTS)
        grid = np.stack(np.meshgrid(*[axis] * cf.d_prime, indexing="ij"), axis=-1).reshape(-1, cf.d_prime)
        vals = np.array([f(g) for g in grid])
        evals += len(grid)
        x0 = grid[int(np.argmin(vals))]
        scale = (hi - lo) / (GRID_POINTS - 1)
    elif optimizer == "nelder_mead":
        x0 = np.zeros(cf.d_prime) if xi0 is None else np.atleast_1d(np.asarray(xi0, dtype=float))
        scale = 0.5
    else:
        raise InputError("optimizer must be 'grid_then_nm' or 'nelder_mead'")
    trace = [float(f(x0))]
    evals += 1

    def record(xk):
        trace.append(float(f(xk)))

    simplex = np.vstack([x0] + [x0 + scale * e for e in np.eye(cf.d_prime)])
    res = optimize.minimize(
        f, x0, method="Nelder-Mead", callback=record,
        options=dict(initial_simplex=simplex, xatol=1e-9, fatol=1e-12,
                     maxiter=max_iter or 2000 * cf.d_prime, adaptive=cf.d_prime > 2),
    )
    evals += res.nfev + len(trace) - 1
    if not res.success:
        raise SolverError(f"curved estimate did not converge: {res.message}", best=res.x)
    xi = res.x.copy()
    xi.setflags(write=False)
    # the minimum is a divergence; clamp rounding below zero
    return CurvedEstimate(xi, max(float(res.fun), 0.0), t_hat, tuple(trace), evals)
