"""Nonnegative-matrix foundations.

Matrices are stored ``[to][from]``: entry ``m[x, x_prev]`` is the weight of the
move ``x_prev -> x``, so a transition kernel is column-stochastic.  Only the
file readers in :mod:`markovgeom.cli` see the row-stochastic layout.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from math import gcd
from typing import NamedTuple

import numpy as np

from .errors import InputError, SolverError, StructuralError

STOCHASTIC_TOL = 1e-12


@dataclass(frozen=True)
class StateSpace:
    size: int
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        if int(self.size) != self.size or self.size < 2:
            raise InputError(f"state space needs size >= 2, got {self.size}")
        if self.labels is not None:
            labels = tuple(str(s) for s in self.labels)
            if len(labels) != self.size:
                raise InputError("labels length must equal size")
            if len(set(labels)) != len(labels):
                raise InputError("labels must be unique")
            object.__setattr__(self, "labels", labels)


class Structure(NamedTuple):
    support: np.ndarray  # boolean mask, [to][from]
    irreducible: bool
    ergodic: bool


def as_nonneg_matrix(m) -> np.ndarray:
    """Validate and return ``m`` as a float64 square nonnegative matrix."""
    a = np.array(m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InputError(f"expected a square matrix, got shape {a.shape}")
    if a.shape[0] < 2:
        raise InputError("1x1 matrices are not supported (size >= 2)")
    if not np.all(np.isfinite(a)):
        raise InputError("matrix has non-finite entries")
    if np.any(a < 0):
        raise InputError("matrix has negative entries")
    return a


def _reachable(adj: np.ndarray, start: int) -> np.ndarray:
    # adj[u] lists successors; BFS returning levels (-1 = unreached)
    level = np.full(len(adj), -1)
    level[start] = 0
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if level[v] < 0:
                level[v] = level[u] + 1
                queue.append(v)
    return level


def check_structure(m) -> Structure:
    """Support graph, irreducibility and ergodicity certificates of ``m``.

    The support digraph has an edge ``x' -> x`` whenever ``m[x, x'] > 0``.
    Irreducible means strongly connected.  Ergodic additionally requires the
    period (gcd of cycle lengths) to be 1, computed exactly from BFS levels
    ``L`` as the gcd of ``L[u] + 1 - L[v]`` over all edges ``u -> v``.
    """
    a = as_nonneg_matrix(m)
    support = a > 0
    empty = np.flatnonzero(~support.any(axis=0))
    if empty.size:
        raise StructuralError(f"column(s) {empty.tolist()} have no outgoing transition")
    size = a.shape[0]
    forward = [np.flatnonzero(support[:, u]) for u in range(size)]
    backward = [np.flatnonzero(support[v, :]) for v in range(size)]
    level = _reachable(forward, 0)
    irreducible = bool(np.all(level >= 0) and np.all(_reachable(backward, 0) >= 0))
    ergodic = False
    if irreducible:
        period = 0
        for u in range(size):
            for v in forward[u]:
                period = gcd(period, int(abs(level[u] + 1 - level[v])))
        ergodic = period == 1
    support.setflags(write=False)
    return Structure(support, irreducible, ergodic)


@dataclass(frozen=True, eq=False)
class TransitionKernel:
    """Column-stochastic kernel ``W(x|x')`` with structure certificates.

    Build with :meth:`from_columns` (``[to][from]``) or :meth:`from_rows`
    (conventional row-stochastic ``[from][to]``).
    """

    matrix: np.ndarray
    support: np.ndarray = field(repr=False)
    irreducible: bool
    ergodic: bool

    @classmethod
    def from_columns(cls, m, tol: float = STOCHASTIC_TOL) -> "TransitionKernel":
        a = as_nonneg_matrix(m)
        sums = a.sum(axis=0)
        if np.max(np.abs(sums - 1.0)) > tol:
            raise InputError(f"columns must sum to 1 (max deviation {np.max(np.abs(sums - 1)):.3e})")
        structure = check_structure(a)
        a = a / sums
        a.setflags(write=False)
        return cls(a, structure.support, structure.irreducible, structure.ergodic)

    @classmethod
    def from_rows(cls, rows, tol: float = 1e-9) -> "TransitionKernel":
        """Ingest a row-stochastic ``[from][to]`` matrix (file layout)."""
        return cls.from_columns(np.array(rows, dtype=float).T, tol=tol)

    @classmethod
    def _trusted(cls, m: np.ndarray, like: "TransitionKernel") -> "TransitionKernel":
        # same support as `like` by construction; renormalise away rounding
        a = m / m.sum(axis=0)
        a.setflags(write=False)
        return cls(a, like.support, like.irreducible, like.ergodic)

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    @property
    def rows(self) -> np.ndarray:
        """Row-stochastic ``[from][to]`` view."""
        return self.matrix.T

    def support_pairs(self) -> frozenset[tuple[int, int]]:
        """Support as a set of ``(to, from)`` index pairs."""
        return frozenset(zip(*map(lambda a: a.tolist(), np.nonzero(self.support))))

    def __eq__(self, other):
        if not isinstance(other, TransitionKernel):
            return NotImplemented
        return np.array_equal(self.matrix, other.matrix)

    __hash__ = None


@dataclass(frozen=True)
class PFDecomposition:
    log_eigenvalue: float
    right_vec: np.ndarray
    left_vec: np.ndarray
    residual: float

    @property
    def eigenvalue(self) -> float:
        return float(np.exp(self.log_eigenvalue))


def _pf_start(a: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eig(a)
    v = np.abs(vecs[:, int(np.argmax(vals.real))].real)
    v = np.maximum(v / v.max(), np.finfo(float).tiny)
    return v / v.sum()


class _Unbalanced(Exception):
    def __init__(self, right, left, lam):
        self.right, self.left, self.lam = right, left, lam


def _power(b, right, left, tol, max_iter):
    # power iteration on b + I; b has unit max entry
    for it in range(max_iter + 1):
        br = b @ right
        lam = float(br.sum()) if left is None else float(left @ br) / float(left @ right)
        residual = float(np.max(np.abs(br - lam * right)))
        if left is not None:
            lb = left @ b
            residual = max(residual, float(np.max(np.abs(lb - lam * left))))
        if residual <= tol:
            return lam, right, left, residual
        if it == 100 and lam < 1e-3:
            # eigenvalue tiny next to the max entry: rebalance instead of crawling
            raise _Unbalanced(right, left, lam)
        right = br + right
        right /= right.sum()
        if left is not None:
            left = lb + left
            left /= left.sum()
    raise SolverError("power iteration did not converge", residual=residual)


def _pf_solve(m: np.ndarray, tol: float, max_iter: int, want_left: bool):
    scale = float(m.max())
    a = m / scale
    d = _pf_start(a)
    left0 = _pf_start(a.T) if want_left else None
    # the dense solver is accurate only relative to the vector norm; unshifted
    # power steps rebuild tiny components as sums of nonnegative products
    for _ in range(3):
        d = a @ d
        d = np.maximum(d / d.max(), np.finfo(float).tiny)
        if left0 is not None:
            left0 = left0 @ a
            left0 = np.maximum(left0 / left0.max(), np.finfo(float).tiny)
    for _ in range(4):
        # similarity by the current right-vector estimate: with the exact vector
        # every row of b sums to the eigenvalue, so the eigenvalue is resolved
        # to relative (not absolute) accuracy even when it is far below max(a)
        b = a * (d[None, :] / d[:, None])
        s = float(b.max())
        if not np.isfinite(s) or s <= 0:
            raise SolverError("Perron-Frobenius balancing overflowed")
        b = b / s
        if np.count_nonzero(b) < np.count_nonzero(a):
            raise SolverError("Perron-Frobenius balancing underflowed")
        n = len(d)
        lb0 = None if left0 is None else left0 * d / float(left0 @ d)
        try:
            lam_b, rb, lb, residual = _power(b, np.full(n, 1.0 / n), lb0, tol, max_iter)
        except _Unbalanced as exc:
            lam_b, rb, lb, residual = exc.lam, exc.right, exc.left, np.inf
        right = d * rb
        right /= right.sum()
        left = None
        if want_left:
            left = lb / d
            left /= left.sum()
            left0 = left
        if lam_b >= 0.5:
            break
        d = np.maximum(right / right.max(), np.finfo(float).tiny)
    if lam_b < 1e-3 or not np.isfinite(residual):
        raise SolverError("Perron-Frobenius eigenvalue not resolved relative to the matrix scale", residual=residual * s * scale)
    return float(np.log(lam_b) + np.log(s) + np.log(scale)), right, left, a, lam_b * s


def perron_frobenius(m, tol: float = 1e-13, max_iter: int = 100000, *, check: bool = True) -> PFDecomposition:
    """Perron-Frobenius eigentriple of an irreducible nonnegative matrix.

    The dense eigensolver supplies starting vectors.  The matrix is then
    balanced by the diagonal similarity built from the right-vector estimate
    and polished by power iteration on ``b + I`` (``b`` scaled to unit max
    entry), stopping when both eigen-residuals of ``b`` fall below ``tol``.
    The shift makes every irreducible matrix primitive, so periodic inputs
    converge; the balancing keeps the eigenvalue accurate in relative terms.

    Both eigenvectors are normalised to sum to 1.  ``residual`` is reported in
    the units of ``m``.
    """
    a = as_nonneg_matrix(m) if check else m
    if check and not check_structure(a).irreducible:
        raise StructuralError("Perron-Frobenius solver needs an irreducible matrix")
    log_lam, right, left, a1, lam1 = _pf_solve(a, tol, max_iter, True)
    if not (np.all(right > 0) and np.all(left > 0)):
        raise SolverError("Perron-Frobenius vectors lost positivity")
    scale = float(a.max())
    residual = max(np.max(np.abs(a1 @ right - lam1 * right)), np.max(np.abs(left @ a1 - lam1 * left))) * scale
    right.setflags(write=False)
    left.setflags(write=False)
    return PFDecomposition(log_lam, right, left, float(residual))


def log_pf_eigenvalue(m: np.ndarray, tol: float = 1e-13, max_iter: int = 100000) -> float:
    """Log of the PF eigenvalue only (right vector iteration, no checks)."""
    return _pf_solve(m, tol, max_iter, False)[0]


def stationary_distribution(k: TransitionKernel) -> np.ndarray:
    """Stationary law ``pi = W pi``, as the normalised product of PF vectors."""
    if not k.irreducible:
        raise StructuralError("stationary distribution needs an irreducible kernel")
    pf = perron_frobenius(k.matrix, check=False)
    pi = pf.left_vec * pf.right_vec
    return pi / pi.sum()


def ensure_kernel(k) -> TransitionKernel:
    if isinstance(k, TransitionKernel):
        return k
    return TransitionKernel.from_columns(k)


def uniform_kernel(size: int) -> TransitionKernel:
    return TransitionKernel.from_columns(np.full((size, size), 1.0 / size))


def kernel_product(w: TransitionKernel, v: TransitionKernel) -> TransitionKernel:
    """Product kernel on pairs, state ``(x, y)`` indexed ``x * |Y| + y``."""
    return TransitionKernel.from_columns(np.kron(w.matrix, v.matrix))


def max_norm_distance(a: TransitionKernel | np.ndarray, b: TransitionKernel | np.ndarray) -> float:
    ma = a.matrix if isinstance(a, TransitionKernel) else np.asarray(a)
    mb = b.matrix if isinstance(b, TransitionKernel) else np.asarray(b)
    return float(np.max(np.abs(ma - mb)))

