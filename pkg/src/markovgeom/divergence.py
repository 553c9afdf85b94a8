"""Relative entropy and Renyi divergence between transition kernels.

The relative entropy is defined through the potential
``phi~(1+s) = log lambda(W^{1+s} V^{-s})`` as its derivative at ``s = 0``;
the stationary sum ``sum pi_w(x') w(x|x') log(w/v)`` is an equivalent form.
Kernels whose supports are not nested get an infinite value instead of an
exception.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError, NumericalError, StructuralError
from .expfam import ExpFamily, _theta, point
from .pf_core import TransitionKernel, check_structure, ensure_kernel, log_pf_eigenvalue, stationary_distribution

METHODS = ("eigen_derivative", "stationary_form", "both")
AGREEMENT_TOL = 1e-7
GAP_SLACK = -1e-10


@dataclass(frozen=True)
class DivergenceResult:
    """Divergence value in nats; ``value`` is ``inf`` exactly when ``finite`` is false."""

    value: float
    finite: bool
    method: str
    agreement: float | None = None  # |eigen - stationary| when both were computed

    def __float__(self):
        return self.value


def _infinite(method: str) -> DivergenceResult:
    return DivergenceResult(float("inf"), False, method)


def _nested(w: TransitionKernel, v: TransitionKernel) -> bool:
    return bool(np.all(v.support[w.support]))


def _log_phi_tilde(w: TransitionKernel, v: TransitionKernel, s: float, support: np.ndarray) -> float:
    # log PF eigenvalue of W^{1+s} V^{-s} on `support`, evaluated in log space
    lw = np.log(np.where(support, w.matrix, 1.0))
    lv = np.log(np.where(support, v.matrix, 1.0))
    expo = np.where(support, (1 + s) * lw - s * lv, -np.inf)
    shift = float(np.max(expo))
    return log_pf_eigenvalue(np.exp(expo - shift)) + shift


def renyi(w, v, s: float) -> DivergenceResult:
    """Renyi divergence ``D_{1+s}(W||V) = log lambda(W^{1+s} V^{-s}) / s``.

    For ``s > 0`` the support of ``w`` must sit inside that of ``v`` (otherwise
    the value is infinite); for ``-1 < s < 0`` the matrix lives on the
    intersection of supports, which must be irreducible.
    """
    w, v = ensure_kernel(w), ensure_kernel(v)
    s = float(s)
    if w.size != v.size:
        raise InputError("kernels have different sizes")
    if not np.isfinite(s) or s <= -1 or s == 0:
        raise InputError("s must lie in (-1, 0) or (0, inf); use relative_entropy for s = 0")
    if s > 0:
        if not w.irreducible:
            raise StructuralError("support of w must be irreducible")
        if not _nested(w, v):
            return _infinite("renyi")
        support = w.support
    else:
        support = w.support & v.support
        try:
            ok = check_structure(support.astype(float)).irreducible
        except StructuralError:
            ok = False
        if not ok:
            raise StructuralError("intersection of supports is not irreducible")
    return DivergenceResult(_log_phi_tilde(w, v, s, support) / s, True, "renyi")


def stationary_form(w: TransitionKernel, v: TransitionKernel, pi: np.ndarray | None = None) -> float:
    """``sum_{x,x'} pi(x') w(x|x') log(w(x|x')/v(x|x'))`` with ``0 log 0 = 0``."""
    pi = stationary_distribution(w) if pi is None else pi
    m = w.support
    ratio = np.log(np.where(m, w.matrix, 1.0)) - np.log(np.where(m, v.matrix, 1.0))
    return float(np.sum(w.matrix * ratio * pi[None, :]))


def relative_entropy(w, v, method: str = "eigen_derivative", h: float = 1e-5) -> DivergenceResult:
    """Relative entropy rate ``D(W||V)``.

    ``eigen_derivative`` takes the central difference of ``phi~(1+s)`` at
    ``s = 0`` with step ``h``; ``stationary_form`` evaluates the stationary sum;
    ``both`` computes the two and raises :class:`NumericalError` when they
    differ by more than ``1e-7``.
    """
    w, v = ensure_kernel(w), ensure_kernel(v)
    if method not in METHODS:
        raise InputError(f"method must be one of {METHODS}")
    if w.size != v.size:
        raise InputError("kernels have different sizes")
    if not w.irreducible:
        raise StructuralError("relative entropy needs an irreducible first kernel")
    if not _nested(w, v):
        return _infinite("eigen_derivative" if method == "both" else method)
    if method == "stationary_form":
        return DivergenceResult(stationary_form(w, v), True, method)
    up = _log_phi_tilde(w, v, h, w.support)
    down = _log_phi_tilde(w, v, -h, w.support)
    value = (up - down) / (2 * h)
    if method == "eigen_derivative":
        return DivergenceResult(value, True, method)
    gap = abs(value - stationary_form(w, v))
    if gap > AGREEMENT_TOL:
        raise NumericalError(f"eigen-derivative and stationary forms differ by {gap:.3e}")
    return DivergenceResult(value, True, "eigen_derivative", gap)


def pair_mixture(w1: TransitionKernel, w2: TransitionKernel, p: float) -> TransitionKernel:
    """Kernel of the mixed pair measure ``p Q_1 + (1-p) Q_2``, ``Q_i = W_i pi_i``."""
    q = p * w1.matrix * stationary_distribution(w1)[None, :] + (1 - p) * w2.matrix * stationary_distribution(w2)[None, :]
    return TransitionKernel.from_columns(q / q.sum(axis=0), tol=1e-9)


@dataclass(frozen=True)
class ConvexityReport:
    """Gaps of the convexity inequalities (``None`` when a term is infinite).

    ``first_argument_gap`` is ``p D(W1||W) + (1-p) D(W2||W) - D(pW1 + (1-p)W2 || W)``
    for the entrywise kernel mixture; ``second_argument_gap`` is the mirrored
    quantity in the second argument; ``pair_mixture_gap`` replaces the entrywise
    mixture in the first argument by the mixture of pair measures.
    """

    first_argument_gap: float | None
    second_argument_gap: float | None
    pair_mixture_gap: float | None
    skipped: tuple[str, ...] = ()

    def holds(self, name: str, slack: float = GAP_SLACK) -> bool | None:
        gap = getattr(self, name)
        return None if gap is None else gap >= slack


def divergence_properties_check(w1, w2, w, p: float) -> ConvexityReport:
    """Evaluate the convexity gaps of ``D`` in each argument at weight ``p``."""
    w1, w2, w = ensure_kernel(w1), ensure_kernel(w2), ensure_kernel(w)
    if not 0 < p < 1:
        raise InputError("p must lie in (0, 1)")
    mix = TransitionKernel.from_columns(p * w1.matrix + (1 - p) * w2.matrix, tol=1e-9)

    def d(a, b):
        return relative_entropy(a, b, method="stationary_form")

    skipped = []

    def gap(name, pieces):
        vals = [d(a, b) for a, b in pieces]
        if not all(r.finite for r in vals):
            skipped.append(name)
            return None
        return p * vals[0].value + (1 - p) * vals[1].value - vals[2].value

    first = gap("first_argument", [(w1, w), (w2, w), (mix, w)])
    second = gap("second_argument", [(w, w1), (w, w2), (w, mix)])
    pair = gap("pair_mixture", [(w1, w), (w2, w), (pair_mixture(w1, w2, p), w)])
    return ConvexityReport(first, second, pair, tuple(skipped))


def _renyi_stationary(fam: ExpFamily, a: np.ndarray, b: np.ndarray, s: float) -> float:
    if s == 0:
        pa = point(fam, a)
        return stationary_form(pa.kernel, point(fam, b).kernel, pa.stationary)
    return renyi(point(fam, a).kernel, point(fam, b).kernel, s).value


def fisher_from_divergence(fam: ExpFamily, theta, c, s: float = 0.0) -> float:
    """Limit of ``(2/t^2) D_{1+s}(W_theta || W_{theta + c t})`` as ``t -> 0``.

    The ratio is evaluated at ``t = 1e-2, 5e-3, 2.5e-3`` and extrapolated with
    two Richardson steps.  The limit equals ``(1+s) c^T H c``.  ``s = 0`` uses
    the relative entropy through its stationary form, which keeps full relative
    precision for tiny divergences.
    """
    fam.require_independent()
    t0 = _theta(fam, theta)
    c = np.asarray(c, dtype=float).ravel()
    if c.size != fam.d:
        raise InputError(f"direction must have length {fam.d}")
    if not np.any(c):
        return 0.0
    ts = (1e-2, 5e-3, 2.5e-3)
    r = []
    for t in ts:
        val = _renyi_stationary(fam, t0, t0 + c * t, float(s))
        if not np.isfinite(val):
            raise NumericalError(f"divergence not finite at probe t={t}")
        r.append(2 * val / t**2)
    # r(t) = L + a t + b t^2 + ...; halving t twice
    r1 = [2 * r[1] - r[0], 2 * r[2] - r[1]]
    return float((4 * r1[1] - r1[0]) / 3)
