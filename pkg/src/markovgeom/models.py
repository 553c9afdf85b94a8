"""Built-in families: the full positive family, support-restricted families,
bi-stochastic kernels as a mixture family, and the two-state fixture ``m2``."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .errors import InputError, StructuralError
from .expfam import ExpFamily, GeneratorSet, check_independence
from .pf_core import TransitionKernel, ensure_kernel, uniform_kernel
from .projection import CurvedFamily, MixtureConstraints

M2_ROWS = ((0.7, 0.3), (0.4, 0.6))


@dataclass(frozen=True, eq=False)
class ModelDescriptor:
    name: str
    family: object  # ExpFamily, MixtureConstraints or CurvedFamily
    notes: str = ""
    constants: dict = field(default_factory=dict)


def _delta(size: int, to: int, frm: int) -> np.ndarray:
    g = np.zeros((size, size))
    g[to, frm] = 1.0
    return g


def full_positive_family(size: int, base=None) -> ExpFamily:
    """All positive kernels on ``size = m + 1`` states.

    Generators ``delta_{x,i} delta_{x',j}`` for ``i = 1..m``, ``j = 0..m``,
    so ``d = m^2 + m``; ``base`` defaults to the uniform kernel.
    """
    if int(size) != size or size < 2:
        raise InputError("size must be an integer >= 2")
    base = uniform_kernel(size) if base is None else ensure_kernel(base)
    if base.size != size or not np.all(base.support):
        raise InputError("base must be a positive kernel of the given size")
    pairs = [(i, j) for i in range(1, size) for j in range(size)]
    gens = GeneratorSet(np.array([_delta(size, i, j) for i, j in pairs]), tuple(f"d{i}_{j}" for i, j in pairs))
    return ExpFamily(base, gens)


def restricted_support_family(base) -> ExpFamily:
    """All kernels sharing the support of ``base``.

    Generators are indicators of the support pairs left after dropping, in
    each column, the pair with the smallest row index, so ``d = |support| -
    size``.  If that choice is dependent (possible for sparse supports) the
    set is rebuilt greedily from the support pairs.  ``d = 0`` means the
    family is a single point; a warning is issued and the family is returned.
    """
    base = ensure_kernel(base)
    if not base.irreducible:
        raise StructuralError("restricted family needs an irreducible base")
    size = base.size
    to, frm = np.nonzero(base.support)
    pairs = list(zip(to.tolist(), frm.tolist()))
    dropped = {(int(np.flatnonzero(base.support[:, j])[0]), j) for j in range(size)}
    chosen = sorted((p for p in pairs if p not in dropped), key=lambda p: (p[1], p[0]))
    target = len(pairs) - size
    if target == 0:
        warnings.warn("family is a single point (no free directions)", stacklevel=2)
        return ExpFamily(base, GeneratorSet.empty(size))

    def gens_of(ps):
        return GeneratorSet(np.array([_delta(size, i, j) for i, j in ps]), tuple(f"d{i}_{j}" for i, j in ps))

    if not check_independence(base, gens_of(chosen)).independent:
        chosen = []
        for p in sorted(pairs, key=lambda p: (p in dropped, p[1], p[0])):
            if check_independence(base, gens_of(chosen + [p])).independent:
                chosen.append(p)
            if len(chosen) == target:
                break
    fam = ExpFamily(base, gens_of(chosen))
    fam.require_independent()
    return fam


def permutation_matrix(perm) -> np.ndarray:
    """``W_sigma(x|x') = 1{x = sigma(x')}`` for ``perm[x'] = sigma(x')``."""
    size = len(perm)
    m = np.zeros((size, size))
    m[list(perm), list(range(size))] = 1.0
    return m


def _transposition(size, i, j):
    p = list(range(size))
    p[i], p[j] = j, i
    return p


def _three_cycle(size, i, j):
    # (0 i j): 0 -> i -> j -> 0
    p = list(range(size))
    p[0], p[i], p[j] = i, j, 0
    return p


@dataclass(frozen=True, eq=False)
class BistochasticModel:
    constraints: MixtureConstraints  # g_i = delta_{x,i} - delta_{x,0} with targets 0
    basis: GeneratorSet  # hat g_sigma = W_sigma - W_id
    dual: GeneratorSet  # centred dual basis g_sigma
    labels: tuple[str, ...]
    gram: np.ndarray
    dual_check: float  # max |sum g_sigma' hat g_sigma / (m+1) - delta|
    offsets: np.ndarray  # constants removed from the raw dual functions

    def kernel(self, eta) -> np.ndarray:
        """``W_eta = sum eta_sigma W_sigma + (1 - sum eta_sigma) W_id`` (may have negative entries)."""
        eta = np.asarray(eta, dtype=float).ravel()
        size = self.basis.size
        return np.eye(size) + self.basis.combine(eta)

    def family_generators(self) -> GeneratorSet:
        """``{g_i} u {g_sigma}``: the coordinates of the mixture parameter."""
        g = np.concatenate([self.constraints.gens.generators, self.dual.generators])
        return GeneratorSet(g, self.constraints.gens.names + self.dual.names)


def bistochastic_mixture(size: int) -> BistochasticModel:
    """Bi-stochastic kernels on ``m + 1`` states as a mixture family.

    Directions are ``hat g_sigma = W_sigma - W_id`` over transpositions and
    3-cycles ``(0 i j)``, ``0 < i < j``, ``m^2`` in total.  The dual basis is
    ``g_sigma' = sum_sigma b_{sigma sigma'} hat g_sigma - c_sigma'`` with
    ``B = A^{-1}``; the constant ``c_sigma'`` (the uniform-pair average of the
    uncentred function against ``W_id``) is subtracted so the stationary
    expectation of ``g_sigma`` under ``W_eta`` is exactly ``eta_sigma``.
    Constants leave the Kronecker relation unchanged because each
    ``hat g_sigma`` sums to zero.
    """
    if int(size) != size or size < 2:
        raise InputError("size must be an integer >= 2")
    m = size - 1
    perms, labels = [], []
    for i, j in combinations(range(size), 2):
        perms.append(_transposition(size, i, j))
        labels.append(f"t{i}{j}")
    for i, j in combinations(range(1, size), 2):
        perms.append(_three_cycle(size, i, j))
        labels.append(f"c0{i}{j}")
    ident = np.eye(size)
    hat = np.array([permutation_matrix(p) - ident for p in perms])
    a = np.einsum("sxy,txy->st", hat, hat) / size  # a[sigma, sigma'], symmetric
    if np.linalg.matrix_rank(a) < len(perms):
        raise StructuralError("Gram matrix of the bi-stochastic directions is singular")
    b = np.linalg.inv(a)
    raw = np.einsum("st,sxy->txy", b, hat)
    offsets = np.einsum("txy,xy->t", raw, ident) / size
    dual = raw - offsets[:, None, None]
    kron = np.einsum("txy,sxy->ts", dual, hat) / size
    check = float(np.max(np.abs(kron - np.eye(len(perms)))))
    cons = np.array([_delta_row(size, i) for i in range(1, size)])
    constraints = MixtureConstraints(GeneratorSet(cons, tuple(f"g{i}" for i in range(1, size))), np.zeros(m))
    return BistochasticModel(
        constraints, GeneratorSet(hat, tuple(labels)), GeneratorSet(dual, tuple(f"dual_{s}" for s in labels)),
        tuple(labels), a, check, offsets,
    )


def _delta_row(size: int, i: int) -> np.ndarray:
    g = np.zeros((size, size))
    g[i, :] = 1.0
    g[0, :] -= 1.0
    return g


def m2_kernel() -> TransitionKernel:
    return TransitionKernel.from_rows(M2_ROWS)


def two_state_reference() -> ModelDescriptor:
    """Two-state fixture: rows ``(0.7, 0.3)`` and ``(0.4, 0.6)``, ``g = 1{x = 1}``."""
    fam = ExpFamily(m2_kernel(), GeneratorSet(np.array([[[0.0, 0.0], [1.0, 1.0]]]), ("x_is_1",)))
    return ModelDescriptor(
        "m2", fam,
        "two-state chain with the indicator of landing in state 1",
        {"stationary": (4 / 7, 3 / 7), "eta0": 3 / 7, "phi2_0": 156 / 343},
    )


REFERENCE3_ROWS = ((0.5, 0.3, 0.2), (0.2, 0.5, 0.3), (0.3, 0.2, 0.5))


def reference_curve() -> CurvedFamily:
    """Line ``theta = (xi, -xi/2)`` in a two-generator family on 3 states.

    Generators are ``1{x = 1}`` and ``1{x = 2, x' = 0}`` over a fixed positive
    base kernel.
    """
    g1 = np.zeros((3, 3))
    g1[1, :] = 1.0
    fam = ExpFamily(TransitionKernel.from_rows(REFERENCE3_ROWS), GeneratorSet(np.array([g1, _delta(3, 2, 0)]), ("x_is_1", "pair_0_2")))
    return CurvedFamily.affine(fam, [[1.0], [-0.5]])


def reference_kernel(size: int) -> TransitionKernel:
    """Fixed positive kernel with ``W(x|x')`` proportional to ``1 + (x + 2x') mod size``."""
    x = np.arange(size)
    m = 1.0 + (x[:, None] + 2 * x[None, :]) % size
    return TransitionKernel.from_columns(m / m.sum(axis=0))


def get_model(name: str, size: int = 3) -> ModelDescriptor:
    """Built-in model by name: ``m2``, ``full``, ``restricted``, ``bistochastic``."""
    if name == "m2":
        return two_state_reference()
    if name == "full":
        return ModelDescriptor("full", full_positive_family(size), f"all positive kernels on {size} states")
    if name == "restricted":
        return ModelDescriptor("restricted", restricted_support_family(uniform_kernel(size)),
                               f"kernels with the support of the uniform kernel on {size} states")
    if name == "curve3":
        return ModelDescriptor("curve3", reference_curve(), "line theta = (xi, -xi/2) in a 2-generator family on 3 states")
    if name == "bistochastic":
        bm = bistochastic_mixture(size)
        return ModelDescriptor("bistochastic", bm.constraints, f"bi-stochastic kernels on {size} states",
                               {"dual_check": bm.dual_check, "directions": len(bm.labels)})
    raise InputError(f"unknown model {name!r}; choose from {', '.join(MODEL_NAMES)}")


MODEL_NAMES = ("m2", "full", "restricted", "bistochastic", "curve3")
