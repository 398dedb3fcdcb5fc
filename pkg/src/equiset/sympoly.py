"""Power-sum multi-symmetric polynomials and equivariant polynomial maps.

An equivariant polynomial map ``P: R^{n x k} -> R^{n x l}`` is stored as a sum
``sum_alpha b_alpha(X) q_alpha(s(X))^T`` where ``b_alpha`` is the column of
row monomials ``x_i^alpha`` and each ``q_alpha`` is an ``l``-vector of
polynomials in the power sums ``s_1..s_t``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

MultiIndex = tuple[int, ...]

SYMMETRIZE_MAX_N = 8


class CapacityError(ValueError):
    """Raised when an exhaustive enumeration over S_n would be too large."""


class RankError(ValueError):
    """Raised when a least-squares system has fewer equations than unknowns."""


def degree(alpha: Sequence[int]) -> int:
    return int(sum(alpha))


def _compositions_of_degree(d: int, k: int) -> list[MultiIndex]:
    """All alpha in N^k with |alpha| = d, in descending lex order."""
    if k == 1:
        return [(d,)]
    out = []
    for first in range(d, -1, -1):
        for rest in _compositions_of_degree(d - first, k - 1):
            out.append((first,) + rest)
    return out


@dataclass(frozen=True)
class PowerSumBasis:
    n: int
    k: int
    indices: tuple[MultiIndex, ...]

    @property
    def t(self) -> int:
        return len(self.indices)

    def position(self, alpha: Sequence[int]) -> int:
        return self.indices.index(tuple(alpha))


def enumerate_multi_indices(n: int, k: int) -> PowerSumBasis:
    """All multi-indices with ``|alpha| <= n``, unit indices first.

    After ``e_1..e_k`` the remaining indices follow graded order (degree 0,
    then 2, 3, ...) with descending lex inside each degree.
    """
    if n < 1 or k < 1:
        raise ValueError(f"need n >= 1 and k >= 1, got n={n}, k={k}")
    units = [tuple(int(i == j) for i in range(k)) for j in range(k)]
    rest = [a for d in range(n + 1) for a in _compositions_of_degree(d, k) if d != 1]
    return PowerSumBasis(n, k, tuple(units + rest))


def eval_monomial(x: Sequence[float], alpha: Sequence[int]) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (len(alpha),):
        raise ValueError(f"monomial needs a {len(alpha)}-vector, got shape {x.shape}")
    # numpy defines 0.0 ** 0 == 1.0
    return float(np.prod(x ** np.asarray(alpha)))


def b_alpha(X, alpha: Sequence[int]) -> np.ndarray:
    """The vector ``(x_1^alpha, ..., x_n^alpha)``."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != len(alpha):
        raise ValueError(f"X must be n x {len(alpha)}, got shape {X.shape}")
    return np.prod(X ** np.asarray(alpha), axis=1)


def power_sum(X, alpha: Sequence[int], normalized: bool = False) -> float:
    col = b_alpha(X, alpha)
    total = float(col.sum())
    return total / len(col) if normalized else total


def power_sums(X, basis: PowerSumBasis, normalized: bool = False) -> np.ndarray:
    """All ``t`` power sums of ``X`` in basis order."""
    return np.array([power_sum(X, a, normalized) for a in basis.indices])


@dataclass
class EquivariantPoly:
    """``P(X) = sum_alpha b_alpha(X) q_alpha(s(X))^T``.

    ``terms[alpha]`` maps an exponent vector over the ``t`` power sums to the
    ``l`` coefficients of that monomial in ``q_alpha``.
    """

    basis: PowerSumBasis
    out_dim: int
    terms: dict[MultiIndex, dict[tuple[int, ...], np.ndarray]] = field(default_factory=dict)
    normalized: bool = False

    def __post_init__(self):
        for alpha, q in self.terms.items():
            if len(alpha) != self.basis.k or degree(alpha) > self.basis.n:
                raise ValueError(f"bad multi-index {alpha} for n={self.basis.n}, k={self.basis.k}")
            for expo in q:
                if len(expo) != self.basis.t:
                    raise ValueError(f"q exponent {expo} must have length t={self.basis.t}")

    def add_term(self, alpha: Sequence[int], exponents: Sequence[int], coeff) -> None:
        alpha, exponents = tuple(alpha), tuple(exponents)
        coeff = np.broadcast_to(np.asarray(coeff, dtype=np.float64), (self.out_dim,)).copy()
        q = self.terms.setdefault(alpha, {})
        q[exponents] = q.get(exponents, 0.0) + coeff
        self.__post_init__()

    def x_degree(self) -> int:
        """Polynomial degree in the entries of ``X``."""
        weights = [degree(a) for a in self.basis.indices]
        best = 0
        for alpha, q in self.terms.items():
            for expo in q:
                best = max(best, degree(alpha) + sum(e * w for e, w in zip(expo, weights)))
        return best


def eval_equivariant_poly(P: EquivariantPoly, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.shape != (P.basis.n, P.basis.k):
        raise ValueError(f"X must be {P.basis.n} x {P.basis.k}, got shape {X.shape}")
    s = power_sums(X, P.basis, P.normalized)
    out = np.zeros((X.shape[0], P.out_dim))
    for alpha, q in P.terms.items():
        qv = np.zeros(P.out_dim)
        for expo, coeff in q.items():
            qv += coeff * np.prod(s ** np.asarray(expo))
        out += np.outer(b_alpha(X, alpha), qv)
    return out


def apply_perm(perm: Sequence[int], Y) -> np.ndarray:
    """``sigma . Y``: row ``i`` of the result is row ``perm[i]`` of ``Y``."""
    return np.asarray(Y)[np.asarray(perm)]


def symmetrize(P_raw: Callable[[np.ndarray], np.ndarray], X) -> np.ndarray:
    """Average ``sigma . P(sigma^-1 . X)`` over all of S_n."""
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if n > SYMMETRIZE_MAX_N:
        raise CapacityError(f"symmetrize enumerates n! permutations; n={n} exceeds {SYMMETRIZE_MAX_N}")
    acc = None
    for perm in itertools.permutations(range(n)):
        perm = np.array(perm)
        inv = np.argsort(perm)
        val = apply_perm(perm, P_raw(apply_perm(inv, X)))
        acc = val if acc is None else acc + val
    return acc / math.factorial(n)


@dataclass(frozen=True)
class EquivarianceCheck:
    deviation: float
    tolerance: float
    worst_perm: tuple[int, ...] | None = None
    worst_input: np.ndarray | None = None

    @property
    def passed(self) -> bool:
        return self.deviation <= self.tolerance


def check_equivariance(
    F: Callable,
    n: int,
    k: int,
    trials: int = 10,
    rng_seed: int = 0,
    tol: float = 1e-6,
    aux_sampler: Callable[[np.random.Generator, int], np.ndarray] | None = None,
    batched: bool = False,
    max_random_perms: int = 24,
) -> EquivarianceCheck:
    """Measure ``max ||F(sigma.X) - sigma.F(X)||_inf`` over random inputs.

    Every permutation is tried when ``n <= 6``; otherwise ``max_random_perms``
    random ones per trial. With ``aux_sampler`` the map is called as
    ``F(X, aux)`` and ``aux`` (an n x n matrix) is conjugated by ``sigma``.
    With ``batched=True`` F must accept a stack of inputs along axis 0.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(rng_seed)
    if n <= 6:
        perms = np.array(list(itertools.permutations(range(n))))
    worst, worst_perm, worst_x = 0.0, None, None
    for _ in range(trials):
        X = rng.uniform(0.0, 1.0, size=(n, k))
        aux = aux_sampler(rng, n) if aux_sampler is not None else None
        if n > 6:
            perms = np.array([rng.permutation(n) for _ in range(max_random_perms)])
        Xp = X[perms]  # (P, n, k)
        if aux is not None:
            auxp = aux[perms[:, :, None], perms[:, None, :]]
        if batched:
            base = np.asarray(F(X[None], aux[None]) if aux is not None else F(X[None]))[0]
            moved = np.asarray(F(Xp, auxp) if aux is not None else F(Xp))
        else:
            base = np.asarray(F(X, aux) if aux is not None else F(X))
            moved = np.stack([np.asarray(F(Xp[i], auxp[i]) if aux is not None else F(Xp[i]))
                              for i in range(len(perms))])
        dev = np.abs(moved - base[perms]).reshape(len(perms), -1).max(axis=1)
        i = int(np.argmax(dev))
        if dev[i] > worst:
            worst, worst_perm, worst_x = float(dev[i]), tuple(int(v) for v in perms[i]), X
    return EquivarianceCheck(worst, tol, worst_perm, worst_x)


# ---------------------------------------------------------------------------
# decomposition


def _s_monomials(basis: PowerSumBasis, max_weight: int) -> list[tuple[int, ...]]:
    """Exponent vectors over the t power sums with weighted degree <= max_weight.

    The weight of ``s_j`` is ``|alpha_j|``; the constant power sum ``s_0 = n``
    is never used as a factor.
    """
    weights = [degree(a) for a in basis.indices]
    slots = [j for j, w in enumerate(weights) if w > 0]
    out: list[tuple[int, ...]] = []

    def rec(pos: int, remaining: int, expo: list[int]):
        if pos == len(slots):
            out.append(tuple(expo))
            return
        j = slots[pos]
        e = 0
        while e * weights[j] <= remaining:
            expo[j] = e
            rec(pos + 1, remaining - e * weights[j], expo)
            e += 1
        expo[j] = 0

    rec(0, max_weight, [0] * basis.t)
    out.sort(key=lambda ex: (sum(e * w for e, w in zip(ex, weights)), tuple(-e for e in ex)))
    return out


def decomposition_terms(n: int, k: int, degree_cap: int) -> list[tuple[MultiIndex, tuple[int, ...]]]:
    """Basis elements ``b_alpha * prod_j s_j^{e_j}`` of X-degree <= degree_cap."""
    basis = enumerate_multi_indices(n, k)
    ordered = sorted(basis.indices, key=lambda a: (degree(a), tuple(-v for v in a)))
    terms = []
    for alpha in ordered:
        if degree(alpha) > degree_cap:
            continue
        for expo in _s_monomials(basis, degree_cap - degree(alpha)):
            terms.append((alpha, expo))
    return terms


@dataclass
class Decomposition:
    poly: EquivariantPoly
    residual: float


def decompose_equivariant_poly(
    samples: Iterable[tuple[np.ndarray, np.ndarray]],
    n: int,
    k: int,
    degree_cap: int,
    ridge: float = 1e-10,
    prune: float = 1e-9,
    refine_steps: int = 4,
) -> Decomposition:
    """Fit coefficients of ``{b_alpha * s-monomial}`` to sampled ``(X, P(X))`` pairs.

    Unnormalized power sums are used. The design columns are scaled to unit
    norm before solving the ridge-regularized normal equations, followed by
    ``refine_steps`` rounds of iterative refinement; coefficients
    with magnitude below ``prune`` are dropped from the returned polynomial.
    """
    samples = list(samples)
    basis = enumerate_multi_indices(n, k)
    terms = decomposition_terms(n, k, degree_cap)
    rows = len(samples) * n
    if rows < len(terms):
        raise RankError(
            f"underdetermined: {len(samples)} samples x {n} rows = {rows} equations "
            f"for {len(terms)} unknowns per output column"
        )
    Xs = np.stack([np.asarray(x, dtype=np.float64) for x, _ in samples])
    Ys = np.stack([np.asarray(y, dtype=np.float64) for _, y in samples])
    if Xs.shape[1:] != (n, k):
        raise ValueError(f"samples must be {n} x {k}, got {Xs.shape[1:]}")
    if Ys.ndim == 2:
        Ys = Ys[:, :, None]
    out_dim = Ys.shape[2]

    # power sums per sample: (S, t); row monomials per sample: (S, n, t)
    mono = np.prod(Xs[:, :, None, :] ** np.array(basis.indices)[None, None], axis=-1)
    s = mono.sum(axis=1)
    design = np.empty((len(samples), n, len(terms)))
    for col, (alpha, expo) in enumerate(terms):
        design[:, :, col] = mono[:, :, basis.position(alpha)] * np.prod(s ** np.array(expo), axis=1)[:, None]
    A = design.reshape(rows, len(terms))
    Y = Ys.reshape(rows, out_dim)

    scale = np.linalg.norm(A, axis=0)
    scale[scale == 0] = 1.0
    As = A / scale
    gram = As.T @ As + ridge * np.eye(len(terms))
    chol = np.linalg.cholesky(gram)

    def solve(rhs):
        return np.linalg.solve(chol.T, np.linalg.solve(chol, rhs))

    # iterated ridge: each pass shrinks the ridge bias on the well-determined part
    z = solve(As.T @ Y)
    for _ in range(refine_steps):
        z = z + solve(As.T @ (Y - As @ z))
    coef = z / scale[:, None]
    residual = float(np.abs(A @ coef - Y).max())

    poly = EquivariantPoly(basis, out_dim)
    for (alpha, expo), c in zip(terms, coef):
        if np.abs(c).max() > prune:
            poly.add_term(alpha, expo, c)
    return Decomposition(poly, residual)


def random_equivariant_poly(
    rng: np.random.Generator,
    n: int,
    k: int,
    n_terms: int = 5,
    degree_cap: int = 3,
    out_dim: int = 1,
) -> EquivariantPoly:
    """A sparse random polynomial whose X-degree does not exceed ``degree_cap``."""
    basis = enumerate_multi_indices(n, k)
    pool = decomposition_terms(n, k, degree_cap)
    P = EquivariantPoly(basis, out_dim)
    for i in rng.choice(len(pool), size=min(n_terms, len(pool)), replace=False):
        alpha, expo = pool[i]
        P.add_term(alpha, expo, rng.uniform(-1.0, 1.0, size=out_dim))
    return P


def pointwise_gap_floor(f0: float) -> float:
    """Worst error of a per-element map with value ``f0`` at 0 against ``11^T x``.

    On the inputs ``e_1`` and ``0`` every row other than the first sees the
    same scalar 0, while the targets there are 1 and 0.
    """
    return max(abs(f0 - 1.0), abs(f0 - 0.0))
