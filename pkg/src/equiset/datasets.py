"""Synthetic tasks: multidimensional knapsack, quadratic sums, Fiedler
vectors of kNN graphs, and regression onto a fixed graph convolution layer.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .layers import GraphConvLayer, graphconv_forward, normalize_adjacency

DEFAULT_BUDGETS = (100, 80, 50)
TASKS = ("knapsack", "quadratic", "fiedler", "gcn-approx")
DATASET_MAGIC = "equiset-dataset"
DATASET_VERSION = "v1"


class ConvergenceError(ArithmeticError):
    pass


# ---------------------------------------------------------------------------
# knapsack


@dataclass(frozen=True)
class KnapsackInstance:
    X: np.ndarray
    budgets: tuple[int, int, int]
    z_star: np.ndarray
    v_star: float

    @property
    def n(self) -> int:
        return self.X.shape[0]


def _as_int_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != 4:
        raise ValueError(f"knapsack input must be n x 4, got shape {X.shape}")
    if not np.all(np.isfinite(X)) or np.any(X != np.round(X)) or np.any(X < 0):
        raise ValueError("knapsack entries must be non-negative integers")
    return X.astype(np.int64)


def solve_knapsack_dp(X, budgets) -> tuple[np.ndarray, float]:
    """Exact 3-constraint 0/1 knapsack by DP over remaining budgets.

    ``dp[c2, c3, c4]`` is the best value with capacities at most ``c``.
    Budgets larger than a column's total cost are clipped, which leaves the
    optimum unchanged. On backtracking an item is taken only if it strictly
    improves the value, so ties favour ``z_i = 0`` at the largest index.
    """
    Xi = _as_int_matrix(X)
    b = np.asarray(budgets, dtype=np.float64)
    if b.shape != (3,) or np.any(b < 0) or np.any(b != np.round(b)):
        raise ValueError("budgets must be three non-negative integers")
    values, costs = Xi[:, 0], Xi[:, 1:]
    caps = np.minimum(b.astype(np.int64), costs.sum(axis=0))
    n = Xi.shape[0]

    dp = np.zeros(tuple(caps + 1), dtype=np.int64)
    take = np.zeros((n,) + dp.shape, dtype=bool)
    for i in range(n):
        c = costs[i]
        if np.any(c > caps):
            continue
        cand = dp[: dp.shape[0] - c[0], : dp.shape[1] - c[1], : dp.shape[2] - c[2]] + values[i]
        region = dp[c[0]:, c[1]:, c[2]:]
        better = cand > region
        take[i][c[0]:, c[1]:, c[2]:] = better
        np.copyto(region, cand, where=better)

    z = np.zeros(n, dtype=np.int64)
    r = caps.copy()
    for i in range(n - 1, -1, -1):
        if take[i][tuple(r)]:
            z[i] = 1
            r = r - costs[i]
    v = float(values @ z)
    return z.astype(np.float64), v


def brute_force_knapsack(X, budgets) -> float:
    """Best value by enumerating all ``2^n`` subsets (oracle, small n only)."""
    Xi = np.asarray(X, dtype=np.float64)
    n = Xi.shape[0]
    Z = np.array(list(itertools.product((0, 1), repeat=n)), dtype=np.float64)
    feasible = np.all(Z @ Xi[:, 1:] <= np.asarray(budgets, dtype=np.float64), axis=1)
    return float((Z @ Xi[:, 0])[feasible].max())


def _knapsack_instance(seed, n, value_cap, cost_cap, budgets) -> KnapsackInstance:
    rng = np.random.default_rng(seed)
    V = rng.integers(1, value_cap + 1)
    values = rng.integers(1, V + 1, size=n)
    C = rng.integers(1, cost_cap + 1)
    costs = rng.integers(1, C + 1, size=(n, 3))
    X = np.column_stack([values, costs]).astype(np.float64)
    z, v = solve_knapsack_dp(X, budgets)
    return KnapsackInstance(X, tuple(int(w) for w in budgets), z, v)


def gen_knapsack(
    rng_seed: int,
    n: int,
    count: int,
    value_cap: int = 100,
    cost_cap: int = 25,
    budgets=DEFAULT_BUDGETS,
    workers: int = 1,
) -> list[KnapsackInstance]:
    """Random instances labelled by the exact DP.

    Each instance draws ``V ~ U{1..value_cap}`` and values ``~ U{1..V}``, then
    ``C ~ U{1..cost_cap}`` and costs ``~ U{1..C}``. Instance ``i`` uses the
    ``i``-th child of ``SeedSequence(rng_seed)``, so output does not depend on
    ``workers``.
    """
    if n < 1 or value_cap < 1 or cost_cap < 1:
        raise ValueError("n, value_cap and cost_cap must be >= 1")
    seeds = np.random.SeedSequence(rng_seed).spawn(count)
    args = [(s, n, value_cap, cost_cap, tuple(budgets)) for s in seeds]
    if workers > 1 and count > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(workers) as ex:
            return list(ex.map(_knapsack_star, args, chunksize=max(1, count // (4 * workers))))
    return [_knapsack_instance(*a) for a in args]


def _knapsack_star(a):
    return _knapsack_instance(*a)


def knapsack_success(pred, instance: KnapsackInstance) -> bool:
    """Feasible under all budgets and worth at least 90% of the optimum."""
    pred = np.asarray(pred, dtype=np.float64).reshape(-1)
    if pred.shape != (instance.n,):
        raise ValueError(f"prediction must have length {instance.n}")
    used = pred @ instance.X[:, 1:]
    if np.any(used > np.asarray(instance.budgets)):
        return False
    # integer arithmetic: value >= 0.9 v*  <=>  10 value >= 9 v*
    return 10 * float(pred @ instance.X[:, 0]) >= 9 * instance.v_star


# ---------------------------------------------------------------------------
# regression targets and graphs


def quadratic_target(X) -> np.ndarray:
    """Every row holds ``sum_ij (X_ij - 1/2)^2``; batches are supported."""
    X = np.asarray(X, dtype=np.float64)
    s = ((X - 0.5) ** 2).sum(axis=(-2, -1), keepdims=True)
    return np.broadcast_to(s, X.shape[:-1] + (1,)).copy()


@dataclass(frozen=True)
class Graph:
    n: int
    adjacency: np.ndarray


def knn_graph(points, K: int = 10) -> Graph:
    """Union-symmetrized K-nearest-neighbour graph (self excluded).

    Equal distances are resolved in favour of the smaller index.
    """
    P = np.asarray(points, dtype=np.float64)
    n = P.shape[0]
    if n <= K:
        raise ValueError(f"knn_graph needs more than K={K} points, got {n}")
    d2 = ((P[:, None, :] - P[None, :, :]) ** 2).sum(axis=-1)
    np.fill_diagonal(d2, np.inf)
    nbrs = np.argsort(d2, axis=1, kind="stable")[:, :K]
    A = np.zeros((n, n))
    A[np.repeat(np.arange(n), K), nbrs.ravel()] = 1.0
    A = np.maximum(A, A.T)
    return Graph(n, A)


def graph_laplacian(g: Graph) -> np.ndarray:
    """Combinatorial Laplacian ``D - A``."""
    A = np.asarray(g.adjacency, dtype=np.float64)
    return np.diag(A.sum(axis=1)) - A


def is_connected(g: Graph) -> bool:
    seen = {0}
    frontier = [0]
    A = g.adjacency
    while frontier:
        i = frontier.pop()
        for j in np.flatnonzero(A[i]):
            if j not in seen:
                seen.add(int(j))
                frontier.append(int(j))
    return len(seen) == g.n


def _round_robin(m: int) -> list[list[tuple[int, int]]]:
    """Pairings of ``m`` (even) indices; each pair appears once per sweep."""
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        rounds.append([(players[i], players[m - 1 - i]) for i in range(m // 2)])
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def jacobi_eigh(M, tol: float = 1e-14, max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi eigendecomposition of a symmetric matrix.

    Each sweep visits every off-diagonal pair once, in round-robin order so
    that the ``n/2`` rotations of a round touch disjoint rows and can be
    applied together. Returns ascending eigenvalues and column eigenvectors.
    """
    A = np.array(M, dtype=np.float64)
    n = A.shape[0]
    if A.shape != (n, n) or not np.allclose(A, A.T):
        raise ValueError("jacobi_eigh needs a symmetric square matrix")
    V = np.eye(n)
    if n == 1:
        return A.diagonal().copy(), V
    m = n + (n % 2)
    rounds = []
    for pairs in _round_robin(m):
        pq = np.array([(min(a, b), max(a, b)) for a, b in pairs if a < n and b < n])
        rounds.append((pq[:, 0], pq[:, 1]))
    scale = max(np.linalg.norm(A), 1e-300)
    for _ in range(max_sweeps):
        off = np.linalg.norm(A - np.diag(np.diagonal(A)))
        if off <= tol * scale:
            order = np.argsort(np.diagonal(A), kind="stable")
            return np.diagonal(A)[order].copy(), V[:, order]
        for p, q in rounds:
            apq = A[p, q]
            active = apq != 0
            if not np.any(active):
                continue
            p, q, apq = p[active], q[active], apq[active]
            with np.errstate(over="ignore"):
                tau = (A[q, q] - A[p, p]) / (2 * apq)
                t = np.where(tau >= 0, 1.0, -1.0) / (np.abs(tau) + np.hypot(1.0, tau))
            c = 1 / np.sqrt(1 + t * t)
            s = t * c
            rp, rq = A[p, :].copy(), A[q, :].copy()
            A[p, :] = c[:, None] * rp - s[:, None] * rq
            A[q, :] = s[:, None] * rp + c[:, None] * rq
            cp, cq = A[:, p].copy(), A[:, q].copy()
            A[:, p] = cp * c - cq * s
            A[:, q] = cp * s + cq * c
            A[p, q] = 0.0
            A[q, p] = 0.0
            vp, vq = V[:, p].copy(), V[:, q].copy()
            V[:, p] = vp * c - vq * s
            V[:, q] = vp * s + vq * c
    raise ConvergenceError(f"Jacobi did not converge in {max_sweeps} sweeps")


def fiedler_pair(points, K: int = 10) -> tuple[float, np.ndarray, np.ndarray]:
    """``(lambda_2, v_2, L)`` for the kNN graph Laplacian; ``v_2`` has unit norm."""
    L = graph_laplacian(knn_graph(points, K))
    w, V = jacobi_eigh(L)
    v = V[:, 1]
    return float(w[1]), v / np.linalg.norm(v), L


def fiedler_target(points, K: int = 10) -> np.ndarray:
    _, v, _ = fiedler_pair(points, K)
    return np.abs(v)[:, None]


def _rotation(rng: np.random.Generator) -> np.ndarray:
    Q, R = np.linalg.qr(rng.normal(size=(3, 3)))
    Q = Q * np.sign(np.diagonal(R))
    if np.linalg.det(Q) < 0:
        Q[:, 0] = -Q[:, 0]
    return Q


def sample_point_cloud(rng_seed, n: int = 512) -> np.ndarray:
    """Points on a sphere unioned with a box surface, randomly rotated and
    scaled, then shifted into the unit cube.

    The sphere radius lies between the box's smallest half-extent and its
    corner distance, so the two surfaces intersect.
    """
    rng = np.random.default_rng(rng_seed)
    half = rng.uniform(0.5, 1.0, size=3)
    radius = rng.uniform(half.min(), np.linalg.norm(half))
    n_sphere = n // 2
    d = rng.normal(size=(n_sphere, 3))
    sphere = radius * d / np.linalg.norm(d, axis=1, keepdims=True)

    n_box = n - n_sphere
    areas = np.array([half[1] * half[2], half[0] * half[2], half[0] * half[1]])
    axis = rng.choice(3, size=n_box, p=areas / areas.sum())
    box = rng.uniform(-1, 1, size=(n_box, 3)) * half
    box[np.arange(n_box), axis] = np.where(rng.random(n_box) < 0.5, -1, 1) * half[axis]

    pts = np.concatenate([sphere, box]) @ _rotation(rng).T
    pts = pts * rng.uniform(0.5, 1.0)
    lo = pts.min(axis=0)
    span = (pts.max(axis=0) - lo).max()
    return (pts - lo) / span


def gcn_layer_from_seed(rng_seed, k_in: int = 3, k_out: int = 10) -> GraphConvLayer:
    rng = np.random.default_rng([rng_seed, 0x6C])
    bound = 1 / np.sqrt(k_in)
    return GraphConvLayer(
        rng.uniform(-bound, bound, (k_in, k_out)),
        rng.uniform(-bound, bound, (k_in, k_out)),
        rng.uniform(-bound, bound, k_out),
    )


def gcn_regression_dataset(
    rng_seed, count: int = 1000, n: int = 100, k_in: int = 3, k_out: int = 10, K: int = 10
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Inputs ``~ N(1/2, 1)`` mapped through one fixed random graph conv layer.

    The layer depends only on ``rng_seed``; examples are drawn from a separate
    stream, so the first ``m`` examples do not change with ``count``.
    """
    layer = gcn_layer_from_seed(rng_seed, k_in, k_out)
    out = []
    for child in np.random.SeedSequence(rng_seed).spawn(count):
        X = np.random.default_rng(child).normal(0.5, 1.0, size=(n, k_in))
        B = normalize_adjacency(knn_graph(X, K).adjacency)
        out.append((X, graphconv_forward(layer, X, B).data))
    return out


# ---------------------------------------------------------------------------
# dataset container and files


@dataclass
class Dataset:
    """A stack of same-size sets: ``X`` is ``(N, n, k)``, ``Y`` is ``(N, n, l)``.

    For knapsack ``Y`` holds the 0/1 labels and ``v_star`` the optimal values.
    """

    task: str
    X: np.ndarray
    Y: np.ndarray
    budgets: tuple | None = None
    v_star: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def n(self) -> int:
        return self.X.shape[1]

    @property
    def k(self) -> int:
        return self.X.shape[2]

    @property
    def l(self) -> int:
        return self.Y.shape[2]

    def subset(self, idx) -> "Dataset":
        return Dataset(
            self.task,
            self.X[idx],
            self.Y[idx],
            self.budgets,
            None if self.v_star is None else self.v_star[idx],
            self.public_meta(),
        )

    def public_meta(self) -> dict:
        """Metadata without cached entries (keys starting with ``_``)."""
        return {k: v for k, v in self.meta.items() if not k.startswith("_")}

    def knapsack_instances(self) -> list[KnapsackInstance]:
        return [
            KnapsackInstance(self.X[i], tuple(self.budgets), self.Y[i, :, 0], float(self.v_star[i]))
            for i in range(len(self))
        ]


def knapsack_dataset(instances: list[KnapsackInstance]) -> Dataset:
    return Dataset(
        "knapsack",
        np.stack([inst.X for inst in instances]),
        np.stack([inst.z_star[:, None] for inst in instances]),
        tuple(instances[0].budgets),
        np.array([inst.v_star for inst in instances]),
    )


def make_dataset(task: str, seed: int, count: int, n: int, k: int | None = None, K: int = 10, workers: int = 1) -> Dataset:
    """Build a dataset for ``task`` from one seed."""
    if task == "knapsack":
        return knapsack_dataset(gen_knapsack(seed, n, count, workers=workers))
    rng = np.random.default_rng(seed)
    if task == "quadratic":
        X = rng.normal(0.5, 1.0, size=(count, n, k or 3))
        return Dataset(task, X, quadratic_target(X))
    if task == "fiedler":
        seeds = np.random.SeedSequence(seed).spawn(count)
        X = np.stack([sample_point_cloud(s, n) for s in seeds])
        return Dataset(task, X, np.stack([fiedler_target(x, K) for x in X]), meta={"K": K})
    if task == "gcn-approx":
        pairs = gcn_regression_dataset(seed, count, n, k or 3, 10, K)
        return Dataset(task, np.stack([p[0] for p in pairs]), np.stack([p[1] for p in pairs]), meta={"K": K})
    raise ValueError(f"unknown task {task!r}; choose from {', '.join(TASKS)}")


def write_dataset(path, ds: Dataset) -> None:
    """Header ``equiset-dataset v1 task=.. n=.. k=.. l=..`` (plus ``budgets=``
    for knapsack), then one line per example: row-major X, then row-major Y.
    """
    header = f"{DATASET_MAGIC} {DATASET_VERSION} task={ds.task} n={ds.n} k={ds.k} l={ds.l}"
    if ds.budgets is not None:
        header += " budgets=" + ",".join(str(int(b)) for b in ds.budgets)
    for key, val in ds.public_meta().items():
        header += f" {key}={val}"
    lines = [header]
    for x, y in zip(ds.X, ds.Y):
        lines.append(" ".join(repr(float(v)) for v in np.concatenate([x.ravel(), y.ravel()])))
    Path(path).write_text("\n".join(lines) + "\n")


def read_dataset(path) -> Dataset:
    text = Path(path).read_text().splitlines()
    head = text[0].split()
    if len(head) < 2 or head[0] != DATASET_MAGIC or head[1] != DATASET_VERSION:
        raise ValueError(f"{path}: not an {DATASET_MAGIC} {DATASET_VERSION} file")
    fields = dict(item.split("=", 1) for item in head[2:])
    task, n, k, l = fields.pop("task"), int(fields.pop("n")), int(fields.pop("k")), int(fields.pop("l"))
    budgets = fields.pop("budgets", None)
    rows = np.array([[float(v) for v in line.split()] for line in text[1:] if line.strip()])
    rows = rows.reshape(-1, n * k + n * l)
    X = rows[:, : n * k].reshape(-1, n, k)
    Y = rows[:, n * k :].reshape(-1, n, l)
    meta = {key: int(v) if v.lstrip("-").isdigit() else v for key, v in fields.items()}
    ds = Dataset(task, X, Y, meta=meta)
    if budgets is not None:
        ds.budgets = tuple(int(b) for b in budgets.split(","))
        ds.v_star = (X[:, :, 0] * Y[:, :, 0]).sum(axis=1)
    return ds
