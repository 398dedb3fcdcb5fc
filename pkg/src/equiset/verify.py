"""Property suites shared by the ``verify`` command and the acceptance tests."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import layers, sympoly
from .datasets import Dataset, knn_graph
from .layers import ModelSpec
from .training import TrainConfig, train

DECOMPOSITION_PAIRS = ((2, 1), (3, 1), (2, 2), (3, 2))


@dataclass
class PropertyResult:
    name: str
    value: float
    tolerance: float
    passed: bool
    counterexample: str = ""

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"{tag} {self.name}: {self.value:.3e} (tol {self.tolerance:.1e})"


def random_normalized_adjacency(rng: np.random.Generator, n: int) -> np.ndarray:
    X = rng.uniform(size=(n, 3))
    return layers.normalize_adjacency(knn_graph(X, min(2, n - 1)).adjacency)


def verify_equivariance(archs, depth=6, width=32, n=5, k_in=3, k_out=2, trials=100, seed=0, tol=1e-6):
    results = []
    for arch in archs:
        spec = ModelSpec(arch, depth, width, k_in, k_out, n=n)
        params = layers.init_params(spec, seed)
        if spec.architecture == "GraphNet":
            check = sympoly.check_equivariance(
                lambda X, B: layers.predict(spec, params, X, B), n, k_in, trials, seed, tol,
                aux_sampler=random_normalized_adjacency, batched=True,
            )
        else:
            check = sympoly.check_equivariance(
                lambda X: layers.predict(spec, params, X), n, k_in, trials, seed, tol, batched=True
            )
        cex = "" if check.passed else f"perm={check.worst_perm} X={np.array2string(check.worst_input, precision=17)}"
        results.append(PropertyResult(f"equivariance {spec.architecture}", check.deviation, tol, check.passed, cex))
    return results


def fit_pointnet_to_row_sum(n=5, width=32, depth=6, count=512, epochs=30, seed=0):
    """A PointNet trained toward ``h(x) = 1 1^T x`` on uniform ``[0,1]^n`` inputs."""
    rng = np.random.default_rng(seed)
    X = rng.uniform(size=(count, n, 1))
    Y = np.broadcast_to(X.sum(axis=1, keepdims=True), X.shape).copy()
    spec = ModelSpec("PointNet", depth, width, 1, 1)
    params = layers.init_params(spec, seed)
    if epochs > 0:
        cfg = TrainConfig(lr=1e-3, epochs=epochs, batch_size=32, loss="mse", seed=seed)
        params = train(spec, Dataset("quadratic", X, Y), cfg, params=params).params
    return spec, params


def pointwise_gap(spec: ModelSpec, params: dict, n: int) -> tuple[float, bool]:
    """Worst error against ``1 1^T x`` on ``{e_1, 0}`` and whether row 2 agrees bitwise."""
    e1 = np.zeros((n, 1))
    e1[0, 0] = 1.0
    zero = np.zeros((n, 1))
    out_e1 = layers.predict(spec, params, e1)
    out_0 = layers.predict(spec, params, zero)
    err = max(np.abs(out_e1 - e1.sum()).max(), np.abs(out_0 - 0.0).max())
    same = out_e1[1].tobytes() == out_0[1].tobytes()
    return float(err), same


def verify_pointwise_gap(n=5, epochs=30, seed=0):
    spec, params = fit_pointnet_to_row_sum(n=n, epochs=epochs, seed=seed)
    err, same = pointwise_gap(spec, params, n)
    ok = err >= 0.5 - 1e-9 and same
    cex = "" if ok else f"max error {err!r}, row 2 identical: {same}"
    return PropertyResult(f"pointwise gap PointNet n={n} epochs={epochs}", err, 0.5 - 1e-9, ok, cex)


def decomposition_round_trips(n, k, polys=20, seed=0, degree_cap=3, samples=None):
    """Worst round-trip gap over random polynomials, on fitted and fresh inputs."""
    rng = np.random.default_rng([seed, n, k])
    samples = samples or 4 * len(sympoly.decomposition_terms(n, k, degree_cap))
    worst_res = 0.0
    for _ in range(polys):
        P = sympoly.random_equivariant_poly(rng, n, k, degree_cap=degree_cap)
        pairs = []
        for _ in range(samples):
            X = rng.uniform(-1.0, 1.0, size=(n, k))
            pairs.append((X, sympoly.eval_equivariant_poly(P, X)))
        dec = sympoly.decompose_equivariant_poly(pairs, n, k, degree_cap)
        # compare on fresh inputs as well, not just the fitted ones
        for _ in range(5):
            X = rng.uniform(-1.0, 1.0, size=(n, k))
            gap = np.abs(sympoly.eval_equivariant_poly(dec.poly, X) - sympoly.eval_equivariant_poly(P, X)).max()
            worst_res = max(worst_res, float(gap))
        worst_res = max(worst_res, dec.residual)
    return worst_res


def symmetrize_deviation(n, k, trials=5, seed=0):
    rng = np.random.default_rng([seed, 7, n, k])
    W = rng.normal(size=(n * k, n))

    def raw(X):
        # deliberately not equivariant: mixes rows by position
        return np.tanh(X.reshape(-1) @ W)[:, None] + X[:, :1] ** 2

    check = sympoly.check_equivariance(lambda X: sympoly.symmetrize(raw, X), n, k, trials, seed, 1e-9)
    return check


def verify_decomposition(pairs=DECOMPOSITION_PAIRS, polys=20, seed=0):
    results = []
    for n, k in pairs:
        res = decomposition_round_trips(n, k, polys, seed)
        results.append(PropertyResult(f"decomposition round trip n={n} k={k}", res, 1e-6, res <= 1e-6))
        chk = symmetrize_deviation(n, k, seed=seed)
        cex = "" if chk.passed else f"perm={chk.worst_perm}"
        results.append(PropertyResult(f"symmetrize equivariance n={n} k={k}", chk.deviation, 1e-9, chk.passed, cex))
    bad = [(n, k) for n in range(1, 9) for k in range(1, 9)
           if sympoly.enumerate_multi_indices(n, k).t != math.comb(n + k, k)]
    results.append(PropertyResult("basis size t = C(n+k, k) for n,k <= 8", float(len(bad)), 0.0, not bad,
                                  f"mismatches at {bad}" if bad else ""))
    if (2, 1) in [tuple(p) for p in pairs]:
        results.append(recover_row_sum())
    return results


def recover_row_sum(n=2, seed=0):
    """Decompose ``P(x) = 1 1^T x`` and check it comes back as ``s_1`` times ``b_0``."""
    rng = np.random.default_rng(seed)
    pairs = []
    for _ in range(20):
        x = rng.uniform(-1.0, 1.0, size=(n, 1))
        pairs.append((x, np.full((n, 1), x.sum())))
    dec = sympoly.decompose_equivariant_poly(pairs, n, 1, 1)
    basis = dec.poly.basis
    want = [0] * basis.t
    want[basis.position((1,))] = 1
    terms = dec.poly.terms
    got = terms.get((0,), {}).get(tuple(want))
    others = sum(len(v) for v in terms.values()) - (got is not None)
    err = math.inf if got is None else float(abs(got[0] - 1.0))
    ok = err <= 1e-9 and others == 0
    return PropertyResult("decomposition recovers q_0 = s_1 for 1 1^T x", err, 1e-9, ok,
                          "" if ok else f"terms={terms}")


def _binomial(a: int, b: int) -> int:
    # Pascal's rule, independent of math.comb
    row = [1]
    for _ in range(a):
        row = [1] + [row[i] + row[i + 1] for i in range(len(row) - 1)] + [1]
    return row[b]


def verify_width_bound():
    bad = [(n, k) for n in range(1, 11) for k in range(1, 11)
           if layers.width_bound(n, k, 1) != 1 + k + _binomial(n + k, k)]
    v = layers.width_bound(5, 3, 1)
    return [
        PropertyResult("width_bound(5, 3, 1) = 60", float(v), 60.0, v == 60, "" if v == 60 else f"got {v}"),
        PropertyResult("width_bound vs binomial, n,k_in <= 10", float(len(bad)), 0.0, not bad,
                       f"mismatches at {bad}" if bad else ""),
    ]
