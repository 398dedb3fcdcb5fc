"""Equivariant layers and the set architectures built from them.

Parameters live in a flat ``dict[str, np.ndarray]`` whose insertion order is
the declaration order used by checkpoints. ``model_forward`` accepts either
raw arrays (inference) or :class:`~equiset.tensor.Tensor` leaves (training).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import tensor as T
from .tensor import Tensor

ARCHITECTURES = ("PointNet", "PointNetST", "PointNetQT", "DeepSets", "PointNetSeg", "GraphNet", "MLP")
EQUIVARIANT_ARCHITECTURES = tuple(a for a in ARCHITECTURES if a != "MLP")

CHECKPOINT_FORMAT = "equiset-checkpoint"
CHECKPOINT_VERSION = 1


class ConfigError(ValueError):
    pass


def canonical_arch(name: str) -> str:
    for a in ARCHITECTURES:
        if a.lower() == name.lower():
            return a
    raise ConfigError(f"unknown architecture {name!r}; choose from {', '.join(ARCHITECTURES)}")


# ---------------------------------------------------------------------------
# single layers


@dataclass
class AffineEquivariantLayer:
    """``X A + (1/n) 1 1^T X B + 1 c^T``; ``B=None`` means the PointNet case."""

    A: object
    c: object
    B: object = None


@dataclass
class QuadraticLayer:
    W1: object
    W2: object
    W3: object
    W4: object
    W5: object


@dataclass
class GraphConvLayer:
    W1: object
    W2: object
    c: object


def _check_in(X: Tensor, W, what: str) -> None:
    k = np.shape(W.data if isinstance(W, Tensor) else W)[0]
    if X.shape[-1] != k:
        raise ValueError(f"{what}: input has {X.shape[-1]} features, weights expect {k}")


def affine_equivariant_forward(layer: AffineEquivariantLayer, X) -> Tensor:
    X = T.tensor(X)
    _check_in(X, layer.A, "affine layer")
    out = T.matmul(X, layer.A)
    if layer.B is not None:
        out = out + T.matmul(T.row_mean(X), layer.B)
    return out + layer.c


def quadratic_forward(layer: QuadraticLayer, X) -> Tensor:
    """Quadratic transmission layer with unnormalized ``11^T X``."""
    X = T.tensor(X)
    _check_in(X, layer.W1, "quadratic layer")
    S = T.broadcast_rows(T.row_sum(X), X.shape[-2])
    return (
        T.matmul(X, layer.W1)
        + T.matmul(S, layer.W2)
        + T.matmul(S * S, layer.W3)
        + T.matmul(X * X, layer.W4)
        + T.matmul(S * X, layer.W5)
    )


def graphconv_forward(layer: GraphConvLayer, X, Bmat) -> Tensor:
    X = T.tensor(X)
    _check_in(X, layer.W1, "graph conv layer")
    Bmat = T.tensor(Bmat)
    n = X.shape[-2]
    if Bmat.shape[-2:] != (n, n):
        raise ValueError(f"graph conv: adjacency shape {Bmat.shape} does not match n={n}")
    return T.matmul(T.matmul(Bmat, X), layer.W2) + T.matmul(X, layer.W1) + layer.c


def normalize_adjacency(adjacency) -> np.ndarray:
    """``D^{-1/2} (A + I) D^{-1/2}`` with D the degrees of ``A + I``.

    Self-loops are added only where the diagonal is zero.
    """
    A = np.array(adjacency, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"adjacency must be square, got {A.shape}")
    diag = np.diagonal(A).copy()
    A[np.diag_indices_from(A)] = np.where(diag == 0, 1.0, diag)
    if not np.allclose(A, A.T):
        raise ValueError("adjacency must be symmetric")
    d = A.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(d)
    return inv_sqrt[:, None] * A * inv_sqrt[None, :]


def max_pool(X) -> Tensor:
    """Columnwise max over the set; returns a single row (shape ``(..., 1, k)``)."""
    return T.row_max(X)


# ---------------------------------------------------------------------------
# architectures


@dataclass
class ModelSpec:
    architecture: str
    depth: int
    width: int
    k_in: int
    k_out: int
    n: int | None = None
    transmission_index: int | None = None
    activation: str = "relu"
    input_scale: float = 1.0
    output_scale: float = 1.0

    def __post_init__(self):
        self.architecture = canonical_arch(self.architecture)
        if min(self.depth, self.width, self.k_in, self.k_out) < 1:
            raise ConfigError("depth, width, k_in and k_out must all be >= 1")
        if self.activation != "relu":
            raise ConfigError("only relu activation is supported")
        if not (self.input_scale > 0 and self.output_scale > 0):
            raise ConfigError("input_scale and output_scale must be positive")
        if self.architecture == "MLP" and self.n is None:
            raise ConfigError("MLP needs the set size n")
        if self.architecture in ("PointNetST", "PointNetQT"):
            if self.transmission_index is None:
                self.transmission_index = math.ceil(self.depth / 2) - 1
            if not 0 <= self.transmission_index < self.depth:
                raise ConfigError(f"transmission_index must be in [0, {self.depth})")

    def dims(self, depth: int | None = None, k_in: int | None = None, k_out: int | None = None) -> list[int]:
        depth = self.depth if depth is None else depth
        k_in = self.k_in if k_in is None else k_in
        k_out = self.k_out if k_out is None else k_out
        return [k_in] + [self.width] * (depth - 1) + [k_out]

    @property
    def seg_depth(self) -> int:
        return max(1, math.ceil(self.depth / 2))

    @property
    def mlp_hidden(self) -> int:
        return matched_mlp_hidden(self)


def count_params(params: dict) -> int:
    return int(sum(np.size(v) for v in params.values()))


def _deepsets_param_count(spec: ModelSpec) -> int:
    dims = spec.dims()
    return sum(2 * a * b + b for a, b in zip(dims[:-1], dims[1:]))


def _mlp_param_count(n: int, k_in: int, k_out: int, depth: int, hidden: int) -> int:
    dims = [n * k_in] + [hidden] * (depth - 1) + [n * k_out]
    return sum(a * b + b for a, b in zip(dims[:-1], dims[1:]))


def matched_mlp_hidden(spec: ModelSpec) -> int:
    """Hidden width whose MLP parameter count is closest to DeepSets at the same width."""
    target = _deepsets_param_count(spec)
    best, best_gap = 1, None
    for h in range(1, 4 * target + 2):
        gap = abs(_mlp_param_count(spec.n, spec.k_in, spec.k_out, spec.depth, h) - target)
        if best_gap is None or gap < best_gap:
            best, best_gap = h, gap
        elif _mlp_param_count(spec.n, spec.k_in, spec.k_out, spec.depth, h) > target:
            break
    return best


def _uniform(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def _affine_params(params, prefix, rng, a, b, with_B: bool):
    params[f"{prefix}.A"] = _uniform(rng, a, (a, b))
    if with_B:
        params[f"{prefix}.B"] = _uniform(rng, a, (a, b))
    params[f"{prefix}.c"] = np.zeros(b)


def init_params(spec: ModelSpec, rng: np.random.Generator | int = 0) -> dict[str, np.ndarray]:
    """Uniform(+-1/sqrt(fan_in)) weights, zero biases, in declaration order."""
    rng = np.random.default_rng(rng)
    arch = spec.architecture
    params: dict[str, np.ndarray] = {}
    if arch == "MLP":
        h = spec.mlp_hidden
        dims = [spec.n * spec.k_in] + [h] * (spec.depth - 1) + [spec.n * spec.k_out]
        for i, (a, b) in enumerate(zip(dims[:-1], dims[1:])):
            params[f"{i}.W"] = _uniform(rng, a, (a, b))
            params[f"{i}.c"] = np.zeros(b)
        return params
    if arch == "PointNetSeg":
        f_dims = spec.dims(depth=spec.seg_depth, k_out=spec.width)
        g_dims = spec.dims(depth=spec.seg_depth, k_in=spec.k_in + spec.width)
        for tag, dims in (("F", f_dims), ("G", g_dims)):
            for i, (a, b) in enumerate(zip(dims[:-1], dims[1:])):
                _affine_params(params, f"{tag}{i}", rng, a, b, with_B=False)
        return params
    dims = spec.dims()
    for i, (a, b) in enumerate(zip(dims[:-1], dims[1:])):
        if arch == "GraphNet":
            params[f"{i}.W1"] = _uniform(rng, a, (a, b))
            params[f"{i}.W2"] = _uniform(rng, a, (a, b))
            params[f"{i}.c"] = np.zeros(b)
        elif arch == "PointNetQT" and i == spec.transmission_index:
            for j in range(1, 6):
                params[f"{i}.W{j}"] = _uniform(rng, a, (a, b))
        else:
            with_B = arch == "DeepSets" or (arch == "PointNetST" and i == spec.transmission_index)
            _affine_params(params, str(i), rng, a, b, with_B)
    return params


def _affine_from(params, prefix) -> AffineEquivariantLayer:
    return AffineEquivariantLayer(params[f"{prefix}.A"], params[f"{prefix}.c"], params.get(f"{prefix}.B"))


def _pointnet_stack(params, tag: str, depth: int, X: Tensor) -> Tensor:
    for i in range(depth):
        if i > 0:
            X = T.relu(X)
        X = affine_equivariant_forward(_affine_from(params, f"{tag}{i}"), X)
    return X


def model_forward(spec: ModelSpec, params: dict, X, aux=None) -> Tensor:
    """Run the network on one set ``(n, k_in)`` or a batch ``(B, n, k_in)``.

    Inputs are divided by ``spec.input_scale`` and outputs multiplied by
    ``spec.output_scale``. ReLU sits between layers; the last layer is left
    linear.
    """
    out = _forward(spec, params, X, aux)
    if spec.output_scale != 1.0:
        out = out * spec.output_scale
    return out


def _forward(spec: ModelSpec, params: dict, X, aux) -> Tensor:
    X = T.tensor(X)
    if X.shape[-1] != spec.k_in:
        raise ValueError(f"input has {X.shape[-1]} features, model expects k_in={spec.k_in}")
    if spec.input_scale != 1.0:
        X = X * (1.0 / spec.input_scale)
    arch = spec.architecture
    n = X.shape[-2]

    if arch == "MLP":
        if n != spec.n:
            raise ValueError(f"MLP was built for n={spec.n}, got n={n}")
        lead = X.shape[:-2]
        H = T.reshape(X, lead + (1, n * spec.k_in))
        for i in range(spec.depth):
            if i > 0:
                H = T.relu(H)
            H = T.matmul(H, params[f"{i}.W"]) + params[f"{i}.c"]
        return T.reshape(H, lead + (n, spec.k_out))

    if arch == "PointNetSeg":
        F = _pointnet_stack(params, "F", spec.seg_depth, X)
        pooled = T.broadcast_rows(max_pool(F), n)
        return _pointnet_stack(params, "G", spec.seg_depth, T.concat([X, pooled]))

    if arch == "GraphNet" and aux is None:
        raise ConfigError("GraphNet needs the normalized adjacency as aux")

    H = X
    for i in range(spec.depth):
        if i > 0:
            H = T.relu(H)
        if arch == "GraphNet":
            layer = GraphConvLayer(params[f"{i}.W1"], params[f"{i}.W2"], params[f"{i}.c"])
            H = graphconv_forward(layer, H, aux)
        elif arch == "PointNetQT" and i == spec.transmission_index:
            H = quadratic_forward(QuadraticLayer(*(params[f"{i}.W{j}"] for j in range(1, 6))), H)
        else:
            H = affine_equivariant_forward(_affine_from(params, str(i)), H)
    return H


def predict(spec: ModelSpec, params: dict, X, aux=None) -> np.ndarray:
    return model_forward(spec, params, X, aux).data


def width_bound(n: int, k_in: int, k_out: int) -> int:
    """Sufficient width for a universal ReLU equivariant network."""
    if min(n, k_in, k_out) < 1:
        raise ValueError("n, k_in and k_out must be >= 1")
    return k_out + k_in + math.comb(n + k_in, k_in)


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path, spec: ModelSpec, params: dict, extra: dict | None = None) -> None:
    """JSON container: format tag, version, spec fields, parameters in order.

    Floats are written with ``repr`` precision so a reload is bit-exact.
    """
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "spec": asdict(spec),
        "params": [
            {"name": k, "shape": list(np.shape(v)), "data": np.asarray(v, dtype=np.float64).ravel().tolist()}
            for k, v in params.items()
        ],
        "extra": extra or {},
    }
    Path(path).write_text(json.dumps(doc))


def load_checkpoint(path) -> tuple[ModelSpec, dict[str, np.ndarray], dict]:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not an {CHECKPOINT_FORMAT} file")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {doc.get('version')}")
    spec = ModelSpec(**doc["spec"])
    params = {p["name"]: np.array(p["data"], dtype=np.float64).reshape(p["shape"]) for p in doc["params"]}
    return spec, params, doc.get("extra", {})
