"""Mini-batch Adam training, losses and task metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import tensor as T
from .datasets import Dataset, knapsack_success, knn_graph
from .layers import ModelSpec, init_params, model_forward, normalize_adjacency
from .tensor import Tensor

LOSSES = ("cross_entropy", "smooth_l1", "mse")
TASK_LOSS = {"knapsack": "cross_entropy", "quadratic": "mse", "fiedler": "mse", "gcn-approx": "smooth_l1"}


class NumericAbort(FloatingPointError):
    """Training produced a non-finite loss."""


@dataclass
class TrainConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 32
    epochs: int = 150
    decay_factor: float = 0.5
    decay_every: int = 100
    loss: str = "cross_entropy"
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("betas must lie in [0, 1)")
        if self.decay_every < 1 or self.batch_size < 1 or self.epochs < 0:
            raise ValueError("decay_every and batch_size must be >= 1, epochs >= 0")
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}")


def lr_at(config: TrainConfig, epoch: int) -> float:
    """Step decay: ``lr * decay_factor ** (epoch // decay_every)``."""
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    return config.lr * config.decay_factor ** (epoch // config.decay_every)


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0

    @classmethod
    def zeros_like(cls, params: dict) -> "AdamState":
        return cls({k: np.zeros_like(p) for k, p in params.items()}, {k: np.zeros_like(p) for k, p in params.items()})


def adam_step(params: dict, grads: dict, state: AdamState, lr_t: float, beta1=0.9, beta2=0.999, eps=1e-8):
    """One in-place Adam update; returns ``(params, state)``."""
    state.t += 1
    bc1 = 1 - beta1**state.t
    bc2 = 1 - beta2**state.t
    for k, p in params.items():
        g = grads[k]
        if g.shape != p.shape:
            raise ValueError(f"gradient for {k} has shape {g.shape}, parameter has {p.shape}")
        m = state.m.setdefault(k, np.zeros_like(p))
        v = state.v.setdefault(k, np.zeros_like(p))
        m *= beta1
        m += (1 - beta1) * g
        v *= beta2
        v += (1 - beta2) * g * g
        p -= lr_t * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return params, state


# ---------------------------------------------------------------------------
# losses


def cross_entropy_per_element(logits, labels) -> Tensor:
    """Mean over set elements of ``-log softmax(logits_i)[label_i]`` (2 classes)."""
    logits = T.tensor(logits)
    labels = np.asarray(labels)
    if logits.shape[-1] != 2 or labels.shape != logits.shape[:-1]:
        raise ValueError(f"logits {logits.shape} and labels {labels.shape} do not match")
    if not np.all((labels == 0) | (labels == 1)):
        raise ValueError("labels must be 0 or 1")
    lab = labels.astype(np.int64)
    z = logits.data - logits.data.max(axis=-1, keepdims=True)
    logsumexp = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    logp = z - logsumexp
    picked = np.take_along_axis(logp, lab[..., None], axis=-1)
    count = lab.size

    def backward(g):
        p = np.exp(logp)
        onehot = np.zeros_like(p)
        np.put_along_axis(onehot, lab[..., None], 1.0, axis=-1)
        logits._accumulate(g.reshape(()) * (p - onehot) / count)

    return T._node(np.array([[-picked.mean()]]), (logits,), backward)


def _check_same(pred: Tensor, target: np.ndarray) -> None:
    if pred.shape != target.shape:
        raise ValueError(f"prediction shape {pred.shape} != target shape {target.shape}")


def smooth_l1(pred, target) -> Tensor:
    pred = T.tensor(pred)
    target = np.asarray(target, dtype=np.float64)
    _check_same(pred, target)
    d = pred.data - target
    ad = np.abs(d)
    small = ad < 1
    size = d.size

    def backward(g):
        pred._accumulate(g.reshape(()) * np.where(small, d, np.sign(d)) / size)

    val = np.where(small, 0.5 * d * d, ad - 0.5).mean()
    return T._node(np.array([[val]]), (pred,), backward)


def mse(pred, target) -> Tensor:
    pred = T.tensor(pred)
    target = np.asarray(target, dtype=np.float64)
    _check_same(pred, target)
    diff = pred - target
    return T.mean(diff * diff)


def loss_value(name: str, out, target) -> Tensor:
    if name == "cross_entropy":
        return cross_entropy_per_element(out, np.asarray(target)[..., 0])
    if name == "smooth_l1":
        return smooth_l1(out, target)
    if name == "mse":
        return mse(out, target)
    raise ValueError(f"unknown loss {name!r}")


# ---------------------------------------------------------------------------
# training loop


def graph_aux(X: np.ndarray, K: int = 10) -> np.ndarray:
    """Normalized kNN adjacency for each set in a stack ``(N, n, k)``."""
    K = min(K, X.shape[1] - 1)
    return np.stack([normalize_adjacency(knn_graph(x, K).adjacency) for x in X])


def _aux_for(spec: ModelSpec, ds: Dataset):
    if spec.architecture != "GraphNet":
        return None
    if "_aux" not in ds.meta:
        ds.meta["_aux"] = graph_aux(ds.X, int(ds.meta.get("K", 10)))
    return ds.meta["_aux"]


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_metric: float
    test_loss: float
    test_metric: float
    lr: float


@dataclass
class TrainResult:
    params: dict[str, np.ndarray]
    history: list[EpochRecord]


def _forward_chunks(spec, params, X, aux, chunk=256):
    outs = []
    for s in range(0, X.shape[0], chunk):
        a = None if aux is None else aux[s : s + chunk]
        outs.append(model_forward(spec, params, X[s : s + chunk], a).data)
    return np.concatenate(outs) if outs else np.zeros((0,) + X.shape[1:-1] + (spec.k_out,))


def knapsack_predictions(out: np.ndarray) -> np.ndarray:
    """Per-element argmax over the two logits; ties pick class 0."""
    return (out[..., 1] > out[..., 0]).astype(np.float64)


def evaluate(spec: ModelSpec, params: dict, ds: Dataset, loss: str | None = None) -> tuple[float, float]:
    """``(mean loss, task metric)`` on ``ds``.

    The metric is the knapsack success rate or, for regression tasks, the
    mean loss itself.
    """
    loss = loss or TASK_LOSS[ds.task]
    if len(ds) == 0:
        return float("nan"), float("nan")
    out = _forward_chunks(spec, params, ds.X, _aux_for(spec, ds))
    lval = float(loss_value(loss, out, ds.Y).data.reshape(()))
    if ds.task == "knapsack":
        pred = knapsack_predictions(out)
        hits = sum(knapsack_success(p, inst) for p, inst in zip(pred, ds.knapsack_instances()))
        return lval, hits / len(ds)
    return lval, lval


def train(
    spec: ModelSpec,
    dataset: Dataset,
    config: TrainConfig,
    test: Dataset | None = None,
    params: dict | None = None,
    callback=None,
) -> TrainResult:
    """Adam on shuffled mini-batches; the last short batch is kept.

    Parameter init and shuffling both derive from ``config.seed``, so equal
    inputs give bit-identical results.
    """
    if dataset.k != spec.k_in:
        raise ValueError(f"dataset has k={dataset.k}, model expects k_in={spec.k_in}")
    ss = np.random.SeedSequence(config.seed)
    init_rng, shuffle_rng = (np.random.default_rng(s) for s in ss.spawn(2))
    params = {k: v.copy() for k, v in (params or init_params(spec, init_rng)).items()}
    state = AdamState.zeros_like(params)
    aux = _aux_for(spec, dataset)
    N = len(dataset)
    history: list[EpochRecord] = []
    for epoch in range(config.epochs):
        lr = lr_at(config, epoch)
        order = shuffle_rng.permutation(N)
        for b, start in enumerate(range(0, N, config.batch_size)):
            idx = order[start : start + config.batch_size]
            leaves = {k: Tensor(v, requires_grad=True) for k, v in params.items()}
            out = model_forward(spec, leaves, dataset.X[idx], None if aux is None else aux[idx])
            loss = loss_value(config.loss, out, dataset.Y[idx])
            if not math.isfinite(float(loss.data.reshape(()))):
                raise NumericAbort(f"non-finite loss at epoch {epoch}, batch {b}")
            T.backward(loss)
            grads = {k: (leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data)) for k, leaf in leaves.items()}
            adam_step(params, grads, state, lr, config.beta1, config.beta2, config.eps)
        tr_loss, tr_metric = evaluate(spec, params, dataset, config.loss)
        te_loss, te_metric = evaluate(spec, params, test, config.loss) if test is not None else (float("nan"),) * 2
        rec = EpochRecord(epoch, tr_loss, tr_metric, te_loss, te_metric, lr)
        history.append(rec)
        if callback is not None:
            callback(rec)
    return TrainResult(params, history)


def default_config(task: str, **overrides) -> TrainConfig:
    """Per-task optimization recipes (epochs, schedule, batch size)."""
    base = {
        "knapsack": dict(epochs=150, lr=1e-3, decay_factor=0.5, decay_every=100, batch_size=32),
        "quadratic": dict(epochs=150, lr=1e-3, decay_factor=0.1, decay_every=50, batch_size=64),
        "fiedler": dict(epochs=50, lr=1e-3, decay_factor=1.0, decay_every=1, batch_size=32),
        "gcn-approx": dict(epochs=200, lr=1e-3, decay_factor=1.0, decay_every=1, batch_size=32),
    }[task]
    cfg = TrainConfig(loss=TASK_LOSS[task], **base)
    return replace(cfg, **overrides)
