"""Single-hidden-layer network fusing per-model predictions into one.

Inputs are the K individual next-state predictions (one-hot encoded) plus a
normalized time-step feature.  The hidden layer is ReLU; the default output
is linear trained under the quadratic cost with L2 regularization on the two
weight matrices.  A softmax/cross-entropy mode is available as a configured
alternative.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, TrainingDivergedError
from . import serialize

LOSS_QUADRATIC = "quadratic"
LOSS_CROSS_ENTROPY = "cross_entropy"


@dataclass
class FusionInput:
    """K predicted symbols plus the normalized position of the prediction."""

    hmm_preds: np.ndarray
    count: float

    def __post_init__(self):
        self.hmm_preds = np.asarray(self.hmm_preds, dtype=np.int64)


@dataclass
class FusionHyper:
    hidden_width: int = 60
    lr: float = 0.01
    l2: float = 1e-4
    epochs: int = 50
    batch: int = 32
    seed: int = 0
    loss: str = LOSS_QUADRATIC

    def validate(self) -> None:
        if self.hidden_width < 1:
            raise DomainError("hidden_width must be at least 1")
        if self.lr <= 0:
            raise DomainError("lr must be positive")
        if self.l2 < 0:
            raise DomainError("l2 must be non-negative")
        if self.epochs < 1 or self.batch < 1:
            raise DomainError("epochs and batch must be at least 1")
        if self.loss not in (LOSS_QUADRATIC, LOSS_CROSS_ENTROPY):
            raise DomainError(f"unknown loss {self.loss!r}")


@dataclass
class FusionNetwork:
    W: np.ndarray         # input -> hidden, (K*M+1, H)
    c: np.ndarray         # hidden bias, (H,)
    w: np.ndarray         # hidden -> output, (H, M)
    b: np.ndarray         # output bias, (M,)
    l2: float
    lr: float
    loss: str = LOSS_QUADRATIC

    @property
    def hidden_width(self) -> int:
        return self.W.shape[1]

    @property
    def n_inputs(self) -> int:
        return self.W.shape[0]

    @property
    def n_outputs(self) -> int:
        return self.w.shape[1]


def encode(inp: FusionInput, k: int, n_obs: int) -> np.ndarray:
    """K one-hot blocks of width M followed by the scalar count feature."""
    preds = inp.hmm_preds
    if preds.size != k:
        raise DomainError(f"expected {k} predictions, got {preds.size}")
    if (preds < 0).any() or (preds >= n_obs).any():
        raise DomainError("prediction symbol out of range")
    if not 0.0 <= inp.count <= 1.0:
        raise DomainError("count must lie in [0, 1]")
    x = np.zeros(k * n_obs + 1)
    x[np.arange(k) * n_obs + preds] = 1.0
    x[-1] = inp.count
    return x


def encode_batch(preds: np.ndarray, counts: np.ndarray, n_obs: int) -> np.ndarray:
    """Vectorized encode for a (P, K) prediction matrix and (P,) counts."""
    p, k = preds.shape
    X = np.zeros((p, k * n_obs + 1))
    cols = np.arange(k)[None, :] * n_obs + preds
    X[np.arange(p)[:, None], cols] = 1.0
    X[:, -1] = counts
    return X


def decode(x: np.ndarray, k: int, n_obs: int) -> FusionInput:
    """Inverse of encode on the one-hot blocks (argmax per block)."""
    blocks = x[: k * n_obs].reshape(k, n_obs)
    return FusionInput(hmm_preds=np.argmax(blocks, axis=1), count=float(x[-1]))


def init_network(
    n_inputs: int, n_obs: int, hyper: FusionHyper
) -> FusionNetwork:
    """Symmetric uniform weights scaled by 1/sqrt(fan-in); zero biases."""
    hyper.validate()
    rng = np.random.default_rng(hyper.seed)
    h = hyper.hidden_width
    win = 1.0 / np.sqrt(n_inputs)
    wout = 1.0 / np.sqrt(h)
    return FusionNetwork(
        W=rng.uniform(-win, win, size=(n_inputs, h)),
        c=np.zeros(h),
        w=rng.uniform(-wout, wout, size=(h, n_obs)),
        b=np.zeros(n_obs),
        l2=hyper.l2,
        lr=hyper.lr,
        loss=hyper.loss,
    )


def forward(net: FusionNetwork, x: np.ndarray) -> tuple[np.ndarray, int]:
    """Scores for one encoded input and the argmax prediction."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (net.n_inputs,):
        raise DomainError(
            f"input has dimension {x.shape}, network expects ({net.n_inputs},)"
        )
    scores = forward_batch(net, x[None, :])[0]
    return scores, int(np.argmax(scores))


def forward_batch(net: FusionNetwork, X: np.ndarray) -> np.ndarray:
    if X.shape[1] != net.n_inputs:
        raise DomainError("input dimension mismatch")
    hidden = np.maximum(0.0, X @ net.W + net.c)
    return hidden @ net.w + net.b


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cost_and_gradients(
    net: FusionNetwork, X: np.ndarray, Y: np.ndarray
) -> tuple[float, dict[str, np.ndarray]]:
    """Cost and analytic gradients for a batch.

    Quadratic mode: C = (1/2n) sum ||y - out||^2 + (l2/2)(||W||^2 + ||w||^2).
    Cross-entropy mode replaces the data term with -mean log softmax(out)[y].
    """
    n = X.shape[0]
    with np.errstate(over="ignore", invalid="ignore"):
        z = X @ net.W + net.c
        hidden = np.maximum(0.0, z)
        out = hidden @ net.w + net.b
        if net.loss == LOSS_QUADRATIC:
            diff = out - Y
            data_cost = float((diff ** 2).sum()) / (2.0 * n)
            dout = diff / n
        else:
            p = _softmax(out)
            data_cost = float(-(Y * np.log(p + 1e-300)).sum()) / n
            dout = (p - Y) / n
        cost = data_cost + 0.5 * net.l2 * (
            float((net.W ** 2).sum()) + float((net.w ** 2).sum())
        )
        dw = hidden.T @ dout + net.l2 * net.w
        db = dout.sum(axis=0)
        dhidden = dout @ net.w.T
        dz = dhidden * (z > 0.0)
        dW = X.T @ dz + net.l2 * net.W
        dc = dz.sum(axis=0)
    return cost, {"W": dW, "c": dc, "w": dw, "b": db}


def one_hot_targets(targets: np.ndarray, n_obs: int) -> np.ndarray:
    targets = np.asarray(targets, dtype=np.int64)
    if (targets < 0).any() or (targets >= n_obs).any():
        raise DomainError("target symbol out of range")
    Y = np.zeros((targets.size, n_obs))
    Y[np.arange(targets.size), targets] = 1.0
    return Y


def train_fusion(
    examples: list[tuple[FusionInput, int]],
    k: int,
    n_obs: int,
    hyper: FusionHyper,
) -> tuple[FusionNetwork, list[float]]:
    """Mini-batch gradient descent; returns the net and per-epoch mean cost."""
    if not examples:
        raise DomainError("need at least one training example")
    preds = np.stack([inp.hmm_preds for inp, _ in examples])
    counts = np.array([inp.count for inp, _ in examples])
    targets = np.array([t for _, t in examples], dtype=np.int64)
    X = encode_batch(preds, counts, n_obs)
    return train_fusion_arrays(X, targets, n_obs, hyper)


def train_fusion_arrays(
    X: np.ndarray, targets: np.ndarray, n_obs: int, hyper: FusionHyper
) -> tuple[FusionNetwork, list[float]]:
    hyper.validate()
    Y = one_hot_targets(targets, n_obs)
    net = init_network(X.shape[1], n_obs, hyper)
    rng = np.random.default_rng(hyper.seed + 1)
    n = X.shape[0]
    trace: list[float] = []
    for epoch in range(hyper.epochs):
        order = rng.permutation(n)
        epoch_costs = []
        for start in range(0, n, hyper.batch):
            idx = order[start : start + hyper.batch]
            cost, grads = cost_and_gradients(net, X[idx], Y[idx])
            if not np.isfinite(cost):
                raise TrainingDivergedError(epoch)
            net.W -= hyper.lr * grads["W"]
            net.c -= hyper.lr * grads["c"]
            net.w -= hyper.lr * grads["w"]
            net.b -= hyper.lr * grads["b"]
            epoch_costs.append(cost)
        trace.append(float(np.mean(epoch_costs)))
    return net, trace


# ---------------------------------------------------------------------------
# Feature importance
# ---------------------------------------------------------------------------

def input_block_weights(net: FusionNetwork, k: int, n_obs: int) -> np.ndarray:
    """Mean absolute input-to-hidden weight per input block.

    Blocks 0..k-1 are the one-hot prediction groups; block k is the scalar
    count feature.
    """
    masses = np.empty(k + 1)
    for i in range(k):
        masses[i] = np.abs(net.W[i * n_obs : (i + 1) * n_obs, :]).mean()
    masses[k] = np.abs(net.W[-1, :]).mean()
    return masses


@dataclass
class FeatureImportance:
    name: str
    weight: float
    std: float


def feature_importance(
    X: np.ndarray,
    targets: np.ndarray,
    k: int,
    n_obs: int,
    hyper: FusionHyper,
    feature_names: list[str],
    n_retrain: int = 5,
) -> list[FeatureImportance]:
    """Block weight mass averaged over seeded retrainings, highest first.

    feature_names must list the K model features in block order; the count
    feature is appended automatically.
    """
    if len(feature_names) != k:
        raise DomainError("need one feature name per prediction block")
    all_masses = []
    for i in range(n_retrain):
        run = FusionHyper(**{**hyper.__dict__, "seed": hyper.seed + i})
        net, _ = train_fusion_arrays(X, targets, n_obs, run)
        all_masses.append(input_block_weights(net, k, n_obs))
    stacked = np.stack(all_masses)
    means = stacked.mean(axis=0)
    stds = stacked.std(axis=0)
    names = list(feature_names) + ["count"]
    rows = [
        FeatureImportance(name=names[i], weight=float(means[i]), std=float(stds[i]))
        for i in range(k + 1)
    ]
    rows.sort(key=lambda r: (-r.weight, r.name))
    return rows


def format_importance_report(rows: list[FeatureImportance]) -> str:
    lines = ["weight\tfeature"]
    for r in rows:
        lines.append(f"{r.weight:.4f} ± {r.std:.4f}\t{r.name}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

FUSION_SCHEMA = "fhmm-fusion/1"


def fusion_to_doc(net: FusionNetwork) -> dict:
    return {
        "schema": FUSION_SCHEMA,
        "loss": net.loss,
        "l2": serialize.fmt_float(net.l2),
        "lr": serialize.fmt_float(net.lr),
        "W": serialize.array_to_doc(net.W),
        "c": serialize.array_to_doc(net.c),
        "w": serialize.array_to_doc(net.w),
        "b": serialize.array_to_doc(net.b),
    }


def fusion_from_doc(doc: dict) -> FusionNetwork:
    if doc.get("schema") != FUSION_SCHEMA:
        raise DomainError(f"unexpected fusion schema {doc.get('schema')!r}")
    return FusionNetwork(
        W=serialize.array_from_doc(doc["W"]),
        c=serialize.array_from_doc(doc["c"]),
        w=serialize.array_from_doc(doc["w"]),
        b=serialize.array_from_doc(doc["b"]),
        l2=float(doc["l2"]),
        lr=float(doc["lr"]),
        loss=doc["loss"],
    )


def save_fusion(net: FusionNetwork, path) -> None:
    serialize.write_doc(path, fusion_to_doc(net))


def load_fusion(path) -> FusionNetwork:
    return fusion_from_doc(serialize.read_doc(path))
