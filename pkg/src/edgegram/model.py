"""Model state, the skip-gram edge operator, and the learning-rate schedule.

Every node owns two float32 vectors: an embedding row e (read when the node
is the source of an edge) and a training row t (read when it is the
destination). A sample (src, dst, label) is scored with sigmoid(e_src .
t_dst); its loss is -log(1 - |label - prediction|).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernel
from .rng import init_seed

ALPHA_FLOOR_FACTOR = 1e-4
LOSS_CLAMP = 1e-12

SIGMOID_TABLE_SIZE = 1000
SIGMOID_MAX_X = 6.0
_SIGMOID_TABLE: np.ndarray | None = None


@dataclass(frozen=True)
class Sample:
    """One scored edge: positive (label 1) or negative (label 0)."""

    source: int
    destination: int
    label: int


@dataclass
class ModelParams:
    """Training hyperparameters, defaulting to the text configuration."""

    dim: int = 200
    window: int = 5
    negatives: int = 15
    alpha: float = 0.025
    subsample_threshold: float = 1e-4
    epochs: int = 16

    def validate(self) -> None:
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if self.window < 1:
            raise ValueError(f"window must be >= 1, got {self.window}")
        if self.negatives < 0:
            raise ValueError(f"negatives must be >= 0, got {self.negatives}")
        if not (0 < self.alpha):
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.subsample_threshold < 0:
            raise ValueError(
                f"subsample_threshold must be >= 0, got {self.subsample_threshold}"
            )
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")


@dataclass
class Model:
    """Embedding and training matrices, float32, one row per node."""

    embedding: np.ndarray
    training: np.ndarray

    def __post_init__(self) -> None:
        if self.embedding.shape != self.training.shape:
            raise ValueError("embedding and training shapes must match")
        self.embedding = np.ascontiguousarray(self.embedding, dtype=np.float32)
        self.training = np.ascontiguousarray(self.training, dtype=np.float32)

    @property
    def num_nodes(self) -> int:
        return self.embedding.shape[0]

    @property
    def dim(self) -> int:
        return self.embedding.shape[1]

    def copy(self) -> "Model":
        return Model(self.embedding.copy(), self.training.copy())


def init_model(num_nodes: int, dim: int, seed: int) -> Model:
    """Embedding rows uniform in [-0.5/dim, 0.5/dim), training rows zero."""
    rng = np.random.default_rng(init_seed(seed))
    e = ((rng.random((num_nodes, dim)) - 0.5) / dim).astype(np.float32)
    t = np.zeros((num_nodes, dim), dtype=np.float32)
    return Model(e, t)


def sigmoid(x):
    """Exact logistic function, stable for large |x|; used by all tests."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 0:
        xf = float(arr)
        if xf >= 0.0:
            return 1.0 / (1.0 + np.exp(-xf))
        ex = np.exp(xf)
        return ex / (1.0 + ex)
    out = np.empty_like(arr)
    pos = arr >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-arr[pos]))
    ex = np.exp(arr[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_table(x) -> float:
    """Table lookup approximation for the fast path.

    The table spans (-6, 6) with 1000 cells; beyond the clamp the exact
    limit values 0.0 and 1.0 are returned, matching how the reference tool
    treats saturated scores. Training here uses the exact sigmoid; the
    table exists for parity experiments and is not wired into the engine.
    """
    global _SIGMOID_TABLE
    if _SIGMOID_TABLE is None:
        grid = (
            (np.arange(SIGMOID_TABLE_SIZE) + 0.5)
            / SIGMOID_TABLE_SIZE
            * (2 * SIGMOID_MAX_X)
            - SIGMOID_MAX_X
        )
        _SIGMOID_TABLE = 1.0 / (1.0 + np.exp(-grid))
    xv = float(x)
    if xv >= SIGMOID_MAX_X:
        return 1.0
    if xv <= -SIGMOID_MAX_X:
        return 0.0
    idx = int((xv + SIGMOID_MAX_X) / (2 * SIGMOID_MAX_X) * SIGMOID_TABLE_SIZE)
    idx = min(idx, SIGMOID_TABLE_SIZE - 1)
    return float(_SIGMOID_TABLE[idx])


def predict(model: Model, sample: Sample) -> float:
    """sigmoid(e_src . t_dst) in float64."""
    score = float(
        np.dot(
            model.embedding[sample.source].astype(np.float64),
            model.training[sample.destination].astype(np.float64),
        )
    )
    return sigmoid(score)


def sample_loss(model: Model, sample: Sample) -> float:
    """-log(1 - |label - prediction|), clamped away from log(0).

    Zero exactly when the prediction matches the label exactly.
    """
    p = predict(model, sample)
    return -np.log(max(LOSS_CLAMP, 1.0 - abs(sample.label - p)))


def edge_gradient(model: Model, sample: Sample) -> tuple[np.ndarray, np.ndarray]:
    """Loss gradients for one sample, float64.

    Returns (grad_e, grad_t): with p = sigmoid(e_src . t_dst) and residual
    g = p - label, grad_e = g * t_dst and grad_t = g * e_src.
    """
    p = predict(model, sample)
    g = p - float(sample.label)
    grad_e = g * model.training[sample.destination].astype(np.float64)
    grad_t = g * model.embedding[sample.source].astype(np.float64)
    return grad_e, grad_t


_EMPTY_BIT = np.empty(0, dtype=np.bool_)
_EMPTY_SNAP = np.empty((0, 0), dtype=np.float32)
_NO_LOSS = np.zeros(2, dtype=np.float64)
_NO_COUNT = np.zeros(1, dtype=np.int64)


def apply_edge_operator(
    model: Model,
    center: int,
    window_targets,
    negatives,
    alpha: float,
) -> None:
    """Apply one center's window of grouped SGD steps in place.

    window_targets lists the positive destinations in stream order;
    negatives holds one id sequence per target (k entries or fewer when
    collision re-draws gave up). For each target, the positive sample and
    its negatives form one group: training rows update immediately sample
    by sample, the center's embedding update accumulates over the group and
    lands after it, then the next target sees the updated center row.
    """
    if len(negatives) != len(window_targets):
        raise ValueError("need one negative list per window target")
    for target, negs in zip(window_targets, negatives):
        negs_arr = np.asarray(negs, dtype=np.int64)
        kernel.apply_group(
            model.embedding,
            model.training,
            int(center),
            int(target),
            negs_arr,
            len(negs_arr),
            float(alpha),
            False,
            _EMPTY_BIT,
            _EMPTY_BIT,
            _EMPTY_SNAP,
            _EMPTY_SNAP,
            0,
            _NO_LOSS,
            _NO_COUNT,
        )


@dataclass
class LearningRateSchedule:
    """Linear decay from alpha0 toward a fixed floor.

    total_updates is epochs times the total retained occurrences of the
    corpus; the rate for an occurrence processed after `processed` earlier
    ones is max(floor, alpha0 * (1 - processed / (total_updates + 1))).
    """

    alpha0: float
    total_updates: int
    floor: float = field(default=0.0)

    def __post_init__(self) -> None:
        if self.floor == 0.0:
            self.floor = self.alpha0 * ALPHA_FLOOR_FACTOR

    def alpha_at(self, processed: float) -> float:
        alpha = self.alpha0 * (1.0 - processed / (self.total_updates + 1.0))
        return max(self.floor, alpha)


def advance_schedule(sched: LearningRateSchedule, occurrences_processed: float) -> float:
    """Rate in effect after the given number of processed occurrences."""
    return sched.alpha_at(occurrences_processed)


def make_schedule(params: ModelParams, total_occurrences: int) -> LearningRateSchedule:
    return LearningRateSchedule(
        alpha0=params.alpha, total_updates=params.epochs * total_occurrences
    )


def save_embeddings(path: str, tokens, matrix: np.ndarray) -> None:
    """Write the text embedding format: a '<count> <dim>' header, then one
    'token v1 .. vN' line per row. Values round-trip float32 exactly."""
    matrix = np.asarray(matrix)
    if len(tokens) != matrix.shape[0]:
        raise ValueError("token count does not match matrix rows")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{matrix.shape[0]} {matrix.shape[1]}\n")
        for tok, row in zip(tokens, matrix):
            fh.write(tok)
            for v in row:
                fh.write(f" {float(v)!r}")
            fh.write("\n")


def load_embeddings(path: str) -> tuple[list[str], np.ndarray]:
    """Read the text embedding format back into tokens and a float32 matrix."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError(f"{path}: malformed embedding header")
        count, dim = int(header[0]), int(header[1])
        tokens: list[str] = []
        matrix = np.empty((count, dim), dtype=np.float32)
        for i in range(count):
            parts = fh.readline().split()
            if len(parts) != dim + 1:
                raise ValueError(f"{path}: row {i} has {len(parts) - 1} values, want {dim}")
            tokens.append(parts[0])
            matrix[i] = [float(v) for v in parts[1:]]
    return tokens, matrix
