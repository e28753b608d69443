"""Per-step computations performed by simulated nodes.

Two workloads are provided:

* :class:`LinearTask` -- minibatch SGD on a synthetic linear regression
  problem. Each node owns an i.i.d. slice of data; an update is the
  gradient step already multiplied by the learning rate, so the server
  only ever adds deltas.
* :class:`AggregationTask` -- each node summarises a fresh batch of
  scalar readings per step and the server folds the summaries into a
  running global count/mean/M2 with :func:`merge_summaries`.

Variances are population variances (``m2 / count``).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError
from .model import ModelState, NodeState, Update, apply_update

__all__ = [
    "squared_loss_gradient",
    "loss",
    "LinearTask",
    "sgd_gradient_step",
    "SummaryStat",
    "local_summary",
    "merge_summaries",
    "tree_merge",
    "AggregationTask",
    "lipschitz_constant",
    "least_squares_optimum",
]

# spawn-key tags for the task's random substreams
_TRUTH, _DATA = 101, 102


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def squared_loss_gradient(w: np.ndarray, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Gradient of ``0.5 * mean((X @ w - y)**2)`` with respect to ``w``."""
    return ((X @ w - y) @ X) / X.shape[0]


def loss(model, dataset) -> float:
    """Half mean squared error of ``model`` on ``dataset = (X, y)``."""
    X, y = dataset
    if len(y) == 0:
        raise ConfigError("empty dataset", "dataset")
    w = model.params if isinstance(model, ModelState) else np.asarray(model)
    r = X @ w - y
    return 0.5 * float(r @ r) / len(y)


def lipschitz_constant(X: np.ndarray) -> float:
    """Largest eigenvalue of the design covariance ``X.T X / n``."""
    return float(np.linalg.eigvalsh(X.T @ X / X.shape[0])[-1])


def least_squares_optimum(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Normal-equations solution on the given data."""
    return np.linalg.solve(X.T @ X, X.T @ y)


class LinearTask:
    """Synthetic linear regression split across nodes.

    Inputs are standard normal, targets are ``x @ true_weights`` plus
    Gaussian noise. ``true_weights`` is drawn with variance ``1/dim`` so
    targets have roughly unit scale regardless of dimension. A node's data
    depends only on ``(seed, node)`` and is generated on first use.
    """

    name = "sgd"

    def __init__(self, dim: int = 1000, learning_rate: float = 0.01,
                 batch_size: int = 16, noise_sigma: float = 0.1,
                 samples_per_node: int = 100, seed: int = 0):
        if dim <= 0:
            raise ConfigError("must be positive", "model_dim")
        if learning_rate <= 0:
            raise ConfigError("must be positive", "learning_rate")
        if batch_size <= 0:
            raise ConfigError("must be positive", "batch_size")
        if noise_sigma < 0:
            raise ConfigError("must be nonnegative", "noise_sigma")
        if samples_per_node <= 0:
            raise ConfigError("every node needs local data", "samples_per_node")
        self.dim = dim
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.noise_sigma = noise_sigma
        self.samples_per_node = samples_per_node
        self.seed = seed
        self.true_weights = _stream(seed, _TRUTH).standard_normal(dim) / np.sqrt(dim)
        self._data: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    def local_data(self, node: int) -> tuple[np.ndarray, np.ndarray]:
        data = self._data.get(node)
        if data is None:
            rng = _stream(self.seed, _DATA, node)
            X = rng.standard_normal((self.samples_per_node, self.dim))
            y = X @ self.true_weights
            if self.noise_sigma > 0:
                y = y + self.noise_sigma * rng.standard_normal(self.samples_per_node)
            data = self._data[node] = (X, y)
        return data

    def pooled_data(self, nodes: Iterable[int]) -> tuple[np.ndarray, np.ndarray]:
        parts = [self.local_data(n) for n in nodes]
        return np.vstack([p[0] for p in parts]), np.concatenate([p[1] for p in parts])

    # engine hooks

    def initial_model(self) -> ModelState:
        return ModelState.zeros(self.dim)

    def compute(self, view: ModelState, node: NodeState, rng) -> Update:
        return sgd_gradient_step(view, self, node, rng)

    def commit(self, model: ModelState, u: Update) -> ModelState:
        return apply_update(model, u)

    def evaluate(self, model: ModelState, nodes: Sequence[int]) -> float:
        total, count = 0.0, 0
        for n in nodes:
            X, y = self.local_data(n)
            total += 2.0 * len(y) * loss(model, (X, y))
            count += len(y)
        return 0.5 * total / count


def sgd_gradient_step(model: ModelState, task: LinearTask, node: NodeState | int,
                      rng: np.random.Generator) -> Update:
    """One minibatch SGD step on ``node``'s local data against ``model``.

    Returns the delta ``-lr * grad``, tagged with the node's current
    counter. Minibatch rows are drawn with replacement.
    """
    node_id = node.id if isinstance(node, NodeState) else int(node)
    step = node.counter if isinstance(node, NodeState) else 0
    X, y = task.local_data(node_id)
    if len(y) == 0:
        raise ConfigError("node has no local data", "samples_per_node")
    # floor(u * n) is uniform on range(n) and much cheaper than rng.integers
    idx = (rng.random(task.batch_size) * len(y)).astype(np.intp)
    grad = squared_loss_gradient(model.params, X.take(idx, 0), y.take(idx))
    return Update(-task.learning_rate * grad, node_id, step)


@dataclass(frozen=True)
class SummaryStat:
    count: int = 0
    mean: float = 0.0
    m2: float = 0.0

    @property
    def variance(self) -> float:
        """Population variance; 0 for an empty summary."""
        return self.m2 / self.count if self.count else 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.count, self.mean, self.m2], dtype=np.float64)

    @classmethod
    def from_array(cls, a) -> "SummaryStat":
        return cls(int(round(a[0])), float(a[1]), float(a[2]))


def local_summary(values: Iterable[float]) -> SummaryStat:
    """Single pass Welford accumulation."""
    n, mean, m2 = 0, 0.0, 0.0
    for x in values:
        n += 1
        d = x - mean
        mean += d / n
        m2 += d * (x - mean)
    return SummaryStat(n, float(mean), float(max(m2, 0.0)))


def merge_summaries(a: SummaryStat, b: SummaryStat) -> SummaryStat:
    """Combine two summaries as if their samples had been pooled."""
    if a.count == 0:
        return b
    if b.count == 0:
        return a
    n = a.count + b.count
    delta = b.mean - a.mean
    mean = a.mean + delta * (b.count / n)
    m2 = a.m2 + b.m2 + delta * delta * (a.count * b.count / n)
    return SummaryStat(n, mean, m2)


def tree_merge(summaries: Sequence[SummaryStat]) -> SummaryStat:
    """Pairwise (balanced) reduction with :func:`merge_summaries`."""
    level = list(summaries)
    if not level:
        return SummaryStat()
    while len(level) > 1:
        nxt = [merge_summaries(level[i], level[i + 1])
               for i in range(0, len(level) - 1, 2)]
        if len(level) % 2:
            nxt.append(level[-1])
        level = nxt
    return level[0]


class AggregationTask:
    """Distributed mean/variance of per-node reading streams.

    Node ``i`` produces readings ``N(mu_i, reading_sigma)`` where ``mu_i``
    is drawn once per node from ``N(center, spread)``. Each step a node
    summarises ``batch_size`` fresh readings and commits the summary; the
    server state is the packed ``[count, mean, m2]`` of everything merged so
    far. ``evaluate`` reports how far the running mean is from the
    unweighted average of node means.
    """

    name = "aggregation"

    def __init__(self, batch_size: int = 16, center: float = 10.0,
                 spread: float = 2.0, reading_sigma: float = 1.0, seed: int = 0):
        if batch_size <= 0:
            raise ConfigError("must be positive", "batch_size")
        self.batch_size = batch_size
        self.center = center
        self.spread = spread
        self.reading_sigma = reading_sigma
        self.seed = seed
        self._means: dict[int, float] = {}

    def node_mean(self, node: int) -> float:
        mu = self._means.get(node)
        if mu is None:
            rng = _stream(self.seed, _DATA, node)
            mu = self._means[node] = float(self.center + self.spread * rng.standard_normal())
        return mu

    def readings(self, node: int, rng: np.random.Generator) -> np.ndarray:
        return self.node_mean(node) + self.reading_sigma * rng.standard_normal(self.batch_size)

    def initial_model(self) -> ModelState:
        return ModelState(np.zeros(3), 0)

    def compute(self, view: ModelState, node: NodeState, rng) -> Update:
        stat = local_summary(self.readings(node.id, rng).tolist())
        return Update(stat.as_array(), node.id, node.counter)

    def commit(self, model: ModelState, u: Update) -> ModelState:
        merged = merge_summaries(SummaryStat.from_array(model.params),
                                 SummaryStat.from_array(u.delta))
        return ModelState(merged.as_array(), model.version + 1)

    def evaluate(self, model: ModelState, nodes: Sequence[int]) -> float:
        stat = SummaryStat.from_array(model.params)
        if stat.count == 0 or not nodes:
            return float("nan")
        target = float(np.mean([self.node_mean(n) for n in nodes]))
        return abs(stat.mean - target)
