"""Parameter vectors, gradient updates and node-local views.

All numerical state is float64. A :class:`ModelState` is treated as an
immutable value: :func:`apply_update` returns a new state instead of
mutating its argument, and node-local views are snapshots taken at sync
time rather than references to the server copy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, LifecycleError

__all__ = [
    "ModelState",
    "Update",
    "NodeState",
    "apply_update",
    "read_my_writes_view",
    "UpdateLog",
]


def _frozen(a) -> np.ndarray:
    """Private read-only float64 copy, so snapshots cannot be mutated
    through an alias."""
    out = np.array(a, dtype=np.float64)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class ModelState:
    """A versioned parameter vector.

    ``version`` counts how many updates have been folded into ``params``.
    """

    params: np.ndarray
    version: int = 0

    def __post_init__(self):
        params = _frozen(self.params)
        if params.ndim != 1:
            raise ConfigError("params must be a 1-d vector", "params")
        if self.version < 0:
            raise ConfigError("version must be nonnegative", "version")
        object.__setattr__(self, "params", params)

    @classmethod
    def zeros(cls, dim: int) -> "ModelState":
        if dim <= 0:
            raise ConfigError("model dimension must be positive", "model_dim")
        return cls(np.zeros(dim), 0)

    @property
    def dim(self) -> int:
        return self.params.shape[0]

    def copy(self) -> "ModelState":
        return ModelState(self.params.copy(), self.version)


@dataclass(frozen=True)
class Update:
    """A pre-scaled additive delta committed by ``origin_node`` after
    finishing step ``origin_step``."""

    delta: np.ndarray
    origin_node: int
    origin_step: int

    def __post_init__(self):
        object.__setattr__(self, "delta", _frozen(self.delta))
        if self.origin_step < 0:
            raise ConfigError("origin_step must be nonnegative", "origin_step")


@dataclass
class NodeState:
    """Per-node bookkeeping.

    ``counter`` is the number of completed computation steps.
    ``last_synced_version`` is the server version the local view was copied
    from and ``last_commit_version`` the server version produced by this
    node's latest own update; read-my-writes holds as long as the former
    never falls below the latter.
    """

    id: int
    counter: int = 0
    local_model: ModelState | None = None
    last_synced_version: int = 0
    speed_factor: float = 1.0
    live: bool = True
    last_commit_version: int = 0

    def __post_init__(self):
        if self.speed_factor <= 0:
            raise ConfigError("speed_factor must be positive", "speed_factor")


def apply_update(model: ModelState, u: Update) -> ModelState:
    """Return ``model`` with ``u.delta`` added element-wise and the version
    bumped by one."""
    if u.delta.shape != model.params.shape:
        raise ConfigError(
            f"update has dimension {u.delta.shape[0] if u.delta.ndim else 0}, "
            f"model has {model.dim}",
            "delta",
        )
    return ModelState(model.params + u.delta, model.version + 1)


class UpdateLog:
    """Append-only record of committed updates, in commit order.

    The engine does not need it (the server folds updates in place); it
    exists so a view can be rebuilt by replay and checked against what the
    engine handed a node.
    """

    def __init__(self, dim: int):
        self.dim = dim
        self.updates: list[Update] = []

    def __len__(self):
        return len(self.updates)

    def append(self, u: Update) -> int:
        if u.delta.shape != (self.dim,):
            raise ConfigError("update dimension does not match log", "delta")
        self.updates.append(u)
        return len(self.updates)

    def replay(self, upto: int | None = None, include=None) -> ModelState:
        """Fold the first ``upto`` updates (all by default) into a zero
        model, optionally restricted to those where ``include(u)`` holds."""
        model = ModelState.zeros(self.dim)
        for u in self.updates[:upto]:
            if include is None or include(u):
                model = apply_update(model, u)
        return model


def read_my_writes_view(node: NodeState, engine_state: ModelState | UpdateLog,
                        visible_version: int | None = None) -> ModelState:
    """Model view a node is allowed to read.

    ``engine_state`` is either the server's current model or an
    :class:`UpdateLog`. With a model, the view is a snapshot of it: the
    server folds every commit in immediately, so own writes are always
    present. With a log, the view holds every update up to
    ``visible_version`` (the barrier policy's cut, default: everything)
    plus every later update committed by ``node`` itself.
    """
    if not node.live:
        raise LifecycleError(f"node {node.id} is not live")
    if isinstance(engine_state, ModelState):
        return engine_state.copy()
    cut = len(engine_state) if visible_version is None else visible_version
    model = ModelState.zeros(engine_state.dim)
    for i, u in enumerate(engine_state.updates):
        if i < cut or u.origin_node == node.id:
            model = apply_update(model, u)
    return model
