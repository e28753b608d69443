"""Output record of a simulated run."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

from .config import SimConfig
from .model import ModelState


class NodeFinal(NamedTuple):
    node: int
    counter: int
    blocked_time: float
    live: bool


class AuditRow(NamedTuple):
    """One admission into a new iteration.

    ``view_lag`` is the admitted node's counter minus the smallest counter
    in the view the decision consulted (``None`` for an empty sample);
    ``global_lag`` is the same against every live node. ``bound`` is the
    policy's admissible lag.
    """

    time: float
    node: int
    counter: int
    view_lag: int | None
    global_lag: int
    bound: int


class EventRecord(NamedTuple):
    """``version`` is the server version when the record is written (before
    the commit for StepComplete). ``admitted`` is set on admission checks."""

    time: float
    seq: int
    kind: str
    node: int
    counter: int
    version: int
    admitted: bool | None = None


@dataclass
class RunTrace:
    config: SimConfig
    config_fingerprint: str
    per_node_final: list[NodeFinal]
    staleness_audits: list[AuditRow] = field(default_factory=list)
    loss_curve: list[tuple[float, float]] = field(default_factory=list)
    membership_curve: list[tuple[float, int]] = field(default_factory=list)
    events: list[EventRecord] | None = None
    final_model: ModelState | None = None
    total_commits: int = 0
    max_spread: int = 0
    liveness_violations: int = 0
    own_write_violations: int = 0
    population_exhausted: bool = False
    end_time: float = 0.0

    @property
    def live_counters(self) -> list[int]:
        return [r.counter for r in self.per_node_final if r.live]

    @property
    def staleness_violations(self) -> int:
        return sum(1 for a in self.staleness_audits
                   if a.view_lag is not None and a.view_lag > a.bound)
