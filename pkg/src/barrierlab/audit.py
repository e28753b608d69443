"""Post-hoc checks of barrier guarantees, on traces or exported run
directories."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

from .barrier import Method
from .trace import RunTrace

__all__ = ["AuditReport", "audit_trace", "audit_run_dir", "audit_tree"]


@dataclass
class AuditReport:
    source: str = ""
    staleness_violations: int = 0
    lockstep_violations: int = 0
    liveness_violations: int = 0
    own_write_violations: int = 0
    notes: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not (self.staleness_violations or self.lockstep_violations
                    or self.liveness_violations or self.own_write_violations)


def _lockstep_applies(method: Method) -> bool:
    return method is Method.BSP


def audit_trace(trace: RunTrace) -> AuditReport:
    """Staleness: every admission respected the policy bound on the view it
    consulted. Lockstep (BSP only): live counters never spread by more
    than one. Liveness and own-write counts come from the engine."""
    policy = trace.config.effective_policy
    rep = AuditReport(source="trace")
    rep.staleness_violations = trace.staleness_violations
    if _lockstep_applies(policy.method) and trace.max_spread > 1:
        rep.lockstep_violations = 1
    rep.liveness_violations = trace.liveness_violations
    rep.own_write_violations = trace.own_write_violations
    return rep


def audit_run_dir(path) -> AuditReport:
    """Audit one exported run directory (needs ``meta.json`` and
    ``audit.csv``). Staleness is recomputed from the audit rows."""
    path = Path(path)
    meta = json.loads((path / "meta.json").read_text())
    rep = AuditReport(source=str(path))
    with open(path / "audit.csv", newline="") as f:
        for row in csv.DictReader(f):
            if row["view_lag"] == "" or row["bound"] == "":
                continue
            if int(row["view_lag"]) > int(row["bound"]):
                rep.staleness_violations += 1
    if meta["policy"] == "bsp" and meta["max_spread"] > 1:
        rep.lockstep_violations = 1
    rep.liveness_violations = int(meta["liveness_violations"])
    rep.own_write_violations = int(meta["own_write_violations"])
    return rep


def audit_tree(root) -> list[AuditReport]:
    """Audit every run directory (anything holding a ``meta.json`` next to
    an ``audit.csv``) below ``root``."""
    root = Path(root)
    reports = []
    for meta in sorted(root.rglob("meta.json")):
        if (meta.parent / "audit.csv").exists():
            reports.append(audit_run_dir(meta.parent))
    return reports
