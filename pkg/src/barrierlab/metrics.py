"""Progress distributions, CDFs, parameter sweeps and file export.

Files written for a run directory ``<outdir>/<runid>/``:

``progress.csv``   node, counter, blocked_time, live (one row per node ever live)
``cdf.csv``        step, fraction (empirical CDF of live nodes' counters)
``loss.csv``       time, loss
``membership.csv`` time, live
``audit.csv``      time, node, counter, view_lag, global_lag, bound
``events.csv``     only when the run kept its event log
``meta.json``      config echo, fingerprint, seed, version, audit summary

Floats are written with 17 significant digits and every writer is a pure
function of its input, so identical traces give byte-identical files.
"""

from __future__ import annotations

import csv
import io
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .config import SimConfig
from .engine import run
from .errors import ConfigError
from .trace import RunTrace

__all__ = [
    "progress_histogram",
    "progress_cdf",
    "cdf_distance",
    "progress_summary",
    "SweepRow",
    "sweep",
    "run_many",
    "format_value",
    "write_csv",
    "progress_rows",
    "write_run",
    "write_sweep",
    "meta_dict",
]

VARIANCE_CONVENTION = "population (ddof=0)"


def _counters(trace_or_counters) -> np.ndarray:
    if isinstance(trace_or_counters, RunTrace):
        return np.asarray(trace_or_counters.live_counters, dtype=np.int64)
    return np.asarray(list(trace_or_counters), dtype=np.int64)


def progress_histogram(trace, bin_width: int = 1) -> list[tuple[int, int]]:
    """Counts of final counters of live nodes, as ``(bin_start, count)``.

    Bins are ``[k*bin_width, (k+1)*bin_width)`` from the lowest occupied bin
    to the highest; empty bins in between are kept.
    """
    if bin_width <= 0:
        raise ConfigError("must be > 0", "bin_width")
    c = _counters(trace)
    if c.size == 0:
        return []
    bins = c // bin_width
    lo = int(bins.min())
    counts = np.bincount(bins - lo)
    return [((lo + i) * bin_width, int(n)) for i, n in enumerate(counts)]


def progress_cdf(trace) -> list[tuple[int, float]]:
    """Empirical CDF of final progress: ``(step, fraction of nodes <= step)``
    at each distinct step value."""
    c = _counters(trace)
    if c.size == 0:
        raise ConfigError("no live nodes", "trace")
    steps, counts = np.unique(c, return_counts=True)
    frac = np.cumsum(counts) / c.size
    frac[-1] = 1.0
    return [(int(s), float(f)) for s, f in zip(steps, frac)]


def cdf_distance(a, b) -> float:
    """Sup-norm distance between the empirical CDFs of two progress
    samples (traces or counter lists)."""
    a = np.sort(_counters(a))
    b = np.sort(_counters(b))
    pts = np.union1d(a, b)
    fa = np.searchsorted(a, pts, side="right") / a.size
    fb = np.searchsorted(b, pts, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def progress_summary(trace) -> dict:
    c = _counters(trace).astype(np.float64)
    return {"mean": float(c.mean()), "std": float(c.std()),
            "min": int(c.min()), "max": int(c.max())}


class SweepRow(NamedTuple):
    parameter: str
    value: object
    seed: int
    mean: float
    std: float
    min: int
    max: int


_SWEEPABLE = {"sample_size", "staleness"}


def _sweep_config(config: SimConfig, family: str | None, parameter: str, value, seed: int):
    from .barrier import make_policy
    policy = config.policy
    if family is not None:
        policy = make_policy(family,
                             sample_include_self=policy.sample_include_self,
                             sample_with_replacement=policy.sample_with_replacement)
    if parameter in _SWEEPABLE:
        policy = replace(policy, **{parameter: value})
        return replace(config, policy=policy, master_seed=seed)
    return replace(config, policy=policy, master_seed=seed, **{parameter: value})


def _summary_task(cfg: SimConfig):
    tr = run(cfg)
    return progress_summary(tr)


def run_many(configs: Sequence[SimConfig], jobs: int = 1, fn=run) -> list:
    """Run independent configs, optionally in a process pool. Results are
    returned in input order."""
    if jobs <= 1 or len(configs) <= 1:
        return [fn(c) for c in configs]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, configs))


def sweep(config: SimConfig, family: str | None, values: Iterable, seeds: Iterable[int],
          parameter: str = "sample_size", jobs: int = 1) -> list[SweepRow]:
    """Final-progress statistics for every ``(value, seed)`` pair.

    ``family`` names the policy to sweep (``"pbsp"``, ``"ssp"``, ...); with
    ``None`` the config's own policy is used. ``parameter`` is a policy
    field (``sample_size``/``staleness``) or a top-level config field.
    Rows are ordered by value, then seed.
    """
    values = list(values)
    seeds = list(seeds)
    if not seeds:
        raise ConfigError("need at least one seed", "seeds")
    keys = [(v, s) for v in values for s in seeds]
    configs = [_sweep_config(config, family, parameter, v, s) for v, s in keys]
    stats = run_many(configs, jobs, _summary_task)
    return [SweepRow(parameter, v, s, st["mean"], st["std"], st["min"], st["max"])
            for (v, s), st in zip(keys, stats)]


# file output

def format_value(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([format_value(v) for v in r])
    Path(path).write_text(buf.getvalue())


def progress_rows(trace: RunTrace):
    return [(r.node, r.counter, r.blocked_time, r.live) for r in trace.per_node_final]


def meta_dict(trace: RunTrace) -> dict:
    from . import __version__
    from .audit import audit_trace
    cfg = trace.config
    report = audit_trace(trace)
    return {
        "library": "barrierlab",
        "version": __version__,
        "config": cfg.to_dict(),
        "config_fingerprint": trace.config_fingerprint,
        "master_seed": cfg.master_seed,
        "policy": cfg.effective_policy.name,
        "effective_sample_size": cfg.effective_policy.sample_size,
        "effective_state_placement": cfg.effective_placement,
        "variance_convention": VARIANCE_CONVENTION,
        "num_nodes_ever": len(trace.per_node_final),
        "num_live_final": len(trace.live_counters),
        "total_commits": trace.total_commits,
        "final_version": trace.final_model.version if trace.final_model is not None else None,
        "end_time": trace.end_time,
        "population_exhausted": trace.population_exhausted,
        "max_spread": trace.max_spread,
        "staleness_violations": report.staleness_violations,
        "lockstep_violations": report.lockstep_violations,
        "liveness_violations": trace.liveness_violations,
        "own_write_violations": trace.own_write_violations,
        "progress": progress_summary(trace) if trace.live_counters else None,
    }


def write_run(trace: RunTrace, outdir, runid: str) -> Path:
    """Write every per-run file for ``trace`` into ``outdir/runid``."""
    d = Path(outdir) / runid
    d.mkdir(parents=True, exist_ok=True)
    write_csv(d / "progress.csv", ("node", "counter", "blocked_time", "live"),
              progress_rows(trace))
    if trace.live_counters:
        write_csv(d / "cdf.csv", ("step", "fraction"), progress_cdf(trace))
    else:
        write_csv(d / "cdf.csv", ("step", "fraction"), [])
    write_csv(d / "loss.csv", ("time", "loss"), trace.loss_curve)
    write_csv(d / "membership.csv", ("time", "live"), trace.membership_curve)
    write_csv(d / "audit.csv",
              ("time", "node", "counter", "view_lag", "global_lag", "bound"),
              trace.staleness_audits)
    if trace.events is not None:
        write_csv(d / "events.csv",
                  ("time", "seq", "kind", "node", "counter", "version", "admitted"),
                  trace.events)
    meta = meta_dict(trace)
    (d / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return d


def write_sweep(rows: Sequence[SweepRow], path) -> None:
    os.makedirs(Path(path).parent, exist_ok=True)
    write_csv(path, ("parameter", "value", "seed", "mean", "std", "min", "max"), rows)
