"""Command line entry point.

Subcommands::

    barrierlab run             one policy, one or more seeds
    barrierlab sweep           one policy, a parameter list x seeds -> sweep.csv
    barrierlab reproduce-fig84 five-policy comparison plus the pBSP sample sweep
    barrierlab audit DIR       check every run directory under DIR

Configuration is layered: ``--config`` file, then ``--set key=value``
overrides, then the dedicated flags. Exit status is 2 for invalid
configuration, 3 for I/O failures and 1 when ``audit`` finds a violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .audit import audit_tree
from .barrier import make_policy
from .config import SimConfig, apply_overrides, load_config
from .errors import ConfigError
from .metrics import (SweepRow, progress_summary, run_many, sweep, write_csv,
                      write_run, write_sweep)

log = logging.getLogger("barrierlab")

FIG84_POLICIES = ("bsp", "ssp", "pbsp", "pssp", "asp")
FIG84_SAMPLE_SIZES = (0, 1, 2, 4, 8, 16, 32, 64)

# argparse runs ``type`` on string defaults, so "not given" needs an object
_UNSET = object()


def parse_seeds(text: str) -> list[int]:
    """``"7"``, ``"1,3,5"``, ``"1..10"`` or mixtures like ``"1..3,9"``."""
    seeds: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            if ".." in part:
                lo, hi = part.split("..", 1)
                lo, hi = int(lo), int(hi)
                if hi < lo:
                    raise ValueError
                seeds.extend(range(lo, hi + 1))
            else:
                seeds.append(int(part))
        except ValueError:
            raise ConfigError(f"bad seed spec {part!r}", "seeds") from None
    if not seeds:
        raise ConfigError("no seeds given", "seeds")
    return seeds


def _parse_staleness(text: str):
    if text.strip().lower() in ("inf", "infinity", "unbounded", "none"):
        return None
    return int(text)


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="INI config file")
    p.add_argument("--set", dest="overrides", action="append", default=[],
                   metavar="KEY=VALUE", help="config override, e.g. policy.staleness=2")
    p.add_argument("--policy", choices=("bsp", "asp", "ssp", "pbsp", "pssp"))
    p.add_argument("--staleness", type=_parse_staleness, default=_UNSET,
                   help="SSP/pSSP staleness; 'inf' for unbounded")
    p.add_argument("--sample-size", type=int, help="pBSP/pSSP sample size")
    p.add_argument("--inner", choices=("bsp", "ssp"))
    p.add_argument("--placement", choices=("centralised", "distributed"))
    p.add_argument("--nodes", type=int)
    p.add_argument("--duration", type=float)
    p.add_argument("--model-dim", type=int)
    p.add_argument("--workload", choices=("sgd", "aggregation"))
    p.add_argument("--churn-leave", type=float)
    p.add_argument("--churn-join", type=float)
    seed = p.add_mutually_exclusive_group()
    seed.add_argument("--seed", type=int)
    seed.add_argument("--seeds", type=parse_seeds)
    p.add_argument("--outdir", default=os.environ.get("BARRIERLAB_OUTDIR", "runs"))
    p.add_argument("--keep-events", action="store_true")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")


def build_config(args) -> SimConfig:
    base = load_config(args.config) if args.config else {}
    d = apply_overrides(base, args.overrides)
    pol = d.setdefault("policy", {})
    if args.policy:
        pol.clear()
        pol["name"] = args.policy
    flags = {"num_nodes": args.nodes, "duration": args.duration,
             "model_dim": args.model_dim, "workload": args.workload,
             "state_placement": args.placement}
    for k, v in flags.items():
        if v is not None:
            d[k] = v
    if args.churn_leave is not None or args.churn_join is not None:
        churn = d.setdefault("churn", {})
        if args.churn_leave is not None:
            churn["leave_rate"] = args.churn_leave
        if args.churn_join is not None:
            churn["join_rate"] = args.churn_join
    if args.keep_events:
        d["keep_events"] = True
    cfg = SimConfig.from_dict(d)
    name = cfg.policy.name
    if args.inner:
        if name not in ("pbsp", "pssp"):
            raise ConfigError("only applies to pbsp/pssp", "inner")
        name = "p" + args.inner
    if name != cfg.policy.name or args.staleness is not _UNSET or args.sample_size is not None:
        p = cfg.policy
        policy = make_policy(
            name,
            staleness=args.staleness if args.staleness is not _UNSET else (
                p.staleness if name == p.name else "default"),
            sample_size=args.sample_size if args.sample_size is not None else p.sample_size,
            sample_include_self=p.sample_include_self,
            sample_with_replacement=p.sample_with_replacement)
        cfg = replace(cfg, policy=policy)
    return cfg


def _seeds(args, cfg: SimConfig) -> list[int]:
    if args.seeds:
        return args.seeds
    if args.seed is not None:
        return [args.seed]
    return [cfg.master_seed]


def runid(cfg: SimConfig) -> str:
    p = cfg.effective_policy
    parts = [p.name]
    if p.bound is not None and p.name in ("ssp", "pssp"):
        parts.append(f"s{p.staleness}")
    if p.is_probabilistic:
        parts.append(f"b{p.sample_size}")
    parts.append(f"seed{cfg.master_seed}")
    return "-".join(parts)


def cmd_run(args) -> int:
    cfg = build_config(args)
    configs = [replace(cfg, master_seed=s) for s in _seeds(args, cfg)]
    traces = run_many(configs, args.jobs)
    for c, tr in zip(configs, traces):
        d = write_run(tr, args.outdir, runid(c))
        st = progress_summary(tr) if tr.live_counters else {}
        print(f"{d}: mean={st.get('mean', float('nan')):.3f} "
              f"std={st.get('std', float('nan')):.3f}")
    return 0


def _parse_values(text: str, parameter: str) -> list:
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if parameter == "staleness":
            out.append(_parse_staleness(part))
        else:
            try:
                out.append(int(part))
            except ValueError:
                out.append(float(part))
    return out


def cmd_sweep(args) -> int:
    cfg = build_config(args)
    values = _parse_values(args.values, args.param)
    seeds = _seeds(args, cfg)
    rows = sweep(cfg, None, values, seeds, parameter=args.param, jobs=args.jobs)
    d = Path(args.outdir) / f"sweep-{cfg.policy.name}-{args.param}"
    write_sweep(rows, d / "sweep.csv")
    meta = {"library": "barrierlab", "version": __version__, "config": cfg.to_dict(),
            "config_fingerprint": cfg.fingerprint(), "parameter": args.param,
            "values": values, "seeds": seeds}
    (d / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    print(d / "sweep.csv")
    return 0


def fig84_base(cfg: SimConfig, explicit_lr: bool) -> SimConfig:
    """Grid defaults. Learning rate 1/N keeps the summed per-round step
    bounded as the population grows."""
    if not explicit_lr:
        cfg = replace(cfg, task=replace(cfg.task, learning_rate=1.0 / cfg.num_nodes))
    return cfg


def cmd_reproduce(args) -> int:
    if args.nodes is None:
        args.nodes = 1000
    if args.duration is None:
        args.duration = 40.0
    cfg = build_config(args)
    explicit_lr = any(o.split("=", 1)[0].strip() == "task.learning_rate" for o in args.overrides)
    cfg = fig84_base(cfg, explicit_lr)
    seeds = _seeds(args, cfg)
    out = Path(args.outdir)

    configs = []
    for s in seeds:
        for name in FIG84_POLICIES:
            configs.append(replace(cfg, policy=make_policy(name), master_seed=s))
    for beta in FIG84_SAMPLE_SIZES:
        for s in seeds:
            configs.append(replace(cfg, policy=make_policy("pbsp", sample_size=beta),
                                   master_seed=s))
    traces = run_many(configs, args.jobs)
    n_a = len(seeds) * len(FIG84_POLICIES)

    summary = []
    for c, tr in zip(configs[:n_a], traces[:n_a]):
        write_run(tr, out / "fig84a", runid(c))
        st = progress_summary(tr)
        summary.append((c.effective_policy.name, c.master_seed, st["mean"], st["std"],
                        st["min"], st["max"]))
    write_csv(out / "fig84a" / "summary.csv",
              ("policy", "seed", "mean", "std", "min", "max"), summary)

    rows = []
    for c, tr in zip(configs[n_a:], traces[n_a:]):
        write_run(tr, out / "fig84c", runid(c))
        st = progress_summary(tr)
        rows.append(SweepRow("sample_size", c.effective_policy.sample_size, c.master_seed,
                             st["mean"], st["std"], st["min"], st["max"]))
    write_sweep(rows, out / "fig84c" / "sweep.csv")
    print(out / "fig84a" / "summary.csv")
    print(out / "fig84c" / "sweep.csv")
    return 0


def cmd_audit(args) -> int:
    reports = audit_tree(args.directory)
    if not reports:
        print(f"no run directories under {args.directory}", file=sys.stderr)
        return 2
    bad = 0
    for r in reports:
        status = "ok" if r.ok else "VIOLATION"
        print(f"{status} {r.source} staleness={r.staleness_violations} "
              f"lockstep={r.lockstep_violations} liveness={r.liveness_violations} "
              f"own_write={r.own_write_violations}")
        bad += not r.ok
    return 1 if bad else 0


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="barrierlab",
        description="Simulate barrier-control strategies for distributed SGD.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate one policy")
    _common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="sweep a parameter over seeds")
    _common(p)
    p.add_argument("--param", default="sample_size",
                   help="sample_size, staleness, or a top-level config key")
    p.add_argument("--values", default="0,1,2,4,8,16,32,64")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("reproduce-fig84", help="five-policy comparison and pBSP sweep")
    _common(p)
    p.set_defaults(func=cmd_reproduce)

    p = sub.add_parser("audit", help="check staleness/lockstep/liveness of run dirs")
    p.add_argument("directory")
    p.set_defaults(func=cmd_audit)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"barrierlab: invalid configuration: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"barrierlab: I/O error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
