"""Experiment configuration.

A :class:`SimConfig` is a frozen tree of small dataclasses. It converts to
and from a plain nested dict (used for ``meta.json``) and can be read from
an INI-style file with one section per sub-spec::

    [sim]
    num_nodes = 200
    duration = 20

    [policy]
    name = pssp
    staleness = 4
    sample_size = 2

Overrides use dotted keys, e.g. ``policy.sample_size=8`` or
``churn.leave_rate=0.01``; keys of the ``sim`` section may be given bare.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
from dataclasses import dataclass, field, fields, replace
from typing import Any, Mapping

from .barrier import BarrierPolicy, Method, STRATEGIES
from .errors import ConfigError

__all__ = [
    "StepTimeSpec",
    "HeterogeneitySpec",
    "StragglerSpec",
    "ChurnSpec",
    "TaskSpec",
    "SimConfig",
    "policy_to_dict",
    "policy_from_dict",
    "load_config",
    "parse_config_text",
    "apply_overrides",
]

STEP_FAMILIES = ("lognormal", "exponential", "constant")
WORKLOADS = ("sgd", "aggregation")
PLACEMENTS = ("centralised", "distributed")
_UNBOUNDED = ("inf", "infinity", "unbounded", "none", "null")


@dataclass(frozen=True)
class StepTimeSpec:
    """Base duration of one computation step, in simulated seconds.

    For ``lognormal`` the dispersion is the sigma of the log and the
    location is shifted so the mean stays ``mean``.
    """

    family: str = "lognormal"
    mean: float = 0.05
    dispersion: float = 0.25


@dataclass(frozen=True)
class HeterogeneitySpec:
    """Per-node speed factors, log-normal with unit mean."""

    sigma: float = 0.3


@dataclass(frozen=True)
class StragglerSpec:
    fraction: float = 0.02
    slowdown: float = 5.0


@dataclass(frozen=True)
class ChurnSpec:
    """``leave_rate`` is per live node per second. ``join_rate`` is per
    initial node slot per second, so arrivals are Poisson with rate
    ``join_rate * num_nodes``."""

    leave_rate: float = 0.0
    join_rate: float = 0.0

    @property
    def enabled(self) -> bool:
        return self.leave_rate > 0 or self.join_rate > 0


@dataclass(frozen=True)
class TaskSpec:
    learning_rate: float = 0.01
    batch_size: int = 16
    noise_sigma: float = 0.1
    samples_per_node: int = 100


def policy_to_dict(p: BarrierPolicy) -> dict:
    return {
        "name": p.name,
        "staleness": p.staleness,
        "sample_size": p.sample_size,
        "sample_include_self": p.sample_include_self,
        "sample_with_replacement": p.sample_with_replacement,
    }


def policy_from_dict(d: Mapping[str, Any]) -> BarrierPolicy:
    d = dict(d)
    name = str(d.pop("name", "bsp")).lower()
    if name not in STRATEGIES:
        raise ConfigError(f"unknown policy {name!r}", "policy.name")
    base = STRATEGIES[name]
    allowed = {"staleness", "sample_size", "sample_include_self",
               "sample_with_replacement"}
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)}", "policy")
    return replace(base, **d)


@dataclass(frozen=True)
class SimConfig:
    """Full description of one simulated run.

    ``state_placement=None`` picks ``centralised`` for BSP/SSP and
    ``distributed`` for ASP and the probabilistic policies. A ``None``
    sample size on a probabilistic policy means 1% of ``num_nodes`` (at
    least 1). ``retry_backoff=None`` uses the mean step time.
    """

    num_nodes: int = 1000
    duration: float = 40.0
    model_dim: int = 1000
    policy: BarrierPolicy = field(default_factory=lambda: STRATEGIES["bsp"])
    step_time: StepTimeSpec = field(default_factory=StepTimeSpec)
    heterogeneity: HeterogeneitySpec = field(default_factory=HeterogeneitySpec)
    straggler: StragglerSpec = field(default_factory=StragglerSpec)
    churn: ChurnSpec = field(default_factory=ChurnSpec)
    task: TaskSpec = field(default_factory=TaskSpec)
    state_placement: str | None = None
    workload: str = "sgd"
    master_seed: int = 0
    retry_backoff: float | None = None
    loss_interval: float = 1.0
    keep_events: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self):
        if int(self.num_nodes) != self.num_nodes or self.num_nodes < 1:
            raise ConfigError("must be a positive integer", "num_nodes")
        if not self.duration > 0:
            raise ConfigError("must be > 0", "duration")
        if self.model_dim < 1:
            raise ConfigError("must be a positive integer", "model_dim")
        st = self.step_time
        if st.family not in STEP_FAMILIES:
            raise ConfigError(f"must be one of {STEP_FAMILIES}", "step_time.family")
        if not st.mean > 0:
            raise ConfigError("must be > 0", "step_time.mean")
        if st.dispersion < 0:
            raise ConfigError("must be >= 0", "step_time.dispersion")
        if self.heterogeneity.sigma < 0:
            raise ConfigError("must be >= 0", "heterogeneity.sigma")
        if not 0 <= self.straggler.fraction <= 1:
            raise ConfigError("must be in [0, 1]", "straggler.fraction")
        if not self.straggler.slowdown > 0:
            raise ConfigError("must be > 0", "straggler.slowdown")
        if self.churn.leave_rate < 0:
            raise ConfigError("must be >= 0", "churn.leave_rate")
        if self.churn.join_rate < 0:
            raise ConfigError("must be >= 0", "churn.join_rate")
        t = self.task
        if not t.learning_rate > 0:
            raise ConfigError("must be > 0", "task.learning_rate")
        if t.batch_size < 1:
            raise ConfigError("must be >= 1", "task.batch_size")
        if t.noise_sigma < 0:
            raise ConfigError("must be >= 0", "task.noise_sigma")
        if t.samples_per_node < 1:
            raise ConfigError("must be >= 1", "task.samples_per_node")
        if self.workload not in WORKLOADS:
            raise ConfigError(f"must be one of {WORKLOADS}", "workload")
        if self.state_placement is not None and self.state_placement not in PLACEMENTS:
            raise ConfigError(f"must be one of {PLACEMENTS}", "state_placement")
        if self.effective_placement == "distributed" and self.policy.method in (
                Method.BSP, Method.SSP):
            raise ConfigError("distributed node states only work with asp, "
                              "pbsp or pssp", "state_placement")
        if not 0 <= self.master_seed < 2 ** 64:
            raise ConfigError("must fit in 64 bits", "master_seed")
        if self.retry_backoff is not None and not self.retry_backoff > 0:
            raise ConfigError("must be > 0", "retry_backoff")
        if not self.loss_interval > 0:
            raise ConfigError("must be > 0", "loss_interval")

    @property
    def effective_placement(self) -> str:
        if self.state_placement is not None:
            return self.state_placement
        if self.policy.method in (Method.BSP, Method.SSP):
            return "centralised"
        return "distributed"

    @property
    def effective_policy(self) -> BarrierPolicy:
        p = self.policy
        if p.is_probabilistic and p.sample_size is None:
            return replace(p, sample_size=max(1, round(self.num_nodes / 100)))
        return p

    @property
    def effective_backoff(self) -> float:
        return self.retry_backoff if self.retry_backoff is not None else self.step_time.mean

    def to_dict(self) -> dict:
        d = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, BarrierPolicy):
                v = policy_to_dict(v)
            elif dataclasses.is_dataclass(v):
                v = dataclasses.asdict(v)
            d[f.name] = v
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "SimConfig":
        d = dict(d)
        known = {f.name: f for f in fields(cls)}
        unknown = set(d) - set(known)
        if unknown:
            raise ConfigError(f"unknown key(s) {sorted(unknown)}", "config")
        kwargs = {}
        for name, v in d.items():
            if name == "policy":
                v = v if isinstance(v, BarrierPolicy) else policy_from_dict(v)
            elif name in _SUBSPECS and isinstance(v, Mapping):
                sub = _SUBSPECS[name]
                bad = set(v) - {f.name for f in fields(sub)}
                if bad:
                    raise ConfigError(f"unknown key(s) {sorted(bad)}", name)
                v = sub(**v)
            kwargs[name] = v
        return cls(**kwargs)

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


_SUBSPECS = {
    "step_time": StepTimeSpec,
    "heterogeneity": HeterogeneitySpec,
    "straggler": StragglerSpec,
    "churn": ChurnSpec,
    "task": TaskSpec,
}

# type used to coerce string values, per (section, key)
_SIM_TYPES = {
    "num_nodes": int, "duration": float, "model_dim": int,
    "state_placement": "optstr", "workload": str, "master_seed": int,
    "retry_backoff": "optfloat", "loss_interval": float, "keep_events": bool,
}
_POLICY_TYPES = {
    "name": str, "staleness": "optint", "sample_size": "optint",
    "sample_include_self": bool, "sample_with_replacement": bool,
}


def _coerce(raw: str, kind, key: str):
    s = raw.strip()
    try:
        if kind is bool:
            low = s.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(s)
        if kind in ("optint", "optfloat", "optstr"):
            if s.lower() in _UNBOUNDED or s.lower() == "auto":
                return None
            kind = {"optint": int, "optfloat": float, "optstr": str}[kind]
        return kind(s)
    except ValueError:
        raise ConfigError(f"cannot parse {raw!r}", key) from None


def _types_for(section: str) -> dict:
    if section == "sim":
        return _SIM_TYPES
    if section == "policy":
        return _POLICY_TYPES
    if section in _SUBSPECS:
        # annotations are strings under postponed evaluation
        return {f.name: f.type for f in fields(_SUBSPECS[section])}
    raise ConfigError(f"unknown section {section!r}", section)


def _typed(section: str, key: str, raw: str):
    types = _types_for(section)
    if key not in types:
        raise ConfigError("unknown key", f"{section}.{key}")
    kind = types[key]
    kind = {"int": int, "float": float, "str": str, "bool": bool}.get(kind, kind)
    return _coerce(raw, kind, f"{section}.{key}")


def _merge_flat(base: dict, section: str, key: str, value) -> None:
    if section == "sim":
        base[key] = value
    else:
        base.setdefault(section, {})[key] = value


def parse_config_text(text: str) -> dict:
    """Parse INI text into the nested dict understood by
    :meth:`SimConfig.from_dict`. Unknown sections or keys are rejected."""
    cp = configparser.ConfigParser(interpolation=None, default_section="__none__")
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise ConfigError(str(e), "config") from None
    out: dict = {}
    for section in cp.sections():
        for key, raw in cp.items(section):
            _merge_flat(out, section, key, _typed(section, key, raw))
    return out


def load_config(path) -> dict:
    with open(path) as f:
        return parse_config_text(f.read())


def apply_overrides(base: Mapping, overrides) -> dict:
    """Apply ``section.key=value`` (or bare ``key=value`` for the ``sim``
    section) strings to a nested config dict."""
    out = json.loads(json.dumps(base))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"expected key=value, got {item!r}", "override")
        key, raw = item.split("=", 1)
        key = key.strip()
        section, _, name = key.rpartition(".")
        section = section or "sim"
        _merge_flat(out, section, name, _typed(section, name, raw))
    return out
