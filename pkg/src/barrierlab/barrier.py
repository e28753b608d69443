"""Barrier-control strategies and the probabilistic sampling combinator.

Every rule is a pure function of a node's own iteration counter and a
:class:`StateView` of peer counters. ``BSP`` waits for everyone, ``SSP``
tolerates a bounded lag, ``ASP`` never waits, and ``Probabilistic``
applies the BSP or SSP rule to a fresh random sample of peers instead of
the whole population.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError, MembershipError

__all__ = [
    "Method",
    "BarrierPolicy",
    "StateView",
    "bsp_may_advance",
    "asp_may_advance",
    "ssp_may_advance",
    "psp_sample",
    "sample_indices",
    "may_advance",
    "STRATEGIES",
    "make_policy",
    "TAXONOMY",
    "PLACEMENTS",
]


class Method(str, enum.Enum):
    BSP = "bsp"
    ASP = "asp"
    SSP = "ssp"
    PROBABILISTIC = "probabilistic"


@dataclass(frozen=True)
class BarrierPolicy:
    """Strategy selector plus its parameters.

    ``staleness`` is ``None`` for an unbounded lag. ``sample_size`` and
    ``inner`` only matter for :attr:`Method.PROBABILISTIC`; a ``None``
    sample size is filled in by :class:`~barrierlab.config.SimConfig` as
    1% of the population. The two
    ``sample_*`` flags pick the sampling variant; the defaults draw
    without replacement and leave the sampling node out.
    """

    method: Method = Method.BSP
    staleness: int | None = 0
    sample_size: int | None = 0
    inner: Method = Method.BSP
    sample_include_self: bool = False
    sample_with_replacement: bool = False

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        object.__setattr__(self, "inner", Method(self.inner))
        if self.staleness is not None and self.staleness < 0:
            raise ConfigError("staleness must be >= 0 or unbounded", "staleness")
        if self.sample_size is not None and self.sample_size < 0:
            raise ConfigError("sample size must be >= 0", "sample_size")
        if self.inner not in (Method.BSP, Method.SSP):
            raise ConfigError("inner method must be bsp or ssp", "inner")

    @property
    def name(self) -> str:
        if self.method is Method.PROBABILISTIC:
            return "p" + self.inner.value
        return self.method.value

    @property
    def bound(self) -> int | None:
        """Admissible lag between a node and the slowest counter it looks
        at; ``None`` means no bound is enforced."""
        if self.method is Method.ASP:
            return None
        rule = self.inner if self.method is Method.PROBABILISTIC else self.method
        if rule is Method.BSP:
            return 0
        return self.staleness

    @property
    def is_probabilistic(self) -> bool:
        return self.method is Method.PROBABILISTIC


class StateView:
    """Counters of the live nodes a decision is allowed to look at."""

    __slots__ = ("counters",)

    def __init__(self, counters: Mapping[int, int] | None = None):
        self.counters = dict(counters or {})

    def __len__(self):
        return len(self.counters)

    def __repr__(self):
        return f"StateView({self.counters!r})"

    def min(self) -> int:
        if not self.counters:
            raise MembershipError("empty state view")
        return min(self.counters.values())


def _view_min(view) -> int:
    if isinstance(view, StateView):
        return view.min()
    if isinstance(view, Mapping):
        view = view.values()
    view = list(view)
    if not view:
        raise MembershipError("empty state view")
    return min(view)


def bsp_may_advance(self_counter: int, view) -> bool:
    """True iff nobody in ``view`` is behind ``self_counter``."""
    return _view_min(view) >= self_counter


def asp_may_advance() -> bool:
    return True


def ssp_may_advance(self_counter: int, view, s: int | None) -> bool:
    """True iff ``self_counter`` leads the slowest viewed counter by at
    most ``s`` (inclusive). ``s=None`` is unbounded."""
    if s is not None and s < 0:
        raise ConfigError("staleness must be >= 0", "staleness")
    lo = _view_min(view)
    return s is None or self_counter - lo <= s


def sample_indices(rng: np.random.Generator, n: int, k: int) -> list[int]:
    """Uniform random ``k``-subset of ``range(n)`` (Floyd's algorithm).

    The ``k`` bounded draws come from a single ``rng.random(k)`` call, so
    the cost is O(k) regardless of ``n``. Requires ``0 <= k <= n``.
    """
    if k == 0:
        return []
    chosen: dict[int, None] = {}
    j = n - k
    for u in rng.random(k).tolist():
        t = int(u * (j + 1))
        chosen[j if t in chosen else t] = None
        j += 1
    return list(chosen)


def psp_sample(population: Sequence[int], beta: int, rng: np.random.Generator,
               self_id: int | None = None, include_self: bool = False,
               with_replacement: bool = False) -> list[int]:
    """Draw a uniform random peer sample of size ``beta``.

    ``self_id`` is removed from the candidates unless ``include_self``.
    Without replacement the sample is truncated to the number of
    candidates; asking for at least that many returns every candidate in
    population order without touching ``rng``.
    """
    if beta < 0:
        raise ConfigError("sample size must be >= 0", "sample_size")
    if include_self or self_id is None:
        peers = list(population)
    else:
        peers = [p for p in population if p != self_id]
    n = len(peers)
    if beta == 0 or n == 0:
        return []
    if with_replacement:
        idx = rng.integers(0, n, size=beta)
        return [peers[i] for i in idx]
    if beta >= n:
        return peers
    return [peers[i] for i in sample_indices(rng, n, beta)]


def may_advance(policy: BarrierPolicy, self_counter: int, view,
                rng: np.random.Generator | None = None,
                self_id: int | None = None) -> bool:
    """Admission decision for a node that has completed ``self_counter``
    steps.

    ``view`` maps node ids to counters of the live population visible to
    the deciding party. Probabilistic policies sample from its keys and
    apply the inner rule to the sample; an empty sample admits.
    """
    method = policy.method
    if method is Method.ASP:
        return asp_may_advance()
    counters = view.counters if isinstance(view, StateView) else dict(view)
    if method is Method.PROBABILISTIC:
        if rng is None:
            raise ConfigError("probabilistic policy needs an rng", "rng")
        if policy.sample_size is None:
            raise ConfigError("sample size not resolved", "sample_size")
        sample = psp_sample(list(counters), policy.sample_size, rng, self_id,
                            policy.sample_include_self,
                            policy.sample_with_replacement)
        if not sample:
            return True
        counters = {p: counters[p] for p in sample}
        method = policy.inner
    if method is Method.BSP:
        return bsp_may_advance(self_counter, counters)
    return ssp_may_advance(self_counter, counters, policy.staleness)


# CLI-facing names. pSSP defaults to the same staleness as SSP.
DEFAULT_STALENESS = 4

STRATEGIES = {
    "bsp": BarrierPolicy(Method.BSP, staleness=0),
    "asp": BarrierPolicy(Method.ASP, staleness=None),
    "ssp": BarrierPolicy(Method.SSP, staleness=DEFAULT_STALENESS),
    "pbsp": BarrierPolicy(Method.PROBABILISTIC, staleness=0,
                          sample_size=None, inner=Method.BSP),
    "pssp": BarrierPolicy(Method.PROBABILISTIC, staleness=DEFAULT_STALENESS,
                          sample_size=None, inner=Method.SSP),
}


def make_policy(name: str, staleness: int | None | str = "default",
                sample_size: int | None = None, inner: str | None = None,
                **flags) -> BarrierPolicy:
    """Build a policy from a registry name plus optional overrides.

    ``staleness="default"`` keeps the registry value; ``None`` means
    unbounded. ``inner`` lets ``pbsp``/``pssp`` be spelled as a generic
    probabilistic policy.
    """
    try:
        base = STRATEGIES[name.lower()]
    except KeyError:
        raise ConfigError(f"unknown policy {name!r}; choose from "
                          f"{', '.join(STRATEGIES)}", "policy") from None
    changes = dict(flags)
    if staleness != "default":
        changes["staleness"] = staleness
    if sample_size is not None:
        changes["sample_size"] = sample_size
    if inner is not None:
        if not base.is_probabilistic:
            raise ConfigError("--inner only applies to pbsp/pssp", "inner")
        changes["inner"] = Method(inner)
    return replace(base, **changes)


# Which barrier methods well-known systems use. Documentation only; the
# simulator does not model these systems.
TAXONOMY = (
    ("MapReduce", "reduce starts once every map task is done", ("bsp",)),
    ("Spark", "updates merged when a task finishes", ("bsp",)),
    ("Pregel", "supersteps", ("bsp",)),
    ("Hogwild!", "lock-free async, delay bounded by the system", ("asp", "ssp")),
    ("Parameter Servers", "pluggable barrier", ("bsp", "asp", "ssp")),
    ("Cyclic Delay", "update delay of at most N-1 steps", ("ssp",)),
    ("Yahoo! LDA", "checkpointing", ("ssp", "asp")),
    ("Owl+Actor", "pluggable barrier", ("bsp", "asp", "ssp", "psp")),
)

# Where the model and the node states live. Only the first two are
# simulated; sharded models are not implemented.
PLACEMENTS = {
    ("centralised", "centralised"): ("bsp", "asp", "ssp", "pbsp", "pssp"),
    ("centralised", "distributed"): ("asp", "pbsp", "pssp"),
    ("distributed", "distributed"): ("asp", "pbsp", "pssp"),
}
