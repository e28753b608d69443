from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from barrierlab import (BarrierPolicy, ConfigError, MembershipError, Method, StateView,
                        asp_may_advance, bsp_may_advance, make_policy, may_advance,
                        psp_sample, ssp_may_advance)
from barrierlab.barrier import sample_indices
from barrierlab.engine import _Simulation

from conftest import small_config

counters = st.lists(st.integers(0, 50), min_size=1, max_size=12)


def test_bsp_examples():
    assert bsp_may_advance(5, StateView({0: 5, 1: 5, 2: 5}))
    assert not bsp_may_advance(5, StateView({0: 5, 1: 4, 2: 5}))


def test_ssp_boundary():
    view = StateView({0: 3, 1: 9})
    assert not ssp_may_advance(7, view, 3)
    assert ssp_may_advance(7, view, 4)


def test_empty_view_is_an_error():
    with pytest.raises(MembershipError):
        bsp_may_advance(1, StateView())
    with pytest.raises(MembershipError):
        ssp_may_advance(1, [], 2)


def test_asp_always_true():
    assert asp_may_advance()
    assert may_advance(make_policy("asp"), 10**6, {0: 0})


def test_ssp_zero_matches_bsp_on_random_draws():
    rng = np.random.default_rng(11)
    for _ in range(1000):
        view = rng.integers(0, 20, size=int(rng.integers(1, 10))).tolist()
        me = int(rng.integers(0, 25))
        assert ssp_may_advance(me, view, 0) == bsp_may_advance(me, view)


@given(st.integers(0, 60), counters, st.integers(0, 30))
def test_ssp_monotone_in_staleness(me, view, s):
    if ssp_may_advance(me, view, s):
        assert ssp_may_advance(me, view, s + 1)


@given(st.integers(0, 60), counters)
def test_unbounded_ssp_is_asp(me, view):
    assert ssp_may_advance(me, view, None)


@given(st.integers(0, 60), counters, st.integers(0, 30))
def test_ssp_rule_definition(me, view, s):
    assert ssp_may_advance(me, view, s) == (me - min(view) <= s)


def test_psp_sample_zero_and_truncation():
    rng = np.random.default_rng(0)
    assert psp_sample(range(10), 0, rng, self_id=3) == []
    assert psp_sample(range(10), 9, rng, self_id=3) == [0, 1, 2, 4, 5, 6, 7, 8, 9]
    assert psp_sample(range(10), 50, rng, self_id=3) == [0, 1, 2, 4, 5, 6, 7, 8, 9]


def test_psp_sample_marginal_frequency():
    rng = np.random.default_rng(2024)
    hits = Counter()
    draws = 10_000
    for _ in range(draws):
        s = psp_sample(range(10), 2, rng, self_id=0)
        assert len(set(s)) == 2 and 0 not in s
        hits.update(s)
    for peer in range(1, 10):
        assert abs(hits[peer] / draws - 2 / 9) <= 0.02


@given(st.integers(1, 40), st.data())
def test_sample_indices_distinct_and_in_range(n, data):
    k = data.draw(st.integers(0, n))
    seed = data.draw(st.integers(0, 2**32))
    idx = sample_indices(np.random.default_rng(seed), n, k)
    assert len(idx) == k == len(set(idx))
    assert all(0 <= i < n for i in idx)


def test_sample_indices_uniform_over_subsets():
    rng = np.random.default_rng(9)
    seen = Counter(frozenset(sample_indices(rng, 5, 2)) for _ in range(20_000))
    assert len(seen) == 10
    for c in seen.values():
        assert abs(c / 20_000 - 0.1) < 0.015


def test_engine_sampler_matches_reference():
    cfg = small_config("pbsp", nodes=30)
    sim = _Simulation(cfg)
    for nid in range(30):
        sim.add_node(nid, 0, False)
    ref_rng = np.random.default_rng(np.random.SeedSequence(cfg.master_seed, spawn_key=(2, 7)))
    beta = cfg.effective_policy.sample_size
    for _ in range(50):
        expected = psp_sample(sim.live_list, beta, ref_rng, self_id=7)
        assert sim._sample(7) == expected


def test_probabilistic_full_sample_equals_bsp():
    rng = np.random.default_rng(1)
    pol = make_policy("pbsp", sample_size=9)
    for _ in range(300):
        view = {i: int(c) for i, c in enumerate(rng.integers(0, 6, size=10))}
        me = int(rng.integers(0, 10))
        others = {k: v for k, v in view.items() if k != me}
        assert may_advance(pol, view[me], view, rng, self_id=me) == \
            bsp_may_advance(view[me], others)


def test_probabilistic_zero_sample_is_asp():
    rng = np.random.default_rng(1)
    for name in ("pbsp", "pssp"):
        pol = make_policy(name, sample_size=0)
        assert may_advance(pol, 100, {0: 0, 1: 0}, rng, self_id=1)


@settings(max_examples=200)
@given(st.integers(0, 2**32), st.integers(0, 4))
def test_probabilistic_never_stricter_than_global(seed, s):
    rng = np.random.default_rng(seed)
    view = {i: int(c) for i, c in enumerate(rng.integers(0, 12, size=8))}
    pol = make_policy("pssp", staleness=s, sample_size=3)
    me = 0
    others = {k: v for k, v in view.items() if k != me}
    if ssp_may_advance(view[me], others, s):
        assert may_advance(pol, view[me], view, rng, self_id=me)


def test_policy_validation():
    with pytest.raises(ConfigError):
        BarrierPolicy(Method.SSP, staleness=-1)
    with pytest.raises(ConfigError):
        BarrierPolicy(Method.PROBABILISTIC, sample_size=-2)
    with pytest.raises(ConfigError):
        BarrierPolicy(Method.PROBABILISTIC, inner=Method.ASP)
    with pytest.raises(ConfigError):
        make_policy("nope")
    with pytest.raises(ConfigError):
        make_policy("ssp", inner="bsp")


def test_policy_names_and_bounds():
    assert make_policy("pbsp").name == "pbsp"
    assert make_policy("pssp").bound == 4
    assert make_policy("pbsp").bound == 0
    assert make_policy("asp").bound is None
    assert make_policy("ssp", staleness=None).bound is None
    assert make_policy("pbsp", inner="ssp", staleness=2).name == "pssp"


def test_default_sample_size_is_one_percent():
    assert small_config("pbsp", nodes=1000).effective_policy.sample_size == 10
    assert small_config("pssp", nodes=20).effective_policy.sample_size == 1
    assert small_config("pbsp", nodes=250).effective_policy.sample_size == 2
