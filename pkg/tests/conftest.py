from __future__ import annotations

from dataclasses import replace

import pytest

from barrierlab.barrier import make_policy
from barrierlab.config import SimConfig, TaskSpec

# Filled by test_acceptance; echoed in the terminal summary.
ACCEPTANCE_LINES: dict[int, str] = {}


def small_config(policy="bsp", nodes=20, duration=2.0, dim=8, seed=1, lr=0.005, **kw):
    pol = make_policy(policy) if isinstance(policy, str) else policy
    return SimConfig(num_nodes=nodes, duration=duration, model_dim=dim, policy=pol,
                     master_seed=seed, task=TaskSpec(learning_rate=lr), **kw)


@pytest.fixture
def cfg():
    return small_config


def with_policy(config, name, **kw):
    return replace(config, policy=make_policy(name, **kw))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
