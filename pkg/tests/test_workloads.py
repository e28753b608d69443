import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from barrierlab import ConfigError, ModelState, NodeState
from barrierlab.engine import run
from barrierlab.workloads import (AggregationTask, LinearTask, SummaryStat, least_squares_optimum,
                                  lipschitz_constant, local_summary, loss, merge_summaries,
                                  sgd_gradient_step, squared_loss_gradient, tree_merge)

from conftest import small_config


def fd_gradient(w, X, y, h=1e-5):
    g = np.empty_like(w)
    for i in range(w.size):
        e = np.zeros_like(w)
        e[i] = h
        g[i] = (loss(w + e, (X, y)) - loss(w - e, (X, y))) / (2 * h)
    return g


def fd_probe_errors(probes=100, seed=0):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(probes):
        dim = int(rng.integers(1, 12))
        b = int(rng.integers(1, 20))
        X = rng.standard_normal((b, dim))
        y = rng.standard_normal(b)
        w = rng.standard_normal(dim)
        g = squared_loss_gradient(w, X, y)
        fd = fd_gradient(w, X, y)
        worst = max(worst, np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-12))
    return worst


def test_gradient_matches_finite_differences():
    assert fd_probe_errors() <= 1e-6


class _OneSample(LinearTask):
    def __init__(self, X, y, lr):
        X = np.asarray(X, float)
        super().__init__(dim=X.shape[1], learning_rate=lr, batch_size=1, samples_per_node=1)
        self._data[0] = (np.asarray(X, float), np.asarray(y, float))


def test_single_sample_delta():
    task = _OneSample([[1.0, 0.0]], [1.0], 0.1)
    u = sgd_gradient_step(ModelState.zeros(2), task, NodeState(0), np.random.default_rng(0))
    np.testing.assert_allclose(u.delta, [0.1, 0.0], rtol=0, atol=1e-15)
    assert u.origin_node == 0 and u.origin_step == 0


def test_zero_residual_at_optimum():
    task = LinearTask(dim=5, noise_sigma=0.0, seed=3)
    u = sgd_gradient_step(ModelState(task.true_weights), task, NodeState(2),
                          np.random.default_rng(1))
    np.testing.assert_allclose(u.delta, 0.0, atol=1e-15)
    assert loss(ModelState(task.true_weights), task.local_data(2)) == pytest.approx(0, abs=1e-28)


def test_empty_dataset_rejected():
    with pytest.raises(ConfigError):
        loss(np.zeros(2), (np.zeros((0, 2)), np.zeros(0)))
    with pytest.raises(ConfigError):
        LinearTask(dim=2, samples_per_node=0)


@given(st.integers(0, 2**32))
def test_loss_nonnegative(seed):
    rng = np.random.default_rng(seed)
    X, y, w = rng.standard_normal((7, 3)), rng.standard_normal(7), rng.standard_normal(3)
    assert loss(w, (X, y)) >= 0


def test_local_data_iid_and_equal_sized():
    task = LinearTask(dim=4, samples_per_node=30, seed=5)
    sizes = {len(task.local_data(n)[1]) for n in range(6)}
    assert sizes == {30}
    assert not np.array_equal(task.local_data(0)[0], task.local_data(1)[0])
    # regenerated identically
    again = LinearTask(dim=4, samples_per_node=30, seed=5)
    assert np.array_equal(task.local_data(3)[0], again.local_data(3)[0])


def test_summary_two_elements():
    s = local_summary([4, 5])
    assert (s.count, s.mean, s.m2) == (2, 4.5, 0.5)
    assert local_summary([]) == SummaryStat(0, 0.0, 0.0)


def test_summary_matches_two_pass():
    rng = np.random.default_rng(3)
    for _ in range(1000):
        xs = rng.normal(rng.uniform(-5, 5), rng.uniform(0.1, 3), size=int(rng.integers(1, 60)))
        s = local_summary(xs.tolist())
        mean = xs.sum() / xs.size
        m2 = ((xs - mean) ** 2).sum()
        assert s.count == xs.size
        assert abs(s.mean - mean) <= 1e-12 * max(1, abs(mean))
        assert abs(s.m2 - m2) <= 1e-12 * max(1, m2)


def test_merge_example_and_identity():
    m = merge_summaries(local_summary([1, 2, 3]), local_summary([4, 5]))
    assert m.count == 5 and m.mean == pytest.approx(3, abs=1e-15)
    assert m.variance == pytest.approx(2, abs=1e-15)
    x = local_summary([2.5, 7.0])
    assert merge_summaries(x, SummaryStat()) == x
    assert merge_summaries(SummaryStat(), x) == x


def _close(a, b, tol):
    return (a.count == b.count and abs(a.mean - b.mean) <= tol * max(1, abs(a.mean))
            and abs(a.m2 - b.m2) <= tol * max(1, a.m2))


def random_summary(rng):
    return local_summary(rng.normal(rng.uniform(-3, 3), 1.0,
                                    size=int(rng.integers(1, 20))).tolist())


def merge_algebra_ok(triples=1000, seed=4, tol=1e-12):
    rng = np.random.default_rng(seed)
    for _ in range(triples):
        a, b, c = (random_summary(rng) for _ in range(3))
        if not _close(merge_summaries(a, b), merge_summaries(b, a), tol):
            return False
        ref = merge_summaries(merge_summaries(a, b), c)
        for x, y, z in itertools.permutations((a, b, c)):
            if not _close(merge_summaries(x, merge_summaries(y, z)), ref, tol):
                return False
    return True


def test_merge_commutative_associative():
    assert merge_algebra_ok()


def tree_merge_error(n=10_000, seed=6):
    rng = np.random.default_rng(seed)
    chunks = [rng.normal(rng.uniform(-10, 10), rng.uniform(0.5, 2), size=int(rng.integers(1, 8)))
              for _ in range(n)]
    merged = tree_merge([local_summary(c.tolist()) for c in chunks])
    pooled = np.concatenate(chunks)
    mean = float(pooled.mean())
    var = float(pooled.var())
    return merged.count == pooled.size, abs(merged.mean - mean), abs(merged.variance - var) / var


def test_tree_merge_matches_pooled():
    ok, dmean, dvar = tree_merge_error()
    assert ok and dmean <= 1e-9 and dvar <= 1e-9


def test_summary_packing_roundtrip():
    s = local_summary([1.0, 4.0, 9.0])
    assert SummaryStat.from_array(s.as_array()) == s


def test_aggregation_run_converges_to_weighted_mean():
    cfg = small_config("bsp", nodes=10, duration=3.0, workload="aggregation")
    tr = run(cfg)
    count, mean, m2 = tr.final_model.params
    assert count == cfg.task.batch_size * tr.total_commits
    assert m2 >= 0
    task = AggregationTask(cfg.task.batch_size, seed=cfg.master_seed)
    # BSP gives every node (nearly) the same number of batches
    target = np.mean([task.node_mean(n) for n in range(10)])
    assert abs(mean - target) < 0.3


def test_bsp_loss_curve_monotone_below_one_over_l():
    n, dim = 20, 10
    base = small_config("bsp", nodes=n, dim=dim, duration=15.0)
    task = LinearTask(dim, 1.0, base.task.batch_size, base.task.noise_sigma,
                      base.task.samples_per_node, base.master_seed)
    L = lipschitz_constant(task.pooled_data(range(n))[0])
    # the server sums n deltas per round, so the per-round rate is n * lr
    cfg = small_config("bsp", nodes=n, dim=dim, duration=15.0, lr=0.5 / (L * n))
    curve = [v for _, v in run(cfg).loss_curve]
    assert curve[-1] < 0.2 * curve[0]
    for prev, nxt in zip(curve, curve[1:]):
        assert nxt <= prev * 1.05


def test_optimum_oracle_is_a_minimum():
    task = LinearTask(dim=6, samples_per_node=40, seed=2)
    X, y = task.pooled_data(range(3))
    w = least_squares_optimum(X, y)
    g = squared_loss_gradient(w, X, y)
    np.testing.assert_allclose(g, 0, atol=1e-12)
