import csv
import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from barrierlab import ConfigError, run
from barrierlab.metrics import (cdf_distance, format_value, progress_cdf, progress_histogram,
                                progress_rows, progress_summary, sweep, write_run, write_sweep)

from conftest import small_config

finals = st.lists(st.integers(0, 200), min_size=1, max_size=80)


def test_histogram_single_bin():
    assert progress_histogram([7] * 12) == [(7, 12)]


@given(finals, st.integers(1, 9))
def test_histogram_conserves_count(cs, w):
    h = progress_histogram(cs, w)
    assert sum(n for _, n in h) == len(cs)
    starts = [b for b, _ in h]
    assert starts == sorted(starts) and all(b % w == 0 for b in starts)


def test_histogram_bad_width():
    with pytest.raises(ConfigError):
        progress_histogram([1], 0)


def test_bsp_histogram_at_most_two_bins():
    tr = run(small_config("bsp", nodes=40, duration=3.0))
    assert len(progress_histogram(tr)) <= 2
    assert sum(n for _, n in progress_histogram(tr)) == 40


@given(finals)
def test_cdf_properties(cs):
    cdf = progress_cdf(cs)
    fr = [f for _, f in cdf]
    assert all(0 < f <= 1 for f in fr)
    assert fr == sorted(fr)
    assert fr[-1] == 1.0
    steps = [s for s, _ in cdf]
    assert steps == sorted(set(cs))


def test_cdf_identical_finals_single_jump():
    assert progress_cdf([4, 4, 4]) == [(4, 1.0)]


def test_cdf_empty_rejected():
    with pytest.raises(ConfigError):
        progress_cdf([])


@given(finals, finals)
def test_cdf_distance_is_a_metric(a, b):
    d = cdf_distance(a, b)
    assert 0 <= d <= 1
    assert d == cdf_distance(b, a)
    assert cdf_distance(a, a) == 0


def test_summary_population_std():
    s = progress_summary([1, 2, 3, 4])
    assert s["std"] == pytest.approx(np.std([1, 2, 3, 4]))
    assert (s["min"], s["max"], s["mean"]) == (1, 4, 2.5)


def test_asp_iqr_wider_than_bsp():
    def iqr(tr):
        q = np.percentile(tr.live_counters, [25, 75])
        return q[1] - q[0]
    base = dict(nodes=200, duration=10.0, dim=4)
    assert iqr(run(small_config("asp", **base))) > iqr(run(small_config("bsp", **base)))


def test_sweep_rows_and_zero_sample_equals_asp():
    base = small_config("pbsp", nodes=20, duration=1.0)
    values = [0, 1, 4]
    rows = sweep(base, "pbsp", values, [1, 2])
    assert len(rows) == len(values) * 2
    assert [(r.value, r.seed) for r in rows] == [(v, s) for v in values for s in (1, 2)]
    for seed in (1, 2):
        asp = progress_summary(run(small_config("asp", nodes=20, duration=1.0, seed=seed)))
        row = next(r for r in rows if r.value == 0 and r.seed == seed)
        assert (row.mean, row.std, row.min, row.max) == (asp["mean"], asp["std"], asp["min"],
                                                         asp["max"])


def test_sweep_top_level_parameter():
    rows = sweep(small_config("ssp", nodes=5, duration=1.0), None, [5, 7], [1],
                 parameter="num_nodes")
    assert len(rows) == 2
    with pytest.raises(ConfigError):
        sweep(small_config(), None, [1], [])


def test_format_value():
    assert format_value(0.1) == "0.10000000000000001"
    assert format_value(None) == ""
    assert format_value(True) == "1"
    assert format_value(np.int64(3)) == "3"


def read_rows(path):
    with open(path, newline="") as f:
        return list(csv.reader(f))


def test_write_run_files_and_row_counts(tmp_path):
    tr = run(small_config("ssp", nodes=15, duration=2.0, keep_events=True))
    d = write_run(tr, tmp_path, "r1")
    names = sorted(p.name for p in d.iterdir())
    assert names == ["audit.csv", "cdf.csv", "events.csv", "loss.csv", "membership.csv",
                     "meta.json", "progress.csv"]
    assert len(read_rows(d / "progress.csv")) == 1 + 15
    assert len(read_rows(d / "cdf.csv")) == 1 + len(set(tr.live_counters))
    assert len(read_rows(d / "loss.csv")) == 1 + 3
    assert len(read_rows(d / "audit.csv")) == 1 + len(tr.staleness_audits)
    assert len(read_rows(d / "events.csv")) == 1 + len(tr.events)
    meta = json.loads((d / "meta.json").read_text())
    assert meta["master_seed"] == 1 and meta["config_fingerprint"] == tr.config_fingerprint
    assert meta["version"] and meta["variance_convention"].startswith("population")


def test_exporters_are_pure(tmp_path):
    tr = run(small_config("pssp", nodes=15, duration=2.0))
    a = write_run(tr, tmp_path / "a", "x")
    b = write_run(tr, tmp_path / "b", "x")
    for p in a.iterdir():
        assert p.read_bytes() == (b / p.name).read_bytes()


def test_write_sweep(tmp_path):
    rows = sweep(small_config("pbsp", nodes=10, duration=1.0), "pbsp", [0, 2], [3])
    write_sweep(rows, tmp_path / "s" / "sweep.csv")
    got = read_rows(tmp_path / "s" / "sweep.csv")
    assert got[0] == ["parameter", "value", "seed", "mean", "std", "min", "max"]
    assert len(got) == 3


def test_progress_rows_cover_every_node():
    tr = run(small_config("asp", nodes=9, duration=1.0))
    assert [r[0] for r in progress_rows(tr)] == list(range(9))
