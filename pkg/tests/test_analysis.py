import csv
import io
import json
import random

import pytest
from hypothesis import given, strategies as st

from ippoolsim.analysis import (EXPLOIT_LOG_CAP, SERIES_COLUMNS, FreeDurationCDF, RunStats,
                                fit_exponential_mle, free_duration_distribution,
                                lc_yield, unique_ip_yield, window_yields)


def stats(allocs, unique, lc=0):
    return RunStats(adversary_allocations=allocs, adversary_unique_ips=unique,
                    adversary_lc_allocations=lc)


def test_yield_examples():
    assert unique_ip_yield(stats(600, 600)) == 1.0
    assert unique_ip_yield(stats(600, 60)) == pytest.approx(0.1)
    assert unique_ip_yield(stats(0, 0)) is None
    assert lc_yield(stats(0, 0)) is None
    assert lc_yield(stats(600, 60, 0)) == 0.0


@given(st.integers(1, 10**6), st.data())
def test_yields_bounded_and_ordered(n, data):
    u = data.draw(st.integers(0, n))
    lc = data.draw(st.integers(0, u))
    s = stats(n, u, lc)
    assert 0 <= lc_yield(s) <= unique_ip_yield(s) <= 1


def test_window_yields():
    s = RunStats(series_time=[0, 60, 120], series_adv_allocs=[0, 10, 30],
                 series_unique=[0, 10, 12], series_lc_allocs=[0, 5, 5])
    assert window_yields(s, 60, 120) == (0.1, 0.0)
    assert window_yields(s, 0, 60) == (1.0, 0.5)
    assert window_yields(s, 120, 180) == (None, None)


def test_quantiles_and_cdf():
    cdf = FreeDurationCDF([30, 10, 20])
    assert cdf.quantile(0.5) == 20
    assert cdf.quantile(0.0) == 10 and cdf.quantile(1.0) == 30
    assert cdf.cdf(20) == pytest.approx(2 / 3)
    with pytest.raises(ValueError):
        FreeDurationCDF([])
    with pytest.raises(ValueError):
        cdf.quantile(1.5)
    assert free_duration_distribution(RunStats()) is None


def test_exponential_mle():
    assert fit_exponential_mle([2, 2, 2]) == 0.5
    assert fit_exponential_mle([7]) == pytest.approx(1 / 7)
    rng = random.Random(3)
    x = [rng.expovariate(1 / 3600) for _ in range(100_000)]
    assert abs(1 / fit_exponential_mle(x) - 3600) <= 0.02 * 3600
    with pytest.raises(ValueError):
        fit_exponential_mle([])
    with pytest.raises(ValueError):
        fit_exponential_mle([1, 0])


def test_free_duration_accounting():
    s = RunStats()
    for d in (50, 10, 30):
        s.add_free_duration(d)
    s.add_free_duration(5, keep_sample=False)
    assert list(s.free_durations) == [50, 10, 30]
    assert (s.free_duration_count, s.free_duration_min, s.free_duration_max,
            s.free_duration_sum) == (4, 5, 50, 95)


def test_exploit_log_reservoir(monkeypatch):
    import ippoolsim.analysis as an
    monkeypatch.setattr(an, "EXPLOIT_LOG_CAP", 10)
    s = RunStats()
    rng = random.Random(0)
    for i in range(100):
        s.log_exploit((i, i, 0), rng)
    assert len(s.exploit_log) == 10 and s.exploit_log_seen == 100
    assert any(e[0] >= 10 for e in s.exploit_log)
    assert EXPLOIT_LOG_CAP == 1_000_000


def window(t0, n, base):
    s = RunStats(pool_size=10, sample_interval=60, duration_s=n * 60)
    s.series_time = [t0 + 60 * i for i in range(n)]
    for name in ("series_ar", "series_unique", "series_configs",
                 "series_adv_allocs", "series_lc_allocs"):
        setattr(s, name, [base + i for i in range(n)])
    s.total_allocations = base
    s.adversary_allocations = base + 1
    s.adversary_unique_ips = base
    s.max_allocated = base
    s.policy_counters = {"tag_hits": base}
    for d in range(base):
        s.add_free_duration(d + 1)
    return s


def test_merge_is_additive_and_commutative():
    a, b = window(0, 3, 4), window(180, 2, 7)
    ab, ba = a.merge(b), b.merge(a)
    assert ab.to_dict(True) == ba.to_dict(True)
    assert ab.series_time == [0, 60, 120, 180, 240]
    assert ab.total_allocations == 11 and ab.adversary_allocations == 13
    assert ab.max_allocated == 7 and ab.policy_counters == {"tag_hits": 11}
    assert sorted(ab.free_durations) == sorted(list(a.free_durations) + list(b.free_durations))
    assert ab.free_duration_min == 1 and ab.free_duration_max == 7


def test_serialization():
    s = window(0, 3, 2)
    s.config = {"seed": 9, "policy": "LRU"}
    d = json.loads(s.to_json())
    assert d["provenance"]["seed"] == 9
    assert d["summary"]["unique_ip_yield"] == 2 / 3
    assert "samples" not in d["free_duration"]
    assert len(d["free_duration"]["quantiles"]) == 101
    assert list(d["series"]) == list(SERIES_COLUMNS)
    assert json.loads(s.to_json(True))["free_duration"]["samples"] == [1, 2]
    text = s.to_csv()
    lines = text.splitlines()
    assert lines[0] == "# seed: 9" and lines[1].startswith("# config: ")
    rows = list(csv.reader(io.StringIO("\n".join(lines[2:]))))
    assert rows[0][:4] == ["time_s", "ar", "cumulative_unique_ips", "cumulative_configs"]
    assert len(rows) == 4
