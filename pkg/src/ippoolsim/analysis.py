"""Run statistics, adversary yields and distribution fitting."""
from __future__ import annotations

import csv
import io
import json
import math
from array import array
from bisect import bisect_right
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

EXPLOIT_LOG_CAP = 1_000_000
SERIES_COLUMNS = ("time_s", "ar", "cumulative_unique_ips", "cumulative_configs",
                  "cumulative_adversary_allocations", "cumulative_lc_allocations")


@dataclass
class RunStats:
    pool_size: int = 0
    duration_s: int = 0
    sample_interval: int = 60
    config: dict = field(default_factory=dict)
    # time series, one point per sample interval
    series_time: list = field(default_factory=list)
    series_ar: list = field(default_factory=list)
    series_unique: list = field(default_factory=list)
    series_configs: list = field(default_factory=list)
    series_adv_allocs: list = field(default_factory=list)
    series_lc_allocs: list = field(default_factory=list)
    # counters
    total_allocations: int = 0
    total_releases: int = 0
    adversary_allocations: int = 0
    adversary_unique_ips: int = 0
    adversary_lc_allocations: int = 0
    adversary_configs_discovered: int = 0
    allocations_with_live_config: int = 0
    configs_created: int = 0
    pool_exhausted: int = 0
    max_allocated: int = 0
    held_at_end: int = 0
    # reuse gaps (now - t_r on allocation of a previously released IP)
    free_durations: array = field(default_factory=lambda: array("q"))
    free_duration_count: int = 0
    free_duration_min: Optional[int] = None
    free_duration_max: Optional[int] = None
    free_duration_sum: int = 0
    # (config_id, discovery time, victim tenant), reservoir-sampled above the cap
    exploit_log: list = field(default_factory=list)
    exploit_log_seen: int = 0
    policy_counters: dict = field(default_factory=dict)

    @property
    def ar_max_observed(self) -> float:
        return self.max_allocated / self.pool_size if self.pool_size else 0.0

    @property
    def lc_prevalence(self) -> Optional[float]:
        """Fraction of all allocations handed an IP with live latent configuration."""
        if not self.total_allocations:
            return None
        return self.allocations_with_live_config / self.total_allocations

    def add_free_duration(self, d: int, keep_sample: bool = True) -> None:
        if keep_sample:
            self.free_durations.append(d)
        self.free_duration_count += 1
        self.free_duration_sum += d
        if self.free_duration_min is None or d < self.free_duration_min:
            self.free_duration_min = d
        if self.free_duration_max is None or d > self.free_duration_max:
            self.free_duration_max = d

    def log_exploit(self, entry: tuple, rng) -> None:
        self.exploit_log_seen += 1
        if len(self.exploit_log) < EXPLOIT_LOG_CAP:
            self.exploit_log.append(entry)
        else:
            j = rng.randrange(self.exploit_log_seen)
            if j < EXPLOIT_LOG_CAP:
                self.exploit_log[j] = entry

    def merge(self, other: "RunStats") -> "RunStats":
        """Combine with stats from a disjoint time window."""
        out = RunStats(pool_size=max(self.pool_size, other.pool_size),
                       duration_s=self.duration_s + other.duration_s,
                       sample_interval=self.sample_interval, config=dict(self.config))
        first, second = sorted((self, other), key=lambda s: s.series_time[:1] or [0])
        for name in ("series_time", "series_ar", "series_unique", "series_configs",
                     "series_adv_allocs", "series_lc_allocs"):
            setattr(out, name, list(getattr(first, name)) + list(getattr(second, name)))
        for name in _ADDITIVE:
            setattr(out, name, getattr(self, name) + getattr(other, name))
        out.max_allocated = max(self.max_allocated, other.max_allocated)
        out.held_at_end = second.held_at_end
        out.free_durations = array("q", first.free_durations) + second.free_durations
        mins = [m for m in (self.free_duration_min, other.free_duration_min) if m is not None]
        maxs = [m for m in (self.free_duration_max, other.free_duration_max) if m is not None]
        out.free_duration_min = min(mins) if mins else None
        out.free_duration_max = max(maxs) if maxs else None
        out.exploit_log = (first.exploit_log + second.exploit_log)[:EXPLOIT_LOG_CAP]
        out.policy_counters = dict(Counter(self.policy_counters) + Counter(other.policy_counters))
        return out

    def summary(self) -> dict:
        return {
            "pool_size": self.pool_size,
            "ar_max_observed": self.ar_max_observed,
            "unique_ip_yield": unique_ip_yield(self),
            "lc_yield": lc_yield(self),
            "lc_prevalence": self.lc_prevalence,
        }

    def to_dict(self, include_samples: bool = False) -> dict:
        counters = {name: getattr(self, name) for name in _COUNTERS}
        fd = {"count": self.free_duration_count, "min": self.free_duration_min,
              "max": self.free_duration_max,
              "mean": (self.free_duration_sum / self.free_duration_count
                       if self.free_duration_count else None)}
        if self.free_durations:
            cdf = FreeDurationCDF(self.free_durations)
            fd["quantiles"] = [cdf.quantile(q / 100) for q in range(101)]
        if include_samples:
            fd["samples"] = list(self.free_durations)
        return {
            "provenance": {"seed": self.config.get("seed"), "config": self.config},
            "summary": self.summary(),
            "counters": counters,
            "free_duration": fd,
            "exploitation": {"seen": self.exploit_log_seen,
                             "log": [list(e) for e in self.exploit_log]},
            "policy_counters": dict(sorted(self.policy_counters.items())),
            "series": {col: list(vals) for col, vals in zip(SERIES_COLUMNS, self._series())},
        }

    def to_json(self, include_samples: bool = False) -> str:
        return json.dumps(self.to_dict(include_samples), indent=1, sort_keys=False) + "\n"

    def _series(self):
        return (self.series_time, self.series_ar, self.series_unique, self.series_configs,
                self.series_adv_allocs, self.series_lc_allocs)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(provenance_header(self.config))
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SERIES_COLUMNS)
        for row in zip(*self._series()):
            w.writerow(row)
        return buf.getvalue()


_COUNTERS = ("total_allocations", "total_releases", "adversary_allocations",
             "adversary_unique_ips", "adversary_lc_allocations",
             "adversary_configs_discovered", "allocations_with_live_config",
             "configs_created", "pool_exhausted", "max_allocated", "held_at_end")
_ADDITIVE = ("total_allocations", "total_releases", "adversary_allocations",
             "adversary_unique_ips", "adversary_lc_allocations",
             "adversary_configs_discovered", "allocations_with_live_config",
             "configs_created", "pool_exhausted", "free_duration_count",
             "free_duration_sum", "exploit_log_seen")


def provenance_header(config: dict) -> str:
    return ("# seed: %s\n# config: %s\n"
            % (config.get("seed"), json.dumps(config, sort_keys=True)))


def unique_ip_yield(stats: RunStats) -> Optional[float]:
    """Share of adversary allocations that returned a never-seen IP."""
    if not stats.adversary_allocations:
        return None
    return stats.adversary_unique_ips / stats.adversary_allocations


def lc_yield(stats: RunStats) -> Optional[float]:
    """Share of adversary allocations returning a new IP with live latent config."""
    if not stats.adversary_allocations:
        return None
    return stats.adversary_lc_allocations / stats.adversary_allocations


def window_yields(stats: RunStats, start: int, end: int):
    """(unique_ip_yield, lc_yield) restricted to the sampled window [start, end].

    Cumulative counters are read at the last sample at or before each bound.
    Returns (None, None) when the adversary made no allocation in the window.
    """
    t = stats.series_time

    def at(x):
        i = bisect_right(t, x) - 1
        if i < 0:
            return 0, 0, 0
        return stats.series_adv_allocs[i], stats.series_unique[i], stats.series_lc_allocs[i]

    a0, u0, l0 = at(start)
    a1, u1, l1 = at(end)
    if a1 == a0:
        return None, None
    return (u1 - u0) / (a1 - a0), (l1 - l0) / (a1 - a0)


class FreeDurationCDF:
    """Empirical distribution of reuse gaps with nearest-rank quantiles."""

    def __init__(self, samples: Iterable[int]):
        self.samples = sorted(samples)
        if not self.samples:
            raise ValueError("no free-duration samples")

    def __len__(self):
        return len(self.samples)

    def quantile(self, q: float) -> int:
        if not 0 <= q <= 1:
            raise ValueError("q must be in [0, 1]")
        n = len(self.samples)
        rank = max(1, math.ceil(q * n))
        return self.samples[rank - 1]

    def cdf(self, x: float) -> float:
        return bisect_right(self.samples, x) / len(self.samples)


def free_duration_distribution(stats: RunStats) -> Optional[FreeDurationCDF]:
    if not stats.free_durations:
        return None
    return FreeDurationCDF(stats.free_durations)


def fit_exponential_mle(samples: Sequence[float]) -> float:
    """Rate of the maximum-likelihood exponential fit (n / sum)."""
    n = len(samples)
    if n == 0:
        raise ValueError("cannot fit an empty sample")
    total = 0.0
    for x in samples:
        if not x > 0:
            raise ValueError(f"samples must be positive, got {x}")
        total += x
    return n / total
