"""Named scenarios: config -> agent roster -> simulator."""
from __future__ import annotations

import math
import random

from .agents import AdversaryAgent, AutoscaleAgent, TraceAgent
from .analysis import RunStats
from .core import SECONDS_PER_DAY, RunConfig, derive_seed
from .engine import Simulator
from .ingest import load_trace

DEFAULTS = {
    "benign": dict(scenario="benign"),
    "single-tenant": dict(scenario="single-tenant", policy="Tagged", ar_max=0.9),
    "multi-tenant": dict(scenario="multi-tenant", policy="Segmented", ar_max=0.9),
    "trace-replay": dict(scenario="trace-replay", policy="Segmented", ar_max=0.95),
}


def scenario_config(name: str, **overrides) -> RunConfig:
    """Config template for a named scenario (10 + 10 days, p_c = 0.5, 60 x 600 s scanner)."""
    if name not in DEFAULTS:
        raise KeyError(f"unknown scenario {name!r}")
    params = dict(DEFAULTS[name])
    params.update(overrides)
    return RunConfig(**params)


def synthetic_job_trace(rng: random.Random, n_users: int = 1000, days: int = 20,
                        jobs_per_day=(1.0, 100.0), median_duration=(120.0, 86400.0),
                        sigma: float = 1.0, max_duration: int = 7 * SECONDS_PER_DAY):
    """Batch-cluster style trace of ``(user, t_a, t_r)`` events sorted by t_a.

    Each user submits jobs as a Poisson process with a log-uniform daily rate;
    job durations are log-normal around a log-uniform per-user median, so
    most users run short jobs and a minority hold IPs for hours or days.
    Jobs ending after ``days`` are dropped.
    """
    horizon = days * SECONDS_PER_DAY
    lo_r, hi_r = (math.log(x) for x in jobs_per_day)
    lo_d, hi_d = (math.log(x) for x in median_duration)
    events = []
    for user in range(n_users):
        rate = math.exp(rng.uniform(lo_r, hi_r)) / SECONDS_PER_DAY
        mu = rng.uniform(lo_d, hi_d)
        t = rng.expovariate(rate)
        while t < horizon:
            d = min(max_duration, max(1, int(rng.lognormvariate(mu, sigma))))
            t_a = int(t)
            if t_a + d <= horizon:
                events.append((user, t_a, t_a + d))
            t += rng.expovariate(rate)
    events.sort(key=lambda e: (e[1], e[2], e[0]))
    return events


def build_roster(config: RunConfig):
    population_rng = random.Random(derive_seed(config.seed, 1))
    roster = []
    if config.scenario == "trace-replay":
        if config.trace_path:
            events, _ = load_trace(config.trace_path)
        else:
            events = synthetic_job_trace(
                population_rng, config.n_tenants,
                config.warmup_days + config.adversary_days)
        roster.append(TraceAgent(events))
    else:
        roster.append(AutoscaleAgent.sample(
            population_rng, config.n_tenants, config.s_max_range, config.s_min_fraction,
            config.n_terms, config.bias_phase1))
    if config.has_adversary:
        mode = "single" if config.scenario == "single-tenant" else "multi"
        roster.append(AdversaryAgent(mode, config.adversary_concurrency,
                                     config.adversary_hold, config.tenant_budget))
    return roster


def build_simulation(config: RunConfig) -> Simulator:
    return Simulator(config, build_roster(config))


def run_config(config: RunConfig) -> RunStats:
    return build_simulation(config).run()
