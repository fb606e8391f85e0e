"""Time-stepped pool simulator.

Each step collects requests from every agent in roster order, applies all
releases (sampling latent configuration for benign tenants), then serves all
allocations through the policy. Steps in which no agent has work are skipped;
the result is identical to visiting them.
"""
from __future__ import annotations

import logging
import math
from typing import Optional, Sequence

from .agents import Agent
from .analysis import RunStats
from .behavior import LatentConfigModel, sample_latent_config
from .core import (NEVER, NO_TENANT, SECONDS_PER_DAY, ConfigError, ContractViolation,
                   IpTable, PoolExhausted, RunConfig, derive_pool_size, make_streams)
from .policies import Policy, make_policy

log = logging.getLogger(__name__)


def peak_demand(roster: Sequence[Agent], step_seconds: int = 1) -> int:
    total = 0
    for agent in roster:
        if agent.adversarial:
            total += agent.concurrency
        elif hasattr(agent, "prepare"):
            agent.prepare(step_seconds)
            total += agent.peak_demand
        elif hasattr(agent, "peak_demand"):
            total += agent.peak_demand
    return total


class Simulator:
    def __init__(self, config: RunConfig, roster: Sequence[Agent],
                 policy: Optional[Policy] = None, pool_size: Optional[int] = None):
        self.config = config
        self.roster = list(roster)
        self.step_seconds = config.step_seconds
        if pool_size is None:
            pool_size = config.pool_size
        if pool_size is None:
            pool_size = derive_pool_size(peak_demand(self.roster, self.step_seconds),
                                         config.ar_max)
        self.table = IpTable(pool_size)
        if policy is None:
            policy = make_policy(config.policy, config.d_reuse, config.alpha)
        self.policy = policy
        streams = make_streams(config.seed, 3 + len(self.roster))
        policy.bind(self.table, streams[0])
        policy.init_pool()
        self.config_rng = streams[1]
        self.stats_rng = streams[2]
        self.lc_model = LatentConfigModel(config.p_c)
        self.end = config.duration_seconds
        warmup_end = config.warmup_days * SECONDS_PER_DAY
        base = 0
        for agent, rng in zip(self.roster, streams[3:]):
            agent.bind(base, rng, self.step_seconds)
            base += agent.n_tenants
            if agent.adversarial:
                agent.start_time = max(agent.start_time, warmup_end)
        self.now = 0
        self.allocated = 0
        self.next_config_id = 0
        self.stats = RunStats(pool_size=pool_size, duration_s=self.end,
                              sample_interval=config.sample_interval,
                              config=config.to_dict())
        self._next_sample = 0

    # sampling

    def _flush_samples(self, upto: int) -> None:
        """Record samples for all sample times < upto with the current state."""
        st = self.stats
        t = self._next_sample
        if t >= upto:
            return
        ar = self.allocated / self.table.size
        interval = st.sample_interval
        n = (upto - 1 - t) // interval + 1
        st.series_time.extend(range(t, t + n * interval, interval))
        st.series_ar.extend([ar] * n)
        st.series_unique.extend([st.adversary_unique_ips] * n)
        st.series_configs.extend([st.adversary_configs_discovered] * n)
        st.series_adv_allocs.extend([st.adversary_allocations] * n)
        st.series_lc_allocs.extend([st.adversary_lc_allocations] * n)
        self._next_sample = t + n * interval

    # stepping

    def step(self) -> None:
        """Process the step at ``now`` (if any agent is active) and advance by one step."""
        self._advance(self.now + self.step_seconds)

    def next_active(self, t: int) -> float:
        nxt = math.inf
        for a in self.roster:
            x = a.next_time(t)
            if x < nxt:
                nxt = x
        if nxt == math.inf:
            return nxt
        s = self.step_seconds
        return -(-int(nxt) // s) * s

    def run(self) -> RunStats:
        self._advance(self.end)
        return self.finish()

    def finish(self) -> RunStats:
        self._flush_samples(self.end)
        st = self.stats
        st.held_at_end = sum(a.held_count() for a in self.roster)
        st.policy_counters = dict(self.policy.counters)
        return st

    def _advance(self, limit: int) -> None:
        """Process every active step in [now, min(limit, end)), then set now to that bound."""
        limit = min(limit, self.end)
        step_s = self.step_seconds
        st = self.stats
        tb = self.table
        owner = tb.owner
        t_a = tb.t_a
        t_r = tb.t_r
        configs = tb.configs
        release = self.policy.release
        allocate = self.policy.allocate
        cfg_rng = self.config_rng
        model = self.lc_model
        sample = model.p_c > 0
        keep = self.config.record_free_durations
        free_durations = st.free_durations
        fd_min = st.free_duration_min
        fd_max = st.free_duration_max if st.free_duration_max is not None else -1
        roster = self.roster
        agents = [(a, a.step, not a.adversarial) for a in roster]
        inf = math.inf
        t = self.now
        while True:
            nxt = inf
            for a in roster:
                x = a.next_time(t)
                if x < nxt:
                    nxt = x
            if nxt >= limit:
                break
            now = int(nxt)
            if now % step_s:
                now += step_s - now % step_s
                if now >= limit:
                    break
            if now >= self._next_sample:
                self._flush_samples(now)
            rels = []
            allocs = []
            for agent, agent_step, benign in agents:
                r, q = agent_step(now)
                if r:
                    rels.append((benign, r))
                if q:
                    allocs.append((agent, q))

            for benign, reqs in rels:
                for tenant, ip in reqs:
                    if owner[ip] != tenant:
                        raise ContractViolation(
                            f"tenant {tenant} released IP {ip} held by {owner[ip]}")
                    d_a = now - t_a[ip]
                    release(ip, now)
                    owner[ip] = NO_TENANT
                    if benign and sample:
                        cfg = sample_latent_config(cfg_rng, model, d_a, now, tenant,
                                                   self.next_config_id)
                        if cfg is not None:
                            self.next_config_id += 1
                            st.configs_created += 1
                            lst = configs[ip]
                            if lst is None:
                                configs[ip] = [cfg]
                            else:
                                lst.append(cfg)
                self.allocated -= len(reqs)
                st.total_releases += len(reqs)

            for agent, reqs in allocs:
                adversarial = agent.adversarial
                granted = agent.granted
                for tenant in reqs:
                    try:
                        ip = allocate(tenant, now)
                    except PoolExhausted:
                        st.pool_exhausted += 1
                        agent.denied(tenant, now)
                        continue
                    owner[ip] = tenant
                    self.allocated += 1
                    st.total_allocations += 1
                    last = t_r[ip]
                    if last != NEVER:
                        # inlined RunStats.add_free_duration
                        gap = now - last
                        if keep:
                            free_durations.append(gap)
                        st.free_duration_count += 1
                        st.free_duration_sum += gap
                        if fd_min is None or gap < fd_min:
                            fd_min = st.free_duration_min = gap
                        if gap > fd_max:
                            fd_max = st.free_duration_max = gap
                    live = configs[ip]
                    if live is not None:
                        fresh = [c for c in live if c.t_c > now]
                        if len(fresh) != len(live):
                            live = fresh or None
                            configs[ip] = live
                        if live is not None:
                            st.allocations_with_live_config += 1
                    if adversarial:
                        st.adversary_allocations += 1
                        new_ip, found = agent.observe(ip, live, now)
                        if new_ip:
                            st.adversary_unique_ips += 1
                            if live is not None:
                                st.adversary_lc_allocations += 1
                        if found:
                            st.adversary_configs_discovered += len(found)
                            for c in found:
                                st.log_exploit((c.config_id, now, c.created_by), self.stats_rng)
                    granted(tenant, ip, now)
            if allocs and self.allocated > st.max_allocated:
                st.max_allocated = self.allocated
            t = now + step_s
        self.now = max(self.now, limit)


def run(config: RunConfig, roster: Sequence[Agent], policy: Optional[Policy] = None,
        pool_size: Optional[int] = None) -> RunStats:
    return Simulator(config, roster, policy, pool_size).run()
