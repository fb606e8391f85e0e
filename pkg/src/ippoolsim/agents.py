"""Batched tenant drivers.

An agent owns a contiguous block of tenant ids. Each step the engine calls
``step(now)`` which returns ``(releases, allocations)``: a list of
``(tenant, ip)`` pairs to release and a list of tenant ids that each want one
new IP. The engine reports back through ``granted`` and ``denied``.
``next_time(t)`` lets the engine skip steps in which the agent has nothing
to do.
"""
from __future__ import annotations

import random
from collections import deque
from heapq import heappop, heappush
from typing import Iterable, Optional, Sequence

import numpy as np

from .behavior import BehaviorSpec, build_schedule, sample_behavior_spec
from .core import SECONDS_PER_DAY, ConfigError

INF = float("inf")


class Agent:
    adversarial = False
    n_tenants = 0

    def bind(self, tenant_base: int, rng: random.Random, step_seconds: int = 1) -> None:
        self.tenant_base = tenant_base
        self.rng = rng
        self.step_seconds = step_seconds

    def next_time(self, t: int) -> float:
        return INF

    def step(self, now: int):
        return [], []

    def granted(self, tenant: int, ip: int, now: int) -> None:
        pass

    def denied(self, tenant: int, now: int) -> None:
        pass

    def held_count(self) -> int:
        return 0


class AutoscaleAgent(Agent):
    """Tenants whose server count follows a daily Fourier profile.

    Targets are precomputed for every step of the day, so a step only touches
    tenants whose target changes then or whose last request was refused.
    """

    def __init__(self, specs: Sequence[BehaviorSpec]):
        self.specs = list(specs)
        self.n_tenants = len(self.specs)
        self.schedule = None

    @classmethod
    def sample(cls, rng: random.Random, n_tenants: int, s_max_range=(2, 50),
               s_min_fraction=(0.0, 0.8), n_terms: int = 4,
               bias_phase1: bool = True) -> "AutoscaleAgent":
        """Population with log-uniform ``s_max`` and ``s_min = floor(f * s_max)``."""
        lo, hi = s_max_range
        flo, fhi = s_min_fraction
        specs = []
        for _ in range(n_tenants):
            if lo == hi:
                s_max = lo
            else:
                s_max = int(np.exp(rng.uniform(np.log(max(lo, 1)), np.log(hi + 1))))
                s_max = min(hi, max(lo, s_max))
            s_min = int(rng.uniform(flo, fhi) * s_max)
            specs.append(sample_behavior_spec(rng, s_min, s_max, n_terms, bias_phase1))
        return cls(specs)

    def bind(self, tenant_base, rng, step_seconds=1):
        super().bind(tenant_base, rng, step_seconds)
        self.prepare(step_seconds)
        sch = self.schedule
        # events grouped by step of day: parallel lists of (step, tenants, targets)
        steps = sch.steps.tolist()
        tenants = sch.tenants.tolist()
        targets = sch.targets.tolist()
        self._g_steps, self._g_tenants, self._g_targets = [], [], []
        i = 0
        n = len(steps)
        while i < n:
            j = i
            while j < n and steps[j] == steps[i]:
                j += 1
            self._g_steps.append(steps[i])
            self._g_tenants.append(tenants[i:j])
            self._g_targets.append(targets[i:j])
            i = j
        self.target = sch.initial.tolist()
        self.held = [[] for _ in range(self.n_tenants)]
        self._ptr = 0
        self._next = self._group_time(0, 0)
        # every tenant starts from zero holdings
        self.pending = set(range(self.n_tenants))

    def prepare(self, step_seconds: int = 1) -> None:
        if self.schedule is None or self.schedule.step_seconds != step_seconds:
            self.schedule = build_schedule(self.specs, step_seconds)

    @property
    def peak_demand(self) -> int:
        self.prepare(self.schedule.step_seconds if self.schedule else 1)
        return self.schedule.peak_demand

    def _group_time(self, ptr, day):
        if not self._g_steps:
            return INF
        return day * SECONDS_PER_DAY + self._g_steps[ptr] * self.step_seconds

    def next_time(self, t):
        if self.pending:
            return t
        nxt = self._next
        return nxt if nxt > t else t

    def step(self, now):
        todo = []
        if self._next <= now:
            target = self.target
            g_tenants = self._g_tenants
            g_targets = self._g_targets
            n = len(g_tenants)
            ptr = self._ptr
            nxt = self._next
            while nxt <= now:
                ts = g_tenants[ptr]
                for j, v in zip(ts, g_targets[ptr]):
                    target[j] = v
                todo.extend(ts)
                ptr += 1
                if ptr == n:
                    ptr = 0
                    day = int(nxt // SECONDS_PER_DAY) + 1
                else:
                    day = int(nxt // SECONDS_PER_DAY)
                nxt = day * SECONDS_PER_DAY + self._g_steps[ptr] * self.step_seconds
            self._ptr = ptr
            self._next = nxt
        if self.pending:
            todo.extend(sorted(self.pending))
            self.pending.clear()
            todo = list(dict.fromkeys(todo))
        # same as self.requests(todo), inlined for the per-step hot path
        releases = []
        allocs = []
        base = self.tenant_base
        random = self.rng.random
        target = self.target
        held = self.held
        for j in todo:
            h = held[j]
            diff = target[j] - len(h)
            if diff > 0:
                allocs.extend([base + j] * diff)
            elif diff < 0:
                for _ in range(-diff):
                    k = int(random() * len(h))
                    h[k], h[-1] = h[-1], h[k]
                    releases.append((base + j, h.pop()))
        return releases, allocs

    def requests(self, tenants: Iterable[int]):
        """Release/allocate requests moving each tenant toward its target."""
        releases = []
        allocs = []
        base = self.tenant_base
        random = self.rng.random
        target = self.target
        held = self.held
        for j in tenants:
            h = held[j]
            diff = target[j] - len(h)
            if diff > 0:
                allocs.extend([base + j] * diff)
            elif diff < 0:
                for _ in range(-diff):
                    k = int(random() * len(h))
                    h[k], h[-1] = h[-1], h[k]
                    releases.append((base + j, h.pop()))
        return releases, allocs

    def granted(self, tenant, ip, now):
        self.held[tenant - self.tenant_base].append(ip)

    def denied(self, tenant, now):
        self.pending.add(tenant - self.tenant_base)

    def held_count(self):
        return sum(len(h) for h in self.held)


class AdversaryAgent(Agent):
    """Pool scanner holding up to ``concurrency`` IPs for ``hold`` seconds each.

    In ``multi`` mode a fresh tenant id is used after every ``concurrency``
    granted allocations, cycling through ``budget`` ids.
    """
    adversarial = True

    def __init__(self, mode: str = "single", concurrency: int = 60, hold: int = 600,
                 budget: int = 10_000, start_time: int = 0):
        if mode not in ("single", "multi"):
            raise ConfigError(f"unknown adversary mode {mode!r}")
        self.mode = mode
        self.concurrency = concurrency
        self.hold = hold
        self.budget = 1 if mode == "single" else budget
        self.n_tenants = self.budget
        self.start_time = start_time
        self.held = deque()  # (t_acquired, tenant, ip)
        self.n_granted = 0
        self.seen = set()
        self.n_discovered = 0

    def current_tenant(self) -> int:
        return self.tenant_base + (self.n_granted // self.concurrency) % self.budget

    def next_time(self, t):
        if t < self.start_time:
            return self.start_time
        if len(self.held) < self.concurrency:
            return t
        return max(t, self.held[0][0] + self.hold)

    def step(self, now):
        if now < self.start_time:
            return [], []
        releases = []
        held = self.held
        limit = now - self.hold
        while held and held[0][0] <= limit:
            _, tenant, ip = held.popleft()
            releases.append((tenant, ip))
        want = self.concurrency - len(held)
        allocs = []
        if want > 0:
            # tenant ids for the next ``want`` grants
            k = self.n_granted
            q = self.concurrency
            allocs = [self.tenant_base + ((k + i) // q) % self.budget for i in range(want)]
        return releases, allocs

    def granted(self, tenant, ip, now):
        self.held.append((now, tenant, ip))
        self.n_granted += 1

    def observe(self, ip: int, configs: Optional[list], now: int):
        """Record an allocation; returns (new unique IP?, newly discovered configs)."""
        new_ip = ip not in self.seen
        if new_ip:
            self.seen.add(ip)
        found = []
        if configs:
            for c in configs:
                if not c.discovered and c.t_c > now:
                    c.discovered = True
                    found.append(c)
        self.n_discovered += len(found)
        return new_ip, found

    def held_count(self):
        return len(self.held)


class TraceAgent(Agent):
    """Replays (tenant, t_a, t_r) allocation events."""

    def __init__(self, events: Sequence[tuple], n_tenants: Optional[int] = None):
        prev = None
        for ev in events:
            tenant, t_a, t_r = ev
            if t_r <= t_a:
                raise ConfigError(f"trace event {ev} has t_r <= t_a")
            if prev is not None and t_a < prev:
                raise ConfigError("trace events must be sorted by t_a")
            prev = t_a
        self.events = list(events)
        self.n_tenants = n_tenants if n_tenants is not None else (
            1 + max((e[0] for e in self.events), default=-1))
        self._ptr = 0
        self._releases = []  # heap (t_r, seq, tenant, ip)
        self._seq = 0
        self._inflight = deque()

    def bind(self, tenant_base, rng, step_seconds=1):
        super().bind(tenant_base, rng, step_seconds)
        self._ptr = 0
        self._releases = []
        self._inflight = deque()

    @property
    def peak_demand(self) -> int:
        return max_concurrency(self.events)

    def _align(self, t):
        s = self.step_seconds
        return -(-t // s) * s

    def next_time(self, t):
        nxt = INF
        if self._ptr < len(self.events):
            nxt = self._align(self.events[self._ptr][1])
        if self._releases:
            nxt = min(nxt, self._align(self._releases[0][0]))
        return max(t, nxt)

    def step(self, now):
        releases = []
        rel = self._releases
        while rel and rel[0][0] <= now:
            _, _, tenant, ip = heappop(rel)
            releases.append((tenant, ip))
        allocs = []
        ev = self.events
        base = self.tenant_base
        while self._ptr < len(ev) and ev[self._ptr][1] <= now:
            tenant, _, t_r = ev[self._ptr]
            allocs.append(base + tenant)
            self._inflight.append(t_r)
            self._ptr += 1
        return releases, allocs

    def granted(self, tenant, ip, now):
        t_r = self._inflight.popleft()
        self._seq += 1
        heappush(self._releases, (t_r, self._seq, tenant, ip))

    def denied(self, tenant, now):
        # the event is dropped together with its release
        self._inflight.popleft()

    def held_count(self):
        return len(self._releases)


def max_concurrency(events: Iterable[tuple]) -> int:
    """Peak number of simultaneously held IPs (releases apply before allocations)."""
    deltas = []
    for _, t_a, t_r in events:
        deltas.append((t_a, 1))
        deltas.append((t_r, -1))
    deltas.sort()
    cur = peak = 0
    for _, d in deltas:
        cur += d
        peak = max(peak, cur)
    return peak
