"""IP allocation policies: Random, LRU, Tagged and Segmented.

Every policy implements ``init(ip)``, ``allocate(tenant, now) -> ip`` and
``release(ip, now)`` over a shared :class:`~ippoolsim.core.IpTable`. All
argmin selections break ties on the lowest IP index.
"""
from __future__ import annotations

import random
from collections import Counter
from bisect import insort
from heapq import heapify, heappop, heappush
from typing import Optional

from sortedcontainers import SortedList

from .core import (NEVER, NO_TENANT, ConfigError, ContractViolation, IpTable,
                   PoolExhausted, TenantStats)


class Policy:
    name = "base"
    uses_tags = False

    def __init__(self):
        self.table: Optional[IpTable] = None
        self.n_free = 0
        self.counters: Counter = Counter()

    def bind(self, table: IpTable, rng: Optional[random.Random] = None) -> "Policy":
        self.table = table
        self.rng = rng if rng is not None else random.Random(0)
        self.registered = bytearray(table.size)
        return self

    def init_pool(self) -> None:
        """Register every IP of the bound table as fresh."""
        if any(self.registered):
            raise ContractViolation("pool already initialised")
        tb = self.table
        self.registered = bytearray(b"\x01") * tb.size
        for ip in range(tb.size):
            tb.t_r[ip] = NEVER
            tb.t_cd[ip] = 0
            tb.tag[ip] = NO_TENANT
        self.n_free = tb.size
        self._add_all_fresh(tb.size)

    def init(self, ip: int) -> None:
        tb = self.table
        if self.registered[ip]:
            raise ContractViolation(f"IP {ip} already registered")
        self.registered[ip] = 1
        tb.t_r[ip] = NEVER
        tb.t_cd[ip] = 0
        tb.tag[ip] = NO_TENANT
        self.n_free += 1
        self._add_fresh(ip)

    def allocate(self, tenant: int, now: int) -> int:
        if self.n_free == 0:
            raise PoolExhausted(f"no free IP for tenant {tenant} at t={now}")
        ip = self._select(tenant, now)
        tb = self.table
        tb.allocated[ip] = 1
        tb.t_a[ip] = now
        tb.tag[ip] = tenant
        self.n_free -= 1
        return ip

    def release(self, ip: int, now: int) -> None:
        tb = self.table
        if not tb.allocated[ip]:
            raise ContractViolation(f"release of free IP {ip}")
        tb.allocated[ip] = 0
        tb.t_r[ip] = now
        self.n_free += 1
        self._add_released(ip, now)

    def free_ips(self) -> set:
        """Free IPs according to the policy's own index structures."""
        raise NotImplementedError

    # subclasses

    def _add_all_fresh(self, size: int) -> None:
        for ip in range(size):
            self._add_fresh(ip)

    def _add_fresh(self, ip: int) -> None:
        raise NotImplementedError

    def _add_released(self, ip: int, now: int) -> None:
        raise NotImplementedError

    def _select(self, tenant: int, now: int) -> int:
        raise NotImplementedError


class IdIndex:
    """Set of ints in [0, capacity) with O(log n) add and k-th smallest pop.

    Ids live in fixed-width sorted buckets; a Fenwick tree over bucket sizes
    finds the bucket holding rank k. Faster than a SortedList for the
    pop-random/add churn of the Random policy.
    """

    def __init__(self, capacity: int, items=(), shift: int = 9):
        self.shift = shift
        nb = (max(capacity, 1) - 1 >> shift) + 1
        self.nb = nb
        self.buckets = [[] for _ in range(nb)]
        for ip in sorted(items):
            self.buckets[ip >> shift].append(ip)
        tree = [0] * (nb + 1)
        for j, b in enumerate(self.buckets, 1):
            tree[j] += len(b)
            k = j + (j & -j)
            if k <= nb:
                tree[k] += tree[j]
        self.tree = tree
        self.n = sum(len(b) for b in self.buckets)
        top = 1
        while top * 2 <= nb:
            top *= 2
        self.top = top

    def __len__(self):
        return self.n

    def __iter__(self):
        for b in self.buckets:
            yield from b

    def add(self, ip: int) -> None:
        j = ip >> self.shift
        insort(self.buckets[j], ip)
        tree = self.tree
        nb = self.nb
        j += 1
        while j <= nb:
            tree[j] += 1
            j += j & -j
        self.n += 1

    def pop(self, k: int) -> int:
        """Remove and return the k-th smallest id (0-based)."""
        if not 0 <= k < self.n:
            raise IndexError(k)
        tree = self.tree
        nb = self.nb
        pos = 0
        m = self.top
        while m:
            q = pos + m
            if q <= nb and tree[q] <= k:
                pos = q
                k -= tree[q]
            m >>= 1
        ip = self.buckets[pos].pop(k)
        pos += 1
        while pos <= nb:
            tree[pos] -= 1
            pos += pos & -pos
        self.n -= 1
        return ip


class RandomPolicy(Policy):
    """Uniform choice among free IPs idle for at least ``d_reuse`` seconds.

    When no free IP qualifies the oldest-released free IP is returned instead.
    Uniform choice is the k-th qualifying IP in index order with
    ``k = int(u * n_eligible)`` for ``u = rng.random()``.
    """
    name = "Random"

    def __init__(self, d_reuse: int = 1800):
        super().__init__()
        self.d_reuse = d_reuse
        self.eligible = IdIndex(0)
        self.cooling: list = []  # heap of (t_r, ip)

    def bind(self, table, rng=None):
        super().bind(table, rng)
        self.eligible = IdIndex(table.size)
        return self

    def _add_fresh(self, ip):
        self.eligible.add(ip)

    def _add_all_fresh(self, size):
        self.eligible = IdIndex(size, range(size))

    def _add_released(self, ip, now):
        heappush(self.cooling, (now, ip))

    def release(self, ip, now):
        tb = self.table
        if not tb.allocated[ip]:
            raise ContractViolation(f"release of free IP {ip}")
        tb.allocated[ip] = 0
        tb.t_r[ip] = now
        self.n_free += 1
        heappush(self.cooling, (now, ip))

    def _refresh(self, now):
        cooling = self.cooling
        limit = now - self.d_reuse
        add = self.eligible.add
        while cooling and cooling[0][0] <= limit:
            add(heappop(cooling)[1])

    def _select(self, tenant, now):
        self._refresh(now)
        eligible = self.eligible
        if eligible:
            return eligible.pop(int(self.rng.random() * len(eligible)))
        self.counters["reuse_fallbacks"] += 1
        return heappop(self.cooling)[1]

    def allocate(self, tenant, now):
        # inlined base allocate + refresh; this is the hot path of benign runs
        if self.n_free == 0:
            raise PoolExhausted(f"no free IP for tenant {tenant} at t={now}")
        cooling = self.cooling
        if cooling and cooling[0][0] <= now - self.d_reuse:
            self._refresh(now)
        eligible = self.eligible
        if eligible.n:
            ip = eligible.pop(int(self.rng.random() * eligible.n))
        else:
            self.counters["reuse_fallbacks"] += 1
            ip = heappop(cooling)[1]
        tb = self.table
        tb.allocated[ip] = 1
        tb.t_a[ip] = now
        tb.tag[ip] = tenant
        self.n_free -= 1
        return ip

    def free_ips(self):
        return set(self.eligible) | {ip for _, ip in self.cooling}


class LRUPolicy(Policy):
    """Always hands out the free IP released longest ago (FIFO)."""
    name = "LRU"

    def __init__(self):
        super().__init__()
        self.queue: list = []  # heap of (t_r, ip)

    def _add_all_fresh(self, size):
        # ascending (NEVER, ip) is already a valid heap
        self.queue = [(NEVER, ip) for ip in range(size)]

    def _add_fresh(self, ip):
        heappush(self.queue, (NEVER, ip))

    def _add_released(self, ip, now):
        heappush(self.queue, (now, ip))

    def _select(self, tenant, now):
        return heappop(self.queue)[1]

    def free_ips(self):
        return {ip for _, ip in self.queue}


class TaggedPolicy(Policy):
    """Own-tag LRU first, then global LRU over all free IPs.

    Heaps hold ``(t_r, ip, generation)`` entries and are cleaned lazily: an
    entry is live only while its IP is free and its generation matches the
    IP's release count.
    """
    name = "Tagged"
    uses_tags = True

    def __init__(self):
        super().__init__()
        self.queue: list = []
        self.by_tag: dict = {}
        self.gen: list = []
        self._tag_entries = 0

    def bind(self, table, rng=None):
        super().bind(table, rng)
        self.gen = [0] * table.size
        return self

    def _add_all_fresh(self, size):
        self.queue = [(NEVER, ip, 0) for ip in range(size)]

    def _live(self, entry):
        ip = entry[1]
        return not self.table.allocated[ip] and self.gen[ip] == entry[2]

    def _add_fresh(self, ip):
        heappush(self.queue, (NEVER, ip, self.gen[ip]))

    def _add_released(self, ip, now):
        g = self.gen[ip] + 1
        self.gen[ip] = g
        entry = (now, ip, g)
        heappush(self.queue, entry)
        self._push_tag(entry)
        if len(self.queue) > 4 * self.n_free + 4096:
            self._compact()

    def _push_tag(self, entry):
        tag = self.table.tag[entry[1]]
        h = self.by_tag.get(tag)
        if h is None:
            self.by_tag[tag] = [entry]
        else:
            heappush(h, entry)
        self._tag_entries += 1
        if self._tag_entries > 4 * self.n_free + 4096:
            self._compact()

    def _pop_tagged(self, tenant):
        h = self.by_tag.get(tenant)
        if h is None:
            return None
        allocated = self.table.allocated
        gen = self.gen
        while h:
            _, ip, g = heappop(h)
            self._tag_entries -= 1
            if not allocated[ip] and gen[ip] == g:
                if not h:
                    del self.by_tag[tenant]
                return ip
        del self.by_tag[tenant]
        return None

    def _pop_lru(self):
        q = self.queue
        allocated = self.table.allocated
        gen = self.gen
        while q:
            _, ip, g = heappop(q)
            if not allocated[ip] and gen[ip] == g:
                return ip
        raise PoolExhausted("LRU queue empty")

    def _select(self, tenant, now):
        ip = self._pop_tagged(tenant)
        if ip is not None:
            self.counters["tag_hits"] += 1
            return ip
        self.counters["tag_misses"] += 1
        return self._pop_lru()

    def _compact(self):
        self.queue = [e for e in self.queue if self._live(e)]
        heapify(self.queue)
        self._compact_tags()

    def _compact_tags(self):
        total = 0
        for tag in list(self.by_tag):
            h = [e for e in self.by_tag[tag] if self._live(e)]
            if h:
                heapify(h)
                self.by_tag[tag] = h
                total += len(h)
            else:
                del self.by_tag[tag]
        self._tag_entries = total

    def free_ips(self):
        return {e[1] for e in self.queue if self._live(e)}


class SegmentedPolicy(TaggedPolicy):
    """IP scan segmentation.

    Own-tag LRU first. Otherwise the free IP whose remaining cooldown
    ``max(t_cd - now, 0)`` is closest to ``alpha`` times the tenant's mean
    completed allocation duration. Released IPs cool down until
    ``t_r + alpha * (t_r - t_a)``.
    """
    name = "Segmented"

    def __init__(self, alpha: float = 2.0):
        super().__init__()
        if alpha < 0:
            raise ConfigError("alpha must be non-negative")
        self.alpha = alpha
        self.cooling = SortedList()  # (t_cd, ip) with t_cd > last refresh time
        self.expired = SortedList()  # ips with t_cd <= last refresh time
        self.stats: dict = {}

    def _add_fresh(self, ip):
        self.expired.add(ip)

    def _add_all_fresh(self, size):
        self.expired = SortedList(range(size))

    def tenant_stats(self, tenant: int) -> TenantStats:
        st = self.stats.get(tenant)
        if st is None:
            st = self.stats[tenant] = TenantStats(tenant)
        return st

    def release(self, ip, now):
        tb = self.table
        if not tb.allocated[ip]:
            raise ContractViolation(f"release of free IP {ip}")
        held = now - tb.t_a[ip]
        tb.t_cd[ip] = now + self.alpha * held
        self.tenant_stats(tb.tag[ip]).d_a_total += held
        super().release(ip, now)

    def _add_released(self, ip, now):
        # tag heap only; the global LRU queue is unused here
        g = self.gen[ip] + 1
        self.gen[ip] = g
        self._push_tag((now, ip, g))
        t_cd = self.table.t_cd[ip]
        if t_cd > now:
            self.cooling.add((t_cd, ip))
        else:
            self.expired.add(ip)

    def _refresh(self, now):
        cooling = self.cooling
        if cooling and cooling[0][0] <= now:
            i = cooling.bisect_right((now, float("inf")))
            moved = [ip for _, ip in cooling[:i]]
            del cooling[:i]
            self.expired.update(moved)

    def _detach(self, ip, now):
        t_cd = self.table.t_cd[ip]
        if t_cd <= now:
            self.expired.remove(ip)
        else:
            self.cooling.remove((t_cd, ip))

    def _select(self, tenant, now):
        st = self.tenant_stats(tenant)
        st.n_a += 1
        self._refresh(now)
        ip = self._pop_tagged(tenant)
        if ip is not None:
            self.counters["tag_hits"] += 1
            self._detach(ip, now)
            return ip
        self.counters["tag_misses"] += 1
        ip = self._closest(self.alpha * st.mean_d_a, now)
        self._detach(ip, now)
        return ip

    def _closest(self, target, now):
        best = None
        if self.expired:
            best = (abs(0 - target), self.expired[0])
        cooling = self.cooling
        if cooling:
            key = (now + target, -1)
            # two distinct cooldown values on each side of the split absorb
            # rounding in now + target; within a group the lowest ip wins
            groups = 0
            last = None
            low = None
            for t_cd, ip in cooling.irange(maximum=key, reverse=True, inclusive=(True, False)):
                if t_cd != last:
                    if low is not None:
                        cand = (abs(max(last - now, 0) - target), low)
                        if best is None or cand < best:
                            best = cand
                    groups += 1
                    if groups > 2:
                        low = None
                        break
                    last = t_cd
                low = ip
            if low is not None:
                cand = (abs(max(last - now, 0) - target), low)
                if best is None or cand < best:
                    best = cand
            groups = 0
            last = None
            for t_cd, ip in cooling.irange(minimum=key):
                if t_cd == last:
                    continue
                groups += 1
                if groups > 2:
                    break
                last = t_cd
                cand = (abs(max(t_cd - now, 0) - target), ip)
                if best is None or cand < best:
                    best = cand
        return best[1]

    def free_ips(self):
        return set(self.expired) | {ip for _, ip in self.cooling}

    def _compact(self):
        self._compact_tags()


def make_policy(name: str, d_reuse: int = 1800, alpha: float = 2.0) -> Policy:
    if name == "Random":
        return RandomPolicy(d_reuse)
    if name == "LRU":
        return LRUPolicy()
    if name == "Tagged":
        return TaggedPolicy()
    if name == "Segmented":
        return SegmentedPolicy(alpha)
    raise ConfigError(f"unknown policy {name!r}")
