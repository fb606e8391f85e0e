import bisect
import random

import pytest
from hypothesis import given, settings, strategies as st

from ippoolsim.core import NEVER, ContractViolation, IpTable, PoolExhausted
from ippoolsim.policies import (IdIndex, LRUPolicy, RandomPolicy, SegmentedPolicy, TaggedPolicy,
                                make_policy)
from oracles import compare_sequence

POLICY_NAMES = ("Random", "LRU", "Tagged", "Segmented")


def pool(policy, size, seed=0):
    policy.bind(IpTable(size), random.Random(seed))
    policy.init_pool()
    return policy


@pytest.mark.parametrize("name", POLICY_NAMES)
def test_fresh_pool(name):
    p = pool(make_policy(name), 3)
    assert p.free_ips() == {0, 1, 2}
    assert all(p.table.record(ip).tag is None for ip in range(3))
    assert all(t == NEVER for t in p.table.t_r)


@pytest.mark.parametrize("name", POLICY_NAMES)
def test_contract_errors(name):
    p = pool(make_policy(name), 2)
    with pytest.raises(ContractViolation):
        p.release(0, 5)
    with pytest.raises(ContractViolation):
        p.init(1)
    with pytest.raises(ContractViolation):
        p.init_pool()
    p.allocate(0, 0)
    p.allocate(0, 0)
    with pytest.raises(PoolExhausted):
        p.allocate(0, 0)


def test_incremental_init_matches_bulk():
    p = LRUPolicy().bind(IpTable(3), random.Random(0))
    for ip in (2, 0, 1):
        p.init(ip)
    assert [p.allocate(0, 0) for _ in range(3)] == [0, 1, 2]


# Random

def test_random_prefers_ips_past_reuse_delay():
    for seed in range(50):
        p = pool(RandomPolicy(1800), 2, seed)
        a, b = p.allocate(1, 0), p.allocate(1, 0)
        p.release(a, 100)
        p.release(b, 100 + 1560)
        now = 100 + 1860  # a free for 31 min, b for 5 min
        assert p.allocate(2, now) == a


def test_random_falls_back_to_oldest_release():
    p = pool(RandomPolicy(1800), 1)
    ip = p.allocate(1, 0)
    p.release(ip, 0)
    assert p.allocate(1, 300) == ip
    assert p.counters["reuse_fallbacks"] == 1


def test_random_uniform_over_fresh_pool():
    counts = [0] * 4
    for seed in range(4000):
        counts[pool(RandomPolicy(), 4, seed).allocate(0, 0)] += 1
    assert all(abs(c / 4000 - 0.25) < 0.03 for c in counts)


# LRU

def test_lru_fresh_first_then_oldest():
    p = pool(LRUPolicy(), 3)
    a, b = p.allocate(0, 0), p.allocate(0, 0)
    p.release(b, 50)
    p.release(a, 100)
    assert p.allocate(0, 200) == 2  # never released
    assert p.allocate(0, 200) == b
    assert p.allocate(0, 200) == a


def test_lru_deterministic():
    def go():
        p = pool(LRUPolicy(), 5, seed=random.randrange(10**6))
        ips = [p.allocate(0, 0) for _ in range(3)]
        for t, ip in zip((30, 10, 20), ips):
            p.release(ip, t)
        return [p.allocate(1, 40) for _ in range(5)]
    assert go() == go()


# Tagged

def test_tagged_returns_own_ip():
    p = pool(TaggedPolicy(), 4)
    ip = p.allocate(7, 0)
    p.release(ip, 10)
    for t in range(3):
        p.allocate(99, 11)  # other tenants drain fresh IPs first
    assert p.allocate(7, 20) == ip
    assert p.counters["tag_hits"] == 1


def test_tagged_lru_fallback():
    p = pool(TaggedPolicy(), 2)
    a, b = p.allocate(3, 0), p.allocate(9, 0)
    p.release(b, 50)
    p.release(a, 100)
    assert p.allocate(7, 200) == b


def test_tagged_lru_among_own_tags():
    p = pool(TaggedPolicy(), 3)
    a, b = p.allocate(7, 0), p.allocate(7, 0)
    p.release(b, 40)
    p.release(a, 100)
    assert p.allocate(7, 200) == b  # fresh IP 2 is ignored


# Segmented

def test_segmented_release_sets_cooldown_and_stats():
    p = pool(SegmentedPolicy(alpha=2), 2)
    ip = p.allocate(1, 0)
    p.release(ip, 600)
    assert p.table.t_cd[ip] == 1800
    q = pool(SegmentedPolicy(alpha=0), 1)
    ip = q.allocate(1, 5)
    q.release(ip, 70)
    assert q.table.t_cd[ip] == 70
    s = pool(SegmentedPolicy(), 1)
    ip = s.allocate(4, 0)
    s.release(ip, 100)
    ip = s.allocate(4, 100)
    s.release(ip, 400)
    st4 = s.tenant_stats(4)
    assert st4.d_a_total == 400 and st4.n_a == 2 and st4.mean_d_a == 200


def test_segmented_new_tenant_takes_expired_ip():
    p = pool(SegmentedPolicy(alpha=2), 2)
    a, b = p.allocate(1, 0), p.allocate(1, 0)
    p.release(a, 100)  # t_cd 300
    p.release(b, 300)  # t_cd 900
    assert p.allocate(5, 400) == a  # remaining {a: 0, b: 500}


def test_segmented_matches_weighted_mean_duration():
    p = pool(SegmentedPolicy(alpha=2), 3)
    a, b = p.allocate(1, 0), p.allocate(1, 0)
    c = p.allocate(1, 1)
    p.release(a, 10)    # t_cd 30
    p.release(b, 1200)  # t_cd 3600
    p.release(c, 1834)  # t_cd 5500
    st8 = p.tenant_stats(8)
    st8.d_a_total = 600  # one completed allocation of 600 s once n_a is bumped
    assert p.allocate(8, 2500) == b  # remaining {0, 1100, 3000}, target 1200


def test_segmented_own_tag_wins():
    p = pool(SegmentedPolicy(alpha=2), 3)
    x = p.allocate(6, 0)
    p.release(x, 5000)  # long cooldown
    assert p.allocate(6, 5001) == x


def test_segmented_exhausted_does_not_count_allocation():
    p = pool(SegmentedPolicy(), 1)
    p.allocate(2, 0)
    with pytest.raises(PoolExhausted):
        p.allocate(3, 0)
    assert p.tenant_stats(3).n_a == 0


# invariants

ops = st.lists(st.tuples(st.booleans(), st.integers(0, 3), st.sampled_from((0, 1, 60, 900, 1800, 4000))),
               min_size=1, max_size=120)


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(POLICY_NAMES), st.integers(1, 12), ops, st.integers(0, 2**32))
def test_partition_invariant(name, size, seq, seed):
    p = pool(make_policy(name), size, seed)
    held = []
    now = 0
    for alloc, tenant, gap in seq:
        now += gap
        if alloc and len(held) < size:
            held.append(p.allocate(tenant, now))
        elif held:
            p.release(held.pop(tenant % len(held)), now)
        free = p.free_ips()
        allocated = {ip for ip in range(size) if p.table.allocated[ip]}
        assert free | allocated == set(range(size))
        assert not free & allocated
        assert allocated == set(held) and len(held) == len(set(held))
        assert p.n_free == len(free)


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(("Tagged", "Segmented")), st.integers(1, 8), st.integers(0, 20),
       st.lists(st.integers(1, 3000), min_size=1, max_size=30))
def test_self_return(name, k, extra, holds):
    p = pool(make_policy(name), k + extra)
    seen = set()
    now = 0
    for h in holds:
        got = [p.allocate(0, now) for _ in range(k)]
        seen.update(got)
        now += h
        for ip in got:
            p.release(ip, now)
    assert len(seen) <= k


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 10), ops, st.integers(0, 2**32))
def test_random_reuse_floor(size, seq, seed):
    p = pool(RandomPolicy(1800), size, seed)
    held = []
    now = 0
    for alloc, tenant, gap in seq:
        now += gap
        if alloc and len(held) < size:
            eligible = [ip for ip in p.free_ips() if now - p.table.t_r[ip] >= 1800]
            ip = p.allocate(tenant, now)
            if eligible:
                assert ip in eligible
            held.append(ip)
        elif held:
            p.release(held.pop(0), now)


@settings(max_examples=200, deadline=None)
@given(st.sampled_from(POLICY_NAMES), st.integers(1, 64), st.integers(0, 2**31),
       st.sampled_from((0.0, 0.5, 2.0, 3.0)))
def test_matches_linear_scan_oracle(name, size, seed, alpha):
    compare_sequence(name, size, seed, n_ops=150, alpha=alpha)


def test_tag_heaps_are_compacted():
    p = pool(TaggedPolicy(), 4)
    for t in range(20000):
        ip = p.allocate(t % 3, t)
        p.release(ip, t)
    assert len(p.queue) <= 4 * p.n_free + 4096
    assert p._tag_entries <= 4 * p.n_free + 4096


def test_make_policy_rejects_unknown():
    with pytest.raises(ValueError):
        make_policy("MRU")


@given(st.integers(1, 3000), st.lists(st.tuples(st.booleans(), st.floats(0, 1, exclude_max=True)),
                                      max_size=300), st.integers(0, 3))
def test_id_index_matches_sorted_list(capacity, ops, shift):
    rng = random.Random(capacity)
    start = rng.sample(range(capacity), capacity // 2)
    idx = IdIndex(capacity, start, shift=shift)
    ref = sorted(start)
    absent = sorted(set(range(capacity)) - set(start))
    for is_add, u in ops:
        if is_add and absent:
            ip = absent.pop(int(u * len(absent)))
            idx.add(ip)
            bisect.insort(ref, ip)
        elif ref:
            k = int(u * len(ref))
            ip = ref.pop(k)
            assert idx.pop(k) == ip
            bisect.insort(absent, ip)
        assert len(idx) == len(ref)
    assert list(idx) == ref
