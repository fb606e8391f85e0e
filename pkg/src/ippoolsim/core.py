"""Shared domain types, simulated time and run configuration."""
from __future__ import annotations

import json
import math
import random
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Optional

import numpy as np

SECONDS_PER_DAY = 86400

# Release time of an IP that was never allocated. Sorts before every real time
# and is far enough in the past that any reuse delay is satisfied.
NEVER = -(1 << 62)

# Tag value of an IP no tenant has held yet.
NO_TENANT = -1

POLICIES = ("Random", "LRU", "Tagged", "Segmented")
SCENARIOS = ("benign", "single-tenant", "multi-tenant", "trace-replay")


class SimulationError(Exception):
    """Base class for simulator errors."""


class ContractViolation(SimulationError):
    """An operation was called outside its precondition."""


class PoolExhausted(SimulationError):
    """No free IP is available for an allocation request."""


class ConfigError(SimulationError, ValueError):
    """Invalid run configuration."""


def day_fraction(seconds: int) -> float:
    """Map simulated seconds onto the daily cycle, in [0, 1)."""
    return (seconds % SECONDS_PER_DAY) / SECONDS_PER_DAY


def allocation_ratio(allocated_count: int, pool_size: int) -> float:
    if pool_size <= 0:
        raise ContractViolation("pool_size must be positive")
    if not 0 <= allocated_count <= pool_size:
        raise ContractViolation(
            f"allocated_count {allocated_count} outside [0, {pool_size}]")
    return allocated_count / pool_size


def derive_pool_size(peak_demand: int, ar_max: float) -> int:
    """Smallest pool whose allocation ratio at ``peak_demand`` stays <= ar_max."""
    if not 0 < ar_max <= 1:
        raise ConfigError(f"ar_max must be in (0, 1], got {ar_max}")
    if peak_demand < 0:
        raise ConfigError("peak_demand must be non-negative")
    size = max(1, math.ceil(peak_demand / ar_max))
    # guard against float rounding in the division
    while size > 1 and peak_demand / (size - 1) <= ar_max:
        size -= 1
    while peak_demand / size > ar_max:
        size += 1
    return size


@dataclass(slots=True)
class LatentConfig:
    config_id: int
    created_by: int
    t_r: int
    t_c: int
    discovered: bool = False

    @property
    def d_v(self) -> int:
        return self.t_c - self.t_r


@dataclass
class IpRecord:
    """Snapshot of one pool IP (the live data is held column-wise in IpTable)."""
    id: int
    allocated: bool
    t_a: int
    t_r: int
    t_cd: float
    tag: Optional[int]
    configs: list


@dataclass
class TenantStats:
    id: int
    d_a_total: int = 0
    n_a: int = 0

    @property
    def mean_d_a(self) -> float:
        return self.d_a_total / self.n_a if self.n_a > 0 else 0.0


class IpTable:
    """Column-oriented per-IP metadata shared by the engine and the policy.

    Policies own ``allocated``, ``t_a``, ``t_r``, ``t_cd`` and ``tag``; the
    engine owns ``owner`` and ``configs``.
    """

    def __init__(self, size: int):
        if size <= 0:
            raise ConfigError("pool size must be positive")
        self.size = size
        self.allocated = bytearray(size)
        self.t_a = [0] * size
        self.t_r = [NEVER] * size
        self.t_cd = [0] * size
        self.tag = [NO_TENANT] * size
        self.owner = [NO_TENANT] * size
        self.configs: list[Optional[list[LatentConfig]]] = [None] * size

    def __len__(self) -> int:
        return self.size

    def record(self, ip: int, now: Optional[int] = None) -> IpRecord:
        cfgs = self.configs[ip] or []
        if now is not None:
            cfgs = [c for c in cfgs if c.t_c > now]
        tag = self.tag[ip]
        return IpRecord(ip, bool(self.allocated[ip]), self.t_a[ip], self.t_r[ip],
                        self.t_cd[ip], None if tag == NO_TENANT else tag, list(cfgs))


def make_streams(seed: int, n: int) -> list[random.Random]:
    """Split ``seed`` into ``n`` independent scalar generators."""
    children = np.random.SeedSequence(seed).spawn(n)
    return [random.Random(int(c.generate_state(1, np.uint64)[0])) for c in children]


def derive_seed(seed: int, *path: int) -> int:
    """Deterministic child seed for sweep point ``path``."""
    ss = np.random.SeedSequence(seed, spawn_key=tuple(path))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass
class RunConfig:
    scenario: str = "benign"
    policy: str = "Random"
    seed: int = 0
    pool_size: Optional[int] = None
    ar_max: float = 0.9
    step_seconds: int = 1
    warmup_days: int = 10
    adversary_days: int = 10
    d_reuse: int = 1800
    alpha: float = 2.0
    p_c: float = 0.5
    sample_interval: int = 60
    record_free_durations: bool = True
    # autoscale tenants
    n_tenants: int = 1000
    s_max_range: tuple = (2, 50)
    s_min_fraction: tuple = (0.0, 0.8)
    n_terms: int = 4
    bias_phase1: bool = True
    # adversary
    adversary_concurrency: int = 60
    adversary_hold: int = 600
    tenant_budget: int = 10000
    # trace replay
    trace_path: Optional[str] = None

    def __post_init__(self):
        self.s_max_range = tuple(self.s_max_range)
        self.s_min_fraction = tuple(self.s_min_fraction)
        self.validate()

    def validate(self) -> None:
        if self.policy not in POLICIES:
            raise ConfigError(f"unknown policy {self.policy!r}; expected one of {POLICIES}")
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; expected one of {SCENARIOS}")
        if not 0 < self.ar_max <= 1:
            raise ConfigError("ar_max must be in (0, 1]")
        if self.pool_size is not None and self.pool_size <= 0:
            raise ConfigError("pool_size must be positive")
        if self.step_seconds <= 0 or SECONDS_PER_DAY % self.step_seconds:
            raise ConfigError("step_seconds must be a positive divisor of 86400")
        if self.warmup_days < 0 or self.adversary_days < 0:
            raise ConfigError("day counts must be non-negative")
        if self.d_reuse < 0:
            raise ConfigError("d_reuse must be non-negative")
        if self.alpha < 0:
            raise ConfigError("alpha must be non-negative")
        if not 0 <= self.p_c <= 1:
            raise ConfigError("p_c must be in [0, 1]")
        if self.sample_interval <= 0:
            raise ConfigError("sample_interval must be positive")
        if self.n_tenants < 0 or self.n_terms < 1:
            raise ConfigError("n_tenants must be >= 0 and n_terms >= 1")
        lo, hi = self.s_max_range
        if not 0 <= lo <= hi:
            raise ConfigError("s_max_range must satisfy 0 <= lo <= hi")
        flo, fhi = self.s_min_fraction
        if not 0 <= flo <= fhi <= 1:
            raise ConfigError("s_min_fraction must satisfy 0 <= lo <= hi <= 1")
        if self.adversary_concurrency <= 0 or self.adversary_hold <= 0:
            raise ConfigError("adversary concurrency and hold must be positive")
        if self.tenant_budget < 1:
            raise ConfigError("tenant_budget must be >= 1")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")

    @property
    def duration_seconds(self) -> int:
        return (self.warmup_days + self.adversary_days) * SECONDS_PER_DAY

    @property
    def has_adversary(self) -> bool:
        return self.scenario in ("single-tenant", "multi-tenant") or (
            self.scenario == "trace-replay" and self.adversary_days > 0)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["s_max_range"] = list(self.s_max_range)
        d["s_min_fraction"] = list(self.s_min_fraction)
        return d

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path: str) -> "RunConfig":
        with open(path, encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be a JSON object")
        return cls.from_dict(data)

    def replace(self, **changes) -> "RunConfig":
        d = self.to_dict()
        d.update(changes)
        return RunConfig.from_dict(d)
