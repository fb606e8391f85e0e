"""Benign tenant demand and latent-configuration models."""
from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import SECONDS_PER_DAY, ConfigError, LatentConfig

TWO_PI = 2.0 * math.pi
_MIN_AMPLITUDE = 1e-9


@dataclass(frozen=True)
class BehaviorSpec:
    """Fourier autoscaling parameters of one tenant (period: one day)."""
    s_min: int
    s_max: int
    amplitudes: tuple
    phases: tuple

    def __post_init__(self):
        if not 0 <= self.s_min <= self.s_max:
            raise ConfigError(f"need 0 <= s_min <= s_max, got {self.s_min}, {self.s_max}")
        if len(self.amplitudes) != len(self.phases) or not self.amplitudes:
            raise ConfigError("amplitudes and phases must be non-empty and equal length")
        if sum(a / i for i, a in enumerate(self.amplitudes, 1)) <= 0:
            raise ConfigError("all Fourier amplitudes are zero")

    @property
    def n_terms(self) -> int:
        return len(self.amplitudes)

    @property
    def s_mean(self) -> float:
        return (self.s_max + self.s_min) / 2


@dataclass(frozen=True)
class LatentConfigModel:
    p_c: float = 0.5

    def __post_init__(self):
        if not 0 <= self.p_c <= 1:
            raise ConfigError("p_c must be in [0, 1]")


def fourier_deviation(t: float, spec: BehaviorSpec) -> float:
    """Relative deviation from mean usage at day fraction ``t``; in [-1, 1]."""
    num = 0.0
    den = 0.0
    for i, (a, phi) in enumerate(zip(spec.amplitudes, spec.phases), 1):
        w = a / i
        num += w * math.sin(TWO_PI * i * (t + phi))
        den += w
    return num / den


def target_servers(t: float, spec: BehaviorSpec) -> int:
    s = spec.s_mean + (spec.s_max - spec.s_min) * fourier_deviation(t, spec)
    return min(spec.s_max, max(spec.s_min, round(s)))


def sample_behavior_spec(rng: random.Random, s_min: int, s_max: int,
                         n_terms: int = 4, bias_phase1: bool = True) -> BehaviorSpec:
    if n_terms < 1:
        raise ConfigError("n_terms must be >= 1")
    while True:
        amps = tuple(rng.random() for _ in range(n_terms))
        if any(a >= _MIN_AMPLITUDE for a in amps):
            break
    phases = [rng.random() for _ in range(n_terms)]
    if bias_phase1:
        phases[0] = 0.5 * rng.random()
    return BehaviorSpec(s_min, s_max, amps, tuple(phases))


def sample_vulnerability_duration(rng: random.Random, d_a: float) -> float:
    """Exponential draw with mean ``d_a`` by inverse CDF."""
    u = 1.0 - rng.random()  # (0, 1]
    return -d_a * math.log(u)


def sample_latent_config(rng: random.Random, model: LatentConfigModel, d_a: int,
                         t_r: int, tenant: int, config_id: int = 0) -> Optional[LatentConfig]:
    """Latent configuration left by a release, or None.

    The vulnerability window is exponential with mean equal to the allocation
    duration, rounded to whole seconds; a zero-length window leaves nothing.
    """
    if d_a < 0:
        raise ValueError("d_a must be non-negative")
    if rng.random() >= model.p_c:
        return None
    d_v = round(sample_vulnerability_duration(rng, d_a))
    if d_v <= 0:
        return None
    return LatentConfig(config_id, tenant, t_r, t_r + d_v)


@dataclass
class DailySchedule:
    """Per-step target changes of a tenant population over one day.

    ``initial[j]`` is tenant j's target at the first step of the day; the
    arrays ``steps``/``tenants``/``targets`` list every change (step index
    within the day, tenant index, new target) in (step, tenant) order.
    ``demand[k]`` is the summed target at step k.
    """
    step_seconds: int
    initial: np.ndarray
    steps: np.ndarray
    tenants: np.ndarray
    targets: np.ndarray
    demand: np.ndarray

    @property
    def steps_per_day(self) -> int:
        return SECONDS_PER_DAY // self.step_seconds

    @property
    def peak_demand(self) -> int:
        return int(self.demand.max()) if len(self.demand) else 0


def daily_targets(specs: Sequence[BehaviorSpec], step_seconds: int = 1) -> np.ndarray:
    """Target matrix (tenants x steps per day). Small populations only."""
    return np.vstack(list(_target_chunks(specs, step_seconds, len(specs) or 1))) \
        if specs else np.zeros((0, SECONDS_PER_DAY // step_seconds), dtype=np.int64)


def _target_chunks(specs, step_seconds, chunk):
    k = SECONDS_PER_DAY // step_seconds
    t = np.arange(k, dtype=np.float64) * step_seconds / SECONDS_PER_DAY
    n_max = max(s.n_terms for s in specs)
    orders = np.arange(1, n_max + 1)
    # sin(2*pi*i*(t+phi)) = sin(2*pi*i*t)cos(2*pi*i*phi) + cos(2*pi*i*t)sin(2*pi*i*phi)
    basis = np.vstack([np.sin(TWO_PI * orders[:, None] * t[None, :]),
                       np.cos(TWO_PI * orders[:, None] * t[None, :])])
    for start in range(0, len(specs), chunk):
        block = specs[start:start + chunk]
        coef = np.zeros((len(block), 2 * n_max))
        mean = np.empty(len(block))
        span = np.empty(len(block))
        lo = np.empty(len(block))
        hi = np.empty(len(block))
        for j, s in enumerate(block):
            n = s.n_terms
            w = np.asarray(s.amplitudes) / orders[:n]
            ang = TWO_PI * orders[:n] * np.asarray(s.phases)
            den = w.sum()
            coef[j, :n] = w * np.cos(ang) / den
            coef[j, n_max:n_max + n] = w * np.sin(ang) / den
            mean[j] = s.s_mean
            span[j] = s.s_max - s.s_min
            lo[j] = s.s_min
            hi[j] = s.s_max
        dev = coef @ basis
        dev *= span[:, None]
        dev += mean[:, None]
        np.rint(dev, out=dev)
        np.clip(dev, lo[:, None], hi[:, None], out=dev)
        yield dev.astype(np.int64)


def build_schedule(specs: Sequence[BehaviorSpec], step_seconds: int = 1) -> DailySchedule:
    k = SECONDS_PER_DAY // step_seconds
    n = len(specs)
    if n == 0:
        empty = np.zeros(0, dtype=np.int64)
        return DailySchedule(step_seconds, empty, empty, empty, empty, np.zeros(k, dtype=np.int64))
    chunk = max(1, 4_000_000 // k)
    initial = np.empty(n, dtype=np.int64)
    demand = np.zeros(k, dtype=np.int64)
    ev_steps, ev_tenants, ev_targets = [], [], []
    for c, block in enumerate(_target_chunks(specs, step_seconds, chunk)):
        base = c * chunk
        initial[base:base + len(block)] = block[:, 0]
        demand += block.sum(axis=0)
        changed = block != np.roll(block, 1, axis=1)
        rows, cols = np.nonzero(changed)
        ev_steps.append(cols)
        ev_tenants.append(rows + base)
        ev_targets.append(block[rows, cols])
    steps = np.concatenate(ev_steps)
    tenants = np.concatenate(ev_tenants)
    targets = np.concatenate(ev_targets)
    order = np.lexsort((tenants, steps))
    return DailySchedule(step_seconds, initial, steps[order], tenants[order],
                         targets[order], demand)
