"""Discrete-time simulator of public-cloud IP address pools."""
from .analysis import (FreeDurationCDF, RunStats, fit_exponential_mle,
                       free_duration_distribution, lc_yield, unique_ip_yield,
                       window_yields)
from .agents import AdversaryAgent, AutoscaleAgent, TraceAgent
from .behavior import (BehaviorSpec, LatentConfigModel, fourier_deviation,
                       sample_behavior_spec, sample_latent_config, target_servers)
from .core import (NEVER, ConfigError, ContractViolation, IpRecord, IpTable,
                   LatentConfig, PoolExhausted, RunConfig, TenantStats,
                   allocation_ratio, day_fraction, derive_pool_size)
from .engine import Simulator, run
from .policies import (LRUPolicy, Policy, RandomPolicy, SegmentedPolicy,
                       TaggedPolicy, make_policy)
from .scenarios import build_simulation, run_config, scenario_config

__version__ = "0.1.0"
