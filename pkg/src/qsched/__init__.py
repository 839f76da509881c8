"""Cluster scheduling simulator with a tabular Q-learning agent,
classical baseline policies, and a reproducible experiment harness."""

from .agent import (
    DEFAULT_SCHEME,
    DiscretizationScheme,
    Hyperparams,
    ReplayBuffer,
    Transition,
    discretize,
    epsilon_schedule,
    greedy_policy,
    load_q_table,
    q_update,
    reward,
    save_q_table,
    select_action,
    train,
    train_on,
)
from .baselines import POLICY_ORDER, make_policy
from .errors import ConfigError, TraceError, TraceFormatError, TraceValidationError
from .harness import (
    ExperimentConfig,
    FleetConfig,
    RunReport,
    WorkloadSpec,
    benchmark_config,
    compare,
    compute_metrics,
    emit_reports,
    sweep_alpha,
)
from .simulation import (
    Action,
    ClusterState,
    EpisodeLog,
    Machine,
    Observation,
    Outcome,
    OutcomeKind,
    Place,
    SimConfig,
    Task,
    advance_tick,
    apply_action,
    init_cluster,
    observe,
    place_task,
    run_episode,
)
from .workload import SynthParams, Workload, generate_synthetic, parse_trace, write_trace

__version__ = "0.1.0"
