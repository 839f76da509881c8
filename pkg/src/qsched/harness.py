"""Experiment orchestration: metrics, policy comparison, learning-rate sweep,
report emission, and the JSON run configuration.

Every run is a pure function of (config, seed): reports are emitted with a
stable field order and reals rounded to 9 significant digits, so two
identical invocations produce byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .agent import (
    DEFAULT_SCHEME,
    DiscretizationScheme,
    EpisodeStat,
    Hyperparams,
    reward,
    save_q_table,
    train,
)
from .baselines import POLICY_ORDER, make_policy
from .errors import ConfigError
from .simulation import EpisodeLog, SimConfig, run_episode
from .workload import SynthParams, Workload, generate_synthetic, parse_trace


def fmt9(x: float) -> str:
    return format(x, ".9g")


def round9(x: float) -> float:
    return float(fmt9(x))


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class FleetConfig:
    machines: int
    cpu_capacity: float
    mem_capacity: float


@dataclass(frozen=True)
class WorkloadSpec:
    """Exactly one of `trace` (a CSV path) or `synthetic`."""

    trace: str | None = None
    synthetic: SynthParams | None = None

    def __post_init__(self):
        if (self.trace is None) == (self.synthetic is None):
            raise ConfigError("workload spec needs exactly one of 'trace' or 'synthetic'")


@dataclass(frozen=True)
class ExperimentConfig:
    fleet: FleetConfig
    workload: WorkloadSpec
    seed: int = 0
    policies: tuple[str, ...] = POLICY_ORDER
    hyperparams: Hyperparams = field(default_factory=Hyperparams)
    max_decisions_per_tick: int = 8
    horizon: int | None = None

    def __post_init__(self):
        if self.seed < 0:
            raise ConfigError(f"seed must be non-negative, got {self.seed}")
        if not self.policies:
            raise ConfigError("policy list must not be empty")
        for p in self.policies:
            if p not in POLICY_ORDER:
                raise ConfigError(f"unknown policy '{p}' (expected one of {', '.join(POLICY_ORDER)})")

    def sim_config(self) -> SimConfig:
        return SimConfig(
            machine_count=self.fleet.machines,
            cpu_capacity=self.fleet.cpu_capacity,
            mem_capacity=self.fleet.mem_capacity,
            max_decisions_per_tick=self.max_decisions_per_tick,
            horizon=self.horizon,
        )


def _check_keys(section: dict, allowed: set[str], ctx: str) -> None:
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown} in {ctx}")


def _need(section: dict, key: str, ctx: str):
    if key not in section:
        raise ConfigError(f"missing key '{key}' in {ctx}")
    return section[key]


def _as_int(value, ctx: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{ctx} must be an integer, got {value!r}")
    return value


def _as_float(value, ctx: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{ctx} must be a number, got {value!r}")
    return float(value)


def _as_range(value, ctx: str) -> tuple:
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ConfigError(f"{ctx} must be a [min, max] pair, got {value!r}")
    return tuple(value)


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Build a config from parsed JSON; unknown keys are rejected."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    _check_keys(raw, {"seed", "fleet", "workload", "policies", "hyperparams", "sim"}, "config")
    seed = _as_int(raw.get("seed", 0), "seed")

    fleet_raw = _need(raw, "fleet", "config")
    _check_keys(fleet_raw, {"machines", "cpu_capacity", "mem_capacity"}, "fleet")
    fleet = FleetConfig(
        machines=_as_int(_need(fleet_raw, "machines", "fleet"), "fleet.machines"),
        cpu_capacity=_as_float(_need(fleet_raw, "cpu_capacity", "fleet"), "fleet.cpu_capacity"),
        mem_capacity=_as_float(_need(fleet_raw, "mem_capacity", "fleet"), "fleet.mem_capacity"),
    )

    wl_raw = _need(raw, "workload", "config")
    _check_keys(wl_raw, {"trace", "synthetic"}, "workload")
    if "trace" in wl_raw and "synthetic" in wl_raw:
        raise ConfigError("workload spec needs exactly one of 'trace' or 'synthetic'")
    if "trace" in wl_raw:
        workload_spec = WorkloadSpec(trace=str(wl_raw["trace"]))
    elif "synthetic" in wl_raw:
        synth_raw = wl_raw["synthetic"]
        _check_keys(synth_raw, {"tasks", "rate", "duration_range", "cpu_range", "mem_range", "seed"}, "workload.synthetic")
        defaults = SynthParams(task_count=0)
        synth = SynthParams(
            task_count=_as_int(_need(synth_raw, "tasks", "workload.synthetic"), "synthetic.tasks"),
            arrival_rate=_as_float(synth_raw.get("rate", defaults.arrival_rate), "synthetic.rate"),
            duration_range=_as_range(synth_raw.get("duration_range", defaults.duration_range), "synthetic.duration_range"),
            cpu_range=_as_range(synth_raw.get("cpu_range", defaults.cpu_range), "synthetic.cpu_range"),
            mem_range=_as_range(synth_raw.get("mem_range", defaults.mem_range), "synthetic.mem_range"),
            seed=_as_int(synth_raw.get("seed", seed), "synthetic.seed"),
        )
        workload_spec = WorkloadSpec(synthetic=synth)
    else:
        raise ConfigError("workload spec needs exactly one of 'trace' or 'synthetic'")

    policies = tuple(raw.get("policies", POLICY_ORDER))

    hp_raw = raw.get("hyperparams", {})
    _check_keys(hp_raw, {"alpha", "gamma", "eps_start", "eps_decay", "eps_min", "batch_size", "episodes"}, "hyperparams")
    hp_defaults = Hyperparams()
    hyperparams = Hyperparams(
        alpha=_as_float(hp_raw.get("alpha", hp_defaults.alpha), "hyperparams.alpha"),
        gamma=_as_float(hp_raw.get("gamma", hp_defaults.gamma), "hyperparams.gamma"),
        eps_start=_as_float(hp_raw.get("eps_start", hp_defaults.eps_start), "hyperparams.eps_start"),
        eps_decay=_as_float(hp_raw.get("eps_decay", hp_defaults.eps_decay), "hyperparams.eps_decay"),
        eps_min=_as_float(hp_raw.get("eps_min", hp_defaults.eps_min), "hyperparams.eps_min"),
        batch_size=_as_int(hp_raw.get("batch_size", hp_defaults.batch_size), "hyperparams.batch_size"),
        episodes=_as_int(hp_raw.get("episodes", hp_defaults.episodes), "hyperparams.episodes"),
        seed=seed,
    )

    sim_raw = raw.get("sim", {})
    _check_keys(sim_raw, {"max_decisions_per_tick", "horizon"}, "sim")
    max_decisions = _as_int(sim_raw.get("max_decisions_per_tick", 8), "sim.max_decisions_per_tick")
    horizon = sim_raw.get("horizon")
    if horizon is not None:
        horizon = _as_int(horizon, "sim.horizon")

    return ExperimentConfig(
        fleet=fleet,
        workload=workload_spec,
        seed=seed,
        policies=policies,
        hyperparams=hyperparams,
        max_decisions_per_tick=max_decisions,
        horizon=horizon,
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: not valid JSON: {e}") from None
    return config_from_dict(raw)


def config_echo(config: ExperimentConfig) -> dict:
    """Config as a plain dict, suitable for the report and checksumming."""
    if config.workload.trace is not None:
        wl = {"trace": config.workload.trace}
    else:
        s = config.workload.synthetic
        wl = {
            "synthetic": {
                "tasks": s.task_count,
                "rate": round9(s.arrival_rate),
                "duration_range": list(s.duration_range),
                "cpu_range": [round9(x) for x in s.cpu_range],
                "mem_range": [round9(x) for x in s.mem_range],
                "seed": s.seed,
            }
        }
    hp = config.hyperparams
    return {
        "seed": config.seed,
        "fleet": {
            "machines": config.fleet.machines,
            "cpu_capacity": round9(config.fleet.cpu_capacity),
            "mem_capacity": round9(config.fleet.mem_capacity),
        },
        "workload": wl,
        "policies": list(config.policies),
        "hyperparams": {
            "alpha": round9(hp.alpha),
            "gamma": round9(hp.gamma),
            "eps_start": round9(hp.eps_start),
            "eps_decay": round9(hp.eps_decay),
            "eps_min": round9(hp.eps_min),
            "batch_size": hp.batch_size,
            "episodes": hp.episodes,
        },
        "sim": {
            "max_decisions_per_tick": config.max_decisions_per_tick,
            "horizon": config.horizon,
        },
    }


def config_checksum(config: ExperimentConfig) -> str:
    blob = json.dumps(config_echo(config), sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def load_workload(spec: WorkloadSpec) -> Workload:
    if spec.trace is not None:
        return parse_trace(spec.trace)
    return generate_synthetic(spec.synthetic)


# ---------------------------------------------------------------------------
# metrics


@dataclass(frozen=True)
class RunReport:
    """Aggregated metrics of one episode under one policy.

    mean_completion_time is None when no task completed (the no-data
    marker); resource_utilization is the episode's time-average of
    (cpu_util + mem_util) / 2, as a percent.
    """

    policy: str
    mean_completion_time: float | None
    makespan: int
    resource_utilization: float
    tasks_completed: int
    truncated: bool
    seed: int
    config_checksum: str
    workload_checksum: str


def compute_metrics(
    log: EpisodeLog,
    *,
    policy: str = "",
    config_checksum: str = "",
    workload_checksum: str = "",
) -> RunReport:
    if log.completed:
        turnarounds = [finish - arrival for _, arrival, finish in log.completed]
        mean_completion = sum(turnarounds) / len(turnarounds)
        makespan = max(finish for _, _, finish in log.completed)
    else:
        mean_completion = None
        makespan = 0
    if log.tick_stats:
        utilization = 100.0 * sum((ts.cpu_util + ts.mem_util) / 2 for ts in log.tick_stats) / len(log.tick_stats)
    else:
        utilization = 0.0
    return RunReport(
        policy=policy,
        mean_completion_time=mean_completion,
        makespan=makespan,
        resource_utilization=utilization,
        tasks_completed=len(log.completed),
        truncated=log.truncated,
        seed=log.seed,
        config_checksum=config_checksum,
        workload_checksum=workload_checksum,
    )


# ---------------------------------------------------------------------------
# comparison and sweep


@dataclass
class CompareResult:
    reports: list[RunReport]  # canonical policy order
    ranking: list[str]  # by mean completion time, no-data last
    curve: list[EpisodeStat] | None
    q_table: np.ndarray | None
    workload_checksum: str
    config: ExperimentConfig


def _evaluate(
    kind: str,
    workload: Workload,
    config: ExperimentConfig,
    scheme: DiscretizationScheme,
    q_table: np.ndarray | None,
    cfg_sum: str,
) -> RunReport:
    policy = make_policy(kind, q_table=q_table, scheme=scheme)
    try:
        log = run_episode(
            workload,
            policy,
            config.sim_config(),
            seed=config.seed,
            reward_fn=lambda obs: reward(obs, scheme),
        )
    except Exception as e:
        raise RuntimeError(f"policy '{kind}' failed: {e}") from e
    return compute_metrics(
        log, policy=kind, config_checksum=cfg_sum, workload_checksum=workload.checksum
    )


def _rank(reports: list[RunReport]) -> list[str]:
    keyed = sorted(
        reports,
        key=lambda r: (r.mean_completion_time is None, r.mean_completion_time or 0.0),
    )
    return [r.policy for r in keyed]


def compare(config: ExperimentConfig, scheme: DiscretizationScheme = DEFAULT_SCHEME) -> CompareResult:
    """Evaluate every configured policy on one shared workload and fleet.

    When q-greedy is configured the agent is trained first, then deployed
    greedily; all policies are evaluated under the identical protocol.
    """
    workload = load_workload(config.workload)
    cfg_sum = config_checksum(config)
    ordered = [k for k in POLICY_ORDER if k in config.policies]
    q_table = None
    curve = None
    if "q-greedy" in ordered:
        q_table, curve = train(workload, config.sim_config(), config.hyperparams, scheme)
    reports = [_evaluate(kind, workload, config, scheme, q_table, cfg_sum) for kind in ordered]
    assert all(r.workload_checksum == workload.checksum for r in reports)
    return CompareResult(
        reports=reports,
        ranking=_rank(reports),
        curve=curve,
        q_table=q_table,
        workload_checksum=workload.checksum,
        config=config,
    )


@dataclass(frozen=True)
class SweepRow:
    alpha: float
    mean_completion_time: float | None
    resource_utilization: float


def sweep_alpha(
    config: ExperimentConfig,
    alphas: list[float],
    scheme: DiscretizationScheme = DEFAULT_SCHEME,
) -> list[SweepRow]:
    """Train and greedily evaluate one agent per learning rate, all else fixed."""
    if not alphas:
        raise ConfigError("alpha list must not be empty")
    for a in alphas:
        if not 0 < a <= 1:
            raise ConfigError(f"alpha must be in (0, 1], got {a}")
    workload = load_workload(config.workload)
    cfg_sum = config_checksum(config)
    rows: list[SweepRow] = []
    for a in alphas:
        run_config = replace(config, hyperparams=replace(config.hyperparams, alpha=a))
        q_table, _ = train(workload, run_config.sim_config(), run_config.hyperparams, scheme)
        report = _evaluate("q-greedy", workload, run_config, scheme, q_table, cfg_sum)
        rows.append(SweepRow(a, report.mean_completion_time, report.resource_utilization))
    return rows


# ---------------------------------------------------------------------------
# report emission


@dataclass
class RunArtifacts:
    """Everything emit_reports may write; absent sections are simply skipped."""

    config: ExperimentConfig
    workload_checksum: str
    comparison: list[RunReport] | None = None
    ranking: list[str] | None = None
    sweep: list[SweepRow] | None = None
    curve: list[EpisodeStat] | None = None
    q_table: np.ndarray | None = None


def artifacts_from_compare(result: CompareResult) -> RunArtifacts:
    return RunArtifacts(
        config=result.config,
        workload_checksum=result.workload_checksum,
        comparison=result.reports,
        ranking=result.ranking,
        sweep=None,
        curve=result.curve,
        q_table=result.q_table,
    )


COMPARISON_COLUMNS = (
    "policy,mean_completion_time_s,makespan_ticks,resource_utilization_pct,"
    "tasks_completed,truncated,rank,seed,workload_checksum"
)
SWEEP_COLUMNS = "alpha,mean_completion_time_s,resource_utilization_pct"
REWARD_CURVE_COLUMNS = "episode,epsilon,total_reward,decisions"


def _comparison_csv(reports: list[RunReport], ranking: list[str]) -> str:
    rank_of = {policy: i + 1 for i, policy in enumerate(ranking)}
    lines = [COMPARISON_COLUMNS]
    for r in reports:
        mct = "NA" if r.mean_completion_time is None else fmt9(r.mean_completion_time)
        lines.append(
            f"{r.policy},{mct},{r.makespan},{fmt9(r.resource_utilization)},"
            f"{r.tasks_completed},{str(r.truncated).lower()},{rank_of[r.policy]},"
            f"{r.seed},{r.workload_checksum}"
        )
    return "\n".join(lines) + "\n"


def _sweep_csv(rows: list[SweepRow]) -> str:
    lines = [SWEEP_COLUMNS]
    for row in rows:
        mct = "NA" if row.mean_completion_time is None else fmt9(row.mean_completion_time)
        lines.append(f"{fmt9(row.alpha)},{mct},{fmt9(row.resource_utilization)}")
    return "\n".join(lines) + "\n"


def _reward_curve_csv(curve: list[EpisodeStat]) -> str:
    lines = [REWARD_CURVE_COLUMNS]
    for s in curve:
        lines.append(f"{s.episode},{fmt9(s.epsilon)},{fmt9(s.total_reward)},{s.decisions}")
    return "\n".join(lines) + "\n"


def _report_dict(artifacts: RunArtifacts, file_checksums: dict[str, str]) -> dict:
    report: dict = {
        "config": config_echo(artifacts.config),
        "config_checksum": config_checksum(artifacts.config),
        "workload_checksum": artifacts.workload_checksum,
    }
    if artifacts.comparison is not None:
        rank_of = {p: i + 1 for i, p in enumerate(artifacts.ranking)}
        report["comparison"] = [
            {
                "policy": r.policy,
                "mean_completion_time_s": None if r.mean_completion_time is None else round9(r.mean_completion_time),
                "makespan_ticks": r.makespan,
                "resource_utilization_pct": round9(r.resource_utilization),
                "tasks_completed": r.tasks_completed,
                "truncated": r.truncated,
                "rank": rank_of[r.policy],
                "seed": r.seed,
            }
            for r in artifacts.comparison
        ]
        report["ranking"] = list(artifacts.ranking)
    if artifacts.sweep is not None:
        report["sweep"] = [
            {
                "alpha": round9(row.alpha),
                "mean_completion_time_s": None if row.mean_completion_time is None else round9(row.mean_completion_time),
                "resource_utilization_pct": round9(row.resource_utilization),
            }
            for row in artifacts.sweep
        ]
    if artifacts.curve is not None:
        report["reward_curve"] = [
            {
                "episode": s.episode,
                "epsilon": round9(s.epsilon),
                "total_reward": round9(s.total_reward),
                "decisions": s.decisions,
                "truncated": s.truncated,
            }
            for s in artifacts.curve
        ]
    report["file_checksums"] = file_checksums
    return report


def emit_reports(artifacts: RunArtifacts, out_dir) -> dict[str, Path]:
    """Write comparison.csv / sweep.csv / reward_curve.csv / qtable.csv as
    present, plus report.json; returns the written paths by file name."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    texts: dict[str, str] = {}
    if artifacts.comparison is not None:
        texts["comparison.csv"] = _comparison_csv(artifacts.comparison, artifacts.ranking)
    if artifacts.sweep is not None:
        texts["sweep.csv"] = _sweep_csv(artifacts.sweep)
    if artifacts.curve is not None:
        texts["reward_curve.csv"] = _reward_curve_csv(artifacts.curve)

    paths: dict[str, Path] = {}
    checksums: dict[str, str] = {}
    for name, text in texts.items():
        target = out_dir / name
        target.write_text(text, encoding="utf-8", newline="")
        paths[name] = target
        checksums[name] = hashlib.sha256(text.encode("utf-8")).hexdigest()
    if artifacts.q_table is not None:
        target = out_dir / "qtable.csv"
        save_q_table(artifacts.q_table, target)
        paths["qtable.csv"] = target
        checksums["qtable.csv"] = hashlib.sha256(target.read_bytes()).hexdigest()

    report_path = out_dir / "report.json"
    report_text = json.dumps(_report_dict(artifacts, checksums), indent=2) + "\n"
    report_path.write_text(report_text, encoding="utf-8", newline="")
    paths["report.json"] = report_path
    return paths


# ---------------------------------------------------------------------------
# bundled benchmark

BENCHMARK_SEED = 7
BENCHMARK_FLEET = FleetConfig(machines=8, cpu_capacity=4.0, mem_capacity=8.0)
BENCHMARK_SYNTH = SynthParams(
    task_count=200,
    arrival_rate=2.0,
    duration_range=(10, 40),
    cpu_range=(0.5, 3.5),
    mem_range=(0.5, 2.0),
    seed=BENCHMARK_SEED,
)
BENCHMARK_EPISODES = 200
PAPER_SWEEP_ALPHAS = (0.0005, 0.0004, 0.0003, 0.0002, 0.0001)


def benchmark_config() -> ExperimentConfig:
    """The bundled desk-scale benchmark: 200 tasks, 8 machines, 200 episodes."""
    return ExperimentConfig(
        fleet=BENCHMARK_FLEET,
        workload=WorkloadSpec(synthetic=BENCHMARK_SYNTH),
        seed=BENCHMARK_SEED,
        policies=POLICY_ORDER,
        hyperparams=Hyperparams(episodes=BENCHMARK_EPISODES, seed=BENCHMARK_SEED),
    )


def bundled_trace_path() -> Path:
    """Path of the packaged sample trace (the benchmark workload)."""
    return Path(resources.files("qsched").joinpath("data/sample_trace.csv"))
