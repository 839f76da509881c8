"""Discrete-time cluster scheduler simulation.

The cluster is a fixed fleet of machines with CPU and memory capacities.
Time advances in integer one-second ticks. Within a tick the active policy
makes placement decisions until it defers, fails to place, empties the
queue, or exhausts the per-tick decision budget; the tick then ends, new
arrivals join the pending queue and finished tasks release their resources.
All ties break by ascending id, so an episode is a pure function of
(workload, policy, config, seed).
"""

from __future__ import annotations

import math
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Callable, NamedTuple, Protocol, Sequence, Union, runtime_checkable

from .errors import ConfigError


@dataclass(frozen=True)
class Task:
    """One unit of work; demands are held for `duration` ticks once placed."""

    id: int
    arrival_time: int
    duration: int
    cpu_req: float
    mem_req: float
    priority: int  # 0..4, higher is more urgent

    def __post_init__(self):
        if self.id < 0:
            raise ValueError(f"task id must be non-negative, got {self.id}")
        if self.arrival_time < 0:
            raise ValueError(f"arrival_time must be non-negative, got {self.arrival_time}")
        if self.duration < 1:
            raise ValueError(f"duration must be at least 1 tick, got {self.duration}")
        if self.cpu_req <= 0:
            raise ValueError(f"cpu_req must be positive, got {self.cpu_req}")
        if self.mem_req <= 0:
            raise ValueError(f"mem_req must be positive, got {self.mem_req}")
        if not 0 <= self.priority <= 4:
            raise ValueError(f"priority must be in [0, 4], got {self.priority}")


@dataclass
class Machine:
    """A machine with capacity accounting for the tasks currently on it.

    Allocations are recomputed with math.fsum on every change, so
    `cpu_allocated <= cpu_capacity` holds exactly in floating point, not
    just up to accumulated drift.
    """

    id: int
    cpu_capacity: float
    mem_capacity: float
    cpu_allocated: float = 0.0
    mem_allocated: float = 0.0
    running: dict[int, tuple[Task, int]] = field(default_factory=dict)  # task id -> (task, finish tick)

    @property
    def free_cpu(self) -> float:
        return self.cpu_capacity - self.cpu_allocated

    @property
    def free_mem(self) -> float:
        return self.mem_capacity - self.mem_allocated

    def _sums_with(self, task: Task) -> tuple[float, float]:
        cpu = math.fsum([t.cpu_req for t, _ in self.running.values()] + [task.cpu_req])
        mem = math.fsum([t.mem_req for t, _ in self.running.values()] + [task.mem_req])
        return cpu, mem

    def fits(self, task: Task) -> bool:
        cpu, mem = self._sums_with(task)
        return cpu <= self.cpu_capacity and mem <= self.mem_capacity

    def release_finished(self, clock: int) -> list[Task]:
        """Remove tasks whose finish tick equals `clock`, in ascending id order."""
        done = sorted(tid for tid, (_, fin) in self.running.items() if fin == clock)
        released = [self.running.pop(tid)[0] for tid in done]
        if released:
            self.cpu_allocated = math.fsum(t.cpu_req for t, _ in self.running.values())
            self.mem_allocated = math.fsum(t.mem_req for t, _ in self.running.values())
        return released


@dataclass
class ClusterState:
    machines: list[Machine]
    queue: list[Task] = field(default_factory=list)
    clock: int = 0
    completed: list[tuple[int, int, int]] = field(default_factory=list)  # (task id, arrival, finish)


class Observation(NamedTuple):
    """What a policy sees: fleet-wide utilization fractions and queue length."""

    cpu_util: float
    mem_util: float
    queue_len: int


class Action(IntEnum):
    PACK_BEST_FIT = 0
    SPREAD_LEAST_LOADED = 1
    DEFER = 2
    PROMOTE_URGENT = 3


class OutcomeKind(Enum):
    PLACED = "placed"
    DEFERRED = "deferred"
    INFEASIBLE = "infeasible"


@dataclass(frozen=True)
class Outcome:
    kind: OutcomeKind
    task_id: int | None = None
    machine_id: int | None = None


DEFERRED_OUTCOME = Outcome(OutcomeKind.DEFERRED)
INFEASIBLE_OUTCOME = Outcome(OutcomeKind.INFEASIBLE)


@dataclass(frozen=True)
class Place:
    """Directive targeting a specific queued task at a specific machine."""

    task_id: int
    machine_id: int


Decision = Union[Action, Place]


@dataclass(frozen=True)
class SimConfig:
    machine_count: int
    cpu_capacity: float
    mem_capacity: float
    max_decisions_per_tick: int = 8
    horizon: int | None = None  # None: 10 * last arrival + total duration

    def __post_init__(self):
        if self.machine_count < 1:
            raise ConfigError(f"machine_count must be at least 1, got {self.machine_count}")
        if self.cpu_capacity <= 0 or self.mem_capacity <= 0:
            raise ConfigError("machine capacities must be positive")
        if self.max_decisions_per_tick < 1:
            raise ConfigError("max_decisions_per_tick must be at least 1")
        if self.horizon is not None and self.horizon < 0:
            raise ConfigError("horizon must be non-negative")


def init_cluster(machine_count: int, cpu_capacity: float, mem_capacity: float) -> ClusterState:
    """Homogeneous fleet, empty queue, clock zero, no allocations."""
    if machine_count < 1:
        raise ConfigError(f"machine_count must be at least 1, got {machine_count}")
    if cpu_capacity <= 0 or mem_capacity <= 0:
        raise ConfigError("machine capacities must be positive")
    machines = [Machine(i, cpu_capacity, mem_capacity) for i in range(machine_count)]
    return ClusterState(machines=machines)


def observe(cluster: ClusterState) -> Observation:
    cpu_cap = math.fsum(m.cpu_capacity for m in cluster.machines)
    mem_cap = math.fsum(m.mem_capacity for m in cluster.machines)
    cpu = math.fsum(m.cpu_allocated for m in cluster.machines)
    mem = math.fsum(m.mem_allocated for m in cluster.machines)
    return Observation(cpu / cpu_cap, mem / mem_cap, len(cluster.queue))


def place_task(cluster: ClusterState, task_id: int, machine_id: int) -> Outcome:
    """Move a queued task onto a machine if it fits; otherwise Infeasible.

    On success the task's demands are added to the machine and its finish
    tick is scheduled at clock + duration. The cluster is untouched on an
    infeasible directive.
    """
    task = next((t for t in cluster.queue if t.id == task_id), None)
    if task is None:
        raise ValueError(f"task {task_id} is not in the pending queue")
    if not 0 <= machine_id < len(cluster.machines):
        raise ValueError(f"no machine with id {machine_id}")
    machine = cluster.machines[machine_id]
    cpu, mem = machine._sums_with(task)
    if cpu > machine.cpu_capacity or mem > machine.mem_capacity:
        return INFEASIBLE_OUTCOME
    cluster.queue.remove(task)
    machine.running[task.id] = (task, cluster.clock + task.duration)
    machine.cpu_allocated = cpu
    machine.mem_allocated = mem
    return Outcome(OutcomeKind.PLACED, task_id=task.id, machine_id=machine.id)


def _pick_best_fit(cluster: ClusterState, task: Task) -> Machine | None:
    """Feasible machine with least leftover CPU after placement; tie -> lowest id."""
    best = None
    best_left = None
    for m in cluster.machines:
        if m.fits(task):
            left = m.free_cpu - task.cpu_req
            if best is None or left < best_left:
                best, best_left = m, left
    return best


def _pick_least_loaded(cluster: ClusterState, task: Task) -> Machine | None:
    """Feasible machine with most free CPU; tie -> lowest id."""
    best = None
    best_free = None
    for m in cluster.machines:
        if m.fits(task):
            if best is None or m.free_cpu > best_free:
                best, best_free = m, m.free_cpu
    return best


def _most_urgent(queue: Sequence[Task]) -> Task:
    return max(queue, key=lambda t: (t.priority, -t.arrival_time, -t.id))


def apply_action(cluster: ClusterState, action: Action) -> Outcome:
    """Resolve an abstract scheduling action against the cluster.

    An empty queue always defers. Defer and Infeasible leave the cluster
    unmodified; in particular a PromoteUrgent whose placement is infeasible
    does not reorder the queue.
    """
    if not cluster.queue:
        return DEFERRED_OUTCOME
    action = Action(action)
    if action is Action.DEFER:
        return DEFERRED_OUTCOME
    if action is Action.PROMOTE_URGENT:
        task = _most_urgent(cluster.queue)
        machine = _pick_best_fit(cluster, task)
    else:
        task = cluster.queue[0]
        if action is Action.PACK_BEST_FIT:
            machine = _pick_best_fit(cluster, task)
        else:
            machine = _pick_least_loaded(cluster, task)
    if machine is None:
        return INFEASIBLE_OUTCOME
    return place_task(cluster, task.id, machine.id)


def advance_tick(cluster: ClusterState, workload: Sequence[Task]) -> None:
    """Advance the clock one tick: enqueue arrivals, release finished tasks.

    `workload` must be sorted by (arrival_time, id); tasks arriving at the
    new clock are appended in id order, then machines release tasks whose
    finish tick equals the new clock.
    """
    cluster.clock += 1
    clock = cluster.clock
    lo = bisect_left(workload, clock, key=lambda t: t.arrival_time)
    hi = bisect_right(workload, clock, key=lambda t: t.arrival_time)
    cluster.queue.extend(workload[lo:hi])
    for machine in cluster.machines:
        for task in machine.release_finished(clock):
            cluster.completed.append((task.id, task.arrival_time, clock))


def default_horizon(tasks: Sequence[Task]) -> int:
    if not tasks:
        return 0
    return 10 * max(t.arrival_time for t in tasks) + sum(t.duration for t in tasks)


class DecisionRecord(NamedTuple):
    tick: int
    observation: Observation  # before the decision
    decision: Decision
    outcome: Outcome
    reward: float  # of the observation at the next decision point


class TickStat(NamedTuple):
    tick: int
    cpu_util: float
    mem_util: float
    queue_len: int
    running: int
    completed: int


class TaskEvent(NamedTuple):
    arrival: int
    start: int
    finish: int


@dataclass
class EpisodeLog:
    decisions: list[DecisionRecord]
    tick_stats: list[TickStat]
    task_events: dict[int, TaskEvent]  # every placed task, completed or not
    completed: list[tuple[int, int, int]]  # (task id, arrival, finish)
    final_observation: Observation
    final_clock: int
    truncated: bool
    seed: int


@runtime_checkable
class Policy(Protocol):
    """Anything that can pick a decision at a decision point."""

    name: str

    def decide(self, cluster: ClusterState, obs: Observation) -> Decision: ...


class EpisodeEngine:
    """Drives one episode step by step.

    A decision point is any moment the policy is asked to act: the queue is
    non-empty and the per-tick decision budget is not exhausted. `submit`
    applies one decision, then advances ticks until the next decision point
    or the end of the episode (all tasks completed, or the horizon reached,
    which marks the episode truncated). A Defer or Infeasible outcome ends
    the current tick's decision phase.

    The reward recorded for a decision is `reward_fn` evaluated on the
    observation at the next decision point (or on the final observation for
    the episode's last decision), i.e. on the state the policy acts from
    next.
    """

    def __init__(
        self,
        workload,
        config: SimConfig,
        seed: int = 0,
        reward_fn: Callable[[Observation], float] | None = None,
        on_tick: Callable[[ClusterState], None] | None = None,
    ):
        self.tasks: tuple[Task, ...] = tuple(workload.tasks if hasattr(workload, "tasks") else workload)
        self.config = config
        self.seed = seed
        self.reward_fn = reward_fn
        self.on_tick = on_tick
        self.cluster = init_cluster(config.machine_count, config.cpu_capacity, config.mem_capacity)
        self.horizon = config.horizon if config.horizon is not None else default_horizon(self.tasks)
        self.decisions: list[DecisionRecord] = []
        self.tick_stats: list[TickStat] = []
        self.task_events: dict[int, TaskEvent] = {}
        self.done = False
        self.truncated = False
        self.last_reward = 0.0
        self._attempts = 0
        # tasks arriving at tick zero are queued before the first decision
        lo = bisect_left(self.tasks, 0, key=lambda t: t.arrival_time)
        hi = bisect_right(self.tasks, 0, key=lambda t: t.arrival_time)
        self.cluster.queue.extend(self.tasks[lo:hi])
        self._settle()

    @property
    def observation(self) -> Observation:
        return observe(self.cluster)

    def _close_tick(self) -> None:
        obs = observe(self.cluster)
        running = sum(len(m.running) for m in self.cluster.machines)
        self.tick_stats.append(
            TickStat(self.cluster.clock, obs.cpu_util, obs.mem_util, obs.queue_len, running, len(self.cluster.completed))
        )
        if self.on_tick is not None:
            self.on_tick(self.cluster)
        advance_tick(self.cluster, self.tasks)
        self._attempts = 0

    def _settle(self) -> None:
        while True:
            if len(self.cluster.completed) == len(self.tasks):
                self.done = True
                return
            if self.cluster.clock >= self.horizon:
                self.done = True
                self.truncated = True
                return
            if self.cluster.queue and self._attempts < self.config.max_decisions_per_tick:
                return
            self._close_tick()

    def submit(self, decision: Decision) -> Outcome:
        if self.done:
            raise RuntimeError("episode already finished")
        tick = self.cluster.clock
        obs_before = observe(self.cluster)
        if isinstance(decision, Place):
            outcome = place_task(self.cluster, decision.task_id, decision.machine_id)
        else:
            outcome = apply_action(self.cluster, decision)
        self._attempts += 1
        if outcome.kind is OutcomeKind.PLACED:
            task, finish = self.cluster.machines[outcome.machine_id].running[outcome.task_id]
            self.task_events[task.id] = TaskEvent(task.arrival_time, tick, finish)
        else:
            self._attempts = self.config.max_decisions_per_tick  # defer/infeasible ends the tick
        self._settle()
        self.last_reward = self.reward_fn(self.observation) if self.reward_fn else 0.0
        self.decisions.append(DecisionRecord(tick, obs_before, decision, outcome, self.last_reward))
        return outcome

    def finish(self) -> EpisodeLog:
        if not self.done:
            raise RuntimeError("episode still in progress")
        return EpisodeLog(
            decisions=list(self.decisions),
            tick_stats=list(self.tick_stats),
            task_events=dict(self.task_events),
            completed=list(self.cluster.completed),
            final_observation=self.observation,
            final_clock=self.cluster.clock,
            truncated=self.truncated,
            seed=self.seed,
        )


def run_episode(
    workload,
    policy,
    config: SimConfig,
    seed: int = 0,
    reward_fn: Callable[[Observation], float] | None = None,
    on_tick: Callable[[ClusterState], None] | None = None,
) -> EpisodeLog:
    """Run one full episode of `policy` against `workload`.

    `policy` is either an object with decide(cluster, obs) -> Decision or a
    plain callable Observation -> Action. Identical inputs and seed produce
    an identical log.
    """
    if hasattr(policy, "decide"):
        decide = policy.decide
    elif callable(policy):
        decide = lambda cluster, obs: policy(obs)  # noqa: E731
    else:
        raise TypeError(f"not a policy: {policy!r}")
    engine = EpisodeEngine(workload, config, seed=seed, reward_fn=reward_fn, on_tick=on_tick)
    while not engine.done:
        engine.submit(decide(engine.cluster, engine.observation))
    return engine.finish()
