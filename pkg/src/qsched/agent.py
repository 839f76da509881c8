"""Tabular Q-learning over discretized cluster observations.

The continuous observation (cpu utilization, memory utilization, queue
length) is bucketed into a finite state index; a dense table holds one
action-value per (state, action). Training runs episodes against an
environment, stores transitions in a replay buffer, and applies the
temporal-difference update to randomly sampled batches.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Protocol

import numpy as np

from .errors import ConfigError
from .seeding import STREAM_EXPLORATION, STREAM_REPLAY, named_rng
from .simulation import Action, EpisodeEngine, Observation, SimConfig


@dataclass(frozen=True)
class DiscretizationScheme:
    """How observations map to state indices and how the reward is scaled.

    Utilization fractions are cut into uniform bins over [0, 1]; queue
    length falls into the first bucket whose upper bound covers it (the
    final bound is infinite). `q_max_norm` caps the queue term of the
    reward so all three terms share the [0, 1] scale.
    """

    cpu_bins: int = 10
    mem_bins: int = 10
    queue_bucket_bounds: tuple[float, ...] = (0, 2, 5, 10, 20, math.inf)
    q_max_norm: int = 20

    def __post_init__(self):
        if self.cpu_bins < 1 or self.mem_bins < 1:
            raise ConfigError("bin counts must be at least 1")
        bounds = self.queue_bucket_bounds
        if not bounds or any(b >= a for b, a in zip(bounds, bounds[1:])):
            raise ConfigError("queue bucket bounds must be strictly increasing")
        if self.q_max_norm <= 0:
            raise ConfigError("q_max_norm must be positive")

    @property
    def queue_bucket_count(self) -> int:
        return len(self.queue_bucket_bounds)

    @property
    def state_count(self) -> int:
        return self.cpu_bins * self.mem_bins * self.queue_bucket_count


DEFAULT_SCHEME = DiscretizationScheme()


def discretize(obs: Observation, scheme: DiscretizationScheme = DEFAULT_SCHEME) -> int:
    """State index for an observation. Inputs are clamped, never rejected."""
    cpu = min(max(obs.cpu_util, 0.0), 1.0)
    mem = min(max(obs.mem_util, 0.0), 1.0)
    cpu_bin = min(int(cpu * scheme.cpu_bins), scheme.cpu_bins - 1)
    mem_bin = min(int(mem * scheme.mem_bins), scheme.mem_bins - 1)
    bucket = 0
    for i, bound in enumerate(scheme.queue_bucket_bounds):
        if obs.queue_len <= bound:
            bucket = i
            break
    nb = scheme.queue_bucket_count
    return cpu_bin * (scheme.mem_bins * nb) + mem_bin * nb + bucket


def reward(obs: Observation, scheme: DiscretizationScheme = DEFAULT_SCHEME) -> float:
    """Negative load: -(cpu + mem + capped queue fraction), in [-3, 0]."""
    queue_term = min(obs.queue_len, scheme.q_max_norm) / scheme.q_max_norm
    return -(obs.cpu_util + obs.mem_util + queue_term)


@dataclass(frozen=True)
class Transition:
    s: int
    a: int
    r: float
    s_next: int
    terminal: bool


class ReplayBuffer:
    """Ring buffer of transitions; overwrites the oldest once full."""

    def __init__(self, capacity: int = 10_000):
        if capacity < 1:
            raise ConfigError(f"replay capacity must be at least 1, got {capacity}")
        self.capacity = capacity
        self.pushes = 0  # total insertions, monotone past capacity
        self._store: list[Transition] = []
        self._head = 0

    def __len__(self) -> int:
        return len(self._store)

    def push(self, t: Transition) -> None:
        if len(self._store) < self.capacity:
            self._store.append(t)
        else:
            self._store[self._head] = t
            self._head = (self._head + 1) % self.capacity
        self.pushes += 1

    def sample(self, batch_size: int, rng: np.random.Generator) -> list[Transition] | None:
        """Uniform sample with replacement, or None while under-filled.

        Consumes exactly one `rng.integers(0, len, size=batch_size)` draw,
        so a sample is reproducible from the seeded stream alone.
        """
        if batch_size < 1:
            raise ConfigError(f"batch_size must be at least 1, got {batch_size}")
        if len(self._store) < batch_size:
            return None
        idx = rng.integers(0, len(self._store), size=batch_size)
        return [self._store[i] for i in idx]


@dataclass(frozen=True)
class Hyperparams:
    alpha: float = 0.1
    gamma: float = 0.95
    eps_start: float = 1.0
    eps_decay: float = 0.95  # per episode
    eps_min: float = 0.05
    batch_size: int = 32
    episodes: int = 200
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ConfigError(f"alpha must be in (0, 1], got {self.alpha}")
        if not 0 <= self.gamma < 1:
            raise ConfigError(f"gamma must be in [0, 1), got {self.gamma}")
        for name in ("eps_start", "eps_min"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ConfigError(f"{name} must be in [0, 1], got {v}")
        if not 0 < self.eps_decay <= 1:
            raise ConfigError(f"eps_decay must be in (0, 1], got {self.eps_decay}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be at least 1, got {self.batch_size}")
        if self.episodes < 0:
            raise ConfigError(f"episodes must be non-negative, got {self.episodes}")
        if self.seed < 0:
            raise ConfigError(f"seed must be non-negative, got {self.seed}")


def new_q_table(n_states: int, n_actions: int) -> np.ndarray:
    return np.zeros((n_states, n_actions), dtype=np.float64)


def q_update(table: np.ndarray, t: Transition, alpha: float, gamma: float) -> float:
    """One temporal-difference step on a single entry; returns its new value.

    Q(s,a) += alpha * (r + gamma * max_a' Q(s',a') - Q(s,a)), with the
    bootstrap term zeroed on terminal transitions.
    """
    if t.terminal:
        target = t.r
    else:
        target = t.r + gamma * table[t.s_next].max()
    new = table[t.s, t.a] + alpha * (target - table[t.s, t.a])
    table[t.s, t.a] = new
    return float(new)


def select_action(table: np.ndarray, state: int, epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy over the state's row; greedy ties go to the lowest action.

    Consumes one uniform draw per call, plus one integer draw when exploring.
    """
    if rng.random() < epsilon:
        return int(rng.integers(table.shape[1]))
    return int(np.argmax(table[state]))


def epsilon_schedule(episode: int, hp: Hyperparams) -> float:
    """Exponential per-episode decay with a floor."""
    return max(hp.eps_min, hp.eps_start * hp.eps_decay**episode)


class Environment(Protocol):
    """Episodic environment over discrete states, as the trainer sees it."""

    n_states: int
    n_actions: int

    @property
    def done(self) -> bool: ...

    @property
    def truncated(self) -> bool: ...

    def reset(self) -> int: ...

    def step(self, action: int) -> tuple[int, float, bool]: ...


class ClusterSchedulingEnv:
    """Adapts the simulator to the trainer's state/step interface.

    `step` submits one scheduling action and settles to the next decision
    point; the returned reward and state both describe that point.
    """

    def __init__(self, workload, sim_config: SimConfig, scheme: DiscretizationScheme = DEFAULT_SCHEME):
        self.workload = workload
        self.sim_config = sim_config
        self.scheme = scheme
        self.n_states = scheme.state_count
        self.n_actions = len(Action)
        self._engine: EpisodeEngine | None = None

    @property
    def done(self) -> bool:
        return self._engine.done

    @property
    def truncated(self) -> bool:
        return self._engine.truncated

    def reset(self) -> int:
        self._engine = EpisodeEngine(
            self.workload, self.sim_config, reward_fn=lambda obs: reward(obs, self.scheme)
        )
        return discretize(self._engine.observation, self.scheme)

    def step(self, action: int) -> tuple[int, float, bool]:
        engine = self._engine
        engine.submit(Action(action))
        return discretize(engine.observation, self.scheme), engine.last_reward, engine.done


@dataclass(frozen=True)
class EpisodeStat:
    episode: int
    epsilon: float
    total_reward: float
    decisions: int
    truncated: bool


@dataclass
class TrainResult:
    table: np.ndarray
    curve: list[EpisodeStat]
    updates: int  # q_update calls applied


def train_on(env: Environment, hp: Hyperparams, replay_capacity: int = 10_000) -> TrainResult:
    """Q-learning loop against any environment implementing the protocol.

    Per decision: epsilon-greedy action, environment step, push the
    transition, then (once the buffer holds a full batch) sample one batch
    and apply q_update to each sampled transition. Deterministic given
    hp.seed; exploration and replay use separate named streams.
    """
    table = new_q_table(env.n_states, env.n_actions)
    buffer = ReplayBuffer(replay_capacity)
    explore_rng = named_rng(hp.seed, STREAM_EXPLORATION)
    replay_rng = named_rng(hp.seed, STREAM_REPLAY)
    curve: list[EpisodeStat] = []
    updates = 0
    for episode in range(hp.episodes):
        eps = epsilon_schedule(episode, hp)
        state = env.reset()
        total = 0.0
        steps = 0
        while not env.done:
            act = select_action(table, state, eps, explore_rng)
            nxt, rew, done = env.step(act)
            buffer.push(Transition(state, act, rew, nxt, done))
            total += rew
            steps += 1
            batch = buffer.sample(hp.batch_size, replay_rng)
            if batch is not None:
                for tr in batch:
                    q_update(table, tr, hp.alpha, hp.gamma)
                updates += hp.batch_size
            state = nxt
        curve.append(EpisodeStat(episode, eps, total, steps, env.truncated))
    return TrainResult(table, curve, updates)


def train(
    workload,
    sim_config: SimConfig,
    hp: Hyperparams,
    scheme: DiscretizationScheme = DEFAULT_SCHEME,
) -> tuple[np.ndarray, list[EpisodeStat]]:
    """Train on the cluster environment; returns the table and reward curve."""
    env = ClusterSchedulingEnv(workload, sim_config, scheme)
    result = train_on(env, hp)
    return result.table, result.curve


def greedy_policy(table: np.ndarray, scheme: DiscretizationScheme = DEFAULT_SCHEME) -> Callable[[Observation], Action]:
    """Pure exploitation of a table: argmax per state, ties to lowest action."""

    def policy(obs: Observation) -> Action:
        return Action(int(np.argmax(table[discretize(obs, scheme)])))

    return policy


Q_TABLE_HEADER = "state_id,action_id,q_value"


def save_q_table(table: np.ndarray, path) -> None:
    """Flat CSV, rows in ascending (state, action) order, 9 significant digits."""
    lines = [Q_TABLE_HEADER]
    for s in range(table.shape[0]):
        for a in range(table.shape[1]):
            lines.append(f"{s},{a},{format(table[s, a], '.9g')}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_q_table(path) -> np.ndarray:
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln for ln in text.split("\n") if ln]
    if not lines or lines[0] != Q_TABLE_HEADER:
        raise ConfigError(f"{path}: expected header '{Q_TABLE_HEADER}'")
    entries: dict[tuple[int, int], float] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != 3:
            raise ConfigError(f"{path}: line {lineno}: expected 3 fields")
        try:
            s, a, v = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError as e:
            raise ConfigError(f"{path}: line {lineno}: {e}") from None
        if (s, a) in entries:
            raise ConfigError(f"{path}: line {lineno}: duplicate entry ({s}, {a})")
        entries[(s, a)] = v
    if not entries:
        raise ConfigError(f"{path}: no table entries")
    n_states = max(s for s, _ in entries) + 1
    n_actions = max(a for _, a in entries) + 1
    if len(entries) != n_states * n_actions:
        raise ConfigError(f"{path}: incomplete table ({len(entries)} of {n_states * n_actions} entries)")
    table = new_q_table(n_states, n_actions)
    for (s, a), v in entries.items():
        table[s, a] = v
    return table
