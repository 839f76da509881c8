"""Classical scheduling policies behind the simulator's decision interface.

Each policy emits either a Place directive (a specific task on a specific
machine) or Action.DEFER; the episode engine consumes both through the same
apply/advance loop as the learned agent, so metrics are comparable
tick-for-tick.
"""

from __future__ import annotations

import numpy as np

from .agent import DEFAULT_SCHEME, DiscretizationScheme, greedy_policy
from .errors import ConfigError
from .simulation import Action, ClusterState, Decision, Observation, Place

POLICY_ORDER = ("round-robin", "priority", "dra", "q-greedy")


class RoundRobinPolicy:
    """Head-of-queue task to the machine under a rotating cursor.

    The cursor skips machines that cannot fit the task, up to one full
    cycle; a full-cycle miss defers and leaves the cursor unchanged.
    """

    name = "round-robin"

    def __init__(self):
        self.cursor = 0

    def decide(self, cluster: ClusterState, obs: Observation) -> Decision:
        if not cluster.queue:
            return Action.DEFER
        head = cluster.queue[0]
        n = len(cluster.machines)
        for k in range(n):
            machine = cluster.machines[(self.cursor + k) % n]
            if machine.fits(head):
                self.cursor = (machine.id + 1) % n
                return Place(head.id, machine.id)
        return Action.DEFER


class PriorityPolicy:
    """Most urgent task first (tie: earliest arrival, lowest id), first fit.

    Non-preemptive: if the selected task fits nowhere, the decision defers
    even when lower-priority tasks would fit.
    """

    name = "priority"

    def decide(self, cluster: ClusterState, obs: Observation) -> Decision:
        if not cluster.queue:
            return Action.DEFER
        task = max(cluster.queue, key=lambda t: (t.priority, -t.arrival_time, -t.id))
        for machine in cluster.machines:
            if machine.fits(task):
                return Place(task.id, machine.id)
        return Action.DEFER


class BestFitPolicy:
    """Dynamic resource allocation: best fit for the head-of-queue task.

    Chooses the feasible machine minimizing leftover CPU after placement;
    ties minimize leftover memory, then machine id.
    """

    name = "dra"

    def decide(self, cluster: ClusterState, obs: Observation) -> Decision:
        if not cluster.queue:
            return Action.DEFER
        task = cluster.queue[0]
        best = None
        best_key = None
        for machine in cluster.machines:
            if machine.fits(task):
                key = (machine.free_cpu - task.cpu_req, machine.free_mem - task.mem_req)
                if best is None or key < best_key:
                    best, best_key = machine, key
        if best is None:
            return Action.DEFER
        return Place(task.id, best.id)


class QGreedyPolicy:
    """Greedy deployment of a trained Q table."""

    name = "q-greedy"

    def __init__(self, table: np.ndarray, scheme: DiscretizationScheme = DEFAULT_SCHEME):
        self._decide = greedy_policy(table, scheme)

    def decide(self, cluster: ClusterState, obs: Observation) -> Decision:
        return self._decide(obs)


def make_policy(kind: str, *, q_table: np.ndarray | None = None, scheme: DiscretizationScheme = DEFAULT_SCHEME):
    """Fresh policy instance for one episode run."""
    if kind == "round-robin":
        return RoundRobinPolicy()
    if kind == "priority":
        return PriorityPolicy()
    if kind == "dra":
        return BestFitPolicy()
    if kind == "q-greedy":
        if q_table is None:
            raise ConfigError("q-greedy policy requires a trained table")
        return QGreedyPolicy(q_table, scheme)
    raise ConfigError(f"unknown policy '{kind}' (expected one of {', '.join(POLICY_ORDER)})")
