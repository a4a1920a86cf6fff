"""Participation planning: full, static fastest-p, and threshold-based (DTUR)."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

from .straggler import DelayDraw
from .topology import CoveragePath, Edge, Graph, neighbors, norm_edge

ActiveSets = tuple[frozenset[int], ...]


@dataclass(frozen=True)
class ParticipationPlan:
    """Who mixes with whom at one iteration.

    ``active_sets[j]`` holds the neighbours whose updates worker ``j`` uses;
    an empty set means ``j`` sits the iteration out.
    """

    iteration: int
    active_sets: ActiveSets
    theta: float | None = None
    established_edge: Edge | None = None

    def is_consistent(self) -> bool:
        return all(j in self.active_sets[i] for j, s in enumerate(self.active_sets) for i in s)

    def backup_counts(self, g: Graph) -> list[int]:
        return [g.degree(j) - len(s) for j, s in enumerate(self.active_sets)]

    def to_json(self) -> str:
        return json.dumps(
            {
                "k": self.iteration,
                "active_sets": [sorted(s) for s in self.active_sets],
                "theta": self.theta,
                "established_edge": list(self.established_edge) if self.established_edge else None,
            }
        )


@dataclass(frozen=True)
class EpochState:
    """Progress through one pass over the coverage path.

    ``step_in_epoch`` is 1-based; ``covered`` always holds ``step_in_epoch - 1`` links.
    """

    epoch_index: int = 0
    covered: frozenset[Edge] = field(default_factory=frozenset)
    step_in_epoch: int = 1


@dataclass(frozen=True)
class StrategyConfig:
    kind: str = "dtur"
    p: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("full", "static_p", "dtur"):
            raise ValueError(f"unknown strategy {self.kind!r}")


def default_static_p(g: Graph) -> tuple[int, ...]:
    """Wait for the fastest half of the neighbourhood, rounded up."""
    return tuple(-(-g.degree(j) // 2) for j in range(g.n_workers))


def plan_full(g: Graph, k: int) -> ParticipationPlan:
    return ParticipationPlan(k, tuple(neighbors(g, j) for j in range(g.n_workers)))


def plan_static_p(g: Graph, d: DelayDraw, p: Sequence[int]) -> ParticipationPlan:
    """Each worker picks its ``p_j`` fastest neighbours; links survive only if picked both ways."""
    n = g.n_workers
    if len(p) != n:
        raise ValueError(f"need {n} p values, got {len(p)}")
    t = d.times
    chosen: list[set[int]] = []
    for j in range(n):
        nbrs = neighbors(g, j)
        if not 1 <= p[j] <= len(nbrs):
            raise ValueError(f"p_{j}={p[j]} outside [1, {len(nbrs)}]")
        ranked = sorted(nbrs, key=lambda i: (t[i], i))
        chosen.append(set(ranked[: p[j]]))
    sets = tuple(frozenset(i for i in chosen[j] if j in chosen[i]) for j in range(n))
    return ParticipationPlan(d.iteration, sets)


def plan_dtur(
    g: Graph, path: CoveragePath, state: EpochState, d: DelayDraw
) -> tuple[ParticipationPlan, EpochState]:
    """One threshold-based iteration.

    The iteration closes at ``theta``: the earliest time an uncovered path link
    has both endpoints finished. Every worker finished by ``theta`` mixes with
    its finished neighbours; later workers get an empty set.
    """
    if not path.links:
        raise ValueError("coverage path is empty")
    if len(state.covered) >= path.length_d:
        raise ValueError("epoch already complete")
    t = d.times
    uncovered = [e for e in path.links if e not in state.covered]
    theta, edge = min((max(t[i], t[j]), e) for e in uncovered for i, j in [e])
    done = [t[j] <= theta for j in range(g.n_workers)]
    sets = tuple(
        frozenset(i for i in neighbors(g, j) if done[i]) if done[j] else frozenset()
        for j in range(g.n_workers)
    )
    plan = ParticipationPlan(d.iteration, sets, float(theta), edge)
    if state.step_in_epoch + 1 > path.length_d:
        nxt = EpochState(state.epoch_index + 1, frozenset(), 1)
    else:
        nxt = EpochState(state.epoch_index, state.covered | {edge}, state.step_in_epoch + 1)
    return plan, nxt


def edge_set_of(plan: ParticipationPlan) -> set[Edge]:
    return {norm_edge(i, j) for j, s in enumerate(plan.active_sets) for i in s if i < j}


class Scheduler:
    """Stateful wrapper that plans successive iterations for one strategy."""

    def __init__(self, g: Graph, strategy: StrategyConfig, path: CoveragePath | None = None):
        self.graph = g
        self.strategy = strategy
        self.path = path
        self.state = EpochState()
        if strategy.kind == "dtur" and path is None:
            raise ValueError("dtur needs a coverage path")
        self.p = strategy.p if strategy.p is not None else default_static_p(g)

    def plan(self, d: DelayDraw) -> ParticipationPlan:
        kind = self.strategy.kind
        if kind == "full":
            return plan_full(self.graph, d.iteration)
        if kind == "static_p":
            return plan_static_p(self.graph, d, self.p)
        plan, self.state = plan_dtur(self.graph, self.path, self.state, d)
        return plan
