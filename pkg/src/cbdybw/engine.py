"""The cb-DyBW simulation loop: local SGD steps, partial Metropolis mixing, timing."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .config import ExperimentConfig, _delay_kwargs
from .consensus import MixingMatrix, build_metropolis
from .learning import (
    Dataset,
    LearningRateSchedule,
    Shard,
    eta_at,
    evaluate,
    global_loss,
    gradient,
    load_idx,
    minibatch_gradient,
    partition,
    random_projection,
    sample_batch,
    synth_classification,
)
from .scheduler import ParticipationPlan, Scheduler, StrategyConfig, plan_full
from .straggler import DelayDraw, DelayModel, draw, duration_partial
from .topology import CoveragePath, Graph, coverage_path, generate_graph, make_graph

__all__ = [
    "DivergenceError",
    "IterationRecord",
    "Problem",
    "RunResult",
    "Settings",
    "WorkerState",
    "build_problem",
    "centralized_sgd",
    "consensus_phase",
    "consensus_update",
    "disagreement",
    "evaluate",
    "local_update",
    "run",
    "simulate",
    "worker_rng",
]

# second Philox key word for per-worker mini-batch streams (worker index added)
WORKER_STREAM = 0x776B_0000_0000


class DivergenceError(RuntimeError):
    pass


@dataclass
class WorkerState:
    index: int
    params: np.ndarray
    shard: Shard
    rng: np.random.Generator


@dataclass(frozen=True)
class IterationRecord:
    k: int
    global_loss: float
    test_error: float
    consensus_disagreement: float
    duration: float
    backup_counts: tuple[int, ...]
    theta: float | None = None

    @property
    def mean_backup(self) -> float:
        return float(np.mean(self.backup_counts))

    @property
    def max_backup(self) -> int:
        return int(max(self.backup_counts))


@dataclass
class RunResult:
    records: list[IterationRecord]
    final_params: np.ndarray  # (N, D), after the consensus phase
    total_sim_time: float  # gradient phase only
    consensus_phase_iters: int
    consensus_reached: bool = True
    k_eps: int | None = None
    time_to_eps: float | None = None
    strategy: str = ""
    seed: int = 0
    path: CoveragePath | None = None

    @property
    def final_loss(self) -> float | None:
        return self.records[-1].global_loss if self.records else None


@dataclass(frozen=True)
class Problem:
    graph: Graph
    train: Dataset
    shards: tuple[Shard, ...]
    test: Dataset | None = None


@dataclass(frozen=True)
class Settings:
    strategy: StrategyConfig
    delay: DelayModel
    schedule: LearningRateSchedule = LearningRateSchedule()
    K: int = 500
    batch: int = 32
    consensus_tol: float = 1e-6
    consensus_max_iters: int = 500
    eps_target: float | None = None
    early_stop: bool = False
    straggler_applies_local: bool = True


Observer = Callable[[DelayDraw, ParticipationPlan, MixingMatrix], None]


def worker_rng(seed: int, j: int) -> np.random.Generator:
    key = np.array([seed & 0xFFFF_FFFF_FFFF_FFFF, WORKER_STREAM + j], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def local_update(ws: WorkerState, ds: Dataset, eta: float, batch: int) -> np.ndarray:
    """One mini-batch SGD step from the worker's current parameters (advances its stream)."""
    g = minibatch_gradient(ds, ws.shard, ws.params, batch, ws.rng)
    w = ws.params - eta * g
    if not np.isfinite(w).all():
        raise DivergenceError(f"worker {ws.index}: non-finite parameters (eta={eta})")
    return w


def consensus_update(tilde: np.ndarray, P: MixingMatrix | np.ndarray) -> np.ndarray:
    """``w_j = sum_i P[i, j] * tilde_i`` for stacked rows ``tilde`` of shape (N, D)."""
    M = P.entries if isinstance(P, MixingMatrix) else P
    if M.shape != (len(tilde), len(tilde)):
        raise ValueError(f"matrix {M.shape} does not match {len(tilde)} workers")
    return M.T @ tilde


def disagreement(W: np.ndarray) -> float:
    """``max_j ||w_j - mean(w)||_2``."""
    return float(np.linalg.norm(W - W.mean(axis=0), axis=1).max())


def consensus_phase(
    W: np.ndarray, g: Graph, tol: float, max_iters: int
) -> tuple[np.ndarray, int, bool]:
    """Gradient-free full-participation mixing until disagreement is within ``tol``.

    Returns ``(params, iterations used, reached)``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    P = build_metropolis(g, plan_full(g, 0).active_sets)
    it = 0
    while disagreement(W) > tol:
        if it >= max_iters:
            return W, it, False
        W = consensus_update(W, P)
        it += 1
    return W, it, True


def _mean_record(
    problem: Problem, W: np.ndarray, k: int, duration: float, plan: ParticipationPlan
) -> IterationRecord:
    w_bar = W.mean(axis=0)
    test = problem.test if problem.test is not None else problem.train
    _, err = evaluate(w_bar, test)
    return IterationRecord(
        k=k,
        global_loss=global_loss(problem.train, problem.shards, w_bar),
        test_error=err,
        consensus_disagreement=disagreement(W),
        duration=duration,
        backup_counts=tuple(plan.backup_counts(problem.graph)),
        theta=plan.theta,
    )


def simulate(
    problem: Problem,
    settings: Settings,
    seed: int,
    *,
    path: CoveragePath | None = None,
    observer: Observer | None = None,
    plan_hook: Callable[[ParticipationPlan], ParticipationPlan] | None = None,
) -> RunResult:
    """Run ``K`` cb-DyBW iterations followed by the consensus phase.

    Every worker draws a mini-batch each iteration whatever the strategy, so
    runs that differ only in strategy share mini-batch and delay streams.
    A worker with no active neighbours keeps its local step unmixed; with
    ``straggler_applies_local=False`` it discards the step instead.

    ``plan_hook`` may rewrite plans before mixing; matrices are then built
    without validation so corrupted plans surface in the checks downstream.
    """
    g = problem.graph
    n = g.n_workers
    if n < 2:
        raise ValueError("need at least 2 workers")
    if len(problem.shards) != n:
        raise ValueError(f"{len(problem.shards)} shards for {n} workers")
    if path is None and settings.strategy.kind == "dtur":
        path = coverage_path(g)
    scheduler = Scheduler(g, settings.strategy, path)
    D = problem.train.n_params
    workers = [WorkerState(j, np.zeros(D), problem.shards[j], worker_rng(seed, j)) for j in range(n)]

    records: list[IterationRecord] = []
    total = 0.0
    k_eps = None
    time_to_eps = None
    for k in range(1, settings.K + 1):
        delays = draw(settings.delay, k, n)
        plan = scheduler.plan(delays)
        if plan_hook is not None:
            plan = plan_hook(plan)
        eta = eta_at(settings.schedule, k - 1)
        W_prev = np.stack([ws.params for ws in workers])
        tilde = np.stack([local_update(ws, problem.train, eta, settings.batch) for ws in workers])
        idle = [j for j, s in enumerate(plan.active_sets) if not s]
        if idle and not settings.straggler_applies_local:
            tilde[idle] = W_prev[idle]
        P = build_metropolis(g, plan.active_sets, k, validate=plan_hook is None)
        W = consensus_update(tilde, P)
        for ws, w in zip(workers, W):
            ws.params = w
        duration = duration_partial(delays, plan)
        total += duration
        rec = _mean_record(problem, W, k, duration, plan)
        records.append(rec)
        if observer is not None:
            observer(delays, plan, P)
        if k_eps is None and settings.eps_target is not None and rec.global_loss <= settings.eps_target:
            k_eps, time_to_eps = k, total
            if settings.early_stop:
                break

    W = np.stack([ws.params for ws in workers])
    W, phase_iters, reached = consensus_phase(W, g, settings.consensus_tol, settings.consensus_max_iters)
    return RunResult(
        records=records,
        final_params=W,
        total_sim_time=total,
        consensus_phase_iters=phase_iters,
        consensus_reached=reached,
        k_eps=k_eps,
        time_to_eps=time_to_eps,
        strategy=settings.strategy.kind,
        seed=seed,
        path=path,
    )


def centralized_sgd(
    ds: Dataset,
    shards: Sequence[Shard],
    K: int,
    schedule: LearningRateSchedule,
    batch: int,
    seed: int,
) -> tuple[np.ndarray, list[float]]:
    """Single-model mini-batch SGD on the pooled shards; returns final params and per-step global loss."""
    pooled = Shard(-1, np.sort(np.concatenate([sh.indices for sh in shards])))
    rng = worker_rng(seed, 10_000)
    w = np.zeros(ds.n_params)
    losses = []
    for k in range(1, K + 1):
        w = w - eta_at(schedule, k - 1) * gradient(ds, sample_batch(pooled, batch, rng), w)
        losses.append(global_loss(ds, shards, w))
    return w, losses


def build_problem(cfg: ExperimentConfig, seed: int) -> Problem:
    gs = cfg.graph
    gseed = seed if gs.seed is None else gs.seed
    if gs.kind == "explicit":
        graph = make_graph(gs.n, gs.edges or [])
    else:
        graph = generate_graph(gs.n, gs.kind, gs.p, gseed)

    ds_spec = cfg.dataset
    dseed = seed if ds_spec.seed is None else ds_spec.seed
    if ds_spec.kind == "synth":
        full = synth_classification(ds_spec.n_examples + ds_spec.n_test, ds_spec.dim, ds_spec.n_classes, dseed)
        train = full.subset(range(ds_spec.n_examples))
        test = full.subset(range(ds_spec.n_examples, len(full)))
    else:
        data = load_idx(ds_spec.images, ds_spec.labels, ds_spec.limit)
        if ds_spec.test_images and ds_spec.test_labels:
            train, test = data, load_idx(ds_spec.test_images, ds_spec.test_labels)
        else:
            if ds_spec.n_test >= len(data):
                raise ValueError("n_test leaves no training data")
            order = np.random.default_rng(dseed).permutation(len(data))
            train, test = data.subset(np.sort(order[ds_spec.n_test :])), data.subset(np.sort(order[: ds_spec.n_test]))
        if ds_spec.project_dim:
            train = random_projection(train, ds_spec.project_dim, dseed)
            test = random_projection(test, ds_spec.project_dim, dseed)
    shards = partition(train, graph.n_workers, cfg.partition.mode, seed, cfg.partition.s)
    return Problem(graph, train, tuple(shards), test)


def settings_from_config(cfg: ExperimentConfig, seed: int) -> Settings:
    strategy = StrategyConfig(cfg.strategy.kind, tuple(cfg.strategy.p) if cfg.strategy.p else None)
    return Settings(
        strategy=strategy,
        delay=DelayModel(**{**_delay_kwargs(cfg.delay), "seed": seed}),
        schedule=LearningRateSchedule(cfg.eta0, cfg.delta, cfg.lr_mode),
        K=cfg.K,
        batch=cfg.batch,
        consensus_tol=cfg.consensus_tol,
        consensus_max_iters=cfg.consensus_max_iters,
        eps_target=cfg.eps_target,
        early_stop=cfg.early_stop,
        straggler_applies_local=cfg.straggler_applies_local,
    )


def run(cfg: ExperimentConfig, seed: int | None = None, **kwargs) -> RunResult:
    """Build the problem described by ``cfg`` and simulate it under ``seed`` (default ``cfg.seed``)."""
    seed = cfg.seed if seed is None else seed
    problem = build_problem(cfg, seed)
    settings = settings_from_config(cfg, seed)
    return simulate(problem, settings, seed, **kwargs)
