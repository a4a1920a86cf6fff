"""Runtime verification of the mixing and connectivity assumptions on a short DTUR run."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .config import ExperimentConfig, StrategySpec
from .consensus import (
    SINGLE_TOL,
    MixingMatrix,
    ProductChain,
    consensus_deviation,
    geometric_envelope,
    lemma2_bound,
    multiply_chain,
    stochasticity_error,
)
from .engine import build_problem, settings_from_config, simulate
from .scheduler import ParticipationPlan, edge_set_of
from .straggler import DelayDraw
from .topology import check_b_connectivity


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def _asymmetric(plan: ParticipationPlan) -> ParticipationPlan:
    # drop one direction of the closing link
    i, j = plan.established_edge or next((j, i) for j, s in enumerate(plan.active_sets) for i in s)
    sets = list(plan.active_sets)
    sets[i] = sets[i] - {j}
    return dataclasses.replace(plan, active_sets=tuple(sets))


def epoch_coverage_violations(plans: list[ParticipationPlan], links: tuple) -> tuple[int, int]:
    """Count completed epochs whose established links differ from the coverage path."""
    d = len(links)
    epochs = len(plans) // d
    bad = 0
    for m in range(epochs):
        got = [p.established_edge for p in plans[m * d : (m + 1) * d]]
        if sorted(got) != sorted(links):
            bad += 1
    return bad, epochs


def lemma2_violations(matrices: list[MixingMatrix], n: int, b: int) -> tuple[int, int]:
    """Check ``consensus_deviation <= lemma2_bound`` for every (s, k) pair."""
    bad = checked = 0
    for s in range(len(matrices)):
        chain = ProductChain.identity(n, matrices[s].iteration)
        for M in matrices[s:]:
            chain = multiply_chain(chain, M)
            if chain.beta is None or not 0 < chain.beta < 1:
                continue
            checked += 1
            if consensus_deviation(chain) > lemma2_bound(chain, n, b):
                bad += 1
    return bad, checked


def envelope_violations(matrices: list[MixingMatrix], n: int, b: int) -> tuple[int, list[float], float]:
    """Deviations of ``Phi_{k:1}`` against the decay envelope anchored at ``k = 1``."""
    chain = ProductChain.identity(n, matrices[0].iteration)
    devs: list[float] = []
    for M in matrices:
        chain = multiply_chain(chain, M)
        devs.append(consensus_deviation(chain))
    beta = chain.beta
    bad = sum(
        dev > geometric_envelope(devs[0], beta, n, b, k) * (1 + 1e-12) + 1e-15 for k, dev in enumerate(devs)
    )
    return int(bad), devs, float(beta)


def run_checks(cfg: ExperimentConfig, K: int = 50, inject_asymmetry: bool = False) -> list[CheckResult]:
    cfg = dataclasses.replace(cfg, strategy=StrategySpec("dtur"), K=K, early_stop=False)
    plans: list[ParticipationPlan] = []
    matrices: list[MixingMatrix] = []

    def observe(d: DelayDraw, plan: ParticipationPlan, P: MixingMatrix) -> None:
        plans.append(plan)
        matrices.append(P)

    problem = build_problem(cfg, cfg.seed)
    settings = settings_from_config(cfg, cfg.seed)
    result = simulate(
        problem, settings, cfg.seed, observer=observe, plan_hook=_asymmetric if inject_asymmetry else None
    )
    path = result.path
    n = problem.graph.n_workers
    d = path.length_d
    b = cfg.b_override or d
    out: list[CheckResult] = []

    worst = max(stochasticity_error(M.entries) for M in matrices)
    asym = sum(not np.array_equal(M.entries, M.entries.T) for M in matrices)
    neg = sum(bool((M.entries < 0).any()) for M in matrices)
    out.append(
        CheckResult(
            "doubly_stochastic",
            worst <= SINGLE_TOL and asym == 0 and neg == 0,
            f"max |row/col sum - 1| = {worst:.3e}; asymmetric = {asym}; negative = {neg}",
        )
    )

    bad, epochs = epoch_coverage_violations(plans, path.links)
    out.append(CheckResult("epoch_coverage", bad == 0 and epochs > 0, f"{bad} of {epochs} epochs miss links"))

    edge_sets = [edge_set_of(p) for p in plans]
    ok = len(edge_sets) >= b and check_b_connectivity(problem.graph, edge_sets, b)
    out.append(CheckResult("b_connectivity", ok, f"B = {b}, {len(edge_sets)} edge sets"))

    bad, checked = lemma2_violations(matrices, n, b)
    env_bad, devs, beta = envelope_violations(matrices, n, b)
    out.append(
        CheckResult(
            "lemma2_bound",
            bad == 0 and env_bad == 0 and checked > 0,
            f"{bad} of {checked} (s,k) pairs over bound; {env_bad} over fitted envelope; "
            f"beta = {beta:.4f}; final deviation = {devs[-1]:.3e}",
        )
    )
    return out


def format_table(results: list[CheckResult]) -> str:
    width = max(len(r.name) for r in results)
    lines = [f"{'check':<{width}}  result  detail"]
    for r in results:
        lines.append(f"{r.name:<{width}}  {'PASS' if r.passed else 'FAIL':<6}  {r.detail}")
    return "\n".join(lines)
