import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cbdybw.scheduler import (
    EpochState,
    ParticipationPlan,
    Scheduler,
    StrategyConfig,
    default_static_p,
    edge_set_of,
    plan_dtur,
    plan_full,
    plan_static_p,
)
from cbdybw.straggler import DelayDraw, DelayModel, draw
from cbdybw.topology import CoveragePath, check_b_connectivity, coverage_path, generate_graph, neighbors


def D(k, *t):
    return DelayDraw(k, np.array(t, dtype=float))


def test_full_examples(triangle, path3, edge2):
    assert plan_full(triangle, 1).active_sets == ({1, 2}, {0, 2}, {0, 1})
    assert plan_full(path3, 1).active_sets[1] == {0, 2}
    assert plan_full(edge2, 1).active_sets == ({1}, {0})


def test_static_p_path(path3):
    plan = plan_static_p(path3, D(1, 0.5, 0.2, 0.9), [1, 1, 1])
    assert plan.active_sets == ({1}, {0}, frozenset())
    assert plan.theta is None


def test_static_p_reduces_to_full(path3, triangle):
    for g in (path3, triangle):
        p = [len(neighbors(g, j)) for j in range(g.n_workers)]
        d = D(3, 0.3, 0.1, 0.2)
        assert plan_static_p(g, d, p).active_sets == plan_full(g, 3).active_sets


def test_static_p_edge(edge2):
    assert plan_static_p(edge2, D(1, 9.0, 0.1), [1, 1]).active_sets == ({1}, {0})


def test_static_p_ties_by_index(triangle):
    plan = plan_static_p(triangle, D(1, 1.0, 1.0, 1.0), [1, 1, 1])
    # 0 picks 1, 1 picks 0, 2 picks 0 (not mutual)
    assert plan.active_sets == ({1}, {0}, frozenset())


def test_static_p_range(path3):
    with pytest.raises(ValueError, match="outside"):
        plan_static_p(path3, D(1, 1, 1, 1), [1, 3, 1])
    with pytest.raises(ValueError, match="need 3"):
        plan_static_p(path3, D(1, 1, 1, 1), [1, 1])


def test_default_static_p(path3):
    assert default_static_p(path3) == (1, 1, 1)
    g = generate_graph(5, "complete")
    assert default_static_p(g) == (2,) * 5


def test_dtur_path_examples(path3):
    path = coverage_path(path3)
    plan, state = plan_dtur(path3, path, EpochState(), D(1, 0.5, 0.2, 0.9))
    assert plan.theta == 0.5 and plan.established_edge == (0, 1)
    assert plan.active_sets == ({1}, {0}, frozenset())
    assert state.covered == {(0, 1)} and state.step_in_epoch == 2

    plan, state = plan_dtur(path3, path, state, D(2, 0.3, 0.4, 0.6))
    assert plan.theta == 0.6 and plan.established_edge == (1, 2)
    assert plan.active_sets == ({1}, {0, 2}, {1})
    assert state == EpochState(1, frozenset(), 1)


def test_dtur_single_edge(edge2):
    path = coverage_path(edge2)
    plan, _ = plan_dtur(edge2, path, EpochState(), D(1, 1.0, 2.0))
    assert plan.theta == 2.0 and plan.active_sets == ({1}, {0})


def test_dtur_errors(path3):
    with pytest.raises(ValueError, match="empty"):
        plan_dtur(path3, CoveragePath(()), EpochState(), D(1, 1, 1, 1))
    full = EpochState(0, frozenset({(0, 1), (1, 2)}), 3)
    with pytest.raises(ValueError, match="complete"):
        plan_dtur(path3, coverage_path(path3), full, D(1, 1, 1, 1))


def test_dtur_tie_breaks_lexicographically(triangle):
    path = coverage_path(triangle)
    plan, _ = plan_dtur(triangle, path, EpochState(), D(1, 1.0, 1.0, 1.0))
    assert plan.established_edge == (0, 1)


def test_plan_json(path3):
    plan = ParticipationPlan(4, ({1}, {0}, frozenset()), 0.5, (0, 1))
    doc = json.loads(plan.to_json())
    assert doc == {"k": 4, "active_sets": [[1], [0], []], "theta": 0.5, "established_edge": [0, 1]}
    assert plan.backup_counts(path3) == [0, 1, 1]


def test_scheduler_requires_path(path3):
    with pytest.raises(ValueError, match="coverage path"):
        Scheduler(path3, StrategyConfig("dtur"))
    with pytest.raises(ValueError, match="unknown strategy"):
        StrategyConfig("bogus")


@given(n=st.integers(2, 9), seed=st.integers(0, 5000), kind=st.sampled_from(["exponential", "lognormal"]))
def test_dtur_epochs_cover_path(n, seed, kind):
    g = generate_graph(n, "random", 0.4, seed)
    path = coverage_path(g)
    d = path.length_d
    sched = Scheduler(g, StrategyConfig("dtur"), path)
    model = DelayModel(kind, seed=seed)
    plans = [sched.plan(draw(model, k, n)) for k in range(1, 4 * d + 1)]
    for m in range(4):
        epoch = plans[m * d : (m + 1) * d]
        assert sorted(p.established_edge for p in epoch) == sorted(path.links)
    for p in plans:
        assert p.is_consistent()
        assert p.established_edge in edge_set_of(p)
        t = draw(model, p.iteration, n).times
        # theta is the iteration's closing time and everyone active finished by it
        assert all(t[j] <= p.theta for j, s in enumerate(p.active_sets) if s)
    assert check_b_connectivity(g, [edge_set_of(p) for p in plans], d)


@given(n=st.integers(2, 9), seed=st.integers(0, 5000), k=st.integers(1, 100))
def test_static_p_is_consistent(n, seed, k):
    g = generate_graph(n, "random", 0.5, seed)
    d = draw(DelayModel("exponential", seed=seed), k, n)
    plan = plan_static_p(g, d, default_static_p(g))
    assert plan.is_consistent()
    for j, s in enumerate(plan.active_sets):
        assert s <= neighbors(g, j)
