"""Per-worker compute-delay models and iteration durations."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Sequence

import numpy as np
from scipy.special import ndtri

if TYPE_CHECKING:
    from .scheduler import ParticipationPlan

KINDS = ("exponential", "shifted_exponential", "lognormal", "fixed_heterogeneous")

# second key word separating delay streams from other Philox consumers
DELAY_STREAM = 0x6465_6C61


@dataclass(frozen=True)
class DelayModel:
    """Straggler timing model.

    Parameters by kind:

    * ``exponential``: ``rate``
    * ``shifted_exponential``: ``shift``, ``rate``
    * ``lognormal``: ``mu``, ``sigma``
    * ``fixed_heterogeneous``: ``means`` (one per worker) and ``jitter`` in
      ``[0, 1)``; ``t_j = means[j] * (1 + jitter * (2u - 1))``
    """

    kind: str = "shifted_exponential"
    rate: float = 1.0
    shift: float = 0.5
    mu: float = 0.0
    sigma: float = 0.5
    means: tuple[float, ...] = field(default_factory=tuple)
    jitter: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown delay model {self.kind!r}")
        if self.kind in ("exponential", "shifted_exponential") and self.rate <= 0:
            raise ValueError("rate must be positive")
        if self.kind == "shifted_exponential" and self.shift < 0:
            raise ValueError("shift must be non-negative")
        if self.kind == "lognormal" and self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.kind == "fixed_heterogeneous":
            if not self.means or min(self.means) <= 0:
                raise ValueError("fixed_heterogeneous needs positive per-worker means")
            if not 0 <= self.jitter < 1:
                raise ValueError("jitter must be in [0, 1)")
        object.__setattr__(self, "means", tuple(float(m) for m in self.means))


@dataclass(frozen=True)
class DelayDraw:
    iteration: int
    times: np.ndarray


def _uniforms(seed: int, k: int, count: int) -> np.ndarray:
    # counter word 1 carries k, word 0 advances within the iteration,
    # so the value at position p depends only on (seed, k, p)
    bitgen = np.random.Philox(
        key=np.array([seed & 0xFFFF_FFFF_FFFF_FFFF, DELAY_STREAM], dtype=np.uint64),
        counter=np.array([0, k, 0, 0], dtype=np.uint64),
    )
    u = np.random.Generator(bitgen).random(count)
    # keep strictly inside (0, 1) for the inverse CDFs
    return np.clip(u, 2.0**-60, 1.0 - 2.0**-53)


def draw(model: DelayModel, k: int, n: int) -> DelayDraw:
    """Compute times for ``n`` workers at iteration ``k``.

    Worker ``j`` uses uniforms at fixed positions of the ``(seed, k)`` stream,
    so its time depends only on ``(seed, k, j)`` and never on who consumes it.
    """
    if n < 1:
        raise ValueError("need at least one worker")
    u1 = _uniforms(model.seed, k, n)
    if model.kind == "exponential":
        t = -np.log1p(-u1) / model.rate
    elif model.kind == "shifted_exponential":
        t = model.shift - np.log1p(-u1) / model.rate
    elif model.kind == "lognormal":
        t = np.exp(model.mu + model.sigma * ndtri(u1))
    else:
        if len(model.means) != n:
            raise ValueError(f"fixed_heterogeneous has {len(model.means)} means for {n} workers")
        t = np.asarray(model.means) * (1.0 + model.jitter * (2.0 * u1 - 1.0))
    # shift 0 with u near 0 can produce exactly 0
    t = np.maximum(t, np.finfo(float).tiny)
    return DelayDraw(k, t)


def duration_full(d: DelayDraw) -> float:
    return float(d.times.max())


def duration_partial(d: DelayDraw, plan: ParticipationPlan) -> float:
    """Iteration length when each worker waits only for its active set.

    ``T_j = max(t_i for i in S_j | {j})`` over workers with non-empty ``S_j``;
    the iteration ends when the slowest of those finishes. If nobody
    exchanges anything the iteration ends at the first finished computation.
    """
    if plan.iteration != d.iteration:
        raise ValueError(f"plan is for iteration {plan.iteration}, draw for {d.iteration}")
    t = d.times
    per_worker = [max(t[j], *(t[i] for i in s)) for j, s in enumerate(plan.active_sets) if s]
    if not per_worker:
        return float(t.min())
    return float(max(per_worker))


def mean_duration(samples: Sequence[float]) -> float:
    """Empirical MSE-optimal constant estimate of the iteration length."""
    if len(samples) == 0:
        raise ValueError("no duration samples")
    return float(np.mean(samples))
