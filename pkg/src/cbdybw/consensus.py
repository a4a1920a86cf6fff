"""Metropolis mixing matrices, their products, and consensus-rate bounds."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .topology import Graph, neighbors

SINGLE_TOL = 1e-12
PRODUCT_TOL = 1e-10


@dataclass(frozen=True)
class MixingMatrix:
    entries: np.ndarray
    iteration: int

    @property
    def n(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True)
class ProductChain:
    """Running product ``P(start_s) @ ... @ P(end_k)``.

    An empty product has ``end_k == start_s - 1``, identity ``phi`` and no
    ``beta`` yet.
    """

    phi: np.ndarray
    start_s: int
    end_k: int
    beta: float | None = None

    @classmethod
    def identity(cls, n: int, start_s: int = 1) -> ProductChain:
        return cls(np.eye(n), start_s, start_s - 1, None)

    @property
    def n_factors(self) -> int:
        return self.end_k - self.start_s + 1


def check_active_sets(g: Graph, active_sets: Sequence[frozenset[int] | set[int]]) -> None:
    """Raise ``ValueError`` unless the active sets are mutual and within graph neighbourhoods."""
    if len(active_sets) != g.n_workers:
        raise ValueError(f"expected {g.n_workers} active sets, got {len(active_sets)}")
    for j, s in enumerate(active_sets):
        stray = set(s) - neighbors(g, j)
        if stray:
            raise ValueError(f"active set of worker {j} contains non-neighbours {sorted(stray)}")
        for i in s:
            if j not in active_sets[i]:
                raise ValueError(f"asymmetric active sets: {i} in S_{j} but {j} not in S_{i}")


def build_metropolis(
    g: Graph,
    active_sets: Sequence[frozenset[int] | set[int]],
    iteration: int = 0,
    validate: bool = True,
) -> MixingMatrix:
    """Metropolis weights over the active neighbour sets.

    ``P[i, j] = 1 / (1 + max(p_i, p_j))`` for ``j`` in ``S_i`` where ``p_i = |S_i|``,
    and the diagonal takes the residual. Rows are filled independently, so
    mutually consistent sets give an exactly symmetric matrix. With
    ``validate=False`` inconsistent sets are accepted and yield a matrix
    that is row- but not column-stochastic.
    """
    if validate:
        check_active_sets(g, active_sets)
    n = g.n_workers
    p = [len(s) for s in active_sets]
    P = np.zeros((n, n))
    for i in range(n):
        for j in active_sets[i]:
            P[i, j] = 1.0 / (1 + max(p[i], p[j]))
        P[i, i] = 1.0 - P[i].sum()
    return MixingMatrix(P, iteration)


def stochasticity_error(P: np.ndarray) -> float:
    """Largest deviation of any row or column sum from 1."""
    return float(max(np.abs(P.sum(axis=0) - 1).max(), np.abs(P.sum(axis=1) - 1).max()))


def is_doubly_stochastic(P: np.ndarray, tol: float = SINGLE_TOL) -> bool:
    return bool((P >= 0).all()) and stochasticity_error(P) <= tol


def smallest_positive(P: np.ndarray) -> float:
    pos = P[P > 0]
    if pos.size == 0:
        raise ValueError("matrix has no positive entries")
    return float(pos.min())


def multiply_chain(chain: ProductChain, nxt: MixingMatrix) -> ProductChain:
    if nxt.iteration != chain.end_k + 1:
        raise ValueError(f"expected P({chain.end_k + 1}), got P({nxt.iteration})")
    b = smallest_positive(nxt.entries)
    beta = b if chain.beta is None else min(chain.beta, b)
    return ProductChain(chain.phi @ nxt.entries, chain.start_s, nxt.iteration, beta)


def consensus_deviation(chain: ProductChain) -> float:
    """``max |phi[i, j] - 1/N|``."""
    n = chain.phi.shape[0]
    return float(np.abs(chain.phi - 1.0 / n).max())


def lemma2_bound(chain: ProductChain, n: int, b: int) -> float:
    """Geometric envelope on ``|1/N - phi[i, j]|`` from the smallest weight ``beta``.

    ``2 (1 + beta^-NB) / (1 - beta^NB) * (1 - beta^NB) ** ((k - s) / NB)``.
    The leading constant is astronomically loose for realistic ``beta``;
    only the decay factor carries information.
    """
    if chain.beta is None:
        raise ValueError("beta undefined: chain has no factors")
    if not 0 < chain.beta < 1:
        raise ValueError(f"beta must lie in (0, 1), got {chain.beta}")
    if b < 1:
        raise ValueError("b must be positive")
    nb = n * b
    # beta^-NB overflows for small beta; the bound is then +inf, which is still valid
    with np.errstate(over="ignore"):
        lo = chain.beta**nb
        lead = 2.0 * (1.0 + np.float64(chain.beta) ** (-nb)) / (1.0 - lo)
    return float(lead) * geometric_envelope(1.0, chain.beta, n, b, chain.end_k - chain.start_s)


def geometric_envelope(scale: float, beta: float, n: int, b: int, steps: int) -> float:
    """``scale * (1 - beta^NB) ** (steps / NB)``: the bound's decay with a caller-fitted constant."""
    nb = n * b
    return float(scale * (1.0 - beta**nb) ** (steps / nb))
