"""Variance-reduction machinery: growing batch sizes, reproducible per-agent
sample substreams, and empirical statistics of the stochastic gradient error."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .game import GameSpec, pseudograd_mean

Array = np.ndarray


@dataclass(frozen=True)
class BatchSchedule:
    """Batch-size law ``N_k = ceil(c * (k + k0)^(a + 1))``.

    All three parameters must be positive; ``a > 0`` makes the sequence of
    inverse batch sizes summable, which is what drives the vanishing
    stochastic error.
    """

    c: float = 1.0
    k0: float = 1.0
    a: float = 1.0

    def __post_init__(self):
        if self.c <= 0 or self.k0 <= 0 or self.a <= 0:
            raise ValueError("schedule parameters c, k0, a must be positive")

    def batch_size(self, k: int) -> int:
        if k < 0:
            raise ValueError("iteration index must be nonnegative")
        return max(1, math.ceil(self.c * (k + self.k0) ** (self.a + 1.0)))

    def inverse_sum_bound(self) -> float:
        """Analytic upper bound on ``sum_k 1/N_k`` over all iterations."""
        return (1.0 / self.c) * (self.k0 ** -(self.a + 1.0) + self.k0 ** -self.a / self.a)


def batch_size(schedule: BatchSchedule, k: int) -> int:
    """Number of samples to draw at iteration ``k``."""
    return schedule.batch_size(k)


class SampleStream:
    """Per-agent independent sample substreams derived from one master seed.

    Agents draw from generators spawned off a single :class:`SeedSequence`,
    so replications with distinct master seeds are independent while a fixed
    seed reproduces the exact same sample sequence.
    """

    def __init__(self, game: GameSpec, seed: int):
        self.seed = int(seed)
        children = np.random.SeedSequence(self.seed).spawn(game.n_agents)
        self.generators = [np.random.default_rng(c) for c in children]
        self._game = game

    def draw(self, size: int) -> Sequence[Array]:
        return self._game.draw_batch(self.generators, int(size))


@dataclass
class ErrorStats:
    """Sampled norms of the gradient approximation error per batch size."""

    batch_sizes: Array
    norms: Array  # shape (len(batch_sizes), reps)

    @property
    def mean_norms(self) -> Array:
        return self.norms.mean(axis=1)

    @property
    def loglog_slope(self) -> float:
        """Slope of log mean-error against log batch size (least squares)."""
        mean = self.mean_norms
        if np.any(mean <= 0):
            return -np.inf
        slope, _ = np.polyfit(np.log(self.batch_sizes), np.log(mean), 1)
        return float(slope)


def empirical_error(game: GameSpec, x: Array, schedule: BatchSchedule | None,
                    ks: Sequence[int] | None = None, reps: int = 100,
                    rng=None, batches: Sequence[int] | None = None) -> ErrorStats:
    """Measure ``|F_sampled(x) - F_mean(x)|`` across batch sizes.

    Batch sizes come either from ``schedule`` evaluated at the iterations
    ``ks`` or directly from ``batches``. Requires at least 30 replications
    for the averages to be meaningful.
    """
    if reps < 30:
        raise ValueError("need at least 30 replications")
    if batches is None:
        if schedule is None or ks is None:
            raise ValueError("provide either (schedule, ks) or explicit batches")
        batches = [schedule.batch_size(k) for k in ks]
    sizes = np.asarray(sorted(int(b) for b in batches), dtype=int)
    if np.any(sizes < 1):
        raise ValueError("batch sizes must be positive")
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng

    x = np.asarray(x, dtype=float)
    reference = pseudograd_mean(game, x)
    norms = np.empty((sizes.size, reps))
    for row, size in enumerate(sizes):
        for rep in range(reps):
            samples = game.draw_batch([rng] * game.n_agents, int(size))
            approx = np.asarray(game.sampled_grad(x, samples), dtype=float)
            norms[row, rep] = np.linalg.norm(approx - reference)
    return ErrorStats(batch_sizes=sizes, norms=norms)
