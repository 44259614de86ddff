"""Game definitions: agents, local box constraints, shared affine constraints,
and first-order oracles for the expected cost gradients.

A game instance is described by a :class:`GameSpec`, which carries the
deterministic (mean) pseudogradient, its sample-average approximation, and the
noise model used to draw samples. Two concrete families are provided: a
two-player bilinear game and a networked Cournot market game with shared
capacity constraints.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

Array = np.ndarray

BILINEAR_VARIANTS = ("monotone", "pseudomonotone", "unconstrained-monotone")


def _as_vector(v, name: str) -> Array:
    arr = np.asarray(v, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a 1-d vector, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class BoxSet:
    """Axis-aligned box ``{v : lower <= v <= upper}``; bounds may be infinite."""

    lower: Array
    upper: Array

    def __post_init__(self):
        lo = _as_vector(self.lower, "lower")
        hi = _as_vector(self.upper, "upper")
        if lo.shape != hi.shape:
            raise ValueError("lower and upper must have the same shape")
        if np.any(np.isnan(lo)) or np.any(np.isnan(hi)):
            raise ValueError("box bounds must not be NaN")
        if np.any(lo > hi):
            raise ValueError("box requires lower <= upper elementwise")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.size

    def project(self, v: Array) -> Array:
        return np.clip(v, self.lower, self.upper)

    def contains(self, v: Array, tol: float = 1e-9) -> bool:
        return bool(np.all(v >= self.lower - tol) and np.all(v <= self.upper + tol))

    def midpoint(self) -> Array:
        """Center of the box; unbounded coordinates fall back to a finite bound or 0."""
        with np.errstate(invalid="ignore"):
            mid = 0.5 * (self.lower + self.upper)
        bad = ~np.isfinite(mid)
        if np.any(bad):
            mid[bad & np.isfinite(self.lower)] = self.lower[bad & np.isfinite(self.lower)]
            mid[bad & np.isfinite(self.upper)] = self.upper[bad & np.isfinite(self.upper)]
            mid[~np.isfinite(mid)] = 0.0
        return mid


@dataclass(frozen=True)
class CouplingConstraints:
    """Shared affine constraints ``A x <= b`` with per-agent blocks.

    ``blocks[i]`` is the m-by-n_i slice of ``A`` owned by agent i, and
    ``b_split[i]`` is agent i's share of the right-hand side, summing to ``b``
    (up to floating round-off).
    """

    blocks: tuple[Array, ...]
    b: Array
    b_split: tuple[Array, ...]

    def __post_init__(self):
        blocks = tuple(np.asarray(B, dtype=float) for B in self.blocks)
        b = _as_vector(self.b, "b")
        split = tuple(_as_vector(s, "b_split") for s in self.b_split)
        if not blocks:
            raise ValueError("coupling requires at least one agent block")
        m = b.size
        for B in blocks:
            if B.ndim != 2 or B.shape[0] != m:
                raise ValueError("every block must have m rows matching b")
        if len(split) != len(blocks):
            raise ValueError("b_split must have one entry per agent")
        total = np.sum(np.stack(split), axis=0)
        if not np.allclose(total, b, rtol=0.0, atol=1e-9):
            raise ValueError("per-agent shares b_split must sum to b")
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "b_split", split)

    @property
    def m(self) -> int:
        return self.b.size

    @cached_property
    def matrix(self) -> Array:
        """Horizontal concatenation ``A = [A_1, ..., A_N]``."""
        return np.hstack(self.blocks)

    @classmethod
    def equal_split(cls, blocks: Sequence[Array], b) -> "CouplingConstraints":
        """Split ``b`` evenly across agents, with the last share absorbing round-off."""
        b = _as_vector(b, "b")
        n = len(blocks)
        share = b / n
        split = [share.copy() for _ in range(n - 1)]
        split.append(b - share * (n - 1))
        return cls(tuple(np.asarray(B, float) for B in blocks), b, tuple(split))


@dataclass(frozen=True)
class AffineMap:
    """Affine operator ``v -> matrix @ v + offset``."""

    matrix: Array
    offset: Array

    def __call__(self, v: Array) -> Array:
        return self.matrix @ v + self.offset


@dataclass(frozen=True)
class GameSpec:
    """Immutable description of one game instance.

    The oracles are pure functions: ``mean_grad(x)`` returns the stacked
    expected-cost gradients, ``sampled_grad(x, samples)`` their sample-average
    approximation given per-agent sample batches, ``draw_batch(rngs, size)``
    draws those batches, and ``mean_batch(size)`` returns batches filled with
    the distribution mean (useful for zero-noise checks). Instances are safe
    to share across threads; callers must treat the arrays as read-only.
    """

    dims: tuple[int, ...]
    boxes: tuple[BoxSet, ...]
    coupling: CouplingConstraints | None
    mean_grad: Callable[[Array], Array]
    sampled_grad: Callable[[Array, Sequence[Array]], Array]
    draw_batch: Callable[[Sequence[np.random.Generator], int], Sequence[Array]]
    mean_batch: Callable[[int], Sequence[Array]]
    noise_dims: tuple[int, ...]
    interference: tuple[frozenset, ...]
    known_solution: Array | None = None
    solution_distance: Callable[[Array], float] | None = None
    affine: AffineMap | None = None
    payload: dict | None = field(default=None, repr=False)
    label: str = "game"

    def __post_init__(self):
        if len(self.boxes) != len(self.dims):
            raise ValueError("one box per agent required")
        for d, box in zip(self.dims, self.boxes):
            if box.dim != d:
                raise ValueError("box dimension must match the agent dimension")
        if self.coupling is not None and len(self.coupling.blocks) != len(self.dims):
            raise ValueError("one coupling block per agent required")
        if self.known_solution is not None:
            object.__setattr__(
                self, "known_solution", _as_vector(self.known_solution, "known_solution")
            )

    @property
    def n_agents(self) -> int:
        return len(self.dims)

    @property
    def dim(self) -> int:
        return int(sum(self.dims))

    @property
    def m(self) -> int:
        return 0 if self.coupling is None else self.coupling.m

    @cached_property
    def slices(self) -> tuple[slice, ...]:
        offsets = np.concatenate([[0], np.cumsum(self.dims)])
        return tuple(slice(int(a), int(b)) for a, b in zip(offsets[:-1], offsets[1:]))

    @cached_property
    def lower(self) -> Array:
        return np.concatenate([box.lower for box in self.boxes])

    @cached_property
    def upper(self) -> Array:
        return np.concatenate([box.upper for box in self.boxes])

    def split(self, x: Array) -> list[Array]:
        return [x[s] for s in self.slices]

    def project_local(self, x: Array) -> Array:
        return np.clip(x, self.lower, self.upper)

    def distance_to_solution(self, x: Array) -> float | None:
        if self.solution_distance is not None:
            return float(self.solution_distance(np.asarray(x, float)))
        if self.known_solution is not None:
            return float(np.linalg.norm(np.asarray(x, float) - self.known_solution))
        return None


@dataclass(frozen=True)
class BilinearParams:
    """Parameters of the two-player bilinear game.

    ``variant`` selects the vector field: ``monotone`` is ``(-x2, x1)`` on
    [0,1]^2, ``pseudomonotone`` is ``(-x2, 2 x1)`` on [0,1]^2, and
    ``unconstrained-monotone`` is the rotation ``(R1 x2, -R2 x1)`` on the whole
    plane, with R1, R2 drawn around ``noise_mean``. The box variants share the
    same multiplicative noise model on their off-diagonal couplings.
    """

    variant: str = "unconstrained-monotone"
    noise_mean: float = 1.0
    noise_sigma: float = 0.5
    domain: BoxSet | None = None

    def __post_init__(self):
        if self.variant not in BILINEAR_VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative")


@dataclass(frozen=True)
class CournotParams:
    """Parameters of the networked Cournot market game generator.

    Companies deliver quantities to the markets they participate in; each
    market j has a capacity ``b_j`` drawn from [0.5, 1], production limits are
    drawn from [1, 1.5], the price level is normal around ``price_mean`` per
    market, and the price sensitivity matrix D has entries drawn from
    [0.5, 1]. With ``price_coupling="diagonal"`` (default) only the own-market
    sensitivities are kept, which makes the pseudogradient monotone for every
    seed; ``"full"`` draws the whole matrix, which typically breaks
    monotonicity at this scale.
    """

    n_agents: int = 20
    n_markets: int = 7
    price_mean: float = 3.0
    price_sigma: float = 0.5
    cost_slope: float = 1.5
    max_markets_per_agent: int = 2
    price_coupling: str = "diagonal"
    seed: int = 42

    def __post_init__(self):
        if self.n_agents < 1 or self.n_markets < 1:
            raise ValueError("need at least one company and one market")
        if not 1 <= self.max_markets_per_agent <= self.n_markets:
            raise ValueError("max_markets_per_agent must be in [1, n_markets]")
        if self.price_coupling not in ("diagonal", "full"):
            raise ValueError("price_coupling must be 'diagonal' or 'full'")


def pseudograd_mean(game: GameSpec, x: Array) -> Array:
    """Stacked expected-cost gradients at the joint decision ``x``."""
    x = _as_vector(x, "x")
    if x.size != game.dim:
        raise ValueError(f"x has dimension {x.size}, expected {game.dim}")
    return np.asarray(game.mean_grad(x), dtype=float)


def pseudograd_sample(game: GameSpec, x: Array, batch_size: int, rng) -> Array:
    """Sample-average gradient: each agent averages ``batch_size`` noisy gradients.

    ``rng`` may be a single :class:`numpy.random.Generator` (agents draw from
    it in order) or a sequence of per-agent generators, e.g. the substreams of
    :class:`nashsplit.stochastic.SampleStream`. Deterministic given the
    generator states and the batch size.
    """
    x = _as_vector(x, "x")
    if x.size != game.dim:
        raise ValueError(f"x has dimension {x.size}, expected {game.dim}")
    if batch_size < 1:
        raise ValueError("batch must contain at least one sample")
    gens = getattr(rng, "generators", rng)
    if isinstance(gens, np.random.Generator):
        gens = [gens] * game.n_agents
    samples = game.draw_batch(gens, int(batch_size))
    return np.asarray(game.sampled_grad(x, samples), dtype=float)


def check_feasible(game: GameSpec, x: Array, tol: float = 1e-9) -> str:
    """Classify ``x`` as ``feasible``, ``violated-local`` or ``violated-coupling``."""
    x = _as_vector(x, "x")
    if x.size != game.dim:
        raise ValueError(f"x has dimension {x.size}, expected {game.dim}")
    if np.any(x < game.lower - tol) or np.any(x > game.upper + tol):
        return "violated-local"
    if game.coupling is not None:
        slack = game.coupling.matrix @ x - game.coupling.b
        if np.any(slack > tol):
            return "violated-coupling"
    return "feasible"


# -- bilinear game -----------------------------------------------------------

_BILINEAR_COUPLING = {
    # off-diagonal weights (w12, w21): F(x) = (w12 * R1 * x2, w21 * R2 * x1)
    "monotone": (-1.0, 1.0),
    "pseudomonotone": (-1.0, 2.0),
    "unconstrained-monotone": (1.0, -1.0),
}


def build_bilinear_game(params: BilinearParams) -> GameSpec:
    """Two agents with scalar strategies coupled through a rotation-like field."""
    w12, w21 = _BILINEAR_COUPLING[params.variant]
    mu, sigma = params.noise_mean, params.noise_sigma

    if params.domain is not None:
        boxes = (
            BoxSet(params.domain.lower[:1], params.domain.upper[:1]),
            BoxSet(params.domain.lower[1:], params.domain.upper[1:]),
        )
    elif params.variant == "unconstrained-monotone":
        boxes = tuple(BoxSet([-np.inf], [np.inf]) for _ in range(2))
    else:
        boxes = tuple(BoxSet([0.0], [1.0]) for _ in range(2))

    matrix = np.array([[0.0, w12 * mu], [w21 * mu, 0.0]])
    mean_map = AffineMap(matrix, np.zeros(2))

    def sampled(x, samples):
        r1 = float(np.mean(samples[0]))
        r2 = float(np.mean(samples[1]))
        return np.array([w12 * r1 * x[1], w21 * r2 * x[0]])

    def draw(gens, size):
        return [g.normal(mu, sigma, size=(size, 1)) for g in gens]

    def means(size):
        return [np.full((size, 1), mu) for _ in range(2)]

    if params.variant == "unconstrained-monotone":
        known = np.zeros(2)
        dist = None
    else:
        known = None

        def dist(x):
            # distance to the solution segment {y in [0,1]^2 : y2 = 0}
            d1 = max(x[0] - 1.0, 0.0, -x[0])
            return float(np.hypot(d1, x[1]))

    payload = {
        "kind": "bilinear",
        "variant": params.variant,
        "noise": {"mean": mu, "sigma": sigma},
        "lower": [_jsonable(b.lower) for b in boxes],
        "upper": [_jsonable(b.upper) for b in boxes],
        "known_solution": None if known is None else known.tolist(),
    }
    return GameSpec(
        dims=(1, 1),
        boxes=boxes,
        coupling=None,
        mean_grad=mean_map,
        sampled_grad=sampled,
        draw_batch=draw,
        mean_batch=means,
        noise_dims=(1, 1),
        interference=(frozenset({1}), frozenset({0})),
        known_solution=known,
        solution_distance=dist,
        affine=mean_map,
        payload=payload,
        label=f"bilinear-{params.variant}",
    )


# -- Cournot market game -----------------------------------------------------


def build_cournot_game(params: CournotParams) -> GameSpec:
    """Generate a networked Cournot instance from a seed.

    Every market is guaranteed at least one participating company. Instance
    data (participation, limits, capacities, sensitivities) are drawn once
    from the seed, so rebuilding with the same parameters is bit-reproducible.
    """
    rng = np.random.default_rng(params.seed)
    n_agents, m = params.n_agents, params.n_markets

    markets: list[list[int]] = []
    for _ in range(n_agents):
        count = int(rng.integers(1, params.max_markets_per_agent + 1))
        markets.append(sorted(rng.choice(m, size=count, replace=False).tolist()))
    covered = {j for mk in markets for j in mk}
    for j in range(m):
        if j not in covered:
            candidates = [i for i in range(n_agents) if j not in markets[i]]
            i = int(rng.choice(candidates))
            markets[i] = sorted(markets[i] + [j])

    blocks = []
    for mk in markets:
        B = np.zeros((m, len(mk)))
        for c, j in enumerate(mk):
            B[j, c] = 1.0
        blocks.append(B)

    gamma = [rng.uniform(1.0, 1.5, size=len(mk)) for mk in markets]
    b = rng.uniform(0.5, 1.0, size=m)
    if params.price_coupling == "full":
        sensitivity = rng.uniform(0.5, 1.0, size=(m, m))
    else:
        sensitivity = np.diag(rng.uniform(0.5, 1.0, size=m))
    offsets = rng.uniform(0.0, 1.0, size=n_agents)  # cost offsets, gradient-free
    p_mean = np.full(m, params.price_mean)

    return _cournot_from_arrays(
        blocks=blocks,
        gamma=gamma,
        b=b,
        sensitivity=sensitivity,
        p_mean=p_mean,
        price_sigma=params.price_sigma,
        cost_slope=params.cost_slope,
        offsets=offsets,
        label=f"cournot-n{n_agents}-m{m}-seed{params.seed}",
        extra_payload={"seed": params.seed, "price_coupling": params.price_coupling},
    )


def _cournot_from_arrays(blocks, gamma, b, sensitivity, p_mean, price_sigma,
                         cost_slope, offsets, label, extra_payload=None) -> GameSpec:
    blocks = [np.asarray(B, float) for B in blocks]
    m = blocks[0].shape[0]
    participation = np.hstack(blocks)
    if not participation.any(axis=1).all():
        raise ValueError("every market needs at least one participating company")

    dims = tuple(B.shape[1] for B in blocks)
    boxes = tuple(BoxSet(np.zeros(d), np.asarray(g, float)) for d, g in zip(dims, gamma))
    coupling = CouplingConstraints.equal_split(blocks, b)
    A = coupling.matrix
    D = np.asarray(sensitivity, float)
    p_mean = _as_vector(p_mean, "p_mean")

    # J_i(x) = cost_slope * 1'x_i + q_i - (p_mean - D A x)' A_i x_i, so the
    # gradient block is cost_slope*1 - A_i'(p_mean - D A x) + A_i' D' A_i x_i.
    n = int(sum(dims))
    M = A.T @ D @ A
    o = 0
    for B in blocks:
        d = B.shape[1]
        M[o:o + d, o:o + d] += B.T @ D.T @ B
        o += d
    u = cost_slope * np.ones(n) - A.T @ p_mean
    mean_map = AffineMap(M, u)

    slices = []
    o = 0
    for d in dims:
        slices.append(slice(o, o + d))
        o += d

    def sampled(x, samples):
        g = M @ x + cost_slope * np.ones(n)
        for s, B, batch in zip(slices, blocks, samples):
            g[s] -= B.T @ np.mean(batch, axis=0)
        return g

    def draw(gens, size):
        return [g.normal(p_mean, price_sigma, size=(size, m)) for g in gens]

    def means(size):
        return [np.tile(p_mean, (size, 1)) for _ in blocks]

    interference = []
    for i, si in enumerate(slices):
        deps = {
            j for j, sj in enumerate(slices)
            if j != i and np.any(M[si, sj] != 0.0)
        }
        interference.append(frozenset(deps))

    payload = {
        "kind": "cournot",
        "blocks": [_jsonable(B) for B in blocks],
        "gamma": [_jsonable(g) for g in gamma],
        "b": _jsonable(b),
        "sensitivity": _jsonable(D),
        "p_mean": _jsonable(p_mean),
        "price_sigma": price_sigma,
        "cost_slope": cost_slope,
        "offsets": _jsonable(np.asarray(offsets, float)),
    }
    payload.update(extra_payload or {})

    return GameSpec(
        dims=dims,
        boxes=boxes,
        coupling=coupling,
        mean_grad=mean_map,
        sampled_grad=sampled,
        draw_batch=draw,
        mean_batch=means,
        noise_dims=tuple(m for _ in blocks),
        interference=tuple(interference),
        affine=mean_map,
        payload=payload,
        label=label,
    )


# -- generic affine games (custom instances) ---------------------------------


def build_affine_game(matrix, offset, dims, boxes, coupling=None,
                      noise_sigma=0.0, known_solution=None, label="affine") -> GameSpec:
    """Game with an explicit affine pseudogradient and additive gradient noise."""
    matrix = np.asarray(matrix, float)
    offset = _as_vector(offset, "offset")
    dims = tuple(int(d) for d in dims)
    n = int(sum(dims))
    if matrix.shape != (n, n) or offset.size != n:
        raise ValueError("affine map dimensions must match the stacked decision")
    mean_map = AffineMap(matrix, offset)

    slices = []
    o = 0
    for d in dims:
        slices.append(slice(o, o + d))
        o += d

    def sampled(x, samples):
        g = mean_map(x)
        for s, batch in zip(slices, samples):
            g[s] += np.mean(batch, axis=0)
        return g

    def draw(gens, size):
        return [g.normal(0.0, noise_sigma, size=(size, d)) for g, d in zip(gens, dims)]

    def means(size):
        return [np.zeros((size, d)) for d in dims]

    interference = []
    for i, si in enumerate(slices):
        deps = {
            j for j, sj in enumerate(slices)
            if j != i and np.any(matrix[si, sj] != 0.0)
        }
        interference.append(frozenset(deps))

    payload = {
        "kind": "affine",
        "matrix": _jsonable(matrix),
        "offset": _jsonable(offset),
        "dims": list(dims),
        "lower": [_jsonable(b.lower) for b in boxes],
        "upper": [_jsonable(b.upper) for b in boxes],
        "noise_sigma": noise_sigma,
        "known_solution": None if known_solution is None else list(known_solution),
    }
    if coupling is not None:
        payload["coupling"] = {
            "blocks": [_jsonable(B) for B in coupling.blocks],
            "b": _jsonable(coupling.b),
            "b_split": [_jsonable(s) for s in coupling.b_split],
        }

    return GameSpec(
        dims=dims,
        boxes=tuple(boxes),
        coupling=coupling,
        mean_grad=mean_map,
        sampled_grad=sampled,
        draw_batch=draw,
        mean_batch=means,
        noise_dims=dims,
        interference=tuple(interference),
        known_solution=known_solution,
        affine=mean_map,
        payload=payload,
        label=label,
    )


# -- serialization -----------------------------------------------------------


def _jsonable(arr: Array):
    """Nested lists with None standing in for infinities (JSON has no inf)."""

    def convert(v):
        if isinstance(v, list):
            return [convert(x) for x in v]
        return None if not np.isfinite(v) else v

    return convert(np.asarray(arr, float).tolist())


def _from_jsonable(values, infinity_sign=1.0) -> Array:
    arr = np.array(
        [np.inf * infinity_sign if v is None else v for v in values], dtype=float
    )
    return arr


def game_from_payload(payload: dict) -> GameSpec:
    """Rebuild a game from its serialized instance section."""
    kind = payload.get("kind")
    if kind == "bilinear":
        params = BilinearParams(
            variant=payload["variant"],
            noise_mean=payload["noise"]["mean"],
            noise_sigma=payload["noise"]["sigma"],
        )
        return build_bilinear_game(params)
    if kind == "cournot":
        return _cournot_from_arrays(
            blocks=[np.asarray(B, float) for B in payload["blocks"]],
            gamma=[np.asarray(g, float) for g in payload["gamma"]],
            b=np.asarray(payload["b"], float),
            sensitivity=np.asarray(payload["sensitivity"], float),
            p_mean=np.asarray(payload["p_mean"], float),
            price_sigma=payload["price_sigma"],
            cost_slope=payload["cost_slope"],
            offsets=np.asarray(payload["offsets"], float),
            label=f"cournot-seed{payload.get('seed', '?')}",
            extra_payload={k: payload[k] for k in ("seed", "price_coupling") if k in payload},
        )
    if kind == "affine":
        boxes = tuple(
            BoxSet(_from_jsonable(lo, -1.0), _from_jsonable(hi, 1.0))
            for lo, hi in zip(payload["lower"], payload["upper"])
        )
        coupling = None
        if "coupling" in payload:
            cp = payload["coupling"]
            coupling = CouplingConstraints(
                tuple(np.asarray(B, float) for B in cp["blocks"]),
                np.asarray(cp["b"], float),
                tuple(np.asarray(s, float) for s in cp["b_split"]),
            )
        known = payload.get("known_solution")
        return build_affine_game(
            np.asarray(payload["matrix"], float),
            np.asarray(payload["offset"], float),
            payload["dims"],
            boxes,
            coupling=coupling,
            noise_sigma=payload.get("noise_sigma", 0.0),
            known_solution=None if known is None else np.asarray(known, float),
        )
    raise ValueError(f"unknown instance kind {kind!r}")
