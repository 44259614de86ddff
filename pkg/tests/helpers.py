"""Shared test oracles: per-agent message-passing reference updates, dense
matrix-form updates, an independent projection solver and a random-instance
factory. Everything here is deliberately written against the math, not against
the library's vectorized code paths."""

from __future__ import annotations

import numpy as np

from nashsplit import (
    BoxSet,
    CouplingConstraints,
    DualGraph,
    ExtendedSystem,
    GameSpec,
    PreconditionerPhi,
    PreconditionerPsi,
    StackedPoint,
    StepSizes,
    build_affine_game,
    pseudograd_mean,
)

Array = np.ndarray


# -- independent projection oracle (dual ascent) -------------------------------


def dual_ascent_projection(point, lower, upper, a_matrix, b,
                           tol=1e-12, max_iter=2_000_000) -> Array:
    """Projection onto a box intersected with half-spaces via dual ascent.

    Maximizes the dual of the projection program with projected gradient
    steps on the multipliers; the primal readback is clip(v - A'mu). Slower
    but completely independent of the Dykstra implementation under test.
    """
    v = np.asarray(point, float)
    A = np.asarray(a_matrix, float)
    b = np.asarray(b, float)
    if A.size == 0:
        return np.clip(v, lower, upper)
    step = 1.0 / np.linalg.norm(A, 2) ** 2
    mu = np.zeros(A.shape[0])
    y = np.clip(v - A.T @ mu, lower, upper)
    for _ in range(max_iter):
        mu_next = np.maximum(mu + step * (A @ y - b), 0.0)
        y = np.clip(v - A.T @ mu_next, lower, upper)
        if np.abs(mu_next - mu).max() <= tol * (1.0 + np.abs(mu).max()):
            mu = mu_next
            break
        mu = mu_next
    return y


# -- per-agent message-passing reference updates --------------------------------


def _local_views(game: GameSpec, graph: DualGraph, point: StackedPoint):
    n_agents, m = game.n_agents, game.m
    xs = game.split(point.x)
    zs = point.z.reshape(n_agents, m) if m else np.zeros((n_agents, 0))
    ls = point.lam.reshape(n_agents, m) if m else np.zeros((n_agents, 0))
    return xs, zs, ls


def _laplacian_message(graph: DualGraph, blocks: Array, i: int) -> Array:
    # sum_j w_ij(v_i - v_j): what agent i assembles from its neighbors
    total = np.zeros_like(blocks[i])
    for j in graph.neighbors(i):
        total += graph.weights[i, j] * (blocks[i] - blocks[j])
    return total


def _agent_constraint(game: GameSpec, i: int):
    if game.coupling is None:
        return np.zeros((0, game.dims[i])), np.zeros(0)
    return game.coupling.blocks[i], game.coupling.b_split[i]


def sprg_step_peragent(game: GameSpec, graph: DualGraph, steps: StepSizes,
                       current: StackedPoint, previous: StackedPoint) -> StackedPoint:
    """Literal distributed reflected update: each agent uses only its own data
    and neighbor messages (deterministic oracle)."""
    xs, zs, ls = _local_views(game, graph, current)
    xps, zps, lps = _local_views(game, graph, previous)
    x_t = [2.0 * a - b for a, b in zip(xs, xps)]
    z_t = 2.0 * zs - zps
    l_t = 2.0 * ls - lps
    grad = pseudograd_mean(game, np.concatenate(x_t))

    new_x, new_z, new_l = [], [], []
    for i in range(game.n_agents):
        A_i, b_i = _agent_constraint(game, i)
        box = game.boxes[i]
        g_i = grad[game.slices[i]]
        lap_lt = _laplacian_message(graph, l_t, i)
        lap_zt = _laplacian_message(graph, z_t, i)
        new_x.append(box.project(xs[i] - steps.alpha[i] * (g_i + A_i.T @ l_t[i])))
        new_z.append(zs[i] - steps.nu[i] * lap_lt)
        new_l.append(np.maximum(
            ls[i] + steps.sigma[i] * (A_i @ x_t[i] - b_i - lap_lt + lap_zt), 0.0))
    return StackedPoint(np.concatenate(new_x),
                        np.concatenate(new_z) if game.m else np.zeros(0),
                        np.concatenate(new_l) if game.m else np.zeros(0))


def spprg_step_peragent(game: GameSpec, graph: DualGraph, steps: StepSizes,
                        current: StackedPoint, previous: StackedPoint) -> StackedPoint:
    """Literal distributed preconditioned reflected update with the sequential
    x -> z -> lam information flow."""
    xs, zs, ls = _local_views(game, graph, current)
    xps, _, lps = _local_views(game, graph, previous)
    x_t = [2.0 * a - b for a, b in zip(xs, xps)]
    l_t = 2.0 * ls - lps
    grad = pseudograd_mean(game, np.concatenate(x_t))

    new_x, new_z = [], []
    for i in range(game.n_agents):
        A_i, _ = _agent_constraint(game, i)
        box = game.boxes[i]
        g_i = grad[game.slices[i]]
        new_x.append(box.project(xs[i] - steps.alpha[i] * (g_i + A_i.T @ ls[i])))
        new_z.append(zs[i] - steps.nu[i] * _laplacian_message(graph, ls, i))
    new_z_arr = np.stack(new_z) if game.m else np.zeros((game.n_agents, 0))

    new_l = []
    for i in range(game.n_agents):
        A_i, b_i = _agent_constraint(game, i)
        reflected_z = 2.0 * new_z_arr - zs
        new_l.append(np.maximum(
            ls[i] + steps.sigma[i] * (
                A_i @ (2.0 * new_x[i] - xs[i]) - b_i
                + _laplacian_message(graph, reflected_z, i)
                - _laplacian_message(graph, l_t, i)
            ),
            0.0,
        ))
    return StackedPoint(np.concatenate(new_x),
                        new_z_arr.reshape(-1) if game.m else np.zeros(0),
                        np.concatenate(new_l) if game.m else np.zeros(0))


def spfb_step_peragent(game: GameSpec, graph: DualGraph, steps: StepSizes,
                       current: StackedPoint) -> StackedPoint:
    """Literal distributed forward-backward update (no reflection)."""
    xs, zs, ls = _local_views(game, graph, current)
    grad = pseudograd_mean(game, current.x)

    new_x, new_z = [], []
    for i in range(game.n_agents):
        A_i, _ = _agent_constraint(game, i)
        g_i = grad[game.slices[i]]
        new_x.append(game.boxes[i].project(xs[i] - steps.alpha[i] * (g_i + A_i.T @ ls[i])))
        new_z.append(zs[i] - steps.nu[i] * _laplacian_message(graph, ls, i))
    new_z_arr = np.stack(new_z) if game.m else np.zeros((game.n_agents, 0))

    new_l = []
    for i in range(game.n_agents):
        A_i, b_i = _agent_constraint(game, i)
        reflected_z = 2.0 * new_z_arr - zs
        new_l.append(np.maximum(
            ls[i] + steps.sigma[i] * (
                A_i @ (2.0 * new_x[i] - xs[i]) - b_i
                + _laplacian_message(graph, reflected_z, i)
                - _laplacian_message(graph, ls, i)
            ),
            0.0,
        ))
    return StackedPoint(np.concatenate(new_x),
                        new_z_arr.reshape(-1) if game.m else np.zeros(0),
                        np.concatenate(new_l) if game.m else np.zeros(0))


# -- dense matrix-form oracles ---------------------------------------------------


def stacked_bounds(game: GameSpec, dual_dim: int):
    lower = np.concatenate([game.lower, np.full(dual_dim, -np.inf), np.zeros(dual_dim)])
    upper = np.concatenate([game.upper, np.full(2 * dual_dim, np.inf)])
    return lower, upper


def dense_forward_ab(game: GameSpec, graph: DualGraph, omega_col: Array) -> Array:
    """Forward map evaluated through one dense affine assembly (affine games)."""
    system = ExtendedSystem(game, graph)
    M = system.linear_part_ab()
    offset = np.concatenate([
        game.affine.offset, np.zeros(system.dual_dim), system.b_stack,
    ])
    return offset + M @ omega_col


def dense_sprg_update(game: GameSpec, graph: DualGraph, steps: StepSizes,
                      current: StackedPoint, previous: StackedPoint) -> Array:
    """Compact reflected update computed with dense matrices and a dense solve."""
    system = ExtendedSystem(game, graph)
    phi = PreconditionerPhi.from_step_sizes(steps, game).as_matrix()
    omega_t = 2.0 * current.col() - previous.col()
    v = current.col() - np.linalg.solve(phi, dense_forward_ab(game, graph, omega_t))
    lower, upper = stacked_bounds(game, system.dual_dim)
    return np.clip(v, lower, upper)


def dense_spprg_update(game: GameSpec, graph: DualGraph, steps: StepSizes,
                       current: StackedPoint, previous: StackedPoint) -> Array:
    """Compact preconditioned reflected update: dense solve against the bordered
    preconditioner followed by a numerically solved resolvent inclusion."""
    system = ExtendedSystem(game, graph)
    psi = PreconditionerPsi.from_step_sizes(steps, game, graph).as_matrix()
    omega_t = 2.0 * current.col() - previous.col()
    n, q = system.dim, system.dual_dim
    l_lam_t = system.l_mat @ omega_t[n + q:]
    u = np.concatenate([
        game.affine(omega_t[:n]), np.zeros(q), system.b_stack + l_lam_t,
    ])
    v = current.col() - np.linalg.solve(psi, u)
    lower, upper = stacked_bounds(game, q)
    return dense_skew_resolvent(psi, system.skew_matrix(), lower, upper, v)


def dense_skew_resolvent(psi: Array, skew: Array, lower: Array, upper: Array,
                         v: Array, fp_rounds: int = 8, fp_iters: int = 4000) -> Array:
    """Solve the inclusion ``psi (v - w) in N_C(w) + skew w`` numerically.

    Projected-gradient sweeps on the strongly monotone problem identify the
    active coordinates, a linear solve on the free coordinates polishes the
    point, and the optimality certificate is verified before acceptance.
    """
    H = psi + skew
    target = psi @ v
    mu = float(np.linalg.eigvalsh(psi)[0])
    lip = float(np.linalg.norm(H, 2))
    gamma = mu / lip ** 2
    w = np.clip(v, lower, upper)
    for _ in range(fp_rounds):
        for _ in range(fp_iters):
            w = np.clip(w - gamma * (H @ w - target), lower, upper)
        eps = 1e-8 * (1.0 + np.abs(w).max())
        at_lower = w <= lower + eps
        at_upper = w >= upper - eps
        free = ~(at_lower | at_upper)
        trial = np.where(at_lower, lower, np.where(at_upper, upper, w))
        if free.any():
            rhs = target[free] - H[np.ix_(free, ~free)] @ trial[~free]
            trial[free] = np.linalg.solve(H[np.ix_(free, free)], rhs)
        residual = target - H @ trial  # must lie in the normal cone at trial
        interior = (trial > lower + eps) & (trial < upper - eps)
        ok = (
            np.all(trial >= lower - 1e-9)
            and np.all(trial <= upper + 1e-9)
            and (not interior.any() or np.abs(residual[interior]).max() < 1e-10)
            and np.all(residual[trial <= lower + eps] <= 1e-9)
            and np.all(residual[trial >= upper - eps] >= -1e-9)
        )
        if ok:
            return trial
        w = np.clip(trial, lower, upper)
    return w


def random_connected_graph(rng, n_nodes: int) -> DualGraph:
    edges = [(i, i + 1) for i in range(1, n_nodes)]
    if n_nodes >= 4 and rng.random() < 0.7:
        i = int(rng.integers(1, n_nodes - 2))
        j = int(rng.integers(i + 2, n_nodes + 1))
        edges.append((i, j))
    elif n_nodes == 3 and rng.random() < 0.5:
        edges.append((1, 3))
    return DualGraph.from_edges(n_nodes, edges)


def random_instance(rng, with_coupling: bool = True, noise_sigma: float = 0.0):
    """Small random affine game with a certified-monotone pseudogradient."""
    n_agents = int(rng.integers(2, 6))
    dims = [int(rng.integers(1, 3)) for _ in range(n_agents)]
    n = sum(dims)
    m = int(rng.integers(1, 4)) if with_coupling else 0

    G = rng.normal(size=(n, n))
    sym = G @ G.T / n + 0.3 * np.eye(n)
    R = rng.normal(size=(n, n))
    skew = 0.5 * (R - R.T)
    matrix = sym + skew
    offset = rng.normal(size=n)

    boxes = []
    for d in dims:
        lower = rng.uniform(-2.0, -0.5, size=d)
        upper = rng.uniform(0.5, 2.0, size=d)
        boxes.append(BoxSet(lower, upper))
    midpoint = np.concatenate([b.midpoint() for b in boxes])

    coupling = None
    if with_coupling:
        blocks = [rng.uniform(-1.0, 1.0, size=(m, d)) for d in dims]
        A = np.hstack(blocks)
        b = A @ midpoint + rng.uniform(0.5, 1.5, size=m)
        coupling = CouplingConstraints.equal_split(blocks, b)

    game = build_affine_game(matrix, offset, dims, boxes, coupling=coupling,
                             noise_sigma=noise_sigma,
                             label=f"random-{n_agents}x{m}")
    graph = random_connected_graph(rng, n_agents)
    return game, graph


def random_stacked_point(rng, game: GameSpec, graph: DualGraph) -> StackedPoint:
    q = game.n_agents * game.m
    return StackedPoint(
        rng.normal(size=game.dim),
        rng.normal(size=q),
        rng.normal(size=q),
    )


def exact_equilibrium_fixture():
    """Tiny constrained game whose stacked equilibrium is known in closed form.

    Two scalar agents on [0, 2], strongly monotone field ``x - (2, 2)`` and a
    shared budget ``x1 + x2 <= 2``; the variational equilibrium is x = (1, 1)
    with shared multiplier 1 and zero auxiliary block.
    """
    boxes = [BoxSet([0.0], [2.0]), BoxSet([0.0], [2.0])]
    coupling = CouplingConstraints.equal_split(
        [np.array([[1.0]]), np.array([[1.0]])], np.array([2.0]))
    game = build_affine_game(
        np.eye(2), np.array([-2.0, -2.0]), (1, 1), boxes, coupling=coupling,
        known_solution=np.array([1.0, 1.0]), label="exact-equilibrium",
    )
    graph = DualGraph.from_edges(2, [(1, 2)])
    omega_star = StackedPoint(np.array([1.0, 1.0]), np.zeros(2), np.ones(2))
    return game, graph, omega_star
