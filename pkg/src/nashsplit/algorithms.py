"""Solver engine: reflected-gradient solvers on both splittings plus the
forward-backward, forward-backward-forward and extragradient baselines, each
as a single-step transition and a driver loop with tracing and stopping rules.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import metrics
from .game import GameSpec, pseudograd_mean, pseudograd_sample
from .graph import DualGraph
from .operators import (
    ExtendedSystem,
    PreconditionerPhi,
    PreconditionerPsi,
    StackedPoint,
    StepSizes,
    estimate_constants,
    extended_lipschitz,
    psi_pd_check,
    reflected_margin,
    reflected_step_bound,
    step_sizes_from_bounds,
)
from .stochastic import BatchSchedule, SampleStream

Array = np.ndarray

SOLVERS = ("SPRG", "SpPRG", "SpFB", "SFBF", "SEG")

#: pseudogradient evaluations per iteration, by solver
ORACLE_CALLS_PER_STEP = {"SPRG": 1, "SpPRG": 1, "SpFB": 1, "SFBF": 2, "SEG": 2}


@dataclass(frozen=True)
class IterateState:
    """Current and previous stacked iterates plus evaluation counters.

    ``last_grad_point``/``last_grad_value`` record the most recent oracle
    evaluation so the driver can report the stochastic-error proxy without
    spending extra samples.
    """

    current: StackedPoint
    previous: StackedPoint
    k: int = 0
    oracle_calls: int = 0
    projection_calls: int = 0
    last_batch: int = 0
    last_grad_point: Array | None = None
    last_grad_value: Array | None = None


@dataclass(frozen=True)
class SolverConfig:
    """Everything needed to reproduce one run.

    ``schedule=None`` runs on the mean oracle (deterministic mode); otherwise
    samples are drawn per iteration with the scheduled batch size from
    per-agent substreams seeded by ``seed``. Step sizes default to the
    dominance bounds with the convergence margin on constrained games and to
    the classic reflected bound on games without coupling constraints.
    An infinite ``tol`` disables residual stopping, so the run produces
    exactly ``max_iter`` records.
    """

    solver: str
    max_iter: int = 1000
    tol: float = 1e-6
    seed: int = 0
    schedule: BatchSchedule | None = None
    step_sizes: StepSizes | None = None
    gamma: float | None = None
    tau: float | None = None
    safety: float = 0.99
    margin: float | None = None
    x0: tuple | None = None
    divergence_guard: float | None = 1e12

    def __post_init__(self):
        if self.solver not in SOLVERS:
            raise ValueError(f"unknown solver {self.solver!r}, expected one of {SOLVERS}")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if not self.tol > 0:
            raise ValueError("tolerance must be positive")


@dataclass
class RunTrace:
    """Per-iteration metrics of one run; one record per completed iteration."""

    header: dict
    k: Array
    residual: Array
    dist: Array | None
    consensus: Array
    eps_norm: Array
    batch: Array
    oracle_calls: Array
    wall_ms: Array
    status: str

    COLUMNS = ("k", "residual", "dist", "consensus", "N_k", "oracle_calls",
               "wall_ms", "status")

    def __len__(self) -> int:
        return int(self.k.size)

    @property
    def final_residual(self) -> float:
        return float(self.residual[-1])

    def to_csv(self, path) -> None:
        import json

        lines = ["# nashsplit-trace v1"]
        for key, value in self.header.items():
            if isinstance(value, (list, tuple, np.ndarray)):
                value = json.dumps(np.asarray(value).tolist())
            lines.append(f"# {key}={value}")
        columns = ["k", "residual"]
        if self.dist is not None:
            columns.append("dist")
        columns += ["consensus", "N_k", "oracle_calls", "wall_ms", "status"]
        lines.append(",".join(columns))
        for i in range(len(self)):
            row = [str(int(self.k[i])), repr(float(self.residual[i]))]
            if self.dist is not None:
                row.append(repr(float(self.dist[i])))
            row += [
                repr(float(self.consensus[i])),
                str(int(self.batch[i])),
                str(int(self.oracle_calls[i])),
                repr(float(self.wall_ms[i])),
                self.status,
            ]
            lines.append(",".join(row))
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def from_csv(cls, path) -> "RunTrace":
        header: dict = {}
        rows: list[list[str]] = []
        columns: list[str] | None = None
        with open(path) as fh:
            for line in fh:
                line = line.rstrip("\n")
                if not line:
                    continue
                if line.startswith("#"):
                    body = line[1:].strip()
                    if "=" in body:
                        key, value = body.split("=", 1)
                        header[key.strip()] = value.strip()
                    continue
                if columns is None:
                    columns = line.split(",")
                    continue
                rows.append(line.split(","))
        if columns is None:
            raise ValueError(f"{path} contains no trace table")
        idx = {name: i for i, name in enumerate(columns)}
        has_dist = "dist" in idx

        def col(name, dtype=float):
            return np.array([dtype(r[idx[name]]) for r in rows])

        return cls(
            header=header,
            k=col("k", int),
            residual=col("residual"),
            dist=col("dist") if has_dist else None,
            consensus=col("consensus"),
            eps_norm=np.zeros(len(rows)),
            batch=col("N_k", int),
            oracle_calls=col("oracle_calls", int),
            wall_ms=col("wall_ms"),
            status=rows[-1][idx["status"]] if rows else "empty",
        )


def initial_state(game: GameSpec, graph: DualGraph, x0=None,
                  system: ExtendedSystem | None = None) -> IterateState:
    """Start from the box midpoints (or ``x0``) with zero auxiliary and dual
    blocks; the missing pre-initial iterate is set equal to the initial one,
    so the first reflection degenerates to a plain forward point."""
    system = system or ExtendedSystem(game, graph)
    start = system.initial_point(x0)
    return IterateState(current=start, previous=start)


def _gradient(game, x, k, schedule, rng) -> tuple[Array, int]:
    if schedule is None:
        return pseudograd_mean(game, x), 0
    batch = schedule.batch_size(k)
    return pseudograd_sample(game, x, batch, rng), batch


def sprg_step(state: IterateState, game: GameSpec, graph: DualGraph,
              phi: PreconditionerPhi, schedule: BatchSchedule | None, rng,
              system: ExtendedSystem | None = None) -> IterateState:
    """One reflected-gradient step on the splitting with the skew term in front.

    Evaluates the (sampled) forward operator at the reflection of the previous
    iterate on the current one, then applies the componentwise projections.
    """
    system = system or ExtendedSystem(game, graph)
    cur, prev = state.current, state.previous
    x_t = 2.0 * cur.x - prev.x
    z_t = 2.0 * cur.z - prev.z
    lam_t = 2.0 * cur.lam - prev.lam

    grad, batch = _gradient(game, x_t, state.k, schedule, rng)
    l_lam_t = system.l_mat @ lam_t

    x_new = game.project_local(cur.x - phi.alpha_x * (grad + system.a_mat.T @ lam_t))
    z_new = cur.z - phi.nu_z * l_lam_t
    lam_new = np.maximum(
        cur.lam - phi.sigma_lam * (
            l_lam_t + system.b_stack - system.a_mat @ x_t - system.l_mat @ z_t
        ),
        0.0,
    )
    return IterateState(
        current=StackedPoint(x_new, z_new, lam_new),
        previous=cur,
        k=state.k + 1,
        oracle_calls=state.oracle_calls + 1,
        projection_calls=state.projection_calls + 1,
        last_batch=batch,
        last_grad_point=x_t,
        last_grad_value=grad,
    )


def spprg_step(state: IterateState, game: GameSpec, graph: DualGraph,
               psi: PreconditionerPsi, schedule: BatchSchedule | None, rng,
               system: ExtendedSystem | None = None) -> IterateState:
    """One preconditioned reflected step on the skew-in-back splitting.

    The bordered preconditioner makes the resolvent sequential: the new
    primal and auxiliary blocks feed the dual update within the same step.
    """
    system = system or ExtendedSystem(game, graph)
    cur, prev = state.current, state.previous
    x_t = 2.0 * cur.x - prev.x
    lam_t = 2.0 * cur.lam - prev.lam

    grad, batch = _gradient(game, x_t, state.k, schedule, rng)

    x_new = game.project_local(cur.x - psi.alpha_x * (grad + system.a_mat.T @ cur.lam))
    z_new = cur.z - psi.nu_z * (system.l_mat @ cur.lam)
    lam_new = np.maximum(
        cur.lam + psi.sigma_lam * (
            system.a_mat @ (2.0 * x_new - cur.x) - system.b_stack
            + system.l_mat @ (2.0 * z_new - cur.z) - system.l_mat @ lam_t
        ),
        0.0,
    )
    return IterateState(
        current=StackedPoint(x_new, z_new, lam_new),
        previous=cur,
        k=state.k + 1,
        oracle_calls=state.oracle_calls + 1,
        projection_calls=state.projection_calls + 1,
        last_batch=batch,
        last_grad_point=x_t,
        last_grad_value=grad,
    )


def spfb_step(state: IterateState, game: GameSpec, graph: DualGraph,
              psi: PreconditionerPsi, schedule: BatchSchedule | None, rng,
              system: ExtendedSystem | None = None) -> IterateState:
    """One preconditioned forward-backward step (no reflection)."""
    system = system or ExtendedSystem(game, graph)
    cur = state.current

    grad, batch = _gradient(game, cur.x, state.k, schedule, rng)

    x_new = game.project_local(cur.x - psi.alpha_x * (grad + system.a_mat.T @ cur.lam))
    z_new = cur.z - psi.nu_z * (system.l_mat @ cur.lam)
    lam_new = np.maximum(
        cur.lam + psi.sigma_lam * (
            system.a_mat @ (2.0 * x_new - cur.x) - system.b_stack
            + system.l_mat @ (2.0 * z_new - cur.z) - system.l_mat @ cur.lam
        ),
        0.0,
    )
    return IterateState(
        current=StackedPoint(x_new, z_new, lam_new),
        previous=cur,
        k=state.k + 1,
        oracle_calls=state.oracle_calls + 1,
        projection_calls=state.projection_calls + 1,
        last_batch=batch,
        last_grad_point=cur.x.copy(),
        last_grad_value=grad,
    )


def sfbf_step(state: IterateState, game: GameSpec, graph: DualGraph,
              gamma: float, schedule: BatchSchedule | None, rng,
              system: ExtendedSystem | None = None) -> IterateState:
    """One forward-backward-forward step with a final feasibility projection.

    Two forward evaluations and two projection sweeps per iteration; the
    closing projection keeps the primal block in its box and the duals
    nonnegative, which the plain correction step would not.
    """
    system = system or ExtendedSystem(game, graph)
    cur = state.current

    grad_cur, batch = _gradient(game, cur.x, state.k, schedule, rng)
    u = system.forward_ab(cur, grad_cur)
    mid = system.resolvent_b(cur - gamma * u)

    grad_mid, _ = _gradient(game, mid.x, state.k, schedule, rng)
    v = system.forward_ab(mid, grad_mid)
    new = system.resolvent_b(mid - gamma * (v - u))

    return IterateState(
        current=new,
        previous=cur,
        k=state.k + 1,
        oracle_calls=state.oracle_calls + 2,
        projection_calls=state.projection_calls + 2,
        last_batch=batch,
        last_grad_point=mid.x,
        last_grad_value=grad_mid,
    )


def seg_step(state: IterateState, game: GameSpec, graph: DualGraph,
             gamma: float, schedule: BatchSchedule | None, rng,
             system: ExtendedSystem | None = None) -> IterateState:
    """One extragradient step: trial projection, re-evaluation, final projection."""
    system = system or ExtendedSystem(game, graph)
    cur = state.current

    grad_cur, batch = _gradient(game, cur.x, state.k, schedule, rng)
    u = system.forward_ab(cur, grad_cur)
    mid = system.resolvent_b(cur - gamma * u)

    grad_mid, _ = _gradient(game, mid.x, state.k, schedule, rng)
    v = system.forward_ab(mid, grad_mid)
    new = system.resolvent_b(cur - gamma * v)

    return IterateState(
        current=new,
        previous=cur,
        k=state.k + 1,
        oracle_calls=state.oracle_calls + 2,
        projection_calls=state.projection_calls + 2,
        last_batch=batch,
        last_grad_point=mid.x,
        last_grad_value=grad_mid,
    )


def default_step_sizes(game: GameSpec, graph: DualGraph, config: SolverConfig,
                       constants=None) -> StepSizes:
    """Step-size policy used when the config does not pin the steps.

    Games without coupling constraints get the uniform classic reflected
    bound ``safety*(sqrt(2)-1)/L``; constrained games get the dominance
    bounds with the reflected convergence margin in the denominators.
    """
    constants = constants or estimate_constants(game, graph)
    if game.m == 0:
        step = reflected_step_bound(max(constants.lipschitz, 1e-12), config.safety)
        return StepSizes.uniform(game.n_agents, step)
    margin = config.margin
    if margin is None:
        margin = reflected_margin(game, graph, constants)
    return step_sizes_from_bounds(
        game, graph, tau=config.tau, safety=config.safety, margin=margin,
        constants=constants,
    )


def run(config: SolverConfig, game: GameSpec, graph: DualGraph) -> RunTrace:
    """Drive one solver until the residual tolerance, divergence or the
    iteration cap; returns the per-iteration trace. Deterministic given the
    config seed (wall-clock timings aside)."""
    system = ExtendedSystem(game, graph)
    constants = estimate_constants(game, graph)
    steps = config.step_sizes or default_step_sizes(game, graph, config, constants)

    solver = config.solver
    header = {
        "solver": solver,
        "seed": config.seed,
        "game": game.label,
        "theta": constants.theta,
        "beta": constants.beta,
        "lipschitz": constants.lipschitz,
        "tol": config.tol,
        "max_iter": config.max_iter,
        "alpha": steps.alpha.tolist(),
        "nu": steps.nu.tolist(),
        "sigma": steps.sigma.tolist(),
    }

    if solver == "SPRG":
        phi = PreconditionerPhi.from_step_sizes(steps, game)
        step_fn = lambda st, rng: sprg_step(st, game, graph, phi, config.schedule, rng, system)
    elif solver in ("SpPRG", "SpFB"):
        psi = PreconditionerPsi.from_step_sizes(steps, game, graph)
        if game.m > 0:
            check = psi_pd_check(psi)
            if not check.pd:
                raise ValueError(
                    f"preconditioner not positive definite (min eig {check.min_eig:.3e})"
                )
        fn = spprg_step if solver == "SpPRG" else spfb_step
        step_fn = lambda st, rng: fn(st, game, graph, psi, config.schedule, rng, system)
    else:  # SFBF, SEG
        gamma = config.gamma
        if gamma is None:
            gamma = config.safety / extended_lipschitz(game, graph, constants)
        header["gamma"] = gamma
        fn = sfbf_step if solver == "SFBF" else seg_step
        step_fn = lambda st, rng: fn(st, game, graph, gamma, config.schedule, rng, system)

    stream = SampleStream(game, config.seed) if config.schedule is not None else None
    state = initial_state(game, graph, x0=config.x0, system=system)

    ks, residuals, dists, conss, epss, batches, calls, walls = ([] for _ in range(8))
    status = "maxiter"
    t0 = time.perf_counter()
    for _ in range(config.max_iter):
        state = step_fn(state, stream)
        x = state.current.x
        _check_feasibility(game, state.current)

        res = metrics.residual(game, x)
        dist = game.distance_to_solution(x)
        cons = metrics.dual_consensus(graph, state.current.lam) if game.m else 0.0
        if config.schedule is not None and state.last_grad_point is not None:
            eps = float(np.linalg.norm(
                state.last_grad_value - pseudograd_mean(game, state.last_grad_point)
            ))
        else:
            eps = 0.0

        ks.append(state.k)
        residuals.append(res)
        dists.append(dist)
        conss.append(cons)
        epss.append(eps)
        batches.append(state.last_batch)
        calls.append(state.oracle_calls)
        walls.append((time.perf_counter() - t0) * 1e3)

        if np.isfinite(config.tol) and res <= config.tol:
            status = "converged"
            break
        if config.divergence_guard is not None and state.current.max_abs() > config.divergence_guard:
            status = "diverged"
            break

    header["status"] = status
    dist_arr = None if dists[0] is None else np.asarray(dists, dtype=float)
    return RunTrace(
        header=header,
        k=np.asarray(ks, dtype=int),
        residual=np.asarray(residuals, dtype=float),
        dist=dist_arr,
        consensus=np.asarray(conss, dtype=float),
        eps_norm=np.asarray(epss, dtype=float),
        batch=np.asarray(batches, dtype=int),
        oracle_calls=np.asarray(calls, dtype=int),
        wall_ms=np.asarray(walls, dtype=float),
        status=status,
    )


def _check_feasibility(game: GameSpec, point: StackedPoint) -> None:
    # projections make these exact; any violation is an implementation bug
    if np.any(point.x < game.lower) or np.any(point.x > game.upper):
        raise RuntimeError("primal iterate escaped its box")
    if point.lam.size and np.any(point.lam < 0.0):
        raise RuntimeError("dual iterate escaped the nonnegative orthant")
