"""Solution-quality measures: the restricted natural-map residual, distance to
known solutions, dual consensus, a KKT residual on the stacked system and a
brute-force gap function for the two-dimensional fixtures."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .game import GameSpec, pseudograd_mean
from .graph import DualGraph
from .operators import StackedPoint

Array = np.ndarray


class ProjectionError(RuntimeError):
    """The alternating-projection solver did not reach its tolerance."""


def project_polyhedron(point: Array, lower: Array, upper: Array,
                       a_matrix: Array | None = None, b: Array | None = None,
                       tol: float = 1e-10, max_cycles: int = 200_000) -> Array:
    """Project onto ``{v : lower <= v <= upper, a_matrix v <= b}``.

    Cyclic Dykstra iteration over the box and each half-space, which converges
    to the exact Euclidean projection onto the intersection. Cheap at the desk
    scales used here; raises :class:`ProjectionError` when the cycle cap is
    reached before the tolerance.
    """
    v = np.asarray(point, dtype=float)
    if a_matrix is None or a_matrix.size == 0:
        return np.clip(v, lower, upper)
    rows = np.asarray(a_matrix, dtype=float)
    rhs = np.asarray(b, dtype=float)
    row_norms = np.einsum("ij,ij->i", rows, rows)
    if np.any(row_norms == 0.0):
        keep = row_norms > 0.0
        if np.any(rhs[~keep] < 0.0):
            raise ValueError("infeasible constraint row 0'v <= b with b < 0")
        rows, rhs, row_norms = rows[keep], rhs[keep], row_norms[keep]
        if rows.shape[0] == 0:
            return np.clip(v, lower, upper)
    m = rows.shape[0]

    y = v.copy()
    increments = [np.zeros_like(v) for _ in range(m + 1)]
    # absolute tolerance at desk scale; relative only for astronomically
    # scaled inputs (e.g. residuals of diverged runs), where float resolution
    # forbids absolute thresholds
    scale = max(1.0, 1e-5 * float(np.linalg.norm(v)))
    for _ in range(max_cycles):
        y_prev = y
        for j in range(m):
            w = y + increments[j]
            gap = rows[j] @ w - rhs[j]
            y = w - (gap / row_norms[j]) * rows[j] if gap > 0.0 else w
            increments[j] = w - y
        w = y + increments[m]
        y = np.clip(w, lower, upper)
        increments[m] = w - y
        if (np.abs(y - y_prev).max() <= tol * scale
                and (rows @ y - rhs).max() <= tol * scale):
            return y
    raise ProjectionError(
        f"projection did not reach tolerance {tol:g} within {max_cycles} cycles"
    )


def residual(game: GameSpec, x: Array, tol: float = 1e-10) -> float:
    """Restricted residual ``|x - proj_X(x - F(x))|`` on the collective
    feasible set; zero exactly at the solutions of the variational problem."""
    x = np.asarray(x, dtype=float)
    target = x - pseudograd_mean(game, x)
    if game.coupling is None:
        projected = np.clip(target, game.lower, game.upper)
    else:
        projected = project_polyhedron(
            target, game.lower, game.upper,
            game.coupling.matrix, game.coupling.b, tol=tol,
        )
    return float(np.linalg.norm(x - projected))


def kkt_residual(game: GameSpec, graph: DualGraph, omega: StackedPoint) -> float:
    """Natural-map residual of the shared-multiplier KKT system.

    Uses the consensus average of the local dual blocks: the primal part
    checks ``x`` against ``proj_box(x - (F(x) + A' lam))`` and the dual part
    checks ``lam`` against ``proj_+(lam + (A x - b))``.
    """
    x = omega.x
    grad = pseudograd_mean(game, x)
    if game.coupling is None:
        return float(np.linalg.norm(x - np.clip(x - grad, game.lower, game.upper)))
    m = game.m
    lam_bar = omega.lam.reshape(graph.n_nodes, m).mean(axis=0)
    A, b = game.coupling.matrix, game.coupling.b
    r_primal = x - np.clip(x - (grad + A.T @ lam_bar), game.lower, game.upper)
    r_dual = lam_bar - np.maximum(lam_bar + (A @ x - b), 0.0)
    return float(np.linalg.norm(np.concatenate([r_primal, r_dual])))


def dual_consensus(graph: DualGraph, lam_stacked: Array) -> float:
    """Largest deviation of a local dual copy from the blockwise mean."""
    lam = np.asarray(lam_stacked, dtype=float)
    if lam.size == 0:
        return 0.0
    if lam.size % graph.n_nodes:
        raise ValueError("stacked duals must split evenly across agents")
    blocks = lam.reshape(graph.n_nodes, -1)
    return float(np.linalg.norm(blocks - blocks.mean(axis=0), axis=1).max())


def gap_function_small(game: GameSpec, x: Array, resolution: int = 1000) -> float:
    """Brute-force gap ``max_y <F(y), x - y>`` over a grid on the unit square.

    Only meant for the two-dimensional fixtures whose feasible set is
    [0, 1]^2; the grid has ``resolution`` cells per axis, so the value is
    accurate to the Lipschitz constant times ``1/resolution``.
    """
    if resolution < 100:
        raise ValueError("grid resolution must be at least 100")
    if game.dim != 2:
        raise ValueError("gap fixture requires a two-dimensional game")
    if not (np.allclose(game.lower, 0.0) and np.allclose(game.upper, 1.0)):
        raise ValueError("gap fixture requires the unit-square domain")
    x = np.asarray(x, dtype=float)

    ticks = np.linspace(0.0, 1.0, resolution + 1)
    y1, y2 = np.meshgrid(ticks, ticks, indexing="ij")
    grid = np.stack([y1.ravel(), y2.ravel()], axis=1)
    if game.affine is not None:
        field = grid @ game.affine.matrix.T + game.affine.offset
    else:
        field = np.array([pseudograd_mean(game, y) for y in grid])
    values = np.einsum("nj,nj->n", field, x[None, :] - grid)
    return float(values.max())


@dataclass(frozen=True)
class MetricsReport:
    """Bundle of the four solution-quality measures at one stacked point."""

    residual: float
    dist_to_solution: float | None
    dual_consensus: float
    kkt_residual: float


def evaluate(game: GameSpec, graph: DualGraph, omega: StackedPoint) -> MetricsReport:
    return MetricsReport(
        residual=residual(game, omega.x),
        dist_to_solution=game.distance_to_solution(omega.x),
        dual_consensus=dual_consensus(graph, omega.lam),
        kkt_residual=kkt_residual(game, graph, omega),
    )
