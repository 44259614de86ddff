"""Extended operators on the stacked primal/auxiliary/dual space, the two
preconditioners, resolvents, step-size bounds and operator-constant estimates.

The stacked variable is ``omega = (x, z, lam)`` with ``x`` the joint decision,
``z`` the consensus-helper block and ``lam`` the local dual copies, both of
dimension ``N*m``. Two splittings of the same KKT-type inclusion are exposed:
one keeps the skew coupling in the single-valued part (solved with a diagonal
preconditioner), the other moves it next to the normal cones (solved with a
bordered preconditioner whose lower-triangular structure yields a sequential
resolvent).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .game import GameSpec, pseudograd_mean
from .graph import DualGraph, laplacian_expand

Array = np.ndarray

REFLECTED_STEP_FACTOR = np.sqrt(2.0) - 1.0  # classic single-call reflected bound
_TAU_FALLBACK = 1e-6


@dataclass(frozen=True)
class StackedPoint:
    """One point of the extended space, ``omega = col(x, z, lam)``."""

    x: Array
    z: Array
    lam: Array

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))
        object.__setattr__(self, "z", np.asarray(self.z, dtype=float))
        object.__setattr__(self, "lam", np.asarray(self.lam, dtype=float))

    def col(self) -> Array:
        return np.concatenate([self.x, self.z, self.lam])

    @classmethod
    def from_col(cls, vec: Array, dim: int, dual_dim: int) -> "StackedPoint":
        vec = np.asarray(vec, dtype=float)
        if vec.size != dim + 2 * dual_dim:
            raise ValueError("stacked vector has the wrong length")
        return cls(vec[:dim], vec[dim:dim + dual_dim], vec[dim + dual_dim:])

    def norm(self) -> float:
        return float(np.linalg.norm(self.col()))

    def max_abs(self) -> float:
        vec = self.col()
        return float(np.abs(vec).max()) if vec.size else 0.0

    def __add__(self, other: "StackedPoint") -> "StackedPoint":
        return StackedPoint(self.x + other.x, self.z + other.z, self.lam + other.lam)

    def __sub__(self, other: "StackedPoint") -> "StackedPoint":
        return StackedPoint(self.x - other.x, self.z - other.z, self.lam - other.lam)

    def __rmul__(self, scalar: float) -> "StackedPoint":
        return StackedPoint(scalar * self.x, scalar * self.z, scalar * self.lam)


@dataclass(frozen=True)
class StepSizes:
    """Per-agent step sizes for the primal, auxiliary and dual updates.

    ``tau`` is the design margin that entered the bounds (None when the steps
    were set directly). Zero steps are tolerated for diagnostics; convergence
    needs strictly positive values.
    """

    alpha: Array
    nu: Array
    sigma: Array
    tau: float | None = None

    def __post_init__(self):
        for name in ("alpha", "nu", "sigma"):
            arr = np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            if np.any(arr < 0) or not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} must be finite and nonnegative")
            object.__setattr__(self, name, arr)
        if not (self.alpha.size == self.nu.size == self.sigma.size):
            raise ValueError("alpha, nu, sigma must have one entry per agent")

    @classmethod
    def uniform(cls, n_agents: int, step: float, tau: float | None = None) -> "StepSizes":
        return cls(np.full(n_agents, step), np.full(n_agents, step),
                   np.full(n_agents, step), tau)


@dataclass(frozen=True)
class OperatorConstants:
    """Estimated operator constants of the game's mean pseudogradient.

    ``lipschitz`` bounds the Lipschitz constant, ``beta`` the cocoercivity
    constant (zero when none is certified), and ``theta`` the cocoercivity of
    the consensus-splitting forward operator, ``min(1/(2 d*), beta)``.
    """

    theta: float
    beta: float
    lipschitz: float


@dataclass(frozen=True)
class PsiCheck:
    pd: bool
    min_eig: float


class ExtendedSystem:
    """Precomputed block operators shared by forward maps and resolvents."""

    def __init__(self, game: GameSpec, graph: DualGraph):
        if graph.n_nodes != game.n_agents:
            raise ValueError("graph size must match the number of agents")
        self.game = game
        self.graph = graph
        self.dim = game.dim
        self.m = game.m
        self.dual_dim = game.n_agents * game.m
        if game.m > 0:
            self.a_mat = block_diagonal(game.coupling.blocks)
            self.l_mat = laplacian_expand(graph.laplacian, game.m)
            self.b_stack = np.concatenate(game.coupling.b_split)
        else:
            self.a_mat = np.zeros((0, game.dim))
            self.l_mat = np.zeros((0, 0))
            self.b_stack = np.zeros(0)

    def initial_point(self, x0: Array | None = None) -> StackedPoint:
        x = self.game.project_local(
            np.asarray(x0, dtype=float) if x0 is not None
            else np.concatenate([b.midpoint() for b in self.game.boxes])
        )
        zeros = np.zeros(self.dual_dim)
        return StackedPoint(x, zeros.copy(), zeros.copy())

    # single-valued forward maps

    def forward_ab(self, omega: StackedPoint, grad: Array) -> StackedPoint:
        l_lam = self.l_mat @ omega.lam
        return StackedPoint(
            grad + self.a_mat.T @ omega.lam,
            l_lam,
            l_lam + self.b_stack - self.a_mat @ omega.x - self.l_mat @ omega.z,
        )

    def forward_cd(self, omega: StackedPoint, grad: Array) -> StackedPoint:
        return StackedPoint(
            grad,
            np.zeros(self.dual_dim),
            self.b_stack + self.l_mat @ omega.lam,
        )

    def skew_apply(self, omega: StackedPoint) -> StackedPoint:
        return StackedPoint(
            self.a_mat.T @ omega.lam,
            self.l_mat @ omega.lam,
            -self.a_mat @ omega.x - self.l_mat @ omega.z,
        )

    # resolvents

    def resolvent_b(self, omega: StackedPoint) -> StackedPoint:
        return StackedPoint(
            self.game.project_local(omega.x),
            omega.z,
            np.maximum(omega.lam, 0.0),
        )

    def resolvent_d(self, omega: StackedPoint, alpha_x: Array, nu_z: Array,
                    sigma_lam: Array) -> StackedPoint:
        x_new = self.game.project_local(omega.x - alpha_x * (self.a_mat.T @ omega.lam))
        z_new = omega.z - nu_z * (self.l_mat @ omega.lam)
        lam_new = np.maximum(
            omega.lam + sigma_lam * (self.a_mat @ (2.0 * x_new - omega.x)
                                     + self.l_mat @ (2.0 * z_new - omega.z)),
            0.0,
        )
        return StackedPoint(x_new, z_new, lam_new)

    # dense assemblies, used by preconditioners and diagnostic oracles

    def skew_matrix(self) -> Array:
        n, q = self.dim, self.dual_dim
        S = np.zeros((n + 2 * q, n + 2 * q))
        S[:n, n + q:] = self.a_mat.T
        S[n:n + q, n + q:] = self.l_mat
        S[n + q:, :n] = -self.a_mat
        S[n + q:, n:n + q] = -self.l_mat
        return S

    def linear_part_ab(self) -> Array | None:
        """Dense matrix of the affine forward map, if the game is affine."""
        if self.game.affine is None:
            return None
        n, q = self.dim, self.dual_dim
        M = self.skew_matrix()
        M[:n, :n] += self.game.affine.matrix
        M[n + q:, n + q:] += self.l_mat
        return M


def block_diagonal(blocks: Sequence[Array]) -> Array:
    """Stack the per-agent constraint blocks on the diagonal (N*m by n)."""
    m = blocks[0].shape[0]
    n = sum(B.shape[1] for B in blocks)
    out = np.zeros((len(blocks) * m, n))
    col = 0
    for i, B in enumerate(blocks):
        out[i * m:(i + 1) * m, col:col + B.shape[1]] = B
        col += B.shape[1]
    return out


def _expand_steps(steps: StepSizes, game: GameSpec) -> tuple[Array, Array, Array]:
    alpha_x = np.concatenate([
        np.full(d, steps.alpha[i]) for i, d in enumerate(game.dims)
    ]) if game.dim else np.zeros(0)
    nu_z = np.repeat(steps.nu, game.m)
    sigma_lam = np.repeat(steps.sigma, game.m)
    return alpha_x, nu_z, sigma_lam


@dataclass(frozen=True)
class PreconditionerPhi:
    """Diagonal preconditioner holding the inverse step sizes."""

    alpha_x: Array
    nu_z: Array
    sigma_lam: Array

    @classmethod
    def from_step_sizes(cls, steps: StepSizes, game: GameSpec) -> "PreconditionerPhi":
        return cls(*_expand_steps(steps, game))

    def as_matrix(self) -> Array:
        with np.errstate(divide="ignore"):
            return np.diag(1.0 / np.concatenate([self.alpha_x, self.nu_z, self.sigma_lam]))


@dataclass(frozen=True)
class PreconditionerPsi:
    """Bordered preconditioner with the constraint and Laplacian couplings."""

    alpha_x: Array
    nu_z: Array
    sigma_lam: Array
    a_mat: Array
    l_mat: Array

    @classmethod
    def from_step_sizes(cls, steps: StepSizes, game: GameSpec,
                        graph: DualGraph) -> "PreconditionerPsi":
        system = ExtendedSystem(game, graph)
        return cls(*_expand_steps(steps, game), system.a_mat, system.l_mat)

    def as_matrix(self) -> Array:
        n = self.alpha_x.size
        q = self.nu_z.size
        P = np.zeros((n + 2 * q, n + 2 * q))
        with np.errstate(divide="ignore"):
            P[:n, :n] = np.diag(1.0 / self.alpha_x)
            P[n:n + q, n:n + q] = np.diag(1.0 / self.nu_z)
            P[n + q:, n + q:] = np.diag(1.0 / self.sigma_lam)
        P[:n, n + q:] = -self.a_mat.T
        P[n + q:, :n] = -self.a_mat
        P[n:n + q, n + q:] = -self.l_mat
        P[n + q:, n:n + q] = -self.l_mat
        return P

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.as_matrix())[0])


def forward_AB(game: GameSpec, graph: DualGraph, omega: StackedPoint,
               samples=None, system: ExtendedSystem | None = None) -> StackedPoint:
    """Forward map of the skew-in-front splitting; sampled when given batches."""
    system = system or ExtendedSystem(game, graph)
    if samples is None:
        grad = pseudograd_mean(game, omega.x)
    else:
        grad = np.asarray(game.sampled_grad(omega.x, samples), dtype=float)
    return system.forward_ab(omega, grad)


def forward_CD(game: GameSpec, graph: DualGraph, omega: StackedPoint,
               samples=None, system: ExtendedSystem | None = None) -> StackedPoint:
    """Forward map of the skew-in-back splitting; sampled when given batches."""
    system = system or ExtendedSystem(game, graph)
    if samples is None:
        grad = pseudograd_mean(game, omega.x)
    else:
        grad = np.asarray(game.sampled_grad(omega.x, samples), dtype=float)
    return system.forward_cd(omega, grad)


def resolvent_B(omega: StackedPoint, phi: PreconditionerPhi,
                game: GameSpec) -> StackedPoint:
    """Resolvent of the normal-cone part under a diagonal preconditioner.

    With a diagonal positive metric the projections decouple per coordinate,
    so the value does not depend on the step sizes in ``phi``.
    """
    del phi  # diagonal metrics leave componentwise projections unchanged
    return StackedPoint(
        game.project_local(omega.x),
        omega.z,
        np.maximum(omega.lam, 0.0),
    )


def resolvent_D(omega: StackedPoint, psi: PreconditionerPsi,
                game: GameSpec) -> StackedPoint:
    """Resolvent of the skew-plus-cones part under the bordered preconditioner.

    The lower block-triangular structure of the inclusion makes the exact
    resolvent computable by one sweep x -> z -> lam of projections.
    """
    check = psi_pd_check(psi)
    if not check.pd:
        raise ValueError(
            f"preconditioner must be positive definite (min eigenvalue {check.min_eig:.3e})"
        )
    x_new = game.project_local(omega.x - psi.alpha_x * (psi.a_mat.T @ omega.lam))
    z_new = omega.z - psi.nu_z * (psi.l_mat @ omega.lam)
    lam_new = np.maximum(
        omega.lam + psi.sigma_lam * (psi.a_mat @ (2.0 * x_new - omega.x)
                                     + psi.l_mat @ (2.0 * z_new - omega.z)),
        0.0,
    )
    return StackedPoint(x_new, z_new, lam_new)


def psi_pd_check(psi: PreconditionerPsi) -> PsiCheck:
    """Positive-definiteness verdict and minimum eigenvalue of the preconditioner."""
    min_eig = psi.min_eigenvalue()
    return PsiCheck(pd=bool(min_eig > 0.0), min_eig=min_eig)


def estimate_constants(game: GameSpec, graph: DualGraph, n_samples: int = 200,
                       rng=0) -> OperatorConstants:
    """Lipschitz and cocoercivity estimates of the mean pseudogradient.

    Affine games are handled exactly: the Lipschitz constant is the spectral
    norm and the cocoercivity bound is ``lambda_min(M_sym) / |M|^2`` when the
    symmetric part is positive definite, zero otherwise. Other games are
    probed on random point pairs, which yields a lower Lipschitz bound and an
    optimistic cocoercivity estimate.
    """
    if game.affine is not None:
        M = game.affine.matrix
        lipschitz = float(np.linalg.norm(M, 2)) if M.size else 0.0
        min_sym = float(np.linalg.eigvalsh(0.5 * (M + M.T))[0]) if M.size else 0.0
        beta = min_sym / lipschitz ** 2 if min_sym > 0 and lipschitz > 0 else 0.0
    else:
        rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
        lipschitz, beta = _sampled_constants(game, n_samples, rng)
    theta = min(1.0 / (2.0 * graph.d_star), beta) if beta > 0 else 0.0
    return OperatorConstants(theta=theta, beta=beta, lipschitz=lipschitz)


def _sampled_constants(game: GameSpec, n_samples: int, rng) -> tuple[float, float]:
    lower = np.where(np.isfinite(game.lower), game.lower, -1.0)
    upper = np.where(np.isfinite(game.upper), game.upper, 1.0)
    lipschitz = 0.0
    beta = np.inf
    for _ in range(n_samples):
        a = rng.uniform(lower, upper)
        b = rng.uniform(lower, upper)
        dx = a - b
        if np.linalg.norm(dx) < 1e-12:
            continue
        df = pseudograd_mean(game, a) - pseudograd_mean(game, b)
        nf = float(np.linalg.norm(df))
        lipschitz = max(lipschitz, nf / float(np.linalg.norm(dx)))
        if nf > 1e-12:
            beta = min(beta, float(df @ dx) / nf ** 2)
    return lipschitz, max(0.0, beta if np.isfinite(beta) else 0.0)


def dominance_bounds(col_sums, row_sums, degrees, tau: float, safety: float = 1.0,
                     margin: float = 0.0) -> tuple[Array, Array, Array]:
    """Raw diagonal-dominance step formulas.

    ``col_sums[i]`` is the largest absolute row sum of agent i's transposed
    constraint block, ``row_sums[i]`` the largest absolute row sum of the
    block itself. With ``safety=1`` and ``margin=0`` the returned steps attain
    the bounds exactly: ``alpha_i = 1/(col_sums_i + tau)``,
    ``nu_i = 1/(2 d_i + tau)``, ``sigma_i = 1/(row_sums_i + 2 d_i + tau)``.
    """
    col_sums = np.asarray(col_sums, dtype=float)
    row_sums = np.asarray(row_sums, dtype=float)
    degrees = np.asarray(degrees, dtype=float)
    alpha = safety / (col_sums + tau + margin)
    nu = safety / (2.0 * degrees + tau + margin)
    sigma = safety / (row_sums + 2.0 * degrees + tau + margin)
    return alpha, nu, sigma


def step_sizes_from_bounds(game: GameSpec, graph: DualGraph, tau: float | None = None,
                           safety: float = 0.99, margin: float = 0.0,
                           constants: OperatorConstants | None = None) -> StepSizes:
    """Per-agent steps from the diagonal-dominance bounds of the preconditioner.

    ``tau`` defaults to one sixteenth of the cocoercivity constant and must
    stay inside ``(0, theta/8)`` when a positive constant is certified. The
    dominance bounds guarantee positive definiteness of the bordered
    preconditioner but ignore the curvature of the pseudogradient; pass
    ``margin`` (see :func:`reflected_margin`) to add the extra denominator
    term that keeps the reflected iterations inside their convergent range.
    """
    if not 0 < safety <= 1:
        raise ValueError("safety must lie in (0, 1]")
    if margin < 0:
        raise ValueError("margin must be nonnegative")
    constants = constants or estimate_constants(game, graph)
    theta = constants.theta
    if theta > 0:
        if tau is None:
            tau = theta / 16.0
        if not 0 < tau < theta / 8.0:
            raise ValueError(f"tau must lie in (0, {theta / 8.0:.3e}), got {tau}")
    else:
        if tau is None:
            tau = _TAU_FALLBACK
        if tau <= 0:
            raise ValueError("tau must be positive")
        warnings.warn(
            "pseudogradient cocoercivity is not certified (beta = 0); "
            "the preconditioned splitting has no convergence guarantee here",
            RuntimeWarning,
            stacklevel=2,
        )

    if game.coupling is not None:
        col_sums = [np.abs(B).sum(axis=0).max() if B.size else 0.0
                    for B in game.coupling.blocks]  # max row sum of each A_i'
        row_sums = [np.abs(B).sum(axis=1).max() if B.size else 0.0
                    for B in game.coupling.blocks]
    else:
        col_sums = [0.0] * game.n_agents
        row_sums = [0.0] * game.n_agents

    alpha, nu, sigma = dominance_bounds(col_sums, row_sums, graph.degrees,
                                        tau, safety, margin)
    return StepSizes(alpha=alpha, nu=nu, sigma=sigma, tau=tau)


def extended_lipschitz(game: GameSpec, graph: DualGraph,
                       constants: OperatorConstants | None = None) -> float:
    """Lipschitz bound of the single-valued extended operator.

    Exact (spectral norm of the assembled linear part) for affine games,
    otherwise the pseudogradient estimate plus the norm of the constraint and
    Laplacian couplings.
    """
    system = ExtendedSystem(game, graph)
    dense = system.linear_part_ab()
    if dense is not None:
        return float(np.linalg.norm(dense, 2))
    constants = constants or estimate_constants(game, graph)
    n, q = system.dim, system.dual_dim
    rest = system.skew_matrix()
    rest[n + q:, n + q:] += system.l_mat
    return constants.lipschitz + float(np.linalg.norm(rest, 2))


def reflected_margin(game: GameSpec, graph: DualGraph,
                     constants: OperatorConstants | None = None) -> float:
    """Extra denominator term that certifies the reflected iterations.

    A single-call reflected scheme tolerates a metric Lipschitz constant up to
    ``sqrt(2) - 1``; bounding that constant by ``max-step * L`` of the extended
    operator gives the requirement ``step <= (sqrt(2)-1)/L``, i.e. a margin of
    ``L/(sqrt(2)-1)`` inside every step-size denominator. The dominance-only
    bounds keep the preconditioner positive definite but, on their own, put
    the steps far above this range for typical instances.
    """
    return extended_lipschitz(game, graph, constants) / REFLECTED_STEP_FACTOR


def reflected_step_bound(lipschitz: float, safety: float = 0.99) -> float:
    """Largest certified constant step of the reflected scheme, scaled by safety."""
    if lipschitz <= 0:
        raise ValueError("lipschitz must be positive")
    return safety * REFLECTED_STEP_FACTOR / lipschitz
