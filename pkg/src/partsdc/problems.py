"""Bundled coupled systems: the stiff 2x2 ODE, scalar-row linear partitions,
a finite-difference predator-prey advection-diffusion-reaction grid, and an
index-1 linear DAE with a zero-mass subsystem.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .system import CoupledSystem, PartitionedState, concat


# -- stiff 2x2 linear ODE -----------------------------------------------------

@dataclass
class StiffOdeProblem:
    """u' = A u with A = [[0, 1], [-alpha, -alpha-1]], u(0) = (x0, 0).

    Eigenvalues are -1 and -alpha, so large alpha makes the system stiff.
    """

    alpha: float = 1000.0
    x0: float = 1000.0

    def __post_init__(self):
        if self.alpha <= 1:
            raise ValueError("alpha must exceed 1")


def stiff_exact(alpha: float, x0: float, t: float) -> np.ndarray:
    """Closed-form solution of the stiff problem at time t."""
    if alpha <= 1:
        raise ValueError("alpha must exceed 1")
    ea = math.exp(-alpha * t)
    e1 = math.exp(-t)
    u1 = x0 * (-ea / (alpha - 1.0) + alpha * e1 / (alpha - 1.0))
    u2 = x0 * (alpha * ea / (alpha - 1.0) - alpha * e1 / (alpha - 1.0))
    return np.array([u1, u2])


class StiffOdeSystem(CoupledSystem):
    """Two scalar subsystems with couplings c1 = u2 and c2 = -alpha * u1.

    Residuals: r1 = c1 and r2 = (-alpha - 1) u2 + c2; identity mass.
    """

    is_linear = True
    has_linear_coupling = True

    def __init__(self, alpha: float, x0: float = 1.0):
        if alpha <= 1:
            raise ValueError("alpha must exceed 1")
        self.alpha = float(alpha)
        self.x0 = float(x0)

    @property
    def num_subsystems(self) -> int:
        return 2

    @property
    def subsystem_dims(self) -> Sequence[int]:
        return (1, 1)

    def residual(self, i, u_i, c_i, t):
        if i == 0:
            return np.asarray(c_i, dtype=float).copy()
        return (-self.alpha - 1.0) * np.asarray(u_i, dtype=float) + c_i

    def coupling(self, i, state, t):
        if i == 0:
            return state.subsystem_view(1).copy()
        return -self.alpha * state.subsystem_view(0)

    def jacobian(self, i, u_i, c_i, t):
        if i == 0:
            return np.array([[0.0]])
        return np.array([[-self.alpha - 1.0]])

    def initial_state(self) -> PartitionedState:
        return concat([[self.x0], [0.0]])

    def exact(self, t: float) -> np.ndarray:
        return stiff_exact(self.alpha, self.x0, t)


def make_stiff_system(alpha: float, x0: float = 1.0) -> StiffOdeSystem:
    return StiffOdeSystem(alpha, x0)


# -- generic linear system, one scalar subsystem per row ----------------------

class ScalarRowsLinearSystem(CoupledSystem):
    """u' = A u treated as n scalar subsystems with coupling (L + U) u.

    Row i keeps its diagonal entry in the residual, r_i = a_ii u_i + c_i,
    and receives everything off-diagonal through the coupling.
    """

    is_linear = True
    has_linear_coupling = True

    def __init__(self, A: np.ndarray):
        A = np.asarray(A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("A must be square")
        self.A = A
        self._offdiag = A - np.diag(np.diag(A))

    @property
    def num_subsystems(self) -> int:
        return self.A.shape[0]

    @property
    def subsystem_dims(self) -> Sequence[int]:
        return (1,) * self.A.shape[0]

    def residual(self, i, u_i, c_i, t):
        return self.A[i, i] * np.asarray(u_i, dtype=float) + c_i

    def coupling(self, i, state, t):
        return np.array([self._offdiag[i] @ state.data])

    def jacobian(self, i, u_i, c_i, t):
        return np.array([[self.A[i, i]]])

    def state_from_vector(self, u: np.ndarray,
                          time: float = 0.0) -> PartitionedState:
        u = np.asarray(u, dtype=float)
        return PartitionedState(u.copy(), np.arange(u.size + 1), time)


# -- index-1 linear DAE --------------------------------------------------------

@dataclass
class LinearDaeProblem:
    """u1' = u2 coupled to the algebraic constraint 0 = u2 - g(t).

    The exact solution is u2 = g(t) and u1 = u1(0) + int_0^t g.  The
    second subsystem carries a zero mass matrix, which is exactly the
    singular-mass mechanism the partitioned solver must handle.
    """

    forcing: Callable[[float], float]
    u1_initial: float = 0.0


class LinearDaeSystem(CoupledSystem):
    is_linear = True
    has_linear_coupling = True

    def __init__(self, problem: LinearDaeProblem):
        self.problem = problem

    @property
    def num_subsystems(self) -> int:
        return 2

    @property
    def subsystem_dims(self) -> Sequence[int]:
        return (1, 1)

    def apply_mass(self, i, v):
        if i == 0:
            return np.array(v, dtype=float, copy=True)
        return np.zeros_like(np.asarray(v, dtype=float))

    def residual(self, i, u_i, c_i, t):
        if i == 0:
            return np.asarray(c_i, dtype=float).copy()
        return np.array([self.problem.forcing(t)]) - u_i

    def coupling(self, i, state, t):
        if i == 0:
            return state.subsystem_view(1).copy()
        return np.zeros(0)

    def jacobian(self, i, u_i, c_i, t):
        if i == 0:
            return np.array([[0.0]])
        return np.array([[-1.0]])

    def initial_state(self, t0: float = 0.0) -> PartitionedState:
        # consistent initialization: the algebraic variable starts on the
        # constraint manifold
        return concat([[self.problem.u1_initial],
                       [self.problem.forcing(t0)]], time=t0)


def make_dae_system(problem: LinearDaeProblem) -> LinearDaeSystem:
    return LinearDaeSystem(problem)


# -- predator-prey advection-diffusion-reaction --------------------------------

@dataclass
class AdrProblem:
    """Two-species predator-prey reaction on the unit square [-0.5, 0.5]^2.

    Prey (species 1) starts uniform at 1; predators (species 2) start as a
    compactly supported bump around ``bump_center``.  All boundaries are
    homogeneous Neumann.  Defaults follow the reference parameter set
    a1 = 0.25, a2 = 2, a3 = 1, a4 = 3.4, D = 0.01, v1 = 0, v2 = (0.5, 0.5).
    """

    grid_n: int = 41
    diffusivity: tuple[float, float] = (0.01, 0.01)
    a1: float = 0.25
    a2: float = 2.0
    a3: float = 1.0
    a4: float = 3.4
    velocities: tuple[tuple[float, float], tuple[float, float]] = (
        (0.0, 0.0), (0.5, 0.5))
    bump_radius: float = 0.2
    bump_center: tuple[float, float] = (-0.25, -0.25)

    def __post_init__(self):
        if self.grid_n < 5:
            raise ValueError("grid_n must be at least 5")
        for p in (self.a1, self.a2, self.a3, self.a4, self.bump_radius,
                  *self.diffusivity):
            if p <= 0:
                raise ValueError("parameters must be strictly positive")


def _laplacian_1d(n: int, h: float) -> np.ndarray:
    """Second-order central Laplacian, Neumann via mirrored ghost nodes."""
    L = np.zeros((n, n))
    for k in range(1, n - 1):
        L[k, k - 1:k + 2] = (1.0, -2.0, 1.0)
    L[0, 0], L[0, 1] = -2.0, 2.0
    L[-1, -2], L[-1, -1] = 2.0, -2.0
    return L / h**2


def _upwind_1d(n: int, h: float, velocity: float) -> np.ndarray:
    """First-order upwind first derivative for a constant velocity.

    The inflow boundary uses the mirrored ghost value, consistent with the
    Neumann condition.
    """
    D = np.zeros((n, n))
    if velocity == 0.0:
        return D
    if velocity > 0.0:  # backward differences
        for k in range(1, n):
            D[k, k - 1], D[k, k] = -1.0, 1.0
        D[0, 0], D[0, 1] = 1.0, -1.0  # ghost u_{-1} = u_1
    else:  # forward differences
        for k in range(n - 1):
            D[k, k], D[k, k + 1] = -1.0, 1.0
        D[-1, -2], D[-1, -1] = 1.0, -1.0
    return D / h


class AdrSystem(CoupledSystem):
    """Method-of-lines discretization of the two-species ADR model.

    Node-centered uniform grid, flattened row-major as index = iy * n + ix.
    The advection-diffusion stencils form the (constant, linear) residual;
    the pointwise reaction terms enter through the coupling, so every stage
    solve is a cached dense factorization.
    """

    is_linear = True
    has_linear_coupling = False

    def __init__(self, problem: AdrProblem):
        self.problem = problem
        n = problem.grid_n
        self.grid_n = n
        self.h = 1.0 / (n - 1)
        coords = -0.5 + self.h * np.arange(n)
        self.xx, self.yy = np.meshgrid(coords, coords)  # [iy, ix]
        eye = np.eye(n)
        lap1 = _laplacian_1d(n, self.h)
        lap2 = np.kron(eye, lap1) + np.kron(lap1, eye)
        self._ops = []
        for i in range(2):
            vx, vy = problem.velocities[i]
            adv = (np.kron(eye, _upwind_1d(n, self.h, vx)) * vx
                   + np.kron(_upwind_1d(n, self.h, vy), eye) * vy)
            self._ops.append(problem.diffusivity[i] * lap2 - adv)

    @property
    def num_subsystems(self) -> int:
        return 2

    @property
    def subsystem_dims(self) -> Sequence[int]:
        n2 = self.grid_n**2
        return (n2, n2)

    def residual(self, i, u_i, c_i, t):
        return self._ops[i] @ u_i + c_i

    def coupling(self, i, state, t):
        u1 = state.subsystem_view(0)
        u2 = state.subsystem_view(1)
        p = self.problem
        if i == 0:
            return u1 * (-(u1 - p.a1) * (u1 - 1.0) - p.a2 * u2)
        return u2 * (-p.a3 - p.a4 * u2 + p.a2 * u1)

    def jacobian(self, i, u_i, c_i, t):
        return self._ops[i]

    def initial_state(self) -> PartitionedState:
        p = self.problem
        u1 = np.ones(self.grid_n**2)
        r2 = ((self.xx - p.bump_center[0])**2
              + (self.yy - p.bump_center[1])**2)
        d2 = p.bump_radius**2
        u2 = np.zeros_like(r2)
        inside = r2 < d2
        u2[inside] = np.exp(-d2 / (d2 - r2[inside]))
        return concat([u1, u2.ravel()])

    def discrete_mass(self, species: np.ndarray) -> float:
        """Trapezoidal discrete integral of one species field.

        This is the functional conserved exactly by the Neumann diffusion
        stencil (the plain node sum is not, because boundary rows carry
        half-weight in the underlying flux balance).
        """
        n = self.grid_n
        w = np.ones(n)
        w[0] = w[-1] = 0.5
        w2 = np.outer(w, w).ravel()
        return float(self.h**2 * (w2 @ species))


def make_adr_system(problem: AdrProblem | None = None) -> AdrSystem:
    return AdrSystem(problem or AdrProblem())


def save_species_grid(path, species: np.ndarray, grid_n: int, t: float) -> None:
    """Plain-text snapshot: header, then one value per line, row-major."""
    vals = np.asarray(species, dtype=float).ravel()
    if vals.size != grid_n**2:
        raise ValueError(f"expected {grid_n**2} values, got {vals.size}")
    with open(path, "w") as fh:
        fh.write(f"# grid_n {grid_n}\n")
        fh.write(f"# t {float(t)!r}\n")
        for v in vals:
            fh.write(f"{float(v)!r}\n")
