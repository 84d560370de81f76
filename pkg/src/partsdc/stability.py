"""Update matrices, spectral-radius scans, and the dominance theorem check.

For a linear system u' = A u split into scalar-row subsystems with
coupling (L + U) u, the one-sweep first-order partitioned scheme has the
closed-form update matrix

    C(dt) = (I - dt L - dt D)^{-1} (I + dt U),

whose spectral radius stays below 1 for every dt > 0 whenever A is
strictly diagonally dominant with negative diagonal entries.  The same map
can be extracted empirically from the sweep engine column by column, which
cross-checks the engine against the analysis.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import BracketError, SingularMatrixError
from .implicit import spectral_radius
from .problems import ScalarRowsLinearSystem
from .quadrature import SdcScheme, make_scheme
from .sweep import MonolithicStepper, PartitionedStepper


@dataclass
class LinearPartition:
    """A square matrix with its strictly-lower/diagonal/strictly-upper split."""

    A: np.ndarray

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=float)
        if self.A.ndim != 2 or self.A.shape[0] != self.A.shape[1]:
            raise ValueError("A must be square")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def lower(self) -> np.ndarray:
        return np.tril(self.A, -1)

    @property
    def diag(self) -> np.ndarray:
        return np.diag(np.diag(self.A))

    @property
    def upper(self) -> np.ndarray:
        return np.triu(self.A, 1)


@dataclass
class StabilityReport:
    """Spectral radii over a dt grid plus the bisected stability boundary.

    ``dt_max`` is None when rho stayed below 1 over the whole scanned
    bracket ("unconditionally stable up to the bracket top").
    """

    method: str
    dt_grid: list[float]
    rho_values: list[float]
    dt_max: float | None


def sdc1_update_matrix(part: LinearPartition, dt: float) -> np.ndarray:
    """Closed-form one-step map of the first-order partitioned scheme."""
    n = part.n
    eye = np.eye(n)
    solve_mat = eye - dt * part.lower - dt * part.diag
    pivots = np.abs(np.diag(solve_mat))
    scale = max(np.max(np.abs(solve_mat)), 1.0)
    if np.min(pivots) < 1e-14 * scale:
        raise SingularMatrixError("zero diagonal pivot in I - dt L - dt D")
    return np.linalg.solve(solve_mat, eye + dt * part.upper)


def forward_euler_update_matrix(part: LinearPartition, dt: float) -> np.ndarray:
    """Monolithic forward Euler map I + dt A."""
    return np.eye(part.n) + dt * part.A


def fixed_point_iteration_matrix(part: LinearPartition, dt: float) -> np.ndarray:
    """Per-iteration error map of the Gauss-Seidel fixed-point solver.

    The fixed-point iteration for the coupled backward Euler step solves
    (I - dt L - dt D) u_new = u_n + dt U u_old; its error contracts by
    G = dt (I - dt L - dt D)^{-1} U, so rho(G) < 1 is the convergence
    condition.
    """
    n = part.n
    solve_mat = np.eye(n) - dt * part.lower - dt * part.diag
    return dt * np.linalg.solve(solve_mat, part.upper)


def empirical_update_matrix(scheme: SdcScheme | str, mode: str,
                            part: LinearPartition, dt: float,
                            num_sweeps: int | None = None) -> np.ndarray:
    """One-step map extracted from the sweep engine by unit-vector probes.

    ``mode`` is one of partitioned / monolithic_be / monolithic_fe.  The
    linear system is the scalar-rows split of ``part.A``, so for
    (SDC1, partitioned) this must reproduce :func:`sdc1_update_matrix`.
    """
    if isinstance(scheme, str):
        scheme = make_scheme(scheme)
    sys = ScalarRowsLinearSystem(part.A)
    if mode == "partitioned":
        stepper = PartitionedStepper(sys, scheme)
    elif mode == "monolithic_be":
        stepper = MonolithicStepper(sys, scheme, "BE")
    elif mode == "monolithic_fe":
        stepper = MonolithicStepper(sys, scheme, "FE")
    else:
        raise ValueError(f"unknown mode {mode!r}")
    n = part.n
    C = np.empty((n, n))
    for k in range(n):
        e = np.zeros(n)
        e[k] = 1.0
        result = stepper.step(sys.state_from_vector(e), 0.0, dt, num_sweeps)
        C[:, k] = result.state.data
    return C


def bisect_dt_max(builder: Callable[[float], np.ndarray],
                  bracket: tuple[float, float], tol: float = 1e-6) -> float:
    """Bisect the dt where rho(builder(dt)) crosses 1.

    Requires rho < 1 at the lower end and rho >= 1 at the upper end;
    otherwise raises :class:`BracketError` asking the caller to widen.
    """
    lo, hi = bracket
    if not (0 < lo < hi) or tol <= 0:
        raise ValueError("need 0 < dt_lo < dt_hi and tol > 0")
    if spectral_radius(builder(lo)) >= 1.0:
        raise BracketError(
            f"rho at dt_lo={lo:g} already >= 1; widen the bracket downward")
    if spectral_radius(builder(hi)) < 1.0:
        raise BracketError(
            f"rho at dt_hi={hi:g} still < 1; widen the bracket upward")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if spectral_radius(builder(mid)) < 1.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def scan_dt_max(builder: Callable[[float], np.ndarray],
                dt_lo: float = 1e-4, dt_hi: float = 1e3,
                tol: float = 1e-6) -> float | None:
    """Geometric pre-scan for the rho = 1 crossing, then bisection.

    Returns None when rho < 1 throughout [dt_lo, dt_hi] (stable over the
    whole scanned range).
    """
    if spectral_radius(builder(dt_lo)) >= 1.0:
        raise BracketError(
            f"rho at dt_lo={dt_lo:g} already >= 1; lower dt_lo")
    lo = dt_lo
    hi = dt_lo
    while hi < dt_hi:
        hi = min(2.0 * hi, dt_hi)
        if spectral_radius(builder(hi)) >= 1.0:
            return bisect_dt_max(builder, (lo, hi), tol)
        lo = hi
    return None


# -- stability theorem over random diagonally dominant matrices ---------------

def sample_diagonally_dominant(rng: np.random.Generator, n: int) -> np.ndarray:
    """Strictly diagonally dominant matrix with negative diagonal entries.

    Off-diagonals are uniform in [-1, 1]; each diagonal entry is minus the
    off-diagonal row sum minus a margin uniform in (0.1, 1).
    """
    A = rng.uniform(-1.0, 1.0, (n, n))
    margins = rng.uniform(0.1, 1.0, n)
    for i in range(n):
        A[i, i] = -(np.sum(np.abs(A[i])) - abs(A[i, i]) + margins[i])
    return A


@dataclass
class TheoremViolation:
    trial: int
    dt: float
    rho: float
    matrix: np.ndarray


@dataclass
class TheoremReport:
    trials: int
    cases: int
    max_rho: float
    violations: list[TheoremViolation]

    @property
    def passed(self) -> bool:
        return not self.violations


def theorem_check(n: int, trials: int, dt_set: Sequence[float] | None = None,
                  rng_seed: int = 42) -> TheoremReport:
    """Verify rho(C(dt)) < 1 on random strictly dominant samples.

    Sizes are drawn uniformly from 2..n per trial.  Any case with
    rho >= 1 is recorded as a violation (zero tolerance).
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    if dt_set is None:
        dt_set = (0.1, 1.0, 10.0, 100.0, 1e4)
    rng = np.random.default_rng(rng_seed)
    violations = []
    cases = 0
    max_rho = 0.0
    for trial in range(trials):
        size = int(rng.integers(2, n + 1))
        A = sample_diagonally_dominant(rng, size)
        part = LinearPartition(A)
        for dt in dt_set:
            rho = spectral_radius(sdc1_update_matrix(part, dt))
            cases += 1
            max_rho = max(max_rho, rho)
            if rho >= 1.0:
                violations.append(TheoremViolation(trial, dt, rho, A.copy()))
    return TheoremReport(trials, cases, max_rho, violations)


def measure_fixed_point_contraction(part: LinearPartition, u_n: np.ndarray,
                                    dt: float, num_iters: int = 8
                                    ) -> np.ndarray:
    """Per-iteration error ratios of the Gauss-Seidel fixed-point solver.

    Runs the actual iteration for one coupled backward Euler step and
    measures ||u^(s) - u*|| against the directly solved step.
    """
    n = part.n
    eye = np.eye(n)
    target = np.linalg.solve(eye - dt * part.A, u_n)
    solve_mat = eye - dt * part.lower - dt * part.diag
    u = np.array(u_n, dtype=float)
    errors = [np.linalg.norm(u - target)]
    for _ in range(num_iters):
        u = np.linalg.solve(solve_mat, u_n + dt * (part.upper @ u))
        errors.append(np.linalg.norm(u - target))
    errors = np.asarray(errors)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = errors[1:] / errors[:-1]
    return ratios
