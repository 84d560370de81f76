"""Partitioned and monolithic SDC sweeps.

One step from t_n to t_n + dt runs ``num_sweeps`` correction sweeps over
the scheme's abscissas.  Within a sweep, the partitioned solver visits the
subsystems in declared order and solves, for subsystem i at node j+1,

    M^i x = M^i u^{i,(k+1)}_{n,j}
          + delta * ( r^i(x, c_tilde) - r^i(u^{i,(k)}_{n,j+1}, c^{i,(k)}_{n,j+1}) )
          + dt * sum_l W[j,l] r^i(u^{(k)}_{n,l})

with delta = dt_{n,j} (or the full dt for the FULLSTEP variant) and the
weak Gauss-Seidel predictor coupling

    c_tilde = c^i(u^{1,(k+1)}_{n,j+1}, ..., u^{i-1,(k+1)}_{n,j+1},
                  u^{i,(k)}_{n,j+1},   ..., u^{m,(k)}_{n,j+1}).

Because c_tilde never depends on the unknown, the solve matrix is only
``M^i - delta * dr^i/du^i``.  Subsystems whose mass matrix is identically
zero are fully algebraic; their stage solve enforces the constraint
``r^i(x, c_tilde, t) = 0`` directly, which is what makes index-1 DAE
states satisfy their constraints to solver tolerance at every node.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Literal, Sequence

import numpy as np

from .errors import (CollocationConvergenceError, NewtonDivergenceError,
                     SingularMatrixError, SweepDivergenceError)
from .implicit import NewtonConfig, fd_jacobian, lu_apply, lu_factor, newton_solve
from .quadrature import LowOrderVariant, SdcScheme
from .system import CoupledSystem, PartitionedState

Mode = Literal["partitioned", "monolithic_be", "monolithic_fe"]


@dataclass
class StepResult:
    """Outcome of one SDC step; ``state`` is meaningless when diverged."""

    state: PartitionedState
    newton_iterations: np.ndarray  # (sweeps, q, subsystems solved per node)
    diverged: bool = False
    failure: SweepDivergenceError | None = None


@dataclass
class SweepWorkspace:
    """Stage storage for one step.

    ``stages_prev`` holds sweep k, ``stages_curr`` sweep k+1; both pin node 0
    to u_n.  ``residual_table`` row j stores r evaluated on ``stages_prev``
    row j (refreshed whenever the sweeps swap).
    """

    stages_prev: list[PartitionedState]
    stages_curr: list[PartitionedState]
    residual_table: np.ndarray  # (q+1, total_dim), residuals of stages_prev
    residual_next: np.ndarray   # being filled for stages_curr
    dt: float
    t_n: float
    stage_times: np.ndarray
    newton_counts: list = field(default_factory=list)


def _materialize_mass(sys: CoupledSystem, i: int) -> np.ndarray:
    n = sys.subsystem_dims[i]
    M = np.empty((n, n))
    e = np.zeros(n)
    for k in range(n):
        e[k] = 1.0
        M[:, k] = sys.apply_mass(i, e)
        e[k] = 0.0
    return M


class _SubsystemInfo:
    """Per-subsystem cached data: row slice, mass matrix, factorizations."""

    def __init__(self, sys: CoupledSystem, i: int, offsets: np.ndarray):
        self.index = i
        self.rows = slice(int(offsets[i]), int(offsets[i + 1]))
        self.mass = _materialize_mass(sys, i)
        self.mass_is_identity = np.array_equal(self.mass, np.eye(self.mass.shape[0]))
        self.mass_is_zero = not np.any(self.mass)
        self.jac_const: np.ndarray | None = None  # for declared-linear systems
        self.factors: dict[float, object] = {}

    def apply_mass(self, v: np.ndarray) -> np.ndarray:
        if self.mass_is_identity:
            return v
        return self.mass @ v


class PartitionedStepper:
    """Runs Algorithm-style partitioned sweeps for one coupled system.

    Reusable across steps; linear-system factorizations are cached per
    node substep so repeated steps at the same dt pay a single LU each.
    """

    def __init__(self, sys: CoupledSystem, scheme: SdcScheme,
                 newton: NewtonConfig | None = None,
                 subsystem_order: Sequence[int] | None = None):
        self.sys = sys
        self.scheme = scheme
        self.newton = newton or NewtonConfig()
        self.offsets = sys.initial_offsets()
        m = sys.num_subsystems
        self.order = tuple(range(m)) if subsystem_order is None \
            else tuple(subsystem_order)
        if sorted(self.order) != list(range(m)):
            raise ValueError("subsystem_order must be a permutation of 0..m-1")
        self.info = [_SubsystemInfo(sys, i, self.offsets) for i in range(m)]

    # -- plumbing -----------------------------------------------------------

    def _residual_row(self, state: PartitionedState, t: float,
                      out: np.ndarray) -> None:
        for info in self.info:
            c = self.sys.coupling(info.index, state, t)
            out[info.rows] = self.sys.residual(
                info.index, state.subsystem_view(info.index), c, t)

    def _const_jacobian(self, info: _SubsystemInfo, u_i, c_i, t) -> np.ndarray:
        if info.jac_const is None:
            jac = self.sys.jacobian(info.index, u_i, c_i, t)
            if jac is None:
                jac = fd_jacobian(
                    lambda x: self.sys.residual(info.index, x, c_i, t),
                    u_i, self.newton.fd_step)
            info.jac_const = np.asarray(jac, dtype=float)
        return info.jac_const

    def _linear_factor(self, info: _SubsystemInfo, delta: float, u_i, c_i, t):
        key = delta
        fact = info.factors.get(key)
        if fact is None:
            jac = self._const_jacobian(info, u_i, c_i, t)
            if info.mass_is_zero:
                fact = lu_factor(jac)
            else:
                fact = lu_factor(info.mass - delta * jac)
            info.factors[key] = fact
        return fact

    def init_workspace(self, u_n: PartitionedState, t_n: float,
                       dt: float) -> SweepWorkspace:
        self.sys.check_state(u_n)
        if dt <= 0:
            raise ValueError("dt must be positive")
        scheme = self.scheme
        q = scheme.q
        nodes = np.asarray(scheme.nodes)
        times = t_n + dt * nodes
        stages_prev = [u_n.copy(time=times[j]) for j in range(q + 1)]
        stages_curr = [u_n.copy(time=times[j]) for j in range(q + 1)]
        total = u_n.data.size
        table = np.empty((q + 1, total))
        for j in range(q + 1):
            self._residual_row(stages_prev[j], times[j], table[j])
        return SweepWorkspace(
            stages_prev=stages_prev, stages_curr=stages_curr,
            residual_table=table, residual_next=np.empty_like(table),
            dt=dt, t_n=t_n, stage_times=times)

    def _solve_stage(self, info: _SubsystemInfo, delta: float, rhs: np.ndarray,
                     c_tilde: np.ndarray, t_next: float,
                     warm: np.ndarray) -> tuple[np.ndarray, int]:
        sys = self.sys
        i = info.index
        if info.mass_is_zero:
            # algebraic subsystem: enforce the constraint itself
            if sys.is_linear:
                fact = self._linear_factor(info, 0.0, warm, c_tilde, t_next)
                r0 = sys.residual(i, np.zeros_like(warm), c_tilde, t_next)
                return lu_apply(fact, -r0), 1

            def J_alg(x):
                return sys.jacobian(i, x, c_tilde, t_next)

            has_jac = self.sys.jacobian(i, warm, c_tilde, t_next) is not None
            return newton_solve(
                lambda x: sys.residual(i, x, c_tilde, t_next),
                J_alg if has_jac else None, warm, self.newton)
        if sys.is_linear:
            fact = self._linear_factor(info, delta, warm, c_tilde, t_next)
            r0 = sys.residual(i, np.zeros_like(warm), c_tilde, t_next)
            return lu_apply(fact, rhs + delta * r0), 1

        def F(x):
            return (info.apply_mass(x)
                    - delta * sys.residual(i, x, c_tilde, t_next) - rhs)

        def J(x):
            jr = sys.jacobian(i, x, c_tilde, t_next)
            if jr is None:  # FD on the residual only; mass is exact
                jr = fd_jacobian(
                    lambda y: sys.residual(i, y, c_tilde, t_next),
                    x, self.newton.fd_step)
            return info.mass - delta * np.asarray(jr)

        return newton_solve(F, J, warm, self.newton)

    def run_sweep(self, ws: SweepWorkspace, sweep_index: int) -> None:
        """Advance the workspace by one sweep (k -> k+1), in place."""
        scheme = self.scheme
        q = scheme.q
        dt = ws.dt
        nodes = np.asarray(scheme.nodes)
        counts = np.zeros((q, len(self.order)), dtype=int)
        fullstep = scheme.low_order_variant is LowOrderVariant.FULLSTEP
        # node 0 is pinned to u_n; its residual row never changes
        ws.residual_next[0] = ws.residual_table[0]
        for j in range(q):
            delta = dt if fullstep else dt * (nodes[j + 1] - nodes[j])
            t_next = ws.stage_times[j + 1]
            quad = dt * (scheme.weights[j] @ ws.residual_table)
            curr_next = ws.stages_curr[j + 1]
            # seed node j+1 with sweep-k values: subsystems not yet solved
            # this sweep must be seen at iterate k by the predictor
            curr_next.data[:] = ws.stages_prev[j + 1].data
            for pos, i in enumerate(self.order):
                info = self.info[i]
                rhs = (info.apply_mass(ws.stages_curr[j].subsystem_view(i))
                       - delta * ws.residual_table[j + 1, info.rows]
                       + quad[info.rows])
                c_tilde = self.sys.coupling(i, curr_next, t_next)
                warm = ws.stages_prev[j + 1].subsystem_view(i)
                try:
                    x, iters = self._solve_stage(
                        info, delta, rhs, c_tilde, t_next, warm)
                except (NewtonDivergenceError, SingularMatrixError) as exc:
                    raise SweepDivergenceError(sweep_index, j + 1, i, exc)
                counts[j, pos] = iters
                curr_next.subsystem_view(i)[:] = x
            if not np.all(np.isfinite(curr_next.data)):
                raise SweepDivergenceError(
                    sweep_index, j + 1, -1,
                    ValueError("non-finite stage state"))
            self._residual_row(curr_next, t_next, ws.residual_next[j + 1])
        ws.newton_counts.append(counts)
        # swap: the sweep just produced becomes iterate k for the next one
        ws.stages_prev, ws.stages_curr = ws.stages_curr, ws.stages_prev
        ws.residual_table, ws.residual_next = ws.residual_next, ws.residual_table
        for j in range(q + 1):
            ws.stages_curr[j].data[:] = ws.stages_prev[j].data

    def collocation_defect(self, ws: SweepWorkspace) -> float:
        """Max-norm defect of the collocation equations on the latest sweep."""
        q = self.scheme.q
        worst = 0.0
        for j in range(q):
            quad = ws.dt * (self.scheme.weights[j] @ ws.residual_table)
            for info in self.info:
                lhs = (info.apply_mass(ws.stages_prev[j + 1].subsystem_view(info.index))
                       - info.apply_mass(ws.stages_prev[j].subsystem_view(info.index)))
                worst = max(worst, float(np.max(np.abs(lhs - quad[info.rows]))))
        return worst

    def step(self, u_n: PartitionedState, t_n: float, dt: float,
             num_sweeps: int | None = None,
             on_sweep: Callable[[int, list[PartitionedState]], None] | None = None
             ) -> StepResult:
        sweeps = self.scheme.num_sweeps if num_sweeps is None else num_sweeps
        ws = self.init_workspace(u_n, t_n, dt)
        try:
            for k in range(sweeps):
                self.run_sweep(ws, k)
                if on_sweep is not None:
                    on_sweep(k, ws.stages_prev)
        except SweepDivergenceError as exc:
            return StepResult(
                state=u_n, newton_iterations=np.array(ws.newton_counts),
                diverged=True, failure=exc)
        final = ws.stages_prev[self.scheme.q].copy(time=t_n + dt)
        return StepResult(final, np.array(ws.newton_counts))


class MonolithicStepper:
    """Reference sweeps solving all subsystems simultaneously.

    The low-order method is forward Euler (explicit; needs an invertible
    mass) or backward Euler (coupling evaluated at the new iterate, no
    predictor).
    """

    def __init__(self, sys: CoupledSystem, scheme: SdcScheme,
                 low_order: Literal["FE", "BE"] = "BE",
                 newton: NewtonConfig | None = None):
        if low_order not in ("FE", "BE"):
            raise ValueError("low_order must be 'FE' or 'BE'")
        self.sys = sys
        self.scheme = scheme
        self.low_order = low_order
        self.newton = newton or NewtonConfig()
        self.offsets = sys.initial_offsets()
        total = sys.total_dim()
        blocks = [_materialize_mass(sys, i) for i in range(sys.num_subsystems)]
        self.mass = np.zeros((total, total))
        for i, B in enumerate(blocks):
            sl = slice(int(self.offsets[i]), int(self.offsets[i + 1]))
            self.mass[sl, sl] = B
        self.mass_is_identity = np.array_equal(self.mass, np.eye(total))
        self._mass_factor = None
        if low_order == "FE" and not self.mass_is_identity:
            self._mass_factor = lu_factor(self.mass)  # FE divides by M
        self._amat: np.ndarray | None = None
        self._factors: dict[float, object] = {}

    def _residual_full(self, data: np.ndarray, t: float) -> np.ndarray:
        state = PartitionedState(data, self.offsets, t)
        out = np.empty_like(data)
        for i in range(self.sys.num_subsystems):
            sl = slice(int(self.offsets[i]), int(self.offsets[i + 1]))
            c = self.sys.coupling(i, state, t)
            out[sl] = self.sys.residual(i, data[sl], c, t)
        return out

    def _full_matrix(self, t: float) -> np.ndarray:
        # affine probe of u -> r(u, c(u), t); valid when the system declares
        # both a linear residual and linear coupling
        if self._amat is None:
            n = self.mass.shape[0]
            base = self._residual_full(np.zeros(n), t)
            A = np.empty((n, n))
            e = np.zeros(n)
            for k in range(n):
                e[k] = 1.0
                A[:, k] = self._residual_full(e, t) - base
                e[k] = 0.0
            self._amat = A
        return self._amat

    def step(self, u_n: PartitionedState, t_n: float, dt: float,
             num_sweeps: int | None = None) -> StepResult:
        sys = self.sys
        sys.check_state(u_n)
        scheme = self.scheme
        q = scheme.q
        nodes = np.asarray(scheme.nodes)
        times = t_n + dt * nodes
        sweeps = scheme.num_sweeps if num_sweeps is None else num_sweeps
        fullstep = scheme.low_order_variant is LowOrderVariant.FULLSTEP
        linear = sys.is_linear and sys.has_linear_coupling

        stages_prev = np.tile(u_n.data, (q + 1, 1))
        stages_curr = stages_prev.copy()
        res_prev = np.empty_like(stages_prev)
        for j in range(q + 1):
            res_prev[j] = self._residual_full(stages_prev[j], times[j])
        res_curr = np.empty_like(res_prev)
        counts = np.zeros((sweeps, q, 1), dtype=int)

        for k in range(sweeps):
            res_curr[0] = res_prev[0]
            for j in range(q):
                delta = dt if fullstep else dt * (nodes[j + 1] - nodes[j])
                t_next = times[j + 1]
                quad = dt * (scheme.weights[j] @ res_prev)
                if self.low_order == "FE":
                    rhs = (self.mass @ stages_curr[j]
                           + delta * (res_curr[j] - res_prev[j]) + quad)
                    x = rhs if self.mass_is_identity else \
                        lu_apply(self._mass_factor, rhs)
                    iters = 0
                else:
                    rhs = (self.mass @ stages_curr[j]
                           - delta * res_prev[j + 1] + quad)
                    try:
                        x, iters = self._solve_be(rhs, delta, t_next,
                                                  stages_prev[j + 1])
                    except (NewtonDivergenceError, SingularMatrixError) as exc:
                        err = SweepDivergenceError(k, j + 1, -1, exc)
                        return StepResult(u_n, counts[:k], True, err)
                stages_curr[j + 1] = x
                if not np.all(np.isfinite(x)):
                    err = SweepDivergenceError(
                        k, j + 1, -1, ValueError("non-finite stage state"))
                    return StepResult(u_n, counts[:k], True, err)
                res_curr[j + 1] = self._residual_full(x, t_next)
                counts[k, j, 0] = iters
            stages_prev, stages_curr = stages_curr, stages_prev
            res_prev, res_curr = res_curr, res_prev
            stages_curr[...] = stages_prev

        final = PartitionedState(stages_prev[q].copy(), self.offsets, t_n + dt)
        return StepResult(final, counts)

    def _solve_be(self, rhs, delta, t_next, warm):
        if self.sys.is_linear and self.sys.has_linear_coupling:
            fact = self._factors.get(delta)
            if fact is None:
                fact = lu_factor(self.mass - delta * self._full_matrix(t_next))
                self._factors[delta] = fact
            r0 = self._residual_full(np.zeros_like(rhs), t_next)
            return lu_apply(fact, rhs + delta * r0), 1

        def F(x):
            return self.mass @ x - delta * self._residual_full(x, t_next) - rhs

        def J(x):
            jr = fd_jacobian(lambda y: self._residual_full(y, t_next), x,
                             self.newton.fd_step)
            return self.mass - delta * jr

        return newton_solve(F, J, np.array(warm), self.newton)


# -- public one-shot wrappers -------------------------------------------------

def sdc_step_partitioned(sys: CoupledSystem, scheme: SdcScheme,
                         u_n: PartitionedState, t_n: float, dt: float,
                         num_sweeps: int | None = None,
                         newton: NewtonConfig | None = None,
                         subsystem_order: Sequence[int] | None = None,
                         on_sweep=None) -> StepResult:
    """One partitioned SDC step (weak Gauss-Seidel predictor)."""
    stepper = PartitionedStepper(sys, scheme, newton, subsystem_order)
    return stepper.step(u_n, t_n, dt, num_sweeps, on_sweep)


def sdc_step_monolithic(sys: CoupledSystem, scheme: SdcScheme,
                        u_n: PartitionedState, t_n: float, dt: float,
                        low_order: Literal["FE", "BE"] = "BE",
                        num_sweeps: int | None = None,
                        newton: NewtonConfig | None = None) -> StepResult:
    """One monolithic SDC step with a forward or backward Euler low order."""
    stepper = MonolithicStepper(sys, scheme, low_order, newton)
    return stepper.step(u_n, t_n, dt, num_sweeps)


@dataclass
class CollocationResult:
    stages: list[PartitionedState]
    sweeps: int
    defect: float


def collocation_solve(sys: CoupledSystem, scheme: SdcScheme,
                      u_n: PartitionedState, t_n: float, dt: float,
                      tol: float = 1e-12, max_sweeps: int = 200,
                      subsystem_order: Sequence[int] | None = None,
                      history: list | None = None) -> CollocationResult:
    """Iterate partitioned sweeps to the collocation fixed point.

    Returns stage states satisfying
    ``M u_{j+1} = M u_j + I_j^{j+1} r(u)`` to max-norm defect ``tol``.
    ``history``, when given, collects a per-sweep copy of the stage states.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    stepper = PartitionedStepper(sys, scheme, subsystem_order=subsystem_order)
    ws = stepper.init_workspace(u_n, t_n, dt)
    defect = np.inf
    for k in range(max_sweeps):
        stepper.run_sweep(ws, k)
        if history is not None:
            history.append([s.copy() for s in ws.stages_prev])
        defect = stepper.collocation_defect(ws)
        if defect <= tol:
            return CollocationResult(
                [s.copy() for s in ws.stages_prev], k + 1, defect)
    raise CollocationConvergenceError(
        f"no collocation fixed point within {max_sweeps} sweeps "
        f"(last defect {defect:.3e})", last_defect=float(defect))


@dataclass
class Trajectory:
    entries: list[tuple[float, PartitionedState]]
    diverged: bool = False
    failure: str | None = None

    @property
    def final_state(self) -> PartitionedState:
        return self.entries[-1][1]


_NORM_BLOWUP = 1e12


def integrate(sys: CoupledSystem, scheme: SdcScheme, u_0: PartitionedState,
              t_0: float, t_end: float, dt: float, mode: Mode = "partitioned",
              newton: NewtonConfig | None = None,
              subsystem_order: Sequence[int] | None = None) -> Trajectory:
    """Advance from t_0 to t_end in fixed steps of dt (last step shortened
    when dt does not divide the interval).

    Divergence (Newton failure, non-finite values, or norm blow-up past
    1e12 x the initial norm) truncates the trajectory and sets the flag.
    """
    if dt <= 0 or t_end <= t_0:
        raise ValueError("need dt > 0 and t_end > t_0")
    span = t_end - t_0
    n_steps = int(round(span / dt))
    partial = abs(n_steps * dt - span) > 1e-9 * max(1.0, abs(span))
    if partial:
        n_steps = int(np.floor(span / dt))
    if mode == "partitioned":
        stepper = PartitionedStepper(sys, scheme, newton, subsystem_order)
    elif mode == "monolithic_be":
        stepper = MonolithicStepper(sys, scheme, "BE", newton)
    elif mode == "monolithic_fe":
        stepper = MonolithicStepper(sys, scheme, "FE", newton)
    else:
        raise ValueError(f"unknown mode {mode!r}")

    guard = _NORM_BLOWUP * max(1.0, float(np.max(np.abs(u_0.data))))
    entries = [(t_0, u_0.copy(time=t_0))]
    state = u_0
    t = t_0
    for n in range(n_steps + (1 if partial else 0)):
        h = dt if n < n_steps else span - n_steps * dt
        result = stepper.step(state, t, h)
        if result.diverged:
            return Trajectory(entries, True, str(result.failure))
        state = result.state
        t = t_0 + (n + 1) * dt if n < n_steps else t_end
        entries.append((t, state))
        if (not np.all(np.isfinite(state.data))
                or np.max(np.abs(state.data)) > guard):
            return Trajectory(entries, True,
                              f"state blow-up at t={t:.6g}")
    return Trajectory(entries)
