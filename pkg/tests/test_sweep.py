import numpy as np
import pytest

from partsdc.quadrature import ALL_SCHEME_NAMES, make_scheme
from partsdc.problems import ScalarRowsLinearSystem, make_stiff_system, stiff_exact
from partsdc.system import CoupledSystem, concat
from partsdc.sweep import (MonolithicStepper, PartitionedStepper,
                           collocation_solve, integrate,
                           sdc_step_monolithic, sdc_step_partitioned)

ALPHA = 1000.0
X0 = 1000.0


def stiff_appendix_update(alpha, dt):
    # the 2x2 closed-form map of the one-sweep partitioned scheme
    den = 1.0 + dt * (alpha + 1.0)
    return np.array([[1.0, dt],
                     [-alpha * dt / den, (1.0 - alpha * dt * dt) / den]])


class ZeroResidual(CoupledSystem):
    @property
    def num_subsystems(self):
        return 2

    @property
    def subsystem_dims(self):
        return (2, 1)

    def residual(self, i, u_i, c_i, t):
        return np.zeros_like(u_i)

    def coupling(self, i, state, t):
        return np.zeros(0)


def collocation_direct_stages(A, u0, dt, scheme):
    """Dense-solve oracle for the linear collocation system of u' = A u."""
    q = scheme.q
    n = A.shape[0]
    W = scheme.weights
    K = np.zeros((q * n, q * n))
    rhs = np.zeros(q * n)
    for j in range(q):
        for c in range(q):
            blk = -dt * W[j, c + 1] * A
            if c == j:
                blk = blk + np.eye(n)
            if c == j - 1:
                blk = blk - np.eye(n)
            K[j * n:(j + 1) * n, c * n:(c + 1) * n] += blk
        rhs[j * n:(j + 1) * n] = dt * W[j, 0] * (A @ u0)
    rhs[0:n] += u0
    X = np.linalg.solve(K, rhs)
    return [np.array(u0)] + [X[i * n:(i + 1) * n] for i in range(q)]


def test_sdc1_step_matches_appendix_matrix():
    sys = make_stiff_system(ALPHA, X0)
    res = sdc_step_partitioned(sys, make_scheme("SDC1"), sys.initial_state(),
                               0.0, 1.0)
    expected = stiff_appendix_update(ALPHA, 1.0) @ np.array([X0, 0.0])
    np.testing.assert_allclose(res.state.data, expected, rtol=1e-13)
    assert not res.diverged


@pytest.mark.parametrize("name", ALL_SCHEME_NAMES)
def test_zero_residual_is_fixed_point(name):
    u0 = concat([[1.0, -2.0], [3.0]])
    res = sdc_step_partitioned(ZeroResidual(), make_scheme(name), u0, 0.0, 0.7)
    np.testing.assert_array_equal(res.state.data, u0.data)


def test_scalar_decay_sdc4_is_fourth_order():
    # u' = -u integrated to t = 10; slopes against the exact exponential
    sys = ScalarRowsLinearSystem(np.array([[-1.0]]))
    errs = []
    for dt in (0.1, 0.05, 0.025):
        traj = integrate(sys, make_scheme("SDC4"), sys.state_from_vector([1.0]),
                         0.0, 10.0, dt)
        errs.append(abs(traj.final_state.data[0] - np.exp(-10.0)))
    order = np.log2(errs[1] / errs[2])
    assert abs(order - 4.0) <= 0.3
    assert errs[0] < 1e-8


def test_scalar_decay_sdc3r_fullstep_is_third_order():
    sys = ScalarRowsLinearSystem(np.array([[-1.0]]))
    errs = []
    for dt in (0.05, 0.025, 0.0125):
        traj = integrate(sys, make_scheme("SDC3_R"), sys.state_from_vector([1.0]),
                         0.0, 10.0, dt)
        errs.append(abs(traj.final_state.data[0] - np.exp(-10.0)))
    order = np.log2(errs[1] / errs[2])
    assert abs(order - 3.0) <= 0.3


def test_monolithic_fe_collapses_to_forward_euler():
    sys = make_stiff_system(ALPHA, X0)
    dt = 0.5
    res = sdc_step_monolithic(sys, make_scheme("SDC1"), sys.initial_state(),
                              0.0, dt, low_order="FE")
    A = np.array([[0.0, 1.0], [-ALPHA, -ALPHA - 1.0]])
    expected = (np.eye(2) + dt * A) @ np.array([X0, 0.0])
    np.testing.assert_allclose(res.state.data, expected, atol=1e-12)


def test_monolithic_be_sdc1_is_backward_euler():
    sys = ScalarRowsLinearSystem(np.array([[-1.0]]))
    res = sdc_step_monolithic(sys, make_scheme("SDC1"),
                              sys.state_from_vector([1.0]), 0.0, 1.0,
                              low_order="BE")
    np.testing.assert_allclose(res.state.data, [0.5], atol=1e-14)


def test_monolithic_and_partitioned_share_the_collocation_limit():
    # both iterations target the same collocation solution; their mutual
    # difference and their distances to the direct solve all vanish at
    # high order under dt halving
    alpha = 10.0
    sys = make_stiff_system(alpha, 1.0)
    scheme = make_scheme("SDC4")
    A = np.array([[0.0, 1.0], [-alpha, -alpha - 1.0]])
    u0 = np.array([1.0, 0.0])
    dist_mono, dist_part, diffs = [], [], []
    for dt in (0.02, 0.01):
        state = sys.initial_state()
        mono = sdc_step_monolithic(sys, scheme, state, 0.0, dt, low_order="BE")
        part = sdc_step_partitioned(sys, scheme, state, 0.0, dt)
        col = collocation_direct_stages(A, u0, dt, scheme)[-1]
        dist_mono.append(np.max(np.abs(mono.state.data - col)))
        dist_part.append(np.max(np.abs(part.state.data - col)))
        diffs.append(np.max(np.abs(mono.state.data - part.state.data)))
    assert dist_mono[0] < 1e-6 and dist_part[0] < 2e-6
    for seq in (dist_mono, dist_part, diffs):
        assert seq[1] < seq[0] / 10.0  # beyond third-order decay


def test_collocation_solve_matches_direct_linear_solve():
    lam = -2.0
    sys = ScalarRowsLinearSystem(np.array([[lam]]))
    scheme = make_scheme("SDC4")
    dt = 0.3
    result = collocation_solve(sys, scheme, sys.state_from_vector([1.0]),
                               0.0, dt, tol=1e-13)
    direct = collocation_direct_stages(np.array([[lam]]), np.array([1.0]),
                                       dt, scheme)
    for stage, ref in zip(result.stages, direct):
        np.testing.assert_allclose(stage.data, ref, atol=1e-12)


def test_collocation_solve_zero_residual_converges_in_one_sweep():
    u0 = concat([[1.0, 2.0], [3.0]])
    result = collocation_solve(ZeroResidual(), make_scheme("SDC4"), u0,
                               0.0, 1.0, tol=1e-14)
    assert result.sweeps == 1
    for stage in result.stages:
        np.testing.assert_array_equal(stage.data, u0.data)


def test_sweep_iterates_contract_geometrically_to_collocation():
    sys = make_stiff_system(ALPHA, X0)
    history = []
    result = collocation_solve(sys, make_scheme("SDC4"), sys.initial_state(),
                               0.0, 0.01, tol=1e-11, history=history)
    A = np.array([[0.0, 1.0], [-ALPHA, -ALPHA - 1.0]])
    direct = collocation_direct_stages(A, np.array([X0, 0.0]), 0.01,
                                       make_scheme("SDC4"))
    dists = [max(np.max(np.abs(st[j].data - direct[j])) for j in range(3))
             for st in history]
    ratios = [dists[i + 1] / dists[i] for i in range(len(dists) - 1)
              if dists[i] > 1e-11]
    assert all(r < 1.0 for r in ratios)
    assert dists[-1] <= 1e-10
    assert result.defect <= 1e-11


def test_sweep_distance_to_collocation_decreases_monotonically():
    # dt = 1 is below the measured stability limit (~2.004)
    sys = make_stiff_system(ALPHA, X0)
    history = []
    result = collocation_solve(sys, make_scheme("SDC4"), sys.initial_state(),
                               0.0, 1.0, tol=1e-9, history=history)
    final = result.stages
    dists = [max(np.max(np.abs(st[j].data - final[j].data)) for j in range(3))
             for st in history]
    for a, b in zip(dists[1:-2], dists[2:-1]):
        assert b <= a


def test_reversed_ordering_changes_iterates_not_fixed_point():
    sys = make_stiff_system(ALPHA, X0)
    scheme = make_scheme("SDC4")
    u0 = sys.initial_state()
    one_a = sdc_step_partitioned(sys, scheme, u0, 0.0, 0.01, num_sweeps=1)
    one_b = sdc_step_partitioned(sys, scheme, u0, 0.0, 0.01, num_sweeps=1,
                                 subsystem_order=(1, 0))
    assert np.max(np.abs(one_a.state.data - one_b.state.data)) > 1e-6
    col_a = collocation_solve(sys, scheme, u0, 0.0, 0.01, tol=1e-11)
    col_b = collocation_solve(sys, scheme, u0, 0.0, 0.01, tol=1e-11,
                              subsystem_order=(1, 0))
    for sa, sb in zip(col_a.stages, col_b.stages):
        np.testing.assert_allclose(sa.data, sb.data, atol=1e-9)


class _SpyStiff(CoupledSystem):
    """Nonlinear variant that records every coupling evaluation."""

    def __init__(self, alpha):
        self.alpha = alpha
        self.coupling_log = []

    @property
    def num_subsystems(self):
        return 2

    @property
    def subsystem_dims(self):
        return (1, 1)

    def residual(self, i, u_i, c_i, t):
        if i == 0:
            return c_i + 0.001 * u_i ** 3  # nonlinear: forces Newton loops
        return (-self.alpha - 1.0) * u_i + c_i

    def coupling(self, i, state, t):
        self.coupling_log.append((i, state.data.copy()))
        if i == 0:
            return state.subsystem_view(1).copy()
        return -self.alpha * state.subsystem_view(0)

    def jacobian(self, i, u_i, c_i, t):
        if i == 0:
            return np.array([[0.003 * u_i[0] ** 2]])
        return np.array([[-self.alpha - 1.0]])


def test_predictor_coupling_frozen_during_stage_solve():
    # the implicit solve for a subsystem evaluates the coupling exactly
    # once (the predictor), never against its own new iterate: SDC2 has
    # (q+1)*m = 4 table-init evals plus, per sweep and node, m predictor
    # evals and m table-refresh evals
    sys = _SpyStiff(5.0)
    u0 = concat([[1.0], [0.5]])
    sys.coupling_log.clear()
    res = sdc_step_partitioned(sys, make_scheme("SDC2"), u0, 0.0, 0.1)
    assert not res.diverged
    assert np.max(res.newton_iterations) > 1  # Newton actually iterated
    assert len(sys.coupling_log) == 4 + 2 * 1 * (2 + 2)


def test_predictor_sees_hybrid_state():
    sys = _SpyStiff(5.0)
    u0 = concat([[1.0], [0.5]])
    sys.coupling_log.clear()
    sdc_step_partitioned(sys, make_scheme("SDC1"), u0, 0.0, 0.1)
    # log: 4 table-init evals, then subsystem 0's predictor (all-old),
    # then subsystem 1's predictor (subsystem 0 updated, 1 still old)
    i0, state0 = sys.coupling_log[4]
    i1, state1 = sys.coupling_log[5]
    assert (i0, i1) == (0, 1)
    np.testing.assert_array_equal(state0, u0.data)
    assert state1[0] != u0.data[0]   # subsystem 0 already updated
    assert state1[1] == u0.data[1]   # own slot still at previous sweep


def test_workspace_invariants():
    sys = make_stiff_system(ALPHA, X0)
    stepper = PartitionedStepper(sys, make_scheme("SDC4"))
    u0 = sys.initial_state()
    ws = stepper.init_workspace(u0, 0.0, 0.5)
    for k in range(3):
        stepper.run_sweep(ws, k)
        np.testing.assert_array_equal(ws.stages_prev[0].data, u0.data)
        np.testing.assert_array_equal(ws.stages_curr[0].data, u0.data)
        # residual_table row j must be consistent with stages_prev row j
        for j, stage in enumerate(ws.stages_prev):
            expected = np.concatenate([
                sys.residual(i, stage.subsystem_view(i),
                             sys.coupling(i, stage, stage.time), stage.time)
                for i in range(2)])
            np.testing.assert_allclose(ws.residual_table[j], expected,
                                       atol=1e-12)


def test_newton_iteration_counts_shape():
    sys = make_stiff_system(ALPHA, X0)
    res = sdc_step_partitioned(sys, make_scheme("SDC4"), sys.initial_state(),
                               0.0, 0.1)
    assert res.newton_iterations.shape == (4, 2, 2)
    assert np.all(res.newton_iterations == 1)  # declared-linear direct solves


class _BadJacobian(CoupledSystem):
    """Useless Jacobian on subsystem 1: Newton must diverge there."""

    @property
    def num_subsystems(self):
        return 2

    @property
    def subsystem_dims(self):
        return (1, 1)

    def residual(self, i, u_i, c_i, t):
        return -u_i if i == 0 else -100.0 * u_i ** 3

    def coupling(self, i, state, t):
        return np.zeros(0)

    def jacobian(self, i, u_i, c_i, t):
        return np.array([[-1.0]]) if i == 0 else np.array([[1e-12]])


@pytest.mark.filterwarnings("ignore:overflow encountered")
def test_stage_divergence_reports_coordinates():
    res = sdc_step_partitioned(_BadJacobian(), make_scheme("SDC2"),
                               concat([[0.4], [0.4]]), 0.0, 0.5)
    assert res.diverged
    assert res.failure is not None
    assert res.failure.subsystem == 1
    assert res.failure.node == 1


def test_integrate_stiff_sdc1_stable_at_dt_1():
    sys = make_stiff_system(ALPHA, X0)
    traj = integrate(sys, make_scheme("SDC1"), sys.initial_state(),
                     0.0, 20.0, 1.0)
    assert not traj.diverged
    assert len(traj.entries) == 21
    assert all(np.all(np.isfinite(st.data)) for _, st in traj.entries)


def test_integrate_monolithic_fe_blowup_is_flagged():
    sys = make_stiff_system(ALPHA, X0)
    traj = integrate(sys, make_scheme("SDC1"), sys.initial_state(),
                     0.0, 20.0, 1.0, mode="monolithic_fe")
    assert traj.diverged
    assert traj.entries[-1][0] < 20.0


def test_integrate_single_step_trajectory():
    sys = make_stiff_system(ALPHA, X0)
    traj = integrate(sys, make_scheme("SDC2"), sys.initial_state(),
                     0.0, 0.5, 0.5)
    assert len(traj.entries) == 2
    assert traj.entries[-1][0] == 0.5


def test_integrate_partial_final_step():
    sys = ScalarRowsLinearSystem(np.array([[-1.0]]))
    traj = integrate(sys, make_scheme("SDC4"), sys.state_from_vector([1.0]),
                     0.0, 1.0, 0.3)
    times = [t for t, _ in traj.entries]
    np.testing.assert_allclose(times, [0.0, 0.3, 0.6, 0.9, 1.0], atol=1e-12)
    assert abs(traj.final_state.data[0] - np.exp(-1.0)) < 1e-4


def test_integrate_rejects_bad_arguments():
    sys = ScalarRowsLinearSystem(np.array([[-1.0]]))
    with pytest.raises(ValueError):
        integrate(sys, make_scheme("SDC1"), sys.state_from_vector([1.0]),
                  0.0, 1.0, -0.1)
    with pytest.raises(ValueError):
        integrate(sys, make_scheme("SDC1"), sys.state_from_vector([1.0]),
                  0.0, 1.0, 0.5, mode="nope")


def test_local_error_gains_one_order_per_sweep():
    # k sweeps on the fourth-order quadrature: local error dt^{min(k+1, 5)},
    # measured in the asymptotic regime of a mild instance of the family
    alpha, x0, t0 = 2.5, 1.0, 0.5
    sys = make_stiff_system(alpha, x0)
    scheme = make_scheme("SDC4")
    dts = (0.1, 0.05, 0.025, 0.0125)
    prev_finest = None
    for k in (1, 2, 3, 4):
        errs = []
        for dt in dts:
            start = concat(stiff_exact(alpha, x0, t0).reshape(2, 1), time=t0)
            res = sdc_step_partitioned(sys, scheme, start, t0, dt,
                                       num_sweeps=k)
            errs.append(np.max(np.abs(res.state.data
                                      - stiff_exact(alpha, x0, t0 + dt))))
        order = np.log2(errs[-2] / errs[-1])
        assert order >= min(k + 1, 5) - 0.45
        if prev_finest is not None:
            assert errs[-1] < prev_finest  # every sweep helps
        prev_finest = errs[-1]
