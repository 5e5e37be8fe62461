"""Iteration engine: stepping, residuals, batching, and determinism."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ttssa import (FiniteMarkovChain, IterateState, NonFinite, StepSchedule,
                   exact_solution, lyapunov_value, monte_carlo_mse,
                   reconstruct, residuals, run_trajectory, sa_step)
from ttssa.engine import BatchSimulator, _default_checkpoints
from ttssa.markov import SampleStream, SampleTable, substream_seed
from ttssa.schedule import StepFamily

from oracles import exact_moment_curves, reference_trajectory


@pytest.fixture(scope="module")
def noiseless(p1):
    chain = FiniteMarkovChain(np.array([[1.0]]))
    table = SampleTable(a11=p1.a11[None], a12=p1.a12[None], a21=p1.a21[None],
                        a22=p1.a22[None], b1=p1.b1[None], b2=p1.b2[None])
    return chain, table


def test_single_step_hand_value(p1, noiseless):
    chain, table = noiseless
    sched = StepSchedule(StepFamily("const", 0.1), StepFamily("const", 0.01))
    state = IterateState(k=0, x=np.zeros(1), y=np.zeros(1),
                         stream=SampleStream.create(chain, table, seed=0))
    state = sa_step(state, sched)
    # x1 = -0.1*(0 - 0.5), y1 = -0.01*(0 - 0.25)
    assert state.x == pytest.approx([0.05], rel=1e-15)
    assert state.y == pytest.approx([0.0025], rel=1e-15)
    assert state.k == 1


def test_synchronous_update_uses_step_k_state(p1, noiseless):
    """The y update must read x_k, not the freshly written x_{k+1}."""
    chain, table = noiseless
    sched = StepSchedule(StepFamily("const", 0.5), StepFamily("const", 0.5))
    state = IterateState(k=0, x=np.array([0.0]), y=np.array([2.0]),
                         stream=SampleStream.create(chain, table, seed=0))
    state = sa_step(state, sched)
    # synchronous: gy at (x=0, y=2) is 0 + 0.5 - 0.25 = 0.25 -> y1 = 1.875;
    # a Gauss-Seidel update reading x1 = 0.15 would give y1 = 1.8825
    assert state.x == pytest.approx([0.15], rel=1e-14)
    assert state.y == pytest.approx([1.875], rel=1e-14)


def test_fixed_point_invariant(p1, noiseless, sol1, sched_a1):
    chain, table = noiseless
    rec = run_trajectory(p1, table, chain, sched_a1, sol1.x_star, sol1.y_star,
                         seed=5, checkpoints=[0, 100, 1000])
    assert np.all(rec.lyapunov < 1e-25)


def test_residual_round_trip(p1, sol1):
    rng = np.random.default_rng(3)
    for _ in range(25):
        x, y = rng.standard_normal(1), rng.standard_normal(1)
        r = residuals(x, y, p1, sol1)
        x2, y2 = reconstruct(r, p1, sol1)
        assert x2 == pytest.approx(x, abs=1e-12)
        assert y2 == pytest.approx(y, abs=1e-12)
    r = residuals(sol1.x_star, sol1.y_star, p1, sol1)
    assert r.z_hat_sq < 1e-28


def test_lyapunov_weight(p1, sol1, spec1, sched_a1):
    r = residuals([0.0], [0.0], p1, sol1)
    k = 17
    a_k, b_k = sched_a1.step_values(k)
    w = (b_k / a_k) / (2.0 * spec1.gamma * spec1.rho)
    expect = float(r.y_hat @ r.y_hat + w * (r.x_hat @ r.x_hat))
    assert lyapunov_value(r, sched_a1, k, spec1) == pytest.approx(expect, rel=1e-14)


def test_matches_reference_stepper(p1, table1, chain2, sched_a1, spec1):
    """The batched engine and a plain-loop stepper agree bit for bit."""
    rec = run_trajectory(p1, table1, chain2, sched_a1, [0.3], [-0.2],
                         seed=777, checkpoints=[500], spec=spec1)
    x, y, _ = reference_trajectory(p1, table1, chain2, sched_a1,
                                   [0.3], [-0.2], 777, 500)
    assert np.array_equal(rec.final_x, x)
    assert np.array_equal(rec.final_y, y)


def test_scalar_and_batch_paths_agree(p1, table1, chain2, sched_a1):
    """sa_step-driven iteration equals the vectorized BatchSimulator."""
    seed = substream_seed(11, 0)
    state = IterateState(k=0, x=np.zeros(1), y=np.zeros(1),
                         stream=SampleStream.create(chain2, table1, seed))
    for _ in range(200):
        state = sa_step(state, sched_a1)
    sim = BatchSimulator(p1, table1, chain2, [seed], np.zeros(1), np.zeros(1))
    sim.run(sched_a1, 200)
    assert np.array_equal(sim.x[0], state.x)
    assert np.array_equal(sim.y[0], state.y)


def test_monte_carlo_single_equals_trajectory(p1, table1, chain2, sched_a1, spec1):
    ck = [0, 10, 100, 300]
    curves = monte_carlo_mse(p1, table1, chain2, sched_a1, [0.0], [0.0],
                             n_traj=1, base_seed=11, checkpoints=ck, spec=spec1)
    rec = run_trajectory(p1, table1, chain2, sched_a1, [0.0], [0.0],
                         seed=substream_seed(11, 0), checkpoints=ck, spec=spec1)
    assert np.array_equal(curves.lyapunov, rec.lyapunov)
    assert np.all(curves.se_lyapunov == 0.0)


def test_worker_count_invariance(p1, table1, chain2, sched_a1, spec1, monkeypatch):
    ck = [0, 50, 500]
    args = (p1, table1, chain2, sched_a1, [0.0], [0.0])
    monkeypatch.setenv("TTSSA_THREADS", "1")
    one = monte_carlo_mse(*args, n_traj=7, base_seed=4, checkpoints=ck, spec=spec1)
    monkeypatch.setenv("TTSSA_THREADS", "4")
    four = monte_carlo_mse(*args, n_traj=7, base_seed=4, checkpoints=ck, spec=spec1)
    assert np.array_equal(one.lyapunov, four.lyapunov)
    assert np.array_equal(one.se_lyapunov, four.se_lyapunov)


def test_noiseless_replicas_have_zero_se(p1, noiseless, sched_a1, spec1):
    chain, table = noiseless
    curves = monte_carlo_mse(p1, table, chain, sched_a1, [0.0], [0.0],
                             n_traj=5, base_seed=0, checkpoints=[0, 100],
                             spec=spec1, keep_trajectories=True)
    # identical replicas; SE is zero up to roundoff in the std reduction
    assert np.all(curves.se_lyapunov <= 1e-12)
    assert np.all(curves.per_traj_v == curves.per_traj_v[0])


def test_default_checkpoints_cover_range():
    ck = _default_checkpoints(10**4)
    assert ck[0] == 0 and ck[-1] == 10**4
    assert np.all(np.diff(ck) > 0)
    assert np.array_equal(_default_checkpoints(0), [0])


def test_divergence_guard(p1, noiseless):
    chain, table = noiseless
    wild = StepSchedule(StepFamily("const", 100.0), StepFamily("const", 100.0))
    with pytest.raises(NonFinite) as exc_info:
        run_trajectory(p1, table, chain, wild, [1.0], [1.0],
                       seed=0, checkpoints=[2000])
    assert exc_info.value.step is not None


def test_checkpoint_beyond_horizon_rejected(p1, table1, chain2, sched_a1):
    sim = BatchSimulator(p1, table1, chain2, [1], [0.0], [0.0])
    with pytest.raises(ValueError):
        sim.run(sched_a1, 10, checkpoints=[11])


def test_monte_carlo_matches_exact_moments(p1, table1, chain2, sched_a1,
                                           spec1, sol1):
    """Sample means stay within standard error of the exact moment recursion."""
    ck = [10, 100, 1000]
    curves = monte_carlo_mse(p1, table1, chain2, sched_a1, [0.0], [0.0],
                             n_traj=400, base_seed=5, checkpoints=ck, spec=spec1)
    oracle = exact_moment_curves(p1, table1, chain2, sched_a1, spec1, sol1,
                                 z0=[0.0, 0.0], checkpoints=ck)
    for i, k in enumerate(ck):
        v_exact, ex2, ey2 = oracle[k]
        assert abs(curves.lyapunov[i] - v_exact) < 5 * max(curves.se_lyapunov[i], 1e-12)
        assert abs(curves.mse_x[i] - ex2) < 5 * max(curves.se_x[i], 1e-12)
        assert abs(curves.mse_y[i] - ey2) < 5 * max(curves.se_y[i], 1e-12)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 60))
def test_trajectory_prefix_consistency(seed, n, p1, table1, chain2, sched_a1,
                                       spec1):
    """Running to k then continuing equals running straight through."""
    full = run_trajectory(p1, table1, chain2, sched_a1, [0.0], [0.0],
                          seed=seed, checkpoints=[n, 2 * n], spec=spec1)
    assert np.isfinite(full.lyapunov).all()
    half = run_trajectory(p1, table1, chain2, sched_a1, [0.0], [0.0],
                          seed=seed, checkpoints=[n], spec=spec1)
    assert half.lyapunov[0] == full.lyapunov[0]
