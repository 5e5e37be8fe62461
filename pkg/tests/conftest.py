"""Shared fixtures: the scalar reference experiment and its noise model."""

import numpy as np
import pytest

from ttssa import (FiniteMarkovChain, ProblemInstance, StepSchedule,
                   build_spread_table, exact_solution, mixing_profile,
                   monte_carlo_mse, spectral_summary)
from ttssa.engine import _default_checkpoints

# Total per-entry spread per block for the reference noisy experiment.  The
# perturbed blocks stay within the 1/4 norm bound (the worst perturbed entry
# is |a21| = 0.1 + 0.2 * (2/3) ~ 0.233; the binding norm is the unperturbed
# 0.25 diagonal) and stationary means equal the nominal blocks.
REFERENCE_SPREAD = {"a12": 0.15, "b1": 0.5, "a21": 0.2, "b2": 0.5}

# Consecutive checkpoint pairs used by the one-step recursion check.
PAIR_KS = [50, 100, 200, 400, 800, 1600, 3200, 6400, 12800, 25600, 51200]

REFERENCE_SEED = 42
REFERENCE_TRAJ = 200
REFERENCE_HORIZON = 100_000


@pytest.fixture(scope="session")
def p1():
    return ProblemInstance(a11=[[0.25]], a12=[[0.1]], a21=[[-0.1]],
                           a22=[[0.25]], b1=[0.5], b2=[0.25])


@pytest.fixture(scope="session")
def sol1(p1):
    return exact_solution(p1)


@pytest.fixture(scope="session")
def chain2():
    return FiniteMarkovChain(np.array([[0.9, 0.1], [0.2, 0.8]]))


@pytest.fixture(scope="session")
def table1(p1, chain2):
    return build_spread_table(p1, chain2, REFERENCE_SPREAD)


@pytest.fixture(scope="session")
def spec1(p1, table1):
    return spectral_summary(p1, table1)


@pytest.fixture(scope="session")
def sched_a1():
    return StepSchedule.polynomial(8.2, 2.0 / 3.0, 3.5, 1.0)


@pytest.fixture(scope="session")
def mix1(chain2, table1):
    return mixing_profile(chain2, table1)


@pytest.fixture(scope="session")
def reference_checkpoints():
    base = _default_checkpoints(REFERENCE_HORIZON)
    pairs = [k for base_k in PAIR_KS for k in (base_k, base_k + 1)]
    return np.sort(np.unique(np.concatenate([base, pairs])))


@pytest.fixture(scope="session")
def reference_curves(p1, table1, chain2, sched_a1, spec1, reference_checkpoints):
    """The shared noisy Monte Carlo experiment (200 trajectories, 1e5 steps)."""
    return monte_carlo_mse(
        p1, table1, chain2, sched_a1, x0=[0.0], y0=[0.0],
        n_traj=REFERENCE_TRAJ, base_seed=REFERENCE_SEED,
        checkpoints=reference_checkpoints, keep_trajectories=True, spec=spec1)
