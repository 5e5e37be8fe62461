"""Core two-time-scale iteration, residual transform, and Monte Carlo curves.

Both coordinate updates at step k read the step-k state (synchronous update).
Trajectories are driven by per-trajectory substreams so results are identical
regardless of batching or worker count; cross-trajectory averages use numpy's
pairwise summation over a fixed index order.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import NonFinite
from .markov import (FiniteMarkovChain, SampleStream, SampleTable, make_rng,
                     next_sample, pick_state, stationary_distribution,
                     substream_seed)
from .problem import ExactSolution, ProblemInstance, SpectralSummary, exact_solution
from .schedule import StepSchedule

DIVERGENCE_LIMIT = 1e100
_CHUNK = 4096


@dataclass
class IterateState:
    """Mutable single-trajectory state for the scalar stepping API."""

    k: int
    x: np.ndarray
    y: np.ndarray
    stream: SampleStream


@dataclass(frozen=True)
class ResidualState:
    x_hat: np.ndarray
    y_hat: np.ndarray

    @property
    def z_hat_sq(self) -> float:
        return float(np.dot(self.x_hat, self.x_hat) + np.dot(self.y_hat, self.y_hat))


def sa_step(state: IterateState, schedule: StepSchedule) -> IterateState:
    """One synchronous update using the blocks of the current chain state."""
    blocks = state.stream.current_blocks()
    a_k, b_k = schedule.step_values(state.k)
    gx = blocks["a11"] @ state.x + blocks["a12"] @ state.y - blocks["b1"]
    gy = blocks["a21"] @ state.x + blocks["a22"] @ state.y - blocks["b2"]
    state.x = state.x - a_k * gx
    state.y = state.y - b_k * gy
    state.k += 1
    if max(np.abs(state.x).max(), np.abs(state.y).max()) > DIVERGENCE_LIMIT:
        raise NonFinite(step=state.k - 1)
    next_sample(state.stream)
    return state


def residual_maps(p: ProblemInstance) -> tuple[np.ndarray, np.ndarray]:
    """(A11^{-1} A12, A11^{-1} b1) for the affine residual change of variables."""
    m = np.linalg.solve(p.a11, p.a12)
    c = np.linalg.solve(p.a11, p.b1)
    return m, c


def residuals(x: np.ndarray, y: np.ndarray, p: ProblemInstance,
              sol: ExactSolution) -> ResidualState:
    m, c = residual_maps(p)
    return ResidualState(x_hat=np.asarray(x) - (c - m @ np.asarray(y)),
                         y_hat=np.asarray(y) - sol.y_star)


def reconstruct(r: ResidualState, p: ProblemInstance, sol: ExactSolution) -> tuple:
    """Inverse of the residual transform."""
    m, c = residual_maps(p)
    y = r.y_hat + sol.y_star
    x = r.x_hat + (c - m @ y)
    return x, y


def lyapunov_value(r: ResidualState, schedule: StepSchedule, k: int,
                   spec: SpectralSummary) -> float:
    a_k, b_k = schedule.step_values(k)
    w = (b_k / a_k) / (2.0 * spec.gamma * spec.rho)
    return float(np.dot(r.y_hat, r.y_hat) + w * np.dot(r.x_hat, r.x_hat))


@dataclass
class TrajectoryRecord:
    checkpoints: np.ndarray
    x_hat_sq: np.ndarray
    y_hat_sq: np.ndarray
    lyapunov: np.ndarray
    final_x: np.ndarray
    final_y: np.ndarray
    final_k: int


@dataclass
class MseCurves:
    """Per-checkpoint Monte Carlo means and standard errors."""

    checkpoints: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    mse_x: np.ndarray
    mse_y: np.ndarray
    lyapunov: np.ndarray
    se_x: np.ndarray
    se_y: np.ndarray
    se_lyapunov: np.ndarray
    n_traj: int
    per_traj_x_sq: np.ndarray | None = None  # (n_traj, n_ckpt)
    per_traj_y_sq: np.ndarray | None = None
    per_traj_v: np.ndarray | None = None

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("k,alpha_k,beta_k,mse_x,mse_y,lyapunov,se_lyapunov\n")
            for i, k in enumerate(self.checkpoints):
                fh.write(
                    f"{int(k)},{self.alpha[i]:.17g},{self.beta[i]:.17g},"
                    f"{self.mse_x[i]:.17g},{self.mse_y[i]:.17g},"
                    f"{self.lyapunov[i]:.17g},{self.se_lyapunov[i]:.17g}\n"
                )


class BatchSimulator:
    """Steps a batch of trajectories sharing one chain/table.

    Owns the mutable chain states, iterates, and per-trajectory generators, so
    a restarted run can carry sample streams across epochs while resetting the
    schedule index.
    """

    def __init__(self, p: ProblemInstance, table: SampleTable,
                 chain: FiniteMarkovChain, seeds, x0, y0,
                 init_state="stationary"):
        self.p = p
        self.table = table
        self.chain = chain
        self.cum = chain.cumulative()
        self.gens = [make_rng(s) for s in seeds]
        self.n = len(self.gens)
        x0 = np.atleast_1d(np.asarray(x0, dtype=float))
        y0 = np.atleast_1d(np.asarray(y0, dtype=float))
        self.x = np.repeat(x0[None, :], self.n, axis=0)
        self.y = np.repeat(y0[None, :], self.n, axis=0)
        self.k = 0  # global step count across epochs
        if init_state == "stationary":
            pi = stationary_distribution(chain)
            cum_pi = np.cumsum(pi)
            cum_pi[-1] = 1.0
            self.states = np.array(
                [pick_state(cum_pi, g.random()) for g in self.gens], dtype=np.intp)
        else:
            self.states = np.full(self.n, int(init_state), dtype=np.intp)

    def run(self, schedule: StepSchedule, n_steps: int, checkpoints=(),
            k_offset: int = 0):
        """Advance n_steps; schedule is evaluated at k_offset + local index.

        Returns snapshots {local_k: (X copy, Y copy)} for the requested local
        checkpoint indices (0 = state before the first of these steps).
        """
        ckpts = sorted(set(int(c) for c in checkpoints))
        if ckpts and ckpts[-1] > n_steps:
            raise ValueError("checkpoint beyond the requested horizon")
        snapshots = {}
        ci = 0
        a11t, a12t = self.table.a11, self.table.a12
        a21t, a22t = self.table.a21, self.table.a22
        b1t, b2t = self.table.b1, self.table.b2
        local = 0
        while local <= n_steps:
            if ci < len(ckpts) and ckpts[ci] == local:
                snapshots[local] = (self.x.copy(), self.y.copy())
                ci += 1
            if local == n_steps:
                break
            block = min(_CHUNK, n_steps - local)
            u = np.empty((self.n, block))
            for i, g in enumerate(self.gens):
                u[i] = g.random(block)
            for j in range(block):
                if ci < len(ckpts) and ckpts[ci] == local:
                    snapshots[local] = (self.x.copy(), self.y.copy())
                    ci += 1
                a_k, b_k = schedule.step_values(k_offset + local)
                st = self.states
                gx = np.einsum("tij,tj->ti", a11t[st], self.x) \
                    + np.einsum("tij,tj->ti", a12t[st], self.y) - b1t[st]
                gy = np.einsum("tij,tj->ti", a21t[st], self.x) \
                    + np.einsum("tij,tj->ti", a22t[st], self.y) - b2t[st]
                self.x = self.x - a_k * gx
                self.y = self.y - b_k * gy
                m = max(np.abs(self.x).max(), np.abs(self.y).max())
                if not m <= DIVERGENCE_LIMIT:
                    bad = int(np.argmax(np.maximum(
                        np.abs(self.x).max(axis=1), np.abs(self.y).max(axis=1))))
                    raise NonFinite(step=self.k, trajectory=bad)
                cum_rows = self.cum[st]
                self.states = np.minimum(
                    (cum_rows <= u[:, j:j + 1]).sum(axis=1),
                    self.cum.shape[0] - 1).astype(np.intp)
                local += 1
                self.k += 1
        return snapshots


def _default_checkpoints(horizon: int, per_decade: int = 25) -> np.ndarray:
    if horizon <= 0:
        return np.array([0])
    n = max(int(np.ceil(per_decade * np.log10(max(horizon, 2)))), 2)
    grid = np.unique(np.round(np.geomspace(1, horizon, n)).astype(int))
    return np.concatenate([[0], grid])


def _residual_stats(snapshots, checkpoints, p, sol, schedule, spec, k_offset=0):
    """Per-trajectory ||x_hat||^2, ||y_hat||^2, V at each checkpoint."""
    m, c = residual_maps(p)
    n_ck = len(checkpoints)
    any_snap = next(iter(snapshots.values()))
    n_traj = any_snap[0].shape[0]
    xs = np.empty((n_traj, n_ck))
    ys = np.empty((n_traj, n_ck))
    vs = np.empty((n_traj, n_ck))
    for i, k in enumerate(checkpoints):
        x, y = snapshots[int(k)]
        x_hat = x - (c[None, :] - y @ m.T)
        y_hat = y - sol.y_star[None, :]
        xs[:, i] = np.sum(x_hat**2, axis=1)
        ys[:, i] = np.sum(y_hat**2, axis=1)
        a_k, b_k = schedule.step_values(k_offset + int(k))
        w = (b_k / a_k) / (2.0 * spec.gamma * spec.rho)
        vs[:, i] = ys[:, i] + w * xs[:, i]
    return xs, ys, vs


def run_trajectory(p: ProblemInstance, table: SampleTable,
                   chain: FiniteMarkovChain, schedule: StepSchedule,
                   x0, y0, seed: int, checkpoints,
                   init_state="stationary",
                   spec: SpectralSummary | None = None) -> TrajectoryRecord:
    """Deterministic single trajectory recording residual norms at checkpoints."""
    from .problem import spectral_summary

    if spec is None:
        spec = spectral_summary(p, table)
    sol = exact_solution(p)
    checkpoints = np.sort(np.unique(np.asarray(checkpoints, dtype=int)))
    horizon = int(checkpoints.max()) if len(checkpoints) else 0
    sim = BatchSimulator(p, table, chain, [seed], x0, y0, init_state=init_state)
    snaps = sim.run(schedule, horizon, checkpoints)
    xs, ys, vs = _residual_stats(snaps, checkpoints, p, sol, schedule, spec)
    return TrajectoryRecord(
        checkpoints=checkpoints,
        x_hat_sq=xs[0], y_hat_sq=ys[0], lyapunov=vs[0],
        final_x=sim.x[0].copy(), final_y=sim.y[0].copy(), final_k=sim.k,
    )


def _n_workers() -> int:
    try:
        return max(1, int(os.environ.get("TTSSA_THREADS", "1")))
    except ValueError:
        return 1


def monte_carlo_mse(p: ProblemInstance, table: SampleTable,
                    chain: FiniteMarkovChain, schedule: StepSchedule,
                    x0, y0, n_traj: int, base_seed: int, checkpoints,
                    init_state="stationary", keep_trajectories: bool = False,
                    spec: SpectralSummary | None = None) -> MseCurves:
    """Averaged residual curves over seeded trajectory substreams.

    Trajectory i uses substream_seed(base_seed, i); per-trajectory values are
    identical no matter how trajectories are batched across workers, and the
    reduction order is fixed by trajectory index.
    """
    from .problem import spectral_summary

    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")
    if spec is None:
        spec = spectral_summary(p, table)
    sol = exact_solution(p)
    checkpoints = np.sort(np.unique(np.asarray(checkpoints, dtype=int)))
    horizon = int(checkpoints.max()) if len(checkpoints) else 0
    seeds = [substream_seed(base_seed, i) for i in range(n_traj)]

    workers = _n_workers()
    batch_size = max(1, (n_traj + workers - 1) // workers)
    batches = [(lo, min(lo + batch_size, n_traj))
               for lo in range(0, n_traj, batch_size)]

    def run_batch(bounds):
        lo, hi = bounds
        sim = BatchSimulator(p, table, chain, seeds[lo:hi], x0, y0,
                             init_state=init_state)
        try:
            snaps = sim.run(schedule, horizon, checkpoints)
        except NonFinite as exc:
            raise NonFinite(step=exc.step,
                            trajectory=lo + (exc.trajectory or 0)) from None
        return _residual_stats(snaps, checkpoints, p, sol, schedule, spec)

    if len(batches) == 1 or workers == 1:
        results = [run_batch(b) for b in batches]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_batch, batches))

    xs = np.concatenate([r[0] for r in results], axis=0)
    ys = np.concatenate([r[1] for r in results], axis=0)
    vs = np.concatenate([r[2] for r in results], axis=0)

    def se(arr):
        if n_traj == 1:
            return np.zeros(arr.shape[1])
        return arr.std(axis=0, ddof=1) / np.sqrt(n_traj)

    alphas = schedule.alpha.values(checkpoints)
    betas = schedule.beta.values(checkpoints)
    return MseCurves(
        checkpoints=checkpoints, alpha=alphas, beta=betas,
        mse_x=xs.mean(axis=0), mse_y=ys.mean(axis=0), lyapunov=vs.mean(axis=0),
        se_x=se(xs), se_y=se(ys), se_lyapunov=se(vs), n_traj=n_traj,
        per_traj_x_sq=xs if keep_trajectories else None,
        per_traj_y_sq=ys if keep_trajectories else None,
        per_traj_v=vs if keep_trajectories else None,
    )
