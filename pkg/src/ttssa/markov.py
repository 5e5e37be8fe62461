"""Finite ergodic driving chain, per-state sample tables, mixing profiles.

The noise model: at step k the iteration sees the coefficient blocks of the
current chain state.  Stationary-weighted block averages equal the nominal
problem blocks, every block norm stays within 1/4, and the chain mixes
geometrically, so the classical two-time-scale assumptions hold by
construction.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientData, NotErgodic
from .problem import ProblemInstance


@dataclass(frozen=True)
class FiniteMarkovChain:
    transition: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.transition, dtype=float)
        if t.ndim != 2 or t.shape[0] != t.shape[1]:
            raise ValueError("transition must be a square matrix")
        if np.any(t < 0):
            raise ValueError("transition entries must be nonnegative")
        if np.max(np.abs(t.sum(axis=1) - 1.0)) > 1e-12:
            raise ValueError("transition rows must sum to 1 within 1e-12")
        t.setflags(write=False)
        object.__setattr__(self, "transition", t)

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    def is_ergodic(self) -> bool:
        """Irreducible + aperiodic: some power up to n^2 is entrywise positive."""
        n = self.n_states
        if n == 1:
            return True
        q = np.eye(n)
        for _ in range(n * n):
            q = q @ self.transition
            if np.all(q > 0):
                return True
        return False

    def cumulative(self) -> np.ndarray:
        cum = np.cumsum(self.transition, axis=1)
        cum[:, -1] = 1.0
        return cum


def stationary_distribution(chain: FiniteMarkovChain) -> np.ndarray:
    """Solve pi P = pi, sum(pi) = 1, by a direct linear solve."""
    if not chain.is_ergodic():
        raise NotErgodic("chain is not irreducible and aperiodic")
    n = chain.n_states
    a = chain.transition.T - np.eye(n)
    a[-1, :] = 1.0
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    pi = np.linalg.solve(a, rhs)
    pi = np.where(np.abs(pi) < 1e-15, 0.0, pi)
    return pi


@dataclass(frozen=True)
class SampleTable:
    """Per-state coefficient blocks, stacked along the leading state axis."""

    a11: np.ndarray  # (S, dx, dx)
    a12: np.ndarray  # (S, dx, dy)
    a21: np.ndarray  # (S, dy, dx)
    a22: np.ndarray  # (S, dy, dy)
    b1: np.ndarray   # (S, dx)
    b2: np.ndarray   # (S, dy)

    def __post_init__(self):
        for name in ("a11", "a12", "a21", "a22", "b1", "b2"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        s = {getattr(self, n).shape[0] for n in ("a11", "a12", "a21", "a22", "b1", "b2")}
        if len(s) != 1:
            raise ValueError("all blocks must share the state axis length")

    @property
    def n_states(self) -> int:
        return self.a11.shape[0]

    def state_blocks(self, s: int) -> dict:
        return {
            "a11": self.a11[s], "a12": self.a12[s], "a21": self.a21[s],
            "a22": self.a22[s], "b1": self.b1[s], "b2": self.b2[s],
        }


def nominal_instance(table: SampleTable, chain: FiniteMarkovChain) -> ProblemInstance:
    """Stationary-weighted block means as a ProblemInstance."""
    pi = stationary_distribution(chain)
    w = lambda arr: np.tensordot(pi, arr, axes=(0, 0))
    return ProblemInstance(
        a11=w(table.a11), a12=w(table.a12), a21=w(table.a21), a22=w(table.a22),
        b1=w(table.b1), b2=w(table.b2),
    )


def zero_mean_pattern(pi: np.ndarray) -> np.ndarray:
    """Per-state weights w with pi.w = 0 and max(w) - min(w) = 1."""
    n = len(pi)
    if n == 1:
        return np.zeros(1)
    w = np.zeros(n)
    w[0] = 1.0
    w -= float(pi @ w)  # (1 - pi_0, -pi_0, ..., -pi_0)
    return w / (w.max() - w.min())


def build_spread_table(
    p: ProblemInstance, chain: FiniteMarkovChain, spread: dict[str, float]
) -> SampleTable:
    """Nominal blocks plus zero-stationary-mean perturbations.

    ``spread`` maps block names to the total per-entry spread (max minus min
    across states).  The perturbation direction is the all-ones matrix for
    matrix blocks and the all-ones vector for b-blocks; the caller must leave
    room under the 1/4 norm bound.
    """
    pi = stationary_distribution(chain)
    w = zero_mean_pattern(pi)
    s = chain.n_states

    def expand(nominal, delta):
        base = np.repeat(nominal[None, ...], s, axis=0)
        if delta:
            base = base + delta * w.reshape((s,) + (1,) * nominal.ndim) * np.ones_like(nominal)
        return base

    return SampleTable(
        a11=expand(p.a11, spread.get("a11", 0.0)),
        a12=expand(p.a12, spread.get("a12", 0.0)),
        a21=expand(p.a21, spread.get("a21", 0.0)),
        a22=expand(p.a22, spread.get("a22", 0.0)),
        b1=expand(p.b1, spread.get("b1", 0.0)),
        b2=expand(p.b2, spread.get("b2", 0.0)),
    )


def load_chain_table(source) -> tuple[FiniteMarkovChain, SampleTable]:
    """Chain + table from a JSON document {"transition": ..., "states": [...]}."""
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        with open(source) as fh:
            doc = json.load(fh)
    else:
        doc = source
    chain = FiniteMarkovChain(np.asarray(doc["transition"], dtype=float))
    states = doc["states"]
    if len(states) != chain.n_states:
        raise ValueError("states list length must match the transition matrix")
    stack = lambda key, two_d: np.stack(
        [np.atleast_2d(np.asarray(st[key], dtype=float)) if two_d
         else np.atleast_1d(np.asarray(st[key], dtype=float)) for st in states]
    )
    table = SampleTable(
        a11=stack("a11", True), a12=stack("a12", True),
        a21=stack("a21", True), a22=stack("a22", True),
        b1=stack("b1", False), b2=stack("b2", False),
    )
    return chain, table


# ---------------------------------------------------------------------------
# Mixing-time machinery
# ---------------------------------------------------------------------------

def _block_deviations(chain: FiniteMarkovChain, table: SampleTable, depth: int) -> np.ndarray:
    """d_k = worst conditional-mean deviation of any block over start states.

    Exact: conditional expectations are P^k rows applied to the table, so no
    Monte Carlo error enters downstream constants.
    """
    pi = stationary_distribution(chain)
    blocks = [table.a11, table.a12, table.a21, table.a22,
              table.b1[..., None], table.b2[..., None]]
    nominals = [np.tensordot(pi, blk, axes=(0, 0)) for blk in blocks]
    n = chain.n_states
    q = np.eye(n)
    out = np.empty(depth + 1)
    for k in range(depth + 1):
        worst = 0.0
        for blk, nom in zip(blocks, nominals):
            cond = np.tensordot(q, blk, axes=(1, 0))  # (start, ...) conditional means
            dev = cond - nom[None, ...]
            if dev.ndim == 3:
                norms = np.linalg.norm(dev, ord=2, axis=(1, 2))
            else:
                norms = np.linalg.norm(dev, axis=1)
            worst = max(worst, float(norms.max()))
        out[k] = worst
        q = q @ chain.transition
    return out


def _tv_decay(chain: FiniteMarkovChain, depth: int) -> np.ndarray:
    pi = stationary_distribution(chain)
    n = chain.n_states
    q = np.eye(n)
    out = np.empty(depth + 1)
    for k in range(depth + 1):
        out[k] = 0.5 * float(np.abs(q - pi[None, :]).sum(axis=1).max())
        q = q @ chain.transition
    return out


@dataclass
class MixingProfile:
    """Deviation-decay envelope of a finite chain plus a geometric fit."""

    alphas: np.ndarray
    taus: np.ndarray
    c_geometric: float
    fit_residual: float
    tv_decay: np.ndarray
    block_decay: np.ndarray
    _envelope: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        if self._envelope is None:
            # nonincreasing suffix-max so tau is well defined even if the raw
            # decay is not monotone
            self._envelope = np.maximum.accumulate(self.block_decay[::-1])[::-1]

    def tau_of(self, alpha: float) -> int:
        """Smallest k with all later deviations <= alpha."""
        env = self._envelope
        if alpha >= env[0]:
            return 0
        if alpha < env[-1]:
            raise ValueError(
                f"profile depth {len(env) - 1} too shallow for alpha={alpha:g}; "
                "rebuild with a smaller alpha_min"
            )
        # env is nonincreasing: first index where env <= alpha
        return int(np.searchsorted(-env, -alpha, side="left"))

    def tau_of_array(self, alphas: np.ndarray) -> np.ndarray:
        env = self._envelope
        if np.any(alphas < env[-1]):
            raise ValueError("profile depth too shallow for requested alphas")
        return np.searchsorted(-env, -np.asarray(alphas), side="left")


class ConstantMixing:
    """Synthetic profile with a fixed mixing time, for oracles and tests."""

    def __init__(self, tau: int):
        self.tau = int(tau)

    def tau_of(self, alpha: float) -> int:
        return self.tau

    def tau_of_array(self, alphas) -> np.ndarray:
        return np.full(np.shape(alphas), self.tau, dtype=int)


def mixing_time(chain: FiniteMarkovChain, table: SampleTable, alpha: float,
                max_depth: int = 100_000) -> int:
    """Smallest k after which every conditional block mean is within alpha.

    Computed exactly from transition-matrix powers.
    """
    if not 0 < alpha:
        raise ValueError("alpha must be positive")
    if not chain.is_ergodic():
        raise NotErgodic("chain is not irreducible and aperiodic")
    # grow the decay sequence geometrically until it drops below alpha
    depth = 32
    while depth <= max_depth:
        d = _block_deviations(chain, table, depth)
        env = np.maximum.accumulate(d[::-1])[::-1]
        if env[-1] <= alpha:
            if alpha >= env[0]:
                return 0
            return int(np.searchsorted(-env, -alpha, side="left"))
        depth *= 2
    raise NotErgodic(f"deviations did not drop below {alpha:g} within {max_depth} powers")


def mixing_profile(chain: FiniteMarkovChain, table: SampleTable,
                   alphas=None, alpha_min: float = 1e-8) -> MixingProfile:
    """Exact mixing-time profile deep enough to evaluate tau down to alpha_min."""
    if not chain.is_ergodic():
        raise NotErgodic("chain is not irreducible and aperiodic")
    depth = 32
    while True:
        d = _block_deviations(chain, table, depth)
        env = np.maximum.accumulate(d[::-1])[::-1]
        if env[-1] <= alpha_min or env[-1] == 0.0:
            break
        depth *= 2
        if depth > 10_000_000:
            raise NotErgodic("chain mixes too slowly to profile")
    if alphas is None:
        top = max(env[0], 2 * alpha_min)
        alphas = np.geomspace(max(alpha_min * 10, top * 1e-4), top * 0.5, 12)
    alphas = np.sort(np.asarray(alphas, dtype=float))[::-1]
    prof = MixingProfile(
        alphas=alphas,
        taus=np.zeros(len(alphas), dtype=int),
        c_geometric=0.0,
        fit_residual=0.0,
        tv_decay=_tv_decay(chain, min(depth, 200)),
        block_decay=d,
    )
    prof.taus = prof.tau_of_array(alphas)
    try:
        prof.c_geometric, prof.fit_residual = fit_geometric_constant(prof)
    except InsufficientData:
        pass
    return prof


def fit_geometric_constant(profile: MixingProfile) -> tuple[float, float]:
    """Least-squares slope of tau against log(1/alpha)."""
    alphas = np.asarray(profile.alphas, dtype=float)
    taus = np.asarray(profile.taus, dtype=float)
    if len(alphas) < 5:
        raise InsufficientData("need at least 5 (alpha, tau) pairs")
    span = np.log10(alphas.max() / alphas.min())
    if span < 2.0:
        raise InsufficientData(f"alpha grid spans {span:.2f} decades, need >= 2")
    x = np.log(1.0 / alphas)
    a = np.vstack([x, np.ones_like(x)]).T
    coef, res, _, _ = np.linalg.lstsq(a, taus, rcond=None)
    residual = float(np.sqrt(res[0] / len(x))) if res.size else 0.0
    return float(coef[0]), residual


# ---------------------------------------------------------------------------
# Seeded sample streams
# ---------------------------------------------------------------------------

def substream_seed(base_seed: int, index: int) -> int:
    """Stable per-trajectory seed: first 8 bytes (little-endian) of
    SHA-256("ttssa:{base_seed}:{index}")."""
    digest = hashlib.sha256(f"ttssa:{base_seed}:{index}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def pick_state(cum_row: np.ndarray, u: float) -> int:
    """Inverse-CDF state draw; must match the vectorized engine exactly."""
    return min(int(np.searchsorted(cum_row, u, side="right")), len(cum_row) - 1)


@dataclass
class SampleStream:
    """Single-owner mutable sampling state for one trajectory."""

    chain: FiniteMarkovChain
    table: SampleTable
    state: int
    rng: np.random.Generator
    k: int = 0

    @classmethod
    def create(cls, chain: FiniteMarkovChain, table: SampleTable, seed: int,
               init_state="stationary") -> "SampleStream":
        rng = make_rng(seed)
        if init_state == "stationary":
            pi = stationary_distribution(chain)
            cum = np.cumsum(pi)
            cum[-1] = 1.0
            state = pick_state(cum, rng.random())
        else:
            state = int(init_state)
        return cls(chain=chain, table=table, state=state, rng=rng)

    def current_blocks(self) -> dict:
        return self.table.state_blocks(self.state)


def next_sample(stream: SampleStream) -> tuple[int, dict]:
    """Advance the chain one step; return the new state and its blocks."""
    cum = stream.chain.cumulative()[stream.state]
    stream.state = pick_state(cum, stream.rng.random())
    stream.k += 1
    return stream.state, stream.current_blocks()
