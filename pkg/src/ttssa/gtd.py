"""Gradient-TD policy evaluation expressed as a two-time-scale instance.

A Markov reward process with linear features induces per-pair-state
coefficient blocks on the pair chain (current state, next state); the slow
variable is the value-function parameter and the fast variable tracks the
auxiliary gradient-correction term.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import FeatureScale, NotErgodic, SingularMatrix
from .markov import FiniteMarkovChain, SampleTable, stationary_distribution
from .problem import BLOCK_NORM_BOUND, ProblemInstance


@dataclass(frozen=True)
class MarkovRewardProcess:
    transition: np.ndarray
    reward: np.ndarray
    discount: float

    def __post_init__(self):
        t = np.asarray(self.transition, dtype=float)
        r = np.asarray(self.reward, dtype=float).reshape(-1)
        if t.ndim != 2 or t.shape[0] != t.shape[1] or t.shape[0] != len(r):
            raise ValueError("transition/reward shapes inconsistent")
        if np.max(np.abs(t.sum(axis=1) - 1.0)) > 1e-12 or np.any(t < 0):
            raise ValueError("transition rows must be probability vectors")
        if not 0 <= self.discount < 1:
            raise ValueError("discount must lie in [0, 1)")
        t.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "transition", t)
        object.__setattr__(self, "reward", r)

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @classmethod
    def from_dict(cls, d: dict) -> "MarkovRewardProcess":
        return cls(np.asarray(d["transition"], dtype=float),
                   np.asarray(d["reward"], dtype=float),
                   float(d["discount"]))

    @classmethod
    def from_json(cls, path) -> "MarkovRewardProcess":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class FeatureMap:
    phi: np.ndarray  # (n_states, d), one feature row per state

    def __post_init__(self):
        phi = np.atleast_2d(np.asarray(self.phi, dtype=float))
        if phi.ndim != 2:
            raise ValueError("phi must be a matrix of feature rows")
        phi.setflags(write=False)
        object.__setattr__(self, "phi", phi)

    @property
    def dim(self) -> int:
        return self.phi.shape[1]


@dataclass(frozen=True)
class GtdModel:
    problem: ProblemInstance
    chain: FiniteMarkovChain       # pair-state chain
    table: SampleTable
    pair_states: tuple             # ((i, j), ...) in table order
    mrp: MarkovRewardProcess
    features: FeatureMap


def _pair_blocks(phi_i, phi_j, r_i, discount):
    a11 = np.outer(phi_i, phi_i)
    a12 = np.outer(phi_i, phi_i - discount * phi_j)
    a21 = -a12.T
    a22 = np.zeros_like(a11)
    return a11, a12, a21, a22, r_i * phi_i, np.zeros(len(phi_i))


def scale_features(mrp: MarkovRewardProcess, features: FeatureMap) -> tuple[FeatureMap, float]:
    """Largest uniform feature rescaling keeping every block within 1/4."""
    worst = 0.0
    for i in range(mrp.n_states):
        for j in np.nonzero(mrp.transition[i] > 0)[0]:
            blocks = _pair_blocks(features.phi[i], features.phi[j],
                                  mrp.reward[i], mrp.discount)
            for m in blocks[:4]:
                worst = max(worst, float(np.linalg.norm(m, ord=2)))
    if worst == 0.0:
        return features, 1.0
    c = min(1.0, np.sqrt(BLOCK_NORM_BOUND / worst))
    return FeatureMap(features.phi * c), float(c)


def build_gtd_instance(mrp: MarkovRewardProcess,
                       features: FeatureMap) -> GtdModel:
    """Pair-state chain + sample table realizing the GTD update.

    Pair (i, j) transitions to (j, l) with the base probability of j -> l.
    Sign conventions are folded so the generic subtractive iteration
    reproduces the additive GTD update exactly.
    """
    if features.phi.shape[0] != mrp.n_states:
        raise ValueError("one feature row per state required")
    p = mrp.transition
    pairs = [(i, j) for i in range(mrp.n_states)
             for j in range(mrp.n_states) if p[i, j] > 0]
    idx = {pair: s for s, pair in enumerate(pairs)}
    n_pair = len(pairs)
    q = np.zeros((n_pair, n_pair))
    for (i, j), s in idx.items():
        for l in np.nonzero(p[j] > 0)[0]:
            q[s, idx[(j, int(l))]] = p[j, l]
    chain = FiniteMarkovChain(q)
    if not chain.is_ergodic():
        raise NotErgodic("induced pair chain is not ergodic")

    d = features.dim
    a11 = np.empty((n_pair, d, d))
    a12 = np.empty((n_pair, d, d))
    a21 = np.empty((n_pair, d, d))
    a22 = np.zeros((n_pair, d, d))
    b1 = np.empty((n_pair, d))
    b2 = np.zeros((n_pair, d))
    for (i, j), s in idx.items():
        a11[s], a12[s], a21[s], _, b1[s], _ = _pair_blocks(
            features.phi[i], features.phi[j], mrp.reward[i], mrp.discount)
    for name, arr in (("a11", a11), ("a12", a12), ("a21", a21)):
        norms = np.linalg.norm(arr, ord=2, axis=(1, 2))
        if norms.max() > BLOCK_NORM_BOUND + 1e-12:
            raise FeatureScale(
                f"pair-state {name} norm {norms.max():.6g} exceeds 1/4; "
                "rescale the features")
    table = SampleTable(a11=a11, a12=a12, a21=a21, a22=a22, b1=b1, b2=b2)

    pi = stationary_distribution(chain)
    w = lambda arr: np.tensordot(pi, arr, axes=(0, 0))
    problem = ProblemInstance(a11=w(a11), a12=w(a12), a21=w(a21), a22=w(a22),
                              b1=w(b1), b2=w(b2))
    return GtdModel(problem=problem, chain=chain, table=table,
                    pair_states=tuple(pairs), mrp=mrp, features=features)


@dataclass(frozen=True)
class BellmanSolution:
    y_star: np.ndarray
    fitted_values: np.ndarray   # phi^T y* per base state


def bellman_fixed_point(mrp: MarkovRewardProcess,
                        features: FeatureMap) -> BellmanSolution:
    """Stationary-expectation solve E[A12] y* = E[b1].

    For full-rank tabular features this coincides with the exact value
    function (see :func:`exact_values`).
    """
    model = build_gtd_instance(mrp, features)
    p = model.problem
    cond = np.linalg.cond(p.a12)
    if not np.isfinite(cond) or cond > 1e12:
        raise SingularMatrix("E[A12] is numerically singular on the feature span")
    y = np.linalg.solve(p.a12, p.b1)
    return BellmanSolution(y_star=y, fitted_values=features.phi @ y)


def exact_values(mrp: MarkovRewardProcess) -> np.ndarray:
    """Ground-truth value function (I - discount*P)^{-1} r."""
    n = mrp.n_states
    return np.linalg.solve(np.eye(n) - mrp.discount * mrp.transition, mrp.reward)


def x_star_tracking_check(p: ProblemInstance, sol) -> float:
    """Deviation between the block-elimination fast fixed point and the
    alternative transposed tracking expression A11^{-1}(A21^T y* + b1).

    Reported, not asserted: the two coincide only when A21 = -A12^T (as in
    GTD instances).
    """
    x_main = np.linalg.solve(p.a11, p.b1 - p.a12 @ sol.y_star)
    x_alt = np.linalg.solve(p.a11, p.a21.T @ sol.y_star + p.b1)
    return float(np.linalg.norm(x_main - x_alt))
