"""Coupled linear system, its exact solution, and spectral quantities.

The target system is

    A11 x + A12 y = b1
    A21 x + A22 y = b2

with the reduced matrix ``Delta = A22 - A21 A11^{-1} A12`` controlling the
slow variable.  All matrices are dense; the intended problem sizes are small
(dimensions up to ~100).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import NotPositive, SingularMatrix

COND_LIMIT = 1e12
BLOCK_NORM_BOUND = 0.25


def _as_matrix(m, rows, cols, name):
    a = np.asarray(m, dtype=float)
    if a.shape != (rows, cols):
        raise ValueError(f"{name} must have shape {(rows, cols)}, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    return a


@dataclass(frozen=True)
class ProblemInstance:
    """Nominal coefficient blocks and right-hand sides of the coupled system."""

    a11: np.ndarray
    a12: np.ndarray
    a21: np.ndarray
    a22: np.ndarray
    b1: np.ndarray
    b2: np.ndarray

    def __post_init__(self):
        a11 = np.atleast_2d(np.asarray(self.a11, dtype=float))
        dx = a11.shape[0]
        a22 = np.atleast_2d(np.asarray(self.a22, dtype=float))
        dy = a22.shape[0]
        object.__setattr__(self, "a11", _as_matrix(a11, dx, dx, "a11"))
        object.__setattr__(self, "a12", _as_matrix(np.atleast_2d(np.asarray(self.a12, dtype=float)).reshape(dx, dy), dx, dy, "a12"))
        object.__setattr__(self, "a21", _as_matrix(np.atleast_2d(np.asarray(self.a21, dtype=float)).reshape(dy, dx), dy, dx, "a21"))
        object.__setattr__(self, "a22", _as_matrix(a22, dy, dy, "a22"))
        object.__setattr__(self, "b1", _as_matrix(np.asarray(self.b1, dtype=float).reshape(dx, 1), dx, 1, "b1")[:, 0])
        object.__setattr__(self, "b2", _as_matrix(np.asarray(self.b2, dtype=float).reshape(dy, 1), dy, 1, "b2")[:, 0])
        for arr in (self.a11, self.a12, self.a21, self.a22, self.b1, self.b2):
            arr.setflags(write=False)

    @property
    def dx(self) -> int:
        return self.a11.shape[0]

    @property
    def dy(self) -> int:
        return self.a22.shape[0]

    @classmethod
    def from_dict(cls, d: dict) -> "ProblemInstance":
        return cls(d["a11"], d["a12"], d["a21"], d["a22"], d["b1"], d["b2"])

    @classmethod
    def from_json(cls, path) -> "ProblemInstance":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return {
            "a11": self.a11.tolist(),
            "a12": self.a12.tolist(),
            "a21": self.a21.tolist(),
            "a22": self.a22.tolist(),
            "b1": self.b1.tolist(),
            "b2": self.b2.tolist(),
        }


@dataclass(frozen=True)
class ExactSolution:
    x_star: np.ndarray
    y_star: np.ndarray


@dataclass(frozen=True)
class SpectralSummary:
    """Spectral quantities of the nominal blocks used by the rate theory."""

    gamma: float        # smallest eigenvalue of sym(A11)
    rho: float          # smallest eigenvalue of sym(Delta)
    lambda1: float      # smallest singular value of A11
    lambdan: float      # largest singular value of A11
    sigma1: float       # smallest singular value of Delta
    sigman: float       # largest singular value of Delta
    b_bound: float      # uniform bound B on the sampled right-hand sides
    y_star_norm: float


@dataclass
class AssumptionReport:
    bounded_ok: bool
    positivity_ok: bool
    stationary_ok: bool
    worst_block_norm: float
    details: list = field(default_factory=list)

    @property
    def all_ok(self) -> bool:
        return self.bounded_ok and self.positivity_ok and self.stationary_ok


def _check_cond(m: np.ndarray, name: str) -> None:
    c = np.linalg.cond(m)
    if not np.isfinite(c) or c > COND_LIMIT:
        raise SingularMatrix(f"{name} is numerically singular (cond ~ {c:.3e})")


def reduced_matrix(p: ProblemInstance) -> np.ndarray:
    """Delta = A22 - A21 A11^{-1} A12."""
    _check_cond(p.a11, "a11")
    return p.a22 - p.a21 @ np.linalg.solve(p.a11, p.a12)


def exact_solution(p: ProblemInstance) -> ExactSolution:
    """Solve the coupled system by block elimination through Delta."""
    _check_cond(p.a11, "a11")
    delta = reduced_matrix(p)
    _check_cond(delta, "reduced matrix")
    y = np.linalg.solve(delta, p.b2 - p.a21 @ np.linalg.solve(p.a11, p.b1))
    x = np.linalg.solve(p.a11, p.b1 - p.a12 @ y)
    return ExactSolution(x_star=x, y_star=y)


def solution_residual(p: ProblemInstance, sol: ExactSolution) -> float:
    """Relative residual of the candidate solution in the original system."""
    r1 = p.a11 @ sol.x_star + p.a12 @ sol.y_star - p.b1
    r2 = p.a21 @ sol.x_star + p.a22 @ sol.y_star - p.b2
    rhs = 1.0 + np.linalg.norm(np.concatenate([p.b1, p.b2]))
    return float(np.linalg.norm(np.concatenate([r1, r2])) / rhs)


def _min_sym_eig(m: np.ndarray) -> float:
    return float(np.linalg.eigvalsh((m + m.T) / 2.0).min())


def spectral_summary(p: ProblemInstance, table=None) -> SpectralSummary:
    """Compute the eigen/singular quantities entering the rate constants.

    ``table`` (optional, any object with per-state ``b1``/``b2`` arrays)
    sharpens the bound B to the max over sampled right-hand sides; without
    it the nominal vectors are used.
    """
    delta = reduced_matrix(p)
    gamma = _min_sym_eig(p.a11)
    rho = _min_sym_eig(delta)
    if gamma <= 0:
        raise NotPositive(f"sym(A11) has smallest eigenvalue {gamma} <= 0")
    if rho <= 0:
        raise NotPositive(f"sym(Delta) has smallest eigenvalue {rho} <= 0")
    sv_a = np.linalg.svd(p.a11, compute_uv=False)
    sv_d = np.linalg.svd(delta, compute_uv=False)
    if table is not None:
        b_bound = max(
            float(np.max(np.linalg.norm(np.atleast_2d(table.b1), axis=1))),
            float(np.max(np.linalg.norm(np.atleast_2d(table.b2), axis=1))),
        )
    else:
        b_bound = max(float(np.linalg.norm(p.b1)), float(np.linalg.norm(p.b2)))
    sol = exact_solution(p)
    return SpectralSummary(
        gamma=gamma,
        rho=rho,
        lambda1=float(sv_a.min()),
        lambdan=float(sv_a.max()),
        sigma1=float(sv_d.min()),
        sigman=float(sv_d.max()),
        b_bound=b_bound,
        y_star_norm=float(np.linalg.norm(sol.y_star)),
    )


def validate_assumptions(p: ProblemInstance, table, chain=None) -> AssumptionReport:
    """Check the boundedness, positivity, and stationary-mean assumptions.

    Violations are reported, never raised.  The stationary-mean check needs
    the driving chain; without one it is skipped (reported as passing).
    """
    details = []

    worst = 0.0
    bounded_ok = True
    blocks = {"a11": table.a11, "a12": table.a12, "a21": table.a21, "a22": table.a22}
    for name, arr in blocks.items():
        for s in range(arr.shape[0]):
            n = float(np.linalg.norm(arr[s], ord=2))
            worst = max(worst, n)
            if n > BLOCK_NORM_BOUND + 1e-12:
                bounded_ok = False
                details.append(f"state {s}: ||{name}|| = {n:.6g} exceeds 1/4")
    b_bound = max(
        float(np.max(np.linalg.norm(np.atleast_2d(table.b1), axis=1))),
        float(np.max(np.linalg.norm(np.atleast_2d(table.b2), axis=1))),
    )
    # b-vectors are checked against the declared bound, which is by definition
    # their max norm; record it for the report.
    details.append(f"declared B = {b_bound:.6g}")

    positivity_ok = True
    try:
        delta = reduced_matrix(p)
        for name, m in (("A11", p.a11), ("Delta", delta)):
            ev = _min_sym_eig(m)
            if ev <= 0:
                positivity_ok = False
                details.append(f"sym({name}) smallest eigenvalue {ev:.6g} <= 0")
    except SingularMatrix as exc:
        positivity_ok = False
        details.append(str(exc))

    stationary_ok = True
    if chain is not None:
        from .markov import stationary_distribution

        pi = stationary_distribution(chain)
        pairs = [
            ("a11", table.a11, p.a11), ("a12", table.a12, p.a12),
            ("a21", table.a21, p.a21), ("a22", table.a22, p.a22),
            ("b1", table.b1, p.b1), ("b2", table.b2, p.b2),
        ]
        for name, arr, nominal in pairs:
            mean = np.tensordot(pi, arr, axes=(0, 0))
            dev = float(np.max(np.abs(mean - nominal)))
            if dev > 1e-10:
                stationary_ok = False
                details.append(f"stationary mean of {name} off by {dev:.3e}")

    return AssumptionReport(
        bounded_ok=bounded_ok,
        positivity_ok=positivity_ok,
        stationary_ok=stationary_ok,
        worst_block_norm=worst,
        details=details,
    )
