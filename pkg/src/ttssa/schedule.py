"""Step-size pairs, their certification, and the transient index.

A schedule is certified when it satisfies every condition the rate theorem
places on (alpha_k, beta_k); heuristic when only the summability/divergence
conditions hold; invalid otherwise.  Certification is a pure arithmetic check
on the family parameters and the spectral summary.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import Diverges, NotFound
from .problem import SpectralSummary

LOG2 = math.log(2.0)


@dataclass(frozen=True)
class StepFamily:
    """Either polynomial scale/(k+1)^exponent or a constant."""

    kind: str            # "poly" | "const"
    scale: float
    exponent: float = 0.0

    def __post_init__(self):
        if self.kind not in ("poly", "const"):
            raise ValueError(f"unknown step family {self.kind!r}")
        if self.scale < 0:
            raise ValueError("step scale must be nonnegative")
        if self.kind == "poly" and not 0 < self.exponent <= 1:
            raise ValueError("polynomial exponent must lie in (0, 1]")

    def value(self, k: int) -> float:
        k = max(int(k), 0)  # negative indices clamp to the k=0 value
        if self.kind == "const":
            return self.scale
        return self.scale / (k + 1) ** self.exponent

    def values(self, ks: np.ndarray) -> np.ndarray:
        ks = np.maximum(np.asarray(ks), 0)
        if self.kind == "const":
            return np.full(ks.shape, self.scale)
        return self.scale / (ks + 1.0) ** self.exponent


@dataclass(frozen=True)
class StepSchedule:
    alpha: StepFamily
    beta: StepFamily

    def step_values(self, k: int) -> tuple[float, float]:
        return self.alpha.value(k), self.beta.value(k)

    @classmethod
    def polynomial(cls, alpha0: float, a: float, beta0: float, b: float) -> "StepSchedule":
        return cls(StepFamily("poly", alpha0, a), StepFamily("poly", beta0, b))

    @classmethod
    def from_dict(cls, d: dict) -> "StepSchedule":
        def fam(spec):
            if "exp" in spec:
                return StepFamily("poly", float(spec["a0"] if "a0" in spec else spec["b0"]),
                                  float(spec["exp"]))
            return StepFamily("const", float(spec["c"]))
        return cls(alpha=fam(d["alpha"]), beta=fam(d["beta"]))

    @classmethod
    def from_json(cls, path) -> "StepSchedule":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class Certification:
    status: str                 # "certified" | "heuristic" | "invalid"
    reasons: list = field(default_factory=list)

    @property
    def certified(self) -> bool:
        return self.status == "certified"


def _series_conditions(s: StepSchedule) -> tuple[bool, bool, list]:
    """(diverging sums ok, combined series converges, failure reasons)."""
    reasons = []
    diverge_ok = True
    for name, fam in (("alpha", s.alpha), ("beta", s.beta)):
        if fam.scale <= 0:
            diverge_ok = False
            reasons.append(f"{name}: zero scale, sum cannot diverge")
        elif fam.kind == "poly" and fam.exponent > 1:
            diverge_ok = False
            reasons.append(f"{name}: exponent > 1, sum converges")
    if s.alpha.kind == "const" or s.beta.kind == "const":
        # constant families: squared series diverge
        converge_ok = False
        if s.beta.kind == "const" and s.beta.scale > 0:
            reasons.append("beta constant: sum of beta_k^2 diverges")
        if s.alpha.kind == "const" and s.alpha.scale > 0:
            reasons.append("alpha constant: sum of alpha_k^2 diverges")
        return diverge_ok, converge_ok, reasons
    a, b = s.alpha.exponent, s.beta.exponent
    converge_ok = True
    # the mixing-time log factor is absorbed whenever the underlying exponent
    # strictly exceeds 1
    if 2 * a <= 1:
        converge_ok = False
        reasons.append(f"sum of tau*alpha^2 terms diverges (2a = {2*a:g} <= 1)")
    if 2 * b <= 1:
        converge_ok = False
        reasons.append(f"sum of beta_k^2 diverges (2b = {2*b:g} <= 1)")
    if 2 * b - a <= 1:
        converge_ok = False
        reasons.append(f"sum of beta_k^2/alpha_k diverges (2b - a = {2*b - a:g} <= 1)")
    return diverge_ok, converge_ok, reasons


def validate_schedule(s: StepSchedule, spec: SpectralSummary) -> Certification:
    """Certify a step-size pair against the rate theorem's conditions.

    The initial-ratio condition is enforced in the form the proof actually
    uses, beta_k/alpha_k <= gamma/(2 rho); a looser max-form variant
    (max{2*gamma*rho, gamma/(2 rho)}) would admit pairs the analysis does
    not cover.
    """
    reasons = []
    diverge_ok, converge_ok, series_reasons = _series_conditions(s)
    reasons.extend(series_reasons)

    init_ok = True
    beta0 = s.beta.value(0)
    alpha0 = s.alpha.value(0)
    if beta0 < 1.0 / spec.rho - 1e-12:
        init_ok = False
        reasons.append(f"beta0 = {beta0:g} < 1/rho = {1.0 / spec.rho:g}")
    if alpha0 <= 0 or beta0 / alpha0 > spec.gamma / (2 * spec.rho) + 1e-12:
        init_ok = False
        reasons.append(
            f"beta0/alpha0 = {beta0 / alpha0 if alpha0 else math.inf:g} "
            f"> gamma/(2 rho) = {spec.gamma / (2 * spec.rho):g}"
        )
    ratio_ok = True
    if s.alpha.kind == "poly" and s.beta.kind == "poly":
        if s.beta.exponent < s.alpha.exponent:
            ratio_ok = False
            reasons.append("beta_k/alpha_k increasing (b < a)")
    elif s.alpha.kind == "poly" and s.beta.kind == "const":
        ratio_ok = False
        reasons.append("beta_k/alpha_k increasing (constant beta, decaying alpha)")

    if diverge_ok and converge_ok and init_ok and ratio_ok:
        return Certification("certified", reasons)
    if diverge_ok and converge_ok:
        return Certification("heuristic", reasons)
    return Certification("invalid", reasons)


@dataclass
class TransientIndex:
    k_star: int
    witness: dict


def _transient_ok(s: StepSchedule, mix, k: int) -> tuple[bool, dict]:
    a_k = s.alpha.value(k)
    tau = int(mix.tau_of(a_k))
    window = sum(s.alpha.value(t) for t in range(k - tau, k + 1))
    head = tau * s.alpha.value(k - tau)
    return (window <= LOG2 and head <= LOG2), {
        "k": k, "tau": tau, "window_sum": window, "tau_alpha": head,
    }


def k_star(s: StepSchedule, mix, cap: int = 10**9) -> TransientIndex:
    """Smallest k at which both transient conditions hold.

    The windowed sum and the tau-scaled step are each required to be at most
    log 2; negative step indices clamp to the k = 0 value.
    """
    linear_limit = min(cap, 1 << 20)
    for k in range(linear_limit + 1):
        ok, witness = _transient_ok(s, mix, k)
        if ok:
            return TransientIndex(k_star=k, witness=witness)
    # slow schedules: probe geometrically, then scan back over the last block
    lo, hi = linear_limit, 2 * linear_limit
    while hi <= cap:
        ok, _ = _transient_ok(s, mix, hi)
        if ok:
            for k in range(lo + 1, hi + 1):
                ok_k, witness = _transient_ok(s, mix, k)
                if ok_k:
                    return TransientIndex(k_star=k, witness=witness)
        lo, hi = hi, 2 * hi
    raise NotFound(f"no transient index found up to {cap}")


@dataclass
class C0Estimate:
    total: float
    partial: float
    tail: float
    parts: dict
    tails: dict = field(default_factory=dict)


def c0_estimate(s: StepSchedule, mix, cutoff: int = 10**7,
                certification: Certification | None = None,
                spec: SpectralSummary | None = None) -> C0Estimate:
    """Upper estimate of the combined step-size series constant.

    Partial sum to ``cutoff`` plus integral tail bounds.  Requires a certified
    schedule (pass an existing certification, or a spectral summary to run
    one); otherwise raises Diverges.
    """
    if certification is None:
        if spec is None:
            raise ValueError("need a certification or a spectral summary")
        certification = validate_schedule(s, spec)
    if not certification.certified:
        raise Diverges(f"schedule not certified: {certification.reasons}")

    a, b = s.alpha.exponent, s.beta.exponent
    alpha0, beta0 = s.alpha.scale, s.beta.scale

    parts = {"tau_alpha2": 0.0, "beta2": 0.0, "alpha2": 0.0, "beta2_over_alpha": 0.0}
    chunk = 1_000_000
    for start in range(0, cutoff, chunk):
        ks = np.arange(start, min(start + chunk, cutoff), dtype=float)
        ak = s.alpha.values(ks)
        bk = s.beta.values(ks)
        tau = np.minimum(mix.tau_of_array(ak), ks.astype(int))  # tau capped at k
        a_lag = s.alpha.values(np.maximum(ks - tau, 0))
        parts["tau_alpha2"] += float(np.sum(tau * a_lag * ak))
        parts["beta2"] += float(np.sum(bk**2))
        parts["alpha2"] += float(np.sum(ak**2))
        parts["beta2_over_alpha"] += float(np.sum(bk**2 / ak))
    partial = sum(parts.values())

    # integral tails; for the mixing term bound tau by a geometric-decay
    # envelope fitted from the profile and use alpha(t/2) >= alpha(t - tau)
    def p_tail(scale, p):
        return scale * (cutoff + 1.0) ** (1.0 - p) / (p - 1.0)

    tails = {
        "beta2": p_tail(beta0**2, 2 * b),
        "alpha2": p_tail(alpha0**2, 2 * a),
        "beta2_over_alpha": p_tail(beta0**2 / alpha0, 2 * b - a),
        "tau_alpha2": 0.0,
    }

    tau_cut = int(mix.tau_of(s.alpha.value(cutoff)))
    if tau_cut > 0:
        if 2 * tau_cut > cutoff:
            raise Diverges("cutoff too small relative to the mixing time")
        # closed-form tail: tau(alpha(t)) <= (log(d0/alpha0) + a log(t+1))/rate + 1
        # from the geometric envelope, and alpha(t/2) <= 2^a alpha(t); then
        # integral of (c_const + c_log * log u) u^(-2a) du from u = cutoff + 1
        u = cutoff + 1.0
        p = 2 * a
        pref = alpha0**2 * 2.0**a * u ** (1.0 - p)
        env_rate = _envelope_rate(mix)
        if env_rate is None:  # flat synthetic profile: tau is constant
            tails["tau_alpha2"] = tau_cut * pref / (p - 1.0)
        else:
            d0, rate = env_rate
            c_const = max(math.log(d0 / alpha0), 0.0) / rate + 1.0
            c_log = a / rate
            tails["tau_alpha2"] = pref * (
                c_const / (p - 1.0)
                + c_log * (math.log(u) / (p - 1.0) + 1.0 / (p - 1.0) ** 2))
    tail = sum(tails.values())
    total = partial + tail
    return C0Estimate(total=total, partial=partial, tail=tail, parts=parts, tails=tails)


def _envelope_rate(mix):
    """(d0, decay rate) of the profile's geometric envelope, or None if the
    profile has no envelope (synthetic constant-tau profiles)."""
    env = getattr(mix, "_envelope", None)
    if env is None:
        return None
    env = env[env > 0]
    if len(env) < 2:
        return None
    ratios = env[1:] / env[:-1]
    lam = min(float(ratios.max()), 1.0 - 1e-12)
    return float(env[0]), math.log(1.0 / lam)
