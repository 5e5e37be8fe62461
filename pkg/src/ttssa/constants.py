"""Closed-form rate constants and the empirical one-step recursion check.

The headline constants contain exponential and high-power factors that
overflow binary64 for realistic inputs, so everything here is evaluated with
mpmath arbitrary-precision floats and reported as decimal strings.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import mpmath as mp
import numpy as np

from .errors import Overflow
from .problem import SpectralSummary
from .schedule import StepSchedule

_DPS = 60


def _mpf(x) -> mp.mpf:
    return mp.mpf(repr(float(x))) if isinstance(x, float) else mp.mpf(x)


def compute_c1_c2(spec: SpectralSummary, c0, alpha0, e_z0_sq) -> tuple[mp.mpf, mp.mpf]:
    """Evaluate the two Lyapunov-recursion constants in extended precision.

    The first carries an exponential factor whose exponent routinely exceeds
    the binary64 range for realistic series constants.
    """
    with mp.workdps(_DPS):
        g = _mpf(spec.gamma)
        r = _mpf(spec.rho)
        l1 = _mpf(spec.lambda1)
        bb = _mpf(spec.b_bound)
        yn = _mpf(spec.y_star_norm)
        c0 = _mpf(c0)
        a0 = _mpf(alpha0)
        z0 = _mpf(e_z0_sq)
        pf = (8 * l1 + 1) ** 5
        exponent = 60 * c0 * (g + 1) * pf * (1 + a0) ** 2 / (g * l1**6)
        try:
            expo = mp.e ** exponent
        except OverflowError as exc:  # pragma: no cover - mpmath rarely trips
            raise Overflow(f"exponent {mp.nstr(exponent)} saturates") from exc
        c1 = (z0 + 38 * c0 * pf * (2 * bb + yn) ** 2 / l1**8) * expo
        c2 = (2 * (13 * g * r + 3) * (2 * bb + yn) ** 2
              + 9 * c1 * (3 + 7 * g * r) / (4 * r * g)) * pf / l1**8
        if not (mp.isfinite(c1) and mp.isfinite(c2)):
            raise Overflow("constants saturated extended precision")
        return c1, c2


def gamma_intermediates(spec: SpectralSummary, c0, alpha0, e_z0_sq) -> dict:
    """Read-only pieces of the first constant, exposed for debugging."""
    with mp.workdps(_DPS):
        g = _mpf(spec.gamma)
        l1 = _mpf(spec.lambda1)
        pf = (8 * l1 + 1) ** 5
        gamma1 = _mpf(e_z0_sq) + 38 * _mpf(c0) * pf \
            * (2 * _mpf(spec.b_bound) + _mpf(spec.y_star_norm)) ** 2 / l1**8
        gamma2 = 60 * _mpf(c0) * (g + 1) * pf * (1 + _mpf(alpha0)) ** 2 / (g * l1**6)
        return {"prefactor": gamma1, "exponent": gamma2}


def transient_bound(spec: SpectralSummary, schedule: StepSchedule,
                    k_star: int, v0) -> mp.mpf:
    """Upper bound on the Lyapunov value at the end of the transient phase."""
    with mp.workdps(_DPS):
        a0 = _mpf(schedule.alpha.value(0))
        b0 = _mpf(schedule.beta.value(0))
        g = _mpf(spec.gamma)
        r = _mpf(spec.rho)
        l1 = _mpf(spec.lambda1)
        grow = (1 + a0) ** (2 * int(k_star))
        out = 8 * (b0 + g * r * a0) * grow * _mpf(v0) / (b0 * l1**2) \
            + 25 * (_mpf(spec.b_bound) + _mpf(spec.y_star_norm)) ** 2 * grow / l1**6
        if not mp.isfinite(out):
            raise Overflow("transient bound saturated extended precision")
        return out


def psi_constants(spec: SpectralSummary, schedule: StepSchedule, k_star: int,
                  c1, c2, c_mix) -> tuple[mp.mpf, mp.mpf]:
    """Bias/variance coefficients of the simplified pre-restart bound."""
    with mp.workdps(_DPS):
        a0 = _mpf(schedule.alpha.value(0))
        b0 = _mpf(schedule.beta.value(0))
        g = _mpf(spec.gamma)
        r = _mpf(spec.rho)
        l1 = _mpf(spec.lambda1)
        ks = _mpf(int(k_star)) if k_star > 0 else mp.mpf(1)
        grow = (1 + a0) ** (2 * int(k_star))
        psi1 = 8 * (b0 + g * r * a0) * ks * grow / (b0 * l1**2)
        psi2 = 25 * ks * (_mpf(spec.b_bound) + _mpf(spec.y_star_norm)) ** 2 * grow / l1**6 \
            + 8 * _mpf(c1) * (1 + a0) ** 2 * b0**3 / (r * g**2 * l1**2 * a0**2) \
            + b0 * _mpf(c2) * (a0 + 2 * b0 + 6 * _mpf(c_mix)) / 2
        return psi1, psi2


@dataclass
class RateConstants:
    """Every closed-form constant needed by the bound curves and budgets."""

    c0: float
    c1: mp.mpf
    c2: mp.mpf
    k_star: int
    v_kstar_bound: mp.mpf
    psi1: mp.mpf
    psi2: mp.mpf
    gamma: float
    rho: float
    lambda1: float
    sigman: float
    b_bound: float
    y_star_norm: float
    alpha0: float
    beta0: float
    c_mix: float
    e_z0_sq: float
    v0: float
    intermediates: dict = field(default_factory=dict)

    def report(self) -> dict:
        """JSON-safe report; extended-precision values as decimal strings."""
        def s(v, digits=20):
            return mp.nstr(v, digits) if isinstance(v, mp.mpf) else v
        return {
            "c0": self.c0,
            "c1": s(self.c1),
            "c2": s(self.c2),
            "k_star": self.k_star,
            "v_kstar_bound": s(self.v_kstar_bound),
            "psi1": s(self.psi1),
            "psi2": s(self.psi2),
            "gamma": self.gamma,
            "rho": self.rho,
            "lambda1": self.lambda1,
            "sigman": self.sigman,
            "b_bound": self.b_bound,
            "y_star_norm": self.y_star_norm,
            "alpha0": self.alpha0,
            "beta0": self.beta0,
            "c_mix": self.c_mix,
            "e_z0_sq": self.e_z0_sq,
            "v0": self.v0,
            "intermediates": {k: s(v) for k, v in self.intermediates.items()},
        }

    def report_json(self, **kwargs) -> str:
        return json.dumps(self.report(), indent=2, **kwargs)


def rate_constants(spec: SpectralSummary, schedule: StepSchedule, mix,
                   c0: float, k_star: int, e_z0_sq: float, v0: float,
                   c_mix: float) -> RateConstants:
    """Assemble the full constant set for one experiment."""
    alpha0 = schedule.alpha.value(0)
    beta0 = schedule.beta.value(0)
    c1, c2 = compute_c1_c2(spec, c0, alpha0, e_z0_sq)
    vb = transient_bound(spec, schedule, k_star, v0)
    psi1, psi2 = psi_constants(spec, schedule, k_star, c1, c2, c_mix)
    return RateConstants(
        c0=c0, c1=c1, c2=c2, k_star=k_star, v_kstar_bound=vb,
        psi1=psi1, psi2=psi2,
        gamma=spec.gamma, rho=spec.rho, lambda1=spec.lambda1,
        sigman=spec.sigman, b_bound=spec.b_bound,
        y_star_norm=spec.y_star_norm,
        alpha0=alpha0, beta0=beta0, c_mix=c_mix,
        e_z0_sq=e_z0_sq, v0=v0,
        intermediates=gamma_intermediates(spec, c0, alpha0, e_z0_sq),
    )


def theorem_bound_curve(constants: RateConstants, schedule: StepSchedule,
                        k_range, v_kstar=None) -> list:
    """Right-hand side of the full rate bound at each k in range.

    Requires the (2/3, 1) polynomial pair.  ``v_kstar`` defaults to the
    transient bound.
    """
    a = schedule.alpha.exponent
    b = schedule.beta.exponent
    if abs(a - 2.0 / 3.0) > 1e-9 or abs(b - 1.0) > 1e-9:
        raise ValueError("bound curve is stated for the (2/3, 1) exponent pair")
    with mp.workdps(_DPS):
        ks_v = _mpf(v_kstar) if v_kstar is not None else constants.v_kstar_bound
        kstar = _mpf(constants.k_star)
        a0 = _mpf(constants.alpha0)
        b0 = _mpf(constants.beta0)
        g = _mpf(constants.gamma)
        r = _mpf(constants.rho)
        l1 = _mpf(constants.lambda1)
        var_coeff = 8 * constants.c1 * (1 + a0) ** 2 * b0**3 / (r * g**2 * l1**2 * a0**2) \
            + 3 * constants.c2 * a0 * b0 / 2
        out = []
        for k in k_range:
            kp = _mpf(int(k)) + 1
            val = kstar * ks_v / kp \
                + var_coeff / kp ** mp.mpf("2/3") \
                + constants.c2 * b0**2 * (1 + mp.log(kp)) / kp \
                + 3 * _mpf(constants.c_mix) * constants.c2 * b0 * mp.log(kp) ** 2 / kp
            out.append(val)
        return out


def psi_bound_curve(psi1, psi2, v0, k_range) -> list:
    """Simplified bias + variance bound psi1*v0/k + psi2/k^(2/3)."""
    with mp.workdps(_DPS):
        p1 = _mpf(psi1)
        p2 = _mpf(psi2)
        v0 = _mpf(v0)
        return [p1 * v0 / _mpf(int(k)) + p2 / _mpf(int(k)) ** mp.mpf("2/3")
                for k in k_range]


@dataclass
class RecursionCheck:
    pass_fraction: float
    n_pairs: int
    failures: list


def empirical_recursion_check(curves, c1, c2, schedule: StepSchedule, mix,
                              spec: SpectralSummary, k_min: int = 0,
                              se_mult: float = 3.0) -> RecursionCheck:
    """Test the one-step Lyapunov recursion on consecutive-k Monte Carlo pairs.

    ``curves`` must carry per-trajectory Lyapunov values (keep_trajectories).
    The slack is ``se_mult`` paired standard errors of the per-trajectory
    one-step differences, since the recursion bounds expectations rather than
    sample means.
    """
    if curves.per_traj_v is None:
        raise ValueError("curves must be computed with keep_trajectories=True")
    cks = curves.checkpoints
    pairs = [i for i in range(len(cks) - 1)
             if cks[i + 1] == cks[i] + 1 and cks[i] >= k_min]
    if not pairs:
        raise ValueError("no consecutive checkpoint pairs at or past k_min")
    n_traj = curves.per_traj_v.shape[0]
    failures = []
    with mp.workdps(_DPS):
        c1 = _mpf(c1)
        c2 = _mpf(c2)
        g = _mpf(spec.gamma)
        r = _mpf(spec.rho)
        l1 = _mpf(spec.lambda1)
        a0 = _mpf(schedule.alpha.value(0))
        n_pass = 0
        for i in pairs:
            k = int(cks[i])
            a_k, b_k = schedule.step_values(k)
            tau = int(mix.tau_of(a_k))
            a_lag = schedule.alpha.value(k - tau)
            contr = 1.0 - spec.rho * b_k
            d = curves.per_traj_v[:, i + 1] - contr * curves.per_traj_v[:, i]
            mean_d = float(np.mean(d))
            se_d = float(np.std(d, ddof=1) / np.sqrt(n_traj)) if n_traj > 1 else 0.0
            rhs = 2 * c1 * (1 + a0) ** 2 * _mpf(b_k) ** 3 \
                / (r * g**2 * l1**2 * _mpf(a_k) ** 2) \
                + c2 * (_mpf(tau) * _mpf(a_lag) * _mpf(b_k)
                        + _mpf(b_k) ** 2 + _mpf(a_k) * _mpf(b_k))
            if _mpf(mean_d) <= rhs + _mpf(se_mult) * _mpf(se_d):
                n_pass += 1
            else:
                failures.append({"k": k, "mean_diff": mean_d, "se": se_d,
                                 "rhs": float(rhs) if rhs < mp.mpf("1e300") else np.inf})
    return RecursionCheck(pass_fraction=n_pass / len(pairs),
                          n_pairs=len(pairs), failures=failures)
