"""Extended-precision rate constants against an independent big-float oracle."""

import json

import mpmath as mp
import pytest

from ttssa import (StepSchedule, compute_c1_c2, psi_bound_curve, psi_constants,
                   rate_constants, theorem_bound_curve, transient_bound)
from ttssa.constants import empirical_recursion_check, gamma_intermediates
from ttssa.markov import ConstantMixing

from oracles import decimal_c1_c2


def _rel_err(mp_val, dec_val):
    with mp.workdps(60):
        return abs(mp_val / mp.mpf(str(dec_val)) - 1)


@pytest.mark.parametrize("c0", [15.0, 546.0, 300.0])
def test_c1_c2_match_decimal_oracle(spec1, c0):
    c1, c2 = compute_c1_c2(spec1, c0, alpha0=8.2, e_z0_sq=6.408)
    d1, d2 = decimal_c1_c2(spec1.gamma, spec1.rho, spec1.lambda1,
                           spec1.b_bound, spec1.y_star_norm,
                           c0, 8.2, 6.408)
    assert _rel_err(c1, d1) < 1e-10
    assert _rel_err(c2, d2) < 1e-10
    # these constants are astronomically large yet finite in extended precision
    assert mp.isfinite(c1) and c1 > mp.mpf("1e100")
    assert c2 > c1  # c2 contains c1 with a positive coefficient > 1


def test_c1_monotone_in_inputs(spec1):
    c1_lo, _ = compute_c1_c2(spec1, 10.0, 8.2, 1.0)
    c1_hi, _ = compute_c1_c2(spec1, 11.0, 8.2, 1.0)
    assert c1_hi > c1_lo
    c1_z, _ = compute_c1_c2(spec1, 10.0, 8.2, 2.0)
    assert c1_z > c1_lo


def test_intermediates_compose(spec1):
    c0 = 42.0
    inter = gamma_intermediates(spec1, c0, 8.2, 6.408)
    c1, _ = compute_c1_c2(spec1, c0, 8.2, 6.408)
    with mp.workdps(60):
        assert abs(inter["prefactor"] * mp.e ** inter["exponent"] / c1 - 1) < mp.mpf("1e-40")


def test_transient_bound_kstar_zero(spec1, sched_a1):
    """With k_star = 0 the growth factor is 1 and the bound is elementary."""
    v0 = 2.0
    out = transient_bound(spec1, sched_a1, 0, v0)
    a0, b0 = 8.2, 3.5
    expect = (8 * (b0 + spec1.gamma * spec1.rho * a0) * v0
              / (b0 * spec1.lambda1**2)
              + 25 * (spec1.b_bound + spec1.y_star_norm) ** 2
              / spec1.lambda1**6)
    assert float(out) == pytest.approx(expect, rel=1e-12)


def test_transient_bound_monotone_in_kstar(spec1, sched_a1):
    vals = [transient_bound(spec1, sched_a1, k, 1.0) for k in (0, 10, 40)]
    assert vals[0] < vals[1] < vals[2]


def test_psi_bound_curve_example():
    # 10*1/1000 + 8/1000^(2/3) = 0.01 + 0.08
    out = psi_bound_curve(10.0, 8.0, 1.0, [1000])
    assert float(out[0]) == pytest.approx(0.09, rel=1e-12)


def test_psi_constants_positive(spec1, sched_a1):
    c1, c2 = compute_c1_c2(spec1, 546.0, 8.2, 6.408)
    p1_, p2_ = psi_constants(spec1, sched_a1, 40, c1, c2, c_mix=2.8)
    assert p1_ > 0 and p2_ > 0
    assert mp.isfinite(p1_) and mp.isfinite(p2_)


def test_theorem_bound_curve_decays(spec1, sched_a1, mix1):
    rc = rate_constants(spec1, sched_a1, mix1, c0=546.0, k_star=40,
                        e_z0_sq=6.408, v0=14.18, c_mix=mix1.c_geometric)
    ks = [100, 1000, 10000, 100000]
    curve = theorem_bound_curve(rc, sched_a1, ks)
    assert all(curve[i] > curve[i + 1] > 0 for i in range(len(ks) - 1))
    # asymptotically the k^(-2/3) variance term dominates: the drop over two
    # decades is bounded by the bias rate and below by the variance rate
    ratio = curve[1] / curve[3]
    assert mp.mpf(10) ** (4.0 / 3.0) <= ratio <= mp.mpf(10) ** 2


def test_theorem_bound_requires_canonical_exponents(spec1, sched_a1, mix1):
    rc = rate_constants(spec1, sched_a1, mix1, c0=546.0, k_star=40,
                        e_z0_sq=6.408, v0=14.18, c_mix=mix1.c_geometric)
    other = StepSchedule.polynomial(8.2, 0.75, 3.5, 1.0)
    with pytest.raises(ValueError):
        theorem_bound_curve(rc, other, [100])


def test_report_is_json_safe(spec1, sched_a1, mix1):
    rc = rate_constants(spec1, sched_a1, mix1, c0=546.0, k_star=40,
                        e_z0_sq=6.408, v0=14.18, c_mix=mix1.c_geometric)
    doc = json.loads(rc.report_json())
    assert isinstance(doc["c1"], str)          # decimal string, not a float
    assert doc["k_star"] == 40
    assert float(doc["gamma"]) == pytest.approx(0.25)


def test_recursion_check_input_validation(p1, table1, chain2, sched_a1, spec1):
    from ttssa import monte_carlo_mse

    no_traj = monte_carlo_mse(p1, table1, chain2, sched_a1, [0.0], [0.0],
                              n_traj=2, base_seed=0, checkpoints=[10, 11],
                              spec=spec1)
    with pytest.raises(ValueError):
        empirical_recursion_check(no_traj, 1.0, 1.0, sched_a1,
                                  ConstantMixing(0), spec1)
    sparse = monte_carlo_mse(p1, table1, chain2, sched_a1, [0.0], [0.0],
                             n_traj=2, base_seed=0, checkpoints=[10, 20],
                             spec=spec1, keep_trajectories=True)
    with pytest.raises(ValueError):
        empirical_recursion_check(sparse, 1.0, 1.0, sched_a1,
                                  ConstantMixing(0), spec1)
