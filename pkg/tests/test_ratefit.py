"""Power-law slope fitting and figure rendering."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ttssa import InsufficientData, NotPositive, fit_rate, fit_rate_csv
from ttssa.plots import plot_epoch_log, plot_mse_curves, plot_sweep
from ttssa.restart import EpochLog, EpochRow


def test_exact_power_laws():
    ks = np.arange(1, 200)
    fit = fit_rate(ks, 5.0 * ks ** (-2.0 / 3.0))
    assert fit.slope == pytest.approx(-2.0 / 3.0, abs=1e-9)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)
    fit = fit_rate(ks, 3.0 / ks)
    assert fit.slope == pytest.approx(-1.0, abs=1e-9)


def test_window_filters_points():
    ks = np.arange(1, 1000)
    vals = 2.0 * ks ** -0.5
    vals[:10] = 100.0  # transient junk excluded by the window
    fit = fit_rate(ks, vals, window=(50, 900))
    assert fit.slope == pytest.approx(-0.5, abs=1e-9)
    assert fit.window[0] >= 50 and fit.window[1] <= 900


def test_fit_errors():
    with pytest.raises(InsufficientData):
        fit_rate([1, 2, 3], [1.0, 0.5, 0.3])
    ks = np.arange(1, 30)
    vals = 1.0 / ks
    vals[5] = 0.0
    with pytest.raises(NotPositive):
        fit_rate(ks, vals)


@settings(max_examples=40, deadline=None)
@given(scale=st.floats(1e-6, 1e6), slope=st.floats(-2.0, -0.1))
def test_scaling_changes_intercept_only(scale, slope):
    ks = np.geomspace(1, 1e4, 40)
    base = fit_rate(ks, ks**slope)
    scaled = fit_rate(ks, scale * ks**slope)
    assert scaled.slope == pytest.approx(base.slope, abs=1e-12)
    assert scaled.intercept == pytest.approx(base.intercept + np.log(scale),
                                             abs=1e-9)


def test_fit_rate_csv_round_trip(p1, table1, chain2, sched_a1, spec1, tmp_path):
    from ttssa import monte_carlo_mse

    curves = monte_carlo_mse(p1, table1, chain2, sched_a1, [0.0], [0.0],
                             n_traj=3, base_seed=1,
                             checkpoints=np.arange(0, 400, 10), spec=spec1)
    path = tmp_path / "curves.csv"
    curves.write_csv(path)
    direct = fit_rate(curves.checkpoints, curves.lyapunov, window=(10, 400))
    via_csv = fit_rate_csv(path, window=(10, 400))
    assert via_csv.slope == direct.slope
    via_x = fit_rate_csv(path, window=(10, 400), column="mse_x")
    assert via_x.slope == fit_rate(curves.checkpoints, curves.mse_x,
                                   window=(10, 400)).slope
    with pytest.raises(InsufficientData):
        fit_rate_csv(path, column="no_such_column")


def test_plots_render_files(p1, table1, chain2, sched_a1, spec1, tmp_path):
    from ttssa import monte_carlo_mse

    curves = monte_carlo_mse(p1, table1, chain2, sched_a1, [0.0], [0.0],
                             n_traj=3, base_seed=1,
                             checkpoints=np.arange(0, 200, 5), spec=spec1)
    fit = fit_rate(curves.checkpoints, curves.lyapunov, window=(5, 200))
    f1 = plot_mse_curves(curves, tmp_path / "curves.png", fit=fit)
    log = EpochLog(rows=[
        EpochRow(0, 0, 0, 4.0, 0.0, 4.0),
        EpochRow(1, 40, 40, 1.7, 0.1, 2.0),
        EpochRow(2, 40, 80, 0.8, 0.05, 1.0),
    ])
    f2 = plot_epoch_log(log, tmp_path / "epochs.png")
    f3 = plot_sweep([(0.6, fit), (2.0 / 3.0, fit)], tmp_path / "sweep.png")
    import os
    for f in (f1, f2, f3):
        assert os.path.getsize(f) > 1000
