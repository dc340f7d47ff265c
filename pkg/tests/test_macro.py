"""Deterministic mean-field solver: conservation, rates, convergence."""

import numpy as np
import pytest

from mesopop import (Exponential, NonConvergence, PopulationParams, Sigmoid,
                     FULL, macro_solve, macro_stationary_rate, meso_simulate)

from conftest import demo_exp_params


def test_constant_hazard_stationary_activity():
    c = 10.0
    p = PopulationParams(N=100, tau_m=0.02, mu=20.0, f=Sigmoid(c, c, 10.0, 1.0))
    sol = macro_solve(p, [(0.0, 1.0)], 1.0, 1e-4)
    # Poisson limit: every cell fires at rate c regardless of history
    assert sol.A[-1] == pytest.approx(c, rel=1e-6)
    assert np.abs(sol.mass_residual).max() < 1e-9


def test_mass_residual_small_every_step(fig_params):
    sol = macro_solve(fig_params, [(0.0, 1.0)], 0.5, 1e-4)
    assert np.abs(sol.mass_residual).max() < 1e-6


def test_residual_small_for_spread_initial_measure(fig_params):
    nu0 = [(-5.0, 0.25), (0.0, 0.25), (5.0, 0.25), (12.0, 0.25)]
    sol = macro_solve(fig_params, nu0, 0.5, 1e-4)
    assert np.abs(sol.mass_residual).max() < 1e-6


def test_weight_sum_rejected():
    with pytest.raises(ValueError):
        macro_solve(demo_exp_params(), [(0.0, 0.7), (1.0, 0.5)], 0.1, 1e-4)
    with pytest.raises(ValueError):
        macro_solve(demo_exp_params(), [(0.0, -0.1)], 0.1, 1e-4)


def test_damped_transient_then_stationary(fig_params, renewal_rate_fig):
    sol = macro_solve(fig_params, [(0.0, 1.0)], 1.0, 1e-4)
    a = sol.A
    # synchronized start rings: an early peak well above the fixed point,
    # then relaxation towards it
    peak = a[: int(0.05 / 1e-4)].max()
    assert peak > 1.5 * renewal_rate_fig
    assert a[-1] == pytest.approx(renewal_rate_fig, rel=0.01)
    # damping: successive extrema shrink
    assert np.abs(a[int(0.3 / 1e-4):] - a[-1]).max() < np.abs(
        a[: int(0.1 / 1e-4)] - a[-1]).max()


def test_stationary_rate_constant_hazard():
    c = 7.0
    p = PopulationParams(N=100, tau_m=0.02, mu=20.0, f=Sigmoid(c, c, 10.0, 1.0))
    assert macro_stationary_rate(p) == pytest.approx(c, rel=1e-4)


def test_stationary_rate_matches_renewal(fig_params, renewal_rate_fig):
    rate = macro_stationary_rate(fig_params, dt=1e-4)
    assert rate == pytest.approx(renewal_rate_fig, rel=0.01)


def test_stationary_rate_increases_with_drive():
    rates = []
    for mu in (16.0, 20.0, 24.0):
        p = PopulationParams(N=100, tau_m=0.02, mu=mu, f=Exponential())
        rates.append(macro_stationary_rate(p, dt=1e-4))
    assert rates[0] < rates[1] < rates[2]


def test_nonconvergence_carries_last_iterate():
    # runaway excitation: strong positive feedback never settles at this
    # tolerance
    p = PopulationParams(N=100, tau_m=0.02, mu=20.0, f=Exponential(), J=5.0)
    with pytest.raises(NonConvergence) as exc:
        macro_stationary_rate(p, tol=1e-14, dt=2e-4)
    assert np.isfinite(exc.value.last_rate)


def test_convergence_order_in_dt(fig_params):
    ref = macro_solve(fig_params, [(0.0, 1.0)], 0.2, 2.5e-5)
    errs = []
    for dt in (4e-4, 2e-4, 1e-4):
        sol = macro_solve(fig_params, [(0.0, 1.0)], 0.2, dt)
        stride = int(round(dt / 2.5e-5))
        err = np.max(np.abs(sol.A[1:] - ref.A[stride::stride][: sol.A.size - 1]))
        errs.append(err)
    assert errs[1] <= 0.6 * errs[0]
    assert errs[2] <= 0.6 * errs[1]


def test_truncated_solver_matches_full(fig_params):
    full = macro_solve(fig_params, [(0.0, 1.0)], 0.6, 1e-4)
    trunc = macro_solve(fig_params, [(0.0, 1.0)], 0.6, 1e-4,
                        truncate_history=True)
    rel = np.abs(trunc.A[1:] - full.A[1:]) / full.A.max()
    assert rel.max() < 1e-3


def test_meso_ensemble_mean_tracks_macro(fig_params):
    # finite-size ensemble mean at N=2000 vs the deterministic solution
    # over the synchronized transient, within 5% of the peak; fine dt keeps
    # the Euler-vs-exact-flow shift of the sharp peak below the band
    p = demo_exp_params(N=2000)
    dt = 2.5e-4
    sol = macro_solve(p, [(0.0, 1.0)], 0.3, dt)
    acc = np.zeros(sol.A.size)
    n_seeds = 200
    for s in range(n_seeds):
        tr = meso_simulate(p, FULL, 0.3, dt, seed=s)
        acc += tr.A[: sol.A.size]
    mean_a = acc / n_seeds
    peak = sol.A.max()
    sup = np.max(np.abs(mean_a[1:] - sol.A[1:]))
    assert sup < 0.05 * peak, (sup, peak)
