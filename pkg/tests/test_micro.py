"""Microscopic LIF network against renewal theory and trivial limits."""

import numpy as np
import pytest
from scipy import stats

from mesopop import (Exponential, PopulationParams, Sigmoid,
                     micro_simulate, psd_bartlett)
from mesopop.analysis import _isi_kernel
from mesopop.traces import ActivityTrace

from conftest import demo_exp_params


def test_all_spike_initialization():
    p = demo_exp_params()
    tr, raster = micro_simulate(p, 0.1, 1e-3, seed=0)
    assert tr.A[0] == 1.0 / 1e-3
    t0_spikes = raster[raster[:, 0] == 0.0]
    assert t0_spikes.shape[0] == p.N
    assert set(t0_spikes[:, 1].astype(int)) == set(range(p.N))


def test_vanishing_hazard_relaxes_to_drive():
    p = PopulationParams(N=50, tau_m=0.02, mu=20.0,
                         f=Exponential(c=1e-30, theta=10.0, delta_u=1.0))
    tr, raster = micro_simulate(p, 0.2, 1e-4, seed=1)
    assert raster[raster[:, 0] > 0].shape[0] == 0  # no spikes after t=0
    assert np.all(tr.A[1:] == 0.0)


def test_constant_hazard_poisson_rate():
    c = 25.0
    p = PopulationParams(N=200, tau_m=0.02, mu=20.0, f=Sigmoid(c, c, 10.0, 1.0))
    tr, _ = micro_simulate(p, 20.0, 1e-3, seed=2)
    mean_rate = tr.A[1000:].mean()
    # Poisson counts: relative MC error ~ 1/sqrt(N*r*T) ~ 0.3%
    assert mean_rate == pytest.approx(c, rel=0.02)


def test_isi_distribution_matches_renewal_density(fig_params):
    # KS test of simulated single-neuron ISIs against the quadrature CDF;
    # the bin quantization of spike times contributes ~density*dt/2 to the
    # statistic, so run at fine dt to keep it below the 1% critical value
    dt = 5e-5
    tr, raster = micro_simulate(fig_params, 2.5, dt, seed=3)
    t_sp, ids = raster[:, 0], raster[:, 1].astype(int)
    sel = t_sp > 1.0
    isis = []
    for i in range(fig_params.N):
        ts = t_sp[sel][ids[sel] == i]
        isis.append(np.diff(ts))
    isis = np.concatenate(isis)
    assert isis.size >= 10_000
    isis = isis[:10_000]

    t, lam, S = _isi_kernel(fig_params)
    dens = lam * S
    cdf_grid = np.concatenate([[0.0], np.cumsum(
        0.5 * (dens[1:] + dens[:-1]) * np.diff(t))])
    cdf_grid /= cdf_grid[-1]

    def cdf(x):
        return np.interp(x, t, cdf_grid)

    ks = stats.kstest(isis, cdf)
    critical_1pct = 1.628 / np.sqrt(isis.size)
    assert ks.statistic < critical_1pct, (ks.statistic, critical_1pct)


def test_stationary_rate_matches_renewal(fig_params, renewal_rate_fig):
    tr, _ = micro_simulate(fig_params, 50.0, 2.5e-4, seed=4)
    rate = tr.A[int(5.0 / 2.5e-4):].mean()
    assert rate == pytest.approx(renewal_rate_fig, rel=0.03)


def test_substream_relabeling_preserves_trace():
    p = demo_exp_params(N=64)
    perm = np.random.default_rng(0).permutation(64)
    a, ra = micro_simulate(p, 2.0, 1e-3, seed=5)
    b, rb = micro_simulate(p, 2.0, 1e-3, seed=5, substream_perm=perm)
    assert np.array_equal(a.A, b.A)  # counts invariant
    assert not np.array_equal(ra, rb)  # raster relabeled


def test_psd_plateau_halves_when_N_doubles(fig_params):
    def plateau(N, seed):
        p = demo_exp_params(N=N)
        tr, _ = micro_simulate(p, 60.0, 1e-3, seed=seed)
        k0 = 10_000
        win = ActivityTrace(dt=1e-3, A=tr.A[k0:], Abar=tr.Abar[k0:],
                            mass=tr.mass[k0:], p_lambda=tr.p_lambda[k0:])
        spec = psd_bartlett(win, 1.0)
        sel = (spec.freqs >= 150.0) & (spec.freqs <= 450.0)
        return spec.power[sel].mean()

    p200 = plateau(200, seed=6)
    p400 = plateau(400, seed=7)
    assert p200 / p400 == pytest.approx(2.0, rel=0.10)


def test_rejects_extended_dynamics():
    p = PopulationParams(N=10, tau_m=0.02, mu=20.0, f=Exponential(),
                         delta_abs=1e-3)
    with pytest.raises(ValueError):
        micro_simulate(p, 1.0, 1e-3, seed=0)


def test_custom_initial_potentials():
    p = demo_exp_params(N=10)
    init = np.linspace(0.0, 15.0, 10)
    tr, raster = micro_simulate(p, 0.05, 1e-3, seed=8, init=init)
    assert tr.A[0] == 0.0  # no synchronized spike recorded
    with pytest.raises(ValueError):
        micro_simulate(p, 0.05, 1e-3, seed=8, init=np.zeros(3))
