"""Spectral estimators, renewal theory and mass statistics."""

import numpy as np
import pytest

from mesopop import (Exponential, PopulationParams, Sigmoid, firing_rate,
                     isi_density, mass_stats, psd_bartlett, renewal_psd)
from mesopop.analysis import isi_moments
from mesopop.traces import ActivityTrace

from conftest import demo_exp_params


def _trace(A, dt=1e-3):
    A = np.asarray(A, dtype=float)
    return ActivityTrace(dt=dt, A=A, Abar=A.copy(), mass=np.ones_like(A),
                         p_lambda=np.zeros_like(A))


def test_constant_trace_has_no_ac_power():
    spec = psd_bartlett(_trace(np.full(10_000, 37.0)), 1.0)
    assert np.all(spec.power[1:] < 1e-20)
    assert spec.n_segments == 10


def test_white_binomial_noise_level():
    # iid counts per bin: flat spectrum at r(1 - r*dt)/N for f << 1/dt
    N, r, dt = 200, 40.0, 1e-3
    rng = np.random.default_rng(0)
    counts = rng.binomial(N, r * dt, size=200_000)
    spec = psd_bartlett(_trace(counts / (N * dt), dt), 1.0)
    sel = (spec.freqs >= 1) & (spec.freqs <= 400)
    level = spec.power[sel].mean()
    expected = r * (1 - r * dt) / N
    assert level == pytest.approx(expected, rel=0.02)


def test_psd_validation():
    with pytest.raises(ValueError):
        psd_bartlett(_trace(np.ones(100)), 1.0)  # too short
    with pytest.raises(ValueError):
        psd_bartlett(_trace(np.ones(10_000)), 1.00037)  # not a dt multiple


def test_renewal_constant_hazard_flat():
    c = 13.0
    p = PopulationParams(N=100, tau_m=0.02, mu=20.0, f=Sigmoid(c, c, 10.0, 1.0))
    freqs = np.linspace(0.5, 300.0, 64)
    spec = renewal_psd(p, freqs)
    assert np.all(np.abs(spec.power * p.N / c - 1.0) < 1e-4)
    assert firing_rate(p) == pytest.approx(c, rel=1e-6)
    t = np.linspace(0, 0.5, 2001)
    dens = isi_density(p, t)
    assert np.allclose(dens, c * np.exp(-c * t), rtol=1e-4)


def test_renewal_low_frequency_limit_is_rate_cv2(fig_params):
    # f -> 0 limit of the renewal formula equals r * CV^2 / N
    r = firing_rate(fig_params)
    _, cv = isi_moments(fig_params)
    spec = renewal_psd(fig_params, np.array([0.1, 0.2]))
    expected = r * cv ** 2 / fig_params.N
    assert spec.power[0] == pytest.approx(expected, rel=1e-3)


def test_renewal_high_frequency_plateau(fig_params):
    # Riemann-Lebesgue: the ISI transform vanishes, power -> r/N
    r = firing_rate(fig_params)
    spec = renewal_psd(fig_params, np.array([2000.0, 4000.0]))
    assert np.all(np.abs(spec.power * fig_params.N / r - 1.0) < 0.02)


def test_renewal_requires_noninteracting_constant_drive():
    p = PopulationParams(N=10, tau_m=0.02, mu=20.0, f=Exponential(), J=0.1)
    with pytest.raises(ValueError):
        renewal_psd(p, np.array([1.0]))
    with pytest.raises(ValueError):
        renewal_psd(demo_exp_params(), np.array([0.0, 1.0]))  # f must be > 0


def test_isi_density_normalization(fig_params):
    t = np.linspace(0.0, 0.2, 20_001)
    dens = isi_density(fig_params, t)
    assert np.all(dens >= 0)
    assert np.trapezoid(dens, t) == pytest.approx(1.0, abs=1e-6)


def test_firing_rate_increases_with_drive():
    rates = []
    for mu in (17.0, 20.0, 23.0):
        p = PopulationParams(N=100, tau_m=0.02, mu=mu, f=Exponential())
        rates.append(firing_rate(p))
    assert rates[0] < rates[1] < rates[2]


def test_divergent_integral_guard():
    # hazard decaying to ~0 with bounded drive: survival never vanishes
    p = PopulationParams(N=10, tau_m=0.02, mu=-50.0,
                         f=Exponential(c=1e-6, theta=10.0, delta_u=1.0))
    with pytest.raises(ValueError):
        firing_rate(p)


def test_parseval_consistency(fig_params):
    from mesopop import FULL, meso_simulate
    tr = meso_simulate(fig_params, FULL, 20.0, 1e-3, seed=0)
    k0 = 5000
    win = ActivityTrace(dt=1e-3, A=tr.A[k0:], Abar=tr.Abar[k0:],
                        mass=tr.mass[k0:], p_lambda=tr.p_lambda[k0:])
    spec = psd_bartlett(win, 1.0)
    L = int(round(1.0 / 1e-3))
    segs = win.A[: (len(win) // L) * L].reshape(-1, L)
    var = ((segs - segs.mean(axis=1, keepdims=True)) ** 2).mean()
    df = spec.freqs[1] - spec.freqs[0]
    # rfft one-sided: double the interior bins, DC excluded
    total = (2 * spec.power[1:-1].sum() + spec.power[-1]) * df
    assert total == pytest.approx(var, rel=0.05)


def test_mass_stats_window_and_extinction():
    n = 1000
    mass = np.ones(n)
    A = np.full(n, 40.0)
    mass[600:] = 0.0
    A[600:] = 0.0
    tr = ActivityTrace(dt=0.01, A=A, Abar=A, mass=mass,
                       p_lambda=np.zeros(n))
    st = mass_stats(tr, 0.0, 5.0)
    assert st["mean"] == 1.0 and st["extinction_time"] is None
    st = mass_stats(tr)
    assert st["extinction_time"] == pytest.approx(6.0)
    assert st["min"] == 0.0
    with pytest.raises(ValueError):
        mass_stats(tr, 99.0, 100.0)
