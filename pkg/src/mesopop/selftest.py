"""Reduced-scale invariant suite behind the `selftest` CLI recipe.

Each check raises AssertionError on failure; the runner prints one
PASS/FAIL line per check and reports the failure count.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import stats

from .core import (Exponential, PopulationParams, Sigmoid, flow_free, hazard,
                   survival_decrement)
from .macro import macro_solve
from .meso import FULL, NAIVE, LambdaMode, meso_init, meso_simulate, meso_step
from .micro import micro_simulate
from .pdmp import ParticleMeasure, pdmp_evolve, pdmp_simulate
from .analysis import mass_stats, renewal_psd

FIG_PARAMS = PopulationParams(N=200, tau_m=0.02, mu=20.0,
                              f=Exponential(c=10.0, theta=10.0, delta_u=1.0))


def check_flow_semigroup():
    rng = np.random.default_rng(0)
    for _ in range(200):
        u = rng.uniform(-50, 50)
        mu = rng.uniform(-30, 30)
        tau = rng.uniform(1e-3, 0.1)
        s = rng.uniform(0, 0.2)
        t = rng.uniform(0, 0.2)
        a = flow_free(flow_free(u, s, mu, tau), t, mu, tau)
        b = flow_free(u, s + t, mu, tau)
        assert abs(a - b) <= 1e-12 * max(1.0, abs(b)), (u, mu, tau, s, t)
    assert flow_free(13.0, 0.0, 20.0, 0.02) == 13.0
    assert abs(flow_free(20.0, 0.37, 20.0, 0.02) - 20.0) < 1e-12


def check_pfire_values():
    assert survival_decrement(0.0, 0.0, 1e-3) == 0.0
    assert survival_decrement(10.0, 10.0, 5e-4) == 0.005  # linear branch
    expected = -math.expm1(-0.1)
    assert abs(survival_decrement(100.0, 100.0, 1e-3) - expected) < 1e-15
    # threshold boundary: exactly 0.01 stays linear
    assert survival_decrement(10.0, 10.0, 1e-3) == 0.01


def check_pfire_chain_convergence():
    # constant hazard in the linear branch (lam*dt <= 0.01), where the
    # chained product has an O(dt) bias; the exponential branch is exact
    lam, T = 10.0, 0.3
    target = math.exp(-lam * T)
    errs = []
    for n in (300, 600, 1200):
        dt = T / n
        s = 1.0
        for _ in range(n):
            s *= 1.0 - survival_decrement(lam, lam, dt)
        errs.append(abs(s - target))
    for e0, e1 in zip(errs, errs[1:]):
        assert e1 <= 0.6 * e0, errs  # order >= 1 in dt


def check_sigmoid_bounds():
    f = Sigmoid(f_min=0.5, f_max=80.0, theta=5.0, slope=2.0)
    rng = np.random.default_rng(1)
    u = rng.uniform(-1e3, 1e3, size=1_000_000)
    vals = hazard(u, f)
    assert np.all(vals >= f.f_min) and np.all(vals <= f.f_max)
    us = np.sort(u[:10_000])
    assert np.all(np.diff(hazard(us, f)) >= 0)


def check_meso_init():
    st = meso_init(FIG_PARAMS, 1e-3)
    assert st.T_bins == 101, st.T_bins
    assert st.mass() == 1.0
    assert st.n[-1] == 1.0 and st.S[-1] == 1.0 and st.u[-1] == 0.0


def check_meso_step_invariants():
    rng = np.random.default_rng(3)
    st = meso_init(FIG_PARAMS, 1e-3)
    for k in range(400):
        n_pre = st.n.copy()
        mass_direct = float(np.dot(st.S[1:], st.n[1:]) + st.x)
        n_new, abar, p_lam = meso_step(st, 20.0, FULL, rng)
        # sweep bookkeeping equals direct summation
        assert abs(st.mass_start - mass_direct) <= 1e-12 * max(1.0, mass_direct)
        # clamped expected fraction
        assert 0.0 <= abar * st.dt <= 1.0
        assert 0 <= n_new <= 1 and round(n_new * FIG_PARAMS.N, 6) == int(
            round(n_new * FIG_PARAMS.N))
        # shift: n[r] = old n[r+1] except the fresh draw
        assert np.array_equal(st.n[:-1], n_pre[1:])


def check_meso_extinct_absorbing():
    p = PopulationParams(N=50, tau_m=0.02, mu=20.0, f=Exponential(10, 10, 1))
    st = meso_init(p, 1e-3)
    st.n[:] = 0.0
    st.scal[0] = 0.0  # x
    st.scal[1] = 0.0  # z
    rng = np.random.default_rng(0)
    for _ in range(100):
        n_new, abar, _ = meso_step(st, 20.0, NAIVE, rng)
        assert n_new == 0.0 and abar == 0.0


def check_meso_determinism():
    a = meso_simulate(FIG_PARAMS, FULL, 1.0, 1e-3, seed=11)
    b = meso_simulate(FIG_PARAMS, FULL, 1.0, 1e-3, seed=11)
    assert np.array_equal(a.A, b.A) and np.array_equal(a.mass, b.mass)


def check_fixed_mode_hand_value():
    p = PopulationParams(N=50, tau_m=0.02, mu=20.0, f=Exponential(10, 10, 1))
    st = meso_init(p, 1e-3)
    st.n[:] = 0.0
    st.scal[0] = 0.0
    st.scal[1] = 0.0
    _, abar, p_lam = meso_step(st, 20.0, LambdaMode.fixed(277.0),
                               np.random.default_rng(0))
    expected = -math.expm1(-277.0 * 1e-3)
    assert abs(abar * 1e-3 - expected) < 1e-12
    assert abs(p_lam - expected) < 1e-12


def check_pdmp_thinning_exponential():
    c = 20.0
    p = PopulationParams(N=100, tau_m=0.02, mu=20.0, f=Sigmoid(c, c, 10.0, 1.0))
    res = pdmp_simulate(ParticleMeasure.delta(0.0, 1.0), p, Lambda=c,
                        horizon=5.2, seed=2024)
    gaps = np.diff(res.jump_times)
    assert gaps.size >= 10_000, gaps.size
    ks = stats.kstest(gaps[:10_000], "expon", args=(0, 1.0 / (p.N * c)))
    assert ks.pvalue > 0.01, (ks.statistic, ks.pvalue)


def check_pdmp_mass_derivative():
    f = Sigmoid()
    rho = ParticleMeasure.from_atoms([(0.0, 0.4), (8.0, 0.3), (18.0, 0.2)])
    h = 1e-7
    fd = (pdmp_evolve(rho, h, f, 20.0, 0.02).mass() - rho.mass()) / h
    exact = -rho.integrate(f)
    assert abs(fd - exact) <= 1e-4 * abs(exact), (fd, exact)


def check_renewal_poisson_flat():
    c = 13.0
    p = PopulationParams(N=100, tau_m=0.02, mu=20.0, f=Sigmoid(c, c, 10.0, 1.0))
    spec = renewal_psd(p, np.linspace(1.0, 200.0, 40))
    assert np.all(np.abs(spec.power * p.N / c - 1.0) < 1e-4), (
        spec.power.min(), spec.power.max())


def check_macro_conservation_quick():
    sol = macro_solve(FIG_PARAMS, [(0.0, 1.0)], 0.2, 1e-4)
    assert np.abs(sol.mass_residual).max() < 1e-6


def check_micro_all_spike():
    tr, raster = micro_simulate(FIG_PARAMS, 0.05, 1e-3, seed=0)
    assert tr.A[0] == 1.0 / 1e-3
    assert np.count_nonzero(raster[:, 0] == 0.0) == FIG_PARAMS.N


def check_mass_stats_extinction():
    from .traces import ActivityTrace
    n = 100
    mass = np.linspace(1, 0, n) ** 4
    mass[60:] = 0.0
    A = np.ones(n)
    A[50:] = 0.0
    tr = ActivityTrace(dt=0.01, A=A, Abar=A, mass=mass, p_lambda=np.zeros(n))
    st = mass_stats(tr)
    assert st["extinction_time"] == 0.6, st


CHECKS = [
    ("core.flow_semigroup", check_flow_semigroup),
    ("core.pfire_values", check_pfire_values),
    ("core.pfire_chain_convergence", check_pfire_chain_convergence),
    ("core.sigmoid_bounds", check_sigmoid_bounds),
    ("meso.init_window", check_meso_init),
    ("meso.step_invariants", check_meso_step_invariants),
    ("meso.extinct_absorbing", check_meso_extinct_absorbing),
    ("meso.determinism", check_meso_determinism),
    ("meso.fixed_mode_hand_value", check_fixed_mode_hand_value),
    ("pdmp.thinning_exponential_ks", check_pdmp_thinning_exponential),
    ("pdmp.mass_derivative", check_pdmp_mass_derivative),
    ("analysis.renewal_poisson_flat", check_renewal_poisson_flat),
    ("macro.conservation_quick", check_macro_conservation_quick),
    ("micro.all_spike_first_bin", check_micro_all_spike),
    ("analysis.mass_stats_extinction", check_mass_stats_extinction),
]


def run_selftest(verbose: bool = True) -> int:
    """Run every check; returns the number of failures."""
    failures = 0
    for name, fn in CHECKS:
        try:
            fn()
        except Exception as exc:  # noqa: BLE001 - report and continue
            failures += 1
            if verbose:
                print(f"FAIL {name}: {exc!r}")
        else:
            if verbose:
                print(f"PASS {name}")
    if verbose:
        total = len(CHECKS)
        print(f"{total - failures}/{total} checks passed")
    return failures
