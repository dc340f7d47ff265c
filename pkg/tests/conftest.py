"""Shared fixtures: canonical parameter sets and cached heavy runs."""

import pytest

from mesopop import Exponential, PopulationParams, Sigmoid, FULL, LambdaMode, NAIVE
from mesopop.meso import meso_simulate


def demo_exp_params(N=200):
    """The bundled exponential-intensity demo set (see README)."""
    return PopulationParams(N=N, tau_m=0.02, mu=20.0,
                            f=Exponential(c=10.0, theta=10.0, delta_u=1.0))


def demo_sigmoid_params(N=100):
    return PopulationParams(N=N, tau_m=0.02, mu=20.0, f=Sigmoid())


@pytest.fixture(scope="session")
def fig_params():
    return demo_exp_params()


@pytest.fixture(scope="session")
def sig_params():
    return demo_sigmoid_params()


@pytest.fixture(scope="session")
def renewal_rate_fig(fig_params):
    from mesopop import firing_rate
    return firing_rate(fig_params)


N_SEEDS = 20
LONG_T = 100.0
DT = 1e-3
FIXED_LAMBDA = 277.0


@pytest.fixture(scope="session")
def meso_full_long_runs(fig_params):
    """20 seeds of 100 s full-mode runs (shared by several criteria)."""
    return [meso_simulate(fig_params, FULL, LONG_T, DT, seed=s)
            for s in range(N_SEEDS)]


@pytest.fixture(scope="session")
def meso_naive_long_runs(fig_params):
    return [meso_simulate(fig_params, NAIVE, LONG_T, DT, seed=s)
            for s in range(N_SEEDS)]


@pytest.fixture(scope="session")
def meso_fixed_long_runs(fig_params):
    mode = LambdaMode.fixed(FIXED_LAMBDA)
    return [meso_simulate(fig_params, mode, LONG_T, DT, seed=s)
            for s in range(N_SEEDS)]
