"""Multi-population mesoscopic simulator with refractoriness and delays.

K interacting populations, each running the single-population history sweep
with three extensions: an absolute refractory tail of the history window in
which cohorts only carry mass, a delayed-exponential synaptic filter y per
population, and the recurrent drive I_syn^k = sum_l J[k,l] * y^l computed
for all populations from the previous step's filter state before any
population is updated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import NumericsError, PopulationParams
from .meso import _make_state, sweep_kernel
from .traces import ActivityTrace, params_to_dict


def pop_seed_sequence(master_seed, k: int) -> np.random.SeedSequence:
    """Per-population stream: child k of the master seed.

    Uses SeedSequence spawn keys, so adding population K+1 leaves the
    streams of populations 1..K untouched.
    """
    return np.random.SeedSequence(master_seed, spawn_key=(k,))


@dataclass(frozen=True)
class MultiPopConfig:
    """Population parameter list plus the K x K coupling matrix J_matrix.

    J_matrix[k, l] is the strength (mV) from population l to population k.
    """

    pops: tuple
    J_matrix: np.ndarray

    def __init__(self, pops, J_matrix):
        object.__setattr__(self, "pops", tuple(pops))
        object.__setattr__(self, "J_matrix", np.asarray(J_matrix, dtype=float))
        K = len(self.pops)
        if K < 1:
            raise ValueError("need at least one population")
        if self.J_matrix.shape != (K, K):
            raise ValueError(f"J_matrix must be {K}x{K}, got {self.J_matrix.shape}")
        if not np.all(np.isfinite(self.J_matrix)):
            raise ValueError("J_matrix must be finite")
        for p in self.pops:
            if not isinstance(p, PopulationParams):
                raise TypeError("pops must be PopulationParams")

    @property
    def K(self) -> int:
        return len(self.pops)


@dataclass
class MultiState:
    """Per-population history states plus the shared synaptic filter bank."""

    config: MultiPopConfig
    dt: float
    pops: list  # list[MesoState]
    y: np.ndarray  # filtered presynaptic output, Hz
    d_bins: np.ndarray  # transmission delay in bins, per population
    t_index: int = 0


def multi_init(config: MultiPopConfig, dt: float,
               history_tau_mult: float = 5.0) -> MultiState:
    """All-spike initial state for every population.

    Each population k gets a window of floor((mult*tau_m^k + delta_abs^k)/dt) + 1
    bins, the trailing floor(delta_abs^k / dt) of which form the refractory
    tail.  Transmission delays are read directly off the history buffer, so
    d^k must fit inside the window.
    """
    if not (dt > 0 and math.isfinite(dt)):
        raise ValueError(f"dt must be positive and finite, got {dt}")
    states = []
    d_bins = np.empty(config.K, dtype=np.int64)
    for k, p in enumerate(config.pops):
        if dt > p.tau_m / 10 * (1 + 1e-12):
            raise ValueError(
                f"dt={dt} too coarse for population {k}: need dt <= tau_m/10"
            )
        T = int(math.floor((history_tau_mult * p.tau_m + p.delta_abs) / dt + 1e-9)) + 1
        refr = int(math.floor(p.delta_abs / dt + 1e-9))
        d_bins[k] = int(math.floor(p.d / dt + 1e-9))
        if d_bins[k] > T - 1:
            raise ValueError(
                f"population {k}: delay {p.d}s exceeds the history window; "
                "increase history_tau_mult"
            )
        states.append(_make_state(p, dt, T, refr))
    return MultiState(config=config, dt=dt, pops=states,
                      y=np.zeros(config.K), d_bins=d_bins)


def multi_step(state: MultiState, mu_now: np.ndarray, rngs,
               mean_field: bool = False):
    """Advance all populations one step; mutates state.

    mu_now is the per-population drive (mV) at the step's target time and
    rngs one Generator per population.  Returns (n_new, abar, p_lam, mass)
    arrays of length K; mass is the per-population total at the step end.
    """
    cfg = state.config
    K = cfg.K
    dt = state.dt
    isyn = cfg.J_matrix @ state.y  # previous step's filter state, all pops
    n_new = np.empty(K)
    abar = np.empty(K)
    p_lam = np.empty(K)
    mass = np.empty(K)
    for k in range(K):
        st = state.pops[k]
        p = cfg.pops[k]
        kind, p0, p1, p2, p3 = p.f.coeffs()
        nbar, pl, X, W = sweep_kernel(
            st.n, st.S, st.u, st.lam, st.scal, dt, p.tau_m,
            mu_now[k], isyn[k], kind, p0, p1, p2, p3,
            True, 0.0, st.refr_bins,
        )
        if not (math.isfinite(nbar) and math.isfinite(X)):
            raise NumericsError(
                f"population {k}: non-finite update at step {state.t_index + 1}",
                state=st.summary(),
            )
        draw = nbar if mean_field else rngs[k].binomial(p.N, nbar) / p.N
        st.n[-1] = draw
        st.t_index += 1
        st.mass_start = X
        st.w_last = W
        n_new[k] = draw
        abar[k] = nbar / dt
        p_lam[k] = pl
        mass[k] = X - W + draw
        # synaptic filter reads the delayed spike fraction off the buffer
        delayed = st.n[st.T_bins - 1 - state.d_bins[k]]
        if p.tau_s > 0:
            decay = math.exp(-dt / p.tau_s)
            state.y[k] = state.y[k] * decay + (1.0 - decay) * delayed / dt
        else:
            state.y[k] = delayed / dt
    state.t_index += 1
    return n_new, abar, p_lam, mass


def multi_simulate(config: MultiPopConfig, duration: float, dt: float, seed,
                   pop_seeds=None, mean_field: bool = False,
                   history_tau_mult: float = 5.0, return_y: bool = False):
    """Simulate K coupled populations; returns a list of ActivityTraces.

    One RNG stream per population is derived from the master seed via
    spawn keys (see pop_seed_sequence); pop_seeds overrides the derived
    per-population seeds when given.  With return_y=True the per-step
    synaptic filter states are returned as a (rows, K) array alongside.
    """
    if duration <= 0:
        raise ValueError("duration must be positive")
    n_rows = int(math.floor(duration / dt + 1e-9))
    if n_rows < 2:
        raise ValueError("duration too short for the requested dt")
    K = config.K
    state = multi_init(config, dt, history_tau_mult)
    mu_arr = np.column_stack([p.mu_grid(n_rows, dt) for p in config.pops])
    if pop_seeds is None:
        pop_seeds = [pop_seed_sequence(seed, k) for k in range(K)]
    if len(pop_seeds) != K:
        raise ValueError(f"need {K} per-population seeds, got {len(pop_seeds)}")
    rngs = [np.random.default_rng(s) for s in pop_seeds]

    A = np.empty((n_rows, K))
    Abar = np.empty((n_rows, K))
    mass = np.empty((n_rows, K))
    p_lam = np.empty((n_rows, K))
    y_hist = np.zeros((n_rows, K)) if return_y else None
    A[0] = 1.0 / dt
    Abar[0] = 1.0 / dt
    mass[0] = 1.0
    p_lam[0] = 0.0

    for i in range(1, n_rows):
        n_new, ab, pl, m = multi_step(state, mu_arr[i - 1], rngs, mean_field)
        A[i] = n_new / dt
        Abar[i] = ab
        p_lam[i] = pl
        mass[i] = m
        if return_y:
            y_hist[i] = state.y

    traces = []
    for k in range(K):
        traces.append(ActivityTrace(
            dt=dt, A=A[:, k].copy(), Abar=Abar[:, k].copy(),
            mass=mass[:, k].copy(), p_lambda=p_lam[:, k].copy(),
            seed=seed if isinstance(seed, (int, np.integer)) else None,
            params=dict(params_to_dict(config.pops[k]), population=k),
        ))
    if return_y:
        return traces, y_hist
    return traces
