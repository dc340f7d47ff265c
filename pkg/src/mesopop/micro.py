"""Microscopic network of N coupled LIF neurons with escape noise.

Discrete-time ground truth for the population simulators: per step, each
neuron drifts toward the drive, fires with the trapezoidal hazard
probability, is reset to 0 on firing, and then receives the recurrent kick
J * (spike count)/N (its own spike included).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import PopulationParams, survival_decrement
from .traces import ActivityTrace, params_to_dict

ALL_SPIKE_AT_ZERO = "all_spike_at_zero"


@dataclass
class MicroState:
    """Per-neuron membrane potentials (mV) plus step bookkeeping."""

    U: np.ndarray
    dt: float
    t_index: int = 0
    last_input: float = 0.0  # recurrent drive of the current step, Hz


def micro_step(state: MicroState, params: PopulationParams, mu_now: float, rng,
               uniforms: np.ndarray | None = None):
    """Advance one step of size state.dt; mutates state.

    Returns (spike_count, fired_mask, mean_p).  The fire test consumes
    exactly one uniform per neuron; `uniforms` overrides the draw from rng
    (used to relabel neuron substreams).
    """
    dt = state.dt
    tau = params.tau_m
    f = params.f
    U = state.U
    if uniforms is None:
        uniforms = rng.random(params.N)
    U_new = U + (mu_now - U) * (dt / tau)
    P = survival_decrement(f.rate(U_new), f.rate(U), dt)
    fired = uniforms < P
    count = int(fired.sum())
    U_new[fired] = 0.0
    U_new += params.J * count / params.N
    state.U = U_new
    state.t_index += 1
    state.last_input = count / (params.N * dt)
    return count, fired, float(np.mean(P))


def micro_simulate(params: PopulationParams, duration: float, dt: float, seed,
                   init=ALL_SPIKE_AT_ZERO, substream_perm=None):
    """Simulate and return (ActivityTrace, raster).

    raster is an (n_spikes, 2)-shaped float array of (t, neuron_id) rows.
    init is either the all-spike sentinel (potentials 0, a synchronized
    spike recorded at t=0) or an array of per-neuron potentials in mV.
    substream_perm optionally relabels the per-neuron uniform substreams
    (a consistent column permutation of the underlying uniform stream).
    """
    if duration <= 0 or dt <= 0:
        raise ValueError("duration and dt must be positive")
    if params.delta_abs > 0 or params.tau_s > 0 or params.d > 0:
        raise ValueError("micro model supports the base dynamics only "
                         "(delta_abs = tau_s = d = 0)")
    N = params.N
    n_rows = int(math.floor(duration / dt + 1e-9))
    if n_rows < 2:
        raise ValueError("duration too short for the requested dt")
    rng = np.random.default_rng(seed)
    mu_arr = params.mu_grid(n_rows, dt)

    spike_t = []
    spike_id = []
    A = np.empty(n_rows)
    Abar = np.empty(n_rows)
    if isinstance(init, str):
        if init != ALL_SPIKE_AT_ZERO:
            raise ValueError(f"unknown init {init!r}")
        U = np.zeros(N)
        A[0] = 1.0 / dt
        Abar[0] = 1.0 / dt
        spike_t.append(np.zeros(N))
        spike_id.append(np.arange(N))
    else:
        U = np.asarray(init, dtype=float).copy()
        if U.shape != (N,):
            raise ValueError(f"init must have shape ({N},)")
        A[0] = 0.0
        Abar[0] = 0.0

    state = MicroState(U=U, dt=dt)
    ids = np.arange(N)
    for k in range(1, n_rows):
        unif = rng.random(N)
        if substream_perm is not None:
            unif = unif[substream_perm]
        count, fired, mean_p = micro_step(state, params, mu_arr[k - 1], rng, unif)
        A[k] = count / (N * dt)
        Abar[k] = mean_p / dt
        if count:
            spike_t.append(np.full(count, k * dt))
            spike_id.append(ids[fired])

    if spike_t:
        raster = np.column_stack([np.concatenate(spike_t), np.concatenate(spike_id)])
    else:
        raster = np.empty((0, 2))
    trace = ActivityTrace(
        dt=dt, A=A, Abar=Abar, mass=np.ones(n_rows), p_lambda=np.zeros(n_rows),
        seed=seed if isinstance(seed, (int, np.integer)) else None,
        params=params_to_dict(params),
    )
    return trace, raster
