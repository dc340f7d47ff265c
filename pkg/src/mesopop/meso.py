"""Single-population discrete-time mesoscopic simulator.

The state is a co-moving finite-history window of spike fractions, survivals
and membrane potentials, plus scalar free-pool variables (x, z, h) for mass
older than the window.  Each step sweeps the window once, accumulating

    W = sum of lambda*S dZ        (expected firing of surviving mass)
    X = sum of S dZ               (surviving mass)
    Y = sum of lambda*(1-S)*S dZ
    Z = sum of (1-S)*S dZ

and draws the realized spike count from an exact binomial with mean
N * clamp(W + P_Lambda*(1-X), 0, 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .core import NumericsError, PopulationParams, pfire_scalar, rate_scalar
from .traces import ActivityTrace, params_to_dict


@dataclass(frozen=True)
class LambdaMode:
    """How the recovered-mass deficit 1 - X is converted into firing.

    kind "full"  uses the history-dependent ratio P_Lambda = Y/Z;
    kind "fixed" uses the constant rate `rate` (Hz) mapped to the per-step
    probability 1 - exp(-rate*dt); "naive" is fixed with rate 0.
    """

    kind: str
    rate: float = 0.0

    def __post_init__(self):
        if self.kind not in ("full", "fixed", "naive"):
            raise ValueError(f"unknown LambdaMode kind {self.kind!r}")
        if self.rate < 0 or not math.isfinite(self.rate):
            raise ValueError(f"fixed rate must be >= 0 and finite, got {self.rate}")

    @classmethod
    def fixed(cls, rate: float) -> "LambdaMode":
        return cls("fixed", float(rate))

    def to_dict(self) -> dict:
        if self.kind == "fixed":
            return {"kind": "fixed", "rate": self.rate}
        return {"kind": self.kind}

    @classmethod
    def from_dict(cls, d: dict) -> "LambdaMode":
        if d["kind"] == "fixed":
            return cls.fixed(d["rate"])
        return cls(d["kind"])


FULL = LambdaMode("full")
NAIVE = LambdaMode("naive")


@dataclass
class MesoState:
    """Mutable per-run state; exclusively owned by one simulation run.

    Arrays are indexed 0..T_bins-1, oldest cohort first; the last slot holds
    the most recent draw.  Slot 0 is a staging bin whose mass has already
    been merged into the free pool x.  scal packs (x, z, h, lam_free).
    """

    params: PopulationParams
    dt: float
    T_bins: int
    refr_bins: int
    n: np.ndarray
    S: np.ndarray
    u: np.ndarray
    lam: np.ndarray
    scal: np.ndarray
    t_index: int = 0
    mass_start: float = 1.0  # sweep accumulator X of the last step
    w_last: float = 0.0  # sweep accumulator W of the last step

    @property
    def x(self) -> float:
        return float(self.scal[0])

    @property
    def z(self) -> float:
        return float(self.scal[1])

    @property
    def h(self) -> float:
        return float(self.scal[2])

    @property
    def lam_free(self) -> float:
        return float(self.scal[3])

    def mass(self) -> float:
        """Current total mass: surviving window mass plus the free pool."""
        return float(np.dot(self.S[1:], self.n[1:]) + self.scal[0])

    def summary(self) -> dict:
        return {
            "t_index": self.t_index,
            "x": self.x,
            "z": self.z,
            "h": self.h,
            "mass": self.mass(),
            "n_sum": float(self.n.sum()),
        }


@njit(cache=True, nogil=True)
def sweep_kernel(n, S, u, lam, scal, dt, tau_m, mu_now, drive_in, kind, p0, p1, p2, p3,
                 mode_full, lam_fixed, refr_bins):
    """One history sweep; mutates the buffers in place (shift included).

    drive_in is the recurrent du/dt contribution in mV/s.  Returns
    (nbar, p_lambda, X, W); the caller writes the new draw into n[-1].
    """
    T = n.shape[0]
    x = scal[0]
    z = scal[1]
    h = scal[2]
    lam_free = scal[3]

    h = h + ((mu_now - h) / tau_m + drive_in) * dt
    fh = rate_scalar(kind, p0, p1, p2, p3, h)
    p_free = pfire_scalar(fh, lam_free, dt)
    lam_free = fh

    W = p_free * x
    X = x
    Y = p_free * z
    Z = z
    x = x - W
    z = (1.0 - p_free) * (1.0 - p_free) * z + W

    lim = T - refr_bins
    for r in range(1, lim):
        u_new = u[r] + ((mu_now - u[r]) / tau_m + drive_in) * dt
        f_new = rate_scalar(kind, p0, p1, p2, p3, u_new)
        p = pfire_scalar(f_new, lam[r], dt)
        m = S[r] * n[r]
        v = (1.0 - S[r]) * m
        W += p * m
        X += m
        Y += p * v
        Z += v
        u[r - 1] = u_new
        lam[r - 1] = f_new
        S[r - 1] = (1.0 - p) * S[r]
        n[r - 1] = n[r]
    x = x + S[0] * n[0]
    z = z + (1.0 - S[0]) * S[0] * n[0]
    for r in range(lim, T):
        X += n[r]
        n[r - 1] = n[r]

    if mode_full:
        p_lam = Y / Z if Z > 0.0 else 0.0
    else:
        p_lam = -math.expm1(-lam_fixed * dt)

    nbar = W + p_lam * (1.0 - X)
    if nbar < 0.0:
        nbar = 0.0
    elif nbar > 1.0:
        nbar = 1.0

    scal[0] = x
    scal[1] = z
    scal[2] = h
    scal[3] = lam_free
    return nbar, p_lam, X, W


def _make_state(params: PopulationParams, dt: float, T_bins: int, refr_bins: int) -> MesoState:
    f0 = float(params.f.rate(0.0))
    n = np.zeros(T_bins)
    n[-1] = 1.0
    scal = np.zeros(4)
    scal[3] = f0
    return MesoState(
        params=params,
        dt=dt,
        T_bins=T_bins,
        refr_bins=refr_bins,
        n=n,
        S=np.ones(T_bins),
        u=np.zeros(T_bins),
        lam=np.full(T_bins, f0),
        scal=scal,
    )


def meso_init(params: PopulationParams, dt: float, history_tau_mult: float = 5.0) -> MesoState:
    """All-spike initial state with history window of history_tau_mult*tau_m.

    The window holds floor(history_tau_mult*tau_m/dt) + 1 bins; shortening
    the window trades accuracy (older cohorts are approximated by the free
    pool) for speed.  Requires dt <= tau_m/10.
    """
    if not (dt > 0 and math.isfinite(dt)):
        raise ValueError(f"dt must be positive and finite, got {dt}")
    if dt > params.tau_m / 10 * (1 + 1e-12):
        raise ValueError(
            f"dt={dt} too coarse: need dt <= tau_m/10 = {params.tau_m / 10}"
        )
    if params.delta_abs > 0 or params.tau_s > 0 or params.d > 0:
        raise ValueError(
            "delta_abs/tau_s/d are not supported by the single-population "
            "simulator; use the multi-population one"
        )
    if history_tau_mult < 1:
        raise ValueError("history_tau_mult must be >= 1")
    T_bins = int(math.floor(history_tau_mult * params.tau_m / dt + 1e-9)) + 1
    return _make_state(params, dt, T_bins, refr_bins=0)


def meso_step(state: MesoState, mu_now: float, mode: LambdaMode, rng,
              mean_field: bool = False):
    """Advance one step of size state.dt; mutates state.

    Returns (n_new, Abar, P_Lambda): the realized spike fraction, the
    expected rate in Hz, and the per-step recovered-mass probability.  With
    mean_field=True the binomial draw is replaced by its mean (the
    infinite-size surrogate) and rng is unused.
    """
    p = state.params
    dt = state.dt
    kind, p0, p1, p2, p3 = p.f.coeffs()
    drive = p.J * state.n[-1] / dt
    nbar, p_lam, X, W = sweep_kernel(
        state.n, state.S, state.u, state.lam, state.scal,
        dt, p.tau_m, mu_now, drive, kind, p0, p1, p2, p3,
        mode.kind == "full", mode.rate, state.refr_bins,
    )
    if not (math.isfinite(nbar) and math.isfinite(X)):
        raise NumericsError(
            f"non-finite update at step {state.t_index + 1} "
            f"(nbar={nbar}, X={X}); state attached",
            state=state.summary(),
        )
    if mean_field:
        n_new = nbar
    else:
        n_new = rng.binomial(p.N, nbar) / p.N
    state.n[-1] = n_new
    state.t_index += 1
    state.mass_start = X
    state.w_last = W
    return n_new, nbar / dt, p_lam


def meso_simulate(params: PopulationParams, mode: LambdaMode, duration: float,
                  dt: float, seed, mean_field: bool = False,
                  history_tau_mult: float = 5.0) -> ActivityTrace:
    """Simulate for `duration` seconds; returns a trace of floor(duration/dt) rows.

    Row 0 is the all-spike initial condition (A = 1/dt, mass 1).  Identical
    (params, mode, duration, dt, seed) give a bit-identical trace.
    """
    if duration <= 0:
        raise ValueError(f"duration must be positive, got {duration}")
    n_rows = int(math.floor(duration / dt + 1e-9))
    if n_rows < 2:
        raise ValueError("duration too short for the requested dt")
    state = meso_init(params, dt, history_tau_mult)
    mu_arr = params.mu_grid(n_rows, dt)
    rng = np.random.default_rng(seed)

    A = np.empty(n_rows)
    Abar = np.empty(n_rows)
    mass = np.empty(n_rows)
    p_lam_arr = np.empty(n_rows)
    A[0] = 1.0 / dt
    Abar[0] = 1.0 / dt
    mass[0] = 1.0
    p_lam_arr[0] = 0.0

    for k in range(1, n_rows):
        n_new, abar, p_lam = meso_step(state, mu_arr[k - 1], mode, rng, mean_field)
        A[k] = n_new / dt
        Abar[k] = abar
        p_lam_arr[k] = p_lam
        mass[k] = state.mass_start - state.w_last + n_new

    return ActivityTrace(
        dt=dt, A=A, Abar=Abar, mass=mass, p_lambda=p_lam_arr,
        seed=seed if isinstance(seed, (int, np.integer)) else None,
        params=dict(params_to_dict(params), lambda_mode=mode.to_dict(),
                    mean_field=mean_field),
    )
