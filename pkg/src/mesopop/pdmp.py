"""Exact event-driven simulation of the measure-valued jump process.

The state is an atomic positive measure rho = sum_i w_i * delta_{u_i}.
Between jumps every atom position follows the free membrane flow while its
weight decays by exp(-integral of f along the flow); at a jump all
positions shift by J/N and an atom (0, 1/N) is added.  Jumps arrive with
intensity N * [rho[f] + Lambda*(1 - |rho|)]_+ and are generated exactly by
thinning under the dominating rate N*(f_max*|rho| + Lambda), which remains
valid between events because the mass is non-increasing under the flow.

Coupled pairs share the candidate stream and accept/reject marks, so two
processes jump together whenever their intensities agree.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from numba import njit

from .core import Constant, NumericsError, PopulationParams, Sigmoid, rate_scalar

PRUNE_WEIGHT = 1e-12
HAZARD_INT_RTOL = 1e-9

_STATUS_DONE = 0
_STATUS_MORE_UNIFORMS = 1
_STATUS_MORE_CAPACITY = 2
_STATUS_EVENT_CAP = 3


@dataclass
class ParticleMeasure:
    """Atomic positive measure: positions (mV) and nonnegative weights."""

    pos: np.ndarray
    wgt: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.pos = np.asarray(self.pos, dtype=float)
        self.wgt = np.asarray(self.wgt, dtype=float)
        if self.pos.shape != self.wgt.shape or self.pos.ndim != 1:
            raise ValueError("pos and wgt must be 1-d arrays of equal length")
        if np.any(self.wgt < 0) or not np.all(np.isfinite(self.wgt)):
            raise ValueError("weights must be finite and >= 0")
        if not np.all(np.isfinite(self.pos)):
            raise ValueError("positions must be finite")

    @classmethod
    def from_atoms(cls, atoms, t: float = 0.0) -> "ParticleMeasure":
        atoms = list(atoms)
        return cls(
            pos=np.array([u for u, _ in atoms], dtype=float),
            wgt=np.array([w for _, w in atoms], dtype=float),
            t=t,
        )

    @classmethod
    def delta(cls, u: float = 0.0, w: float = 1.0, t: float = 0.0) -> "ParticleMeasure":
        return cls(pos=np.array([u]), wgt=np.array([w]), t=t)

    def mass(self) -> float:
        return float(self.wgt.sum())

    def integrate(self, f) -> float:
        """rho[f] = sum_i w_i f(u_i)."""
        if self.pos.size == 0:
            return 0.0
        return float(np.dot(self.wgt, f.rate(self.pos)))

    def copy(self) -> "ParticleMeasure":
        return ParticleMeasure(self.pos.copy(), self.wgt.copy(), self.t)


@dataclass
class PdmpResult:
    """Jump times plus mass/rate traces on a regular sample grid.

    sample_rate is the expected activity [rho[f] + Lambda*(1-mass)]_+ in Hz
    (per neuron); the jump intensity is N times that.
    """

    jump_times: np.ndarray
    sample_t: np.ndarray
    sample_mass: np.ndarray
    sample_rate: np.ndarray
    n_candidates: int
    seed: object = None


@dataclass
class CoupledRun:
    """Two processes driven by one Poisson stream and shared marks.

    sides[i] is 0 when both processes jump at jump_times[i], 1 for a
    left-only jump, 2 for right-only.  T_c_estimate is the last
    asynchronous jump time (0.0 if the jump trains are identical) and is
    flagged censored when an asynchronous jump falls in the final 10% of
    the horizon.
    """

    jump_times: np.ndarray
    sides: np.ndarray
    sample_t: np.ndarray
    sample_gap: np.ndarray  # |Abar_left - Abar_right| in Hz
    sample_mass_left: np.ndarray
    sample_mass_right: np.ndarray
    T_c_estimate: float = 0.0
    censored: bool = False
    n_candidates: int = 0
    seed: object = None

    @property
    def async_jump_times(self) -> np.ndarray:
        return self.jump_times[self.sides != 0]

    @staticmethod
    def side_name(code: int) -> str:
        return ("both", "left", "right")[code]


def _require_bounded(f) -> float:
    if not isinstance(f, Sigmoid):
        raise TypeError(
            "the event-driven simulator requires a bounded (Sigmoid) "
            "intensity; unbounded escape rates have no finite thinning bound"
        )
    return f.f_max


def pdmp_intensity(rho: ParticleMeasure, f, Lambda: float, N: int) -> float:
    """Total jump rate N*[rho[f] + Lambda*(1 - |rho|)]_+ in Hz."""
    _require_bounded(f)
    if Lambda < 0:
        raise ValueError("Lambda must be >= 0")
    return N * max(0.0, rho.integrate(f) + Lambda * (1.0 - rho.mass()))


# ---------------------------------------------------------------------------
# Compiled kernels
# ---------------------------------------------------------------------------


@njit(cache=True, inline="always")
def _hazard_integral(kind, a, b, c, d, u, mu, tau, h, rtol):
    """Integral of f along the free flow from u over h seconds.

    Adaptive composite Simpson by successive interval halving (Richardson
    of the refined trapezoid); constant intensities short-circuit.
    """
    if h <= 0.0:
        return 0.0
    if kind == 1 and a == b:
        return a * h
    f0 = rate_scalar(kind, a, b, c, d, u)
    fh = rate_scalar(kind, a, b, c, d, mu + (u - mu) * math.exp(-h / tau))
    t_n = 0.5 * h * (f0 + fh)
    s_prev = -1.0
    n = 1
    for _ in range(22):
        step = h / n
        acc = 0.0
        r = 0.5 * step
        for _ in range(n):
            acc += rate_scalar(kind, a, b, c, d, mu + (u - mu) * math.exp(-r / tau))
            r += step
        t_2n = 0.5 * t_n + 0.5 * step * acc
        s = (4.0 * t_2n - t_n) / 3.0
        if s_prev >= 0.0 and abs(s - s_prev) <= rtol * max(abs(s), 1e-300):
            return s
        s_prev = s
        t_n = t_2n
        n *= 2
    return s_prev


@njit(cache=True)
def _advance_atoms(pos, wgt, n, dtau, mu, tau, kind, a, b, c, d, rtol, prune):
    """Flow all atoms by dtau, decay weights, prune, compact in place.

    The quadrature nodes are shared across atoms, so their flow decay
    factors are hoisted; the 5-node composite Simpson pair converges at
    once for inter-candidate steps, with the full adaptive integral as a
    fallback for long advances.  Returns (n_alive, mass, f_mass).
    """
    if dtau <= 0.0:
        m = 0.0
        fs = 0.0
        for i in range(n):
            m += wgt[i]
            fs += wgt[i] * rate_scalar(kind, a, b, c, d, pos[i])
        return n, m, fs
    constant = kind == 1 and a == b
    e1 = math.exp(-0.25 * dtau / tau)
    e2 = e1 * e1
    e3 = e2 * e1
    decay = e2 * e2
    const_int = a * dtau
    m = 0.0
    fs = 0.0
    j = 0
    for i in range(n):
        u = pos[i]
        du = u - mu
        if constant:
            integral = const_int
        else:
            f0 = rate_scalar(kind, a, b, c, d, u)
            f1 = rate_scalar(kind, a, b, c, d, mu + du * e1)
            f2 = rate_scalar(kind, a, b, c, d, mu + du * e2)
            f3 = rate_scalar(kind, a, b, c, d, mu + du * e3)
            f4 = rate_scalar(kind, a, b, c, d, mu + du * decay)
            s_2 = dtau / 6.0 * (f0 + 4.0 * f2 + f4)
            s_4 = dtau / 12.0 * (f0 + 4.0 * f1 + 2.0 * f2 + 4.0 * f3 + f4)
            if abs(s_4 - s_2) <= rtol * max(abs(s_4), 1e-300):
                integral = s_4
            else:
                integral = _hazard_integral(kind, a, b, c, d, u, mu, tau,
                                            dtau, rtol)
        w = wgt[i] * math.exp(-integral)
        if w < prune:
            continue
        u_new = mu + du * decay
        pos[j] = u_new
        wgt[j] = w
        m += w
        fs += w * rate_scalar(kind, a, b, c, d, u_new)
        j += 1
    return j, m, fs


@njit(cache=True, nogil=True)
def _run_kernel(pos, wgt, n0, N, J, Lam, fmax, kind, a, b, c, d, mu, tau,
                horizon, unif, samp_t, out_jump, out_mass, out_rate,
                rtol, prune, cap_events):
    n = n0
    t = 0.0
    m = 0.0
    fs = 0.0
    for i in range(n):
        m += wgt[i]
        fs += wgt[i] * rate_scalar(kind, a, b, c, d, pos[i])
    f_reset = rate_scalar(kind, a, b, c, d, 0.0)
    ui = 0
    nj = 0
    si = 0
    ncand = 0
    ns = samp_t.shape[0]
    while True:
        lam_star = N * (fmax * m + Lam)
        if lam_star <= 0.0:
            while si < ns:
                out_mass[si] = m
                out_rate[si] = 0.0
                si += 1
            break
        if ui + 2 > unif.shape[0]:
            return _STATUS_MORE_UNIFORMS, n, nj, ncand
        t_cand = t + (-math.log1p(-unif[ui])) / lam_star
        ui += 1
        t_next = t_cand if t_cand < horizon else horizon
        while si < ns and samp_t[si] <= t_next:
            n, m, fs = _advance_atoms(pos, wgt, n, samp_t[si] - t, mu, tau,
                                      kind, a, b, c, d, rtol, prune)
            t = samp_t[si]
            ab = fs + Lam * (1.0 - m)
            out_mass[si] = m
            out_rate[si] = ab if ab > 0.0 else 0.0
            si += 1
        if t_cand >= horizon:
            break
        n, m, fs = _advance_atoms(pos, wgt, n, t_cand - t, mu, tau,
                                  kind, a, b, c, d, rtol, prune)
        t = t_cand
        ncand += 1
        intensity = fs + Lam * (1.0 - m)
        if intensity > 0.0 and unif[ui] * lam_star <= N * intensity:
            if nj >= out_jump.shape[0] or n >= pos.shape[0]:
                return _STATUS_MORE_CAPACITY, n, nj, ncand
            if J != 0.0:
                shift = J / N
                fs = 0.0
                for i in range(n):
                    pos[i] += shift
                    fs += wgt[i] * rate_scalar(kind, a, b, c, d, pos[i])
            pos[n] = 0.0
            wgt[n] = 1.0 / N
            fs += f_reset / N
            m += 1.0 / N
            n += 1
            out_jump[nj] = t
            nj += 1
        ui += 1
        if ncand > cap_events:
            return _STATUS_EVENT_CAP, n, nj, ncand
    return _STATUS_DONE, n, nj, ncand


@njit(cache=True, nogil=True)
def _couple_kernel(pos_l, wgt_l, n0_l, pos_r, wgt_r, n0_r, N, J, Lam, fmax,
                   kind, a, b, c, d, mu, tau, horizon, unif, samp_t,
                   out_jump, out_side, out_gap, out_ml, out_mr,
                   rtol, prune, cap_events):
    nl = n0_l
    nr = n0_r
    t = 0.0
    ml = 0.0
    fsl = 0.0
    for i in range(nl):
        ml += wgt_l[i]
        fsl += wgt_l[i] * rate_scalar(kind, a, b, c, d, pos_l[i])
    mr = 0.0
    fsr = 0.0
    for i in range(nr):
        mr += wgt_r[i]
        fsr += wgt_r[i] * rate_scalar(kind, a, b, c, d, pos_r[i])
    f_reset = rate_scalar(kind, a, b, c, d, 0.0)
    shift = J / N
    ui = 0
    nj = 0
    si = 0
    ncand = 0
    ns = samp_t.shape[0]
    while True:
        m_hi = ml if ml > mr else mr
        lam_star = N * (fmax * m_hi + Lam)
        if lam_star <= 0.0:
            while si < ns:
                out_gap[si] = 0.0
                out_ml[si] = ml
                out_mr[si] = mr
                si += 1
            break
        if ui + 2 > unif.shape[0]:
            return _STATUS_MORE_UNIFORMS, nl, nr, nj, ncand
        t_cand = t + (-math.log1p(-unif[ui])) / lam_star
        ui += 1
        t_next = t_cand if t_cand < horizon else horizon
        while si < ns and samp_t[si] <= t_next:
            dtau = samp_t[si] - t
            nl, ml, fsl = _advance_atoms(pos_l, wgt_l, nl, dtau, mu, tau,
                                         kind, a, b, c, d, rtol, prune)
            nr, mr, fsr = _advance_atoms(pos_r, wgt_r, nr, dtau, mu, tau,
                                         kind, a, b, c, d, rtol, prune)
            t = samp_t[si]
            il = fsl + Lam * (1.0 - ml)
            ir = fsr + Lam * (1.0 - mr)
            if il < 0.0:
                il = 0.0
            if ir < 0.0:
                ir = 0.0
            out_gap[si] = abs(il - ir)
            out_ml[si] = ml
            out_mr[si] = mr
            si += 1
        if t_cand >= horizon:
            break
        dtau = t_cand - t
        nl, ml, fsl = _advance_atoms(pos_l, wgt_l, nl, dtau, mu, tau,
                                     kind, a, b, c, d, rtol, prune)
        nr, mr, fsr = _advance_atoms(pos_r, wgt_r, nr, dtau, mu, tau,
                                     kind, a, b, c, d, rtol, prune)
        t = t_cand
        ncand += 1
        il = fsl + Lam * (1.0 - ml)
        ir = fsr + Lam * (1.0 - mr)
        if il < 0.0:
            il = 0.0
        if ir < 0.0:
            ir = 0.0
        z = unif[ui] * lam_star
        ui += 1
        jump_l = z <= N * il
        jump_r = z <= N * ir
        if jump_l or jump_r:
            if nj >= out_jump.shape[0] or nl >= pos_l.shape[0] or nr >= pos_r.shape[0]:
                return _STATUS_MORE_CAPACITY, nl, nr, nj, ncand
            if jump_l:
                if shift != 0.0:
                    fsl = 0.0
                    for i in range(nl):
                        pos_l[i] += shift
                        fsl += wgt_l[i] * rate_scalar(kind, a, b, c, d, pos_l[i])
                pos_l[nl] = 0.0
                wgt_l[nl] = 1.0 / N
                fsl += f_reset / N
                ml += 1.0 / N
                nl += 1
            if jump_r:
                if shift != 0.0:
                    fsr = 0.0
                    for i in range(nr):
                        pos_r[i] += shift
                        fsr += wgt_r[i] * rate_scalar(kind, a, b, c, d, pos_r[i])
                pos_r[nr] = 0.0
                wgt_r[nr] = 1.0 / N
                fsr += f_reset / N
                mr += 1.0 / N
                nr += 1
            out_jump[nj] = t
            out_side[nj] = 0 if (jump_l and jump_r) else (1 if jump_l else 2)
            nj += 1
        if ncand > cap_events:
            return _STATUS_EVENT_CAP, nl, nr, nj, ncand
    return _STATUS_DONE, nl, nr, nj, ncand


# ---------------------------------------------------------------------------
# Python API
# ---------------------------------------------------------------------------


def pdmp_evolve(rho: ParticleMeasure, dt: float, f, mu: float, tau_m: float,
                prune: float = PRUNE_WEIGHT) -> ParticleMeasure:
    """Deterministic flow over dt seconds: transport atoms, decay weights.

    Weights multiply by exp(-integral of f along the closed-form flow),
    computed by adaptive Simpson to relative tolerance 1e-9; atoms whose
    weight falls below `prune` are dropped.
    """
    if dt < 0:
        raise ValueError("dt must be >= 0")
    kind, a, b, c, d = f.coeffs()
    pos = rho.pos.copy()
    wgt = rho.wgt.copy()
    n, _, _ = _advance_atoms(pos, wgt, pos.size, dt, mu, tau_m,
                             kind, a, b, c, d, HAZARD_INT_RTOL, prune)
    return ParticleMeasure(pos[:n].copy(), wgt[:n].copy(), rho.t + dt)


def pdmp_jump(rho: ParticleMeasure, J: float, N: int) -> ParticleMeasure:
    """Apply one population spike: shift all atoms by J/N, add (0, 1/N)."""
    return ParticleMeasure(
        pos=np.concatenate([rho.pos + J / N, [0.0]]),
        wgt=np.concatenate([rho.wgt, [1.0 / N]]),
        t=rho.t,
    )


def _prepare(nu0: ParticleMeasure, params: PopulationParams, Lambda, horizon):
    fmax = _require_bounded(params.f)
    if not isinstance(params.mu, Constant):
        raise ValueError("the event-driven simulator requires a constant drive")
    if Lambda < 0 or not math.isfinite(Lambda):
        raise ValueError("Lambda must be finite and >= 0")
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    return fmax, params.mu.mu


def _sample_grid(horizon: float, sample_dt) -> np.ndarray:
    if sample_dt is None:
        sample_dt = horizon / 1000.0
    n = int(math.floor(horizon / sample_dt + 1e-9)) + 1
    return sample_dt * np.arange(n)


def _budget(nu0_mass, N, fmax, Lambda, horizon) -> int:
    bound = fmax * max(1.5, 1.2 * nu0_mass) + Lambda
    return int(horizon * N * bound * 1.3) + 1024


def pdmp_simulate(nu0: ParticleMeasure, params: PopulationParams, Lambda: float,
                  horizon: float, seed, sample_dt: float | None = None,
                  max_events: int = 10 ** 9) -> PdmpResult:
    """Exact thinning run from the initial measure nu0 over [0, horizon].

    Returns jump times and (mass, expected-rate) samples on a regular grid
    (sample_dt defaults to horizon/1000).  Reproducible: identical
    arguments give identical jump trains.
    """
    fmax, mu = _prepare(nu0, params, Lambda, horizon)
    kind, a, b, c, d = params.f.coeffs()
    samp_t = _sample_grid(horizon, sample_dt)
    est = _budget(nu0.mass(), params.N, fmax, Lambda, horizon)

    for _ in range(12):
        rng = np.random.default_rng(seed)
        unif = rng.random(2 * est)
        cap_jumps = est
        pos = np.empty(nu0.pos.size + cap_jumps)
        wgt = np.empty_like(pos)
        pos[: nu0.pos.size] = nu0.pos
        wgt[: nu0.pos.size] = nu0.wgt
        out_jump = np.empty(cap_jumps)
        out_mass = np.empty(samp_t.size)
        out_rate = np.empty(samp_t.size)
        status, n, nj, ncand = _run_kernel(
            pos, wgt, nu0.pos.size, params.N, params.J, Lambda, fmax,
            kind, a, b, c, d, mu, params.tau_m, horizon, unif, samp_t,
            out_jump, out_mass, out_rate, HAZARD_INT_RTOL, PRUNE_WEIGHT,
            max_events,
        )
        if status == _STATUS_EVENT_CAP:
            raise NumericsError(
                f"event cap {max_events} exceeded at {ncand} candidates; "
                "the jump intensity appears to blow up",
                state={"n_atoms": n, "n_jumps": nj},
            )
        if status == _STATUS_DONE:
            return PdmpResult(
                jump_times=out_jump[:nj].copy(),
                sample_t=samp_t,
                sample_mass=out_mass,
                sample_rate=out_rate,
                n_candidates=ncand,
                seed=seed,
            )
        est *= 2
    raise NumericsError("thinning buffers kept overflowing; runaway intensity?")


def pdmp_couple(nu0: ParticleMeasure, nu0_tilde: ParticleMeasure,
                params: PopulationParams, Lambda: float, horizon: float, seed,
                sample_dt: float | None = None,
                max_events: int = 10 ** 9) -> CoupledRun:
    """Run two processes from nu0 and nu0_tilde with shared randomness.

    One dominating Poisson stream at rate N*(f_max * max of masses + Lambda)
    drives both; each candidate carries a shared uniform mark, so the
    processes jump together whenever their intensities coincide.
    """
    fmax, mu = _prepare(nu0, params, Lambda, horizon)
    kind, a, b, c, d = params.f.coeffs()
    samp_t = _sample_grid(horizon, sample_dt)
    est = _budget(max(nu0.mass(), nu0_tilde.mass()), params.N, fmax, Lambda,
                  horizon)

    for _ in range(12):
        rng = np.random.default_rng(seed)
        unif = rng.random(2 * est)
        cap_jumps = est
        pos_l = np.empty(nu0.pos.size + cap_jumps)
        wgt_l = np.empty_like(pos_l)
        pos_l[: nu0.pos.size] = nu0.pos
        wgt_l[: nu0.pos.size] = nu0.wgt
        pos_r = np.empty(nu0_tilde.pos.size + cap_jumps)
        wgt_r = np.empty_like(pos_r)
        pos_r[: nu0_tilde.pos.size] = nu0_tilde.pos
        wgt_r[: nu0_tilde.pos.size] = nu0_tilde.wgt
        out_jump = np.empty(cap_jumps)
        out_side = np.empty(cap_jumps, dtype=np.int8)
        out_gap = np.empty(samp_t.size)
        out_ml = np.empty(samp_t.size)
        out_mr = np.empty(samp_t.size)
        status, nl, nr, nj, ncand = _couple_kernel(
            pos_l, wgt_l, nu0.pos.size, pos_r, wgt_r, nu0_tilde.pos.size,
            params.N, params.J, Lambda, fmax, kind, a, b, c, d, mu,
            params.tau_m, horizon, unif, samp_t, out_jump, out_side,
            out_gap, out_ml, out_mr, HAZARD_INT_RTOL, PRUNE_WEIGHT,
            max_events,
        )
        if status == _STATUS_EVENT_CAP:
            raise NumericsError(
                f"event cap {max_events} exceeded at {ncand} candidates",
                state={"n_jumps": nj},
            )
        if status == _STATUS_DONE:
            times = out_jump[:nj].copy()
            sides = out_side[:nj].copy()
            async_times = times[sides != 0]
            t_c = float(async_times[-1]) if async_times.size else 0.0
            censored = bool(np.any(async_times > 0.9 * horizon))
            return CoupledRun(
                jump_times=times,
                sides=sides,
                sample_t=samp_t,
                sample_gap=out_gap,
                sample_mass_left=out_ml,
                sample_mass_right=out_mr,
                T_c_estimate=t_c,
                censored=censored,
                n_candidates=ncand,
                seed=seed,
            )
        est *= 2
    raise NumericsError("thinning buffers kept overflowing; runaway intensity?")


def lyapunov_diagnostic(runs, Lambda: float) -> dict:
    """Ensemble mass diagnostics: boundedness and mean-relaxation rate.

    `runs` is a sequence of PdmpResult sharing one sample grid and Lambda.
    Fits the exponential relaxation of |E[M_t] - 1| by log-linear
    regression over the samples with signal above the Monte Carlo floor and
    reports the fitted rate next to Lambda.  Ensembles smaller than 50 runs
    are flagged underpowered.
    """
    runs = list(runs)
    n_runs = len(runs)
    if n_runs == 0:
        raise ValueError("empty ensemble")
    t = runs[0].sample_t
    masses = np.stack([r.sample_mass for r in runs])
    mean_mass = masses.mean(axis=0)
    se = masses.std(axis=0) / math.sqrt(n_runs)

    report = {
        "n_runs": n_runs,
        "underpowered": n_runs < 50,
        "lambda": Lambda,
        "sup_mean_mass": float(mean_mass.max()),
        "mean_mass": mean_mass,
        "sample_t": t,
        "fitted_rate": math.nan,
        "rate_rel_error": math.nan,
    }
    if report["underpowered"]:
        warnings.warn(f"ensemble of {n_runs} runs is underpowered (< 50)",
                      stacklevel=2)

    dev = mean_mass - 1.0
    if abs(dev[0]) < 1e-6:
        return report
    sign = 1.0 if dev[0] > 0 else -1.0
    y = sign * dev
    # keep the signal-dominated prefix only; selecting points near the noise
    # floor would bias the slope toward zero
    floor = max(5.0 * float(np.median(se)), 0.1 * y[0])
    ok = y > floor
    if int(ok.sum()) < 5:
        return report
    end = int(np.argmin(ok)) if not bool(ok.all()) else y.size
    sel = slice(0, max(end, 5))
    coef = np.polyfit(t[sel], np.log(y[sel]), 1)
    rate = -float(coef[0])
    report["fitted_rate"] = rate
    if Lambda > 0:
        report["rate_rel_error"] = abs(rate - Lambda) / Lambda
    return report
