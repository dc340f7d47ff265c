"""Statistical validation: Bartlett periodograms, renewal theory, mass stats.

The renewal quantities (ISI density, firing rate, analytic activity
spectrum) apply to a non-interacting population (J = 0) under constant
drive; they are computed by quadrature along the exact membrane flow.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .core import Constant, PopulationParams
from .traces import ActivityTrace

ISI_GRID_DT = 1e-5  # s, quadrature mesh for the renewal integrals
ISI_SURVIVAL_FLOOR = 1e-10
MAX_ISI_POINTS = 50_000_000


@dataclass
class Spectrum:
    """One-sided power spectral density; power carries Hz units."""

    freqs: np.ndarray
    power: np.ndarray
    segment_T: float
    n_segments: int


def psd_bartlett(trace: ActivityTrace, segment_T: float) -> Spectrum:
    """Averaged periodogram over non-overlapping segments, no windowing.

    Each segment's raw samples are Fourier transformed (scaled by dt), the
    squared magnitude is divided by segment_T, and the periodograms are
    averaged.  The DC bin is reported but should be excluded from
    comparisons (the mean is not removed).
    """
    dt = trace.dt
    ratio = segment_T / dt
    L = int(round(ratio))
    if L < 2 or abs(ratio - L) > 1e-6 * ratio:
        raise ValueError(f"segment_T={segment_T} must be a multiple of dt={dt}")
    n_seg = len(trace) // L
    if n_seg < 2:
        raise ValueError(
            f"trace too short: {len(trace)} samples < 2 segments of {L}"
        )
    segs = trace.A[: n_seg * L].reshape(n_seg, L)
    ft = np.fft.rfft(segs, axis=1) * dt
    power = (np.abs(ft) ** 2 / segment_T).mean(axis=0)
    freqs = np.fft.rfftfreq(L, dt)
    return Spectrum(freqs=freqs, power=power, segment_T=segment_T, n_segments=n_seg)


def _require_renewal(params: PopulationParams) -> float:
    if params.J != 0:
        raise ValueError("renewal quantities require J = 0")
    if not isinstance(params.mu, Constant):
        raise ValueError("renewal quantities require a constant drive")
    return params.mu.mu


def _isi_kernel(params: PopulationParams, dt: float = ISI_GRID_DT):
    """(t, lam, S) on a fine grid, truncated where S < 1e-10.

    The hazard follows the exact reset-cell flow u(t) = mu*(1 - exp(-t/tau));
    the survival uses cumulative trapezoidal hazard.  Raises if the survival
    does not decay (divergent ISI integral).
    """
    mu = _require_renewal(params)
    tau = params.tau_m
    f = params.f
    chunk = 1 << 17
    t_parts = []
    lam_parts = []
    logS_parts = []
    log_s_end = 0.0
    lam_end = float(f.rate(0.0))
    t_end = 0.0
    total = 0
    floor_log = math.log(ISI_SURVIVAL_FLOOR)
    while True:
        t = t_end + dt * np.arange(1, chunk + 1)
        u = mu * (1.0 - np.exp(-t / tau))
        lam = f.rate(u)
        lam_prev = np.concatenate(([lam_end], lam[:-1]))
        logS = log_s_end - np.cumsum(0.5 * dt * (lam + lam_prev))
        t_parts.append(t)
        lam_parts.append(lam)
        logS_parts.append(logS)
        total += chunk
        if logS[-1] < floor_log:
            break
        if total > MAX_ISI_POINTS:
            raise ValueError(
                "ISI survival decays too slowly; the renewal integral "
                "appears divergent for these parameters"
            )
        t_end = float(t[-1])
        lam_end = float(lam[-1])
        log_s_end = float(logS[-1])

    t = np.concatenate([[0.0]] + t_parts)
    lam = np.concatenate([[float(f.rate(0.0))]] + lam_parts)
    logS = np.concatenate([[0.0]] + logS_parts)
    keep = logS >= floor_log
    keep[np.argmin(keep)] = True  # retain one sub-floor point for the tail
    return t[keep], lam[keep], np.exp(logS[keep])


def firing_rate(params: PopulationParams) -> float:
    """Stationary rate of the isolated renewal cell, 1 / integral of S."""
    t, _, S = _isi_kernel(params)
    return float(1.0 / np.trapezoid(S, t))


def isi_density(params: PopulationParams, t_grid) -> np.ndarray:
    """Interspike-interval density lambda(t|0) * S(t|0) on the given grid.

    Beyond the survival floor (S < 1e-10) the density is truncated to 0.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if np.any(t_grid < 0):
        raise ValueError("t_grid must be nonnegative")
    mu = _require_renewal(params)
    t, _, S = _isi_kernel(params)
    logS = np.interp(t_grid, t, np.log(np.maximum(S, 1e-300)))
    u = mu * (1.0 - np.exp(-t_grid / params.tau_m))
    dens = params.f.rate(u) * np.exp(logS)
    dens[t_grid > t[-1]] = 0.0
    return dens


def renewal_psd(params: PopulationParams, freqs) -> Spectrum:
    """Analytic activity spectrum of N independent renewal cells.

    C(f) = (r/N) * (1 - |P(f)|^2) / |1 - P(f)|^2 with P the Fourier
    transform of the ISI density, evaluated at the (strictly positive)
    frequencies given.
    """
    freqs = np.asarray(freqs, dtype=float)
    if np.any(freqs <= 0):
        raise ValueError("frequencies must be strictly positive")
    t, lam, S = _isi_kernel(params)
    dens = lam * S
    w = np.empty_like(t)  # trapezoid weights
    w[1:-1] = 0.5 * (t[2:] - t[:-2])
    w[0] = 0.5 * (t[1] - t[0])
    w[-1] = 0.5 * (t[-1] - t[-2])
    mass = float(np.dot(w, dens))
    if abs(mass - 1.0) > 1e-6:
        warnings.warn(
            f"ISI density mass {mass} deviates from 1 by more than 1e-6",
            stacklevel=2,
        )
    r = 1.0 / float(np.dot(w, S))

    # pin the transform's zero-frequency value to the exact density mass
    # 1 - S(t_end); the low-frequency limit hinges on a cancellation at the
    # 1e-8 scale that raw quadrature mass bias would destroy
    wd = w * dens * ((1.0 - S[-1]) / mass)
    power = np.empty_like(freqs)
    block = 64
    for i in range(0, freqs.size, block):
        fb = freqs[i : i + block]
        ph = np.exp(-2j * np.pi * fb[:, None] * t[None, :])
        p_isi = ph @ wd
        power[i : i + block] = (
            (1.0 - np.abs(p_isi) ** 2) / np.abs(1.0 - p_isi) ** 2
        )
    power *= r / params.N
    return Spectrum(freqs=freqs, power=power, segment_T=math.inf, n_segments=0)


def isi_moments(params: PopulationParams):
    """(mean, cv) of the ISI by the same quadrature as the spectrum."""
    t, lam, S = _isi_kernel(params)
    dens = lam * S
    m0 = np.trapezoid(dens, t)
    m1 = np.trapezoid(t * dens, t) / m0
    m2 = np.trapezoid(t * t * dens, t) / m0
    var = m2 - m1 * m1
    return float(m1), float(math.sqrt(max(var, 0.0)) / m1)


def mass_stats(trace: ActivityTrace, t_start: float = 0.0,
               t_end: float | None = None) -> dict:
    """Mass summary over [t_start, t_end]: mean, sd, min, extinction_time.

    extinction_time is the first time in the window where the mass is
    <= 1e-9 with zero activity, or None.
    """
    times = trace.times
    if t_end is None:
        t_end = float(times[-1])
    sel = (times >= t_start) & (times <= t_end)
    m = trace.mass[sel]
    a = trace.A[sel]
    tw = times[sel]
    if m.size == 0:
        raise ValueError("empty selection window")
    dead = (m <= 1e-9) & (a == 0.0)
    idx = np.nonzero(dead)[0]
    return {
        "mean": float(m.mean()),
        "sd": float(m.std()),
        "min": float(m.min()),
        "extinction_time": float(tw[idx[0]]) if idx.size else None,
    }
