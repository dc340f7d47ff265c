"""Shared primitives: escape-rate nonlinearities, membrane flow, hazard mapping.

All quantities use the package-wide unit convention: time in seconds,
potentials in mV, rates in Hz.  Everything here is a pure function of its
arguments; the parameter types are immutable value objects.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from numba import njit
from scipy.special import expit

EXPONENTIAL_KIND = 0
SIGMOID_KIND = 1


class NumericsError(RuntimeError):
    """A simulation produced a non-finite intermediate (parameter blow-up).

    The offending state (if any) is attached as ``.state`` for post-mortem
    inspection.
    """

    def __init__(self, message: str, state=None):
        super().__init__(message)
        self.state = state


@dataclass(frozen=True)
class Exponential:
    """Unbounded escape rate f(u) = c * exp((u - theta) / delta_u).

    c is the rate at threshold (Hz), theta the soft threshold (mV) and
    delta_u the noise softness (mV).
    """

    c: float = 10.0
    theta: float = 10.0
    delta_u: float = 1.0

    def __post_init__(self):
        if not (self.c > 0 and math.isfinite(self.c)):
            raise ValueError(f"c must be positive and finite, got {self.c}")
        if not (self.delta_u > 0 and math.isfinite(self.delta_u)):
            raise ValueError(f"delta_u must be positive and finite, got {self.delta_u}")
        if not math.isfinite(self.theta):
            raise ValueError(f"theta must be finite, got {self.theta}")

    @property
    def bounded(self) -> bool:
        return False

    @property
    def sup(self) -> float:
        return math.inf

    def rate(self, u):
        """Escape rate in Hz; accepts scalars or arrays."""
        return self.c * np.exp((np.asarray(u, dtype=float) - self.theta) / self.delta_u)

    def coeffs(self):
        """(kind, p0, p1, p2, p3) packing consumed by the compiled kernels."""
        return (EXPONENTIAL_KIND, self.c, self.theta, self.delta_u, 0.0)


@dataclass(frozen=True)
class Sigmoid:
    """Bounded escape rate f(u) = f_min + (f_max - f_min) / (1 + exp(-slope*(u - theta))).

    Strictly increasing with 0 < f_min <= f(u) <= f_max; the bounded family
    required by the exact event-driven simulator.  Defaults are the
    parameters used throughout the bundled jump-process experiments.
    """

    f_min: float = 0.1
    f_max: float = 100.0
    theta: float = 10.0
    slope: float = 1.0

    def __post_init__(self):
        # f_min == f_max is allowed as the degenerate constant intensity
        if not (0 < self.f_min <= self.f_max < math.inf):
            raise ValueError(
                f"need 0 < f_min <= f_max < inf, got f_min={self.f_min}, f_max={self.f_max}"
            )
        if not (self.slope > 0 and math.isfinite(self.slope)):
            raise ValueError(f"slope must be positive and finite, got {self.slope}")
        if not math.isfinite(self.theta):
            raise ValueError(f"theta must be finite, got {self.theta}")

    @property
    def bounded(self) -> bool:
        return True

    @property
    def sup(self) -> float:
        return self.f_max

    def rate(self, u):
        """Escape rate in Hz; accepts scalars or arrays."""
        x = self.slope * (np.asarray(u, dtype=float) - self.theta)
        return self.f_min + (self.f_max - self.f_min) * expit(x)

    def coeffs(self):
        """(kind, p0, p1, p2, p3) packing consumed by the compiled kernels."""
        return (SIGMOID_KIND, self.f_min, self.f_max, self.theta, self.slope)


IntensityFunction = Union[Exponential, Sigmoid]


@dataclass(frozen=True)
class Constant:
    """Time-homogeneous external drive, mu_t = mu (mV)."""

    mu: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.mu):
            raise ValueError(f"mu must be finite, got {self.mu}")

    def grid(self, n_steps: int, dt: float) -> np.ndarray:
        """Drive sampled at step times k*dt, k = 1..n_steps."""
        return np.full(n_steps, self.mu)


@dataclass(frozen=True)
class Series:
    """Sampled external drive with zero-order hold between samples.

    values[i] applies on [i*dt, (i+1)*dt); the last sample extends to
    infinity.
    """

    dt: float
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError(f"series dt must be positive and finite, got {self.dt}")
        if self.values.ndim != 1 or self.values.size == 0:
            raise ValueError("series values must be a non-empty 1-d array")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("series values must be finite")

    def value_at(self, t: float) -> float:
        idx = min(int(t / self.dt), self.values.size - 1)
        return float(self.values[max(idx, 0)])

    def grid(self, n_steps: int, dt: float) -> np.ndarray:
        """Drive sampled (zero-order hold) at step times k*dt, k = 1..n_steps."""
        t = dt * np.arange(1, n_steps + 1)
        idx = np.minimum((t / self.dt).astype(np.int64), self.values.size - 1)
        return self.values[idx]


DriveSignal = Union[Constant, Series]


def as_drive(mu) -> DriveSignal:
    """Coerce a float or DriveSignal into a DriveSignal."""
    if isinstance(mu, (Constant, Series)):
        return mu
    return Constant(float(mu))


@dataclass(frozen=True)
class PopulationParams:
    """Per-population constants.

    N         neuron count
    tau_m     membrane time constant (s)
    mu        external drive (mV); a float, Constant or Series
    J         all-to-all coupling strength (mV); each spike kicks every
              neuron by J/N
    f         escape-rate nonlinearity
    delta_abs absolute refractory period (s); 0 for the base model
    tau_s     synaptic filter time constant (s); 0 = instantaneous coupling
    d         transmission delay (s); 0 = none
    """

    N: int
    tau_m: float
    mu: Union[float, DriveSignal]
    f: IntensityFunction
    J: float = 0.0
    delta_abs: float = 0.0
    tau_s: float = 0.0
    d: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "mu", as_drive(self.mu))
        if not (isinstance(self.N, (int, np.integer)) and self.N >= 1):
            raise ValueError(f"N must be an integer >= 1, got {self.N}")
        if not (self.tau_m > 0 and math.isfinite(self.tau_m)):
            raise ValueError(f"tau_m must be positive and finite, got {self.tau_m}")
        if not math.isfinite(self.J):
            raise ValueError(f"J must be finite, got {self.J}")
        for name in ("delta_abs", "tau_s", "d"):
            v = getattr(self, name)
            if not (v >= 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be >= 0 and finite, got {v}")
        if not isinstance(self.f, (Exponential, Sigmoid)):
            raise TypeError(f"f must be Exponential or Sigmoid, got {type(self.f)!r}")

    def mu_grid(self, n_steps: int, dt: float) -> np.ndarray:
        return self.mu.grid(n_steps, dt)


def flow_free(u, elapsed: float, mu: float, tau_m: float):
    """Deterministic membrane flow without recurrent input.

    Closed form of du/dt = (mu - u)/tau_m over `elapsed` seconds:
    u*exp(-elapsed/tau_m) + mu*(1 - exp(-elapsed/tau_m)).  Accepts scalar or
    array u.
    """
    if elapsed < 0:
        raise ValueError(f"elapsed must be >= 0, got {elapsed}")
    decay = math.exp(-elapsed / tau_m)
    return u * decay + mu * (1.0 - decay)


def hazard(u, f: IntensityFunction):
    """Instantaneous firing intensity f(u) in Hz."""
    return f.rate(u)


def survival_decrement(lam_now, lam_prev, dt: float):
    """Per-step firing probability from the trapezoidal hazard mass.

    P = (lam_now + lam_prev)*dt/2, exponentiated to 1 - exp(-P) when the
    linear value exceeds 0.01.  Result lies in [0, 1); hazard masses beyond
    ~37 saturate to 1.0 in double precision.  Accepts scalars or arrays
    (elementwise branch).
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    p = (np.asarray(lam_now, dtype=float) + np.asarray(lam_prev, dtype=float)) * (0.5 * dt)
    out = np.where(p > 0.01, -np.expm1(-p), p)
    if out.ndim == 0:
        return float(out)
    return out


# ---------------------------------------------------------------------------
# Compiled scalar counterparts, shared by every simulation kernel.
# ---------------------------------------------------------------------------


@njit(cache=True, inline="always")
def rate_scalar(kind, p0, p1, p2, p3, u):
    if kind == EXPONENTIAL_KIND:
        return p0 * math.exp((u - p1) / p2)
    return p0 + (p1 - p0) / (1.0 + math.exp(-p3 * (u - p2)))


@njit(cache=True, inline="always")
def pfire_scalar(lam_now, lam_prev, dt):
    # same operation order as the vectorized survival_decrement, so the two
    # paths agree bit-for-bit
    p = (lam_now + lam_prev) * (0.5 * dt)
    if p > 0.01:
        p = -math.expm1(-p)
    return p
