"""Trace containers and CSV/manifest I/O.

All CSV files are UTF-8 with LF line endings, a mandatory header row and
%.10g number formatting.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import Constant, Exponential, PopulationParams, Series, Sigmoid

FMT = "%.10g"


@dataclass
class ActivityTrace:
    """Time-binned population activity.

    A        empirical activity per bin, (k/N)/dt (Hz)
    Abar     expected rate per bin (Hz)
    mass     survival-weighted accumulated spike fractions M_t
    p_lambda per-step recovered-mass firing probability (0 where undefined)
    Row k corresponds to time k*dt; row 0 is the initial condition.
    """

    dt: float
    A: np.ndarray
    Abar: np.ndarray
    mass: np.ndarray
    p_lambda: np.ndarray
    seed: int | None = None
    params: dict = field(default_factory=dict)

    def __len__(self):
        return self.A.size

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.A.size)

    def lambda_rate(self) -> np.ndarray:
        """Recovered-mass modulating rate in Hz, -ln(1 - P_Lambda)/dt."""
        p = np.clip(self.p_lambda, 0.0, 1.0 - 1e-15)
        return -np.log1p(-p) / self.dt


def params_to_dict(p: PopulationParams) -> dict:
    """JSON-serializable snapshot of a parameter set."""
    f = p.f
    if isinstance(f, Exponential):
        fd = {"kind": "exponential", "c": f.c, "theta": f.theta, "delta_u": f.delta_u}
    else:
        fd = {
            "kind": "sigmoid",
            "f_min": f.f_min,
            "f_max": f.f_max,
            "theta": f.theta,
            "slope": f.slope,
        }
    mu = p.mu
    if isinstance(mu, Constant):
        mud = mu.mu
    else:
        mud = {"dt": mu.dt, "values": list(map(float, mu.values))}
    return {
        "N": int(p.N),
        "tau_m": p.tau_m,
        "mu": mud,
        "J": p.J,
        "f": fd,
        "delta_abs": p.delta_abs,
        "tau_s": p.tau_s,
        "d": p.d,
    }


def params_from_dict(d: dict) -> PopulationParams:
    fd = d["f"]
    kind = fd["kind"]
    if kind == "exponential":
        f = Exponential(c=fd["c"], theta=fd["theta"], delta_u=fd["delta_u"])
    elif kind == "sigmoid":
        f = Sigmoid(f_min=fd["f_min"], f_max=fd["f_max"], theta=fd["theta"], slope=fd["slope"])
    else:
        raise ValueError(f"unknown intensity kind {kind!r}")
    mu = d["mu"]
    if isinstance(mu, dict):
        mu = Series(dt=mu["dt"], values=np.asarray(mu["values"], dtype=float))
    return PopulationParams(
        N=int(d["N"]),
        tau_m=d["tau_m"],
        mu=mu,
        f=f,
        J=d.get("J", 0.0),
        delta_abs=d.get("delta_abs", 0.0),
        tau_s=d.get("tau_s", 0.0),
        d=d.get("d", 0.0),
    )


def _write_csv(path, header: str, columns) -> None:
    data = np.column_stack(columns)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        np.savetxt(fh, data, fmt=FMT, delimiter=",", header=header, comments="")


def write_trace_csv(path, trace: ActivityTrace) -> None:
    """Single-population trace: t,A,Abar,mass,P_Lambda."""
    _write_csv(
        path,
        "t,A,Abar,mass,P_Lambda",
        (trace.times, trace.A, trace.Abar, trace.mass, trace.p_lambda),
    )


def write_multi_trace_csv(path, trace: ActivityTrace, pop_index: int) -> None:
    """Per-population trace of a multi-population run: t,A_k,Abar_k,mass_k."""
    k = pop_index + 1
    _write_csv(
        path,
        f"t,A_{k},Abar_{k},mass_{k}",
        (trace.times, trace.A, trace.Abar, trace.mass),
    )


def write_raster_csv(path, times, neurons) -> None:
    _write_csv(path, "t,neuron", (np.asarray(times, dtype=float), np.asarray(neurons)))


def write_spectrum_csv(path, freqs, power) -> None:
    _write_csv(path, "f,power", (freqs, power))


def write_jump_log_csv(path, times, sides=None) -> None:
    """Jump log; `sides` (strings among both/left/right) only for coupled runs."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if sides is None:
            fh.write("t\n")
            for t in times:
                fh.write(FMT % t + "\n")
        else:
            fh.write("t,side\n")
            for t, s in zip(times, sides):
                fh.write(FMT % t + "," + s + "\n")


def read_trace_csv(path) -> ActivityTrace:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    t = data[:, 0]
    dt = float(t[1] - t[0]) if t.size > 1 else 1.0
    ncol = data.shape[1]
    return ActivityTrace(
        dt=dt,
        A=data[:, 1],
        Abar=data[:, 2] if ncol > 2 else np.zeros_like(t),
        mass=data[:, 3] if ncol > 3 else np.ones_like(t),
        p_lambda=data[:, 4] if ncol > 4 else np.zeros_like(t),
    )


def write_manifest(path, config: dict, seed, wall_time_s: float, outputs) -> None:
    from . import __version__

    doc = {
        "config": config,
        "seed": seed,
        "code_version": __version__,
        "wall_time_s": wall_time_s,
        "outputs": [str(o) for o in outputs],
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
