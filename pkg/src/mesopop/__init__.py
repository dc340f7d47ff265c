"""Simulation and analysis toolkit for finite-size spiking neuronal populations.

Units are fixed package-wide: time in seconds, membrane potentials in mV,
rates in Hz.
"""

__version__ = "0.1.0"

from .core import (
    Constant,
    Exponential,
    NumericsError,
    PopulationParams,
    Series,
    Sigmoid,
    flow_free,
    hazard,
    survival_decrement,
)
from .meso import FULL, NAIVE, LambdaMode, meso_init, meso_simulate, meso_step
from .micro import micro_simulate, micro_step
from .macro import NonConvergence, macro_solve, macro_stationary_rate
from .multi import MultiPopConfig, multi_simulate, multi_step
from .pdmp import (
    CoupledRun,
    ParticleMeasure,
    lyapunov_diagnostic,
    pdmp_couple,
    pdmp_evolve,
    pdmp_intensity,
    pdmp_jump,
    pdmp_simulate,
)
from .analysis import (
    Spectrum,
    firing_rate,
    isi_density,
    mass_stats,
    psd_bartlett,
    renewal_psd,
)
from .traces import ActivityTrace

__all__ = [
    "ActivityTrace",
    "Constant",
    "CoupledRun",
    "Exponential",
    "FULL",
    "LambdaMode",
    "MultiPopConfig",
    "NAIVE",
    "NonConvergence",
    "NumericsError",
    "ParticleMeasure",
    "PopulationParams",
    "Series",
    "Sigmoid",
    "Spectrum",
    "firing_rate",
    "flow_free",
    "hazard",
    "isi_density",
    "lyapunov_diagnostic",
    "macro_solve",
    "macro_stationary_rate",
    "mass_stats",
    "meso_init",
    "meso_simulate",
    "meso_step",
    "micro_simulate",
    "micro_step",
    "multi_simulate",
    "multi_step",
    "pdmp_couple",
    "pdmp_evolve",
    "pdmp_intensity",
    "pdmp_jump",
    "pdmp_simulate",
    "psd_bartlett",
    "renewal_psd",
    "survival_decrement",
]
