"""Simulation of double-STIRAP electron shelving in trapped ions.

The package models the two-stage transfer of one qubit level to a long-lived
metastable state with density-matrix (Bloch) equations. Submodules:

``domain``
    Ion database, Gaussian pulses, laser fields and trap micromotion.
``analytic``
    Dressed states, the adiabaticity function and closed-form predictions.
``liouvillian``
    Lindblad generator assembly and time evolution of the level chain.
``zeeman``
    Eight-sublevel model of the first stage with impure polarisation.
``scenario``, ``sweep``, ``cli``
    Scenario files, parameter scans, result tables and the command line.
"""
from .domain import (IonSpecies, LaserField, PulseSchedule, TrapMotion, GaussianPulse,
                     ion_lookup, mhz, khz, to_mhz)
from .liouvillian import SystemConfig, Trajectory, evolve, stage_config, transfer_efficiency
from .scenario import Scenario, load_scenario, preset_names

__all__ = [
    "GaussianPulse", "IonSpecies", "LaserField", "PulseSchedule", "Scenario", "SystemConfig",
    "Trajectory", "TrapMotion", "evolve", "ion_lookup", "khz", "load_scenario", "mhz",
    "preset_names", "stage_config", "to_mhz", "transfer_efficiency",
]
__version__ = "0.1.0"
