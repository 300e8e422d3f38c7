"""Physical domain types: ion species, Gaussian pulses, laser fields, trap motion.

All frequencies are stored as angular frequencies (rad/s). The helpers
``mhz``/``khz`` convert from the "frequency / 2pi" numbers used on the
user-facing side.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.constants import atomic_mass, k as K_B

TWO_PI = 2.0 * math.pi


def mhz(value: float) -> float:
    """Angular frequency (rad/s) of ``value`` MHz."""
    return TWO_PI * value * 1e6


def khz(value: float) -> float:
    return TWO_PI * value * 1e3


def to_mhz(omega: float) -> float:
    return omega / (TWO_PI * 1e6)


class UnknownIonError(KeyError):
    pass


@dataclass(frozen=True)
class IonSpecies:
    """Level data of an alkali-earth-like ion with no nuclear spin.

    Levels: 1 = S1/2, 2 = P1/2, 3 = D3/2, 4 = P3/2, 5 = D5/2.
    Fields A (1-2), B (3-2), C (3-4), D (5-4) have wavelengths
    ``wavelengths[0..3]``.
    """

    name: str
    mass: float  # kg
    wavelengths: tuple[float, float, float, float]  # m, fields A..D
    gamma21: float
    gamma23: float
    gamma41: float
    gamma43: float
    gamma45: float
    gamma31: float
    gamma51: float
    doppler_temperature: float  # K

    def __post_init__(self):
        values = (self.mass, *self.wavelengths, self.gamma21, self.gamma23,
                  self.gamma41, self.gamma43, self.gamma45, self.gamma31,
                  self.gamma51, self.doppler_temperature)
        if not all(v > 0 for v in values):
            raise ValueError(f"{self.name}: all rates, wavelengths and masses must be positive")

    @property
    def wavelength(self) -> dict[str, float]:
        return dict(zip("ABCD", self.wavelengths))

    def wavenumber(self, field_name: str) -> float:
        return TWO_PI / self.wavelength[field_name]

    def decay_channels(self, include_metastable: bool = False) -> dict[tuple[int, int], float]:
        """Spontaneous decay rates keyed by (upper, lower) level."""
        channels = {
            (2, 1): self.gamma21,
            (2, 3): self.gamma23,
            (4, 1): self.gamma41,
            (4, 3): self.gamma43,
            (4, 5): self.gamma45,
        }
        if include_metastable:
            channels[(3, 1)] = self.gamma31
            channels[(5, 1)] = self.gamma51
        return channels


def _species(name, isotope, lam_nm, g_mhz, g_hz, td_mk):
    return IonSpecies(
        name=name,
        mass=isotope * atomic_mass,
        wavelengths=tuple(x * 1e-9 for x in lam_nm),
        gamma21=mhz(g_mhz[0]),
        gamma23=mhz(g_mhz[1]),
        gamma41=mhz(g_mhz[2]),
        gamma43=mhz(g_mhz[3]),
        gamma45=mhz(g_mhz[4]),
        gamma31=TWO_PI * g_hz[0],
        gamma51=TWO_PI * g_hz[1],
        doppler_temperature=td_mk * 1e-3,
    )


# Wavelengths in nm (A, B, C, D); rates as Gamma/2pi in MHz (21, 23, 41, 43, 45)
# and Hz (31, 51); Doppler temperature in mK.
ION_DATABASE: dict[str, IonSpecies] = {
    "Ca40": _species("Ca40", 40, (397, 866, 850, 854), (21, 1.7, 22, 0.18, 1.6), (0.15, 0.15), 0.50),
    "Sr88": _species("Sr88", 88, (422, 1092, 1004, 1033), (20, 1.5, 23, 0.18, 1.4), (0.40, 0.46), 0.49),
    "Ba138": _species("Ba138", 138, (493, 650, 585, 614), (14, 5.3, 19, 0.76, 5.9), (0.009, 0.003), 0.35),
    "Hg202": _species("Hg202", 202, (194, 10670, 991, 398), (69, 0.05, 168, 0.48, 40), (1.62, 7.96), 1.7),
}


def ion_lookup(name: str) -> IonSpecies:
    try:
        return ION_DATABASE[name]
    except KeyError:
        valid = ", ".join(sorted(ION_DATABASE))
        raise UnknownIonError(f"unknown ion {name!r}; valid ions: {valid}") from None


def micromotion_velocity_from_temperature(species: IonSpecies, temperature: float) -> float:
    """Peak micromotion velocity for a temperature, from k_B T = m v^2."""
    if temperature < 0:
        raise ValueError("temperature must be non-negative")
    return math.sqrt(K_B * temperature / species.mass)


def temperature_from_velocity(species: IonSpecies, velocity: float) -> float:
    return species.mass * velocity**2 / K_B


@dataclass(frozen=True)
class GaussianPulse:
    """Gaussian Rabi-frequency envelope with a constant residual floor.

    ``width`` is the full width at 1/e height. The floor models leakage
    light when the pulse generator is nominally off.
    """

    peak_rabi: float
    width: float
    center: float = 0.0
    residual_floor: float = 0.0

    def __post_init__(self):
        if self.width <= 0:
            raise ValueError("pulse width must be positive")
        if not 0 <= self.residual_floor <= self.peak_rabi:
            raise ValueError("need 0 <= residual_floor <= peak_rabi")

    def __call__(self, t):
        return pulse_amplitude(self, t)


def pulse_amplitude(p: GaussianPulse, t):
    x = (np.asarray(t, dtype=float) - p.center) / (0.5 * p.width)
    out = np.maximum(p.peak_rabi * np.exp(-x * x), p.residual_floor)
    return float(out) if out.ndim == 0 else out


# lower level, upper level, role
TRANSITIONS = {
    "A": (1, 2, "pump"),
    "B": (3, 2, "stokes"),
    "C": (3, 4, "pump"),
    "D": (5, 4, "stokes"),
}


@dataclass(frozen=True)
class LaserField:
    """One laser driving a dipole transition of the five-level scheme.

    ``detuning`` follows Delta_ij = (E_i - E_j)/hbar - omega with i the upper
    level, so positive values put the laser below resonance. ``linewidth``
    is the phase-diffusion rate (rad/s) applied to coherences it connects.
    """

    name: str
    pulse: GaussianPulse
    detuning: float = 0.0
    linewidth: float = 0.0

    def __post_init__(self):
        if self.name not in TRANSITIONS:
            raise ValueError(f"unknown field {self.name!r}; expected one of A, B, C, D")
        if self.linewidth < 0:
            raise ValueError("linewidth must be non-negative")

    @property
    def transition(self) -> tuple[int, int]:
        lower, upper, _ = TRANSITIONS[self.name]
        return lower, upper

    @property
    def role(self) -> str:
        return TRANSITIONS[self.name][2]


class LambdaUndefinedError(ValueError):
    pass


@dataclass(frozen=True)
class PulseSchedule:
    """Geometry of one counterintuitive Gaussian pulse pair.

    ``delay`` is the pump centre minus the Stokes centre; positive values
    mean the Stokes pulse comes first.
    """

    width: float
    delay: float
    pump_peak: float
    stokes_peak: float
    one_photon_detuning: float = 0.0
    center: float = 0.0

    @classmethod
    def from_eta(cls, width, eta, pump_peak, stokes_peak, one_photon_detuning=0.0, center=0.0):
        return cls(width, eta * width / math.sqrt(2.0), pump_peak, stokes_peak,
                   one_photon_detuning, center)

    @property
    def eta(self) -> float:
        return math.sqrt(2.0) * self.delay / self.width

    @property
    def r(self) -> float:
        return self.pump_peak / self.stokes_peak

    @property
    def lambda_(self) -> float:
        if self.one_photon_detuning == 0:
            raise LambdaUndefinedError("Lambda is undefined on one-photon resonance")
        return (self.pump_peak * self.stokes_peak * self.width
                / (16.0 * math.sqrt(2.0) * abs(self.one_photon_detuning)))

    @property
    def pump_center(self) -> float:
        return self.center + 0.5 * self.delay

    @property
    def stokes_center(self) -> float:
        return self.center - 0.5 * self.delay

    def pulses(self, residual_fraction: float = 0.0) -> tuple[GaussianPulse, GaussianPulse]:
        """(pump, Stokes) envelopes, each with floor ``residual_fraction * peak``."""
        pump = GaussianPulse(self.pump_peak, self.width, self.pump_center,
                             residual_fraction * self.pump_peak)
        stokes = GaussianPulse(self.stokes_peak, self.width, self.stokes_center,
                               residual_fraction * self.stokes_peak)
        return pump, stokes


@dataclass(frozen=True)
class TrapMotion:
    """Classical one-dimensional micromotion along the common beam axis."""

    rf_frequency: float = mhz(16.8)
    peak_velocity: float = 0.0
    phase: float = 0.0

    def __post_init__(self):
        if self.peak_velocity < 0:
            raise ValueError("peak velocity must be non-negative")
        if self.peak_velocity > 0 and self.rf_frequency <= 0:
            raise ValueError("rf frequency must be positive when the ion moves")

    def doppler_factor(self, t):
        """-v cos(Omega_RF t + phi); multiply by a wavenumber to get a detuning shift."""
        return -self.peak_velocity * np.cos(self.rf_frequency * t + self.phase)


def two_photon_modulation_ratio(species: IonSpecies, stage: int) -> float:
    """Two-photon Doppler depth relative to the pump's one-photon depth, |1 - lambda_p/lambda_s|."""
    lam = species.wavelength
    pump, stokes = ("A", "B") if stage == 1 else ("C", "D")
    return abs(1.0 - lam[pump] / lam[stokes])


def export_ion_table(path) -> None:
    """Write the ion database as one ``key = value`` record block per ion."""
    lines = []
    for ion in ION_DATABASE.values():
        lines.append(f"[{ion.name}]")
        lines.append(f"mass_u = {ion.mass / atomic_mass:.0f}")
        for name, lam in zip("ABCD", ion.wavelengths):
            lines.append(f"lambda_{name}_nm = {lam * 1e9:g}")
        for key in ("gamma21", "gamma23", "gamma41", "gamma43", "gamma45"):
            lines.append(f"{key}_over_2pi_mhz = {to_mhz(getattr(ion, key)):g}")
        for key in ("gamma31", "gamma51"):
            lines.append(f"{key}_over_2pi_hz = {getattr(ion, key) / TWO_PI:g}")
        lines.append(f"doppler_temperature_mk = {ion.doppler_temperature * 1e3:g}")
        lines.append("")
    with open(path, "w") as fh:
        fh.write("\n".join(lines))
