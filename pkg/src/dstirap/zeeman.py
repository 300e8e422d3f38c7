"""First-stage STIRAP with the magnetic sublevels of S1/2, P1/2 and D3/2.

Eight states: the qubit pair |down> = S1/2 m=-1/2 and |up> = S1/2 m=+1/2,
the two P1/2 sublevels and the four D3/2 sublevels. The pump A may carry
sigma+, sigma- and pi components; the Stokes B is normally pure sigma-.
A sigma+ photon absorbed from a lower sublevel raises m by one, so the
ideal scheme runs |down> -> P1/2(+1/2) <- D3/2(+3/2) and leaves |up> alone.

Coupling normalisation
----------------------
Each line is weighted by the Clebsch-Gordan coefficient
<J m; 1 q | J' m'> of absorption from the lower level (J, m) to P1/2 (J', m').
Coefficients are divided by the largest one of their transition, so a
component amplitude equals the Rabi frequency of the strongest line it
drives: the sigma lines of S1/2-P1/2 (|c|^2 = 2/3, pi lines 1/3 relative 1/2)
and the stretched lines D3/2(+-3/2)-P1/2(+-1/2) of D3/2-P1/2
(|c|^2 = 1/2, then 1/3 and 1/6). Spontaneous decay out of each P1/2
sublevel uses the unnormalised squares as branching ratios so the total
rates to S1/2 and D3/2 stay Gamma21 and Gamma23.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import partial

import numpy as np
from scipy.constants import physical_constants

from ._parallel import ordered_map
from .domain import GaussianPulse, IonSpecies, PulseSchedule, TrapMotion, ion_lookup, mhz
from .liouvillian import ConfigError, Generator, Trajectory, evolve_generator, pure_state

SUBLEVELS = ("S-1/2", "S+1/2", "P-1/2", "P+1/2", "D-3/2", "D-1/2", "D+1/2", "D+3/2")
DOWN, UP = "S-1/2", "S+1/2"
INITIAL_STATES = {"down": DOWN, "up": UP}

# Lande g-factors of S1/2, P1/2 and D3/2 in the LS-coupling limit.
LANDE_G = {"S": 2.0, "P": 2.0 / 3.0, "D": 4.0 / 5.0}
BOHR_MAGNETON_HZ_PER_T = physical_constants["Bohr magneton in Hz/T"][0]

# Polarisation name -> change of m on absorption.
POLARIZATIONS = {"sigma_plus": 1, "sigma_minus": -1, "pi": 0}

_SQ = math.sqrt
# <J m; 1 q | 1/2 m'> keyed by (2m, q); the upper sublevel is m' = m + q.
_CG_S = {(-1, 0): -_SQ(1 / 3), (-1, 1): -_SQ(2 / 3), (1, -1): _SQ(2 / 3), (1, 0): _SQ(1 / 3)}
_CG_D = {(-3, 1): _SQ(1 / 2), (-1, 0): -_SQ(1 / 3), (-1, 1): _SQ(1 / 6),
         (1, -1): _SQ(1 / 6), (1, 0): -_SQ(1 / 3), (3, -1): _SQ(1 / 2)}
_TABLES = {"A": ("S", _CG_S), "B": ("D", _CG_D)}


def _label(term: str, m2: int) -> str:
    return f"{term}{'+' if m2 > 0 else '-'}{abs(m2)}/2"


def magnetic_quantum_number(label: str) -> float:
    """m of a sublevel label such as ``"D+3/2"``."""
    return int(label[1:-2]) / 2


def clebsch_gordan(field_name: str, lower_m2: int, q: int) -> float:
    """Raw coefficient of a line, 0.0 when the selection rules forbid it."""
    return _TABLES[field_name][1].get((lower_m2, q), 0.0)


def dipole_lines(field_name: str, q: int) -> list[tuple[str, str, float]]:
    """(lower, upper, relative coefficient) of every line a component drives."""
    term, table = _TABLES[field_name]
    strongest = max(abs(c) for c in table.values())
    return [(_label(term, m2), _label("P", m2 + 2 * qq), c / strongest)
            for (m2, qq), c in sorted(table.items()) if qq == q]


@dataclass(frozen=True)
class ZeemanBasis:
    """The eight sublevels and optional per-sublevel energy shifts (rad/s)."""

    shifts: dict = field(default_factory=dict)

    def __post_init__(self):
        unknown = set(self.shifts) - set(SUBLEVELS)
        if unknown:
            raise ConfigError(f"unknown sublevels {sorted(unknown)}")

    labels = SUBLEVELS

    @property
    def dim(self) -> int:
        return len(SUBLEVELS)

    def index(self, label: str) -> int:
        return SUBLEVELS.index(label)

    def shift(self, label: str) -> float:
        return float(self.shifts.get(label, 0.0))

    @classmethod
    def from_magnetic_field(cls, field: float) -> "ZeemanBasis":
        """Linear Zeeman shifts 2 pi mu_B g m B for a field ``field`` in tesla."""
        return cls({lab: 2 * math.pi * BOHR_MAGNETON_HZ_PER_T * LANDE_G[lab[0]]
                    * magnetic_quantum_number(lab) * field for lab in SUBLEVELS})

    def raman_offset(self) -> float:
        """Stokes-minus-pump detuning putting |down> -> D3/2(+3/2) on two-photon resonance."""
        return self.shift("D+3/2") - self.shift(DOWN)


@dataclass(frozen=True)
class PolarizedField:
    """A or B laser split into sigma+, sigma- and pi Gaussian components."""

    name: str
    sigma_plus: GaussianPulse | None = None
    sigma_minus: GaussianPulse | None = None
    pi: GaussianPulse | None = None
    detuning: float = 0.0
    linewidth: float = 0.0

    def __post_init__(self):
        if self.name not in _TABLES:
            raise ConfigError(f"polarised fields exist for A and B only, got {self.name!r}")
        if self.linewidth < 0:
            raise ConfigError("linewidth must be non-negative")

    def components(self) -> list[tuple[int, GaussianPulse]]:
        return [(POLARIZATIONS[k], getattr(self, k)) for k in POLARIZATIONS
                if getattr(self, k) is not None]

    @property
    def ratios(self) -> tuple[float, float]:
        """(Omega^- / Omega^+, Omega^0 / Omega^+) of the peak amplitudes."""
        if self.sigma_plus is None or self.sigma_plus.peak_rabi == 0:
            raise ValueError("ratios are defined relative to a nonzero sigma+ component")
        ref = self.sigma_plus.peak_rabi
        minus = self.sigma_minus.peak_rabi if self.sigma_minus else 0.0
        pi = self.pi.peak_rabi if self.pi else 0.0
        return minus / ref, pi / ref


@dataclass(frozen=True)
class ZeemanConfig:
    species: IonSpecies
    pump: PolarizedField
    stokes: PolarizedField
    window: tuple[float, float]
    basis: ZeemanBasis = ZeemanBasis()
    motion: TrapMotion = TrapMotion()
    decay: bool = True

    def __post_init__(self):
        if (self.pump.name, self.stokes.name) != ("A", "B"):
            raise ConfigError("the pump must be field A and the Stokes field B")
        if not self.window[1] > self.window[0]:
            raise ConfigError("window end must be after window start")


def _coupling(basis: ZeemanBasis, field_name: str, q: int) -> np.ndarray:
    v = np.zeros((basis.dim, basis.dim), dtype=complex)
    for lower, upper, c in dipole_lines(field_name, q):
        i, j = basis.index(lower), basis.index(upper)
        v[i, j] = v[j, i] = 0.5 * c
    return v


def _frame(cfg: ZeemanConfig):
    """Rotating-frame energies and Doppler wavenumbers of the sublevels."""
    ka = cfg.species.wavenumber("A")
    kb = cfg.species.wavenumber("B")
    base = {"S": (0.0, 0.0),
            "P": (cfg.pump.detuning, ka),
            "D": (cfg.pump.detuning - cfg.stokes.detuning, ka - kb)}
    e = np.array([base[lab[0]][0] + cfg.basis.shift(lab) for lab in SUBLEVELS])
    k = np.array([base[lab[0]][1] for lab in SUBLEVELS])
    return e, k


def _decay_operators(cfg: ZeemanConfig) -> list[np.ndarray]:
    if not cfg.decay:
        return []
    basis = cfg.basis
    ops = []
    for name, rate in (("A", cfg.species.gamma21), ("B", cfg.species.gamma23)):
        term, table = _TABLES[name]
        for q in (-1, 0, 1):
            c = np.zeros((basis.dim, basis.dim), dtype=complex)
            for (m2, qq), cg in table.items():
                if qq == q:
                    c[basis.index(_label(term, m2)), basis.index(_label("P", m2 + 2 * q))] = (
                        math.sqrt(rate) * cg)
            if np.any(c):
                ops.append(c)
    return ops


def _dephasing(cfg: ZeemanConfig) -> np.ndarray:
    ga, gb = cfg.pump.linewidth, cfg.stokes.linewidth
    pair = {frozenset("SP"): ga, frozenset("PD"): gb, frozenset("SD"): ga + gb}
    n = len(SUBLEVELS)
    g = np.zeros((n, n))
    for a, la in enumerate(SUBLEVELS):
        for b, lb in enumerate(SUBLEVELS):
            if la[0] != lb[0]:
                g[a, b] = pair[frozenset(la[0] + lb[0])]
    return g


def build_zeeman_generator(cfg: ZeemanConfig) -> Generator:
    energies, kv = _frame(cfg)
    couplings = [(_coupling(cfg.basis, f.name, q), pulse)
                 for f in (cfg.pump, cfg.stokes) for q, pulse in f.components()]
    return Generator(labels=SUBLEVELS, energies=energies, couplings=couplings, doppler=kv,
                     motion=cfg.motion, jumps=_decay_operators(cfg), dephasing=_dephasing(cfg))


def zeeman_generator(pump: PolarizedField, stokes: PolarizedField, basis: ZeemanBasis,
                     t: float, species: IonSpecies | None = None) -> np.ndarray:
    """Rotating-frame 8x8 Hamiltonian (hbar = 1) at time ``t``."""
    species = species or ion_lookup("Ca40")
    cfg = ZeemanConfig(species, pump, stokes, (t - 1.0, t + 1.0), basis, decay=False)
    return build_zeeman_generator(cfg).hamiltonian(t)


def first_stage_config(species: IonSpecies, ratio_sigma_minus=0.0, ratio_pi=0.0, *,
                       peak_rabi=mhz(300), detuning=mhz(300), width=2e-6, delay=1.3e-6,
                       two_photon_detuning=0.0, margin_widths=2.0, basis=ZeemanBasis(),
                       decay=True) -> ZeemanConfig:
    """Counterintuitive first-stage pulse pair with an impure pump polarisation.

    Defaults are the polarisation-study parameters: Omega_A^+ = Omega_B =
    2pi x 300 MHz, Delta = 2pi x 300 MHz, tau = 2 us, delay 1.3 us.
    """
    if ratio_sigma_minus < 0 or ratio_pi < 0:
        raise ConfigError("polarisation ratios must be non-negative")
    sched = PulseSchedule(width, delay, peak_rabi, peak_rabi, detuning)
    pump_pulse, stokes_pulse = sched.pulses()

    def scaled(ratio):
        return replace(pump_pulse, peak_rabi=ratio * peak_rabi) if ratio > 0 else None

    pump = PolarizedField("A", sigma_plus=pump_pulse, sigma_minus=scaled(ratio_sigma_minus),
                          pi=scaled(ratio_pi), detuning=detuning)
    stokes = PolarizedField("B", sigma_minus=stokes_pulse,
                            detuning=detuning + two_photon_detuning)
    lo = min(sched.pump_center, sched.stokes_center) - margin_widths * width
    hi = max(sched.pump_center, sched.stokes_center) + margin_widths * width
    return ZeemanConfig(species, pump, stokes, (lo, hi), basis, decay=decay)


def evolve_zeeman(cfg: ZeemanConfig, init: str = "down", samples=500, **kwargs) -> Trajectory:
    """Integrate from all population in ``init`` ("down", "up" or a sublevel label)."""
    label = INITIAL_STATES.get(init, init)
    if label not in SUBLEVELS:
        raise ConfigError(f"unknown initial state {init!r}")
    rho0 = pure_state(len(SUBLEVELS), SUBLEVELS.index(label))
    return evolve_generator(build_zeeman_generator(cfg), rho0, cfg.window, samples, **kwargs)


def qubit_populations(cfg: ZeemanConfig, init: str, **kwargs) -> tuple[float, float]:
    """Final (P_down, P_up)."""
    traj = evolve_zeeman(cfg, init, samples=0, **kwargs)
    return traj.final_population(DOWN), traj.final_population(UP)


def detection_error(init: str, p_down: float, p_up: float) -> float:
    """Probability of a wrong readout after shelving.

    A shelved |down> should leave no population in either qubit sublevel;
    a |up> should stay put and fluoresce.
    """
    if init == "down":
        return p_down + p_up
    if init == "up":
        return 1.0 - p_up
    raise ValueError(f"init must be 'down' or 'up', got {init!r}")


@dataclass
class ProjectionScan:
    """Final qubit populations over a grid of polarisation ratios."""

    rows: list  # (ratio_sigma_minus, ratio_pi, init, P_down, P_up)

    columns = ("ratio_sigma_minus", "ratio_pi", "init_state", "P_down_final", "P_up_final")

    def surface(self, init: str, which: str = "P_down"):
        """Grid of one population: rows follow ratio_pi, columns ratio_sigma_minus."""
        col = {"P_down": 3, "P_up": 4}[which]
        rm = sorted({r[0] for r in self.rows})
        rp = sorted({r[1] for r in self.rows})
        out = np.full((len(rp), len(rm)), np.nan)
        for r in self.rows:
            if r[2] == init:
                out[rp.index(r[1]), rm.index(r[0])] = r[col]
        return np.array(rm), np.array(rp), out

    def errors(self):
        return [(r[0], r[1], r[2], detection_error(r[2], r[3], r[4])) for r in self.rows]

    def error_surface(self, init: str):
        """Detection-error grid for one initial state, laid out as :meth:`surface`."""
        rm, rp, pd = self.surface(init, "P_down")
        _, _, pu = self.surface(init, "P_up")
        return rm, rp, detection_error(init, pd, pu)

    def to_table(self, path, metadata=()) -> None:
        """Write ``# key = value`` metadata lines, the column header, then one row per point."""
        with open(path, "w") as fh:
            for key, value in metadata:
                fh.write(f"# {key} = {value}\n")
            fh.write(",".join(self.columns) + "\n")
            for rm, rp, init, pd, pu in self.rows:
                fh.write(f"{rm:.10g},{rp:.10g},{init},{pd:.10g},{pu:.10g}\n")

    @classmethod
    def from_table(cls, path) -> "ProjectionScan":
        rows, header = [], None
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if header is None:
                    header = line.split(",")
                    if tuple(header) != cls.columns:
                        raise ValueError(f"unexpected header {header}")
                    continue
                rm, rp, init, pd, pu = line.split(",")
                rows.append((float(rm), float(rp), init, float(pd), float(pu)))
        return cls(rows)


def _scan_point(args, species, config_kwargs, integrator_kwargs):
    rm, rp, init = args
    cfg = first_stage_config(species, rm, rp, **config_kwargs)
    pd, pu = qubit_populations(cfg, init, **integrator_kwargs)
    return (rm, rp, init, pd, pu)


def projection_error_scan(species: IonSpecies, ratios_sigma_minus, ratios_pi,
                          inits=("down", "up"), jobs=1, config_kwargs=None,
                          **integrator_kwargs) -> ProjectionScan:
    """Final qubit populations for every (sigma-, pi, initial state) combination."""
    for init in inits:
        if init not in INITIAL_STATES:
            raise ConfigError(f"unknown initial state {init!r}")
    grid = [(float(rm), float(rp), init) for init in inits
            for rp in ratios_pi for rm in ratios_sigma_minus]
    func = partial(_scan_point, species=species, config_kwargs=config_kwargs or {},
                   integrator_kwargs=integrator_kwargs)
    return ProjectionScan(ordered_map(func, grid, jobs))
