"""Optical Bloch equations for the five-level scheme and its two Lambda stages.

Levels are numbered as in the ion level scheme: 1 = S1/2, 2 = P1/2,
3 = D3/2, 4 = P3/2, 5 = D5/2. Fields A (1-2) and B (3-2) drive the first
stage, C (3-4) and D (5-4) the second. The Hamiltonian is written in the
rotating frame with couplings Omega/2 and the detunings on the diagonal,
so a single stage reduces to

    H = 1/2 [[0, Oa, 0], [Oa, 2 Da, Ob], [0, Ob, 2 (Da - Db)]].

Density matrices are vectorised row-major: ``vec(A X B) = (A kron B.T) vec(X)``.
"""
from __future__ import annotations

import time as _time
from dataclasses import dataclass, field, replace

import numpy as np

from .domain import IonSpecies, LaserField, TrapMotion
from .integrators import SparseGenerator, dopri5, rk4_fixed

TOPOLOGIES = {
    "stage1": (1, 2, 3),
    # level 1 is kept as the sink of the 4 -> 1 decay so the trace is conserved
    "stage2": (1, 3, 4, 5),
    "full": (1, 2, 3, 4, 5),
}

# chain order of the level scheme and the field on each link
_CHAIN_EDGES = {(1, 2): "A", (2, 3): "B", (3, 4): "C", (4, 5): "D"}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SystemConfig:
    species: IonSpecies
    fields: tuple[LaserField, ...]
    window: tuple[float, float]
    topology: str = "full"
    motion: TrapMotion = TrapMotion()
    decay: bool = True
    metastable_decay: bool = False

    def __post_init__(self):
        if self.topology not in TOPOLOGIES:
            raise ConfigError(f"unknown topology {self.topology!r}")
        object.__setattr__(self, "fields", tuple(self.fields))
        t0, t1 = self.window
        if not t1 > t0:
            raise ConfigError("window end must be after window start")
        names = [f.name for f in self.fields]
        if len(set(names)) != len(names):
            raise ConfigError("each field may appear only once")
        for f in self.fields:
            if not set(f.transition) <= set(self.levels):
                raise ConfigError(f"field {f.name} couples levels {f.transition} "
                                  f"outside the {self.topology} basis")
            if not t0 <= f.pulse.center <= t1:
                raise ConfigError(f"pulse {f.name} centre lies outside the window")

    @property
    def levels(self) -> tuple[int, ...]:
        return TOPOLOGIES[self.topology]

    @property
    def dim(self) -> int:
        return len(self.levels)

    def field(self, name: str) -> LaserField:
        for f in self.fields:
            if f.name == name:
                return f
        raise KeyError(name)

    def index(self, level: int) -> int:
        return self.levels.index(level)

    def replace_field(self, name: str, **changes) -> "SystemConfig":
        fields = tuple(replace(f, **changes) if f.name == name else f for f in self.fields)
        return replace(self, fields=fields)


@dataclass
class Generator:
    """Dense description of a time-dependent Lindblad generator.

    H(t) = diag(energies) + m(t) diag(doppler) + sum_f Omega_f(t) V_f with
    m(t) = -v cos(Omega_RF t + phi). ``dephasing[i, j]`` is the extra decay
    rate of the coherence rho_ij.
    """

    labels: tuple
    energies: np.ndarray
    couplings: list  # [(V_f, GaussianPulse)]
    doppler: np.ndarray
    motion: TrapMotion
    jumps: list = field(default_factory=list)
    dephasing: np.ndarray = None

    def __post_init__(self):
        n = len(self.labels)
        if self.dephasing is None:
            self.dephasing = np.zeros((n, n))

    @property
    def dim(self) -> int:
        return len(self.labels)

    def hamiltonian(self, t: float) -> np.ndarray:
        m = self.motion.doppler_factor(t)
        h = np.diag(self.energies + m * self.doppler).astype(complex)
        for v, pulse in self.couplings:
            h += pulse(t) * v
        return h

    def rhs_dense(self, t, rho):
        """d rho / dt evaluated with plain matrix algebra."""
        h = self.hamiltonian(t)
        out = -1j * (h @ rho - rho @ h)
        for c in self.jumps:
            cdc = c.conj().T @ c
            out += c @ rho @ c.conj().T - 0.5 * (cdc @ rho + rho @ cdc)
        out -= self.dephasing * rho
        return out

    def sparse(self) -> SparseGenerator:
        n = self.dim
        terms = [self.static_superoperator()]
        for v, _ in self.couplings:
            terms.append(commutator_superoperator(v))
        terms.append(commutator_superoperator(np.diag(self.doppler).astype(complex)))
        rows, cols, vals, cidx = [], [], [], []
        for k, s in enumerate(terms):
            r, c = np.nonzero(np.abs(s) > 0)
            rows.append(r)
            cols.append(c)
            vals.append(s[r, c])
            cidx.append(np.full(r.shape, k))
        pulses = np.array([[p.peak_rabi, 0.5 * p.width, p.center, p.residual_floor]
                           for _, p in self.couplings], dtype=float).reshape(-1, 4)
        motion = np.array([self.motion.peak_velocity, self.motion.rf_frequency,
                           self.motion.phase], dtype=float)
        return SparseGenerator(
            n * n,
            np.concatenate(rows).astype(np.int64),
            np.concatenate(cols).astype(np.int64),
            np.concatenate(vals).astype(np.complex128),
            np.concatenate(cidx).astype(np.int64),
            np.ascontiguousarray(pulses), motion)

    def static_superoperator(self) -> np.ndarray:
        return (commutator_superoperator(np.diag(self.energies).astype(complex))
                + lindblad_superoperator(self.jumps, self.dim)
                + dephasing_superoperator(self.dephasing))


def commutator_superoperator(h: np.ndarray) -> np.ndarray:
    """Superoperator of rho -> -i [h, rho]."""
    n = h.shape[0]
    eye = np.eye(n)
    return -1j * (np.kron(h, eye) - np.kron(eye, h.T))


def lindblad_superoperator(jumps, n: int) -> np.ndarray:
    eye = np.eye(n)
    s = np.zeros((n * n, n * n), dtype=complex)
    for c in jumps:
        cdc = c.conj().T @ c
        s += np.kron(c, c.conj()) - 0.5 * (np.kron(cdc, eye) + np.kron(eye, cdc.T))
    return s


def dephasing_superoperator(rates: np.ndarray) -> np.ndarray:
    return -np.diag(rates.ravel()).astype(complex)


def apply_superoperator(s: np.ndarray, rho: np.ndarray) -> np.ndarray:
    n = rho.shape[0]
    return (s @ rho.ravel()).reshape(n, n)


def _level_frame(cfg: SystemConfig):
    """Rotating-frame energies and Doppler wavenumber sums of the basis levels."""
    energy, kvec = {}, {}
    by_edge = {}
    for f in cfg.fields:
        lower, upper = f.transition
        by_edge[(lower, upper)] = f
    # walk the chain from the lowest level present
    coupled = sorted({lvl for f in cfg.fields for lvl in f.transition})
    if coupled:
        energy[coupled[0]] = 0.0
        kvec[coupled[0]] = 0.0
        changed = True
        while changed:
            changed = False
            for (lower, upper), f in by_edge.items():
                k = cfg.species.wavenumber(f.name)
                if lower in energy and upper not in energy:
                    energy[upper] = energy[lower] + f.detuning
                    kvec[upper] = kvec[lower] + k
                    changed = True
                elif upper in energy and lower not in energy:
                    energy[lower] = energy[upper] - f.detuning
                    kvec[lower] = kvec[upper] - k
                    changed = True
    e = np.array([energy.get(lvl, 0.0) for lvl in cfg.levels])
    kv = np.array([kvec.get(lvl, 0.0) for lvl in cfg.levels])
    return e, kv


def _coupling_matrix(cfg: SystemConfig, f: LaserField) -> np.ndarray:
    v = np.zeros((cfg.dim, cfg.dim), dtype=complex)
    i, j = (cfg.index(lvl) for lvl in f.transition)
    v[i, j] = v[j, i] = 0.5
    return v


def decay_operators(cfg: SystemConfig) -> list[np.ndarray]:
    """Jump operators sqrt(Gamma) |lower><upper| for every channel in the basis."""
    if not cfg.decay:
        return []
    ops = []
    for (upper, lower), rate in cfg.species.decay_channels(cfg.metastable_decay).items():
        if upper not in cfg.levels:
            continue
        if lower not in cfg.levels:
            raise ConfigError(f"decay {upper}->{lower} leaves the {cfg.topology} basis")
        c = np.zeros((cfg.dim, cfg.dim), dtype=complex)
        c[cfg.index(lower), cfg.index(upper)] = np.sqrt(rate)
        ops.append(c)
    return ops


def dephasing_rates(cfg: SystemConfig) -> np.ndarray:
    """Coherence decay rates: sum of the linewidths along the coupling chain."""
    width = {f.name: f.linewidth for f in cfg.fields}
    n = cfg.dim
    g = np.zeros((n, n))
    for a, la in enumerate(cfg.levels):
        for b, lb in enumerate(cfg.levels):
            lo, hi = sorted((la, lb))
            g[a, b] = sum(width.get(_CHAIN_EDGES[(k, k + 1)], 0.0) for k in range(lo, hi))
    return g


def build_generator(cfg: SystemConfig) -> Generator:
    energies, kv = _level_frame(cfg)
    couplings = [(_coupling_matrix(cfg, f), f.pulse) for f in cfg.fields]
    return Generator(
        labels=cfg.levels, energies=energies, couplings=couplings, doppler=kv,
        motion=cfg.motion, jumps=decay_operators(cfg), dephasing=dephasing_rates(cfg))


def coherent_generator(cfg: SystemConfig, t: float) -> np.ndarray:
    """Rotating-frame Hamiltonian (hbar = 1) at time ``t``."""
    return build_generator(cfg).hamiltonian(t)


def dissipator(cfg: SystemConfig) -> np.ndarray:
    """Spontaneous-emission superoperator (row-major vectorisation)."""
    return lindblad_superoperator(decay_operators(cfg), cfg.dim)


def dephaser(cfg: SystemConfig) -> np.ndarray:
    """Laser phase-diffusion superoperator; diagonal, populations untouched."""
    return dephasing_superoperator(dephasing_rates(cfg))


def pure_state(dim: int, index: int) -> np.ndarray:
    rho = np.zeros((dim, dim), dtype=complex)
    rho[index, index] = 1.0
    return rho


def check_density_matrix(rho, herm_tol=1e-9, trace_tol=1e-8, pos_tol=1e-8):
    """Raise ``ValueError`` unless ``rho`` is Hermitian, unit trace and PSD."""
    rho = np.asarray(rho)
    if np.max(np.abs(rho - rho.conj().T)) > herm_tol:
        raise ValueError("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1) > trace_tol:
        raise ValueError("density matrix trace differs from 1")
    if np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0] < -pos_tol:
        raise ValueError("density matrix is not positive semidefinite")


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (n_samples, N, N)
    labels: tuple
    final: np.ndarray
    steps: int
    wall_time: float

    def population(self, label) -> np.ndarray:
        i = self.labels.index(label)
        return self.states[:, i, i].real

    def final_population(self, label) -> float:
        i = self.labels.index(label)
        return float(self.final[i, i].real)

    def columns(self):
        """Column names and data of the tabular export."""
        names = ["time_us"]
        data = [self.times * 1e6]
        for i, lab in enumerate(self.labels):
            names.append(f"P_{lab}")
            data.append(self.states[:, i, i].real)
        for a, b in _reported_coherences(self.labels):
            i, j = self.labels.index(a), self.labels.index(b)
            names.append(f"abs_rho_{a}{b}")
            data.append(np.abs(self.states[:, i, j]))
        return names, np.column_stack(data)

    def to_table(self, path, delimiter=","):
        names, data = self.columns()
        np.savetxt(path, data, delimiter=delimiter, header=delimiter.join(names),
                   comments="", fmt="%.10g")


# coherences of the driven pairs and the two Raman pairs
_COHERENCES = ((1, 2), (2, 3), (1, 3), (3, 4), (4, 5), (3, 5))


def _reported_coherences(labels):
    return [(a, b) for a, b in _COHERENCES if a in labels and b in labels]


def default_max_step(cfg_or_pulses) -> float:
    pulses = ([f.pulse for f in cfg_or_pulses.fields]
              if isinstance(cfg_or_pulses, SystemConfig) else cfg_or_pulses)
    if not pulses:
        return np.inf
    return min(p.width for p in pulses) / 50.0


def evolve_generator(gen: Generator, rho0, window, samples=500, rtol=1e-9,
                     atol=1e-12, max_step=None) -> Trajectory:
    t0, t1 = window
    if samples is None or np.isscalar(samples) and samples == 0:
        sample_times = np.empty(0)
    elif np.isscalar(samples):
        sample_times = np.linspace(t0, t1, int(samples))
    else:
        sample_times = np.asarray(samples, dtype=float)
        if np.any(np.diff(sample_times) <= 0):
            raise ValueError("sample times must be strictly increasing")
    if max_step is None:
        max_step = default_max_step([p for _, p in gen.couplings])
    sparse = gen.sparse()
    start = _time.perf_counter()
    res = dopri5(sparse, np.asarray(rho0, dtype=complex).ravel(), t0, t1,
                 sample_times, rtol=rtol, atol=atol, h_max=max_step)
    wall = _time.perf_counter() - start
    n = gen.dim
    return Trajectory(sample_times, res.samples.reshape(-1, n, n), gen.labels,
                      res.y.reshape(n, n), res.accepted, wall)


def evolve(cfg: SystemConfig, rho0=None, samples=500, initial_level=None, **kwargs) -> Trajectory:
    """Integrate the Bloch equations over ``cfg.window``.

    ``rho0`` defaults to the pure population of ``initial_level`` (or of the
    lowest basis level). ``samples`` is a count of evenly spaced output
    times, an explicit array, or 0 for final-state-only.
    """
    if rho0 is None:
        level = cfg.levels[0] if initial_level is None else initial_level
        rho0 = pure_state(cfg.dim, cfg.index(level))
    return evolve_generator(build_generator(cfg), rho0, cfg.window, samples, **kwargs)


def transfer_efficiency(cfg: SystemConfig, initial_level: int, target_level: int, **kwargs) -> float:
    for lvl in (initial_level, target_level):
        if lvl not in cfg.levels:
            raise ConfigError(f"level {lvl} is not in the {cfg.topology} basis")
    traj = evolve(cfg, initial_level=initial_level, samples=0, **kwargs)
    return traj.final_population(target_level)


def phase_averaged_efficiency(cfg: SystemConfig, initial_level: int, target_level: int,
                              n_phases: int = 8, **kwargs) -> float:
    """Mean efficiency over ``n_phases`` equally spaced micromotion phases."""
    phases = 2 * np.pi * np.arange(n_phases) / n_phases
    vals = [transfer_efficiency(replace(cfg, motion=replace(cfg.motion, phase=phi)),
                                initial_level, target_level, **kwargs) for phi in phases]
    return float(np.mean(vals))


def evolve_fixed_step(cfg_or_gen, rho0, window, step) -> np.ndarray:
    """Final state from dense-algebra RK4 with a constant step (cross-check path)."""
    gen = cfg_or_gen if isinstance(cfg_or_gen, Generator) else build_generator(cfg_or_gen)
    return rk4_fixed(gen.rhs_dense, np.asarray(rho0, dtype=complex), window[0], window[1], step)


def stage_config(species: IonSpecies, stage: int, schedule, *, linewidth=0.0,
                 residual_fraction=0.0, two_photon_detuning=0.0, window=None,
                 motion=TrapMotion(), decay=True, margin_widths=2.0) -> SystemConfig:
    """Single-stage configuration from a :class:`PulseSchedule`.

    The pump carries the one-photon detuning; the Stokes detuning is the
    pump detuning plus ``two_photon_detuning``. Without an explicit window
    the run spans ``margin_widths`` pulse widths beyond the outer centres.
    """
    pump_pulse, stokes_pulse = schedule.pulses(residual_fraction)
    pump_name, stokes_name = ("A", "B") if stage == 1 else ("C", "D")
    fields = (
        LaserField(pump_name, pump_pulse, schedule.one_photon_detuning, linewidth),
        LaserField(stokes_name, stokes_pulse,
                   schedule.one_photon_detuning + two_photon_detuning, linewidth),
    )
    if window is None:
        lo = min(pump_pulse.center, stokes_pulse.center) - margin_widths * schedule.width
        hi = max(pump_pulse.center, stokes_pulse.center) + margin_widths * schedule.width
        window = (lo, hi)
    elif np.isscalar(window):
        window = (schedule.center - 0.5 * window, schedule.center + 0.5 * window)
    return SystemConfig(species, fields, tuple(window), f"stage{stage}", motion, decay)
