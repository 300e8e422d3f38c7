"""Parameter scans, one-dimensional optimisation and the full two-stage run.

A scan takes a :class:`~dstirap.scenario.Scenario`, sets one key (or a
group of keys together) to each grid value and evaluates the scenario's
kind. Rows run independently, possibly on several processes, and are
reassembled in grid order so the table never depends on the worker
count. A row that fails keeps its place in the table with NaN observables
and the error message in its ``status`` column.

Result tables are comma-separated text preceded by a metadata block of
``# key = value`` lines echoing the fully resolved scenario.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from functools import partial

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from ._parallel import ordered_map
from .analytic import (BlochEngine, adiabaticity_function, general_eigentrack, optimal_eta,
                       solve_theta_max)
from .domain import LaserField, PulseSchedule, TrapMotion, khz, mhz, to_mhz
from .liouvillian import ConfigError, SystemConfig, Trajectory, evolve, pure_state
from .scenario import (Scenario, ScenarioError, build_system, build_zeeman, stage_fields,
                       time_window)
from .zeeman import ProjectionScan, qubit_populations

STATUS_OK = "ok"


@dataclass
class Evaluation:
    """Observables of one scenario evaluation plus solver diagnostics."""

    observables: dict
    steps: int = 0
    wall_time: float = 0.0
    trajectory: tuple | None = None  # (column names, 2-D array)


# -- evaluators per scenario kind ------------------------------------------

def _final_populations(cfg: SystemConfig, initial: int, samples: int, phases: int):
    rho0 = pure_state(cfg.dim, cfg.index(initial))
    if phases <= 1:
        traj = evolve(cfg, rho0, samples=samples)
        return traj, [traj]
    trajs = []
    for k in range(phases):
        motion = replace(cfg.motion, phase=cfg.motion.phase + 2 * math.pi * k / phases)
        trajs.append(evolve(replace(cfg, motion=motion), rho0, samples=samples))
    return trajs[0], trajs


def evaluate_bloch(scn: Scenario) -> Evaluation:
    cfg = build_system(scn)
    samples = scn.get("output.samples")
    first, trajs = _final_populations(cfg, scn.initial_level(), samples,
                                      scn.get("system.phase_average"))
    obs = {}
    for name in scn.observables():
        level = int(name[1:])
        obs[name] = float(np.mean([t.final_population(level) for t in trajs]))
    table = first.columns() if samples else None
    return Evaluation(obs, sum(t.steps for t in trajs), sum(t.wall_time for t in trajs), table)


def evaluate_amax(scn: Scenario) -> Evaluation:
    eta = scn.get("analytic.eta")
    amax, thetas = {}, {}
    for r in scn.get("analytic.r_values") or [scn.get("analytic.r")]:
        theta = solve_theta_max(eta, r)
        thetas[f"theta_max_r{r:g}"] = math.nan if theta is None else theta
        amax[f"A_max_r{r:g}"] = (math.nan if theta is None
                                 else adiabaticity_function(theta, eta, r))
    return Evaluation({**amax, **thetas})


def _eta_grid(scn: Scenario) -> np.ndarray:
    lo, hi, step = (scn.get(f"analytic.{k}") for k in ("eta_min", "eta_max", "eta_step"))
    if step <= 0 or hi < lo:
        raise ScenarioError("analytic: need eta_step > 0 and eta_max >= eta_min")
    n = int(round((hi - lo) / step)) + 1
    return np.round(lo + step * np.arange(n), 10)


def evaluate_eta_opt(scn: Scenario) -> Evaluation:
    start = time.perf_counter()
    tau = scn.get("analytic.tau_us") * 1e-6
    engine = BlochEngine(scn.get("analytic.r"), scn.get("analytic.lambda"),
                         mhz(scn.get("analytic.detuning_mhz")), tau,
                         species=scn.get("ion.species"))
    eta, p = optimal_eta(engine.r, engine.lambda_, engine, grid=_eta_grid(scn))
    return Evaluation({"eta_opt": eta, "P_max": p}, wall_time=time.perf_counter() - start)


def evaluate_eigentrack(scn: Scenario) -> Evaluation:
    stage = scn.active_stages()[0]
    pump, stokes = stage_fields(scn, stage)
    t0, t1 = time_window(scn)
    times = np.linspace(t0, t1, scn.get("analytic.samples"))
    track = general_eigentrack(times, pump.pulse, stokes.pulse, pump.detuning, stokes.detuning)
    # Both branches merge where the light is off, so the gap is sought only
    # where at least one coupling exceeds 1% of the larger peak.
    light = np.maximum(pump.pulse(times), stokes.pulse(times))
    t_gap, gap = track.min_gap("d", "-", where=light >= 0.01 * light.max())
    names = ["time_us", "Omega_pump_mhz", "Omega_stokes_mhz",
             "omega_plus_mhz", "omega_minus_mhz", "omega_d_mhz"]
    data = np.column_stack([times * 1e6, to_mhz(pump.pulse(times)), to_mhz(stokes.pulse(times)),
                            to_mhz(track.branch("+")), to_mhz(track.branch("-")),
                            to_mhz(track.branch("d"))])
    return Evaluation({"min_gap_mhz": to_mhz(gap), "min_gap_time_us": t_gap * 1e6},
                      trajectory=(names, data))


def evaluate_tau_opt(scn: Scenario) -> Evaluation:
    start = time.perf_counter()
    cfg = build_system(scn)
    pw = scn.data["pulse_width"]
    taus = np.arange(pw["tau_min_us"], pw["tau_max_us"] + 1e-9, pw["tau_step_us"]) * 1e-6
    linewidths = pw.get("linewidths_khz") or [cfg.fields[0].linewidth / khz(1)]
    obs = {}
    for lw in linewidths:
        res = optimize_pulse_width(cfg, khz(lw), taus=taus, threshold=pw["threshold"],
                                   initial_level=scn.initial_level(),
                                   target_level=scn.target_level())
        obs[f"tau_us_lw{lw:g}"] = res.tau * 1e6 if res.tau is not None else math.nan
        obs[f"P_lw{lw:g}"] = res.probability
        obs[f"interior_lw{lw:g}"] = 1.0 if res.kind == "optimum" else 0.0
    return Evaluation(obs, wall_time=time.perf_counter() - start)


EVALUATORS = {
    "bloch": evaluate_bloch,
    "amax": evaluate_amax,
    "eta_opt": evaluate_eta_opt,
    "eigentrack": evaluate_eigentrack,
    "tau_opt": evaluate_tau_opt,
}


def _check_resolvable(scn: Scenario) -> None:
    """Build the physics config so bad values surface before any integration."""
    if scn.kind in ("bloch", "tau_opt"):
        build_system(scn)
    elif scn.kind == "eigentrack":
        stage_fields(scn, scn.active_stages()[0])
        time_window(scn)
    elif scn.kind == "eta_opt":
        _eta_grid(scn)
    elif scn.kind == "zeeman":
        build_zeeman(scn, 0.0, 0.0)


# -- sweeps -----------------------------------------------------------------

@dataclass
class SweepSpec:
    """A scenario with one swept key (or several keys set to the same value)."""

    base: Scenario
    parameter: list = field(default_factory=list)
    values: list = field(default_factory=list)
    jobs: int = 1

    @classmethod
    def from_scenario(cls, scn: Scenario, jobs: int | None = None) -> "SweepSpec":
        return cls(scn, scn.sweep_paths(), scn.sweep_values(),
                   scn.get("sweep.jobs") if jobs is None else jobs)

    def __post_init__(self):
        if isinstance(self.parameter, str):
            self.parameter = [self.parameter]
        self.values = [float(v) for v in self.values]
        if self.parameter and not self.values:
            raise ScenarioError("sweep grid is empty")
        if self.base.kind == "zeeman":
            raise ScenarioError("zeeman scenarios are scanned with run_zeeman_scan")

    def row_scenarios(self) -> list[Scenario]:
        if not self.parameter:
            return [self.base]
        rows = []
        for v in self.values:
            scn = self.base
            for path in self.parameter:
                scn = scn.set(path, v)
            rows.append(scn)
        return rows


@dataclass
class SweepRow:
    index: int
    value: float | None
    observables: dict
    steps: int
    wall_time: float
    status: str = STATUS_OK
    trajectory: tuple | None = None

    @property
    def ok(self) -> bool:
        return self.status == STATUS_OK


@dataclass
class SweepResult:
    spec: SweepSpec
    rows: list
    observables: list

    @property
    def columns(self) -> list[str]:
        return [*self.spec.parameter, *self.observables, "steps", "wall_time_s", "status"]

    def column(self, name: str) -> np.ndarray:
        if name in self.spec.parameter:
            return np.array([r.value for r in self.rows], dtype=float)
        return np.array([r.observables.get(name, math.nan) for r in self.rows], dtype=float)

    @property
    def failed(self) -> list:
        return [r for r in self.rows if not r.ok]

    def best(self, observable: str | None = None):
        """(parameter value, observable value) of the largest finite observable."""
        name = observable or self.observables[0]
        y = self.column(name)
        if not np.any(np.isfinite(y)):
            return None, math.nan
        i = int(np.nanargmax(y))
        return self.rows[i].value, float(y[i])

    def metadata(self) -> list[tuple[str, object]]:
        meta = [("name", self.spec.base.name), ("kind", self.spec.base.kind),
                ("source", self.spec.base.source)]
        meta += self.spec.base.flat()
        meta += [("rows", len(self.rows)), ("failed_rows", len(self.failed))]
        return meta

    def summary(self) -> str:
        if not self.observables:
            return f"{self.spec.base.name}: no observables"
        name = self.observables[0]
        value, best = self.best(name)
        if value is None and self.spec.parameter:
            text = f"{self.spec.base.name}: no finite {name} value"
        elif not self.spec.parameter:
            text = f"{self.spec.base.name}: {name} = {best:.6g}"
        else:
            text = (f"{self.spec.base.name}: max {name} = {best:.6g} at "
                    f"{self.spec.parameter[0]} = {value:.6g}")
        if self.failed:
            text += f" ({len(self.failed)} failed rows)"
        return text

    def to_table(self, path) -> None:
        write_table(path, self.metadata(), self.columns, [
            [*([r.value] * len(self.spec.parameter)),
             *(r.observables.get(o, math.nan) for o in self.observables),
             r.steps, r.wall_time, r.status] for r in self.rows])


def _evaluate_row(item):
    index, scn, value = item
    try:
        ev = EVALUATORS[scn.kind](scn)
    except (ArithmeticError, ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
        message = f"error: {type(exc).__name__}: {exc}"
        return SweepRow(index, value, {}, 0, 0.0, message)
    return SweepRow(index, value, ev.observables, ev.steps, ev.wall_time, STATUS_OK,
                    ev.trajectory)


def run_sweep(spec: SweepSpec) -> SweepResult:
    """Evaluate every grid point; failures are recorded per row."""
    scenarios = spec.row_scenarios()
    for scn in scenarios:
        _check_resolvable(scn)
    values = spec.values or [None]
    items = [(i, scn, v) for i, (scn, v) in enumerate(zip(scenarios, values))]
    rows = ordered_map(_evaluate_row, items, spec.jobs)
    rows.sort(key=lambda r: r.index)
    names = list(spec.base.observables())
    for r in rows:
        for k in r.observables:
            if k not in names:
                names.append(k)
    return SweepResult(spec, rows, names)


def run_zeeman_scan(scn: Scenario, jobs: int = 1) -> ProjectionScan:
    """Final qubit populations over the scenario's polarisation grid."""
    _check_resolvable(scn)
    rm = scn.get("zeeman.ratios_sigma_minus") or [0.0]
    rp = scn.get("zeeman.ratios_pi") or [0.0]
    inits = scn.get("zeeman.init") or ["down", "up"]
    grid = [(float(a), float(b), init) for init in inits for b in rp for a in rm]
    rows = ordered_map(partial(_zeeman_point, scn), grid, jobs)
    return ProjectionScan(rows)


def _zeeman_point(scn, item):
    rm, rp, init = item
    pd, pu = qubit_populations(build_zeeman(scn, rm, rp), init)
    return (rm, rp, init, pd, pu)


# -- tables -----------------------------------------------------------------

def _fmt(value) -> str:
    if isinstance(value, str):
        return value.replace(",", ";").replace("\n", " ")
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{value:.10g}"
    return str(value)


def write_table(path, metadata, columns, rows) -> None:
    """Metadata block of ``# key = value`` lines, a header row, then CSV rows."""
    with open(path, "w") as fh:
        for key, value in metadata:
            fh.write(f"# {key} = {value}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


@dataclass
class Table:
    metadata: dict
    columns: list
    rows: list

    def column(self, name: str) -> np.ndarray:
        i = self.columns.index(name)
        return np.array([float(r[i]) for r in self.rows])


def read_table(path) -> Table:
    meta, columns, rows = {}, None, []
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("#"):
                key, _, value = line[1:].partition("=")
                meta[key.strip()] = value.strip()
            elif columns is None:
                columns = line.split(",")
            elif line:
                rows.append([_parse_cell(c) for c in line.split(",")])
    if columns is None:
        raise ValueError(f"{path}: no column header")
    return Table(meta, columns, rows)


def _parse_cell(cell: str):
    try:
        return float(cell)
    except ValueError:
        return cell


def write_trajectory(path, names, data, metadata=()) -> None:
    write_table(path, metadata, names, data.tolist())


# -- pulse-width optimisation -------------------------------------------------

@dataclass(frozen=True)
class PulseWidthResult:
    """``kind`` is "optimum" (interior maximum), "threshold" (first tau with
    P >= threshold), "monotone" (maximum on the grid boundary) or "unreached"."""

    tau: float | None
    probability: float
    kind: str
    grid: tuple = ()
    values: tuple = ()


def rescale_pulse_width(cfg: SystemConfig, tau: float, linewidth: float | None = None) -> SystemConfig:
    """Same schedule with every pulse width set to ``tau`` at fixed eta.

    Pulse centres and the window edges are stretched about the midpoint of
    the pulse centres, so eta and the window margin in units of tau stay put.
    """
    centres = [f.pulse.center for f in cfg.fields]
    mid = 0.5 * (min(centres) + max(centres))
    scale = tau / cfg.fields[0].pulse.width
    fields = []
    for f in cfg.fields:
        pulse = replace(f.pulse, width=tau, center=mid + (f.pulse.center - mid) * scale)
        fields.append(replace(f, pulse=pulse,
                              linewidth=f.linewidth if linewidth is None else linewidth))
    window = tuple(mid + (w - mid) * scale for w in cfg.window)
    return replace(cfg, fields=tuple(fields), window=window)


def optimize_pulse_width(cfg: SystemConfig, linewidth: float, taus=None, threshold=0.995,
                         initial_level: int = 3, target_level: int = 5,
                         rel_tol: float = 0.01) -> PulseWidthResult:
    """Best pulse width of a stage configuration for a common laser linewidth.

    With a nonzero linewidth the transfer probability has an interior
    maximum in tau, which is located on the grid and refined with a bounded
    scalar search to ``rel_tol`` of tau. Without linewidth the probability
    keeps growing, so the smallest tau reaching ``threshold`` is returned
    instead (bracketed on the grid, refined by root finding).
    """
    if linewidth < 0:
        raise ValueError("linewidth must be non-negative")
    taus = np.arange(0.5e-6, 8.0e-6 + 1e-12, 0.25e-6) if taus is None else np.asarray(taus)

    def prob(tau):
        c = rescale_pulse_width(cfg, float(tau), linewidth)
        traj = evolve(c, pure_state(c.dim, c.index(initial_level)), samples=0)
        return traj.final_population(target_level)

    values = np.array([prob(t) for t in taus])
    grid = (tuple(taus), tuple(values))
    if linewidth == 0:
        hits = np.nonzero(values >= threshold)[0]
        if hits.size == 0:
            return PulseWidthResult(None, float(values.max()), "unreached", *grid)
        i = int(hits[0])
        if i == 0:
            return PulseWidthResult(float(taus[0]), float(values[0]), "threshold", *grid)
        tau = brentq(lambda x: prob(x) - threshold, taus[i - 1], taus[i],
                     xtol=rel_tol * taus[i - 1] / 2)
        return PulseWidthResult(float(tau), float(prob(tau)), "threshold", *grid)
    i = int(np.argmax(values))
    if i == 0 or i == len(taus) - 1:
        return PulseWidthResult(float(taus[i]), float(values[i]), "monotone", *grid)
    res = minimize_scalar(lambda x: -prob(x), bounds=(taus[i - 1], taus[i + 1]),
                          method="bounded", options={"xatol": rel_tol * taus[i] / 2})
    if -res.fun >= values[i]:
        return PulseWidthResult(float(res.x), float(-res.fun), "optimum", *grid)
    return PulseWidthResult(float(taus[i]), float(values[i]), "optimum", *grid)


# -- full two-stage sequence ---------------------------------------------------

def double_stirap_config(species, *, peak_rabi=mhz(100), detuning=mhz(600), tau=2e-6,
                         delay=1.2e-6, gap=10e-6, duration=30e-6, linewidth=0.0,
                         residual_fraction=0.0, motion=TrapMotion(), two_photon_1=0.0,
                         two_photon_2=0.0, decay=True) -> SystemConfig:
    """Five-level configuration with stage 1 centred at 0 and stage 2 at ``gap``.

    ``two_photon_1`` is Delta_B - Delta_A and ``two_photon_2`` is
    Delta_D - Delta_C. The window of length ``duration`` is centred on the
    midpoint of the two stages.
    """
    if gap <= 0:
        raise ConfigError("stage 2 must follow stage 1 (gap > 0)")
    fields = []
    for centre, names, d2 in ((0.0, ("A", "B"), two_photon_1), (gap, ("C", "D"), two_photon_2)):
        sched = PulseSchedule(tau, delay, peak_rabi, peak_rabi, detuning, centre)
        pump, stokes = sched.pulses(residual_fraction)
        fields.append(LaserField(names[0], pump, detuning, linewidth))
        fields.append(LaserField(names[1], stokes, detuning + d2, linewidth))
    mid = 0.5 * gap
    return SystemConfig(species, tuple(fields), (mid - duration / 2, mid + duration / 2),
                        "full", motion, decay)


def full_double_stirap(cfg: SystemConfig, samples=500, **kwargs) -> tuple[float, Trajectory]:
    """Integrate both stages in one five-level run starting from level 1.

    Returns the final population of level 5 and the sampled trajectory.
    """
    if cfg.topology != "full":
        raise ConfigError("the two-stage sequence needs the full five-level topology")
    names = {f.name for f in cfg.fields}
    if names != {"A", "B", "C", "D"}:
        raise ConfigError("the two-stage sequence needs fields A, B, C and D")
    first = max(cfg.field(n).pulse.center for n in "AB")
    second = min(cfg.field(n).pulse.center for n in "CD")
    if not first < second:
        raise ConfigError("stage-1 pulses must precede stage-2 pulses")
    traj = evolve(cfg, initial_level=1, samples=samples, **kwargs)
    return traj.final_population(5), traj
