"""Scenario files: strict TOML schema, overrides and conversion to simulation configs.

All numbers in a scenario file are in user units: frequencies as
"frequency / 2pi" in MHz (linewidths in kHz), times in microseconds and
velocities in m/s. This module is the only place where they are turned
into the angular frequencies and seconds used everywhere else.

A scenario has a ``kind`` that selects what a run computes:

``bloch``       final level populations of a 3- or 5-level integration
``amax``        maximum of the adiabaticity function versus eta
``eta_opt``     optimal pulse separation from three-level Bloch scans
``eigentrack``  dressed-state eigenvalues along the pulse sequence
``tau_opt``     optimal (or threshold) pulse width
``zeeman``      eight-level projection errors versus polarisation impurity
"""
from __future__ import annotations

import copy
import math
import re
import sys
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .domain import (LaserField, PulseSchedule, TrapMotion, ion_lookup, khz, mhz,
                     micromotion_velocity_from_temperature)
from .liouvillian import TOPOLOGIES, ConfigError, SystemConfig
from .zeeman import INITIAL_STATES, PolarizedField, ZeemanBasis, ZeemanConfig, SUBLEVELS

KINDS = ("bloch", "amax", "eta_opt", "eigentrack", "tau_opt", "zeeman")
# kinds that read the [stageN] sections
PHYSICS_KINDS = ("bloch", "eigentrack", "tau_opt", "zeeman")
STAGE_FIELDS = {"stage1": ("A", "B"), "stage2": ("C", "D")}

# Schema leaves: (type, default). A default of None marks an optional key
# that stays absent unless given.
_FIELD = {
    "peak_rabi_mhz": (float, None),
    "linewidth_khz": (float, 0.0),
    "residual_fraction": (float, 0.0),
}
_STAGE = {
    "tau_us": (float, 2.0),
    "delay_us": (float, None),
    "eta": (float, None),
    "center_us": (float, 0.0),
    "one_photon_detuning_mhz": (float, 0.0),
    "two_photon_detuning_mhz": (float, 0.0),
}
SCHEMA = {
    "scenario": {
        "name": (str, None),
        "description": (str, ""),
        "kind": (str, "bloch"),
        "observables": (list, None),
    },
    "ion": {"species": (str, "Ca40")},
    "system": {
        "topology": (str, "stage2"),
        "initial_level": (int, None),
        "decay": (bool, True),
        "metastable_decay": (bool, False),
        "duration_us": (float, None),
        "margin_widths": (float, 2.0),
        "phase_average": (int, 1),
    },
    "stage1": {**_STAGE, "fields": {"A": _FIELD, "B": _FIELD}},
    "stage2": {**_STAGE, "fields": {"C": _FIELD, "D": _FIELD}},
    "motion": {
        "rf_frequency_mhz": (float, 16.8),
        "velocity_m_s": (float, None),
        "temperature_mk": (float, None),
        "phase_rad": (float, 0.0),
    },
    "analytic": {
        "r": (float, 1.0),
        "r_values": (list, None),
        "lambda": (float, 10.0),
        "eta": (float, 0.85),
        "detuning_mhz": (float, 4000.0),
        "tau_us": (float, 2.0),
        "margin": (float, 5.0),
        "eta_min": (float, 0.3),
        "eta_max": (float, 2.0),
        "eta_step": (float, 0.01),
        "samples": (int, 801),
    },
    "pulse_width": {
        "tau_min_us": (float, 0.5),
        "tau_max_us": (float, 8.0),
        "tau_step_us": (float, 0.25),
        "threshold": (float, 0.995),
        "linewidths_khz": (list, None),
    },
    "zeeman": {
        "ratios_sigma_minus": (list, None),
        "ratios_pi": (list, None),
        "init": (list, None),
        "shifts_mhz": ("table", None),
        "field_gauss": (float, None),
    },
    "sweep": {
        "parameter": ("path", None),
        "values": (list, None),
        "start": (float, None),
        "stop": (float, None),
        "num": (int, None),
        "jobs": (int, 1),
    },
    "output": {
        "table": (str, None),
        "plot": (bool, False),
        "samples": (int, 0),
    },
}


class ScenarioError(ConfigError):
    """Invalid scenario; the message names the offending key."""


def _is_leaf(node) -> bool:
    return isinstance(node, tuple)


def _coerce(path: str, kind, value):
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ScenarioError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            if isinstance(value, float) and value.is_integer():
                return int(value)
            raise ScenarioError(f"{path}: expected an integer, got {value!r}")
        return value
    if kind is bool:
        if not isinstance(value, bool):
            raise ScenarioError(f"{path}: expected true or false, got {value!r}")
        return value
    if kind is str:
        if not isinstance(value, str):
            raise ScenarioError(f"{path}: expected a string, got {value!r}")
        return value
    if kind is list:
        if not isinstance(value, list) or not value:
            raise ScenarioError(f"{path}: expected a non-empty list, got {value!r}")
        return list(value)
    if kind == "path":
        if isinstance(value, str):
            return value
        if isinstance(value, list) and value and all(isinstance(v, str) for v in value):
            return list(value)
        raise ScenarioError(f"{path}: expected a key path or a list of key paths")
    if kind == "table":
        if not isinstance(value, dict):
            raise ScenarioError(f"{path}: expected a table")
        return {str(k): _coerce(f"{path}.{k}", float, v) for k, v in value.items()}
    raise AssertionError(kind)


def _normalise(data: dict, schema: dict, prefix: str = "") -> dict:
    """Strict copy of ``data`` with defaults filled in; unknown keys raise."""
    if not isinstance(data, dict):
        raise ScenarioError(f"{prefix.rstrip('.') or 'scenario'}: expected a table")
    unknown = sorted(set(data) - set(schema))
    if unknown:
        raise ScenarioError(f"unknown key {prefix}{unknown[0]}")
    out = {}
    for key, node in schema.items():
        path = prefix + key
        if _is_leaf(node):
            kind, default = node
            if key in data:
                out[key] = _coerce(path, kind, data[key])
            elif default is not None:
                out[key] = default
        elif key in data:
            out[key] = _normalise(data[key], node, path + ".")
    return out


def _schema_node(path: str):
    node = SCHEMA
    for part in path.split("."):
        if _is_leaf(node) or part not in node:
            raise ScenarioError(f"unknown key {path}")
        node = node[part]
    return node


@dataclass
class Scenario:
    """A validated scenario document (nested dict in user units)."""

    data: dict
    source: str = "<memory>"

    @classmethod
    def from_dict(cls, data: dict, source: str = "<memory>") -> "Scenario":
        top = {k: v for k, v in data.items()}
        unknown = sorted(set(top) - set(SCHEMA))
        if unknown:
            raise ScenarioError(f"unknown key {unknown[0]}")
        norm = {}
        for section, schema in SCHEMA.items():
            if section in top:
                norm[section] = _normalise(top[section], schema, section + ".")
            elif section not in STAGE_FIELDS:
                norm[section] = _normalise({}, schema, section + ".")
        scn = cls(norm, source)
        scn.validate()
        return scn

    @classmethod
    def from_toml(cls, text: str, source: str = "<memory>") -> "Scenario":
        try:
            data = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ScenarioError(f"{source}: {exc}") from None
        return cls.from_dict(data, source)

    def to_toml(self) -> str:
        return tomli_w.dumps(self.data)

    # -- access -------------------------------------------------------------
    @property
    def name(self) -> str:
        return self.data["scenario"].get("name") or Path(self.source).stem

    @property
    def kind(self) -> str:
        return self.data["scenario"]["kind"]

    def get(self, path: str, default=None):
        node = self.data
        for part in path.split("."):
            if not isinstance(node, dict) or part not in node:
                return default
            node = node[part]
        return node

    def set(self, path: str, value) -> "Scenario":
        """Copy with ``path`` set to ``value`` (validated against the schema)."""
        leaf = _schema_node(path)
        if not _is_leaf(leaf):
            raise ScenarioError(f"{path} is a section, not a value")
        data = copy.deepcopy(self.data)
        parts = path.split(".")
        node = data
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = _coerce(path, leaf[0], value)
        # eta and delay_us describe the same quantity; the last one set wins
        exclusive = {"eta": "delay_us", "delay_us": "eta",
                     "velocity_m_s": "temperature_mk", "temperature_mk": "velocity_m_s"}
        if parts[-1] in exclusive:
            node.pop(exclusive[parts[-1]], None)
        # an explicit grid replaces a start/stop/num range and vice versa
        if path == "sweep.values":
            for key in ("start", "stop", "num"):
                node.pop(key, None)
        elif path in ("sweep.start", "sweep.stop", "sweep.num"):
            node.pop("values", None)
        return Scenario.from_dict(data, self.source)

    def with_overrides(self, overrides) -> "Scenario":
        scn = self
        for item in overrides or ():
            key, sep, raw = item.partition("=")
            if not sep:
                raise ScenarioError(f"override {item!r} is not of the form key=value")
            scn = scn.set(key.strip(), parse_value(raw.strip()))
        return scn

    def flat(self) -> list[tuple[str, object]]:
        """(dotted key, value) pairs of every set value, in schema order."""
        out = []

        def walk(node, prefix):
            for k, v in node.items():
                if isinstance(v, dict) and not (prefix.endswith("zeeman.") and k == "shifts_mhz"):
                    walk(v, prefix + k + ".")
                else:
                    out.append((prefix + k, v))

        walk(self.data, "")
        return out

    # -- validation ---------------------------------------------------------
    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ScenarioError(f"scenario.kind: unknown kind {self.kind!r}; "
                                f"expected one of {', '.join(KINDS)}")
        topology = self.get("system.topology")
        if topology not in TOPOLOGIES:
            raise ScenarioError(f"system.topology: unknown topology {topology!r}")
        try:
            ion_lookup(self.get("ion.species"))
        except KeyError as exc:
            raise ScenarioError(f"ion.species: {exc.args[0]}") from None
        for stage in self.active_stages() if self.kind in PHYSICS_KINDS else ():
            if stage not in self.data:
                raise ScenarioError(f"missing section [{stage}] for topology {topology}")
            sec = self.data[stage]
            if "eta" in sec and "delay_us" in sec:
                raise ScenarioError(f"{stage}: give either eta or delay_us, not both")
            if "eta" not in sec and "delay_us" not in sec:
                raise ScenarioError(f"{stage}: one of eta or delay_us is required")
            if sec["tau_us"] <= 0:
                raise ScenarioError(f"{stage}.tau_us must be positive")
            fields = sec.get("fields", {})
            for name in STAGE_FIELDS[stage]:
                f = fields.get(name)
                if f is None or "peak_rabi_mhz" not in f:
                    raise ScenarioError(f"{stage}.fields.{name}.peak_rabi_mhz is required")
                if f["peak_rabi_mhz"] < 0:
                    raise ScenarioError(f"{stage}.fields.{name}.peak_rabi_mhz must be >= 0")
                if f["linewidth_khz"] < 0:
                    raise ScenarioError(f"{stage}.fields.{name}.linewidth_khz must be >= 0")
                if not 0 <= f["residual_fraction"] <= 1:
                    raise ScenarioError(f"{stage}.fields.{name}.residual_fraction must lie in [0, 1]")
        motion = self.data["motion"]
        if "velocity_m_s" in motion and "temperature_mk" in motion:
            raise ScenarioError("motion: give either velocity_m_s or temperature_mk, not both")
        if motion.get("velocity_m_s", 0.0) < 0:
            raise ScenarioError("motion.velocity_m_s must be non-negative")
        if motion.get("temperature_mk", 0.0) < 0:
            raise ScenarioError("motion.temperature_mk must be non-negative")
        level = self.get("system.initial_level")
        if level is not None and level not in TOPOLOGIES[topology]:
            raise ScenarioError(f"system.initial_level: level {level} is not in the "
                                f"{topology} basis")
        for obs in self.observables():
            if self.kind == "bloch" and not (obs.startswith("P") and obs[1:].isdigit()
                                             and int(obs[1:]) in TOPOLOGIES[topology]):
                raise ScenarioError(f"scenario.observables: {obs!r} is not a level "
                                    f"population of the {topology} basis")
        if self.kind == "zeeman":
            if topology != "stage1":
                raise ScenarioError("zeeman scenarios use system.topology = 'stage1'")
            for init in self.get("zeeman.init", ["down", "up"]):
                if init not in INITIAL_STATES:
                    raise ScenarioError(f"zeeman.init: unknown initial state {init!r}")
            for label in self.get("zeeman.shifts_mhz", {}):
                if label not in SUBLEVELS:
                    raise ScenarioError(f"zeeman.shifts_mhz: unknown sublevel {label!r}")
        self._validate_sweep()

    def _validate_sweep(self) -> None:
        sw = self.data["sweep"]
        param = sw.get("parameter")
        has_values = "values" in sw
        has_range = any(k in sw for k in ("start", "stop", "num"))
        if param is None:
            if has_values or has_range:
                raise ScenarioError("sweep: values given without sweep.parameter")
            return
        for path in ([param] if isinstance(param, str) else param):
            leaf = _schema_node(path)
            if not _is_leaf(leaf) or leaf[0] not in (float, int):
                raise ScenarioError(f"sweep.parameter: {path} is not a numeric key")
            if path.startswith("sweep.") or path.startswith("output."):
                raise ScenarioError(f"sweep.parameter: {path} cannot be swept")
        if has_values == has_range:
            raise ScenarioError("sweep: give either values or start/stop/num")
        if has_range:
            if not all(k in sw for k in ("start", "stop", "num")):
                raise ScenarioError("sweep: start, stop and num must all be given")
            if sw["num"] < 1:
                raise ScenarioError("sweep.num must be at least 1")
        else:
            for v in sw["values"]:
                _coerce("sweep.values", float, v)

    # -- derived ------------------------------------------------------------
    def active_stages(self) -> tuple[str, ...]:
        return {"stage1": ("stage1",), "stage2": ("stage2",),
                "full": ("stage1", "stage2")}[self.get("system.topology")]

    def observables(self) -> list[str]:
        obs = self.get("scenario.observables")
        if obs is not None:
            return list(obs)
        if self.kind == "bloch":
            return [f"P{self.target_level()}"]
        return []

    def initial_level(self) -> int:
        level = self.get("system.initial_level")
        if level is not None:
            return level
        return {"stage1": 1, "stage2": 3, "full": 1}[self.get("system.topology")]

    def target_level(self) -> int:
        return {"stage1": 3, "stage2": 5, "full": 5}[self.get("system.topology")]

    def sweep_values(self) -> list[float]:
        sw = self.data["sweep"]
        if "values" in sw:
            return [float(v) for v in sw["values"]]
        if "start" in sw:
            n = sw["num"]
            if n == 1:
                return [float(sw["start"])]
            step = (sw["stop"] - sw["start"]) / (n - 1)
            return [round(sw["start"] + i * step, 12) for i in range(n)]
        return []

    def sweep_paths(self) -> list[str]:
        param = self.get("sweep.parameter")
        if param is None:
            return []
        return [param] if isinstance(param, str) else list(param)


def parse_value(raw: str):
    """Interpret an override value as a TOML literal, else as a bare string."""
    try:
        return tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        return raw


# -- presets -------------------------------------------------------------------

def preset_names() -> list[str]:
    root = resources.files("dstirap") / "presets"
    names = [p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml")]
    return sorted(names, key=lambda n: [int(t) if t.isdigit() else t
                                        for t in re.split(r"(\d+)", n)])


def preset_text(name: str) -> str:
    return (resources.files("dstirap") / "presets" / f"{name}.toml").read_text()


PRESET_ALIASES = {"full-double-stirap": "fig15_full"}


def resolve_preset(name: str) -> str | None:
    """Preset matching ``name`` (path and suffix ignored), exact or by prefix."""
    stem = Path(name).name
    if stem.endswith(".toml"):
        stem = stem[:-5]
    stem = PRESET_ALIASES.get(stem, stem)
    names = preset_names()
    if stem in names:
        return stem
    matches = [n for n in names if stem.startswith(n) or n.startswith(stem)]
    return matches[0] if len(matches) == 1 else None


def load_scenario(ref: str | Path) -> Scenario:
    """Load a scenario from a file path or a preset name."""
    path = Path(ref)
    if path.is_file():
        return Scenario.from_toml(path.read_text(), str(path))
    preset = resolve_preset(str(ref))
    if preset is None:
        raise FileNotFoundError(f"scenario file not found: {ref}")
    return Scenario.from_toml(preset_text(preset), f"preset:{preset}")


# -- conversion to simulation configs -----------------------------------------

def stage_schedule(scn: Scenario, stage: str) -> PulseSchedule:
    sec = scn.data[stage]
    pump, stokes = STAGE_FIELDS[stage]
    tau = sec["tau_us"] * 1e-6
    delay = (sec["delay_us"] * 1e-6 if "delay_us" in sec
             else sec["eta"] * tau / math.sqrt(2.0))
    return PulseSchedule(tau, delay, mhz(sec["fields"][pump]["peak_rabi_mhz"]),
                         mhz(sec["fields"][stokes]["peak_rabi_mhz"]),
                         mhz(sec["one_photon_detuning_mhz"]), sec["center_us"] * 1e-6)


def stage_fields(scn: Scenario, stage: str) -> tuple[LaserField, LaserField]:
    sec = scn.data[stage]
    sched = stage_schedule(scn, stage)
    pump_name, stokes_name = STAGE_FIELDS[stage]
    fp, fs = sec["fields"][pump_name], sec["fields"][stokes_name]
    pump_pulse = sched.pulses(fp["residual_fraction"])[0]
    stokes_pulse = sched.pulses(fs["residual_fraction"])[1]
    d1 = mhz(sec["one_photon_detuning_mhz"])
    d2 = d1 + mhz(sec["two_photon_detuning_mhz"])
    return (LaserField(pump_name, pump_pulse, d1, khz(fp["linewidth_khz"])),
            LaserField(stokes_name, stokes_pulse, d2, khz(fs["linewidth_khz"])))


def time_window(scn: Scenario) -> tuple[float, float]:
    """Explicit duration centred on the pulse centres, else a margin of widths."""
    centres, widths = [], []
    for stage in scn.active_stages():
        sched = stage_schedule(scn, stage)
        centres += [sched.pump_center, sched.stokes_center]
        widths.append(sched.width)
    lo, hi = min(centres), max(centres)
    duration = scn.get("system.duration_us")
    if duration is not None:
        mid = 0.5 * (lo + hi)
        half = 0.5 * duration * 1e-6
        if half <= 0:
            raise ScenarioError("system.duration_us must be positive")
        return mid - half, mid + half
    margin = scn.get("system.margin_widths") * max(widths)
    return lo - margin, hi + margin


def trap_motion(scn: Scenario) -> TrapMotion:
    m = scn.data["motion"]
    species = ion_lookup(scn.get("ion.species"))
    if "temperature_mk" in m:
        v = micromotion_velocity_from_temperature(species, m["temperature_mk"] * 1e-3)
    else:
        v = m.get("velocity_m_s", 0.0)
    rf = mhz(m["rf_frequency_mhz"])
    # the configured phase refers to the midpoint of the first stage's pulses
    first = stage_schedule(scn, scn.active_stages()[0])
    phase = m["phase_rad"] - rf * first.center
    try:
        return TrapMotion(rf, v, phase)
    except ValueError as exc:
        raise ScenarioError(f"motion: {exc}") from None


def build_system(scn: Scenario) -> SystemConfig:
    fields = []
    for stage in scn.active_stages():
        fields.extend(stage_fields(scn, stage))
    try:
        return SystemConfig(ion_lookup(scn.get("ion.species")), tuple(fields), time_window(scn),
                            scn.get("system.topology"), trap_motion(scn),
                            scn.get("system.decay"), scn.get("system.metastable_decay"))
    except ValueError as exc:
        raise ScenarioError(str(exc)) from None


def build_zeeman(scn: Scenario, ratio_sigma_minus: float, ratio_pi: float) -> ZeemanConfig:
    """Eight-level configuration; field A's peak is the sigma+ amplitude."""
    if ratio_sigma_minus < 0 or ratio_pi < 0:
        raise ScenarioError("zeeman ratios must be non-negative")
    a, b = stage_fields(scn, "stage1")

    def scaled(ratio):
        if ratio == 0:
            return None
        return replace(a.pulse, peak_rabi=ratio * a.pulse.peak_rabi,
                       residual_floor=ratio * a.pulse.residual_floor)

    pump = PolarizedField("A", sigma_plus=a.pulse, sigma_minus=scaled(ratio_sigma_minus),
                          pi=scaled(ratio_pi), detuning=a.detuning, linewidth=a.linewidth)
    stokes = PolarizedField("B", sigma_minus=b.pulse, detuning=b.detuning, linewidth=b.linewidth)
    # a field sets every shift; explicit per-sublevel shifts then take precedence
    field = scn.get("zeeman.field_gauss")
    shifts = {} if field is None else dict(ZeemanBasis.from_magnetic_field(field * 1e-4).shifts)
    shifts.update({k: mhz(v) for k, v in (scn.get("zeeman.shifts_mhz") or {}).items()})
    return ZeemanConfig(ion_lookup(scn.get("ion.species")), pump, stokes, time_window(scn),
                        ZeemanBasis(shifts), trap_motion(scn), scn.get("system.decay"))

