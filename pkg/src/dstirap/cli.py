"""Command-line front end.

``dstirap run <scenario>`` evaluates a scenario file or a bundled preset,
writes the result table (and optionally a static plot) and prints a one-line
summary. ``report-adiabaticity`` prints the adiabaticity figures of merit of
each active stage, ``list-scenarios`` prints the preset catalogue and
``export-ions`` writes the ion database as a text file.

Exit status is 0 on success, 1 for configuration errors and missing files,
and 2 when an integration or another numerical step fails.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .analytic import adiabaticity_report
from .domain import LambdaUndefinedError, export_ion_table
from .liouvillian import ConfigError
from .scenario import (Scenario, load_scenario, preset_names, preset_text, stage_schedule)
from .sweep import SweepSpec, run_sweep, run_zeeman_scan, write_trajectory

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2


def _load(ref: str, overrides) -> Scenario:
    scn = load_scenario(ref).with_overrides(overrides or [])
    scn.validate()
    return scn


def _table_path(scn: Scenario, out: Path) -> Path:
    name = scn.get("output.table") or f"{scn.name}.csv"
    return out / Path(name).name


def _plot_sweep(result, path: Path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    if result.spec.parameter:
        x = result.column(result.spec.parameter[0])
        for name in result.observables:
            ax.plot(x, result.column(name), marker=".", label=name)
        ax.set_xlabel(", ".join(result.spec.parameter))
    else:
        names, data = result.rows[0].trajectory
        for j, name in enumerate(names[1:], start=1):
            ax.plot(data[:, 0], data[:, j], label=name)
        ax.set_xlabel(names[0])
    ax.legend()
    ax.set_title(result.spec.base.name)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _plot_zeeman(scan, path: Path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    for init in sorted({r[2] for r in scan.rows}):
        rm, rp, err = scan.error_surface(init)
        for j, p in enumerate(rp):
            ax.plot(rm, err[j], marker=".", label=f"init {init}, pi ratio {p:g}")
    ax.set_xlabel("sigma- / sigma+ amplitude ratio")
    ax.set_ylabel("detection error")
    ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _run_zeeman(scn: Scenario, out: Path, plot: bool, jobs) -> int:
    scan = run_zeeman_scan(scn, jobs=jobs or scn.get("sweep.jobs"))
    path = _table_path(scn, out)
    scan.to_table(path, [("name", scn.name), ("kind", scn.kind), ("source", scn.source),
                         *scn.flat()])
    for init in sorted({r[2] for r in scan.rows}):
        rm, rp, err = scan.error_surface(init)
        i, j = np.unravel_index(np.argmax(err), err.shape)
        print(f"{scn.name}: init {init}: max detection error {err[i, j]:.4g} "
              f"at sigma-/sigma+ = {rm[j]:g}, pi/sigma+ = {rp[i]:g}")
    if plot:
        _plot_zeeman(scan, path.with_suffix(".png"))
    print(f"table written to {path}")
    return EXIT_OK


def cmd_run(args) -> int:
    scn = _load(args.scenario, args.set)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    plot = args.plot or scn.get("output.plot")
    if scn.kind == "zeeman":
        return _run_zeeman(scn, out, plot, args.jobs)
    result = run_sweep(SweepSpec.from_scenario(scn, jobs=args.jobs))
    path = _table_path(scn, out)
    result.to_table(path)
    meta = result.metadata()
    for row in result.rows:
        if row.trajectory is not None:
            names, data = row.trajectory
            suffix = "trajectory" if not result.spec.parameter else f"row{row.index:03d}"
            write_trajectory(path.with_name(f"{path.stem}_{suffix}.csv"), names, data, meta)
    if plot:
        _plot_sweep(result, path.with_suffix(".png"))
    print(result.summary())
    print(f"table written to {path}")
    for row in result.failed:
        print(f"row {row.index} ({row.value}): {row.status}", file=sys.stderr)
    return EXIT_NUMERICAL if result.failed else EXIT_OK


def cmd_report(args) -> int:
    scn = _load(args.scenario, args.set)
    stages = [s for s in scn.active_stages() if s in scn.data]
    if not stages:
        raise ConfigError(f"{scn.name}: scenario has no pulse stages to report on")
    for stage in stages:
        print(f"[{stage}]")
        try:
            report = adiabaticity_report(stage_schedule(scn, stage))
        except LambdaUndefinedError:
            print("Lambda is undefined: the one-photon detuning is zero, and Lambda "
                  "measures adiabaticity only for a detuned, dispersive coupling")
            continue
        for line in report.lines():
            print(line)
    return EXIT_OK


def cmd_list(args) -> int:
    for name in preset_names():
        desc = Scenario.from_toml(preset_text(name)).get("scenario.description") or ""
        print(f"{name:20s} {desc}")
    return EXIT_OK


def cmd_export_ions(args) -> int:
    export_ion_table(args.path)
    print(f"ion table written to {args.path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dstirap",
                                     description="Double-STIRAP shelving simulations")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario file or preset")
    run.add_argument("scenario", help="path to a scenario file or a preset name")
    run.add_argument("--set", action="append", metavar="KEY=VALUE",
                     help="override a scenario key, e.g. stage2.tau_us=3")
    run.add_argument("--out", default=".", help="output directory (default: current)")
    run.add_argument("--plot", action="store_true", help="also write a PNG plot")
    run.add_argument("--jobs", type=int, default=None, help="worker processes")
    run.set_defaults(func=cmd_run)

    rep = sub.add_parser("report-adiabaticity", help="print Lambda, eta, r and A_max")
    rep.add_argument("scenario")
    rep.add_argument("--set", action="append", metavar="KEY=VALUE")
    rep.set_defaults(func=cmd_report)

    lst = sub.add_parser("list-scenarios", help="list bundled presets")
    lst.set_defaults(func=cmd_list)

    exp = sub.add_parser("export-ions", help="write the ion database as text")
    exp.add_argument("path")
    exp.set_defaults(func=cmd_export_ions)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArithmeticError, RuntimeError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
