"""Second-stage transfer 3 -> 5: delay and two-photon detuning.

Uses the bundled presets with small grids, the same way the command line
does, and prints the resulting tables.

Run: python demos/02_second_stage.py
"""
from dstirap.scenario import load_scenario
from dstirap.sweep import SweepSpec, run_sweep


def show(result):
    name = result.spec.parameter[0]
    for value, p in zip(result.column(name), result.column("P5")):
        print(f"  {value:7.3f}  P5 = {p:.5f}")
    print("  " + result.summary())


print("Resonant stage 2, Omega = 100 MHz, versus eta (negative = intuitive order):")
scn = load_scenario("fig5_delay").with_overrides(["sweep.values=[-1.0, 0.0, 0.5, 0.8, 1.2, 2.0]"])
show(run_sweep(SweepSpec.from_scenario(scn)))

print("\nDetuned stage 2 (600 MHz), versus two-photon detuning in MHz:")
scn = load_scenario("fig6_two_photon").with_overrides(
    ["sweep.values=[-1.0, -0.5, -0.25, 0.0, 0.25, 0.5, 1.0]"])
show(run_sweep(SweepSpec.from_scenario(scn)))
