"""Both stages in one five-level run with every imperfection switched on.

Runs the full-sequence preset at a few first-stage two-photon detunings,
then repeats the best point with the linewidth and residual light removed.

Run: python demos/05_full_sequence.py
"""
from dstirap.scenario import load_scenario
from dstirap.sweep import SweepSpec, run_sweep

base = load_scenario("full-double-stirap").with_overrides(
    ["sweep.values=[-0.2, -0.15, -0.1, -0.05, 0.0]"])
result = run_sweep(SweepSpec.from_scenario(base))
for d, p in zip(result.column(result.spec.parameter[0]), result.column("P5")):
    print(f"  Delta_B - Delta_A = {d:+.2f} MHz: P5 = {p:.4f}")
print(result.summary())

best, _ = result.best()
clean = [f"stage{s}.fields.{f}.{key}=0" for s, fs in ((1, "AB"), (2, "CD")) for f in fs
         for key in ("linewidth_khz", "residual_fraction")]
ideal = base.with_overrides([*clean, "sweep.values=[%r]" % best])
print("without linewidth and residual light:",
      f"P5 = {run_sweep(SweepSpec.from_scenario(ideal)).column('P5')[0]:.4f}")
