"""Laser linewidth against pulse width.

A finite linewidth dephases the Raman coherence, so longer pulses are
more adiabatic but lose more coherence. The demo compares the simulated
transfer with the adiabatic-limit dephasing formula and then finds the
best pulse width for 2 kHz lasers.

Run: python demos/03_linewidth.py
"""
import numpy as np

from dstirap.analytic import dephasing_prediction
from dstirap.domain import PulseSchedule, ion_lookup, khz, mhz
from dstirap.liouvillian import stage_config, transfer_efficiency
from dstirap.sweep import optimize_pulse_width

ca = ion_lookup("Ca40")
tau, delay = 2e-6, 1.2e-6
schedule = PulseSchedule(tau, delay, mhz(100), mhz(100), mhz(600))

print("gamma_35 (kHz)  simulated P5  formula")
for g35 in (0.0, 2.0, 5.0, 10.0):
    # the 3-5 coherence dephases at the sum of both laser linewidths
    cfg = stage_config(ca, 2, schedule, linewidth=khz(g35) / 2, decay=False)
    p = transfer_efficiency(cfg, 3, 5)
    print(f"  {g35:6.1f}        {p:.5f}     {dephasing_prediction(khz(g35), tau, delay):.5f}")

cfg = stage_config(ca, 2, PulseSchedule.from_eta(tau, 0.85, mhz(100), mhz(100), mhz(600)))
res = optimize_pulse_width(cfg, khz(2.0), taus=np.arange(0.25e-6, 2.01e-6, 0.25e-6))
print(f"\nWith 2 kHz lasers the best pulse width is {res.tau * 1e6:.3f} us "
      f"(P5 = {res.probability:.5f}, {res.kind})")
