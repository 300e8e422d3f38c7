"""How adiabatic is a detuned Raman pulse pair?

Prints the adiabaticity parameter Lambda for the standard pulse pair, the
dressed-state energies at the pulse crossing and the maximum of the
adiabaticity function for a few pulse separations.

Run: python demos/01_adiabaticity.py
"""
import math

from dstirap.analytic import a_max, adiabaticity_report, dressed_eigensystem, solve_theta_max
from dstirap.domain import PulseSchedule, mhz, to_mhz

schedule = PulseSchedule(width=2e-6, delay=1.2e-6, pump_peak=mhz(100), stokes_peak=mhz(100),
                         one_photon_detuning=mhz(600))
print("Standard pulse pair: tau = 2 us, delay = 1.2 us, Omega = 100 MHz, Delta = 600 MHz")
for line in adiabaticity_report(schedule).lines():
    print("  " + line)

pump, stokes = schedule.pulses()
ds = dressed_eigensystem(pump(0.0), stokes(0.0), schedule.one_photon_detuning)
print("\nDressed energies where the pulses cross (MHz):")
print(f"  omega+ = {to_mhz(ds.omega_plus):9.4f}")
print(f"  omega0 = {to_mhz(ds.omega_d):9.4f}   (dark state, exactly zero)")
print(f"  omega- = {to_mhz(ds.omega_minus):9.4f}")
print(f"  mixing angle = {math.degrees(ds.alpha):.1f} deg")

print("\nMaximum of the adiabaticity function A(theta) for r = 1:")
for eta in (0.8, 1.0, 1.2, 1.5):
    theta = solve_theta_max(eta, 1.0)
    theta = 0.0 if abs(theta) < 1e-9 else theta  # symmetric pulses peak at theta = 0
    print(f"  eta = {eta:3.1f}: A_max = {a_max(eta, 1.0):8.3f} at theta = {theta:+.3f}")
