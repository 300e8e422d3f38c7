"""Polarisation impurity of the first-stage pump in the Zeeman sublevel picture.

Shows the detection error for both qubit states at zero magnetic field,
where a sigma- admixture opens a resonant Raman path for |up>, and with a
0.5 G field that lifts the degeneracy.

Run: python demos/04_polarization.py
"""
from dstirap.domain import ion_lookup
from dstirap.zeeman import ZeemanBasis, detection_error, first_stage_config, qubit_populations

ca = ion_lookup("Ca40")
ratios = (0.04, 0.02)  # sigma-/sigma+ and pi/sigma+ amplitude ratios


def errors(**kwargs):
    cfg = first_stage_config(ca, *ratios, **kwargs)
    return {init: detection_error(init, *qubit_populations(cfg, init)) for init in ("down", "up")}


print("Omega_A+ = Omega_B = 300 MHz, Delta = 300 MHz, impurity ratios 0.04 / 0.02")
print("zero field:      ", {k: round(v, 4) for k, v in errors().items()})
basis = ZeemanBasis.from_magnetic_field(0.5e-4)
print("0.5 G, retuned:  ", {k: round(v, 4) for k, v in
                            errors(basis=basis, two_photon_detuning=basis.raman_offset()).items()})
