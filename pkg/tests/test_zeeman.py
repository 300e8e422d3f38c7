import math

import numpy as np
import pytest
from sympy import Rational
from sympy.physics.quantum.cg import CG

from dstirap.domain import GaussianPulse, PulseSchedule, ion_lookup, mhz
from dstirap.liouvillian import ConfigError, check_density_matrix, stage_config, transfer_efficiency
from dstirap.zeeman import (DOWN, SUBLEVELS, UP, PolarizedField, ProjectionScan, ZeemanBasis,
                            build_zeeman_generator, clebsch_gordan, detection_error, dipole_lines,
                            evolve_zeeman, first_stage_config, magnetic_quantum_number,
                            projection_error_scan, qubit_populations, zeeman_generator)

CA = ion_lookup("Ca40")
HALF = Rational(1, 2)


@pytest.mark.parametrize("field_name, j2", [("A", 1), ("B", 3)])
def test_clebsch_gordan_against_sympy(field_name, j2):
    j = Rational(j2, 2)
    for m2 in range(-j2, j2 + 1, 2):
        for q in (-1, 0, 1):
            up = Rational(m2, 2) + q
            exact = CG(j, Rational(m2, 2), 1, q, HALF, up).doit() if abs(up) <= HALF else 0
            assert clebsch_gordan(field_name, m2, q) == pytest.approx(float(exact), abs=1e-15)


@pytest.mark.parametrize("field_name", ["A", "B"])
def test_strongest_line_is_normalised_to_one(field_name):
    coeffs = [abs(c) for q in (-1, 0, 1) for _, _, c in dipole_lines(field_name, q)]
    assert max(coeffs) == pytest.approx(1.0)


@pytest.mark.parametrize("field_name", ["A", "B"])
def test_line_strengths_sum_to_one_per_upper_sublevel(field_name):
    term = "S" if field_name == "A" else "D"
    totals = {}
    for lab in SUBLEVELS:
        if lab[0] != term:
            continue
        m2 = int(round(2 * magnetic_quantum_number(lab)))
        for q in (-1, 0, 1):
            c = clebsch_gordan(field_name, m2, q)
            if c:
                totals[m2 + 2 * q] = totals.get(m2 + 2 * q, 0.0) + c * c
    assert set(totals) == {-1, 1}
    assert all(v == pytest.approx(1.0) for v in totals.values())


def _pulse(peak=mhz(100)):
    return GaussianPulse(peak, 2e-6)


def test_selection_rules_are_structural():
    basis = ZeemanBasis()
    for pol in ("sigma_plus", "sigma_minus", "pi"):
        q = {"sigma_plus": 1, "sigma_minus": -1, "pi": 0}[pol]
        pump = PolarizedField("A", **{pol: _pulse()})
        stokes = PolarizedField("B", **{pol: _pulse()})
        h = zeeman_generator(pump, stokes, basis, 0.0)
        for i, a in enumerate(SUBLEVELS):
            for j, b in enumerate(SUBLEVELS):
                if abs(h[i, j]) > 0 and i != j:
                    lower, upper = sorted((a, b), key=lambda s: s[0] == "P")
                    assert upper[0] == "P" and lower[0] != "P"
                    dm = magnetic_quantum_number(upper) - magnetic_quantum_number(lower)
                    assert dm == q


def test_hamiltonian_is_hermitian():
    pump = PolarizedField("A", _pulse(), _pulse(mhz(5)), _pulse(mhz(3)), detuning=mhz(300))
    stokes = PolarizedField("B", sigma_minus=_pulse(), detuning=mhz(300))
    basis = ZeemanBasis.from_magnetic_field(1e-4)
    for t in (-1e-6, 0.0, 2e-6):
        h = zeeman_generator(pump, stokes, basis, t)
        assert np.allclose(h, h.conj().T)


def test_reflection_symmetry_of_the_spectrum():
    pump = PolarizedField("A", sigma_plus=_pulse(mhz(120)), sigma_minus=_pulse(mhz(7)),
                          pi=_pulse(mhz(4)), detuning=mhz(300))
    stokes = PolarizedField("B", sigma_minus=_pulse(mhz(90)), detuning=mhz(300))
    mirror_pump = PolarizedField("A", sigma_plus=pump.sigma_minus, sigma_minus=pump.sigma_plus,
                                 pi=pump.pi, detuning=mhz(300))
    mirror_stokes = PolarizedField("B", sigma_plus=stokes.sigma_minus, detuning=mhz(300))
    basis = ZeemanBasis()
    for t in (-0.5e-6, 0.3e-6):
        w = np.linalg.eigvalsh(zeeman_generator(pump, stokes, basis, t))
        wm = np.linalg.eigvalsh(zeeman_generator(mirror_pump, mirror_stokes, basis, t))
        assert np.allclose(w, wm, atol=1e-6 * np.abs(w).max())


def test_decay_preserves_total_rates_to_each_term():
    cfg = first_stage_config(CA, peak_rabi=0.0)
    for upper in ("P-1/2", "P+1/2"):
        traj = evolve_zeeman(cfg, upper, samples=0)
        pops = np.diag(traj.final).real
        s = sum(p for lab, p in zip(SUBLEVELS, pops) if lab[0] == "S")
        d = sum(p for lab, p in zip(SUBLEVELS, pops) if lab[0] == "D")
        assert s + d == pytest.approx(1.0, abs=1e-9)
        assert s / d == pytest.approx(CA.gamma21 / CA.gamma23, rel=1e-6)


def test_weak_field_shifts():
    basis = ZeemanBasis.from_magnetic_field(1e-4)  # 1 G
    assert basis.shift(UP) / (2 * math.pi * 1e6) == pytest.approx(1.39962, rel=1e-5)
    assert basis.shift(UP) == pytest.approx(-basis.shift(DOWN))
    assert basis.shift("D+3/2") / basis.shift(UP) == pytest.approx(0.8 * 1.5 / 1.0)
    with pytest.raises(ConfigError):
        ZeemanBasis({"X": 1.0})


def test_perfect_polarisation_shelves_down_and_spares_up():
    cfg = first_stage_config(CA)
    pd, pu = qubit_populations(cfg, "down")
    assert detection_error("down", pd, pu) < 1e-3
    pd, pu = qubit_populations(cfg, "up")
    assert detection_error("up", pd, pu) < 1e-2


def test_eight_level_matches_three_level_with_pure_polarisation():
    zcfg = first_stage_config(CA)
    traj = evolve_zeeman(zcfg, "down", samples=0)
    shelved = sum(traj.final_population(lab) for lab in SUBLEVELS if lab[0] == "D")
    sched = PulseSchedule(2e-6, 1.3e-6, mhz(300), mhz(300), mhz(300))
    three = transfer_efficiency(stage_config(CA, 1, sched), 1, 3)
    assert shelved == pytest.approx(three, abs=1e-3)


def test_populations_stay_normalised_and_physical():
    cfg = first_stage_config(CA, 0.05, 0.03)
    traj = evolve_zeeman(cfg, "up", samples=40)
    for rho in traj.states:
        check_density_matrix(rho)


def test_up_error_grows_with_sigma_minus():
    errors = [detection_error("up", *qubit_populations(first_stage_config(CA, r, 0.0), "up"))
              for r in (0.0, 0.02, 0.05, 0.1)]
    assert np.all(np.diff(errors) > 0)


def test_weak_field_detunes_the_up_raman_path():
    # With degenerate sublevels |up> -> P(-1/2) <- D(+1/2) is a resonant Lambda
    # and the sigma- admixture shelves |up>; a 0.5 G field with the Stokes
    # retuned onto the |down> Raman resonance restores both qubit states.
    basis = ZeemanBasis.from_magnetic_field(0.5e-4)
    cfg = first_stage_config(CA, 0.04, 0.02, basis=basis,
                             two_photon_detuning=basis.raman_offset())
    for init in ("down", "up"):
        assert detection_error(init, *qubit_populations(cfg, init)) <= 0.01


def test_detection_error_definition():
    assert detection_error("down", 0.01, 0.02) == pytest.approx(0.03)
    assert detection_error("up", 0.0, 0.97) == pytest.approx(0.03)
    with pytest.raises(ValueError):
        detection_error("sideways", 0, 0)


def test_projection_scan_order_and_table_round_trip(tmp_path):
    scan = projection_error_scan(CA, [0.0, 0.05], [0.0], ["down", "up"], jobs=1,
                                 config_kwargs={"peak_rabi": mhz(100), "detuning": mhz(600)})
    assert [(r[0], r[2]) for r in scan.rows] == [(0.0, "down"), (0.05, "down"),
                                                 (0.0, "up"), (0.05, "up")]
    path = tmp_path / "scan.csv"
    scan.to_table(path, [("name", "test")])
    back = ProjectionScan.from_table(path)
    assert len(back.rows) == 4
    for a, b in zip(back.rows, scan.rows):
        assert a[2] == b[2] and np.allclose(a[:2] + a[3:], b[:2] + b[3:], rtol=1e-9)
    rm, rp, err = scan.error_surface("up")
    assert err.shape == (1, 2) and err[0, 1] > err[0, 0]


def test_polarised_field_validation():
    with pytest.raises(ConfigError):
        PolarizedField("C", sigma_plus=_pulse())
    with pytest.raises(ValueError):
        PolarizedField("A", sigma_minus=_pulse()).ratios
    f = PolarizedField("A", _pulse(mhz(100)), _pulse(mhz(4)), _pulse(mhz(2)))
    assert f.ratios == pytest.approx((0.04, 0.02))


def test_generator_dimensions():
    gen = build_zeeman_generator(first_stage_config(CA, 0.1, 0.1))
    assert gen.dim == 8
    assert len(gen.couplings) == 4
