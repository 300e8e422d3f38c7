"""ODE integrators for vectorised density matrices.

``dopri5`` is a compiled Dormand-Prince 5(4) pair for generators of the form

    L(t) = sum_k c_k(t) L_k

with ``c_0 = 1``, ``c_k`` (k = 1..n_fields) Gaussian-with-floor pulse
envelopes and the last coefficient a micromotion factor -v cos(w t + phi).
Each ``L_k`` is stored as COO triplets so one right-hand-side evaluation
touches only the nonzeros.

``rk4_fixed`` is a plain NumPy fixed-step classical Runge-Kutta used as an
independent cross-check.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba as nb
import numpy as np

OK = 0
STEP_UNDERFLOW = 1
TOO_MANY_STEPS = 2

# Dormand-Prince tableau
C2, C3, C4, C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
A21 = 1 / 5
A31, A32 = 3 / 40, 9 / 40
A41, A42, A43 = 44 / 45, -56 / 15, 32 / 9
A51, A52, A53, A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
A61, A62, A63, A64, A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
B1, B3, B4, B5, B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
E1, E3, E4, E5, E6, E7 = (71 / 57600, -71 / 16695, 71 / 1920, -17253 / 339200,
                          22 / 525, -1 / 40)


class IntegrationError(RuntimeError):
    def __init__(self, message, time):
        super().__init__(f"{message} at t = {time:.6e} s")
        self.time = time


@nb.njit(cache=True)
def _coefficients(t, pulses, motion, out):
    n = pulses.shape[0]
    out[0] = 1.0
    for k in range(n):
        x = (t - pulses[k, 2]) / pulses[k, 1]
        a = pulses[k, 0] * np.exp(-x * x)
        floor = pulses[k, 3]
        out[k + 1] = a if a > floor else floor
    out[n + 1] = -motion[0] * np.cos(motion[1] * t + motion[2])


@nb.njit(cache=True)
def _rhs(t, y, rows, cols, vals, cidx, pulses, motion, coef, dy):
    _coefficients(t, pulses, motion, coef)
    dy[:] = 0.0
    for n in range(rows.shape[0]):
        dy[rows[n]] += vals[n] * coef[cidx[n]] * y[cols[n]]


@nb.njit(cache=True)
def _err_norm(err, y, ynew, rtol, atol):
    s = 0.0
    for i in range(y.shape[0]):
        sc = atol + rtol * max(abs(y[i]), abs(ynew[i]))
        e = abs(err[i]) / sc
        s += e * e
    return np.sqrt(s / y.shape[0])


@nb.njit(cache=True)
def _dopri5(y0, t0, t1, sample_times, rows, cols, vals, cidx, pulses, motion,
            rtol, atol, h_max, max_steps):
    n = y0.shape[0]
    ncoef = pulses.shape[0] + 2
    coef = np.empty(ncoef)
    samples = np.zeros((sample_times.shape[0], n), dtype=np.complex128)
    k1 = np.empty(n, dtype=np.complex128)
    k2 = np.empty(n, dtype=np.complex128)
    k3 = np.empty(n, dtype=np.complex128)
    k4 = np.empty(n, dtype=np.complex128)
    k5 = np.empty(n, dtype=np.complex128)
    k6 = np.empty(n, dtype=np.complex128)
    k7 = np.empty(n, dtype=np.complex128)
    ytmp = np.empty(n, dtype=np.complex128)
    ynew = np.empty(n, dtype=np.complex128)
    err = np.empty(n, dtype=np.complex128)
    y = y0.copy()
    t = t0

    _rhs(t, y, rows, cols, vals, cidx, pulses, motion, coef, k1)
    # Hairer's starting-step heuristic
    d0 = 0.0
    d1 = 0.0
    for i in range(n):
        sc = atol + rtol * abs(y[i])
        d0 += (abs(y[i]) / sc) ** 2
        d1 += (abs(k1[i]) / sc) ** 2
    d0 = np.sqrt(d0 / n)
    d1 = np.sqrt(d1 / n)
    if d0 < 1e-5 or d1 < 1e-5:
        h = 1e-6 * (t1 - t0)
    else:
        h = 0.01 * d0 / d1
    h = min(h, h_max, t1 - t0)

    isample = 0
    while isample < sample_times.shape[0] and sample_times[isample] <= t0:
        samples[isample] = y
        isample += 1

    nsteps = 0
    naccept = 0
    status = 0
    fac_old = 1e-4
    while t < t1:
        if nsteps >= max_steps:
            status = 2
            break
        target = t1
        if isample < sample_times.shape[0] and sample_times[isample] < target:
            target = sample_times[isample]
        hs = h
        hit = False
        # stretch a step that would stop just short of the target, so that no
        # sliver of a step (possibly below rounding resolution) is left over
        if t + 1.01 * hs >= target:
            hs = target - t
            hit = True
        if hs <= 1e-14 * max(abs(t), abs(t1 - t0)):
            status = 1
            break

        for i in range(n):
            ytmp[i] = y[i] + hs * A21 * k1[i]
        _rhs(t + C2 * hs, ytmp, rows, cols, vals, cidx, pulses, motion, coef, k2)
        for i in range(n):
            ytmp[i] = y[i] + hs * (A31 * k1[i] + A32 * k2[i])
        _rhs(t + C3 * hs, ytmp, rows, cols, vals, cidx, pulses, motion, coef, k3)
        for i in range(n):
            ytmp[i] = y[i] + hs * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i])
        _rhs(t + C4 * hs, ytmp, rows, cols, vals, cidx, pulses, motion, coef, k4)
        for i in range(n):
            ytmp[i] = y[i] + hs * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i])
        _rhs(t + C5 * hs, ytmp, rows, cols, vals, cidx, pulses, motion, coef, k5)
        for i in range(n):
            ytmp[i] = y[i] + hs * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i]
                                   + A64 * k4[i] + A65 * k5[i])
        _rhs(t + hs, ytmp, rows, cols, vals, cidx, pulses, motion, coef, k6)
        for i in range(n):
            ynew[i] = y[i] + hs * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i]
                                   + B5 * k5[i] + B6 * k6[i])
        _rhs(t + hs, ynew, rows, cols, vals, cidx, pulses, motion, coef, k7)
        for i in range(n):
            err[i] = hs * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i]
                           + E6 * k6[i] + E7 * k7[i])
        nsteps += 1
        e = _err_norm(err, y, ynew, rtol, atol)

        if e <= 1.0:
            naccept += 1
            t = target if hit else t + hs
            for i in range(n):
                y[i] = ynew[i]
                k1[i] = k7[i]
            if hit and isample < sample_times.shape[0] and t == sample_times[isample]:
                samples[isample] = y
                isample += 1
            # PI controller (Gustafsson)
            e = max(e, 1e-10)
            fac = 0.9 * e ** (-0.7 / 5) * fac_old ** (0.4 / 5)
            fac = min(5.0, max(0.2, fac))
            fac_old = e
            if hit:
                # a truncated step only ever shrinks the natural step
                h = min(h, hs * fac)
            else:
                h = min(h_max, hs * fac)
        else:
            h = hs * max(0.2, 0.9 * e ** (-1 / 5))

    return y, samples, status, t, naccept, nsteps


@dataclass
class SparseGenerator:
    """COO form of ``sum_k c_k(t) L_k`` ready for the compiled kernel."""

    dim: int
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray
    cidx: np.ndarray
    pulses: np.ndarray   # (n_fields, 4): peak, width/2, centre, floor
    motion: np.ndarray   # (3,): v, Omega_RF, phi

    def rhs(self, t, y):
        dy = np.empty_like(y)
        coef = np.empty(self.pulses.shape[0] + 2)
        _rhs(t, y, self.rows, self.cols, self.vals, self.cidx,
             self.pulses, self.motion, coef, dy)
        return dy


@dataclass
class IntegrationResult:
    y: np.ndarray
    samples: np.ndarray
    t: float
    accepted: int
    attempted: int


def dopri5(gen: SparseGenerator, y0, t0, t1, sample_times=None, rtol=1e-9,
           atol=1e-12, h_max=np.inf, max_steps=50_000_000) -> IntegrationResult:
    """Integrate ``dy/dt = L(t) y`` from ``t0`` to ``t1`` with step-size control.

    Raises
    ------
    IntegrationError
        On step-size underflow or when ``max_steps`` is exhausted; the
        exception carries the time of failure.
    """
    if sample_times is None:
        sample_times = np.empty(0)
    sample_times = np.ascontiguousarray(sample_times, dtype=float)
    y0 = np.ascontiguousarray(y0, dtype=np.complex128)
    y, samples, status, t, acc, att = _dopri5(
        y0, float(t0), float(t1), sample_times, gen.rows, gen.cols, gen.vals,
        gen.cidx, gen.pulses, gen.motion, rtol, atol, float(h_max), max_steps)
    if status == STEP_UNDERFLOW:
        raise IntegrationError("step size underflow", t)
    if status == TOO_MANY_STEPS:
        raise IntegrationError(f"step limit {max_steps} exceeded", t)
    return IntegrationResult(y, samples, t, acc, att)


def rk4_fixed(rhs, y0, t0, t1, h):
    """Classical fourth-order Runge-Kutta with a constant step (last step shortened)."""
    y = np.array(y0, dtype=np.complex128)
    n = int(np.ceil((t1 - t0) / h - 1e-9))
    ts = t0 + h * np.arange(n + 1)
    ts[-1] = t1
    for t, tn in zip(ts[:-1], ts[1:]):
        dt = tn - t
        k1 = rhs(t, y)
        k2 = rhs(t + dt / 2, y + dt / 2 * k1)
        k3 = rhs(t + dt / 2, y + dt / 2 * k2)
        k4 = rhs(tn, y + dt * k3)
        y = y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return y
