"""Dressed-state theory of a single Gaussian-pulse STIRAP stage.

Scaled variables: theta = sqrt(8) t / tau, eta = sqrt(2) dt / tau and
r = Omega_A0 / Omega_B0. In these units the pump and Stokes envelopes are
exp(-(theta -+ eta)^2 / 2) and the dark-state mixing angle is
alpha = arctan(r exp(2 eta theta)).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, linear_sum_assignment, minimize_scalar

from ._parallel import ordered_map
from .domain import LambdaUndefinedError, PulseSchedule, ion_lookup, mhz
from .liouvillian import stage_config, transfer_efficiency

SQRT2 = math.sqrt(2.0)
SQRT8 = math.sqrt(8.0)


def lambda_hamiltonian(omega_a, omega_b, delta_a, delta_b) -> np.ndarray:
    """Rotating-wave Hamiltonian of the Lambda system (hbar = 1)."""
    return 0.5 * np.array([[0.0, omega_a, 0.0],
                           [omega_a, 2.0 * delta_a, omega_b],
                           [0.0, omega_b, 2.0 * (delta_a - delta_b)]])


@dataclass(frozen=True)
class DressedState:
    """Eigensystem of the Lambda Hamiltonian on two-photon resonance."""

    alpha: float
    beta: float
    omega_plus: float
    omega_minus: float
    omega_d: float = 0.0

    @property
    def dark(self) -> np.ndarray:
        return np.array([math.cos(self.alpha), 0.0, -math.sin(self.alpha)])

    @property
    def plus(self) -> np.ndarray:
        sa, ca = math.sin(self.alpha), math.cos(self.alpha)
        sb, cb = math.sin(self.beta), math.cos(self.beta)
        # the |3> amplitude carries a + sign so that |+> is orthogonal to |d>
        return np.array([sa * sb, cb, ca * sb])

    @property
    def minus(self) -> np.ndarray:
        sa, ca = math.sin(self.alpha), math.cos(self.alpha)
        sb, cb = math.sin(self.beta), math.cos(self.beta)
        return np.array([sa * cb, -sb, ca * cb])

    def eigenvalues(self) -> np.ndarray:
        return np.array([self.omega_plus, self.omega_minus, self.omega_d])

    def eigenvectors(self) -> np.ndarray:
        """Columns |+>, |->, |d> in the bare basis (1, 2, 3)."""
        return np.column_stack([self.plus, self.minus, self.dark])


def dressed_eigensystem(omega_a, omega_b, delta_a) -> DressedState:
    """Closed-form eigenvalues and mixing angles for Delta_A = Delta_B."""
    root = math.sqrt(delta_a**2 + omega_a**2 + omega_b**2)
    # omega^+ omega^- = -(Omega_A^2 + Omega_B^2) / 4; taking the larger root
    # directly and the smaller from the product avoids cancellation
    product = -0.25 * (omega_a**2 + omega_b**2)
    if delta_a >= 0:
        w_plus = 0.5 * (delta_a + root)
        w_minus = product / w_plus if w_plus > 0 else 0.0
    else:
        w_minus = 0.5 * (delta_a - root)
        w_plus = product / w_minus
    alpha = math.atan2(omega_a, omega_b)
    beta = math.atan2(math.sqrt(max(-w_minus, 0.0)), math.sqrt(max(w_plus, 0.0)))
    return DressedState(alpha, beta, w_plus, w_minus)


class TrackingError(RuntimeError):
    pass


@dataclass
class EigenTrack:
    """Eigenvalue branches followed continuously through a pulse sequence.

    ``values[:, k]`` and ``vectors[:, :, k]`` belong to branch ``labels[k]``.
    Branches are named at the first grid point: "d" is the one that starts
    on |1>, "+" and "-" are the remaining upper and lower branches.
    """

    times: np.ndarray
    values: np.ndarray
    vectors: np.ndarray
    labels: tuple = ("+", "-", "d")

    def branch(self, label: str) -> np.ndarray:
        return self.values[:, self.labels.index(label)]

    def min_gap(self, a: str = "d", b: str = "-", where=None) -> tuple[float, float]:
        """(time, size) of the smallest separation between two branches.

        ``where`` is an optional boolean mask over the time grid restricting
        the search, e.g. to the part of the sequence where the light is on.
        """
        gap = np.abs(self.branch(a) - self.branch(b))
        if where is not None:
            gap = np.where(where, gap, np.inf)
        i = int(np.argmin(gap))
        return float(self.times[i]), float(gap[i])


def general_eigentrack(times, pump, stokes, delta_a, delta_b, min_overlap=0.5) -> EigenTrack:
    """Diagonalise the Lambda Hamiltonian along ``times`` and follow each branch.

    ``pump`` and ``stokes`` are callables returning Rabi frequencies.
    Consecutive eigenvectors are matched by maximal overlap; a matched
    overlap below ``min_overlap`` means the grid is too coarse and raises
    :class:`TrackingError`.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size < 1 or np.any(np.diff(times) <= 0):
        raise ValueError("time grid must be strictly increasing")
    n = times.size
    values = np.empty((n, 3))
    vectors = np.empty((n, 3, 3))
    prev = None
    for i, t in enumerate(times):
        w, v = np.linalg.eigh(lambda_hamiltonian(pump(t), stokes(t), delta_a, delta_b))
        if prev is None:
            d = int(np.argmax(np.abs(v[0])))
            rest = [k for k in range(3) if k != d]
            order = [rest[1], rest[0], d]  # eigh sorts ascending
        else:
            overlap = np.abs(prev.T @ v)
            rows, cols = linear_sum_assignment(-overlap)
            order = list(cols[np.argsort(rows)])
            worst = overlap[rows, cols].min()
            if worst < min_overlap:
                raise TrackingError(f"eigenvector overlap {worst:.3f} at t = {t:.6e} s; "
                                    "refine the time grid")
        w, v = w[order], v[:, order]
        if prev is not None:
            # fix the arbitrary eigenvector sign for continuity
            v = v * np.sign(np.sum(prev * v, axis=0) + 1e-300)
        values[i] = w
        vectors[i] = v
        prev = v
    return EigenTrack(times, values, vectors)


def adiabaticity_function(theta, eta, r):
    """A(theta, eta, r) = |eta| exp(theta^2 + eta^2) / (r e^{2 eta theta} + e^{-2 eta theta} / r)^2."""
    theta = np.asarray(theta, dtype=float)
    denom = r * np.exp(2 * eta * theta) + np.exp(-2 * eta * theta) / r
    out = abs(eta) * np.exp(theta**2 + eta**2) / denom**2
    return float(out) if out.ndim == 0 else out


def mixing_angle(theta, eta, r):
    """Dark-state angle alpha = arctan(r exp(2 eta theta))."""
    return np.arctan(r * np.exp(2 * eta * np.asarray(theta, dtype=float)))


def mixing_angle_rate(theta, eta, r):
    """d alpha / d theta = 2 eta / (r e^{2 eta theta} + e^{-2 eta theta} / r)."""
    theta = np.asarray(theta, dtype=float)
    return 2 * eta / (r * np.exp(2 * eta * theta) + np.exp(-2 * eta * theta) / r)


def scaled_bright_eigenvalue(theta, eta, r, lambda_):
    """Large-detuning approximation of omega^- tau / sqrt(8) for the nearest bright state."""
    theta = np.asarray(theta, dtype=float)
    return (-2 * lambda_ * (r * np.exp(2 * eta * theta) + np.exp(-2 * eta * theta) / r)
            * np.exp(-(theta**2 + eta**2)))


def _theta_equation(theta, eta, r):
    return 2 * math.tanh(2 * eta * theta + math.log(r)) - theta / eta


def solve_theta_max(eta: float, r: float, bounds=(-10.0, 10.0), samples=400):
    """Scaled time of the largest local maximum of A, or ``None`` if A has none.

    Roots of 2 tanh(2 eta theta + ln r) = theta / eta are bracketed by a
    sign-change scan and polished with Brent's method. A root is a local
    maximum when d^2 ln A / d theta^2 = 2 - 8 eta^2 sech^2(2 eta theta + ln r) < 0.
    """
    if eta == 0:
        raise ValueError("eta = 0 has no adiabaticity maximum (A vanishes identically)")
    if r <= 0:
        raise ValueError("r must be positive")
    grid = np.linspace(bounds[0], bounds[1], samples)
    f = np.array([_theta_equation(x, eta, r) for x in grid])
    roots = [float(x) for x, v in zip(grid, f) if v == 0.0]
    for a, b, fa, fb in zip(grid[:-1], grid[1:], f[:-1], f[1:]):
        if fa * fb < 0:
            roots.append(brentq(_theta_equation, a, b, args=(eta, r), xtol=1e-14, rtol=1e-15))
    best = None
    for x in roots:
        curvature = 2 - 8 * eta**2 / math.cosh(2 * eta * x + math.log(r)) ** 2
        if curvature < 0:
            if best is None or adiabaticity_function(x, eta, r) > adiabaticity_function(best, eta, r):
                best = x
    return best


def a_max(eta: float, r: float):
    """A at its maximum, or ``None`` where no maximum exists."""
    theta = solve_theta_max(eta, r)
    return None if theta is None else adiabaticity_function(theta, eta, r)


def lambda_parameter(omega_a0, omega_b0, delta_a, tau) -> float:
    """Lambda = Omega_A0 Omega_B0 tau / (16 sqrt(2) |Delta_A|)."""
    if delta_a == 0:
        raise LambdaUndefinedError("Lambda is undefined on one-photon resonance")
    return omega_a0 * omega_b0 * tau / (16 * SQRT2 * abs(delta_a))


def peak_rabi_for_lambda(lambda_, r, detuning, tau) -> tuple[float, float]:
    """(Omega_A0, Omega_B0) giving the requested Lambda and ratio r."""
    product = lambda_ * 16 * SQRT2 * abs(detuning) / tau
    stokes = math.sqrt(product / r)
    return r * stokes, stokes


@dataclass(frozen=True)
class AdiabaticityReport:
    lambda_: float
    eta: float
    r: float
    theta_max: float | None
    a_max: float | None
    margin: float = 5.0

    @property
    def satisfied(self) -> bool:
        """A_max <= Lambda / margin; false when A has no maximum."""
        return self.a_max is not None and self.a_max <= self.lambda_ / self.margin

    def lines(self) -> list[str]:
        fmt = lambda x: "none" if x is None else f"{0.0 if abs(x) < 1e-12 else x:.6g}"  # noqa: E731
        return [f"Lambda = {self.lambda_:.6g}", f"eta = {self.eta:.6g}", f"r = {self.r:.6g}",
                f"theta_max = {fmt(self.theta_max)}", f"A_max = {fmt(self.a_max)}",
                f"margin = {self.margin:g}", f"satisfied = {str(self.satisfied).lower()}"]


def adiabaticity_report(schedule: PulseSchedule, margin: float = 5.0) -> AdiabaticityReport:
    eta, r = schedule.eta, schedule.r
    theta = solve_theta_max(eta, r)
    amax = None if theta is None else adiabaticity_function(theta, eta, r)
    return AdiabaticityReport(schedule.lambda_, eta, r, theta, amax, margin)


def analytic_transfer_probability(eta, r, duration):
    """P_3 = 1 / (1 + r^-2 exp(-4 eta Theta)) for a scaled run duration Theta."""
    return 1.0 / (1.0 + np.exp(-4 * np.asarray(eta) * duration) / r**2)


def dephasing_prediction(gamma35, tau, delay):
    """Adiabatic-limit P_5 = 1/3 + 2/3 exp(-3 gamma35 tau^2 / (16 dt))."""
    if np.any(np.asarray(gamma35) < 0):
        raise ValueError("gamma35 must be non-negative")
    if delay <= 0:
        raise ValueError("pulse delay must be positive")
    return 1 / 3 + 2 / 3 * np.exp(-3 * np.asarray(gamma35) * tau**2 / (16 * delay))


@dataclass(frozen=True)
class BlochEngine:
    """Three-level Bloch-equation transfer probability as a function of eta.

    Decay is switched off and the lasers are coherent; the large one-photon
    detuning makes the result depend on Lambda and r only.
    """

    r: float
    lambda_: float
    detuning: float = mhz(4000)
    width: float = 2e-6
    margin_widths: float = 2.0
    species: str = "Ca40"
    integrator: dict = field(default_factory=dict)

    def __call__(self, eta: float) -> float:
        pump, stokes = peak_rabi_for_lambda(self.lambda_, self.r, self.detuning, self.width)
        sched = PulseSchedule.from_eta(self.width, eta, pump, stokes, self.detuning)
        cfg = stage_config(ion_lookup(self.species), 1, sched, decay=False,
                           margin_widths=self.margin_widths)
        return transfer_efficiency(cfg, 1, 3, **self.integrator)


def optimal_eta(r: float, lambda_: float, bloch_engine=None, grid=None, refine=True,
                jobs=1) -> tuple[float, float]:
    """(eta_opt, P_max) from a grid scan of the transfer probability.

    The default grid is [0.3, 2.0] in steps of 0.01; with ``refine`` the
    coarse maximiser is polished by a bounded scalar search over its two
    neighbouring grid intervals.
    """
    engine = bloch_engine or BlochEngine(r, lambda_)
    grid = np.round(np.arange(0.3, 2.0 + 1e-9, 0.01), 10) if grid is None else np.asarray(grid)
    probs = np.array(ordered_map(engine, list(grid), jobs))
    i = int(np.argmax(probs))
    best_eta, best_p = float(grid[i]), float(probs[i])
    if refine and 0 < i < len(grid) - 1:
        res = minimize_scalar(lambda x: -engine(x), bounds=(grid[i - 1], grid[i + 1]),
                              method="bounded", options={"xatol": 1e-4})
        if -res.fun > best_p:
            best_eta, best_p = float(res.x), float(-res.fun)
    return best_eta, best_p

