"""Retarded material law (G * u)(t) and the fixed-point windowing driver.

G acts as a space-constant 6x6 real matrix multiplier.  The convolution is
evaluated with the trapezoidal rule on the integrator's uniform history
grid (O(dt^2) for smooth integrands); its time derivative uses

    d/dt (G * u)(t) = G(0) u(t) + integral_0^t G'(t - s) u(s) ds,

available for the closed kernel forms only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, NumericalError, UsageError
from .grid import Field6

ZERO = "zero"
EXPONENTIAL = "exponential"
TABLE = "table"


@dataclass(frozen=True, eq=False)
class KernelSpec:
    """Memory kernel G(t): zero, amplitude*exp(-rate*t)*coupling, or a table."""

    form: str = ZERO
    amplitude: float = 0.0
    rate: float = 0.0
    coupling: np.ndarray | None = None       # 6x6 real, defaults to identity
    table_times: np.ndarray | None = None    # increasing sample times
    table_values: np.ndarray | None = None   # (m, 6, 6)

    def __post_init__(self):
        if self.form not in (ZERO, EXPONENTIAL, TABLE):
            raise ConfigurationError(f"unknown kernel form {self.form!r}")
        if self.form == EXPONENTIAL and self.coupling is None:
            object.__setattr__(self, "coupling", np.eye(6))
        if self.form == TABLE:
            if self.table_times is None or self.table_values is None:
                raise ConfigurationError("table kernel needs times and values")
            if not np.all(np.isfinite(self.table_values)):
                raise ConfigurationError("table kernel values must be finite")

    @property
    def is_zero(self):
        return self.form == ZERO or (self.form == EXPONENTIAL and self.amplitude == 0.0)

    def matrix_at(self, t: float) -> np.ndarray:
        if self.form == ZERO:
            return np.zeros((6, 6))
        if self.form == EXPONENTIAL:
            return self.amplitude * np.exp(-self.rate * t) * self.coupling
        idx = np.clip(np.searchsorted(self.table_times, t), 1,
                      len(self.table_times) - 1)
        t0, t1 = self.table_times[idx - 1], self.table_times[idx]
        w = 0.0 if t1 == t0 else (t - t0) / (t1 - t0)
        return (1 - w) * self.table_values[idx - 1] + w * self.table_values[idx]

    def derivative_at(self, t: float) -> np.ndarray:
        if self.form == ZERO:
            return np.zeros((6, 6))
        if self.form == EXPONENTIAL:
            return -self.rate * self.amplitude * np.exp(-self.rate * t) * self.coupling
        raise UsageError("table kernels do not support the analytic derivative")

    def l1_norm(self, horizon: float) -> float:
        """integral_0^T of the spectral operator norm of G(t)."""
        if self.form == ZERO:
            return 0.0
        if self.form == EXPONENTIAL:
            op = float(np.linalg.norm(self.coupling, 2)) * abs(self.amplitude)
            if self.rate == 0.0:
                return op * horizon
            return op * (1.0 - np.exp(-self.rate * horizon)) / self.rate
        times = self.table_times
        norms = [np.linalg.norm(v, 2) for v in self.table_values]
        return float(np.trapezoid(norms, times))


def exponential_kernel(amplitude: float, rate: float,
                       coupling: np.ndarray | None = None) -> KernelSpec:
    return KernelSpec(form=EXPONENTIAL, amplitude=amplitude, rate=rate,
                      coupling=coupling)


@dataclass
class History:
    """Uniformly spaced record of past states (single writer: the stepper)."""

    dt: float
    times: list = field(default_factory=list)
    states: list = field(default_factory=list)

    def append(self, t: float, state: Field6):
        if self.times:
            gap = t - self.times[-1]
            if abs(gap - self.dt) > 1e-9 * max(1.0, self.dt):
                raise UsageError(
                    f"history spacing {gap} does not match dt {self.dt}")
        self.times.append(float(t))
        self.states.append(state)

    def __len__(self):
        return len(self.times)


def _apply_matrix(g: np.ndarray, state: Field6) -> np.ndarray:
    return np.einsum("ab,b...->a...", g, state.data)


def convolve_history(h: History, kernel: KernelSpec, t: float) -> Field6:
    """Trapezoidal quadrature of integral_0^t G(t - s) u(s) ds."""
    if not h.times:
        raise UsageError("convolve_history needs at least the t = 0 state")
    if abs(h.times[-1] - t) > 1e-9 * max(1.0, abs(t)):
        raise UsageError(f"t = {t} must be the latest history time {h.times[-1]}")
    ref = h.states[-1]
    if kernel.is_zero or len(h) == 1:
        return ref.with_data(np.zeros_like(ref.data))
    acc = np.zeros_like(ref.data)
    last = len(h) - 1
    for k, (tk, state) in enumerate(zip(h.times, h.states)):
        weight = 0.5 if k in (0, last) else 1.0
        acc += weight * _apply_matrix(kernel.matrix_at(t - tk), state)
    return ref.with_data(h.dt * acc)


def convolution_derivative(h: History, kernel: KernelSpec, t: float) -> Field6:
    """G(0) u(t) + trapezoid of G'(t - s) u(s)."""
    if not h.times:
        raise UsageError("convolution_derivative needs at least the t = 0 state")
    ref = h.states[-1]
    out = _apply_matrix(kernel.matrix_at(0.0), ref)
    if kernel.form == TABLE:
        raise UsageError("table kernels do not support the analytic derivative")
    if not kernel.is_zero and len(h) > 1:
        acc = np.zeros_like(ref.data)
        last = len(h) - 1
        for k, (tk, state) in enumerate(zip(h.times, h.states)):
            weight = 0.5 if k in (0, last) else 1.0
            acc += weight * _apply_matrix(kernel.derivative_at(t - tk), state)
        out = out + h.dt * acc
    return ref.with_data(out)


def contraction_step_length(g_l1: float, lipschitz_noise: float, horizon: float,
                            burkholder: float = 2.0) -> float:
    """Largest dyadic fraction T0 = T/2^m with kappa(T0) <= 1/2.

    kappa(T0) = (T0 g_l1^2 / 2) exp(2 (1 + 2 Ctil^2 + C^2) T0) with
    C the noise Lipschitz constant and Ctil = burkholder * C the
    Burkholder-side constant (so the noise contribution drops when C = 0).
    Uses the squared ||G||_{L^1} form.
    """
    if g_l1 < 0 or lipschitz_noise < 0 or burkholder < 0:
        raise ConfigurationError("contraction constants must be nonnegative")
    if not horizon > 0:
        raise ConfigurationError(f"horizon must be positive, got {horizon}")
    if g_l1 == 0.0:
        return horizon
    c = lipschitz_noise
    ctil = burkholder * lipschitz_noise
    rate = 2.0 * (1.0 + 2.0 * ctil**2 + c**2)

    def kappa(t0):
        return 0.5 * t0 * g_l1**2 * np.exp(rate * t0)

    t0 = horizon
    for _ in range(200):
        if kappa(t0) <= 0.5:
            return t0
        t0 *= 0.5
    raise NumericalError("contraction window underflow; kernel norm too large")


def picard_solve(window, initial_guess, step, tol: float, max_iter: int = 50,
                 distance=None):
    """Iterate v -> step(v) to a fixed point on one window.

    ``step`` solves the memory-frozen equation given the input trajectory
    (its G * v is computed from v).  ``distance`` measures the sup-in-time
    L^2 gap between successive iterates; geometric decay is expected on
    admissible windows.  Returns (fixed point, iterations, gap history).
    """
    if distance is None:
        from .stepping import trajectory_sup_distance

        distance = trajectory_sup_distance
    t_a, t_b = window
    if not t_b > t_a:
        raise UsageError(f"empty window {window}")
    v = initial_guess
    gaps = []
    for iteration in range(1, max_iter + 1):
        w = step(v)
        gap = distance(w, v)
        gaps.append(gap)
        v = w
        if gap <= tol:
            return v, iteration, gaps
    raise NumericalError(
        f"picard iteration did not contract on window {window}: gaps {gaps[-3:]}"
        " (window too long or constants wrong)")
