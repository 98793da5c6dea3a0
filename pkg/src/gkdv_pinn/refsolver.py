"""Pseudo-spectral reference integrator for gKdV (integrating-factor RK4).

In Fourier space u_hat' = i kappa^3 u_hat + N_hat(u) with
N(u) = mu (u^k)_x.  The stiff dispersive part is integrated exactly with the
same Airy multiplier used everywhere else; the nonlinearity is advanced by
classical RK4 in the interaction picture (Lawson's method) and de-aliased
with the 2/3 rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .physics import ModelSpec
from .spectral import Field, SpectralGrid, airy_symbol


class BlowUpError(FloatingPointError):
    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


@dataclass(frozen=True)
class IntegratorConfig:
    """``dt * max|u|^(k-1) <= 0.5`` is the advisory bound for the nonlinear part;
    the dispersive part carries no step restriction."""

    dt: float
    steps: int
    model: ModelSpec
    grid: SpectralGrid
    scheme: str = "if-rk4"
    nonlinear: bool = True

    def __post_init__(self):
        if not self.dt > 0 or not math.isfinite(self.dt):
            raise ValueError(f"dt must be positive and finite, got {self.dt}")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.scheme != "if-rk4":
            raise ValueError(f"unsupported scheme {self.scheme!r}")

    def nonlinear_bound(self, u_max: float) -> float:
        return self.dt * u_max ** (self.model.k - 1)


@dataclass
class Trajectory:
    times: np.ndarray
    values: np.ndarray  # (len(times), N) real
    grid: SpectralGrid
    model: ModelSpec

    def field(self, i: int) -> Field:
        return Field(self.grid, self.values[i])


def dealias_mask(grid: SpectralGrid) -> np.ndarray:
    kappa = np.abs(grid.wavenumbers)
    mask = kappa <= (2.0 / 3.0) * kappa.max()
    mask[grid.nyquist_index] = False
    return mask.astype(float)


def evolve(u0: Field, config: IntegratorConfig, save_times=None) -> Trajectory:
    """Integrate from t = 0 for ``steps`` steps of ``dt``.

    ``save_times`` (default: only the final time) are snapped to the nearest
    step; every requested time must lie in [0, steps * dt].
    """
    grid, model, dt = config.grid, config.model, config.dt
    if u0.grid != grid:
        raise ValueError("initial field lives on a different grid")
    if not np.all(np.isfinite(u0.values)):
        raise ValueError("initial field is not finite")
    t_end = config.steps * dt
    save_times = np.array([t_end] if save_times is None else save_times, dtype=float)
    if np.any(save_times < -1e-12) or np.any(save_times > t_end * (1 + 1e-12) + 1e-12):
        raise ValueError("save times must lie within the integration window")
    save_steps = np.rint(save_times / dt).astype(int)

    kappa = grid.wavenumbers
    mask = dealias_mask(grid)
    coef = model.mu
    dmul = 1j * kappa * mask
    dmul[grid.nyquist_index] = 0.0
    k = model.k
    use_nl = config.nonlinear and model.mu != 0

    def N(v_hat):
        if not use_nl:
            return np.zeros_like(v_hat)
        u = np.fft.ifft(v_hat * mask).real
        with np.errstate(over="ignore", invalid="ignore"):
            # blow-up is reported by the finiteness check below
            return coef * dmul * np.fft.fft(u**k)

    E_half = airy_symbol(grid, dt / 2)
    E_full = airy_symbol(grid, dt)
    v = np.fft.fft(np.real(u0.values))
    out = np.empty((len(save_steps), grid.n_points))
    order = np.argsort(save_steps)
    j = 0

    def save_upto(step, v):
        nonlocal j
        while j < len(order) and save_steps[order[j]] == step:
            out[order[j]] = np.fft.ifft(v).real
            j += 1

    save_upto(0, v)
    for n in range(1, config.steps + 1):
        a = N(v)
        u1 = E_half * (v + 0.5 * dt * a)
        b = N(u1)
        u2 = E_half * v + 0.5 * dt * b
        c = N(u2)
        u3 = E_full * v + dt * E_half * c
        d = N(u3)
        v = E_full * v + dt / 6.0 * (E_full * a + 2.0 * E_half * (b + c) + d)
        if not np.all(np.isfinite(v)):
            done = order[:j]
            partial = Trajectory(save_times[done], out[done], grid, model)
            raise BlowUpError(f"non-finite state at step {n} (t = {n * dt:g})", partial)
        save_upto(n, v)
    return Trajectory(save_steps * dt, out, grid, model)
