"""Fourier multiplier operators on a periodic truncation of the real line.

The line is replaced by the torus [-R, R) sampled at N equispaced points.
Transforms use the angular convention

    f_hat(kappa) = sum_j f(x_j) exp(-i kappa x_j) dx,   kappa_m = pi m / R,

so that kappa = 2 pi xi in terms of the ordinary frequency xi.  With this
convention the Airy group exp(-t d_x^3) is the multiplier exp(i kappa^3 t).

Every operator works on numpy arrays and on torch tensors (last axis is
space), so the same code feeds both the reporting path and the training loss.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np

try:  # torch is only needed on the differentiable path
    import torch
except ImportError:  # pragma: no cover
    torch = None

_TWO_PI_LD = 8 * np.arctan(np.longdouble(1))


class ZeroModeWarning(UserWarning):
    """Raised when an operator discards a non-negligible mean."""


@dataclass(frozen=True)
class SpectralGrid:
    half_width: float
    n_points: int

    def __post_init__(self):
        if self.n_points < 2 or self.n_points % 2:
            raise ValueError(f"n_points must be even and >= 2, got {self.n_points}")
        if not self.half_width > 0:
            raise ValueError(f"half_width must be positive, got {self.half_width}")

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / self.n_points

    @property
    def length(self) -> float:
        return 2.0 * self.half_width

    @cached_property
    def points(self) -> np.ndarray:
        return -self.half_width + self.spacing * np.arange(self.n_points)

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """Angular wavenumbers in FFT order; index N/2 is the Nyquist mode."""
        return 2.0 * np.pi * np.fft.fftfreq(self.n_points, d=self.spacing)

    @property
    def nyquist_index(self) -> int:
        return self.n_points // 2


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time grid on [-T, T], both endpoints included."""

    half_width: float
    n_points: int

    def __post_init__(self):
        if self.n_points < 1:
            raise ValueError("n_points must be >= 1")
        if self.half_width < 0:
            raise ValueError("half_width must be non-negative")

    @property
    def length(self) -> float:
        return 2.0 * self.half_width

    @cached_property
    def points(self) -> np.ndarray:
        if self.n_points == 1:
            return np.zeros(1)
        return np.linspace(-self.half_width, self.half_width, self.n_points)


@dataclass
class Field:
    grid: SpectralGrid
    values: np.ndarray
    real: bool = True

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.complex128)
        if self.values.shape != (self.grid.n_points,):
            raise ValueError(
                f"field has {self.values.shape} samples, grid expects ({self.grid.n_points},)"
            )

    @classmethod
    def from_function(cls, grid: SpectralGrid, fn, real: bool = True) -> "Field":
        return cls(grid, fn(grid.points), real=real)

    def with_values(self, values) -> "Field":
        return Field(self.grid, values, self.real)

    def imag_ratio(self) -> float:
        re = np.max(np.abs(self.values.real))
        im = np.max(np.abs(self.values.imag))
        return 0.0 if im == 0 else im / max(re, np.finfo(float).tiny)


# -- symbols ------------------------------------------------------------------


def fractional_symbol(grid: SpectralGrid, s: float) -> np.ndarray:
    """|kappa|^s; the zero mode is dropped for s < 0, kept (=1) for s == 0."""
    kappa = np.abs(grid.wavenumbers)
    if s == 0:
        return np.ones(grid.n_points)
    sym = np.zeros(grid.n_points)
    nz = kappa > 0
    sym[nz] = kappa[nz] ** s
    return sym


def derivative_symbol(grid: SpectralGrid, order: int) -> np.ndarray:
    """(i kappa)^order with the Nyquist mode zeroed for odd orders."""
    if order not in (1, 2, 3):
        raise ValueError(f"derivative order must be 1, 2 or 3, got {order}")
    sym = (1j * grid.wavenumbers) ** order
    if order % 2:
        sym[grid.nyquist_index] = 0.0
    return sym


def inverse_derivative_symbol(grid: SpectralGrid) -> np.ndarray:
    return fractional_symbol(grid, -1.0)


def airy_symbol(grid: SpectralGrid, t) -> np.ndarray:
    """exp(i kappa^3 t); shape (N,) for scalar t, (M, N) for a vector of times.

    The Nyquist mode is its own conjugate partner, so a non-real phase there
    would break realness; it is held fixed (multiplier 1), which keeps the
    operator unitary and a group.
    """
    t_arr = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(t_arr)):
        raise ValueError("airy_symbol: non-finite time")
    # kappa^3 t reaches 1e7 rad on fine grids; form and reduce the phase in
    # extended precision (where the platform has it) before rounding to f64
    kappa3 = grid.wavenumbers.astype(np.longdouble) ** 3
    phase = np.remainder(np.multiply.outer(t_arr.astype(np.longdouble), kappa3), _TWO_PI_LD)
    sym = np.exp(1j * phase.astype(np.float64))
    sym[..., grid.nyquist_index] = 1.0
    return sym


# -- generic application -------------------------------------------------------


def _is_tensor(x) -> bool:
    return torch is not None and isinstance(x, torch.Tensor)


def apply_symbol(values, symbol, real: bool = True):
    """Multiply the spatial spectrum (last axis) of ``values`` by ``symbol``.

    ``real=True`` returns the real part, which is exact up to rounding for
    conjugate-symmetric symbols acting on real data.
    """
    if _is_tensor(values):
        if not _is_tensor(symbol):
            symbol = torch.as_tensor(symbol, dtype=torch.complex128, device=values.device)
        out = torch.fft.ifft(torch.fft.fft(values, dim=-1) * symbol, dim=-1)
        return out.real if real else out
    out = np.fft.ifft(np.fft.fft(values, axis=-1) * symbol, axis=-1)
    return out.real if real else out


def _check_field(f: Field, grid: SpectralGrid | None):
    if grid is not None and f.grid != grid:
        raise ValueError(f"grid mismatch: field lives on {f.grid}, expected {grid}")
    if not np.all(np.isfinite(f.values)):
        raise ValueError("field contains non-finite values")


def _apply_to_field(f: Field, symbol) -> Field:
    out = apply_symbol(f.values, symbol, real=False)
    return Field(f.grid, out, f.real)


# -- public operators on fields -----------------------------------------------


def fractional_derivative(f: Field, s: float, grid: SpectralGrid | None = None) -> Field:
    """Riesz fractional derivative D^s, the multiplier |kappa|^s.

    For s < 0 the zero mode is projected out.
    """
    _check_field(f, grid)
    if s == 0:
        return _apply_to_field(f, np.ones(f.grid.n_points))
    if s < 0:
        _warn_mean(f.values, "fractional_derivative")
    return _apply_to_field(f, fractional_symbol(f.grid, s))


def spatial_derivative(f: Field, order: int = 1, grid: SpectralGrid | None = None) -> Field:
    _check_field(f, grid)
    return _apply_to_field(f, derivative_symbol(f.grid, order))


def inverse_derivative(f: Field, grid: SpectralGrid | None = None) -> Field:
    """D_x^{-1} = |kappa|^{-1}; exact only on mean-free input."""
    _check_field(f, grid)
    _warn_mean(f.values, "inverse_derivative")
    return _apply_to_field(f, inverse_derivative_symbol(f.grid))


def airy_group(f: Field, t: float, grid: SpectralGrid | None = None) -> Field:
    """Solution at time t of v_t + v_xxx = 0 with v(0) = f."""
    if not math.isfinite(t):
        raise ValueError("airy_group: non-finite time")
    _check_field(f, grid)
    return _apply_to_field(f, airy_symbol(f.grid, t))


def _warn_mean(values, name: str):
    peak = np.max(np.abs(values)) if np.size(values) else 0.0
    mean = abs(np.mean(values))
    if mean > 1e-6 * peak:
        warnings.warn(
            f"{name}: discarding zero mode with |mean| = {mean:.3e} "
            f"(sup norm {peak:.3e})",
            ZeroModeWarning,
            stacklevel=3,
        )


def fractional_derivative_of_ramp(ramp_derivative, grid: SpectralGrid, s: float):
    """D^s of a bounded ramp r (r -> const at +-inf) from its localized derivative r'.

    Uses |kappa|^s r_hat = -i sgn(kappa) |kappa|^(s-1) (r')_hat, which only ever
    transforms the periodic-friendly r'.  The zero mode is dropped.
    """
    kappa = grid.wavenumbers
    sym = np.zeros(grid.n_points, dtype=np.complex128)
    nz = kappa != 0
    sym[nz] = -1j * np.sign(kappa[nz]) * np.abs(kappa[nz]) ** (s - 1.0)
    sym[grid.nyquist_index] = 0.0
    return apply_symbol(ramp_derivative, sym, real=True)
