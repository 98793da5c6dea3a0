"""Discrete mixed Lebesgue functionals on space-time sample matrices.

Samples are arranged as ``g[l, j] = g(t_l, x_j)`` with shape (M, N): time runs
along axis 0 and space along axis 1.

* ``j_pq(g, p, q)`` -- inner reduction over time with exponent q, outer over
  space with exponent p; approximates ||g||_{L^p_x L^q_t}.
* ``k_qp(g, q, p)`` -- inner over space with exponent q, outer over time with
  exponent p; approximates ||g||_{L^p_t L^q_x}.

Finite exponents use normalized means (1/N, 1/M), i.e. Riemann sums with
unit weights.  ``INF`` replaces the mean by a max.  Weights multiply |g|^q
inside the inner mean, or |g| inside the inner max.

numpy inputs return floats; torch inputs return differentiable 0-d tensors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

from .autodiff import DTYPE, NonFiniteError, first_max, safe_root
from .spectral import SpectralGrid, TimeGrid

INF = math.inf


def as_exponent(value) -> float:
    if isinstance(value, str):
        if value.strip().lower() in ("inf", "infinity", "∞"):
            return INF
        value = float(value)
    value = float(value)
    if math.isnan(value) or value < 1:
        raise ValueError(f"exponent must be >= 1 or INF, got {value}")
    return value


def _prepare(g, weights):
    is_tensor = isinstance(g, torch.Tensor)
    gt = g if is_tensor else torch.as_tensor(np.asarray(g, dtype=np.float64), dtype=DTYPE)
    if not bool(torch.isfinite(gt).all()):
        raise NonFiniteError("samples contain non-finite values")
    wt = None
    if weights is not None:
        wt = weights if isinstance(weights, torch.Tensor) else torch.as_tensor(
            np.asarray(weights, dtype=np.float64), dtype=DTYPE)
        if wt.shape != gt.shape:
            raise ValueError(f"weight shape {tuple(wt.shape)} != sample shape {tuple(gt.shape)}")
        if bool((wt < 0).any()) or not bool(torch.isfinite(wt).all()):
            raise ValueError("weights must be finite and non-negative")
    return gt, wt, is_tensor


def _power_mean(a: torch.Tensor, q: float, dim: int, w: torch.Tensor | None) -> torch.Tensor:
    """(mean(w a^q))^(1/q) along ``dim`` for a >= 0, overflow-safe for large q.

    The slice maximum is factored out (and held constant for differentiation;
    the expression is 1-homogeneous so the gradient is unchanged).
    """
    if q == 1:
        return (a if w is None else w * a).mean(dim)
    scale = a.detach().amax(dim=dim, keepdim=True)
    scale = torch.where(scale > 0, scale, torch.ones_like(scale))
    r = (a / scale).pow(q)
    if w is not None:
        r = w * r
    return scale.squeeze(dim) * safe_root(r.mean(dim), q)


def _reduce(a, exponent, dim, w=None):
    if exponent == INF:
        return first_max(a if w is None else w * a, dim)
    return _power_mean(a, exponent, dim, w)


def _mixed(g, inner_dim, inner_exp, outer_exp, weights):
    inner_exp = as_exponent(inner_exp)
    outer_exp = as_exponent(outer_exp)
    gt, wt, is_tensor = _prepare(g, weights)
    if gt.ndim != 2:
        raise ValueError(f"sample matrix must be 2-D (M, N), got shape {tuple(gt.shape)}")
    inner = _reduce(gt.abs(), inner_exp, inner_dim, wt)
    out = _reduce(inner, outer_exp, 0)
    return out if is_tensor else float(out)


def j_pq(samples, p, q, weights=None):
    """Outer exponent p over space, inner exponent q over time."""
    return _mixed(samples, 0, q, p, weights)


def k_qp(samples, q, p, weights=None):
    """Inner exponent q over space, outer exponent p over time."""
    return _mixed(samples, 1, q, p, weights)


def j_l2(values, weights=None):
    """((1/N) sum_j w_j |f_j|^2)^(1/2)."""
    gt, wt, is_tensor = _prepare(values, weights)
    if gt.ndim != 1:
        raise ValueError("j_l2 expects a 1-D sample vector")
    r = gt.abs().pow(2)
    if wt is not None:
        r = wt * r
    out = safe_root(r.mean(), 2)
    return out if is_tensor else float(out)


def calibration_factor(kind: str, first, second, space_length: float, time_length: float) -> float:
    """Factor turning a normalized functional into its continuum counterpart.

    ``kind`` is "J" (first=p over space, second=q over time) or "K"
    (first=q over space, second=p over time).  Means become integrals, so a
    finite exponent r over an axis of length L contributes L^(1/r).
    """
    if kind not in ("J", "K"):
        raise ValueError(f"unknown functional kind {kind!r}")
    # both kinds list the space exponent first
    space_exp, time_exp = as_exponent(first), as_exponent(second)
    f = 1.0
    if space_exp != INF:
        f *= space_length ** (1.0 / space_exp)
    if time_exp != INF:
        f *= time_length ** (1.0 / time_exp)
    return f


@dataclass
class SampleMatrix:
    """Real samples g(t_l, x_j) on a time grid times a spectral grid."""

    values: np.ndarray
    time_grid: TimeGrid
    space_grid: SpectralGrid

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        expected = (self.time_grid.n_points, self.space_grid.n_points)
        if self.values.shape != expected:
            raise ValueError(f"sample shape {self.values.shape} != grid shape {expected}")
        if not np.all(np.isfinite(self.values)):
            raise NonFiniteError("samples contain non-finite values")
