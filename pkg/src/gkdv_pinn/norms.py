"""Approximate KPV norms Y_{k,s} and the error metrics built on them."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import quadrature as quad
from .quadrature import INF
from .spectral import (
    SpectralGrid,
    TimeGrid,
    apply_symbol,
    derivative_symbol,
    fractional_derivative_of_ramp,
    fractional_symbol,
)

# Minimal regularity of the local theory, strict for k = 2.
CRITICAL_REGULARITY = {2: 0.75, 3: 0.25, 4: 1.0 / 12.0, 5: 0.0}

# (name, kind, first exponent, second exponent, sampled quantity), in printed
# order.  For "J" the exponents are (p over space, q over time); for "K" they
# are (q over space, p over time).
Y_TERMS = {
    2: [
        ("K_inf,4[u_x]", "K", INF, 4, "u_x"),
        ("J_inf,2[Ds u_x]", "J", INF, 2, "ds_u_x"),
        ("J_2,inf[u]", "J", 2, INF, "u"),
        ("K_2,inf[u]", "K", 2, INF, "u"),
        ("K_2,inf[Ds u]", "K", 2, INF, "ds_u"),
    ],
    3: [
        ("J_inf,2[u_x]", "J", INF, 2, "u_x"),
        ("J_4,inf[u]", "J", 4, INF, "u"),
        ("J_inf,2[Ds u_x]", "J", INF, 2, "ds_u_x"),
        ("J_5,10[Ds u]", "J", 5, 10, "ds_u"),
        ("J_20,5/2[u_x]", "J", 20, 2.5, "u_x"),
    ],
    4: [
        ("K_inf,2[u_x]", "K", INF, 2, "u_x"),
        ("K_inf,2[Ds u_x]", "K", INF, 2, "ds_u_x"),
        ("J_42/13,21/4[u]", "J", 42 / 13, 21 / 4, "u"),
        ("J_60/13,15[u]", "J", 60 / 13, 15, "u"),
        ("J_10/3,30/7[u]", "J", 10 / 3, 30 / 7, "u"),
        ("J_inf,2[u_x]", "J", INF, 2, "u_x"),
        ("J_inf,2[Ds u_x]", "J", INF, 2, "ds_u_x"),
        ("J_10/3,21/4[Ds u]", "J", 10 / 3, 21 / 4, "ds_u"),
    ],
    5: [
        ("J_5,10[u]", "J", 5, 10, "u"),
    ],
}


def term_count(k: int) -> int:
    _check_k(k)
    return len(Y_TERMS[k])


def _check_k(k):
    if k not in Y_TERMS:
        raise ValueError(f"unsupported nonlinearity k={k}; expected 2, 3, 4 or 5")


def check_regularity(k: int, s: float) -> None:
    _check_k(k)
    sk = CRITICAL_REGULARITY[k]
    if k == 2 and not s > sk:
        raise ValueError(f"k=2 requires s > {sk}, got s={s}")
    if k != 2 and s < sk:
        raise ValueError(f"k={k} requires s >= {sk:.6g}, got s={s}")


@dataclass
class FieldSampler:
    """The four sampled matrices every Y_{k,s} term is built from, shape (M, N)."""

    u: object
    u_x: object
    ds_u: object
    ds_u_x: object
    s: float
    time_grid: TimeGrid
    space_grid: SpectralGrid

    def __post_init__(self):
        shape = (self.time_grid.n_points, self.space_grid.n_points)
        for name in ("u", "u_x", "ds_u", "ds_u_x"):
            if tuple(getattr(self, name).shape) != shape:
                raise ValueError(f"{name} has shape {tuple(getattr(self, name).shape)}, expected {shape}")

    @classmethod
    def from_values(cls, u, s, time_grid, space_grid, far_field=None) -> "FieldSampler":
        """Spectral derivatives of ``u`` along space, one time slice per row.

        ``far_field`` = (r, r_x, r_xx) handles a non-decaying ramp: the spectral
        operators act on ``u - r`` only and the ramp's contributions are added
        back analytically.
        """
        ux_sym = derivative_symbol(space_grid, 1)
        ds_sym = fractional_symbol(space_grid, s)
        if far_field is None:
            return cls(
                u=u,
                u_x=apply_symbol(u, ux_sym),
                ds_u=apply_symbol(u, ds_sym),
                ds_u_x=apply_symbol(u, ds_sym * ux_sym),
                s=s, time_grid=time_grid, space_grid=space_grid,
            )
        r, r_x, r_xx = (np.asarray(a, dtype=float) for a in far_field)
        v = u - r
        if s == 0:
            ds_r, ds_rx = r, r_x
        else:
            ds_r = fractional_derivative_of_ramp(r_x, space_grid, s)
            ds_rx = apply_symbol(r_xx, ds_sym)
        return cls(
            u=u,
            u_x=apply_symbol(v, ux_sym) + r_x,
            ds_u=apply_symbol(v, ds_sym) + ds_r,
            ds_u_x=apply_symbol(v, ds_sym * ux_sym) + ds_rx,
            s=s, time_grid=time_grid, space_grid=space_grid,
        )

    def _check_compatible(self, other: "FieldSampler"):
        if (self.time_grid, self.space_grid) != (other.time_grid, other.space_grid):
            raise ValueError("samplers live on different grids")
        if self.s != other.s:
            raise ValueError(f"samplers carry different regularity ({self.s} vs {other.s})")

    def __sub__(self, other: "FieldSampler") -> "FieldSampler":
        self._check_compatible(other)
        return FieldSampler(
            self.u - other.u, self.u_x - other.u_x, self.ds_u - other.ds_u,
            self.ds_u_x - other.ds_u_x, self.s, self.time_grid, self.space_grid,
        )

    def scaled(self, factor: float) -> "FieldSampler":
        return FieldSampler(
            factor * self.u, factor * self.u_x, factor * self.ds_u, factor * self.ds_u_x,
            self.s, self.time_grid, self.space_grid,
        )

    @classmethod
    def zeros_like(cls, other: "FieldSampler") -> "FieldSampler":
        return other.scaled(0.0)


@dataclass
class NormReport:
    terms: list = field(default_factory=list)  # [(name, value)]
    total: float = 0.0

    def as_dict(self) -> dict:
        return {
            "terms": [{"name": n, "value": float(v)} for n, v in self.terms],
            "total": float(self.total),
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict())

    @classmethod
    def from_json(cls, text: str) -> "NormReport":
        d = json.loads(text)
        return cls([(t["name"], t["value"]) for t in d["terms"]], d["total"])


def _term_value(kind, first, second, g, weights):
    if kind == "J":
        return quad.j_pq(g, first, second, weights)
    return quad.k_qp(g, first, second, weights)


def y_terms(k, fs: FieldSampler, weights=None, calibrated=False):
    """[(name, value)] of Y_{k,s,N,M}; values are tensors for tensor samplers."""
    _check_k(k)
    out = []
    for name, kind, first, second, key in Y_TERMS[k]:
        value = _term_value(kind, first, second, getattr(fs, key), weights)
        if calibrated:
            value = value * quad.calibration_factor(
                kind, first, second, fs.space_grid.length, fs.time_grid.length)
        out.append((name, value))
    return out


def y_functional(k, fs: FieldSampler, weights=None, calibrated=False):
    """Total of Y_{k,s,N,M}; differentiable when the sampler holds tensors."""
    terms = [v for _, v in y_terms(k, fs, weights, calibrated)]
    total = terms[0]
    for v in terms[1:]:
        total = total + v
    return total


def y_norm(k, s, fs: FieldSampler, weights=None, calibrated=False, validate=True) -> NormReport:
    if validate:
        check_regularity(k, s)
    if fs.s != s:
        raise ValueError(f"sampler built for s={fs.s}, asked for s={s}")
    terms = [(n, float(v)) for n, v in y_terms(k, fs, weights, calibrated)]
    return NormReport(terms, float(sum(v for _, v in terms)))


def error_y(k, s, u_exact: FieldSampler, u_pred: FieldSampler, calibrated=False) -> float:
    return y_norm(k, s, u_exact - u_pred, calibrated=calibrated).total


def linf_hs(fs: FieldSampler, calibrated=False):
    """J_{inf,2}[u] + J_{inf,2}[D^s u]."""
    val = quad.j_pq(fs.u, INF, 2) + quad.j_pq(fs.ds_u, INF, 2)
    if calibrated:
        val = val * quad.calibration_factor("J", INF, 2, fs.space_grid.length, fs.time_grid.length)
    return val


def error_linf_hs(s, u_exact: FieldSampler, u_pred: FieldSampler, calibrated=False) -> float:
    if u_exact.s != s:
        raise ValueError(f"sampler built for s={u_exact.s}, asked for s={s}")
    return float(linf_hs(u_exact - u_pred, calibrated))


def error_rel(u_exact, u_pred) -> float:
    """J_{2,2}[u - u_pred] / J_{2,2}[u] on raw (M, N) samples or samplers."""
    ue = u_exact.u if isinstance(u_exact, FieldSampler) else np.asarray(u_exact)
    up = u_pred.u if isinstance(u_pred, FieldSampler) else np.asarray(u_pred)
    if ue.shape != up.shape:
        raise ValueError(f"shape mismatch {ue.shape} vs {up.shape}")
    denom = quad.j_pq(ue, 2, 2)
    if denom == 0:
        raise ValueError("exact field is identically zero; relative error undefined")
    return quad.j_pq(ue - up, 2, 2) / denom


@dataclass
class Constants:
    A: float
    A_tilde: float
    L: float


def initial_mismatch(s, u0, u_pred_0, grid: SpectralGrid, calibrated=False) -> float:
    """j_l2(u0 - u_pred(0)) + j_l2(D^s (u0 - u_pred(0)))."""
    d = np.asarray(u0, dtype=float) - np.asarray(u_pred_0, dtype=float)
    val = quad.j_l2(d) + quad.j_l2(apply_symbol(d, fractional_symbol(grid, s)))
    if calibrated:
        val *= grid.length ** 0.5
    return val


def estimate_constants(s, u0, u_pred: FieldSampler, k, calibrated=False,
                       u_pred_0=None, validate=True) -> Constants:
    """A, A_tilde, L for a prediction sampled over a time grid containing t = 0.

    ``u0`` is the initial datum on the sampler's space grid (array or Field).
    ``u_pred_0`` overrides the t = 0 row of the sampler.  ``calibrated``
    rescales A and A_tilde to continuum norms; L is always the raw functional.
    """
    u0 = getattr(u0, "values", u0)
    u0 = np.real(np.asarray(u0))
    if u_pred_0 is None:
        times = u_pred.time_grid.points
        hits = np.flatnonzero(np.abs(times) <= 1e-12 * max(1.0, u_pred.time_grid.half_width))
        if hits.size == 0:
            raise ValueError("prediction sampler has no t = 0 slice")
        u_pred_0 = np.asarray(u_pred.u)[hits[0]]
    A = float(linf_hs(u_pred, calibrated))
    A_tilde = initial_mismatch(s, u0, u_pred_0, u_pred.space_grid, calibrated)
    L = y_norm(k, s, u_pred, validate=validate).total
    return Constants(A, A_tilde, L)
