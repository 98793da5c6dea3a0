"""Fully connected PINN with a trainable Gabor-wavelet activation per hidden layer.

Derivatives are obtained by forward propagation of truncated Taylor jets:
every hidden quantity carries (value, d_t, d_x, d_xx, d_xxx).  Linear layers
act on each component separately and the activation is composed with the
degree-3 Faa di Bruno formula.  The same code runs on numpy arrays and on
torch tensors, so training differentiates exactly what evaluation computes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

try:
    import torch
except ImportError:  # pragma: no cover
    torch = None


class Jet(NamedTuple):
    u: object
    u_t: object
    u_x: object
    u_xx: object
    u_xxx: object


@dataclass(frozen=True)
class Architecture:
    """(t, x) -> R network with ``hidden_layers`` layers of ``width`` neurons.

    ``input_shift``/``input_scale`` apply (t, x) -> ((t - t0) * a, (x - x0) * b)
    before the first layer; the default is the identity.
    """

    hidden_layers: int
    width: int
    input_shift: tuple = (0.0, 0.0)
    input_scale: tuple = (1.0, 1.0)

    def __post_init__(self):
        if self.hidden_layers < 1 or self.width < 1:
            raise ValueError(f"need at least one hidden layer and one neuron, got H={self.hidden_layers}, n={self.width}")
        object.__setattr__(self, "input_shift", tuple(float(v) for v in self.input_shift))
        object.__setattr__(self, "input_scale", tuple(float(v) for v in self.input_scale))
        if len(self.input_shift) != 2 or len(self.input_scale) != 2:
            raise ValueError("input scaling must have two components (t, x)")
        if any(v == 0 or not math.isfinite(v) for v in self.input_scale):
            raise ValueError("input scale must be finite and non-zero")

    @property
    def layer_shapes(self) -> list[tuple[int, int]]:
        """(fan_out, fan_in) of every dense layer."""
        shapes = [(self.width, 2)]
        shapes += [(self.width, self.width)] * (self.hidden_layers - 1)
        shapes.append((1, self.width))
        return shapes

    @property
    def n_params(self) -> int:
        return sum(o * i + o for o, i in self.layer_shapes) + 3 * self.hidden_layers

    def to_dict(self) -> dict:
        return {
            "hidden_layers": self.hidden_layers,
            "width": self.width,
            "input_shift": list(self.input_shift),
            "input_scale": list(self.input_scale),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Architecture":
        return cls(int(d["hidden_layers"]), int(d["width"]),
                   tuple(d.get("input_shift", (0.0, 0.0))), tuple(d.get("input_scale", (1.0, 1.0))))


@dataclass
class NetworkParams:
    """Dense weights/biases plus one (w0, b0, s0) row per hidden layer.

    Entries may be numpy arrays or torch tensors (views into a flat vector).
    """

    arch: Architecture
    weights: list
    biases: list
    wavelets: object  # (H, 3)

    def flatten(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts += [np.asarray(w, dtype=np.float64).ravel(), np.asarray(b, dtype=np.float64).ravel()]
        parts.append(np.asarray(self.wavelets, dtype=np.float64).ravel())
        return np.concatenate(parts)

    @classmethod
    def unflatten(cls, arch: Architecture, theta) -> "NetworkParams":
        """Inverse of ``flatten``; works on numpy arrays and torch tensors."""
        if tuple(theta.shape) != (arch.n_params,):
            raise ValueError(f"expected {arch.n_params} parameters, got shape {tuple(theta.shape)}")
        weights, biases, pos = [], [], 0
        for o, i in arch.layer_shapes:
            weights.append(theta[pos:pos + o * i].reshape(o, i))
            pos += o * i
            biases.append(theta[pos:pos + o])
            pos += o
        wavelets = theta[pos:].reshape(arch.hidden_layers, 3)
        return cls(arch, weights, biases, wavelets)


def init(arch: Architecture, seed: int) -> NetworkParams:
    """Glorot-uniform weights, zero biases, w0 = 1, s0 = 1/sqrt2, b0 ~ U(-pi/2, pi/2) per layer."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for o, i in arch.layer_shapes:
        bound = math.sqrt(6.0 / (i + o))
        weights.append(rng.uniform(-bound, bound, size=(o, i)))
        biases.append(np.zeros(o))
    b0 = rng.uniform(-math.pi / 2, math.pi / 2, size=arch.hidden_layers)
    wavelets = np.column_stack([np.ones(arch.hidden_layers), b0,
                                np.full(arch.hidden_layers, 1.0 / math.sqrt(2.0))])
    return NetworkParams(arch, weights, biases, wavelets)


# -- activation ----------------------------------------------------------------


def _ops(x):
    if torch is not None and isinstance(x, torch.Tensor):
        return torch
    return np


def activation_jet(x, triple, order: int = 3) -> list:
    """[sigma, sigma', ..., sigma^(order)] of sin(w0 x + b0) exp(-(s0 x)^2).

    With S = sin(w0 x + b0) g, C = cos(w0 x + b0) g, g = exp(-(s0 x)^2) and
    z = s0^2 x, every derivative is a polynomial combination of S and C:

        d1 = w C - 2z S
        d2 = (4z^2 - 2s^2 - w^2) S - 4wz C
        d3 = z (12s^2 + 6w^2 - 8z^2) S + w (12z^2 - 6s^2 - w^2) C
    """
    if not 0 <= order <= 3:
        raise ValueError(f"order must be 0..3, got {order}")
    xp = _ops(x)
    w, b, s = triple[0], triple[1], triple[2]
    phase = w * x + b
    g = xp.exp(-(s * x) ** 2)
    S = xp.sin(phase) * g
    if order == 0:
        return [S]
    C = xp.cos(phase) * g
    s2 = s * s
    z = s2 * x
    out = [S, w * C - 2.0 * z * S]
    if order == 1:
        return out
    z2 = z * z
    w2 = w * w
    out.append((4.0 * z2 - (2.0 * s2 + w2)) * S - (4.0 * w) * z * C)
    if order == 2:
        return out
    out.append(z * ((12.0 * s2 + 6.0 * w2) - 8.0 * z2) * S + w * (12.0 * z2 - (6.0 * s2 + w2)) * C)
    return out


# -- forward passes ------------------------------------------------------------


def _inputs(arch, t, x):
    if torch is not None and (isinstance(t, torch.Tensor) or isinstance(x, torch.Tensor)):
        xp = torch
        t, x = torch.broadcast_tensors(torch.as_tensor(t, dtype=torch.float64),
                                       torch.as_tensor(x, dtype=torch.float64))
    else:
        xp = np
        t, x = np.broadcast_arrays(np.asarray(t, dtype=np.float64), np.asarray(x, dtype=np.float64))
    (t0, x0), (a, b) = arch.input_shift, arch.input_scale
    return xp, t, x, (t - t0) * a, (x - x0) * b


def _propagate(params: NetworkParams, t, x, with_derivatives: bool):
    arch = params.arch
    xp, t, x, ts, xs = _inputs(arch, t, x)
    shape = t.shape
    ts, xs = ts.reshape(-1), xs.reshape(-1)
    h = xp.stack([ts, xs], -1)  # (P, 2)
    if with_derivatives:
        zero = ts * 0.0
        h_t = xp.stack([zero + arch.input_scale[0], zero], -1)
        h_x = xp.stack([zero, zero + arch.input_scale[1]], -1)
        h_xx = h_xxx = h * 0.0
    n_layers = len(params.weights)
    for layer, (W, b) in enumerate(zip(params.weights, params.biases)):
        Wt = W.T
        a = h @ Wt + b
        if with_derivatives:
            a_t, a_x, a_xx, a_xxx = h_t @ Wt, h_x @ Wt, h_xx @ Wt, h_xxx @ Wt
        if layer == n_layers - 1:
            h = a
            if with_derivatives:
                h_t, h_x, h_xx, h_xxx = a_t, a_x, a_xx, a_xxx
            break
        triple = params.wavelets[layer]
        if not with_derivatives:
            h = activation_jet(a, triple, 0)[0]
            continue
        s0, s1, s2, s3 = activation_jet(a, triple, 3)
        h = s0
        h_t = s1 * a_t
        h_x = s1 * a_x
        h_xx = s2 * a_x * a_x + s1 * a_xx
        h_xxx = s3 * a_x * a_x * a_x + 3.0 * s2 * a_x * a_xx + s1 * a_xxx
    if not with_derivatives:
        return h[:, 0].reshape(shape)
    return Jet(*(v[:, 0].reshape(shape) for v in (h, h_t, h_x, h_xx, h_xxx)))


def forward(params: NetworkParams, t, x):
    """u_theta(t, x); scalars or broadcastable arrays/tensors."""
    return _propagate(params, t, x, with_derivatives=False)


def forward_jet(params: NetworkParams, t, x) -> Jet:
    """Exact (u, u_t, u_x, u_xx, u_xxx) at (t, x)."""
    return _propagate(params, t, x, with_derivatives=True)


def forward_grid(params: NetworkParams, time_grid, space_grid, chunk: int | None = None) -> Jet:
    """Jets on the tensor grid, each component of shape (M, N).

    ``chunk`` bounds the number of time rows evaluated at once (numpy only).
    """
    t = time_grid.points[:, None]
    x = space_grid.points[None, :]
    is_tensor = torch is not None and isinstance(params.wavelets, torch.Tensor)
    if is_tensor:
        dtype = params.wavelets.dtype
        return forward_jet(params, torch.as_tensor(t, dtype=dtype), torch.as_tensor(x, dtype=dtype))
    if chunk is None or chunk >= len(t):
        return forward_jet(params, t, x)
    parts = [forward_jet(params, t[i:i + chunk], x) for i in range(0, len(t), chunk)]
    return Jet(*(np.concatenate([getattr(p, name) for p in parts], axis=0) for name in Jet._fields))
