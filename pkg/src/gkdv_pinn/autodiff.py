"""Reverse-mode gradients of scalar losses with respect to a flat parameter vector.

The tape is torch's autograd graph, rebuilt on every call.  This module pins
down the adjoint conventions the optimizer relies on:

* max-type reductions send the whole adjoint to the first attained maximum;
* p-th roots send a zero adjoint when their argument vanishes (zero
  subgradient instead of inf * 0 = nan);
* linear Fourier multipliers get their adjoints from torch.fft, i.e. the
  conjugate multiplier followed by the inverse transform.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

DTYPE = torch.float64


def as_tensor(x) -> torch.Tensor:
    if isinstance(x, torch.Tensor):
        return x
    return torch.as_tensor(np.asarray(x, dtype=np.float64), dtype=DTYPE)


def first_max(x: torch.Tensor, dim: int) -> torch.Tensor:
    """max along ``dim``; the gradient flows only to the lowest attaining index."""
    idx = torch.argmax(x, dim=dim, keepdim=True)
    return torch.gather(x, dim, idx).squeeze(dim)


class _SafeRoot(torch.autograd.Function):
    @staticmethod
    def forward(ctx, x, p):
        y = x.pow(1.0 / p)
        ctx.save_for_backward(x, y)
        ctx.p = p
        return y

    @staticmethod
    def backward(ctx, grad_out):
        x, y = ctx.saved_tensors
        pos = x > 0
        # d/dx x^(1/p) = y / (p x)
        local = torch.where(pos, y / (ctx.p * torch.where(pos, x, torch.ones_like(x))),
                            torch.zeros_like(x))
        return grad_out * local, None


def safe_root(x: torch.Tensor, p: float) -> torch.Tensor:
    if p == 1:
        return x
    return _SafeRoot.apply(x, float(p))


class NonFiniteError(FloatingPointError, ValueError):
    """A loss, gradient or sampled field went non-finite."""


def grad_loss(loss_fn, theta) -> tuple[float, np.ndarray]:
    """Value and gradient of ``loss_fn(theta_tensor)`` at the flat vector ``theta``."""
    th = torch.tensor(np.asarray(theta, dtype=np.float64), dtype=DTYPE, requires_grad=True)
    value = loss_fn(th)
    if not torch.isfinite(value):
        raise NonFiniteError(f"loss is not finite: {value.item()}")
    (g,) = torch.autograd.grad(value, th)
    g = g.detach().numpy().copy()
    if not np.all(np.isfinite(g)):
        raise NonFiniteError("gradient contains non-finite entries")
    return float(value.detach()), g


@dataclass
class LossOracle:
    """Callable (f, grad) oracle with evaluation counting for the optimizer.

    Non-finite losses are reported as +inf with a zero gradient so the line
    search backtracks instead of crashing.
    """

    loss_fn: object
    n_evals: int = 0
    last_error: str | None = field(default=None, repr=False)

    def __call__(self, theta) -> tuple[float, np.ndarray]:
        self.n_evals += 1
        try:
            return grad_loss(self.loss_fn, theta)
        except NonFiniteError as exc:
            self.last_error = str(exc)
            return float("inf"), np.zeros_like(np.asarray(theta, dtype=float))
