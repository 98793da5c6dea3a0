"""Limited-memory BFGS with a strong-Wolfe line search (cubic zoom).

The oracle maps x -> (f, grad).  Non-finite values are treated as +inf, so a
step into an overflow region simply fails the sufficient-decrease test.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np


@dataclass
class LBFGSConfig:
    max_iter: int = 3000
    history_size: int = 50
    c1: float = 1e-4
    c2: float = 0.9
    gtol: float = 1e-9
    ftol: float = 1e-12
    max_ls: int = 25

    def __post_init__(self):
        if not 0 < self.c1 < self.c2 < 1:
            raise ValueError(f"need 0 < c1 < c2 < 1, got c1={self.c1}, c2={self.c2}")
        if self.max_iter < 0 or self.history_size < 1 or self.max_ls < 1:
            raise ValueError("max_iter >= 0, history_size >= 1 and max_ls >= 1 required")


@dataclass
class LBFGSResult:
    x: np.ndarray
    f: float
    grad: np.ndarray
    n_iter: int
    n_evals: int
    status: str  # "gtol", "ftol", "max_iter", "stalled", "callback"
    history: list = field(default_factory=list)  # f after every outer iteration

    @property
    def stalled(self) -> bool:
        return self.status == "stalled"


def _finite(f, g):
    if not math.isfinite(f) or not np.all(np.isfinite(g)):
        return math.inf, np.zeros_like(g)
    return float(f), g


def _cubic_min(a, fa, da, b, fb, db):
    """Minimizer of the cubic through (a, fa, da), (b, fb, db), or None."""
    if not all(math.isfinite(v) for v in (fa, da, fb, db)):
        return None
    d1 = da + db - 3.0 * (fa - fb) / (a - b)
    rad = d1 * d1 - da * db
    if rad < 0:
        return None
    d2 = math.copysign(math.sqrt(rad), b - a)
    denom = db - da + 2.0 * d2
    if denom == 0:
        return None
    return b - (b - a) * (db + d2 - d1) / denom


def _line_search(oracle, x, f0, g0, d, alpha, cfg: LBFGSConfig):
    """Strong-Wolfe search along d.  Returns (alpha, f, g, n_evals, ok).

    On failure the best trial point is returned with ok=False.
    """
    dphi0 = float(g0 @ d)
    best = (0.0, f0, g0)
    n = 0

    def phi(a):
        nonlocal n, best
        n += 1
        f, g = _finite(*oracle(x + a * d))
        if f < best[1]:
            best = (a, f, g)
        return f, g, float(g @ d) if math.isfinite(f) else math.nan

    def zoom(lo, f_lo, d_lo, hi, f_hi, d_hi):
        while n < cfg.max_ls:
            width = hi - lo
            a = _cubic_min(lo, f_lo, d_lo, hi, f_hi, d_hi)
            left, right = min(lo, hi) + 0.1 * abs(width), max(lo, hi) - 0.1 * abs(width)
            if a is None or not left <= a <= right:
                a = 0.5 * (lo + hi)
            f, g, dphi = phi(a)
            if f > f0 + cfg.c1 * a * dphi0 or f >= f_lo:
                hi, f_hi, d_hi = a, f, dphi
            else:
                if abs(dphi) <= -cfg.c2 * dphi0:
                    return a, f, g, True
                if dphi * (hi - lo) >= 0:
                    hi, f_hi, d_hi = lo, f_lo, d_lo
                lo, f_lo, d_lo = a, f, dphi
        return None

    a_prev, f_prev, d_prev = 0.0, f0, dphi0
    while n < cfg.max_ls:
        f, g, dphi = phi(alpha)
        if f > f0 + cfg.c1 * alpha * dphi0 or (n > 1 and f >= f_prev):
            hit = zoom(a_prev, f_prev, d_prev, alpha, f, dphi)
            break
        if abs(dphi) <= -cfg.c2 * dphi0:
            return alpha, f, g, n, True
        if dphi >= 0:
            hit = zoom(alpha, f, dphi, a_prev, f_prev, d_prev)
            break
        a_prev, f_prev, d_prev = alpha, f, dphi
        alpha *= 2.0
    else:
        hit = None
    if hit is not None:
        a, f, g, _ = hit
        return a, f, g, n, True
    a, f, g = best
    return a, f, g, n, False


def _two_loop(g, memory):
    q = g.copy()
    coeffs = []
    for s, y, rho in reversed(memory):
        a = rho * (s @ q)
        coeffs.append(a)
        q -= a * y
    if memory:
        s, y, _ = memory[-1]
        q *= (s @ y) / (y @ y)
    for (s, y, rho), a in zip(memory, reversed(coeffs)):
        b = rho * (y @ q)
        q += (a - b) * s
    return -q


def lbfgs_minimize(oracle, x0, config: LBFGSConfig | None = None, callback=None, **overrides) -> LBFGSResult:
    """Minimize with L-BFGS; returns the best iterate seen.

    ``callback(iteration, x, f)`` runs after every outer iteration; returning
    True stops the run with status "callback".  Keyword overrides replace
    fields of ``config``.
    """
    cfg = config or LBFGSConfig()
    if overrides:
        cfg = LBFGSConfig(**{**cfg.__dict__, **overrides})
    x = np.array(x0, dtype=np.float64)
    f, g = oracle(x)
    n_evals = 1
    if not math.isfinite(f) or not np.all(np.isfinite(g)):
        raise FloatingPointError("objective is not finite at the starting point")
    f = float(f)
    memory = deque(maxlen=cfg.history_size)
    history = []
    best = (x.copy(), f, g.copy())
    status = "max_iter"
    it = 0
    while True:
        if np.max(np.abs(g), initial=0.0) <= cfg.gtol:
            status = "gtol"
            break
        if it >= cfg.max_iter:
            break
        d = _two_loop(g, memory)
        if not g @ d < 0:
            memory.clear()
            d = -g
        alpha = 1.0 if memory else min(1.0, 1.0 / max(np.sum(np.abs(g)), 1e-300))
        alpha, f_new, g_new, used, ok = _line_search(oracle, x, f, g, d, alpha, cfg)
        n_evals += used
        if alpha == 0.0:
            if memory:
                # retry from steepest descent before giving up
                memory.clear()
                continue
            status = "stalled"
            break
        x_new = x + alpha * d
        s, y = x_new - x, g_new - g
        sy = float(s @ y)
        if ok and sy > 1e-10 * float(y @ y):
            memory.append((s, y, 1.0 / sy))
        elif not ok:
            memory.clear()
        f_old = f
        x, f, g = x_new, f_new, g_new
        it += 1
        history.append(f)
        if f < best[1]:
            best = (x.copy(), f, g.copy())
        if callback is not None and callback(it, x, f):
            status = "callback"
            break
        if abs(f_old - f) <= cfg.ftol * max(abs(f_old), abs(f), 1.0):
            status = "ftol"
            break
    bx, bf, bg = best
    return LBFGSResult(bx, bf, bg, it, n_evals, status, history)
