"""gKdV residual and closed-form solutions used as targets and oracles.

The model is  u_t + u_xxx = mu (u^k)_x  with mu = -1 focusing, +1 defocusing.
All solution evaluators are vectorized and accept complex arguments, which
the samplers use for complex-step time derivatives.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .norms import CRITICAL_REGULARITY, FieldSampler, check_regularity
from .spectral import SpectralGrid, TimeGrid, apply_symbol, derivative_symbol

FOCUSING = -1
DEFOCUSING = 1


def default_regularity(k: int) -> float:
    sk = CRITICAL_REGULARITY[k]
    return sk + 1e-6 if k == 2 else sk


@dataclass(frozen=True)
class ModelSpec:
    k: int
    mu: int = FOCUSING
    s: float | None = None

    def __post_init__(self):
        if self.k not in CRITICAL_REGULARITY:
            raise ValueError(f"k must be one of 2..5, got {self.k}")
        if self.mu not in (-1, 0, 1):
            raise ValueError(f"mu must be +1, -1 (or 0 for the linear model), got {self.mu}")
        if self.s is None:
            object.__setattr__(self, "s", default_regularity(self.k))
        check_regularity(self.k, self.s)


def residual(model: ModelSpec, jet):
    """E_k[u] = u_t + u_xxx - mu k u^(k-1) u_x, elementwise over a Jet of arrays."""
    u, u_t, u_x, _, u_xxx = jet
    return u_t + u_xxx - model.mu * model.k * u ** (model.k - 1) * u_x


# -- closed forms ----------------------------------------------------------------


def soliton(k: int, c: float):
    if c <= 0:
        raise ValueError("soliton speed must be positive")
    amp = (k + 1) * c / 2.0
    width = (k - 1) / 2.0 * math.sqrt(c)

    def u(t, x):
        return (amp / np.cosh(width * (x - c * t)) ** 2) ** (1.0 / (k - 1))

    return u


def _check_speeds(c):
    c = tuple(float(v) for v in c)
    if not 1 <= len(c) <= 4:
        raise ValueError("between 1 and 4 solitons are supported")
    if any(v <= 0 for v in c):
        raise ValueError("speeds must be positive")
    if len(set(c)) != len(c):
        raise ValueError("speeds must be distinct")
    return c


def _subsets(c, sign):
    """(subset, coefficient) pairs; a pair interacts with sign * (k_i - k_j)^2 / (k_i + k_j)^2."""
    kk = [math.sqrt(v) for v in c]
    out = []
    for size in range(len(c) + 1):
        for sub in itertools.combinations(range(len(c)), size):
            coeff = 1.0
            for i, j in itertools.combinations(sub, 2):
                coeff *= sign * (kk[i] - kk[j]) ** 2 / (kk[i] + kk[j]) ** 2
            out.append((sub, coeff))
    return kk, out


def _hirota_sums(c, delta, sign, t, x):
    """{parity: (F, F_x, F_xx)} summed over subsets of even/odd size.

    Phases are s_j = k_j (x - c_j t) - delta_j.  Every term is divided by
    exp(max real exponent) so large |x| never overflows; the solution formulas
    are homogeneous of degree 0 in these sums, so the scale cancels.
    """
    kk, subsets = _subsets(c, sign)
    phases = np.broadcast_arrays(*[kk[i] * (x - c[i] * t) - delta[i] for i in range(len(c))])
    zero = np.zeros_like(phases[0])
    expo = [sum((phases[i] for i in sub), zero) for sub, _ in subsets]
    ref = np.max(np.stack([np.real(e) for e in expo]), axis=0)
    sums = {0: [0.0, 0.0, 0.0], 1: [0.0, 0.0, 0.0]}
    for (sub, coeff), e in zip(subsets, expo):
        rate = sum(kk[i] for i in sub)
        w = coeff * np.exp(e - ref)
        acc = sums[len(sub) % 2]
        acc[0] = acc[0] + w
        acc[1] = acc[1] + rate * w
        acc[2] = acc[2] + rate * rate * w
    return sums


def kdv_nsoliton(c, delta=None):
    """Hirota N-soliton of u_t + u_xxx + (u^2)_x = 0: u = 6 (f f_xx - f_x^2) / f^2."""
    c = _check_speeds(c)
    delta = tuple(delta) if delta is not None else (0.0,) * len(c)

    def u(t, x):
        sums = _hirota_sums(c, delta, 1.0, t, x)
        F, Fx, Fxx = (a + b for a, b in zip(sums[0], sums[1]))
        return 6.0 * (F * Fxx - Fx * Fx) / (F * F)

    return u


def mkdv_nsoliton(c, delta=None):
    """Hirota N-soliton of u_t + u_xxx + (u^3)_x = 0: u = 2 sqrt2 (f g_x - g f_x) / (f^2 + g^2).

    f collects the even-size subsets and g the odd-size ones.
    """
    c = _check_speeds(c)
    delta = tuple(delta) if delta is not None else (0.0,) * len(c)

    def u(t, x):
        sums = _hirota_sums(c, delta, -1.0, t, x)
        f, fx, _ = sums[0]
        g, gx, _ = sums[1]
        return 2.0 * math.sqrt(2.0) * (f * gx - g * fx) / (f * f + g * g)

    return u


def breather(alpha: float, beta: float, x1: float = 0.0, x2: float = 0.0):
    """Real mKdV breather, expanded sech/tanh form."""
    if alpha <= 0 or beta <= 0:
        raise ValueError("breather parameters must be positive")
    delta = alpha**2 - 3 * beta**2
    gamma = 3 * alpha**2 - beta**2
    ratio = beta / alpha

    def u(t, x):
        y1 = alpha * (x + delta * t + x1)
        y2 = beta * (x + gamma * t + x2)
        sech = 1.0 / np.cosh(y2)
        num = np.cos(y1) - ratio * np.sin(y1) * np.tanh(y2)
        den = 1.0 + ratio**2 * np.sin(y1) ** 2 * sech**2
        return 2.0 * math.sqrt(2.0) * beta * sech * num / den

    return u


def breather_potential(alpha: float, beta: float, x1: float = 0.0, x2: float = 0.0):
    """2 sqrt2 arctan((beta/alpha) sin(alpha y1) / cosh(beta y2)); its x-derivative is the breather."""
    delta = alpha**2 - 3 * beta**2
    gamma = 3 * alpha**2 - beta**2

    def w(t, x):
        y1 = x + delta * t + x1
        y2 = x + gamma * t + x2
        return 2.0 * math.sqrt(2.0) * np.arctan(beta / alpha * np.sin(alpha * y1) / np.cosh(beta * y2))

    return w


def kink(lam: float):
    """Defocusing mKdV kink sqrt2 lam tanh(lam (x + 2 lam^2 t))."""
    if lam == 0:
        raise ValueError("kink parameter must be non-zero")

    def u(t, x):
        return math.sqrt(2.0) * lam * np.tanh(lam * (x + 2 * lam**2 * t))

    return u


def kink_ramp(lam: float):
    """Fixed reference profile sqrt2 lam tanh(lam x) and its first three derivatives."""
    a = math.sqrt(2.0) * lam

    def ramp(x):
        th = np.tanh(lam * x)
        se2 = 1.0 - th**2
        return (
            a * th,
            a * lam * se2,
            -2.0 * a * lam**2 * se2 * th,
            a * lam**3 * (4.0 * se2 * th**2 - 2.0 * se2**2),
        )

    return ramp


# -- solution specs --------------------------------------------------------------

FAMILIES = ("soliton", "kdv_nsoliton", "mkdv_nsoliton", "breather", "kink")


@dataclass(frozen=True)
class SolutionSpec:
    family: str
    k: int = 3
    c: tuple = ()
    delta: tuple = ()
    alpha: float = 0.0
    beta: float = 0.0
    x1: float = 0.0
    x2: float = 0.0
    lam: float = 0.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown solution family {self.family!r}")
        object.__setattr__(self, "c", tuple(float(v) for v in self.c))
        object.__setattr__(self, "delta", tuple(float(v) for v in self.delta))
        if self.family == "soliton":
            if len(self.c) != 1 or self.c[0] <= 0:
                raise ValueError("soliton needs a single positive speed c")
            if self.k not in (2, 3, 4, 5):
                raise ValueError("soliton k must be 2..5")
        elif self.family in ("kdv_nsoliton", "mkdv_nsoliton"):
            _check_speeds(self.c)
            if list(self.c) != sorted(self.c):
                raise ValueError("N-soliton speeds must be strictly increasing")
            if self.delta and len(self.delta) != len(self.c):
                raise ValueError("delta must have one phase per soliton")
            object.__setattr__(self, "k", 2 if self.family == "kdv_nsoliton" else 3)
        elif self.family == "breather":
            if self.alpha <= 0 or self.beta <= 0:
                raise ValueError("breather needs alpha, beta > 0")
            object.__setattr__(self, "k", 3)
        elif self.family == "kink":
            if self.lam == 0:
                raise ValueError("kink needs lam != 0")
            object.__setattr__(self, "k", 3)

    @property
    def mu(self) -> int:
        return DEFOCUSING if self.family == "kink" else FOCUSING

    def model(self, s: float | None = None) -> ModelSpec:
        return ModelSpec(self.k, self.mu, s)

    def evaluator(self):
        f = self.family
        if f == "soliton":
            return soliton(self.k, self.c[0])
        if f == "kdv_nsoliton":
            return kdv_nsoliton(self.c, self.delta or None)
        if f == "mkdv_nsoliton":
            return mkdv_nsoliton(self.c, self.delta or None)
        if f == "breather":
            return breather(self.alpha, self.beta, self.x1, self.x2)
        return kink(self.lam)

    def __call__(self, t, x):
        return self.evaluator()(t, x)

    def far_field(self):
        """Callable x -> (r, r_x, r_xx, r_xxx) for non-decaying families, else None."""
        return kink_ramp(self.lam) if self.family == "kink" else None

    def decay_rate(self) -> float:
        """Exponential rate at which the (ramp-subtracted) field decays in |x|."""
        if self.family in ("soliton", "kdv_nsoliton", "mkdv_nsoliton"):
            return min(math.sqrt(v) for v in self.c)
        if self.family == "breather":
            return self.beta
        return 2.0 * abs(self.lam)

    def max_drift(self, t_max: float) -> float:
        """Bound on how far the structure's centre travels in |t| <= t_max."""
        f = self.family
        if f in ("soliton", "kdv_nsoliton", "mkdv_nsoliton"):
            shift = max(abs(d) / math.sqrt(v) for d, v in zip(self.delta or (0.0,) * len(self.c), self.c))
            return max(self.c) * t_max + shift
        if f == "breather":
            return (3 * self.alpha**2 - self.beta**2) * t_max + abs(self.x2)
        return 2 * self.lam**2 * t_max

    def to_dict(self) -> dict:
        d = {"family": self.family}
        if self.family == "soliton":
            d.update(k=self.k, c=self.c[0])
        elif self.family in ("kdv_nsoliton", "mkdv_nsoliton"):
            d.update(c=list(self.c))
            if self.delta:
                d["delta"] = list(self.delta)
        elif self.family == "breather":
            d.update(alpha=self.alpha, beta=self.beta, x1=self.x1, x2=self.x2)
        else:
            d.update(lam=self.lam)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SolutionSpec":
        d = dict(d)
        c = d.pop("c", ())
        if not isinstance(c, (list, tuple)):
            c = (c,)
        return cls(c=tuple(c), **d)


# -- sampling --------------------------------------------------------------------


@dataclass
class SolutionSamples:
    """Exact solution and its partial derivatives on a space-time grid, shape (M, N)."""

    spec: SolutionSpec
    time_grid: TimeGrid
    space_grid: SpectralGrid
    u: np.ndarray
    u_t: np.ndarray
    u_x: np.ndarray
    u_xx: np.ndarray
    u_xxx: np.ndarray

    @property
    def jet(self):
        return (self.u, self.u_t, self.u_x, self.u_xx, self.u_xxx)

    def residual(self, model: ModelSpec | None = None) -> np.ndarray:
        return residual(model or self.spec.model(), self.jet)

    def sampler(self, s: float) -> FieldSampler:
        far = self.spec.far_field()
        if far is None:
            return FieldSampler.from_values(self.u, s, self.time_grid, self.space_grid)
        r, r_x, r_xx, _ = far(self.space_grid.points)
        return FieldSampler.from_values(self.u, s, self.time_grid, self.space_grid,
                                        far_field=(r, r_x, r_xx))


_COMPLEX_STEP = 1e-30


def padded_grid(spec: SolutionSpec, space_grid: SpectralGrid, t_max: float,
                tail: float = 40.0) -> tuple[SpectralGrid, int]:
    """Extend ``space_grid`` with the same spacing until the field has decayed.

    Returns the padded grid and the offset of the original first point.
    ``tail`` is the number of e-foldings required beyond the furthest centre.
    """
    needed = spec.max_drift(t_max) + tail / spec.decay_rate()
    extra = max(0, math.ceil((needed - space_grid.half_width) / space_grid.spacing))
    grid = SpectralGrid(space_grid.half_width + extra * space_grid.spacing,
                        space_grid.n_points + 2 * extra)
    return grid, extra


def sample_solution(spec: SolutionSpec, time_grid: TimeGrid, space_grid: SpectralGrid,
                    pad: bool = False) -> SolutionSamples:
    """Sample ``spec`` with spectral x-derivatives and a complex-step t-derivative.

    With ``pad`` the spectral work happens on a wider periodic window in which
    the field has decayed, and the result is cropped back to ``space_grid``.
    Non-decaying families are handled through their far-field ramp.
    """
    fn = spec.evaluator()
    t = time_grid.points[:, None]
    if pad:
        work, off = padded_grid(spec, space_grid, time_grid.half_width)
    else:
        work, off = space_grid, 0
    x = work.points[None, :]
    u = np.real(fn(t, x))
    u_t = np.imag(fn(t + 1j * _COMPLEX_STEP, x)) / _COMPLEX_STEP
    far = spec.far_field()
    if far is None:
        v, ramp = u, (0.0, 0.0, 0.0, 0.0)
    else:
        ramp = far(work.points)
        v = u - ramp[0]
    derivs = [apply_symbol(v, derivative_symbol(work, n)) + ramp[n] for n in (1, 2, 3)]
    crop = slice(off, off + space_grid.n_points)
    return SolutionSamples(spec, time_grid, space_grid, u[:, crop], u_t[:, crop],
                           *(d[:, crop] for d in derivs))
