"""Loss assembly, L-BFGS training and metric evaluation for one experiment."""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np
import torch

from . import quadrature as quad
from .autodiff import DTYPE, LossOracle
from .config import ExperimentConfig
from .lbfgs import LBFGSConfig, lbfgs_minimize
from .network import Architecture, NetworkParams, forward, forward_grid, init
from .norms import (
    FieldSampler,
    error_linf_hs,
    error_rel,
    error_y,
    estimate_constants,
    term_count,
    y_functional,
    y_norm,
)
from .physics import ModelSpec, SolutionSpec, residual, sample_solution
from .spectral import (
    SpectralGrid,
    TimeGrid,
    airy_symbol,
    apply_symbol,
    derivative_symbol,
    fractional_symbol,
    inverse_derivative_symbol,
)


class TrainingDiverged(RuntimeError):
    """The loss became non-finite and the optimizer could not recover."""

    def __init__(self, message, params=None, history=None):
        super().__init__(message)
        self.params = params
        self.history = history


@dataclass(frozen=True)
class LossConfig:
    model: ModelSpec
    gamma1: float
    gamma2: float
    evol_time: TimeGrid
    evol_space: SpectralGrid
    pde_time: TimeGrid
    pde_space: SpectralGrid

    @classmethod
    def from_experiment(cls, cfg: ExperimentConfig) -> "LossConfig":
        c = cfg.collocation
        g1 = cfg.gamma1 if cfg.gamma1 is not None else 1.0 / term_count(cfg.k)
        return cls(cfg.model, g1, cfg.gamma2,
                   TimeGrid(cfg.T, c.m_evol), SpectralGrid(cfg.R, c.n_evol),
                   TimeGrid(cfg.T, c.m_pde), SpectralGrid(cfg.R, c.n_pde))


def _t(a):
    return torch.as_tensor(a, dtype=torch.complex128 if np.iscomplexobj(a) else DTYPE)


class PinnLoss:
    """L = gamma1 * L_evol + gamma2 * L_PDE as a function of the flat parameter tensor.

    All Fourier symbols are precomputed; a call costs one jet pass on the PDE
    grid, one plain pass at t = 0 on the evolution grid and a handful of FFTs.
    """

    def __init__(self, arch: Architecture, loss: LossConfig, u0):
        self.arch = arch
        self.cfg = loss
        m = loss.model
        sg, tg = loss.evol_space, loss.evol_time
        u0 = np.real(np.asarray(getattr(u0, "values", u0)))
        if u0.shape != (sg.n_points,):
            raise ValueError(f"u0 has {u0.shape} samples, evolution grid has {sg.n_points}")
        self.u0 = torch.as_tensor(u0, dtype=DTYPE)
        self.x_evol = torch.as_tensor(sg.points, dtype=DTYPE)
        airy = airy_symbol(sg, tg.points)  # (M, N)
        dx = derivative_symbol(sg, 1)
        ds = fractional_symbol(sg, m.s)
        self.evol_symbols = [_t(airy), _t(airy * dx), _t(airy * ds), _t(airy * ds * dx)]
        self.t_pde = torch.as_tensor(loss.pde_time.points[:, None], dtype=DTYPE)
        self.x_pde = torch.as_tensor(loss.pde_space.points[None, :], dtype=DTYPE)
        if m.k == 5:
            self.pde_symbol = _t(inverse_derivative_symbol(loss.pde_space))
        else:
            self.pde_symbol = _t(fractional_symbol(loss.pde_space, m.s))
        self.last = {}

    def params(self, theta) -> NetworkParams:
        return NetworkParams.unflatten(self.arch, theta)

    def loss_evol(self, p: NetworkParams):
        d = self.u0 - forward(p, torch.zeros_like(self.x_evol), self.x_evol)
        d_hat = torch.fft.fft(d)
        u, u_x, ds_u, ds_u_x = (torch.fft.ifft(d_hat * sym, dim=-1).real for sym in self.evol_symbols)
        fs = FieldSampler(u, u_x, ds_u, ds_u_x, self.cfg.model.s, self.cfg.evol_time, self.cfg.evol_space)
        return y_functional(self.cfg.model.k, fs)

    def pde_residual(self, p: NetworkParams):
        return residual(self.cfg.model, forward_grid(p, self.cfg.pde_time, self.cfg.pde_space))

    def loss_pde(self, p: NetworkParams):
        e = self.pde_residual(p)
        if self.cfg.model.k == 5:
            return quad.j_pq(apply_symbol(e, self.pde_symbol), 1, 2)
        return quad.j_pq(e, 2, 2) + quad.j_pq(apply_symbol(e, self.pde_symbol), 2, 2)

    def components(self, theta):
        p = self.params(theta)
        return self.loss_evol(p), self.loss_pde(p)

    def __call__(self, theta):
        evol, pde = self.components(theta)
        total = self.cfg.gamma1 * evol + self.cfg.gamma2 * pde
        # remember the split for the history writer (keyed by the exact iterate)
        key = theta.detach().numpy().tobytes()
        self.last = {key: (float(evol.detach()), float(pde.detach()))}
        return total

    def split(self, theta: np.ndarray) -> tuple[float, float]:
        key = np.asarray(theta, dtype=np.float64).tobytes()
        if key in self.last:
            return self.last[key]
        with torch.no_grad():
            evol, pde = self.components(torch.as_tensor(theta, dtype=DTYPE))
        return float(evol), float(pde)


# -- metrics ---------------------------------------------------------------------


@dataclass
class MetricsReport:
    A_tilde: float
    A: float
    L: float
    error_Y: float
    error_LinfHs: float
    error_rel: float
    loss: float
    loss_evol: float
    loss_pde: float
    seconds: float = 0.0
    iterations: int = 0
    evaluations: int = 0
    status: str = ""
    seed: int | None = None

    def as_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        return cls(**d)

    TABLE_COLUMNS = ("A_tilde", "A", "L", "error_Y", "error_LinfHs", "error_rel", "loss", "seconds")


def prediction_sampler(params: NetworkParams, spec: SolutionSpec, s: float,
                       time_grid: TimeGrid, space_grid: SpectralGrid) -> FieldSampler:
    """Sampler of u_theta; the target's far-field ramp (if any) is handled analytically."""
    u = forward(params, time_grid.points[:, None], space_grid.points[None, :])
    far = spec.far_field()
    if far is None:
        return FieldSampler.from_values(u, s, time_grid, space_grid)
    r, r_x, r_xx, _ = far(space_grid.points)
    return FieldSampler.from_values(u, s, time_grid, space_grid, far_field=(r, r_x, r_xx))


def exact_sampler(spec: SolutionSpec, s: float, time_grid: TimeGrid, space_grid: SpectralGrid) -> FieldSampler:
    u = np.real(spec(time_grid.points[:, None], space_grid.points[None, :]))
    far = spec.far_field()
    if far is None:
        return FieldSampler.from_values(u, s, time_grid, space_grid)
    r, r_x, r_xx, _ = far(space_grid.points)
    return FieldSampler.from_values(u, s, time_grid, space_grid, far_field=(r, r_x, r_xx))


def evaluate(params: NetworkParams, cfg: ExperimentConfig, loss_terms=None) -> MetricsReport:
    """All reported constants and errors on the N_test x M_test grid.

    A and A_tilde are continuum-calibrated; L and the error functionals are
    the raw discrete values.
    """
    s, k, spec = cfg.s, cfg.k, cfg.solution
    tg, sg = TimeGrid(cfg.T, cfg.m_test), SpectralGrid(cfg.R, cfg.n_test)
    ue = exact_sampler(spec, s, tg, sg)
    up = prediction_sampler(params, spec, s, tg, sg)
    u0 = np.real(spec(0.0, sg.points))
    up0 = forward(params, 0.0, sg.points)
    consts = estimate_constants(s, u0, up, k, calibrated=True, u_pred_0=up0)
    consts.L = y_norm(k, s, up).total
    if loss_terms is None:
        problem = PinnLoss(params.arch, LossConfig.from_experiment(cfg),
                           np.real(spec(0.0, SpectralGrid(cfg.R, cfg.collocation.n_evol).points)))
        with torch.no_grad():
            ev, pd = problem.components(torch.as_tensor(params.flatten(), dtype=DTYPE))
        loss_terms = (float(ev), float(pd))
    ev, pd = loss_terms
    g1 = LossConfig.from_experiment(cfg).gamma1
    return MetricsReport(
        A_tilde=consts.A_tilde, A=consts.A, L=consts.L,
        error_Y=error_y(k, s, ue, up),
        error_LinfHs=error_linf_hs(s, ue, up),
        error_rel=error_rel(ue, up),
        loss=g1 * ev + cfg.gamma2 * pd, loss_evol=ev, loss_pde=pd,
    )


# -- history ---------------------------------------------------------------------

HISTORY_COLUMNS = ("iter", "loss_evol", "loss_pde", "A", "A_tilde", "L", "error_Y", "seconds")


@dataclass
class TrainHistory:
    rows: list = field(default_factory=list)  # tuples in HISTORY_COLUMNS order

    def append(self, *row):
        if self.rows and row[0] <= self.rows[-1][0]:
            raise ValueError("history iterations must increase")
        self.rows.append(tuple(float(v) if i else int(v) for i, v in enumerate(row)))

    def column(self, name: str) -> np.ndarray:
        i = HISTORY_COLUMNS.index(name)
        return np.array([r[i] for r in self.rows])

    def total_loss(self, gamma1: float, gamma2: float) -> np.ndarray:
        return gamma1 * self.column("loss_evol") + gamma2 * self.column("loss_pde")

    def best_envelope(self, gamma1: float, gamma2: float) -> np.ndarray:
        tot = self.total_loss(gamma1, gamma2)
        return np.minimum.accumulate(tot) if tot.size else tot

    def __len__(self):
        return len(self.rows)


class _Monitor:
    """Cheap per-iteration diagnostics on the evolution grid."""

    def __init__(self, cfg: ExperimentConfig, loss: LossConfig):
        self.cfg = cfg
        self.tg, self.sg = loss.evol_time, loss.evol_space
        self.u0 = np.real(cfg.solution(0.0, self.sg.points))
        self.exact = exact_sampler(cfg.solution, cfg.s, self.tg, self.sg)

    def __call__(self, params: NetworkParams):
        cfg = self.cfg
        up = prediction_sampler(params, cfg.solution, cfg.s, self.tg, self.sg)
        up0 = forward(params, 0.0, self.sg.points)
        c = estimate_constants(cfg.s, self.u0, up, cfg.k, calibrated=True, u_pred_0=up0)
        return c.A, c.A_tilde, c.L, error_y(cfg.k, cfg.s, self.exact, up)


@dataclass
class TrainResult:
    params: NetworkParams
    history: TrainHistory
    metrics: MetricsReport
    seed: int


def train(cfg: ExperimentConfig, seed: int | None = None, init_params: NetworkParams | None = None,
          n_iter: int | None = None, log=None) -> TrainResult:
    """Initialize, minimize the PINN loss with L-BFGS and evaluate on the test grid."""
    seed = cfg.seeds[0] if seed is None else int(seed)
    n_iter = cfg.n_iter if n_iter is None else int(n_iter)
    torch.set_num_threads(1)
    loss_cfg = LossConfig.from_experiment(cfg)
    u0 = np.real(cfg.solution(0.0, loss_cfg.evol_space.points))
    params = init_params if init_params is not None else init(cfg.arch, seed)
    if params.arch != cfg.arch:
        raise ValueError("initial parameters do not match the configured architecture")
    problem = PinnLoss(cfg.arch, loss_cfg, u0)
    oracle = LossOracle(problem)
    monitor = _Monitor(cfg, loss_cfg) if cfg.history_every else None
    history = TrainHistory()
    start = time.perf_counter()

    def record(it, x):
        ev, pd = problem.split(x)
        if monitor is not None:
            A, At, L, eY = monitor(NetworkParams.unflatten(cfg.arch, x))
        else:
            A = At = L = eY = math.nan
        history.append(it, ev, pd, A, At, L, eY, time.perf_counter() - start)

    def callback(it, x, f):
        if cfg.history_every and it % cfg.history_every == 0:
            record(it, x)
        if log is not None and it % 100 == 0:
            log(f"iter {it:5d}  loss {f:.6e}")
        return False

    theta0 = params.flatten()
    f0, _ = oracle(theta0)
    if not math.isfinite(f0):
        raise TrainingDiverged("loss is not finite at initialization", params, history)
    if cfg.history_every:
        record(0, theta0)
    if n_iter == 0:
        theta, status, n_done = theta0, "max_iter", 0
    else:
        opt = LBFGSConfig(**{**cfg.lbfgs.__dict__, "max_iter": n_iter})
        res = lbfgs_minimize(oracle, theta0, opt, callback=callback)
        theta, status, n_done = res.x, res.status, res.n_iter
        if res.stalled and oracle.last_error is not None and not math.isfinite(res.f):
            raise TrainingDiverged(oracle.last_error, NetworkParams.unflatten(cfg.arch, theta), history)
    seconds = time.perf_counter() - start
    final = NetworkParams.unflatten(cfg.arch, np.asarray(theta, dtype=np.float64))
    metrics = evaluate(final, cfg, problem.split(theta))
    metrics.seconds = seconds
    metrics.iterations = n_done
    metrics.evaluations = oracle.n_evals
    metrics.status = status
    metrics.seed = seed
    return TrainResult(final, history, metrics, seed)


def train_best_of(cfg: ExperimentConfig, seeds=None, accept=None, log=None) -> tuple[TrainResult, list]:
    """Train one run per seed and return the run with the smallest error_rel.

    ``accept(metrics) -> bool`` stops the sweep at the first accepted run; the
    returned best is then that run.  The second value lists every run's metrics.
    """
    seeds = list(cfg.seeds if seeds is None else seeds)
    best, runs = None, []
    for sd in seeds:
        res = train(cfg, seed=sd, log=log)
        runs.append(res.metrics)
        if best is None or res.metrics.error_rel < best.metrics.error_rel:
            best = res
        if accept is not None and accept(res.metrics):
            return res, runs
    return best, runs
