"""Experiment configuration: a YAML tree, validated on load, plus the named presets."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field, fields

import yaml

from .lbfgs import LBFGSConfig
from .network import Architecture
from .norms import check_regularity
from .physics import ModelSpec, SolutionSpec, default_regularity


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Collocation:
    n_evol: int
    m_evol: int
    n_pde: int
    m_pde: int

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not isinstance(v, int) or v < 1:
                raise ConfigError(f"collocation {f.name} must be a positive integer, got {v!r}")
        if self.n_evol % 2 or self.n_pde % 2:
            raise ConfigError("spatial collocation counts must be even")


@dataclass
class ExperimentConfig:
    name: str
    solution: SolutionSpec
    T: float
    R: float
    arch: Architecture
    collocation: Collocation
    n_iter: int = 3000
    seeds: list = field(default_factory=lambda: [0, 1, 2, 3, 4])
    s: float | None = None
    gamma1: float | None = None
    gamma2: float = 1.0
    lbfgs: LBFGSConfig = field(default_factory=LBFGSConfig)
    n_test: int = 300
    m_test: int = 300
    report_times: tuple = (0.0,)
    history_every: int = 1
    output_dir: str | None = None

    def __post_init__(self):
        if self.s is None:
            self.s = default_regularity(self.solution.k)
        try:
            check_regularity(self.solution.k, self.s)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if not (self.T > 0 and self.R > 0):
            raise ConfigError("domain half-widths T and R must be positive")
        if self.n_iter < 0:
            raise ConfigError("n_iter must be >= 0")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if self.gamma1 is not None and self.gamma1 < 0 or self.gamma2 < 0:
            raise ConfigError("loss weights must be non-negative")
        if self.n_test < 2 or self.m_test < 2 or self.n_test % 2:
            raise ConfigError("test grid needs M >= 2 and an even N >= 2")
        if self.history_every < 0:
            raise ConfigError("history_every must be >= 0")
        self.report_times = tuple(float(t) for t in self.report_times)
        if any(abs(t) > self.T for t in self.report_times):
            raise ConfigError("report times must lie in [-T, T]")
        self.seeds = [int(v) for v in self.seeds]
        if self.lbfgs.max_iter != self.n_iter:
            self.lbfgs = LBFGSConfig(**{**self.lbfgs.__dict__, "max_iter": self.n_iter})

    @property
    def model(self) -> ModelSpec:
        return self.solution.model(self.s)

    @property
    def k(self) -> int:
        return self.solution.k

    def with_overrides(self, **kw) -> "ExperimentConfig":
        d = self.to_dict()
        d.update(kw)
        return ExperimentConfig.from_dict(d)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "solution": self.solution.to_dict(),
            "domain": {"T": self.T, "R": self.R},
            "regularity": self.s,
            "architecture": self.arch.to_dict(),
            "collocation": {f.name: getattr(self.collocation, f.name) for f in fields(Collocation)},
            "loss": {"gamma1": self.gamma1, "gamma2": self.gamma2},
            "optimizer": {"n_iter": self.n_iter, "seeds": list(self.seeds),
                          **{k: v for k, v in self.lbfgs.__dict__.items() if k != "max_iter"}},
            "test_grid": {"n": self.n_test, "m": self.m_test},
            "report_times": list(self.report_times),
            "history_every": self.history_every,
            "output_dir": self.output_dir,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = copy.deepcopy(d)
        known = {"name", "solution", "domain", "regularity", "architecture", "collocation", "loss",
                 "optimizer", "test_grid", "report_times", "history_every", "output_dir"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            opt = dict(d.get("optimizer", {}))
            n_iter = int(opt.pop("n_iter", 3000))
            seeds = opt.pop("seeds", [0, 1, 2, 3, 4])
            opt.pop("max_iter", None)
            loss = d.get("loss", {}) or {}
            test = d.get("test_grid", {}) or {}
            return cls(
                name=str(d["name"]),
                solution=SolutionSpec.from_dict(d["solution"]),
                T=float(d["domain"]["T"]),
                R=float(d["domain"]["R"]),
                arch=Architecture.from_dict(d["architecture"]),
                collocation=Collocation(**d["collocation"]),
                n_iter=n_iter,
                seeds=list(seeds),
                s=None if d.get("regularity") is None else float(d["regularity"]),
                gamma1=None if loss.get("gamma1") is None else float(loss["gamma1"]),
                gamma2=float(loss.get("gamma2", 1.0)),
                lbfgs=LBFGSConfig(max_iter=n_iter, **opt),
                n_test=int(test.get("n", 300)),
                m_test=int(test.get("m", 300)),
                report_times=tuple(d.get("report_times", (0.0,))),
                history_every=int(d.get("history_every", 1)),
                output_dir=d.get("output_dir"),
            )
        except ConfigError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid config: {exc!r}") from None

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    @classmethod
    def from_yaml(cls, text: str) -> "ExperimentConfig":
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"unparsable config: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config must be a mapping")
        return cls.from_dict(data)


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return ExperimentConfig.from_yaml(fh.read())


# -- presets ---------------------------------------------------------------------

_SOLITON_GRIDS = {
    (2, 1): (64, 32, 64, 32), (2, 3): (64, 32, 64, 32),
    (3, 1): (64, 32, 128, 32), (3, 3): (64, 32, 128, 32),
    (4, 1): (128, 32, 128, 32), (4, 3): (128, 32, 128, 32),
    (5, 1): (128, 32, 128, 32), (5, 3): (128, 128, 256, 32),
}
_TWO_SOLITON_SPEEDS = [(0.1, 0.4), (0.5, 1.0), (0.3, 1.8), (1.0, 2.0)]
_THREE_SOLITON_SPEEDS = [(0.1, 1.0, 2.0), (0.5, 1.5, 2.0)]
_BREATHERS = [(0.5, 0.5), (0.9, 0.3), (1.0, 0.5), (1.3, 0.2)]
_KINKS = [1.0, 2.5]


def _tag(v) -> str:
    return f"{v:g}".replace(".", "p")


def _build_presets() -> dict:
    out = {}
    for (k, c), grids in _SOLITON_GRIDS.items():
        name = f"soliton-k{k}-c{c}"
        out[name] = ExperimentConfig(
            name, SolutionSpec("soliton", k=k, c=(c,)), 3.0, 20.0, Architecture(2, 20),
            Collocation(*grids), n_iter=3000, report_times=(-3.0, 0.0, 2.0))
    for fam, label in (("kdv_nsoliton", "kdv"), ("mkdv_nsoliton", "mkdv")):
        for c in _TWO_SOLITON_SPEEDS:
            n_pde = 128 if c in ((0.1, 0.4), (0.5, 1.0)) else 256
            name = f"{label}-2soliton-" + "-".join(_tag(v) for v in c)
            out[name] = ExperimentConfig(
                name, SolutionSpec(fam, c=c), 3.0, 20.0, Architecture(3, 32),
                Collocation(128, 32, n_pde, 32), n_iter=3000, report_times=(-3.0, 0.0, 2.0))
        for c in _THREE_SOLITON_SPEEDS:
            name = f"{label}-3soliton-" + "-".join(_tag(v) for v in c)
            out[name] = ExperimentConfig(
                name, SolutionSpec(fam, c=c), 3.0, 20.0, Architecture(3, 40),
                Collocation(128, 32, 256, 32), n_iter=5000, report_times=(-3.0, 0.0, 2.0))
    for a, b in _BREATHERS:
        name = f"breather-{_tag(a)}-{_tag(b)}"
        out[name] = ExperimentConfig(
            name, SolutionSpec("breather", alpha=a, beta=b), 2.0, 20.0, Architecture(3, 40),
            Collocation(128, 128, 128, 64), n_iter=5000, report_times=(-2.0, 0.0, 1.0))
    for lam in _KINKS:
        name = f"kink-{_tag(lam)}"
        out[name] = ExperimentConfig(
            name, SolutionSpec("kink", lam=lam), 1.0, 20.0, Architecture(3, 32),
            Collocation(128, 32, 128, 32), n_iter=3000, report_times=(-1.0, 0.0, 1.0))
    return out


PRESETS = _build_presets()


def preset(name: str) -> ExperimentConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}")
    return ExperimentConfig.from_dict(PRESETS[name].to_dict())
