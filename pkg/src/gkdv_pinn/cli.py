"""Command line entry point: train, eval, refsolve, table, norms, presets."""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import io as aio
from . import plotting
from .config import ConfigError, ExperimentConfig, PRESETS, load_config, preset
from .norms import FieldSampler, y_norm
from .refsolver import BlowUpError, IntegratorConfig, evolve
from .spectral import Field, SpectralGrid
from .training import MetricsReport, TrainingDiverged, evaluate, train

OUTPUT_ROOT_ENV = "GKDV_OUTPUT_ROOT"

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_IO = 0, 2, 3, 4


class UsageError(Exception):
    pass


def output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))


def _load_cfg(args) -> ExperimentConfig:
    if args.config and args.preset:
        raise ConfigError("give either --config or --preset, not both")
    if args.config:
        cfg = load_config(args.config)
    elif args.preset:
        cfg = preset(args.preset)
    else:
        raise ConfigError("a --config file or a --preset name is required")
    if getattr(args, "iters", None) is not None:
        cfg = cfg.with_overrides(optimizer={**cfg.to_dict()["optimizer"], "n_iter": args.iters})
    return cfg


def _seeds(args, cfg) -> list:
    if getattr(args, "seeds", None):
        try:
            return [int(v) for v in args.seeds.split(",") if v.strip()]
        except ValueError:
            raise ConfigError(f"--seeds must be a comma-separated list of integers, got {args.seeds!r}") from None
    if getattr(args, "seed", None) is not None:
        return [args.seed]
    return list(cfg.seeds)


def _run_dir(args, cfg, seed, many) -> Path:
    base = Path(args.out) if args.out else Path(cfg.output_dir) if cfg.output_dir else output_root() / cfg.name
    return base / f"seed-{seed}" if many or not args.out else base


def _emit(rows: list[dict], fh=None):
    """Write dict rows as CSV to stdout, between begin/end marker lines."""
    fh = fh or sys.stdout
    if not rows:
        return
    print("# --- begin ---", file=fh)
    w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (f"{v:.6e}" if isinstance(v, float) else v) for k, v in r.items()})
    print("# --- end ---", file=fh)


# -- artifacts -------------------------------------------------------------------


def write_report_files(run_dir: Path, cfg: ExperimentConfig, params, metrics: MetricsReport,
                       history=None, plots: bool = True):
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "metrics.json").write_text(json.dumps(metrics.as_dict(), indent=2, sort_keys=True) + "\n")
    x = SpectralGrid(cfg.R, cfg.n_test).points
    times = cfg.report_times
    from .network import forward

    exact = [np.real(cfg.solution(t, x)) for t in times]
    pred = [forward(params, t, x) for t in times]
    header, data = plotting.slice_table(x, times, exact, pred)
    plotting.write_columns(run_dir / "slices.csv", header, data)
    if plots:
        plotting.render_slices(run_dir / "slices.png", x, times, exact, pred, cfg.name)
        if history is not None and len(history):
            from .training import LossConfig

            g1 = LossConfig.from_experiment(cfg).gamma1
            plotting.render_history(run_dir / "history.png", history, g1, cfg.gamma2, cfg.name)


def _train_one(cfg_dict: dict, seed: int, run_dir: str, plots: bool, quiet: bool):
    """Worker body (also used in-process); returns (status, metrics dict or message)."""
    cfg = ExperimentConfig.from_dict(cfg_dict)
    run = Path(run_dir)
    run.mkdir(parents=True, exist_ok=True)
    (run / "config.yaml").write_text(cfg.to_yaml())
    log = None if quiet else (lambda m: print(f"[{cfg.name} seed {seed}] {m}", file=sys.stderr, flush=True))
    meta = {"seed": seed, "k": cfg.k, "s": cfg.s, "grids": cfg.to_dict()["collocation"]}
    try:
        res = train(cfg, seed=seed, log=log)
    except TrainingDiverged as exc:
        if exc.params is not None:
            aio.save_checkpoint(run / "model.ckpt", exc.params, {**meta, "iteration": -1, "diverged": True})
        if exc.history is not None:
            aio.write_history(run / "history.csv", exc.history)
        return "diverged", str(exc)
    aio.save_checkpoint(run / "model.ckpt", res.params, {**meta, "iteration": res.metrics.iterations})
    aio.write_history(run / "history.csv", res.history)
    write_report_files(run, cfg, res.params, res.metrics, res.history, plots)
    return "ok", res.metrics.as_dict()


def cmd_train(args) -> int:
    cfg = _load_cfg(args)
    seeds = _seeds(args, cfg)
    many = len(seeds) > 1
    jobs = []
    for sd in seeds:
        jobs.append((cfg.to_dict(), sd, str(_run_dir(args, cfg, sd, many)), not args.no_plots, args.quiet))
    if args.jobs > 1 and many:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_train_one, *zip(*jobs)))
    else:
        results = [_train_one(*j) for j in jobs]
    rows, diverged = [], False
    for (_, sd, run, _, _), (status, payload) in zip(jobs, results):
        if status == "ok":
            rows.append({"run": run, **{k: payload[k] for k in MetricsReport.TABLE_COLUMNS}})
        else:
            diverged = True
            print(f"seed {sd}: training diverged ({payload}); last finite state kept in {run}", file=sys.stderr)
    _emit(rows)
    return EXIT_DIVERGED if diverged else EXIT_OK


def cmd_eval(args) -> int:
    cfg = _load_cfg(args)
    params, meta = aio.load_checkpoint(args.checkpoint)
    if params.arch != cfg.arch:
        raise ConfigError(f"checkpoint architecture {params.arch} does not match config {cfg.arch}")
    metrics = evaluate(params, cfg)
    metrics.seed = meta.get("seed")
    metrics.iterations = int(meta.get("iteration", 0))
    if args.out:
        write_report_files(Path(args.out), cfg, params, metrics, plots=not args.no_plots)
    print(json.dumps(metrics.as_dict(), sort_keys=True))
    return EXIT_OK


def cmd_refsolve(args) -> int:
    cfg = _load_cfg(args)
    n = args.n or 1024
    grid = SpectralGrid(cfg.R, n)
    t_end = args.t_end if args.t_end is not None else cfg.T
    steps = max(1, int(math.ceil(t_end / args.dt - 1e-9)))
    model = cfg.model
    u0 = Field(grid, np.real(cfg.solution(0.0, grid.points)))
    times = sorted({t for t in cfg.report_times if 0 <= t <= steps * args.dt} | {steps * args.dt})
    ic = IntegratorConfig(args.dt, steps, model, grid)
    out = Path(args.out) if args.out else output_root() / cfg.name / "refsolve"
    out.mkdir(parents=True, exist_ok=True)
    try:
        traj = evolve(u0, ic, times)
    except BlowUpError as exc:
        if exc.trajectory is not None and len(exc.trajectory.times):
            tr = exc.trajectory
            aio.save_trajectory(out / "trajectory.traj", tr.times, [tr.field(i) for i in range(len(tr.times))], model)
        print(f"integration blew up: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    fields = [traj.field(i) for i in range(len(traj.times))]
    aio.save_trajectory(out / "trajectory.traj", traj.times, fields, model)
    exact = np.array([np.real(cfg.solution(t, grid.points)) for t in traj.times])
    rows = []
    for t, u, ue in zip(traj.times, traj.values, exact):
        rows.append({"t": float(t), "rel_l2_vs_exact": float(np.linalg.norm(u - ue) / np.linalg.norm(ue)),
                     "mass": float(np.sum(u) * grid.spacing)})
    if not args.no_plots:
        plotting.render_trajectory(out / "trajectory.png", grid.points, traj.times, traj.values, exact, cfg.name)
    _emit(rows)
    return EXIT_OK


def _find_metrics(paths) -> list[Path]:
    found = []
    for p in map(Path, paths):
        if p.is_file() and p.name == "metrics.json":
            found.append(p)
        elif (p / "metrics.json").is_file():
            found.append(p / "metrics.json")
        elif p.is_dir() and sorted(p.glob("*/metrics.json")):
            found += sorted(p.glob("*/metrics.json"))
        else:
            raise FileNotFoundError(f"no metrics.json under {p}")
    return found


def cmd_table(args) -> int:
    if not args.runs:
        raise UsageError("table needs at least one run directory")
    files = _find_metrics(args.runs)
    cols = MetricsReport.TABLE_COLUMNS
    rows = []
    for f in files:
        m = json.loads(f.read_text())
        rows.append({"run": str(f.parent), **{c: float(m[c]) for c in cols}})
    mean = {"run": "mean", **{c: float(np.mean([r[c] for r in rows])) for c in cols}}
    best = dict(min(rows, key=lambda r: r["error_rel"]), run="best")
    table = rows + [mean, best]
    if args.format == "markdown":
        print("| run | " + " | ".join(cols) + " |")
        print("|---" * (len(cols) + 1) + "|")
        for r in table:
            print(f"| {r['run']} | " + " | ".join(f"{r[c]:.4g}" for c in cols) + " |")
    else:
        _emit(table)
    return EXIT_OK


def cmd_norms(args) -> int:
    sm = aio.load_samples(args.samples)
    s = args.s
    if s is None:
        from .physics import default_regularity

        s = default_regularity(args.k)
    fs = FieldSampler.from_values(sm.values, s, sm.time_grid, sm.space_grid)
    try:
        report = y_norm(args.k, s, fs, calibrated=args.calibrated)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    print(report.to_json())
    return EXIT_OK


def cmd_presets(args) -> int:
    if args.name:
        print(preset(args.name).to_yaml(), end="")
        return EXIT_OK
    for name in PRESETS:
        print(name)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gkdv-pinn", description="PINNs for generalized KdV with KPV-norm losses.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="YAML experiment file")
        sp.add_argument("--preset", help="named experiment (see 'presets')")
        sp.add_argument("--out", help="output directory (default: $%s/<name>)" % OUTPUT_ROOT_ENV)
        sp.add_argument("--no-plots", action="store_true", help="skip PNG rendering")

    t = sub.add_parser("train", help="train one or more seeds")
    common(t)
    t.add_argument("--seed", type=int)
    t.add_argument("--seeds", help="comma-separated seeds (one run directory each)")
    t.add_argument("--jobs", type=int, default=1, help="worker processes for multi-seed runs")
    t.add_argument("--iters", type=int, help="override the iteration count")
    t.add_argument("--quiet", action="store_true")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="recompute metrics of a checkpoint")
    common(e)
    e.add_argument("--checkpoint", required=True)
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("refsolve", help="integrate the target's initial datum with the reference solver")
    common(r)
    r.add_argument("--dt", type=float, default=1e-3)
    r.add_argument("--n", type=int, help="spatial points (default 1024)")
    r.add_argument("--t-end", type=float, help="final time (default T)")
    r.set_defaults(func=cmd_refsolve)

    tb = sub.add_parser("table", help="tabulate metrics of finished runs")
    tb.add_argument("runs", nargs="*")
    tb.add_argument("--format", choices=("csv", "markdown"), default="csv")
    tb.set_defaults(func=cmd_table)

    n = sub.add_parser("norms", help="Y_{k,s} of a saved sample matrix")
    n.add_argument("--samples", required=True)
    n.add_argument("--k", type=int, required=True)
    n.add_argument("--s", type=float)
    n.add_argument("--calibrated", action="store_true", help="continuum-scaled terms")
    n.set_defaults(func=cmd_norms)

    ps = sub.add_parser("presets", help="list presets or print one as YAML")
    ps.add_argument("name", nargs="?")
    ps.set_defaults(func=cmd_presets)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingDiverged as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (OSError, aio.FormatError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
