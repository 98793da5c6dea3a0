import csv
import io
import json

import numpy as np
import pytest

from gkdv_pinn import io as aio
from gkdv_pinn.cli import main
from gkdv_pinn.config import preset
from gkdv_pinn.network import Architecture, forward, init
from gkdv_pinn.norms import FieldSampler, y_norm
from gkdv_pinn.quadrature import SampleMatrix
from gkdv_pinn.spectral import SpectralGrid, TimeGrid

TINY = {
    "architecture": {"hidden_layers": 1, "width": 5},
    "collocation": {"n_evol": 16, "m_evol": 8, "n_pde": 16, "m_pde": 8},
    "test_grid": {"n": 40, "m": 21},
}


def write_config(tmp_path, name="soliton-k2-c1", n_iter=3, **extra):
    cfg = preset(name)
    d = {**cfg.to_dict(), **TINY, **extra}
    d["optimizer"] = {**d["optimizer"], "n_iter": n_iter, "seeds": [0, 1]}
    path = tmp_path / f"{name}.yaml"
    path.write_text(cfg.with_overrides(**{k: v for k, v in d.items() if k != "name"}).to_yaml())
    return path


def delimited(text):
    body = text.split("# --- begin ---\n", 1)[1].split("# --- end ---", 1)[0]
    return list(csv.DictReader(io.StringIO(body)))


def test_train_writes_artifacts(tmp_path, capsys):
    cfg = write_config(tmp_path)
    out = tmp_path / "run"
    assert main(["train", "--config", str(cfg), "--seed", "0", "--out", str(out), "--quiet"]) == 0
    for name in ("model.ckpt", "history.csv", "metrics.json", "slices.csv", "slices.png", "history.png", "config.yaml"):
        assert (out / name).is_file(), name
    rows = delimited(capsys.readouterr().out)
    assert len(rows) == 1 and float(rows[0]["error_rel"]) >= 0


def test_critical_regularity_rejected_before_training(tmp_path, capsys):
    path = write_config(tmp_path)
    text = path.read_text().replace("regularity: 0.750001", "regularity: 0.75")
    assert "regularity: 0.75\n" in text
    path.write_text(text)
    out = tmp_path / "never"
    assert main(["train", "--config", str(path), "--out", str(out)]) == 2
    assert not out.exists()
    assert capsys.readouterr().err.startswith("error:")


def test_eval_reproduces_train_metrics(tmp_path, capsys):
    cfg = write_config(tmp_path, "soliton-k3-c1")
    out = tmp_path / "run"
    main(["train", "--config", str(cfg), "--seed", "1", "--out", str(out), "--quiet", "--no-plots"])
    capsys.readouterr()
    assert main(["eval", "--config", str(cfg), "--checkpoint", str(out / "model.ckpt")]) == 0
    got = json.loads(capsys.readouterr().out)
    want = json.loads((out / "metrics.json").read_text())
    for key in ("A_tilde", "A", "L", "error_Y", "error_LinfHs", "error_rel", "loss", "loss_evol", "loss_pde"):
        assert got[key] == pytest.approx(want[key], rel=1e-12, abs=1e-300), key


def test_train_is_deterministic_modulo_wall_time(tmp_path):
    cfg = write_config(tmp_path, "kink-1")
    metrics = []
    for d in ("a", "b"):
        main(["train", "--config", str(cfg), "--seed", "2", "--out", str(tmp_path / d), "--quiet", "--no-plots"])
        m = json.loads((tmp_path / d / "metrics.json").read_text())
        m.pop("seconds")
        metrics.append(m)
    assert metrics[0] == metrics[1]


def test_eval_zero_network_and_arch_mismatch(tmp_path, capsys):
    cfg = write_config(tmp_path, "soliton-k3-c1")
    p = init(Architecture(1, 5), 0)
    p.weights = [np.zeros_like(w) for w in p.weights]
    p.biases = [np.zeros_like(b) for b in p.biases]
    aio.save_checkpoint(tmp_path / "zero.ckpt", p, {"seed": 0})
    assert main(["eval", "--config", str(cfg), "--checkpoint", str(tmp_path / "zero.ckpt")]) == 0
    assert json.loads(capsys.readouterr().out)["error_rel"] == pytest.approx(1.0)
    aio.save_checkpoint(tmp_path / "other.ckpt", init(Architecture(2, 3), 0), {})
    assert main(["eval", "--config", str(cfg), "--checkpoint", str(tmp_path / "other.ckpt")]) == 2


def test_eval_warm_started_breather(tmp_path, capsys):
    # random features with a least-squares output layer fitted to the exact breather
    path = write_config(tmp_path, "breather-1-0p5")
    cfg = preset("breather-1-0p5").with_overrides(**{**TINY, "architecture": {"hidden_layers": 1, "width": 200}})
    path.write_text(cfg.to_yaml())
    arch = cfg.arch
    p = init(arch, 0)
    rng = np.random.default_rng(0)
    p.weights[0] = np.column_stack([rng.normal(0, 1.5, 200), rng.normal(0, 1.0, 200)])
    p.biases[0] = rng.uniform(-20, 20, 200)
    p.wavelets[0] = (1.0, 0.0, 0.3)
    tg, sg = TimeGrid(cfg.T, 41), SpectralGrid(cfg.R, 160)
    t, x = np.meshgrid(tg.points, sg.points, indexing="ij")
    hidden = init(arch, 0)
    feats = []
    for j in range(200):
        hidden.weights[1] = np.eye(1, 200, j)
        hidden.weights[0], hidden.biases[0], hidden.wavelets = p.weights[0], p.biases[0], p.wavelets
        feats.append(forward(hidden, t, x).ravel())
    F = np.column_stack(feats + [np.ones(t.size)])
    coef, *_ = np.linalg.lstsq(F, np.real(cfg.solution(t, x)).ravel(), rcond=None)
    p.weights[1], p.biases[1] = coef[None, :200], coef[200:]
    aio.save_checkpoint(tmp_path / "warm.ckpt", p, {"seed": 0})
    assert main(["eval", "--config", str(path), "--checkpoint", str(tmp_path / "warm.ckpt")]) == 0
    got = json.loads(capsys.readouterr().out)["error_rel"]
    # independent comparison of the two fields on the test grid
    tt, xx = np.meshgrid(TimeGrid(cfg.T, cfg.m_test).points, SpectralGrid(cfg.R, cfg.n_test).points, indexing="ij")
    ue, up = np.real(cfg.solution(tt, xx)), forward(p, tt, xx)
    direct = np.sqrt(np.sum((ue - up) ** 2) / np.sum(ue**2))
    assert got == pytest.approx(direct, rel=1e-10)
    assert got < 0.5


def test_multi_seed_jobs_and_table(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("GKDV_OUTPUT_ROOT", str(tmp_path / "root"))
    cfg = write_config(tmp_path, "soliton-k2-c1", n_iter=2)
    assert main(["train", "--config", str(cfg), "--seeds", "0,1", "--jobs", "2", "--quiet", "--no-plots"]) == 0
    base = tmp_path / "root" / "soliton-k2-c1"
    assert (base / "seed-0" / "metrics.json").is_file() and (base / "seed-1" / "metrics.json").is_file()
    capsys.readouterr()
    assert main(["table", str(base)]) == 0
    rows = delimited(capsys.readouterr().out)
    assert [r["run"] for r in rows[-2:]] == ["mean", "best"] and len(rows) == 4
    errs = [float(r["error_rel"]) for r in rows[:2]]
    assert float(rows[2]["error_rel"]) == pytest.approx(np.mean(errs), rel=1e-6)
    assert float(rows[3]["error_rel"]) == pytest.approx(min(errs), rel=1e-6)


def test_table_single_run_columns(tmp_path, capsys):
    cfg = write_config(tmp_path)
    main(["train", "--config", str(cfg), "--seed", "0", "--out", str(tmp_path / "r"), "--quiet", "--no-plots"])
    capsys.readouterr()
    assert main(["table", str(tmp_path / "r")]) == 0
    rows = delimited(capsys.readouterr().out)
    assert len(rows[0]) == 9  # run label plus eight metric columns
    assert main(["table", str(tmp_path / "r"), "--format", "markdown"]) == 0
    assert capsys.readouterr().out.startswith("| run | A_tilde |")


def test_table_errors(tmp_path):
    assert main(["table"]) == 2
    assert main(["table", str(tmp_path / "missing")]) == 4


def test_refsolve_and_blowup(tmp_path, capsys):
    cfg = write_config(tmp_path, "soliton-k2-c1")
    out = tmp_path / "ref"
    assert main(["refsolve", "--config", str(cfg), "--dt", "1e-3", "--n", "512", "--t-end", "1",
                 "--out", str(out), "--no-plots"]) == 0
    rows = delimited(capsys.readouterr().out)
    assert float(rows[-1]["t"]) == pytest.approx(1.0)
    assert float(rows[-1]["rel_l2_vs_exact"]) <= 1e-4
    times, fields, model = aio.load_trajectory(out / "trajectory.traj")
    assert times[-1] == pytest.approx(1.0) and model.k == 2
    bad = write_config(tmp_path, "soliton-k5-c3")
    assert main(["refsolve", "--config", str(bad), "--dt", "0.2", "--n", "256", "--t-end", "40",
                 "--out", str(tmp_path / "boom"), "--no-plots"]) == 3


def test_norms_command(tmp_path, capsys):
    tg, sg = TimeGrid(1.0, 5), SpectralGrid(np.pi, 32)
    u = np.sin(sg.points)[None, :] * np.cos(tg.points)[:, None]
    aio.save_samples(tmp_path / "s.bin", SampleMatrix(u, tg, sg))
    assert main(["norms", "--samples", str(tmp_path / "s.bin"), "--k", "3"]) == 0
    rep = json.loads(capsys.readouterr().out)
    want = y_norm(3, 0.25, FieldSampler.from_values(u, 0.25, tg, sg)).total
    assert rep["total"] == pytest.approx(want, rel=1e-12)
    assert main(["norms", "--samples", str(tmp_path / "s.bin"), "--k", "2", "--s", "0.75"]) == 2


def test_presets_and_usage(capsys):
    assert main(["presets"]) == 0
    assert "soliton-k3-c1" in capsys.readouterr().out.split()
    assert main(["presets", "kink-1"]) == 0
    assert "lam: 1.0" in capsys.readouterr().out
    assert main(["train"]) == 2
    assert main(["bogus"]) == 2
    assert main(["train", "--preset", "nope"]) == 2
