import csv
import io
import json
import math
import os
import subprocess
import sys

import numpy as np
import pytest

import inertialfb.primal_dual as pd_mod
from inertialfb.cli import (
    TRACE_FIELDS,
    ConfigError,
    ExperimentConfig,
    NumericalBlowUp,
    compare_experiments,
    emit_alpha_curve,
    load_config,
    main,
    run_experiment,
)
from inertialfb.pgm import read_pgm, write_pgm
from inertialfb.splitting import alpha_max_scalar

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))

SMALL = """\
[problem]
kind = {kind}
size = 16
lambda = 10
seed = 3

[solver]
alpha = {alpha}
ratio = 0.1

[stop]
k_max = {k_max}

[output]
dir = {out}
"""


def write_cfg(tmp_path, name="a.ini", kind="rof-saddle-pd", alpha=0.0, k_max=60, out=None):
    out = out or str(tmp_path / name.replace(".ini", ""))
    p = tmp_path / name
    p.write_text(SMALL.format(kind=kind, alpha=alpha, k_max=k_max, out=out))
    return str(p)


def read_trace(path):
    with open(path) as fh:
        return list(csv.reader(fh))


# config ----------------------------------------------------------------------


def test_defaults_and_overrides(tmp_path):
    cfg = load_config(write_cfg(tmp_path), {"alpha": "0.25", "k_max": "7", "timing": "yes"})
    assert cfg.solver["alpha"] == 0.25 and cfg.stop["k_max"] == 7 and cfg.output["timing"] is True
    assert cfg.problem["size"] == 16 and cfg.solver["rho"] == 1.0
    assert cfg.stop["tol"] == 1e-12


@pytest.mark.parametrize(
    "values",
    [
        {"problem": {"kind": "nope"}},
        {"problem": {"lambda": "-1"}},
        {"problem": {"size": "abc"}},
        {"solver": {"alpha": "1.2"}},
        {"solver": {"rho": "1.5", "alpha": "0.2"}},
        {"solver": {"s": "3"}},
        {"solver": {"bogus": "1"}},
        {"extra": {}},
        {"output": {"bits": "12"}},
    ],
)
def test_invalid_configs(values):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(values)


def test_cli_exit_2_messages(tmp_path, capsys):
    cfg = write_cfg(tmp_path)
    assert main(["run", cfg, "--nonsense", "1"]) == 2
    assert "unknown option --nonsense" in capsys.readouterr().err
    assert main(["run", cfg, "--alpha=1.5"]) == 2
    assert "alpha" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.ini")]) == 2
    assert main(["run", cfg, "--step-scale", "1.02"]) == 2
    err = capsys.readouterr().err
    assert "step-size condition violated" in err and "must be < 1" in err


def test_cli_run_and_hyphen_overrides(tmp_path, capsys):
    cfg = write_cfg(tmp_path)
    out = tmp_path / "o"
    assert main(["run", cfg, "--dir", str(out), "--log-stride", "10", "--k_max=30"]) == 0
    assert "iterations=30" in capsys.readouterr().out
    rows = read_trace(out / "trace.csv")
    assert rows[0] == list(TRACE_FIELDS)
    assert [r[0] for r in rows[1:]] == ["10", "20", "30"]
    assert read_pgm(out / "result.pgm").shape == (16, 16)
    assert read_pgm(out / "result_input.pgm").shape == (16, 16)
    s = json.loads((out / "summary.json").read_text())
    assert s["iterations"] == 30 and s["status"] == "validated"


# runs --------------------------------------------------------------------------


def test_trace_schema_and_weak_duality(tmp_path):
    cfg = load_config(write_cfg(tmp_path, alpha=0.2))
    run_experiment(cfg)
    rows = read_trace(cfg.path("trace"))
    assert len(rows) == 61
    data = np.array(rows[1:], dtype=float)
    assert np.array_equal(data[:, 0], np.arange(1, 61))
    assert np.all(data[:, 1] == 0.2)
    assert np.allclose(data[:, 4], data[:, 2] - data[:, 3], rtol=1e-12, atol=1e-9)
    assert np.all(data[:, 4] >= -1e-9)
    assert np.all(np.isnan(data[:, 8]))
    assert np.all(np.diff(data[:, 7]) >= 0)


def test_timing_column(tmp_path):
    cfg = load_config(write_cfg(tmp_path), {"timing": "true", "k_max": "5"})
    run_experiment(cfg)
    ms = np.array(read_trace(cfg.path("trace"))[1:], dtype=float)[:, 8]
    assert np.all(np.isfinite(ms)) and np.all(np.diff(ms) >= 0)


def test_deterministic_traces(tmp_path):
    texts = []
    for name in ("x.ini", "y.ini"):
        cfg = load_config(write_cfg(tmp_path, name=name, alpha=1 / 3))
        run_experiment(cfg)
        texts.append(open(cfg.path("trace"), "rb").read())
    assert texts[0] == texts[1]


def test_stop_at_threshold(tmp_path):
    cfg = load_config(write_cfg(tmp_path, k_max=2000), {"stop_at_threshold": "true", "gap_threshold": "1e-2"})
    s = run_experiment(cfg)
    assert s["iterations_to_threshold"] == s["iterations"] < 2000
    rows = read_trace(cfg.path("trace"))
    assert float(rows[-1][4]) < s["threshold"] <= float(rows[-2][4])


def test_experimental_status(tmp_path):
    cfg = load_config(write_cfg(tmp_path, alpha=0.4, k_max=5))
    s = run_experiment(cfg)
    assert s["status"] == "experimental" and "theorem3" in s["failed_checks"]
    cfg = load_config(write_cfg(tmp_path, k_max=5), {"rho": "1.9"})
    s = run_experiment(cfg)
    assert "relaxation_covered" in s["failed_checks"]


@pytest.mark.parametrize("kind", ["rof-dual-fista", "deconv-explicit", "deconv-splitdual"])
def test_other_kinds_run(tmp_path, kind):
    cfg = load_config(write_cfg(tmp_path, kind=kind, k_max=20), {"reference_iters": "200", "kernel_size": "3"})
    s = run_experiment(cfg)
    assert s["iterations"] == 20 and np.isfinite(s["final"]["gap"] if not isinstance(s["final"]["gap"], str) else 0)


def test_blowup_exit_3_keeps_trace(tmp_path, monkeypatch, capsys):
    real = pd_mod.ipdfb_step

    def faulty(state, prob, cfg, alpha):
        new = real(state, prob, cfg, alpha)
        if new.k == 5:
            bad = new.x_curr.copy()
            bad[0] = np.nan
            return pd_mod.PDState(new.x_prev, bad, new.y_prev, new.y_curr, new.k, new.err_sum)
        return new

    monkeypatch.setattr(pd_mod, "ipdfb_step", faulty)
    cfg = write_cfg(tmp_path)
    with pytest.raises(NumericalBlowUp):
        run_experiment(load_config(cfg))
    assert main(["run", cfg]) == 3
    assert "non-finite" in capsys.readouterr().err
    rows = read_trace(tmp_path / "a" / "trace.csv")
    assert rows[0] == list(TRACE_FIELDS) and [r[0] for r in rows[1:]] == ["1", "2", "3", "4"]


# compare -----------------------------------------------------------------------


def test_compare(tmp_path, capsys):
    a = write_cfg(tmp_path, "a.ini", alpha=0.0, k_max=1500)
    b = write_cfg(tmp_path, "b.ini", alpha=1 / 3, k_max=1500)
    out = tmp_path / "cmp"
    assert main(["compare", a, b, "--out", str(out)]) == 0
    assert "faster: b" in capsys.readouterr().out
    res = json.loads((out / "compare.json").read_text())
    assert res["b"]["iterations_to_threshold"] < res["a"]["iterations_to_threshold"]
    assert (out / "a" / "trace.csv").exists() and (out / "b" / "trace.csv").exists()


def test_compare_mismatch(tmp_path):
    a = load_config(write_cfg(tmp_path, "a.ini"))
    b = load_config(write_cfg(tmp_path, "b.ini"), {"lambda": "5"})
    with pytest.raises(ConfigError, match="lambda"):
        compare_experiments(a, b, str(tmp_path / "c"))
    c = load_config(write_cfg(tmp_path, "c.ini", kind="deconv-explicit"))
    with pytest.raises(ConfigError, match="different problems"):
        compare_experiments(a, c, str(tmp_path / "c"))
    assert main(["compare", write_cfg(tmp_path, "a.ini"), write_cfg(tmp_path, "b.ini"), "--lambda", "-2"]) == 2


# alpha curve ---------------------------------------------------------------------


def test_alpha_curve_values():
    data = emit_alpha_curve(1e-6, 199)
    assert data.shape == (199, 2)
    assert data[99, 0] == 1.0
    assert abs(data[99, 1] - 0.236) < 1e-3
    assert np.all(np.diff(data[:, 1]) < 0)
    assert np.allclose(data[:, 1], [alpha_max_scalar(g, 1e-6) for g in data[:, 0]], rtol=0, atol=1e-15)


def test_alpha_curve_fine_grid():
    # the top grid point is ~2 - 1e-6, which restricts eps to about 5e-7
    with pytest.raises(ConfigError):
        emit_alpha_curve(1e-6, 1999999)
    data = emit_alpha_curve(1e-7, 1999999)
    assert data[0, 0] == pytest.approx(1e-6)
    assert abs(data[0, 1] - 1 / 3) <= 1e-3
    assert data[-1, 1] >= 0


def test_alpha_curve_cli(tmp_path, capsys):
    out = tmp_path / "c.txt"
    assert main(["alpha-curve", "--eps", "1e-6", "--grid", "9", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("#") and len(lines) == 10
    g, a = map(float, lines[5].split())
    assert g == 1.0 and abs(a - 0.236) < 1e-3
    assert main(["alpha-curve", "--grid", "3"]) == 0
    assert len(capsys.readouterr().out.splitlines()) == 4
    assert main(["alpha-curve", "--eps", "0.9", "--grid", "9"]) == 2
    assert main(["alpha-curve", "--grid", "0"]) == 2


# pgm ---------------------------------------------------------------------------


@pytest.mark.parametrize("bits", [8, 16])
def test_pgm_roundtrip(tmp_path, rng, bits):
    img = rng.uniform(0, 1, (7, 11))
    write_pgm(tmp_path / "x.pgm", img, bits)
    back = read_pgm(tmp_path / "x.pgm")
    assert back.shape == (7, 11)
    assert np.abs(back - img).max() <= 0.5 / (2**bits - 1) + 1e-12
    assert not (tmp_path / "x.pgm.tmp").exists()


def test_pgm_header_comments_and_errors(tmp_path):
    raster = bytes([0, 128, 255, 64, 1, 2])
    (tmp_path / "c.pgm").write_bytes(b"P5\n# made by hand\n3 2\n# depth\n255\n" + raster)
    img = read_pgm(tmp_path / "c.pgm")
    assert img.shape == (2, 3) and img[0, 2] == 1.0 and img[0, 1] == pytest.approx(128 / 255)
    (tmp_path / "b.pgm").write_bytes(b"P2\n3 2\n255\n" + raster)
    with pytest.raises(ValueError, match="magic"):
        read_pgm(tmp_path / "b.pgm")
    (tmp_path / "t.pgm").write_bytes(b"P5\n3 2\n255\n" + raster[:4])
    with pytest.raises(ValueError, match="expected 6"):
        read_pgm(tmp_path / "t.pgm")
    with pytest.raises(ValueError):
        write_pgm(tmp_path / "z.pgm", np.zeros(3))


def test_pgm_image_input(tmp_path):
    img = np.linspace(0, 1, 400).reshape(20, 20)
    write_pgm(tmp_path / "in.pgm", img, 16)
    cfg = load_config(write_cfg(tmp_path, k_max=3), {"image": str(tmp_path / "in.pgm"), "noise_sigma": "0"})
    run_experiment(cfg)
    # center crop to 16 x 16
    assert np.allclose(read_pgm(tmp_path / "a" / "result_input.pgm"), img[2:18, 2:18], atol=1 / 255)


# entry point ---------------------------------------------------------------------


def test_shipped_configs_load():
    for name in sorted(os.listdir(os.path.join(ROOT, "configs"))):
        if name.startswith("fig1"):
            continue
        load_config(os.path.join(ROOT, "configs", name))


def test_console_script(tmp_path):
    cmd = [sys.executable, "-m", "inertialfb.cli", "alpha-curve", "--grid", "1"]
    out = subprocess.run(cmd, capture_output=True, text=True, check=True).stdout
    assert out.splitlines()[1].split()[0] == "1.0"
    bad = subprocess.run([sys.executable, "-m", "inertialfb.cli", "run", str(tmp_path / "none.ini")],
                         capture_output=True, text=True)
    assert bad.returncode == 2 and bad.stderr.startswith("error:")


def test_config_keys_unique():
    from inertialfb.cli import KEY_SECTION, SCHEMA

    assert len(KEY_SECTION) == sum(len(v) for v in SCHEMA.values())
