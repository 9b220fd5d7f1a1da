import csv
import io
import json

import numpy as np
import pytest

from optoent.cli import (
    ConfigError,
    emit_plot_data,
    load_config,
    main,
    run_sweep,
    sweep_points,
    write_outputs,
)
from optoent.model import TWO_PI

SWEEP = """
task = "sweep"
partition = "adiabatic"

[system]
preset = "free-mass"
omega_q_over_omega_f = 1.0

[noise]
family = "white"
omega_f_hz = 100.0
x_over_f = 1.5

[grid]
dt = 1e-3
duration = 4e-3

[sweep]
axes = [
    {name = "system.omega_q_over_omega_f", linspace = [0.5, 2.0, 10]},
    {name = "noise.x_over_f", linspace = [0.3, 3.0, 10]},
]
"""


def _config(tmp_path, text=SWEEP, name="job.toml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_defaults_and_hz_conversion(tmp_path):
    cfg = load_config(_config(tmp_path)).validate()
    assert cfg.task == "sweep" and cfg.partition == "adiabatic"
    from optoent.cli import build_noise, build_system
    noise = build_noise(cfg.data)
    assert noise.omega_f == pytest.approx(TWO_PI * 100.0)
    assert noise.omega_x == pytest.approx(1.5 * TWO_PI * 100.0)
    assert build_system(cfg.data).omega_q == pytest.approx(TWO_PI * 100.0)


@pytest.mark.parametrize("text", [
    'partition = "left"',
    '[noise]\nfamily = "pink"',
    '[system]\npreset = "free-mass"',
    'task = "sweep"',
    '[noise]\nfamily = "ligo"\nalpha_f9 = 1.0',
    'task = [',
])
def test_config_errors_exit_2(tmp_path, text, capsys):
    rc = main(["negativity", "--config", _config(tmp_path, text), "--out", str(tmp_path / "o")])
    if 'task = "sweep"' in text:
        rc = main(["sweep", "--config", _config(tmp_path, text), "--out", str(tmp_path / "o")])
    assert rc == 2
    assert "config error" in capsys.readouterr().err


def test_unknown_task_rejected():
    with pytest.raises(ConfigError):
        load_config(None, {"task": "nope"}).validate()


def test_sweep_points_row_major(tmp_path):
    pts = list(sweep_points(load_config(_config(tmp_path))))
    assert len(pts) == 100
    first, second = pts[0][0], pts[1][0]
    assert first["system.omega_q_over_omega_f"] == second["system.omega_q_over_omega_f"]
    assert first["noise.x_over_f"] < second["noise.x_over_f"]


def test_parallel_matches_serial_and_is_reproducible(tmp_path):
    outs = {}
    for workers, name in ((1, "serial"), (2, "parallel"), (1, "again")):
        cfg = load_config(_config(tmp_path), {"workers": workers,
                                              "output": {"dir": str(tmp_path / name)}})
        records = run_sweep(cfg)
        assert len(records) == 100 and all(r["error"] is None for r in records)
        write_outputs(cfg, records)
        outs[name] = (tmp_path / name / "summary.json").read_bytes()
    assert outs["serial"] == outs["parallel"] == outs["again"]
    verdicts = {r["verdict"] for r in json.loads(outs["serial"])["records"]}
    assert verdicts == {"Entangled", "Separable"}


def test_cache_is_reused(tmp_path):
    cfg = load_config(_config(tmp_path), {"output": {"dir": str(tmp_path / "o")},
                                          "sweep": {"axes": [{"name": "noise.x_over_f",
                                                              "values": [1.0, 2.0]}]}})
    first = run_sweep(cfg)
    second = run_sweep(cfg)
    assert [r["seconds"] for r in first] == [r["seconds"] for r in second]
    forced = run_sweep(cfg, force=True)
    assert [r["lambda_N"] for r in forced] == [r["lambda_N"] for r in first]


def test_cli_sweep_writes_tables(tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["sweep", "--config", _config(tmp_path), "--out", str(out)]) == 0
    rows = list(csv.DictReader(io.StringIO((out / "plot_contour.csv").read_text())))
    assert len(rows) == 100
    assert (out / "records.jsonl").read_text().count("\n") == 100


def test_emit_plot_data_flags_undecidable():
    recs = [
        {"axes": {"a": 2.0}, "E_N": 0.5, "lambda_B": 1e-3, "lambda_N": -1e-2, "verdict": "Entangled"},
        {"axes": {"a": 1.0}, "E_N": 0.7, "lambda_B": -1e-2, "lambda_N": -1e-2, "verdict": "Undecidable"},
        {"axes": {"a": 3.0}, "E_N": None, "lambda_B": None, "lambda_N": None, "verdict": None},
    ]
    rows = list(csv.DictReader(io.StringIO(emit_plot_data(recs, "line"))))
    assert [r["a"] for r in rows] == ["1.0", "2.0", "3.0"]
    assert rows[0]["E_N"] == "" and rows[0]["undecidable"] == "1"
    assert rows[1]["E_N"] == "0.5" and rows[1]["undecidable"] == "0"
    assert rows[2]["verdict"] == "failed"
    with pytest.raises(ConfigError):
        emit_plot_data(recs, "contour")
    assert emit_plot_data([], "line") == ""


def test_negativity_and_mode_tasks(tmp_path, capsys):
    text = SWEEP.replace('task = "sweep"', 'task = "negativity"').replace("duration = 4e-3",
                                                                           "duration = 2e-2")
    out = tmp_path / "o"
    assert main(["negativity", "--config", _config(tmp_path, text), "--out", str(out)]) == 0
    rec = json.loads(capsys.readouterr().out)
    assert rec["verdict"] == "Entangled"
    assert main(["mode", "--config", _config(tmp_path, text), "--out", str(out)]) == 0
    lines = (out / "mode.csv").read_text().splitlines()
    assert lines[0].startswith("t,") and len(lines) == 21


def test_convergence_task(tmp_path, capsys):
    text = SWEEP.replace('task = "sweep"', 'task = "convergence"') + \
        '\n[convergence]\ndts = [2e-3, 1e-3, 5e-4]\n'
    out = tmp_path / "o"
    assert main(["convergence", "--config", _config(tmp_path, text), "--out", str(out),
                 "--duration", "8e-3"]) == 0
    lines = (out / "convergence.csv").read_text().splitlines()
    assert lines[0] == "dt,lambda_B,lambda_N,error" and len(lines) == 4
    assert "converged" in json.loads((out / "summary.json").read_text())


def test_fit_task(tmp_path, capsys):
    from optoent.spectra import LigoParam, force_spectrum
    f = np.geomspace(0.01, 10.0, 100)
    psd = force_spectrum(LigoParam.aligo(alpha_f1=2.0), TWO_PI * f)
    table = tmp_path / "psd.csv"
    table.write_text("frequency_hz,psd\n" + "".join(f"{a},{b}\n" for a, b in zip(f, psd)))
    text = 'task = "fit"\n[fit]\nfree = ["alpha_f1"]\n'
    out = tmp_path / "o"
    assert main(["fit", str(table), "--config", _config(tmp_path, text), "--out", str(out)]) == 0
    d = json.loads((out / "fit.json").read_text())
    assert d["alpha_F1"] == pytest.approx(2.0, rel=1e-6)


def test_self_check_passes(capsys):
    assert main(["self-check"]) == 0
    assert "FAIL" not in capsys.readouterr().out
