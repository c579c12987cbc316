import csv
import json
import math
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from advlab import bounds
from advlab.cli import main
from advlab.config import ConfigError, dump, load_config, parse_config
from advlab.report import emit_svg, fit_slope, mean_by
from advlab.sweep import COLUMNS, SCHEMA_VERSION, read_numeric, run_single, run_sweep
from advlab.verify import format_report, run_verify

ROOT = Path(__file__).resolve().parents[1]
GOLDEN = Path(__file__).parent / "data" / "golden.svg"

TINY = """
[data]
task = regression_quadratic
d = 1
alpha = 1
J = 4
sigma = 0.1
n_eval = 200

[model]
width_const = 2

[attack]
method = cover
tau_ratio = 0.5

[train]
epochs = 2
batch = 32
lr = 0.1
clamp = 1.0

[sweep]
n_list = 128
seeds = 0
eps_rule = schedule_en
"""


# -- config -------------------------------------------------------------------


def test_defaults_validate():
    cfg = load_config()
    assert cfg.data.task == "regression_quadratic" and cfg.model.K == 4.0


def test_unknown_section_and_key():
    with pytest.raises(ConfigError, match="section"):
        parse_config("[nope]\nx = 1\n")
    with pytest.raises(ConfigError, match="key"):
        parse_config("[data]\nbogus = 1\n")


def test_bad_values():
    with pytest.raises(ConfigError):
        parse_config("[data]\nd = two\n")
    with pytest.raises(ConfigError):
        parse_config("[sweep]\nn_list = 512, 128\n")
    with pytest.raises(ConfigError):
        parse_config("[data]\ntask = other\n")
    with pytest.raises(ValueError):
        parse_config("[attack]\nmethod = cover\nsteps = 0\n")


def test_keys_are_case_sensitive():
    cfg = parse_config("[model]\nK = 9\n[data]\nJ = 3\n")
    assert cfg.model.K == 9.0 and cfg.data.J == 3
    assert dump(cfg)["model"]["K"] == 9.0


@pytest.mark.parametrize("name", ["default.ini", "classification.ini", "sweep_quadratic.ini", "verify.ini"])
def test_shipped_configs_parse(name):
    load_config(ROOT / "configs" / name)


# -- fit_slope and plotting -----------------------------------------------------


def test_fit_slope_exact_power():
    rows = [{"n": x, "y": x**-0.5} for x in (10, 100, 1000, 10_000)]
    slope, _, _ = fit_slope(rows, "n", "y")[None]
    assert slope == pytest.approx(-0.5, abs=1e-12)


def test_fit_slope_noisy_power():
    rng = np.random.default_rng(0)
    xs = [2**k for k in range(7, 13)]
    rows = [{"n": x, "y": 3 * x ** (-2 / 7) * (1 + 0.01 * rng.normal())} for x in xs]
    assert fit_slope(rows, "n", "y")[None][0] == pytest.approx(-2 / 7, abs=0.05)


def test_fit_slope_constant_and_groups():
    rows = [{"n": x, "y": 0.3, "g": "a"} for x in (1, 2, 4)] + [{"n": x, "y": 1 / x, "g": "b"} for x in (1, 2, 4)]
    fits = fit_slope(rows, "n", "y", group="g")
    assert fits[("a",)][0] == 0.0
    assert fits[("b",)][0] == pytest.approx(-1.0)


def test_fit_slope_errors():
    with pytest.raises(ValueError):
        fit_slope([{"n": 1, "y": 1}, {"n": 2, "y": 1}], "n", "y")
    with pytest.warns(UserWarning):
        fit_slope([{"n": x, "y": 1.0 / x} for x in (1, 2, 3)] + [{"n": 4, "y": 0.0}], "n", "y")


def test_fit_slope_reads_csv(tmp_path):
    path = tmp_path / "r.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "y"])
        for x in (10, 20, 40, 10, 20, 40):
            w.writerow([x, 1 / x])
    assert fit_slope(path, "n", "y")[None][0] == pytest.approx(-1.0)
    xs, ys = mean_by(path, "n", "y")
    np.testing.assert_allclose(xs, [10, 20, 40])


def golden_series():
    return [
        {"label": "alpha", "x": [128, 256, 512, 1024], "y": [0.2, 0.15, 0.11, 0.08]},
        {"label": "beta & gamma", "x": [128, 256, 512, 1024], "y": [0.4, 0.33, 0.27, 0.2], "fit": (-0.3, 0.5)},
    ]


def test_svg_single_point(tmp_path):
    emit_svg([{"label": "one", "x": [10], "y": [0.5]}], tmp_path / "p.svg")
    text = (tmp_path / "p.svg").read_text()
    assert text.count("<circle") == 1 and text.startswith("<svg") and "<polyline" not in text


def test_svg_two_series(tmp_path):
    emit_svg(golden_series(), tmp_path / "p.svg", title="t")
    text = (tmp_path / "p.svg").read_text()
    assert text.count("<polyline") == 2 and "beta &amp; gamma" in text


def test_svg_golden(tmp_path):
    out = tmp_path / "p.svg"
    emit_svg(golden_series(), out, title="golden", x_label="n", y_label="risk")
    assert out.read_bytes() == GOLDEN.read_bytes()


def test_svg_rejects_empty(tmp_path):
    with pytest.raises(ValueError):
        emit_svg([{"label": "x", "x": [], "y": []}], tmp_path / "p.svg")


# -- sweeps ---------------------------------------------------------------------


def test_single_run_row():
    cfg = parse_config(TINY)
    row = run_single(cfg, 128, 0)
    assert row["status"] == "ok", row["status"]
    assert row["schema_version"] == SCHEMA_VERSION
    assert row["natural"] <= row["adv_lower"] + 1e-9 <= row["adv_upper"] + 2e-9
    assert row["kappa"] <= row["K"] * (1 + 1e-9)
    assert row["eps"] == pytest.approx(128 ** (-4 / 7), abs=1e-12)
    assert row["eps"] == pytest.approx(bounds.eps_schedule(128, 1, 1, "quadratic"), abs=1e-12)


def test_sweep_artifacts_and_determinism(tmp_path):
    cfg = parse_config(TINY.replace("n_list = 128", "n_list = 64, 128, 256"))
    s1 = run_sweep(cfg, tmp_path / "a")
    run_sweep(cfg, tmp_path / "b")
    assert s1["ok_runs"] == s1["runs"] == 3
    assert read_numeric(tmp_path / "a" / "sweep.csv") == read_numeric(tmp_path / "b" / "sweep.csv")
    header = (tmp_path / "a" / "sweep.csv").read_text().splitlines()[0].split(",")
    assert tuple(header) == COLUMNS
    assert (tmp_path / "a" / "sweep.svg").exists()
    assert json.loads((tmp_path / "a" / "sweep.json").read_text())["theory_slope"] == pytest.approx(-2 / 7)


def test_sweep_budget_guard(tmp_path):
    cfg = parse_config(TINY.replace("seeds = 0", "seeds = 0, 1\nmax_runs = 1"))
    with pytest.raises(ValueError, match="max_runs"):
        run_sweep(cfg, tmp_path)


def test_failed_run_is_recorded():
    cfg = parse_config(TINY.replace("sigma = 0.1", "sigma = 0.9"))
    row = run_single(cfg, 128, 0)
    assert row["status"].startswith("error: AssumptionViolation")


# -- verify and CLI ---------------------------------------------------------------


def test_verify_suites_pass():
    status, report = run_verify(("all",), seed=0, scale=0.2)
    assert status == 0, format_report(report)


def test_verify_fault_injection():
    status, report = run_verify(("feasibility",), faults=("skip_projection",))
    assert status == 1 and not report["feasibility"]["passed"]
    with pytest.raises(ValueError):
        run_verify(("nope",))


def test_cli_verify_single_suite(capsys):
    assert main(["verify", "--suite", "sandwich"]) == 0
    out = capsys.readouterr().out
    assert "sandwich" in out and "kappa " not in out


def test_cli_verify_injected_fault(capsys):
    assert main(["verify", "--suite", "feasibility", "--inject", "skip_projection"]) == 1
    assert "FAIL" in capsys.readouterr().out


def test_cli_rates(capsys):
    assert main(["rates", "--d", "1", "--alpha", "1", "--n", "1024", "--format", "json"]) == 0
    row = json.loads(capsys.readouterr().out)[0]
    assert row["r1"] == "1/5" and row["K_lipschitz"] == "16" and row["WL_lipschitz"] == "8"


def test_cli_train_and_risk_from_checkpoint(tmp_path, capsys):
    cfg = tmp_path / "c.ini"
    cfg.write_text(TINY.replace("n_eval = 200", "n_eval = 200\nn = 64\neps = 0.05"))
    assert main(["train", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "checkpoint.json").exists() and (tmp_path / "history.csv").exists()
    capsys.readouterr()
    assert main(["risk", "--config", str(cfg), "--checkpoint", str(tmp_path / "checkpoint.json"),
                 "--format", "json"]) == 0
    row = json.loads(capsys.readouterr().out)[0]
    assert row["natural"] <= row["adv_lower"] + 1e-9 <= row["adv_upper"] + 2e-9 <= row["w1_upper"] + 3e-9


def test_cli_equiv(tmp_path, capsys):
    cfg = tmp_path / "v.ini"
    cfg.write_text("[verify]\nscale = 0.1\n")
    assert main(["equiv", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "equiv.json").read_text())["failures"] == 0


def test_cli_bad_config(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[oops]\n")
    assert main(["rates", "--config", str(bad)]) == 2
    assert "unknown section" in capsys.readouterr().err


def test_cli_sweep_with_threads(tmp_path):
    cfg = tmp_path / "s.ini"
    cfg.write_text(TINY.replace("n_list = 128", "n_list = 64, 128, 256"))
    proc = subprocess.run([sys.executable, "-m", "advlab.cli", "sweep", "--config", str(cfg), "--out",
                           str(tmp_path / "out"), "--threads", "2", "--format", "json"],
                          capture_output=True, text=True, cwd=tmp_path)
    assert proc.returncode == 0, proc.stderr
    summary = json.loads(proc.stdout)[0]
    assert summary["ok_runs"] == 3 and math.isfinite(summary["slope"])
    single = run_sweep(parse_config(TINY.replace("n_list = 128", "n_list = 64, 128, 256")), tmp_path / "one")
    assert read_numeric(tmp_path / "out" / "sweep.csv") == read_numeric(tmp_path / "one" / "sweep.csv")
    assert single["runs"] == 3
