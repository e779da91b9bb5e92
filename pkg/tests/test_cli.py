"""End-to-end checks of the command-line front end.

All runs go through cli.main(argv) in process; outputs land under
tmp_path via a run.prefix override.
"""

import csv
import json
import math

import pytest

from thinlab import cli

THIN_CFG = """\
[model]
kind = "stable"
alpha = 1.0

[set]
kind = "power_law"
gamma = 2.0

[criterion]
kind = "skbm_integral"

[run]
n_max = 24
seed = 3
"""

INCONCLUSIVE_CFG = """\
[model]
kind = "geometric_stable"
alpha = 1.5

[set]
kind = "log_corrected"
beta = 0.35
level = 2

[criterion]
kind = "subgraph_skbm"
"""

GREEN_CFG = """\
[model]
kind = "stable"
alpha = 1.0

[domain]
kind = "half_space"
dim = 3

[green]
x = [0.0, 0.0, 1.0]
y = [0.0, 0.0, 1.0]
"""

SCAN_CFG = """\
[model]
kind = "stable"
alpha = 1.5

[criterion]
kind = "killed_stable_integral"

[scan]
family = "power_law"
lo = 1.0
hi = 1.4
resolution = 0.05

[run]
n_max = 24
"""

SIM_CFG = """\
[model]
kind = "stable"
alpha = 1.0

[domain]
kind = "half_space"
dim = 3

[mc]
x = [0.0, 0.0, 1.0]
cell_center = [0.0, 0.0, 2.0]
step = 0.05
horizon = 4.0
n_paths = 400
seed = 11
"""


def run_cli(tmp_path, subcommand, cfg_text, *overrides, name="cfg"):
    cfg = tmp_path / f"{name}.toml"
    cfg.write_text(cfg_text)
    prefix = tmp_path / f"{name}-out"
    argv = [subcommand, "--config", str(cfg),
            "--set", f"run.prefix={prefix}"]
    for entry in overrides:
        argv += ["--set", entry]
    code = cli.main(argv)
    return code, prefix


def load_report(prefix):
    with open(f"{prefix}.report.json", encoding="utf-8") as handle:
        return json.load(handle)


def load_rows(prefix):
    with open(f"{prefix}.terms.csv", encoding="utf-8", newline="") as handle:
        return list(csv.reader(handle))


# ---------------------------------------------------------------------------
# configuration handling


def test_override_reuses_toml_value_grammar(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text("[a]\nx = 1\n")
    out = cli.load_config(str(cfg), [
        "a.x=2.5", "a.flag=true", "a.name=stable",
        "a.coords=[1.0, 2.0]", "b.deep.k=7"])
    assert out["a"]["x"] == 2.5
    assert out["a"]["flag"] is True
    assert out["a"]["name"] == "stable"
    assert out["a"]["coords"] == [1.0, 2.0]
    assert out["b"]["deep"]["k"] == 7


def test_override_without_equals_rejected(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text("")
    with pytest.raises(cli.CLIError):
        cli.load_config(str(cfg), ["novalue"])


def test_override_through_scalar_rejected(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text("[a]\nx = 1\n")
    with pytest.raises(cli.CLIError):
        cli.load_config(str(cfg), ["a.x.y=2"])


def test_usage_errors_exit_3(capsys):
    # argparse failures may not collide with the Inconclusive code 2
    assert cli.main([]) == 3
    assert cli.main(["bogus"]) == 3
    assert cli.main(["thinness"]) == 3
    assert "error:" in capsys.readouterr().err


def test_help_exits_0(capsys):
    assert cli.main(["--help"]) == 0
    assert "thinness" in capsys.readouterr().out


def test_missing_config_exits_3(tmp_path, capsys):
    code = cli.main(["thinness", "--config", str(tmp_path / "absent.toml")])
    assert code == 3
    assert "error:" in capsys.readouterr().err


def test_invalid_toml_exits_3(tmp_path, capsys):
    cfg = tmp_path / "bad.toml"
    cfg.write_text("not [ valid\n")
    code = cli.main(["thinness", "--config", str(cfg)])
    assert code == 3
    assert "error:" in capsys.readouterr().err


def test_unknown_model_kind_exits_3(tmp_path, capsys):
    code, _ = run_cli(tmp_path, "thinness", THIN_CFG, "model.kind=cauchy")
    assert code == 3
    assert "model kind" in capsys.readouterr().err


def test_missing_required_key_exits_3(tmp_path, capsys):
    cfg = tmp_path / "c.toml"
    cfg.write_text("[model]\nkind = \"stable\"\n")
    code = cli.main(["phi", "--config", str(cfg)])
    assert code == 3
    assert "alpha" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# exit codes


def test_thinness_thin_exits_0(tmp_path):
    code, prefix = run_cli(tmp_path, "thinness", THIN_CFG)
    assert code == 0
    assert load_report(prefix)["result"]["verdict"] == "Thin"


def test_thinness_notthin_exits_1(tmp_path):
    code, prefix = run_cli(tmp_path, "thinness", THIN_CFG, "set.gamma=1.0")
    assert code == 1
    assert load_report(prefix)["result"]["verdict"] == "NotThin"


def test_thinness_inconclusive_exits_2(tmp_path):
    code, prefix = run_cli(tmp_path, "thinness", INCONCLUSIVE_CFG)
    assert code == 2
    report = load_report(prefix)["result"]
    assert report["verdict"] == "Inconclusive"
    assert report["fit"]["decided_by"] == "loglog"


def test_green_on_diagonal_exits_3(tmp_path, capsys):
    code, _ = run_cli(tmp_path, "green", GREEN_CFG)
    assert code == 3
    assert "on-diagonal Green value is infinite" in capsys.readouterr().err


def test_green_off_diagonal_exits_0(tmp_path):
    code, prefix = run_cli(tmp_path, "green", GREEN_CFG,
                           "green.y=[0.0, 0.0, 2.0]")
    assert code == 0
    report = load_report(prefix)
    assert report["result"]["green"]["value"] == pytest.approx(0.04503, rel=1e-3)
    # override must be visible in the echoed configuration
    assert report["config"]["green"]["y"] == [0.0, 0.0, 2.0]


# ---------------------------------------------------------------------------
# output files


def test_thinness_csv_matches_report(tmp_path):
    _, prefix = run_cli(tmp_path, "thinness", THIN_CFG)
    report = load_report(prefix)["result"]
    rows = load_rows(prefix)
    assert rows[0] == ["n", "term", "partial_sum"]
    body = rows[1:]
    assert len(body) == len(report["terms"])
    assert int(body[0][0]) == report["n_start"]
    for row, term in zip(body, report["terms"]):
        assert float(row[1]) == pytest.approx(term, rel=1e-12)
    assert float(body[-1][2]) == pytest.approx(report["partial_sum"], rel=1e-9)


def test_report_is_deterministic_modulo_timestamp(tmp_path):
    _, p1 = run_cli(tmp_path, "thinness", THIN_CFG, name="first")
    _, p2 = run_cli(tmp_path, "thinness", THIN_CFG, name="second")
    a = load_report(p1)
    b = load_report(p2)
    a.pop("generated_at")
    b.pop("generated_at")
    # prefixes differ only in the echoed config and that is expected
    a["config"]["run"].pop("prefix")
    b["config"]["run"].pop("prefix")
    assert a == b


def test_report_round_trips_through_json(tmp_path):
    _, prefix = run_cli(tmp_path, "thinness", THIN_CFG)
    text = open(f"{prefix}.report.json", encoding="utf-8").read()
    parsed = json.loads(text)
    assert json.loads(json.dumps(parsed, sort_keys=True)) == parsed
    assert parsed["seed"] == 3
    assert parsed["subcommand"] == "thinness"


def test_nonfinite_floats_are_sanitized(tmp_path):
    # the ratio-stage fit leaves the unused exponents as nan; JSON must
    # carry them as null without smuggling bare NaN tokens
    _, prefix = run_cli(tmp_path, "thinness", THIN_CFG)
    text = open(f"{prefix}.report.json", encoding="utf-8").read()
    assert "NaN" not in text
    assert "Infinity" not in text
    fit = json.loads(text)["result"]["fit"]
    assert fit["decided_by"] == "ratio"
    assert fit["p"] is None


# ---------------------------------------------------------------------------
# remaining subcommands end to end


def test_scan_brackets_killed_threshold(tmp_path):
    code, prefix = run_cli(tmp_path, "scan", SCAN_CFG)
    assert code == 0
    result = load_report(prefix)["result"]
    lo, hi = result["bracket"]
    # the flat profile itself sits on the divergent side, so the bracket
    # pins its lower edge at the family floor
    assert lo == pytest.approx(1.0, abs=1e-12)
    assert hi - lo <= 0.05 + 1e-12
    rows = load_rows(prefix)
    assert rows[0] == ["param", "verdict"]
    verdicts = {row[1] for row in rows[1:]}
    assert verdicts <= {"Thin", "NotThin", "Inconclusive"}


def test_simulate_writes_estimate_and_path(tmp_path, monkeypatch):
    monkeypatch.setenv("THINLAB_THREADS", "1")
    code, prefix = run_cli(tmp_path, "simulate", SIM_CFG)
    assert code == 0
    result = load_report(prefix)["result"]
    assert result["workers"] == 1
    assert result["estimate"]["value"] >= 0.0
    assert result["estimate"]["n_batches"] >= 20
    assert 0.0 < result["horizon_tail_bound"] < 1.0
    rows = load_rows(prefix)
    assert rows[0] == ["step", "time", "x0", "x1", "x2", "alive"]
    assert [float(c) for c in rows[1][1:5]] == [0.0, 0.0, 0.0, 1.0]


def test_simulate_rejects_bad_thread_env(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("THINLAB_THREADS", "0")
    code, _ = run_cli(tmp_path, "simulate", SIM_CFG)
    assert code == 3
    assert "THINLAB_THREADS" in capsys.readouterr().err


def test_compare_reports_all_three_processes(tmp_path):
    cfg = THIN_CFG + "\n[compare]\nalpha = 1.5\n"
    code, prefix = run_cli(tmp_path, "compare", cfg)
    assert code == 0
    result = load_report(prefix)["result"]
    assert result["censored"] == "Thin"
    assert result["killed_stable"] == "Thin"
    assert result["skbm"] == "Thin"
    assert len(result["reports"]) == 3
    labels = {row[0] for row in load_rows(prefix)[1:]}
    assert len(labels) == 3


def test_phi_tabulates_grid(tmp_path):
    cfg = "[model]\nkind = \"stable\"\nalpha = 1.0\n[phi]\npoints = 17\n"
    code, prefix = run_cli(tmp_path, "phi", cfg)
    assert code == 0
    rows = load_rows(prefix)
    assert rows[0] == ["lam", "phi", "phi_prime"]
    assert len(rows) == 18
    lam, phi, _ = (float(c) for c in rows[1])
    assert phi == pytest.approx(math.sqrt(lam), rel=1e-12)


def test_whitney_summary_counts(tmp_path):
    cfg = ("[domain]\nkind = \"half_space\"\ndim = 2\n"
           "[whitney]\nlo = [-0.5, 0.0]\nhi = [0.5, 1.0]\n"
           "max_generation = 5\n")
    code, prefix = run_cli(tmp_path, "whitney", cfg)
    assert code == 0
    result = load_report(prefix)["result"]
    assert result["n_kept"] >= 1
    assert result["n_cubes"] == sum(result["status_counts"].values())
    rows = load_rows(prefix)
    assert rows[0][:4] == ["generation", "side", "dist", "status"]
    assert len(rows) == result["n_cubes"] + 1


def test_energy_reports_cube_terms(tmp_path):
    cfg = ("[model]\nkind = \"stable\"\nalpha = 1.0\n"
           "[energy]\nboxes = [[[0.1, 0.0, 0.05], [0.15, 0.05, 0.1]]]\n")
    code, prefix = run_cli(tmp_path, "energy", cfg)
    assert code == 0
    result = load_report(prefix)["result"]
    assert result["value"] > 0.0
    assert len(result["cube_terms"]) == 1
    rows = load_rows(prefix)
    assert float(rows[1][1]) == pytest.approx(result["value"], rel=1e-12)


def test_assume_lists_every_check(tmp_path):
    cfg = "[model]\nkind = \"geometric_stable\"\nalpha = 1.5\n"
    code, prefix = run_cli(tmp_path, "assume", cfg)
    assert code == 0
    result = load_report(prefix)["result"]
    rows = load_rows(prefix)
    assert len(rows) - 1 == len(result["results"])
    statuses = {row[1] for row in rows[1:]}
    assert statuses <= {"pass", "fail", "not_applicable"}
