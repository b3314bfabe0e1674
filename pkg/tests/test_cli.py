import json
import math
from pathlib import Path

import numpy as np
import pytest

from smoothcontact.cli import main, merge_tables
from smoothcontact.errors import ConfigError
from smoothcontact.scenario_file import (apply_overrides, build_formulation, describe_schema,
                                         load_scenario, parse_scenario)
from smoothcontact.scenarios import Table

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"

SCAN = """\
[scenario]
name = scan
type = wall_scan

[formulation]
kind = IPC
d_hat = 0.5

[scan]
samples = 201
"""


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    reports = [json.loads(line) for line in out.splitlines() if line.strip()]
    return code, reports, err


# -- parsing ----------------------------------------------------------------------

def test_parse_defaults():
    cfg = parse_scenario(SCAN)
    assert cfg.name == "scan" and cfg.type == "wall_scan"
    assert cfg.get("scan", "samples") == 201
    assert cfg.get("scan", "length") == 10.0
    assert cfg.get("formulation", "R") == 1.5  # scenario-type default
    form = build_formulation(cfg)
    assert form.kind.value == "IPC" and form.barrier.d_hat == 0.5


@pytest.mark.parametrize("text, line, fragment", [
    (SCAN + "bogus = 1\n", 11, "unknown key 'scan.bogus'"),
    (SCAN + "[nowhere]\n", 11, "unknown section [nowhere]"),
    (SCAN + "just words\n", 11, "expected 'key = value'"),
    (SCAN + "[scan\n", 11, "malformed section header"),
    (SCAN.replace("samples = 201", "samples = many"), 10, "invalid value for 'scan.samples'"),
    (SCAN.replace("kind = IPC", "kind = FEM"), 6, "unknown formulation"),
    ("x = 1\n", 1, "outside of any section"),
    (SCAN + "[scan]\n", 11, "duplicate section"),
])
def test_parse_errors_have_line_numbers(text, line, fragment):
    with pytest.raises(ConfigError) as info:
        parse_scenario(text)
    assert info.value.line == line
    assert str(info.value).startswith(f"line {line}: ")
    assert fragment in str(info.value)


def test_section_must_match_type():
    with pytest.raises(ConfigError, match="does not apply"):
        parse_scenario(SCAN + "[design]\ntheta_B = 0\ntarget_theta_A = 0\n")


def test_missing_required():
    with pytest.raises(ConfigError, match="scenario.type"):
        parse_scenario("[scenario]\nname = x\n")
    with pytest.raises(ConfigError, match="design.target_theta_A"):
        parse_scenario("[scenario]\nname = x\ntype = annulus_inverse\n[design]\ntheta_B = 0\n")


def test_overrides_last_wins():
    cfg = parse_scenario(SCAN)
    apply_overrides(cfg, ["formulation.kind=IMLS", "scan.samples=11", "formulation.kind=NTS"])
    assert cfg.get("formulation", "kind") == "NTS" and cfg.get("scan", "samples") == 11
    with pytest.raises(ConfigError, match="unknown key 'scan.nope'"):
        apply_overrides(cfg, ["scan.nope=1"])
    with pytest.raises(ConfigError, match="section.key=value"):
        apply_overrides(cfg, ["samples"])


def test_repeated_named_sections():
    text = """\
[scenario]
name = d
type = simulate
[body.a]
mesh = box 0.1 0.1 1 1
[body.b]
mesh = box 0.1 0.1 1 1 0.5 0
"""
    cfg = parse_scenario(text)
    assert cfg.sections("body.*") == ["body.a", "body.b"]


def test_schema_lists_every_section():
    text = describe_schema()
    for section in ("[scenario]", "[formulation]", "[body.*]", "[design]"):
        assert section in text


@pytest.mark.parametrize("path", sorted(SCENARIOS.glob("*.scn")))
def test_shipped_scenarios_parse(path):
    assert load_scenario(path).name == path.stem


# -- run / compare ----------------------------------------------------------------

def test_run_scan(tmp_path, capsys):
    scn = tmp_path / "scan.scn"
    scn.write_text(SCAN)
    code, reports, _ = run(["run", str(scn), f"--out-dir={tmp_path}"], capsys)
    assert code == 0 and len(reports) == 1
    r = reports[0]
    assert r["scenario"] == "scan" and r["formulation"] == "IPC" and r["status"] == "ok"
    assert r["flags"]["energy_wall"] is True
    csv = Path(r["outputs"][0]).read_text().splitlines()
    assert csv[0] == "# schema: x[m],energy[J],f_t[N],f_n[N]"
    assert "x,energy,f_t,f_n" in csv


def test_run_is_byte_reproducible(tmp_path, capsys):
    scn = tmp_path / "scan.scn"
    scn.write_text(SCAN)
    run(["run", str(scn), "--out-dir", str(tmp_path / "a")], capsys)
    run(["run", str(scn), "--out-dir", str(tmp_path / "b")], capsys)
    assert (tmp_path / "a/scan.csv").read_bytes() == (tmp_path / "b/scan.csv").read_bytes()


def test_override_reflected_in_report(tmp_path, capsys):
    code, reports, _ = run(["run", str(SCENARIOS / "annulus.scn"), "formulation.kind=IMLS",
                            "sweep.samples=5", f"--out-dir={tmp_path}"], capsys)
    assert code == 0 and reports[0]["formulation"] == "IMLS"
    assert reports[0]["newton_iterations_total"] > 0


def test_env_var_overrides_out_dir(tmp_path, capsys, monkeypatch):
    scn = tmp_path / "scan.scn"
    scn.write_text(SCAN)
    monkeypatch.setenv("SMOOTHCONTACT_OUT", str(tmp_path / "env"))
    run(["run", str(scn), f"--out-dir={tmp_path / 'flag'}"], capsys)
    assert (tmp_path / "env" / "scan.csv").exists()
    assert not (tmp_path / "flag").exists()


def test_malformed_file_exit_1(tmp_path, capsys):
    scn = tmp_path / "bad.scn"
    scn.write_text(SCAN + "oops\n")
    code, reports, err = run(["run", str(scn), f"--out-dir={tmp_path}"], capsys)
    assert code == 1 and reports == []
    assert "line 11" in err
    assert not list(tmp_path.glob("*.csv"))


def test_missing_file_and_bad_arguments(tmp_path, capsys):
    assert main(["run", str(tmp_path / "none.scn")]) == 1
    with pytest.raises(SystemExit) as info:
        main(["run", str(tmp_path / "none.scn"), "--frobnicate"])
    assert info.value.code == 1


def test_solver_failure_exit_2(tmp_path, capsys):
    # node-to-segment contact cannot settle on the kink at a track vertex (theta = 0)
    code, reports, _ = run(["run", str(SCENARIOS / "annulus.scn"), "formulation.kind=NTS",
                            "sweep.samples=3", f"--out-dir={tmp_path}"], capsys)
    assert code == 2
    r = reports[0]
    assert r["status"] == "solver_failure" and "theta_B=0.0" in r["error"]
    assert r["flags"]["completed"] is False
    data = (tmp_path / "annulus.csv").read_text().splitlines()
    assert data[-3].startswith("0.0,nan")


def test_compare_three_formulations(tmp_path, capsys):
    scn = tmp_path / "scan.scn"
    scn.write_text(SCAN)
    code, reports, _ = run(["compare", str(scn), "--formulations=NTS,IPC,IMLS",
                            f"--out-dir={tmp_path}"], capsys)
    assert code == 0 and [r["formulation"] for r in reports] == ["NTS", "IPC", "IMLS"]
    merged = Path(reports[0]["outputs"][0])
    header = merged.read_text().splitlines()
    cols = next(l for l in header if not l.startswith("#")).split(",")
    assert [c for c in cols if c.startswith("energy")] == ["energy_NTS", "energy_IPC",
                                                          "energy_IMLS"]


def test_compare_single_matches_run(tmp_path, capsys):
    scn = tmp_path / "scan.scn"
    scn.write_text(SCAN.replace("kind = IPC", "kind = NTS"))
    run(["run", str(scn), "formulation.kind=IMLS", f"--out-dir={tmp_path / 'run'}"], capsys)
    run(["compare", str(scn), "--formulations=IMLS", f"--out-dir={tmp_path / 'cmp'}"], capsys)
    assert (tmp_path / "run/scan.csv").read_bytes() == (tmp_path / "cmp/scan.csv").read_bytes()


def test_compare_empty_list_is_config_error(tmp_path, capsys):
    scn = tmp_path / "scan.scn"
    scn.write_text(SCAN)
    code, _, err = run(["compare", str(scn), "--formulations="], capsys)
    assert code == 1 and "non-empty" in err


def test_verbose_writes_solver_csv(tmp_path, capsys):
    code, reports, _ = run(["run", str(SCENARIOS / "sliding_block.scn"), "schedule.steps=3",
                            "--verbose", f"--out-dir={tmp_path}"], capsys)
    assert code == 0
    log = (tmp_path / "sliding_block_solver.csv").read_text().splitlines()
    assert log[0] == "step,iteration,energy,grad_norm,alpha,mu"
    assert {row.split(",")[0] for row in log[1:]} == {"0", "1", "2"}


def test_simulate_probe_files(tmp_path, capsys):
    code, reports, _ = run(["run", str(SCENARIOS / "drop.scn"), "schedule.steps=4",
                            f"--out-dir={tmp_path}"], capsys)
    assert code == 0
    names = sorted(Path(p).name for p in reports[0]["outputs"])
    assert names == ["drop_centroid_left.csv", "drop_energy.csv", "drop_vertex_right_0.csv"]
    rows = (tmp_path / "drop_vertex_right_0.csv").read_text().splitlines()
    assert len(rows) == 1 + 2 + 1 + 5  # schema, two meta lines, header, 5 samples


def test_simulate_rejects_bad_probe(tmp_path, capsys):
    code, _, err = run(["run", str(SCENARIOS / "drop.scn"), "outputs.probes=vertex:left:99",
                        f"--out-dir={tmp_path}"], capsys)
    assert code == 1 and "bad vertex index" in err


def test_merge_tables_outer_join():
    a = Table(["k", "v"], ["-", "m"], [[0, 1.0], [1, 2.0]])
    b = Table(["k", "v"], ["-", "m"], [[1, 5.0], [2, 6.0]])
    m = merge_tables([a, b], ["A", "B"])
    assert m.columns == ["k", "v_A", "v_B"]
    assert np.array_equal(m.column("k"), [0, 1, 2])
    assert math.isnan(m.column("v_B")[0]) and m.column("v_B")[1] == 5.0
