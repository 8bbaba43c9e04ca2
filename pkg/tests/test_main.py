from __future__ import annotations

import json

import pandas as pd
import pytest

from src.acdc_poset.main import main, parse_args


@pytest.fixture
def p2p_path(data_dir):
    return str(data_dir / "point_to_point.json")


def _write(path, payload) -> str:
    path.write_text(json.dumps(payload), encoding="utf-8")
    return str(path)


def test_subcommand_is_required():
    with pytest.raises(SystemExit):
        parse_args([])


def test_analyze(capsys, p2p_path):
    assert main(["analyze", p2p_path]) == 0
    out = capsys.readouterr().out
    assert "AC subgrids: 1" in out
    assert "Structure: LeaderFollower, leader = DC1" in out


def test_count_orientations(capsys, data_dir):
    assert main(["count-orientations", str(data_dir / "fig_acyclic.json"), "--enumerate"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "392"
    assert out[1] == "Enumeration: 392 (agrees)"


def test_orient_writes_document_and_manifest(tmp_path, capsys):
    grid = _write(
        tmp_path / "free.json",
        {
            "ac_buses": [1, 4],
            "dc_buses": [2, 3],
            "ac_lines": [[1, 4]],
            "dc_lines": [[2, 3]],
            "converters": [{"id": "VSC1", "ac_bus": 1, "dc_bus": 2}, {"id": "VSC2", "ac_bus": 4, "dc_bus": 3}],
        },
    )
    out = tmp_path / "out" / "oriented.json"
    assert main(["orient", grid, "--strategy", "dc_first", "--out", str(out)]) == 0
    doc = json.loads(out.read_text(encoding="utf-8"))
    assert [c["orientation"] for c in doc["converters"]] == ["dc_to_ac", "dc_to_ac"]
    manifest = json.loads((out.parent / "manifest.json").read_text(encoding="utf-8"))
    assert manifest["command"] == "orient"
    assert manifest["outputs"] == [str(out)]


def test_cyclic_orientation_exits_with_orientation_code(tmp_path, capsys):
    grid = _write(
        tmp_path / "cyclic.json",
        {
            "ac_buses": [1, 4],
            "dc_buses": [2, 3],
            "ac_lines": [[1, 4]],
            "dc_lines": [[2, 3]],
            "converters": [
                {"id": "VSC1", "ac_bus": 1, "dc_bus": 2, "orientation": "ac_to_dc"},
                {"id": "VSC2", "ac_bus": 4, "dc_bus": 3, "orientation": "dc_to_ac"},
            ],
        },
    )
    assert main(["analyze", grid]) == 3
    assert capsys.readouterr().err.startswith("error:")


def test_missing_and_malformed_inputs(tmp_path, capsys):
    assert main(["analyze", str(tmp_path / "nope.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{", encoding="utf-8")
    assert main(["analyze", str(bad)]) == 2


def test_build_ss_needs_params(tmp_path, data_dir):
    assert main(["build-ss", str(data_dir / "fig_acyclic.json"), "--out", str(tmp_path / "ss.json")]) == 2


def test_build_ss(tmp_path, capsys, p2p_path):
    out = tmp_path / "ss.json"
    assert main(["build-ss", p2p_path, "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "State space: 7 states, 2 inputs" in text
    assert "Poset-causal structure check: PASS" in text
    assert "P22 structure check: PASS" in text
    assert json.loads(out.read_text(encoding="utf-8"))["input_labels"] == ["VSC1", "VSC2"]


def test_synthesize_simulate_verify(tmp_path, capsys, p2p_path):
    central = tmp_path / "central.json"
    assert main(["synthesize", p2p_path, "--out", str(central)]) == 0
    assert (tmp_path / "central_report.json").exists()
    # a dense centralized gain reaches upstream of the DC subgrid
    assert main(["verify", p2p_path, "--controller", str(central)]) == 4

    lf = tmp_path / "lf.json"
    args = ["synthesize", p2p_path, "--mode", "leader-follower", "--leader", "DC1", "--leader-inputs", "VSC1", "--out", str(lf)]
    assert main(args) == 0
    capsys.readouterr()
    assert main(["verify", p2p_path, "--controller", str(lf)]) == 0
    assert "PASS" in capsys.readouterr().out

    x0 = _write(tmp_path / "x0.json", {"omega[1]": 0.1})
    trace = tmp_path / "trace.csv"
    argv = ["simulate", p2p_path, "--controller", str(lf), "--x0", x0, "--dt", "0.001", "--horizon", "1", "--out", str(trace)]
    assert main(argv) == 0
    frame = pd.read_csv(trace)
    assert len(frame) == 1001
    assert frame["omega[1]"].iloc[0] == 0.1
    assert (tmp_path / "trace_metrics.csv").exists()


def test_leader_follower_without_leader(tmp_path, p2p_path):
    assert main(["synthesize", p2p_path, "--mode", "leader-follower", "--out", str(tmp_path / "k.json")]) == 2


def test_simulate_rejects_unknown_state(tmp_path, p2p_path):
    x0 = _write(tmp_path / "x0.json", {"omega[9]": 0.1})
    assert main(["simulate", p2p_path, "--x0", x0, "--out", str(tmp_path / "t.csv")]) == 2


def test_dq_couplings(capsys):
    assert main(["dq-couplings", "--variant", "BetaSub"]) == 0
    out = capsys.readouterr().out
    assert "Variant: BetaSub" in out
    assert "Partition: OneWayAcToDc" in out
    assert main(["dq-couplings", "--variant", "Timescale", "--loops", "dc_voltage"]) == 0
    out = capsys.readouterr().out
    assert "v_dc -> i_d (loop)" in out
    assert "Partition: OneWayDcToAc" in out


def test_export_dot(capsys, p2p_path):
    assert main(["export-dot", p2p_path]) == 0
    assert capsys.readouterr().out.startswith('digraph "point_to_point"')


def test_test_system_document_analyzes_as_leader_follower(tmp_path, capsys):
    out = tmp_path / "mtdc.json"
    assert main(["test-system", "--out", str(out)]) == 0
    assert "25 states, 8 inputs" in capsys.readouterr().out
    assert main(["analyze", str(out)]) == 0
    assert "Group structure: LeaderFollower, leader = leader" in capsys.readouterr().out


def test_config_override(tmp_path, capsys, p2p_path):
    config = _write(tmp_path / "config.json", {"orientation": {"strategy": "dc_first"}})
    assert main(["--config", config, "analyze", p2p_path]) == 0
    bad = _write(tmp_path / "bad.json", {"plotting": {}})
    assert main(["--config", bad, "analyze", p2p_path]) == 2


@pytest.mark.parametrize(
    "config",
    [
        "{not json",
        json.dumps({"simulation": 5}),
        json.dumps({"simulation": {"dt": "x"}}),
        json.dumps({"simulation": {"dt": -1.0}}),
        json.dumps({"synthesis": {"disturbance": "phyiscal"}}),
        json.dumps([1, 2]),
    ],
)
def test_bad_config_files_exit_with_input_code(tmp_path, capsys, p2p_path, config):
    path = tmp_path / "config.json"
    path.write_text(config, encoding="utf-8")
    assert main(["--config", str(path), "analyze", p2p_path]) == 2
    assert capsys.readouterr().err.startswith("error:")


def test_non_string_loop_entry_exits_with_input_code(tmp_path, capsys):
    grid = _write(
        tmp_path / "loops.json",
        {"ac_buses": [1], "dc_buses": [2], "converters": [{"id": "VSC1", "ac_bus": 1, "dc_bus": 2, "loops": [{}]}]},
    )
    assert main(["analyze", grid]) == 2
    assert "loops[0]" in capsys.readouterr().err


def test_simulate_rejects_non_numeric_initial_values(tmp_path, p2p_path):
    x0 = _write(tmp_path / "x0.json", {"omega[1]": "fast"})
    assert main(["simulate", p2p_path, "--x0", x0, "--out", str(tmp_path / "t.csv")]) == 2
    x0 = _write(tmp_path / "x0_list.json", [0.1, None, "a", 0, 0, 0, 0])
    assert main(["simulate", p2p_path, "--x0", x0, "--out", str(tmp_path / "t.csv")]) == 2


def test_count_ignores_conflicting_fixed_directions(tmp_path, capsys):
    grid = _write(
        tmp_path / "conflict.json",
        {
            "ac_buses": [1, 4],
            "dc_buses": [2, 3],
            "ac_lines": [[1, 4]],
            "dc_lines": [[2, 3]],
            "converters": [
                {"id": "VSC1", "ac_bus": 1, "dc_bus": 2, "orientation": "ac_to_dc"},
                {"id": "VSC2", "ac_bus": 4, "dc_bus": 3, "orientation": "dc_to_ac"},
            ],
        },
    )
    assert main(["count-orientations", grid, "--enumerate"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "2"
    assert out[1] == "Enumeration: 2 (agrees)"
