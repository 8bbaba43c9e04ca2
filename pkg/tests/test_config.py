from __future__ import annotations

import json
from pathlib import Path

import pytest

from src.acdc_poset.config import OrientationConfig, PipelineConfig, SynthesisConfig, apply_overrides, load_config
from src.acdc_poset.errors import ParseError, SchemaError


def test_defaults():
    cfg = load_config()
    assert cfg.tolerances.zero_block == 1e-12
    assert cfg.orientation.strategy == "index_order"
    assert cfg.dq.cross_coupling == "symmetric"
    assert cfg.simulation.dt == 1e-4


def test_file_overrides(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"dq": {"samples": 40}, "simulation": {"horizon": 5.0}}), encoding="utf-8")
    cfg = load_config(path)
    assert cfg.dq.samples == 40
    assert cfg.simulation.horizon == 5.0
    assert cfg.dq.seed == 0


def test_overrides_keep_the_current_config():
    cfg = apply_overrides(PipelineConfig(), {"synthesis": {"newton_steps": 0}})
    cfg = apply_overrides(cfg, {"tolerances": {"riccati_residual": 1e-8}})
    assert cfg.synthesis.newton_steps == 0
    assert cfg.tolerances.riccati_residual == 1e-8


@pytest.mark.parametrize(
    "payload, message",
    [
        ({"plotting": {}}, "section"),
        ({"dq": {"sample_count": 3}}, "dq.sample_count"),
        ({"simulation": {"dt": -1.0}}, "dt must be positive"),
        ({"simulation": {"dt": 1.0, "horizon": 0.5}}, "at least dt"),
        ({"simulation": 5}, "simulation must be an object"),
        ({"simulation": {"dt": "x"}}, "simulation.dt must be float"),
        ({"dq": {"samples": 2.5}}, "dq.samples must be int"),
        ({"orientation": {"strategy": "zigzag"}}, "orientation.strategy must be one of"),
        ({"synthesis": {"disturbance": "phyiscal"}}, "synthesis.disturbance must be one of"),
        ({"simulation": {"method": "euler"}}, "simulation.method"),
        ([1, 2], "JSON object"),
    ],
)
def test_bad_overrides(payload, message):
    with pytest.raises(SchemaError, match=message):
        apply_overrides(PipelineConfig(), payload)


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_config(tmp_path / "missing.json")


def test_example_config_loads():
    cfg = load_config(Path(__file__).resolve().parents[1] / "config.example.json")
    assert cfg.dq.cross_coupling == "antisymmetric"
    assert cfg.synthesis.disturbance == "physical"
    assert cfg.simulation.horizon == 60.0


def test_malformed_file_is_a_parse_error(tmp_path):
    path = tmp_path / "config.json"
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(ParseError, match="Malformed config"):
        load_config(path)


def test_rejected_override_leaves_section_valid():
    cfg = PipelineConfig()
    with pytest.raises(SchemaError):
        apply_overrides(cfg, {"simulation": {"dt": 0.0}})
    assert cfg.simulation.dt == 1e-4


def test_sections_validate_their_choices_on_construction():
    with pytest.raises(SchemaError, match="disturbance"):
        SynthesisConfig(disturbance="phyiscal")
    with pytest.raises(SchemaError, match="strategy"):
        OrientationConfig(strategy="zigzag")
    assert SynthesisConfig(disturbance="physical").disturbance == "physical"
