from __future__ import annotations

import pytest

from sol2move.config import PipelineConfig, config_from_dict, interpolate, load_config, override
from sol2move.errors import ConfigError

TOML = """
workers = 2
strategy = "direct"

[paths]
ledger = "${RUN_DIR}/ledger.jsonl"

[planner]
model_name = "planner-model"
api_key_env = "PLANNER_KEY"
max_retries = 2

[toolchain]
compile_command = ["move", "build"]
timeout = 30.0

[loop]
max_compile_attempts = 3
"""


def test_defaults_are_valid():
    cfg = load_config()
    assert cfg == PipelineConfig()
    assert cfg.loop.max_compile_attempts == 5 and cfg.retrieval.fragment_width == 256
    assert cfg.planner.temperature == 0.0


def test_toml_load_with_interpolation(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text(TOML)
    cfg = load_config(path, env={"RUN_DIR": "/data/run1"})
    assert cfg.paths.ledger == "/data/run1/ledger.jsonl"
    assert cfg.workers == 2 and cfg.strategy == "direct"
    assert cfg.planner.model_name == "planner-model" and cfg.planner.retry_policy.max_retries == 2
    assert cfg.toolchain.compile_command == ("move", "build")
    assert cfg.settings().max_compile_attempts == 3


def test_unset_variable_is_error():
    with pytest.raises(ConfigError):
        interpolate({"a": ["${NOPE_NOT_SET}"]}, env={})
    assert interpolate({"a": ["x${V}y"]}, env={"V": "1"}) == {"a": ["x1y"]}


@pytest.mark.parametrize(
    "data",
    [
        {"bogus": 1},
        {"paths": {"nope": "x"}},
        {"loop": {"max_compile_attempts": 6}},
        {"loop": {"max_prove_attempts": 0}},
        {"workers": 0},
        {"shots": 3},
        {"shots": 5},
        {"retrieval": {"mode": "dense"}},
        {"retrieval": {"mode": "sparse+dense"}},
        {"templates": {"task": "/no/such/template.txt"}},
        {"planner": {"temperature": -1.0}},
    ],
)
def test_invalid_configs_rejected(data):
    with pytest.raises(ConfigError):
        config_from_dict(data, env={})


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.toml")
    bad = tmp_path / "bad.toml"
    bad.write_text("workers = = 1")
    with pytest.raises(ConfigError):
        load_config(bad)


def test_override_ignores_none():
    cfg = PipelineConfig()
    assert override(cfg, "loop", max_compile_attempts=None) is cfg
    assert override(cfg, "loop", max_compile_attempts=2).loop.max_compile_attempts == 2
    assert override(cfg, None, workers=4).workers == 4


def test_run_header_has_no_paths_or_secrets():
    header = PipelineConfig().run_header()
    text = repr(header)
    assert "ledger" not in text and "api_key" not in text and "endpoint" not in text
    assert header["loop"]["max_compile_attempts"] == 5
