"""Configuration parsing and invariants."""
import json

import pytest

from uknow_extractors import (
    DEFAULT_MODELS,
    EXTRACTOR_NAMES,
    ConfigError,
    config_from_dict,
    load_config,
)


class TestHappyPath:
    def test_full_config(self):
        cfg = config_from_dict({
            "extractors": ["image_embed", "ner"],
            "models": {"ner": "caps-lexicon-v1"},
            "dim": 32, "batch_size": 2, "device": "cpu",
        })
        assert cfg.extractors == ("image_embed", "ner")
        assert cfg.dim == 32
        assert cfg.batch_size == 2
        assert cfg.device == "cpu"

    def test_defaults_applied(self):
        cfg = config_from_dict({"extractors": ["text_embed"]})
        assert cfg.dim == 64
        assert cfg.batch_size == 8
        assert cfg.device == "cpu"
        assert cfg.models == {}

    def test_model_for_falls_back_to_default(self):
        cfg = config_from_dict({"extractors": ["detect"]})
        assert cfg.model_for("detect") == DEFAULT_MODELS["detect"]

    def test_model_for_honors_override(self):
        cfg = config_from_dict({"extractors": ["detect"],
                                "models": {"detect": "other-model"}})
        assert cfg.model_for("detect") == "other-model"

    def test_enabled(self):
        cfg = config_from_dict({"extractors": ["ner", "caption"]})
        assert cfg.enabled("ner")
        assert not cfg.enabled("detect")

    def test_every_extractor_name_accepted(self):
        cfg = config_from_dict({"extractors": list(EXTRACTOR_NAMES)})
        assert set(cfg.extractors) == set(EXTRACTOR_NAMES)

    def test_device_hint_is_free_form(self):
        cfg = config_from_dict({"extractors": ["ner"], "device": "cuda:1"})
        assert cfg.device == "cuda:1"

    def test_load_config_from_file(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"extractors": ["ner"], "dim": 16}))
        cfg = load_config(path)
        assert cfg.extractors == ("ner",)
        assert cfg.dim == 16


class TestValidation:
    @pytest.mark.parametrize("obj", [
        [],
        "extractors",
        {"extractors": []},
        {"extractors": "ner"},
        {},
        {"extractors": ["ner"], "unknown_key": 1},
        {"extractors": ["ner", "warp_drive"]},
        {"extractors": ["ner", "ner"]},
        {"extractors": ["ner"], "models": ["ner"]},
        {"extractors": ["ner"], "models": {"warp_drive": "x"}},
        {"extractors": ["ner"], "dim": 0},
        {"extractors": ["ner"], "dim": -3},
        {"extractors": ["ner"], "batch_size": 0},
    ])
    def test_invalid_configs_rejected(self, obj):
        with pytest.raises(ConfigError):
            config_from_dict(obj)

    def test_invalid_json_file(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError):
            load_config(path)

    def test_missing_file_raises_oserror(self, tmp_path):
        with pytest.raises(OSError):
            load_config(tmp_path / "absent.json")
