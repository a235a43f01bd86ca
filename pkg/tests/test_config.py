"""Config file parsing and override merging."""

import pytest

from entityrag.config import ConfigError, PipelineConfig, load_config, parse_config_file


def test_parse_key_value_file(tmp_path):
    path = tmp_path / "run.conf"
    path.write_text(
        "# comment line\n"
        "dataset_path = questions.jsonl\n"
        "dataset_kind = factoid\n"
        "\n"
        "retriever = entity\n"
        "k = 4\n"
        "truncate_words = 100\n",
        encoding="utf-8",
    )
    values = parse_config_file(path)
    assert values["dataset_kind"] == "factoid"
    assert values["k"] == "4"


def test_relative_paths_resolve_against_config_dir(tmp_path):
    (tmp_path / "questions.jsonl").write_text("", encoding="utf-8")
    path = tmp_path / "run.conf"
    path.write_text("dataset_path = questions.jsonl\n", encoding="utf-8")
    config = load_config(path)
    assert config.dataset_path == tmp_path / "questions.jsonl"


def test_overrides_win(tmp_path):
    path = tmp_path / "run.conf"
    path.write_text("run_id = from-file\nk = 2\n", encoding="utf-8")
    config = load_config(path, {"run_id": "from-flag", "k": 7})
    assert config.run_id == "from-flag"
    assert config.retriever.k == 7


def test_unknown_key_rejected():
    with pytest.raises(ConfigError):
        PipelineConfig.from_mapping({"no_such_key": "x"})


def test_bad_value_rejected():
    with pytest.raises(ConfigError):
        PipelineConfig.from_mapping({"retriever": "psychic"})
    with pytest.raises(ConfigError):
        PipelineConfig.from_mapping({"dataset_kind": "mystery"})


def test_malformed_line_rejected(tmp_path):
    path = tmp_path / "bad.conf"
    path.write_text("just words\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        parse_config_file(path)


def test_mapping_round_trip():
    config = PipelineConfig.from_mapping(
        {
            "dataset_kind": "strategyqa",
            "retriever": "bm25",
            "k": "6",
            "truncate_words": "50",
            "run_id": "rt",
            "llm_endpoint": "stub:oracle",
        }
    )
    again = PipelineConfig.from_mapping(config.to_mapping())
    assert again == config


def test_generation_tokens_default_by_kind():
    factoid = PipelineConfig.from_mapping({"dataset_kind": "factoid"})
    boolean = PipelineConfig.from_mapping({"dataset_kind": "strategyqa"})
    assert factoid.generation_tokens == 10
    assert boolean.generation_tokens == 1
    override = PipelineConfig.from_mapping({"max_generation_tokens": "5"})
    assert override.generation_tokens == 5
