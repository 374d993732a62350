"""Layered configuration loading."""

import pytest

import evonas.config as C
from evonas.errors import ConfigError, ParseError


def test_defaults_load():
    cfg = C.load_config(env={})
    assert C.get_int(cfg, "ga", "population") == 30
    assert C.get_int(cfg, "ga", "generations") == 20
    assert C.get_float(cfg, "ga", "rate_ori") == 0.4
    assert C.get_int(cfg, "gpt", "epochs") == 300
    assert C.get_ints(cfg, "fcn", "hidden") == (128, 128)


def test_user_file_overrides_defaults(tmp_path):
    p = tmp_path / "run.ini"
    p.write_text("[ga]\npopulation = 12\n")
    cfg = C.load_config(p, env={})
    assert C.get_int(cfg, "ga", "population") == 12
    # untouched keys keep their shipped values
    assert C.get_int(cfg, "ga", "generations") == 20


def test_env_overrides_file(tmp_path):
    p = tmp_path / "run.ini"
    p.write_text("[ga]\npopulation = 12\n")
    cfg = C.load_config(p, env={"EVONAS_GA_POPULATION": "7"})
    assert C.get_int(cfg, "ga", "population") == 7


def test_env_compound_key():
    cfg = C.load_config(env={"EVONAS_GA_CROSSOVER_RATE": "0.5"})
    assert C.get_float(cfg, "ga", "crossover_rate") == 0.5


def test_unknown_key_rejected(tmp_path):
    p = tmp_path / "run.ini"
    p.write_text("[ga]\npopulaton = 12\n")
    with pytest.raises(ConfigError):
        C.load_config(p, env={})


def test_unknown_section_rejected(tmp_path):
    p = tmp_path / "run.ini"
    p.write_text("[gaa]\npopulation = 12\n")
    with pytest.raises(ConfigError):
        C.load_config(p, env={})


def test_unknown_env_override_rejected():
    with pytest.raises(ConfigError):
        C.load_config(env={"EVONAS_GA_POPULATON": "9"})


def test_malformed_file_raises_parse_error(tmp_path):
    p = tmp_path / "run.ini"
    p.write_text("population = 12\n")  # key before any section header
    with pytest.raises(ParseError):
        C.load_config(p, env={})


def test_missing_file_raises_config_error(tmp_path):
    with pytest.raises(ConfigError):
        C.load_config(tmp_path / "absent.ini", env={})


def test_typed_helpers():
    cfg = C.load_config(env={})
    assert C.get_bool(cfg, "evaluator", "train_head") is True
    assert C.get_ints(cfg, "corpus", "input_shape") == (3, 32, 32)
    assert C.get_str(cfg, "evaluator", "kind") == "surrogate"
    with pytest.raises(ConfigError):
        C.get_int(cfg, "evaluator", "kind")
    with pytest.raises(ConfigError):
        C.get_float(cfg, "evaluator", "kind")
    with pytest.raises(ConfigError):
        C.get_bool(cfg, "evaluator", "mode")
    with pytest.raises(ConfigError):
        C.get_int(cfg, "ga", "no_such_key")


def test_inline_comments_stripped(tmp_path):
    p = tmp_path / "run.ini"
    p.write_text("[ga]\npopulation = 25  # small smoke run\n")
    cfg = C.load_config(p, env={})
    assert C.get_int(cfg, "ga", "population") == 25


def test_ga_constructor_wiring():
    cfg = C.load_config(env={})
    ga = C.ga_config(cfg)
    assert ga.population == 30
    assert ga.depth_bounds == (10, 20)
    assert ga.tournament_size == 2
    ga2 = C.ga_config(cfg, population=6, generations=2)
    assert ga2.population == 6


def test_gpt_constructor_wiring():
    cfg = C.load_config(env={"EVONAS_GPT_EPOCHS": "5"})
    gc = C.gpt_config(cfg, vocab_size=100)
    assert gc.vocab_size == 100
    assert gc.epochs == 5
    assert gc.n_layers == 4
    assert gc.d_model == 64


def test_fcn_constructor_wiring():
    cfg = C.load_config(env={})
    fc = C.fcn_config(cfg, total_tokens=50, pad_id=46)
    assert fc.total_tokens == 50
    assert fc.pad_id == 46
    assert fc.hidden == (128, 128)
    assert fc.n_classes == 15


def test_teacher_and_corpus_wiring():
    cfg = C.load_config(env={})
    teacher = C.teacher_from_config(cfg)
    assert teacher.a == 2.0
    assert teacher.b == 3.0
    settings = C.corpus_settings(cfg)
    assert settings["count"] == 1000
    assert settings["input_shape"] == (3, 32, 32)
    assert settings["depth_bounds"] == (10, 20)
    assert settings["width_palette"] == (32,)
