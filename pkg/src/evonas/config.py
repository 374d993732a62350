"""Layered run configuration.

Precedence, lowest to highest: the shipped default file, a user-supplied
INI file, then EVONAS_SECTION_KEY environment variables.  Unknown sections
or keys are rejected so typos fail loudly instead of silently using a
default.
"""

from __future__ import annotations

import configparser
import os
from importlib import resources
from typing import Mapping, Optional

from .errors import ConfigError, ParseError

ENV_PREFIX = "EVONAS_"


def _parser() -> configparser.ConfigParser:
    return configparser.ConfigParser(inline_comment_prefixes=("#", ";"),
                                     interpolation=None)


def _default_text() -> str:
    return resources.files("evonas.data").joinpath("default.ini").read_text()


def load_config(path=None, env: Optional[Mapping[str, str]] = None) -> dict:
    """Returns {section: {key: raw string}} after applying all layers."""
    base = _parser()
    base.read_string(_default_text())
    cfg = {s: dict(base[s]) for s in base.sections()}

    if path is not None:
        user = _parser()
        try:
            with open(path, "r", encoding="utf-8") as fh:
                user.read_file(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        except configparser.Error as exc:
            line = getattr(exc, "lineno", None)
            raise ParseError(f"malformed config file {path}: {exc}",
                             line=line) from exc
        for section in user.sections():
            if section not in cfg:
                raise ConfigError(f"unknown config section [{section}]")
            for key, value in user[section].items():
                if key not in cfg[section]:
                    raise ConfigError(
                        f"unknown key {key!r} in section [{section}]")
                cfg[section][key] = value

    if env is None:
        env = os.environ
    for name, value in env.items():
        if not name.startswith(ENV_PREFIX):
            continue
        rest = name[len(ENV_PREFIX):]
        section, _, key = rest.partition("_")
        section, key = section.lower(), key.lower()
        if section not in cfg or key not in cfg[section]:
            raise ConfigError(f"environment override {name} matches no "
                              f"config key")
        cfg[section][key] = value
    return cfg


# --- typed readers ----------------------------------------------------------------


def _get(cfg: dict, section: str, key: str) -> str:
    try:
        return cfg[section][key]
    except KeyError:
        raise ConfigError(f"missing config value [{section}] {key}") from None


def get_int(cfg, section, key) -> int:
    raw = _get(cfg, section, key)
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key} must be an integer, got {raw!r}") \
            from None


def get_float(cfg, section, key) -> float:
    raw = _get(cfg, section, key)
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key} must be a number, got {raw!r}") \
            from None


def get_bool(cfg, section, key) -> bool:
    raw = _get(cfg, section, key).strip().lower()
    if raw in ("true", "yes", "1", "on"):
        return True
    if raw in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"[{section}] {key} must be a boolean, got {raw!r}")


def get_str(cfg, section, key) -> str:
    return _get(cfg, section, key).strip()


def get_ints(cfg, section, key, sep=",") -> tuple:
    raw = _get(cfg, section, key)
    try:
        return tuple(int(p) for p in raw.replace("x", sep).split(sep) if p.strip())
    except ValueError:
        raise ConfigError(f"[{section}] {key} must be integers, got {raw!r}") \
            from None


# --- section constructors ----------------------------------------------------------


def ga_config(cfg: dict, **overrides):
    from .evolve import GaConfig

    values = dict(
        population=get_int(cfg, "ga", "population"),
        generations=get_int(cfg, "ga", "generations"),
        crossover_rate=get_float(cfg, "ga", "crossover_rate"),
        mutation_rate=get_float(cfg, "ga", "mutation_rate"),
        depth_bounds=(get_int(cfg, "ga", "depth_min"),
                      get_int(cfg, "ga", "depth_max")),
        elitism_count=get_int(cfg, "ga", "elitism_count"),
        tournament_size=get_int(cfg, "ga", "tournament_size"),
        rate_ori=get_float(cfg, "ga", "rate_ori"),
        seed=get_int(cfg, "ga", "seed"),
    )
    values.update(overrides)
    return GaConfig(**values)


def gpt_config(cfg: dict, vocab_size: int, **overrides):
    from .gpt import GptConfig

    values = dict(
        vocab_size=vocab_size,
        n_layers=get_int(cfg, "gpt", "n_layers"),
        n_heads=get_int(cfg, "gpt", "n_heads"),
        context_len=get_int(cfg, "gpt", "context_len"),
        d_model=get_int(cfg, "gpt", "d_model"),
        d_ff=get_int(cfg, "gpt", "d_ff"),
        dropout_rate=get_float(cfg, "gpt", "dropout_rate"),
        lr=get_float(cfg, "gpt", "lr"),
        batch_size=get_int(cfg, "gpt", "batch_size"),
        epochs=get_int(cfg, "gpt", "epochs"),
        seed=get_int(cfg, "gpt", "seed"),
        dtype=get_str(cfg, "gpt", "dtype"),
    )
    values.update(overrides)
    return GptConfig(**values)


def fcn_config(cfg: dict, total_tokens: int, pad_id: int, **overrides):
    from .fcn import FcnConfig

    values = dict(
        total_tokens=total_tokens,
        pad_id=pad_id,
        context_len=get_int(cfg, "fcn", "context_len"),
        hidden=get_ints(cfg, "fcn", "hidden"),
        n_classes=get_int(cfg, "fcn", "n_classes"),
        lr=get_float(cfg, "fcn", "lr"),
        batch_size=get_int(cfg, "fcn", "batch_size"),
        epochs=get_int(cfg, "fcn", "epochs"),
        seed=get_int(cfg, "fcn", "seed"),
    )
    values.update(overrides)
    return FcnConfig(**values)


def teacher_from_config(cfg: dict):
    from .evaluation import MarkovTeacher

    return MarkovTeacher.default_ring(
        p_next=get_float(cfg, "evaluator", "p_next"),
        p_skip=get_float(cfg, "evaluator", "p_skip"),
        a=get_float(cfg, "evaluator", "score_scale"),
        b=get_float(cfg, "evaluator", "score_shift"),
        depth_penalty=get_float(cfg, "evaluator", "depth_penalty"),
    )


def corpus_settings(cfg: dict) -> dict:
    return dict(
        source=get_str(cfg, "corpus", "source"),
        count=get_int(cfg, "corpus", "count"),
        seed=get_int(cfg, "corpus", "seed"),
        input_shape=get_ints(cfg, "corpus", "input_shape"),
        num_classes=get_int(cfg, "corpus", "num_classes"),
        depth_bounds=(get_int(cfg, "corpus", "depth_min"),
                      get_int(cfg, "corpus", "depth_max")),
        width_palette=get_ints(cfg, "corpus", "width_palette"),
        window=get_int(cfg, "corpus", "window"),
        stride=get_int(cfg, "corpus", "stride"),
    )
