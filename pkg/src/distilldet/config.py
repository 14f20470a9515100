"""Run configuration: INI file plus ``--set section.key=value`` overrides."""

import configparser
from dataclasses import dataclass, field, fields

from .data import SyntheticConfig
from .errors import ConfigError
from .evaluate import EvalConfig
from .losses import LossWeights
from .train import TrainConfig


@dataclass
class RunConfig:
    synth: SyntheticConfig = field(default_factory=SyntheticConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    corpus_dir: str = "corpus"
    checkpoint_dir: str = "checkpoints"
    report_dir: str = "reports"


_SECTIONS = {"data": ("synth", SyntheticConfig), "train": ("train", TrainConfig),
             "eval": ("eval", EvalConfig)}
_PATH_KEYS = ("corpus_dir", "checkpoint_dir", "report_dir")
_WEIGHT_KEYS = {"alpha_atomic": "atomic", "alpha_global": "global_ctx",
                "alpha_boundary": "boundary"}


def _parse_value(raw, example):
    raw = raw.strip()
    if isinstance(example, bool):
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"expected a boolean, got {raw!r}")
    try:
        if isinstance(example, int):
            return int(raw)
        if isinstance(example, float):
            return float(raw)
        if isinstance(example, tuple):
            parts = [p for p in raw.replace(",", " ").split() if p]
            kind = type(example[0]) if example else float
            return tuple(kind(p) for p in parts)
    except ValueError as exc:
        raise ConfigError(f"cannot parse {raw!r} as {type(example).__name__}") from exc
    return raw


def _apply(cfg_obj, key, raw, section):
    if section == "train" and key in _WEIGHT_KEYS:
        try:
            value = float(raw)
        except ValueError as exc:
            raise ConfigError(f"cannot parse {raw!r} as float") from exc
        setattr(cfg_obj.weights, _WEIGHT_KEYS[key], value)
        cfg_obj.weights.__post_init__()
        return
    # configparser lowercases keys, so match field names case-insensitively.
    by_lower = {f.name.lower(): f.name for f in fields(cfg_obj) if f.name != "weights"}
    name = by_lower.get(key.lower())
    if name is None:
        raise ConfigError(f"unknown key {key!r} in section [{section}]")
    current = getattr(cfg_obj, name)
    setattr(cfg_obj, name, _parse_value(raw, current))
    cfg_obj.__post_init__()


def load_run_config(path=None, overrides=()):
    """Build a validated RunConfig from an optional INI file and overrides.

    Overrides are ``section.key=value`` strings and win over the file.
    Unknown sections or keys are rejected.
    """
    run = RunConfig()
    if path is not None:
        parser = configparser.ConfigParser()
        read = parser.read(path)
        if not read:
            raise ConfigError(f"cannot read config file {path}")
        for section in parser.sections():
            if section == "paths":
                for key, raw in parser.items(section):
                    if key not in _PATH_KEYS:
                        raise ConfigError(f"unknown key {key!r} in section [paths]")
                    setattr(run, key, raw.strip())
                continue
            if section not in _SECTIONS:
                raise ConfigError(f"unknown config section [{section}]")
            attr, _ = _SECTIONS[section]
            for key, raw in parser.items(section):
                _apply(getattr(run, attr), key, raw, section)
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        dotted, raw = item.split("=", 1)
        section, key = dotted.split(".", 1)
        if section == "paths":
            if key not in _PATH_KEYS:
                raise ConfigError(f"unknown key {key!r} in section [paths]")
            setattr(run, key, raw.strip())
        elif section in _SECTIONS:
            _apply(getattr(run, _SECTIONS[section][0]), key, raw, section)
        else:
            raise ConfigError(f"unknown config section [{section}]")
    return run
