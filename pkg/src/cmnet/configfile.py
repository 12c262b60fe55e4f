"""INI-style run configuration: [model], [train], [scenario], [scenario.echo] and [eval] sections.

Values are JSON literals (``encoder_channels = [4, 8, 16]``); bare words are
read as strings.  ``[model] preset = toy | full`` picks the starting point and
``case = 1..5`` the ablation toggles.
"""
from __future__ import annotations

import configparser
import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from .data import EchoPath, ScenarioSpec
from .model.config import ConfigError, ModelConfig
from .train import TrainConfig

SECTIONS = ("model", "train", "scenario", "scenario.echo", "eval")


@dataclass(frozen=True)
class EvalSettings:
    n_per_kind: int = 4
    duration: float = 2.0
    seed: int = 1000


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    scenario: dict = field(default_factory=dict)
    eval: EvalSettings = field(default_factory=EvalSettings)

    def scenario_spec(self, seed: int | None = None) -> ScenarioSpec | None:
        if not self.scenario:
            return None
        d = dict(self.scenario)
        if seed is not None:
            d["seed"] = seed
        return ScenarioSpec.from_dict(d)


def _value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def _section(cp: configparser.ConfigParser, name: str) -> dict:
    return {k: _value(v) for k, v in cp.items(name)} if cp.has_section(name) else {}


def _check_keys(name: str, values: dict, allowed) -> None:
    unknown = set(values) - set(allowed)
    if unknown:
        raise ConfigError(f"[{name}] unknown keys: {sorted(unknown)}")


def parse_config(text: str, source: str = "<string>") -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";",))
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    extra = set(cp.sections()) - set(SECTIONS)
    if extra:
        raise ConfigError(f"{source}: unknown sections {sorted(extra)}")
    try:
        model = _section(cp, "model")
        preset = model.pop("preset", "full")
        case = model.pop("case", None)
        if preset not in ("toy", "full"):
            raise ConfigError(f"[model] preset must be 'toy' or 'full', got {preset!r}")
        _check_keys("model", model, ModelConfig.__dataclass_fields__)
        mcfg = ModelConfig.toy(**model) if preset == "toy" else ModelConfig(**model)
        if case is not None:
            mcfg = mcfg.with_case(int(case))

        train = _section(cp, "train")
        _check_keys("train", train, TrainConfig.__dataclass_fields__)
        tcfg = TrainConfig(**train)

        scenario = _section(cp, "scenario")
        if scenario or cp.has_section("scenario.echo"):
            _check_keys("scenario", scenario, [f.name for f in fields(ScenarioSpec) if f.name != "echo"])
            echo = _section(cp, "scenario.echo")
            _check_keys("scenario.echo", echo, EchoPath.__dataclass_fields__)
            scenario["echo"] = echo
            ScenarioSpec.from_dict(scenario)  # validate now

        ev = _section(cp, "eval")
        _check_keys("eval", ev, EvalSettings.__dataclass_fields__)
        return RunConfig(mcfg, tcfg, scenario, EvalSettings(**ev))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{source}: {exc}") from exc


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, str(path))
