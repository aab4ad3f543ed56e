"""
Key-value run configuration.

A config file holds one ``key = value`` pair per line; ``#`` starts a comment and
blank lines are ignored. Keys are routed to the scenario, model and training
serializers, which fill the remaining fields from ``settings.PINCHNET``.
"""
import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path

from rest_framework import serializers

from .exceptions import ConfigError
from .serializers import ModelConfigSerializer, ScenarioConfigSerializer, TrainConfigSerializer


logger = logging.getLogger(__name__)

# keys read by both the scenario and the training section
SHARED_KEYS = {"seed"}


def _section_keys(serializer_class):
    return set(serializer_class().fields)


def known_keys():
    return (
        _section_keys(ScenarioConfigSerializer)
        | _section_keys(ModelConfigSerializer)
        | _section_keys(TrainConfigSerializer)
    )


def read_key_value(path):
    """Raw string values of a config file, keyed by name."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    allowed = known_keys()
    values = {}
    for number, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{number}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in allowed:
            raise ConfigError(f"{path}:{number}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{path}:{number}: duplicate key {key!r}")
        values[key] = value
    logger.debug(f"Read {len(values)} keys from {path}")
    return values


@dataclass(frozen=True)
class RunConfig:
    scenario: object
    model: object
    training: object

    @property
    def config_hash(self):
        return config_hash(self.scenario, self.model, self.training)


def _errors(exc):
    return json.dumps(exc.detail, default=str, sort_keys=True)


def load_configs(path=None, overrides=None, scenario_cfg=None):
    """
    Validated scenario, model and training configs.

    ``overrides`` (e.g. command-line options) take precedence over the file; missing
    keys fall back to the settings defaults. A given ``scenario_cfg`` (e.g. the one a
    dataset was generated with) replaces the scenario section.
    """
    values = read_key_value(path) if path is not None else {}
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = value
    scenario_keys = _section_keys(ScenarioConfigSerializer)
    train_keys = _section_keys(TrainConfigSerializer)
    model_keys = _section_keys(ModelConfigSerializer)

    try:
        if scenario_cfg is None:
            scenario_cfg = _build(ScenarioConfigSerializer, {k: v for k, v in values.items() if k in scenario_keys})
        else:
            ignored = sorted((set(values) & scenario_keys) - SHARED_KEYS)
            if ignored:
                logger.warning(f"Scenario keys {ignored} ignored; the stored scenario is used")
        model = _build(
            ModelConfigSerializer,
            {k: v for k, v in values.items() if k in model_keys},
            context={"scenario": scenario_cfg},
        )
        training = _build(TrainConfigSerializer, {k: v for k, v in values.items() if k in train_keys})
    except serializers.ValidationError as exc:
        raise ConfigError(f"invalid configuration: {_errors(exc)}") from exc
    run = RunConfig(scenario_cfg, model, training)
    logger.info(f"Loaded configuration {run.config_hash} (seed={training.seed})")
    return run


def _build(serializer_class, data, context=None):
    serializer = serializer_class(data=data, context=context or {})
    serializer.is_valid(raise_exception=True)
    return serializer.save()


def config_hash(scenario_cfg, model_cfg=None, train_cfg=None):
    """First 16 hex digits of the SHA-256 of the canonical JSON of the configs."""
    payload = {
        "scenario": scenario_cfg.as_dict(),
        "model": model_cfg.as_dict() if model_cfg is not None else None,
        "training": train_cfg.as_dict() if train_cfg is not None else None,
    }
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]
