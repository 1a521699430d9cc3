"""Python front end for the aepo_lab C++ core."""

import json as _json

from . import _core
from ._core import (
    CapacityError,
    ConfigError,
    ContractError,
    DataError,
    InvalidInput,
    NumericalError,
    Task,
    clipped_weighted,
    entropy_adv_shaped,
    entropy_grad,
    export_csv,
    grad_log_pi,
    group_advantage,
    log_probs,
    probs,
    select_temperature,
    token_entropy,
)


def default_config():
    return _json.loads(_core.default_config_json())


def normalize_config(config):
    """Validate a (possibly partial) config dict and fill in defaults."""
    return _json.loads(_core.normalize_config_json(_json.dumps(config)))


def config_hash(config):
    return _core.config_hash(_json.dumps(config))


def train(config, out_dir=None):
    """Run a training job. Returns {"telemetry": [...], "summary": {...}}."""
    return _json.loads(_core.train_json(_json.dumps(config), None if out_dir is None else str(out_dir)))


def verify(full=False):
    return _json.loads(_core.verify_json(full))


__all__ = [
    "CapacityError",
    "ConfigError",
    "ContractError",
    "DataError",
    "InvalidInput",
    "NumericalError",
    "Task",
    "clipped_weighted",
    "config_hash",
    "default_config",
    "entropy_adv_shaped",
    "entropy_grad",
    "export_csv",
    "grad_log_pi",
    "group_advantage",
    "log_probs",
    "normalize_config",
    "probs",
    "select_temperature",
    "token_entropy",
    "train",
    "verify",
]
