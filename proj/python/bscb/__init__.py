"""Python front end to the bscb simulator core."""

import json
import os

from ._bscb import (
    ConfigError,
    LinUcbBandit,
    ParseError,
    __version__,
    alpha_from_delta,
    cqi_to_tbs,
    kmeans,
    parse_config,
    point_in_ellipse,
    reward_idle,
    reward_tx,
)
from . import _bscb

__all__ = [
    "ConfigError",
    "LinUcbBandit",
    "ParseError",
    "__version__",
    "alpha_from_delta",
    "black_spot_map",
    "cqi_to_tbs",
    "kmeans",
    "parse_config",
    "point_in_ellipse",
    "reward_idle",
    "reward_tx",
    "simulate",
    "sweep",
]


def _overrides(overrides):
    return {str(k): str(v).lower() if isinstance(v, bool) else str(v) for k, v in (overrides or {}).items()}


def simulate(config=None, **overrides):
    """Train and replay one scheme. Keyword names use `section__key`, e.g. bandit__w=0.8."""
    kv = _overrides({k.replace("__", "."): v for k, v in overrides.items()})
    return json.loads(_bscb._simulate(os.fspath(config) if config else "", kv))


def sweep(key, values, config=None, **overrides):
    kv = _overrides({k.replace("__", "."): v for k, v in overrides.items()})
    return json.loads(_bscb._sweep(os.fspath(config) if config else "", kv, key, [str(v) for v in values]))


def black_spot_map(config=None, **overrides):
    kv = _overrides({k.replace("__", "."): v for k, v in overrides.items()})
    return json.loads(_bscb._black_spot_map(os.fspath(config) if config else "", kv))
