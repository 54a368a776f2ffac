"""Flat ``dotted.key = value`` experiment configuration.

Unknown keys are rejected. Resolution order: global defaults, scenario
preset, config file, explicit overrides. :func:`dump_config` writes a file
that :func:`parse_config` reads back to the identical mapping.
"""

import os

from .exceptions import ConfigError

__all__ = ["SCENARIOS", "SCHEMA", "parse_config", "load_config", "resolve_config", "dump_config"]

SCENARIOS = ("trajectory", "floor_sweep_small", "floor_sweep_large", "offline_rate", "stability", "regimes", "adhoc")


def _int_list(text):
    return [int(v) for v in _str_list(text)]


def _float_list(text):
    return [float(v) for v in _str_list(text)]


def _str_list(text):
    if isinstance(text, (list, tuple)):
        return list(text)
    return [v.strip() for v in str(text).split(",") if v.strip()]


def _bool(text):
    if isinstance(text, bool):
        return text
    low = str(text).strip().lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# key -> (parser, default)
SCHEMA = {
    "scenario": (str, "adhoc"),
    "master_seed": (int, 0),
    "output_dir": (str, "results"),
    "game.kind": (str, "bradley_terry"),
    "game.n": (int, 20),
    "game.seed": (int, 0),
    "game.reward_std": (float, 1.0),
    "game.file": (str, ""),
    "risk.kind": (str, "entropic"),
    "risk.param": (float, 6.0),
    "solver.algorithm": (str, "TTEG"),
    "solver.beta": (float, 0.6),
    "solver.eta.kind": (str, "constant"),
    "solver.eta.base": (float, 0.04),
    "solver.eta.exponent": (float, 0.0),
    "solver.gamma.kind": (str, "constant"),
    "solver.gamma.base": (float, 0.5),
    "solver.gamma.exponent": (float, 0.0),
    "solver.m": (int, 15),
    "solver.T": (int, 4000),
    "solver.oracle": (str, "plugin"),
    "solver.polyak": (str, "window"),
    "solver.polyak_window": (int, 500),
    "solver.floor_window": (int, 500),
    "solver.track_every": (int, 100),
    "solver.track_reps": (int, 10000),
    "solver.check_admissible": (_bool, True),
    "sweep.seeds": (int, 20),
    "sweep.m_values": (_int_list, [15]),
    "sweep.n_values": (_int_list, [1000, 3000, 10000, 30000, 100000]),
    "sweep.algorithms": (_str_list, ["EG", "TTEG"]),
    "stability.trials": (int, 50),
    "stability.epsilon": (float, 0.01),
    "regimes.risks": (_str_list, ["expectation", "entropic:0.01", "entropic:1", "entropic:6", "cvar:0.9", "cvar:0.99"]),
    "regimes.betas": (_float_list, [0.1, 0.6, 5.0]),
    "regimes.grid_points": (int, 256),
    "regimes.restarts": (int, 4),
    "regimes.seed": (int, 0),
}

PRESETS = {
    "trajectory": {"sweep.algorithms": ["EG-exact", "EG", "TTEG"]},
    "floor_sweep_small": {"sweep.m_values": [15, 30, 60, 130], "solver.track_every": 0},
    "floor_sweep_large": {"sweep.m_values": [150, 300, 500], "solver.track_every": 0},
    "offline_rate": {"game.n": 8, "risk.param": 1.0, "solver.beta": 1.0},
    "stability": {"game.n": 10, "risk.param": 2.0, "solver.beta": 1.0},
    "regimes": {},
    "adhoc": {"sweep.seeds": 1},
}


def _coerce(key, value, source):
    if key not in SCHEMA:
        raise ConfigError(f"{source}: unknown key {key!r}")
    parser = SCHEMA[key][0]
    try:
        return parser(value) if isinstance(value, str) or parser is not str else str(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{source}: bad value for {key!r}: {value!r} ({exc})") from None


def parse_config(text, source="<config>"):
    """Parse config text into a ``{key: typed value}`` dict (only keys present)."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key = key.strip()
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = _coerce(key, value.strip(), f"{source}:{lineno}")
    return out


def load_config(path):
    try:
        with open(path) as fh:
            return parse_config(fh.read(), str(path))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None


def resolve_config(values=None, scenario=None, overrides=None, env=None):
    """Full resolved mapping; ``RSPG_SEED`` in ``env`` overrides ``master_seed``."""
    values = dict(values or {})
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    scen = overrides.get("scenario") or scenario or values.get("scenario") or SCHEMA["scenario"][1]
    if scen not in SCENARIOS:
        raise ConfigError(f"unknown scenario {scen!r}; choose from {', '.join(SCENARIOS)}")
    cfg = {k: d for k, (_, d) in SCHEMA.items()}
    cfg.update(PRESETS[scen])
    cfg.update(values)
    for k, v in overrides.items():
        cfg[k] = _coerce(k, v, "override")
    cfg["scenario"] = scen
    env = os.environ if env is None else env
    if env.get("RSPG_SEED"):
        cfg["master_seed"] = _coerce("master_seed", env["RSPG_SEED"], "RSPG_SEED")
    _validate(cfg)
    return cfg


def _validate(cfg):
    if cfg["risk.kind"] not in ("expectation", "entropic", "cvar"):
        raise ConfigError(f"unknown risk.kind {cfg['risk.kind']!r}")
    if cfg["sweep.seeds"] < 1:
        raise ConfigError("sweep.seeds must be >= 1")
    if cfg["scenario"].startswith("floor_sweep") and not cfg["sweep.m_values"]:
        raise ConfigError("sweep.m_values must be nonempty")
    if cfg["solver.beta"] <= 0:
        raise ConfigError("solver.beta must be positive")


def _format(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, list):
        return ", ".join(_format(v) for v in value)
    return str(value)


def dump_config(cfg):
    return "".join(f"{k} = {_format(cfg[k])}\n" for k in SCHEMA if k in cfg)
