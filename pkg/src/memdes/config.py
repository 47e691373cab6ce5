"""Flat key = value run-configuration files (INI sections).

Example:

    [bundle]
    path = wire3.opb

    [objective]
    kind = realized_gain
    z0 = 50

    [ga]
    n_agents = 16
    max_global_iters = 50
    rng_seed = 1

    [local]
    eps_loc = 1e-7

    [run]
    output_dir = out
    threads = 1
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

from .errors import ConfigurationError
from .model import ObjectiveKind, ObjectiveSpec, RunConfig

__all__ = ["RunSpec", "load_run_config"]


@dataclass
class RunSpec:
    """Everything a CLI optimization run needs."""

    bundle_path: str
    objective: ObjectiveSpec
    config: RunConfig
    q_lb_auto: bool = False
    bound_value: Optional[float] = None
    bound_auto: bool = False
    threads: Optional[int] = None


def _get(parser, section, key, cast, default):
    if not parser.has_option(section, key):
        return default
    raw = parser.get(section, key).strip()
    if raw == "":
        return default
    try:
        return cast(raw)
    except ValueError as exc:
        raise ConfigurationError(f"[{section}] {key} = {raw!r}: {exc}") from exc


def _cast_bool(raw: str) -> bool:
    lowered = raw.lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def load_run_config(path: Union[str, Path]) -> RunSpec:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    text = Path(path)
    if not text.is_file():
        raise ConfigurationError(f"config file not found: {path}")
    try:
        parser.read_string(text.read_text())
    except configparser.Error as exc:
        raise ConfigurationError(f"config parse error: {exc}") from exc

    if not parser.has_option("bundle", "path"):
        raise ConfigurationError("config requires [bundle] path")
    bundle_path = parser.get("bundle", "path").strip()
    if not Path(bundle_path).is_absolute():
        bundle_path = str((text.parent / bundle_path).resolve())

    kind_raw = _get(parser, "objective", "kind", str, "q").lower()
    try:
        kind = ObjectiveKind(kind_raw)
    except ValueError as exc:
        raise ConfigurationError(f"unknown objective kind {kind_raw!r}") from exc

    q_lb_auto = False
    q_lb_ref = None
    if parser.has_option("objective", "q_lb_ref"):
        raw = parser.get("objective", "q_lb_ref").strip().lower()
        if raw == "auto":
            q_lb_auto = True
        elif raw:
            q_lb_ref = float(raw)

    feed_raw = _get(parser, "objective", "feed_index", str, "auto").lower()
    feed_index = None if feed_raw == "auto" else int(feed_raw)

    sign = -1 if kind in (ObjectiveKind.REALIZED_GAIN,
                          ObjectiveKind.ABSORBED_POWER) else 1
    objective = ObjectiveSpec(
        kind=kind,
        zeta=_get(parser, "objective", "zeta", float, 0.0),
        Z0=_get(parser, "objective", "z0", complex, 50.0 + 0.0j),
        q_lb_ref=q_lb_ref,
        field_index=_get(parser, "objective", "field_index", int, 0),
        feed_index=feed_index,
        excitation_index=_get(parser, "objective", "excitation_index", int, 0),
        sign=sign)

    mutation = _get(parser, "ga", "mutation_rate", float, None)
    config = RunConfig(
        n_agents=_get(parser, "ga", "n_agents", int, 16),
        max_global_iters=_get(parser, "ga", "max_global_iters", int, 50),
        eps_glob=_get(parser, "ga", "eps_glob", float, 1e-7),
        eps_loc=_get(parser, "local", "eps_loc", float, 1e-7),
        max_local_iters=_get(parser, "local", "max_local_iters", int, 10000),
        rng_seed=_get(parser, "ga", "rng_seed", int, 0),
        crossover_rate=_get(parser, "ga", "crossover_rate", float, 0.9),
        mutation_rate=mutation,
        tournament_size=_get(parser, "ga", "tournament_size", int, 2),
        elitism_count=_get(parser, "ga", "elitism_count", int, 1),
        init_fill_probability=_get(parser, "ga", "init_fill_probability", float, 0.5),
        refactor_period=_get(parser, "local", "refactor_period", int, 64),
        log_wall_time=_get(parser, "run", "log_wall_time", _cast_bool, False),
        output_dir=_get(parser, "run", "output_dir", str, None))
    config.validate()

    bound_value = None
    bound_auto = False
    if parser.has_option("objective", "bound"):
        raw = parser.get("objective", "bound").strip().lower()
        if raw == "auto":
            bound_auto = True
        elif raw:
            bound_value = float(raw)

    threads = _get(parser, "run", "threads", int, None)
    return RunSpec(bundle_path=bundle_path, objective=objective, config=config,
                   q_lb_auto=q_lb_auto, bound_value=bound_value,
                   bound_auto=bound_auto, threads=threads)
