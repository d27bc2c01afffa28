"""
Run settings and their resolution.

Values are layered, later layers winning:

1. built-in defaults (the ``Settings`` field defaults);
2. environment variables ``MLSG_<KEY>`` (``.env`` is loaded by ``main.py``);
3. a ``KEY=VALUE`` config file given with ``--config``;
4. command-line flags.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any, Callable, Dict, Mapping, Optional, Union

from dotenv import dotenv_values

from app.exceptions import ConfigurationError

logger = logging.getLogger(__name__)

ENV_PREFIX = "MLSG_"


def _bool(text: str) -> bool:
    value = text.strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off", ""):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _optional(parse: Callable[[str], Any]) -> Callable[[str], Any]:
    def parser(text: str) -> Any:
        return None if text.strip().lower() in ("", "none") else parse(text)
    return parser


@dataclass(frozen=True)
class Settings:

    # ---------------------------------------------------------------------
    # Problem and algorithm
    # ---------------------------------------------------------------------
    problem: str = "benchmark-square"
    algorithm: str = "ml-c"
    tol: Optional[float] = None            # problem default when unset
    m_bar: Optional[int] = None            # problem default when unset
    grid: Optional[int] = None

    # ---------------------------------------------------------------------
    # Marking
    # ---------------------------------------------------------------------
    theta: float = 0.5
    theta_x: float = 0.5
    theta_p: float = 0.5
    vartheta: float = 1.0

    # ---------------------------------------------------------------------
    # Solver
    # ---------------------------------------------------------------------
    solver: str = "minres"
    solver_tol: float = 1e-9
    max_iterations: int = 100
    max_solver_iterations: int = 200
    threads: int = 1

    # ---------------------------------------------------------------------
    # Diagnostics and output
    # ---------------------------------------------------------------------
    ref_tol: Optional[float] = None
    enriched_check: int = 0
    reduction_check: bool = False
    out_dir: Path = Path("runs")
    db_path: Path = Path("data") / "mlsg.db"
    dump_meshes: bool = False
    log_level: str = "INFO"

    @classmethod
    def keys(cls) -> Dict[str, str]:
        """Upper-case key -> field name."""
        return {f.name.upper(): f.name for f in fields(cls)}


_PARSERS: Dict[str, Callable[[str], Any]] = {
    "problem": str,
    "algorithm": str,
    "tol": _optional(float),
    "m_bar": _optional(int),
    "grid": _optional(int),
    "theta": float,
    "theta_x": float,
    "theta_p": float,
    "vartheta": float,
    "solver": str,
    "solver_tol": float,
    "max_iterations": int,
    "max_solver_iterations": int,
    "threads": int,
    "ref_tol": _optional(float),
    "enriched_check": int,
    "reduction_check": _bool,
    "out_dir": Path,
    "db_path": Path,
    "dump_meshes": _bool,
    "log_level": lambda text: text.strip().upper(),
}


def _normalise_key(key: str) -> str:
    key = key.strip().upper().replace("-", "_")
    return key[len(ENV_PREFIX):] if key.startswith(ENV_PREFIX) else key


def _parse_layer(values: Mapping[str, Optional[str]], source: str, strict: bool) -> Dict[str, Any]:
    known = Settings.keys()
    parsed: Dict[str, Any] = {}
    for raw_key, raw_value in values.items():
        key = _normalise_key(raw_key)
        if key not in known:
            if strict:
                raise ConfigurationError(f"Unknown setting '{raw_key}' in {source}.")
            continue
        name = known[key]
        try:
            parsed[name] = _PARSERS[name]("" if raw_value is None else raw_value)
        except ValueError as exc:
            raise ConfigurationError(f"Invalid value for {key} in {source}: {exc}") from exc
    return parsed


def read_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    """Parse a ``KEY=VALUE`` file; unknown keys are rejected."""
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"Config file {path} does not exist.")
    return _parse_layer(dotenv_values(path), str(path), strict=True)


def load_settings(
    overrides: Optional[Mapping[str, Any]] = None,
    config_file: Optional[Union[str, Path]] = None,
    environ: Optional[Mapping[str, str]] = None,
) -> Settings:
    """
    Resolve settings from defaults, ``MLSG_*`` environment variables, a
    config file and explicit overrides (flag values; ``None`` means unset).
    """
    environ = os.environ if environ is None else environ
    env_values = {k: v for k, v in environ.items() if k.startswith(ENV_PREFIX)}

    layers = [_parse_layer(env_values, "environment", strict=False)]
    if config_file is not None:
        layers.append(read_config_file(config_file))
    if overrides:
        known = {f.name for f in fields(Settings)}
        unknown = set(overrides) - known
        if unknown:
            raise ConfigurationError(f"Unknown settings {sorted(unknown)}.")
        layers.append({k: v for k, v in overrides.items() if v is not None})

    settings = Settings()
    for layer in layers:
        settings = replace(settings, **layer)
    logger.debug("[Settings] Resolved %s", settings)
    return settings
