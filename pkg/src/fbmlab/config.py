"""
Experiment configuration for the ``fbmlab`` command line.

Values are merged in increasing priority from the bundled
``default_config.json``, an optional user file and command-line flags.
Each file has a ``defaults`` section and a ``commands`` section whose
per-subcommand entries override the defaults::

    {
      "defaults": {"H": 0.7, "paths": 100000, "seed": 42},
      "commands": {"transport": {"H": 0.75, "shift": "const:0.5"}}
    }

Files not ending in ``.json`` are read as ``key=value`` lines with ``#``
comments; a key of the form ``command.key`` lands in that command's
section.
"""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import asdict, dataclass, fields
from importlib.resources import files as pkg_files
from pathlib import Path
from typing import Any, Optional

from fbmlab.ensemble import MIN_PATHS, SimulationSettings
from fbmlab.errors import ConfigurationError

logger = logging.getLogger(__name__)

CONFIG_FILENAME = "fbmlab.json"
COMMANDS = (
    "kernel",
    "fbm",
    "solve",
    "bismut",
    "ibp",
    "harnack",
    "transport",
    "maxineq",
    "selftest",
)
KERNEL_CHECKS = ("identity", "covariance", "representation", "fraccalc")
HARNACK_VARIANTS = (
    "gradient",
    "harnack",
    "log",
    "shift",
    "shift-log",
    "feller",
    "entropy",
    "entropy-bismut",
    "density",
)
METRICS = ("uniform", "l2")

_INT_KEYS = {"n", "paths", "seed", "batch_size", "threads"}
_BOOL_KEYS = {"oracle", "exact", "quick"}
_OPTIONAL_KEYS = {"theta", "threads", "report", "csv"}
_STR_KEYS = {"command", "model", "f", "control", "check", "variant", "metric", "shift", "phi", "report", "csv"}
# Output locations do not change the experiment and stay out of the echo.
_OUTPUT_KEYS = ("report", "csv")


@dataclass(frozen=True)
class ExperimentConfig:
    """One fully resolved experiment."""

    command: str
    H: float = 0.7
    T: float = 1.0
    n: int = 512
    paths: int = 100_000
    seed: int = 42
    batch_size: int = 8192
    threads: Optional[int] = None
    sigma_multiplier: float = 3.0
    tolerance: float = 0.01
    x0: float = 0.0
    y: float = 1.0
    model: str = "linear:0.5"
    f: str = "sin"
    p: float = 2.0
    alpha: float = 1.0
    theta: Optional[float] = None
    control: str = "default"
    check: str = "identity"
    variant: str = "gradient"
    metric: str = "uniform"
    shift: str = "const:0.5"
    phi: str = "const:1"
    radii: tuple[float, ...] = (0.5, 0.25, 0.1, 0.05, 0.01, 0.001, 0.0001)
    oracle: bool = False
    exact: bool = False
    quick: bool = False
    report: Optional[str] = None
    csv: Optional[str] = None

    def __post_init__(self) -> None:
        if self.command not in COMMANDS:
            raise ConfigurationError(f"Unknown command '{self.command}'")
        if not 0.0 < self.H < 1.0:
            raise ConfigurationError(f"H must lie in (0, 1), got {self.H}")
        if not (self.T > 0.0 and math.isfinite(self.T)):
            raise ConfigurationError(f"T must be positive and finite, got {self.T}")
        if self.n < 2:
            raise ConfigurationError(f"n must be at least 2, got {self.n}")
        if self.paths < MIN_PATHS:
            raise ConfigurationError(f"paths must be at least {MIN_PATHS}, got {self.paths}")
        if self.seed < 0:
            raise ConfigurationError(f"seed must be a non-negative integer, got {self.seed}")
        if self.sigma_multiplier < 0.0 or self.tolerance < 0.0:
            raise ConfigurationError("sigma_multiplier and tolerance must be non-negative")
        if self.check not in KERNEL_CHECKS:
            raise ConfigurationError(f"check must be one of {KERNEL_CHECKS}, got '{self.check}'")
        if self.variant not in HARNACK_VARIANTS:
            raise ConfigurationError(
                f"variant must be one of {HARNACK_VARIANTS}, got '{self.variant}'"
            )
        if self.metric not in METRICS:
            raise ConfigurationError(f"metric must be one of {METRICS}, got '{self.metric}'")
        if not self.radii:
            raise ConfigurationError("radii must not be empty")

    def settings(self, **changes: Any) -> SimulationSettings:
        base = SimulationSettings(
            H=self.H,
            T=self.T,
            n=self.n,
            paths=self.paths,
            seed=self.seed,
            batch_size=self.batch_size,
            threads=self.threads,
        )
        return base.evolve(**changes) if changes else base

    def to_dict(self) -> dict[str, Any]:
        """Configuration echo embedded in reports."""
        data = asdict(self)
        for key in _OUTPUT_KEYS:
            data.pop(key)
        data["radii"] = list(self.radii)
        return data


# ----------------------------------------------------------------------
# Public API
# ----------------------------------------------------------------------


def bundled_config_path() -> Path:
    return Path(str(pkg_files("fbmlab").joinpath("default_config.json")))


def resolve_config_path(user_path: Optional[str]) -> Optional[Path]:
    """Return the user configuration file, if any.

    Resolution order:
        1. Explicit ``--config`` flag.
        2. ``fbmlab.json`` in the current working directory.

    The bundled defaults are always applied underneath.
    """
    if user_path:
        return Path(os.path.abspath(user_path))
    cwd_config = Path(os.getcwd()) / CONFIG_FILENAME
    if cwd_config.is_file():
        return cwd_config
    return None


def load_config_file(path: str | Path) -> dict[str, dict[str, Any]]:
    """Read a JSON or ``key=value`` configuration file into its two sections.

    Raises:
        ConfigurationError: If the file is missing or malformed.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"Config file not found: {path.resolve()}")
    if path.suffix.lower() == ".json":
        return _load_json(path)
    return _load_key_value(path)


def build_config(
    command: str,
    overrides: Optional[dict[str, Any]] = None,
    config_path: Optional[str | Path] = None,
) -> ExperimentConfig:
    """Merge bundled defaults, the user file and explicit overrides.

    ``None`` values in ``overrides`` mean "not given" and do not override.
    """
    layers = [load_config_file(bundled_config_path())]
    if config_path is not None:
        layers.append(load_config_file(config_path))
        logger.info("Using config file %s", config_path)

    merged: dict[str, Any] = {}
    for layer in layers:
        merged.update(layer.get("defaults", {}))
        merged.update(layer.get("commands", {}).get(command, {}))
    for key, value in (overrides or {}).items():
        if value is not None:
            merged[key] = value
    merged["command"] = command
    return ExperimentConfig(**{key: _coerce(key, value) for key, value in merged.items()})


def generate_config(directory: str | Path) -> Path:
    """Write a starter ``fbmlab.json`` into ``directory``.

    Raises:
        ConfigurationError: If the file already exists.
    """
    output_path = Path(directory) / CONFIG_FILENAME
    if output_path.exists():
        raise ConfigurationError(f"{output_path} already exists. Remove it first.")
    config = json.loads(bundled_config_path().read_text(encoding="utf-8"))
    with output_path.open("w", encoding="utf-8", newline="\n") as fp:
        json.dump(config, fp, indent=2)
        fp.write("\n")
    return output_path


# ----------------------------------------------------------------------
# Internal helpers
# ----------------------------------------------------------------------

_KNOWN_KEYS = {f.name for f in fields(ExperimentConfig)}


def _load_json(path: Path) -> dict[str, dict[str, Any]]:
    try:
        with path.open("r", encoding="utf-8") as fp:
            raw = json.load(fp)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"Invalid JSON in config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigurationError(f"Config {path} must contain a JSON object")
    if "defaults" not in raw and "commands" not in raw:
        raw = {"defaults": raw}
    unexpected = set(raw) - {"defaults", "commands"}
    if unexpected:
        raise ConfigurationError(f"Unknown sections in {path}: {sorted(unexpected)}")
    sections = {"defaults": dict(raw.get("defaults") or {}), "commands": {}}
    for command, values in (raw.get("commands") or {}).items():
        if command not in COMMANDS:
            raise ConfigurationError(f"Unknown command section '{command}' in {path}")
        sections["commands"][command] = dict(values)
    _check_keys(sections, path)
    return sections


def _load_key_value(path: Path) -> dict[str, dict[str, Any]]:
    sections: dict[str, dict[str, Any]] = {"defaults": {}, "commands": {}}
    for number, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigurationError(f"{path}:{number}: expected key=value, got '{line}'")
        key, value = key.strip(), value.strip()
        command, dot, name = key.partition(".")
        if dot:
            if command not in COMMANDS:
                raise ConfigurationError(f"{path}:{number}: unknown command '{command}'")
            sections["commands"].setdefault(command, {})[name] = value
        else:
            sections["defaults"][key] = value
    _check_keys(sections, path)
    return sections


def _check_keys(sections: dict[str, dict[str, Any]], path: Path) -> None:
    keys = set(sections["defaults"])
    for values in sections["commands"].values():
        keys |= set(values)
    unknown = keys - _KNOWN_KEYS - {"command"}
    if unknown:
        raise ConfigurationError(f"Unknown config keys in {path}: {sorted(unknown)}")


def _coerce(key: str, value: Any) -> Any:
    if key not in _KNOWN_KEYS:
        raise ConfigurationError(f"Unknown config key '{key}'")
    if isinstance(value, str) and key in _OPTIONAL_KEYS and value.lower() in ("", "null", "none"):
        return None
    if value is None:
        if key in _OPTIONAL_KEYS:
            return None
        raise ConfigurationError(f"'{key}' must not be null")
    try:
        if key in _STR_KEYS:
            return str(value)
        if key in _BOOL_KEYS:
            return _to_bool(value)
        if key in _INT_KEYS:
            number = float(value)
            if not number.is_integer():
                raise ValueError(f"{value!r} is not an integer")
            return int(number)
        if key == "radii":
            items = value.split(",") if isinstance(value, str) else value
            return tuple(float(item) for item in items)
        return float(value)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"Invalid value for '{key}': {value!r}") from exc


def _to_bool(value: Any) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"{value!r} is not a boolean")
