import dataclasses
import enum
import hashlib
import typing
from pathlib import Path
from typing import Any, Dict, Iterable, Mapping, Optional

import yaml

from ..classes.configs import FotConfig
from ..classes.errors import ConfigError
from ..logger.logger import Logger, LoggerManager
from ..utils.counters import Counters, CounterTypes
from ..utils.file_manager import FilesMngr

TRUE_WORDS = {"1", "true", "yes", "on"}
FALSE_WORDS = {"0", "false", "no", "off"}


class ConfigMngr:
    """
    Reads, writes and hashes `FotConfig`.

    Files are flat `key = value` text; `.yaml`/`.yml` files holding a flat
    mapping are accepted too. Command-line overrides are applied on top.
    """

    def __init__(self):
        self.logger: Logger = LoggerManager().getLogger(self.__class__.__qualname__)
        self.file_manager = FilesMngr()
        self._types = typing.get_type_hints(FotConfig)
        self._fields = {
            config_field.name
            for config_field in dataclasses.fields(FotConfig)
            if config_field.init
        }

    def load(
        self, path: Optional[str] = None, overrides: Optional[Mapping[str, Any]] = None
    ) -> FotConfig:
        raw: Dict[str, Any] = {}
        if path:
            raw.update(self.read_file(path))
        for key, value in (overrides or {}).items():
            if value is not None:
                raw[key] = value
        config = self.from_mapping(raw)
        for warning in config.warnings:
            self.logger.warning(warning)
        if config.k_over_budget():
            Counters().increase(CounterTypes.K_OVER_BUDGET)
        return config

    def read_file(self, path: str) -> Dict[str, Any]:
        self.file_manager.is_path_exist(path, "Config file")
        if Path(path).suffix.lower() in (".yaml", ".yml"):
            with open(path, "r", encoding="utf-8") as handle:
                data = yaml.safe_load(handle) or {}
            if not isinstance(data, dict):
                raise ConfigError(f"Config file '{path}' must hold a flat mapping")
            return data

        values: Dict[str, Any] = {}
        for number, line in enumerate(self.file_manager.read_lines(path), start=1):
            if "=" not in line:
                raise ConfigError(f"{path}:{number}: expected 'key = value', got {line!r}")
            key, value = line.split("=", 1)
            values[key.strip()] = value.split("#", 1)[0].strip()
        return values

    def from_mapping(self, raw: Mapping[str, Any]) -> FotConfig:
        unknown = sorted(set(raw) - self._fields)
        if unknown:
            raise ConfigError(f"Unknown config key '{unknown[0]}'")
        values = {key: self.coerce(key, value) for key, value in raw.items()}
        return FotConfig(**values)

    def coerce(self, key: str, value: Any) -> Any:
        target = self._types[key]
        try:
            if typing.get_origin(target) is tuple:
                if isinstance(value, str):
                    value = [part for part in value.replace(" ", "").split(",") if part]
                return tuple(int(part) for part in value)
            if isinstance(target, type) and issubclass(target, enum.Enum):
                return value if isinstance(value, target) else target(str(value).lower())
            if target is bool:
                if isinstance(value, bool):
                    return value
                word = str(value).strip().lower()
                if word in TRUE_WORDS:
                    return True
                if word in FALSE_WORDS:
                    return False
                raise ValueError(f"not a boolean: {value!r}")
            if target is int:
                number = float(value) if isinstance(value, str) else value
                if int(number) != number:
                    raise ValueError(f"not an integer: {value!r}")
                return int(number)
            if target is float:
                return float(value)
            return str(value)
        except (TypeError, ValueError) as error:
            raise ConfigError(f"Invalid value for '{key}': {error}") from None

    def render(self, config: FotConfig, keys: Optional[Iterable[str]] = None) -> list:
        """Canonical `key = value` lines, sorted by key."""
        values = config.to_dict()
        selected = sorted(keys) if keys is not None else sorted(values)
        return [f"{key} = {self._render_value(values[key])}" for key in selected]

    def dump(self, config: FotConfig, path: str):
        self.file_manager.write_lines(path, self.render(config))

    def hash(self, config: FotConfig, keys: Iterable[str], upstream: Iterable[str] = ()) -> str:
        """
        SHA-256 of the canonical rendering of `keys` followed by the hashes of
        upstream stages; the first 16 hex digits are returned.
        """
        digest = hashlib.sha256()
        for line in self.render(config, keys):
            digest.update(line.encode("utf-8") + b"\n")
        for upstream_hash in upstream:
            digest.update(f"upstream = {upstream_hash}\n".encode("utf-8"))
        return digest.hexdigest()[:16]

    @staticmethod
    def _render_value(value: Any) -> str:
        if isinstance(value, enum.Enum):
            return str(value.value)
        if isinstance(value, (tuple, list)):
            return ",".join(str(part) for part in value)
        if isinstance(value, bool):
            return "true" if value else "false"
        return str(value)
