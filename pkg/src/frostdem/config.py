"""Flat sectioned key=value experiment configuration.

Format: ``[section]`` headers, ``key = value`` lines, ``#`` comments, no
nesting.  Every read goes through a typed accessor that names the offending
``section.key`` on failure.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .errors import InvalidConfigError
from .packing import PackingConfig


def parse_config_text(text: str, source: str = "<config>") -> dict[str, dict[str, str]]:
    sections: dict[str, dict[str, str]] = {}
    current: dict[str, str] | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            if not name:
                raise InvalidConfigError(f"{source}:{lineno}: empty section name")
            current = sections.setdefault(name, {})
            continue
        if "=" not in line:
            raise InvalidConfigError(
                f"{source}:{lineno}: expected 'key = value', got {line!r}")
        if current is None:
            raise InvalidConfigError(
                f"{source}:{lineno}: key outside any [section]")
        key, value = line.split("=", 1)
        current[key.strip()] = value.strip()
    return sections


class Section:
    """Typed view over one config section."""

    def __init__(self, name: str, values: dict[str, str]):
        self.name = name
        self.values = values

    def _raw(self, key: str, default=None, required=False) -> str | None:
        if key in self.values:
            return self.values[key]
        if required:
            raise InvalidConfigError(f"[{self.name}] missing required key {key!r}")
        return default

    def get_str(self, key: str, default: str | None = None,
                required: bool = False) -> str | None:
        return self._raw(key, default, required)

    def get_float(self, key: str, default: float | None = None,
                  required: bool = False) -> float | None:
        raw = self._raw(key, None, required)
        if raw is None:
            return default
        try:
            return float(raw)
        except ValueError:
            raise InvalidConfigError(
                f"[{self.name}] {key} must be a number, got {raw!r}") from None

    def get_int(self, key: str, default: int | None = None,
                required: bool = False) -> int | None:
        raw = self._raw(key, None, required)
        if raw is None:
            return default
        try:
            return int(raw)
        except ValueError:
            raise InvalidConfigError(
                f"[{self.name}] {key} must be an integer, got {raw!r}") from None

    def get_bool(self, key: str, default: bool = False) -> bool:
        raw = self._raw(key)
        if raw is None:
            return default
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise InvalidConfigError(f"[{self.name}] {key} must be a boolean, got {raw!r}")

    def get_float_list(self, key: str, default=None, required=False):
        raw = self._raw(key, None, required)
        if raw is None:
            return default
        try:
            return [float(v) for v in raw.split(",") if v.strip()]
        except ValueError:
            raise InvalidConfigError(
                f"[{self.name}] {key} must be comma-separated numbers, "
                f"got {raw!r}") from None


@dataclass
class ExperimentConfig:
    """Parsed experiment file plus run-level seed and output directory."""

    sections: dict[str, dict[str, str]]
    source: str = "<config>"

    @classmethod
    def from_path(cls, path: str | Path) -> "ExperimentConfig":
        path = Path(path)
        if not path.exists():
            raise InvalidConfigError(f"config file not found: {path}")
        return cls(parse_config_text(path.read_text(), str(path)), str(path))

    def section(self, name: str, required: bool = True) -> Section:
        if name not in self.sections:
            if required:
                raise InvalidConfigError(
                    f"{self.source}: missing required section [{name}]")
            return Section(name, {})
        return Section(name, self.sections[name])

    @property
    def seed(self) -> int:
        return self.section("run", required=False).get_int("seed", 0)

    @property
    def out_dir(self) -> str | None:
        return self.section("run", required=False).get_str("out_dir")

    def packing_config(self, seed: int | None = None) -> PackingConfig:
        s = self.section("packing")
        cfg = PackingConfig(
            target_porosity=s.get_float("target_porosity", required=True),
            rock_radius_min=s.get_float("rock_radius_min", required=True),
            rock_radius_max=s.get_float("rock_radius_max", required=True),
            water_radius_min=s.get_float("water_radius_min", 0.8),
            water_radius_max=s.get_float("water_radius_max", 0.95),
            cylinder_radius=s.get_float("cylinder_radius", required=True),
            cylinder_height=s.get_float("cylinder_height", required=True),
            rock_density=s.get_float("rock_density", 2600.0),
            water_density=s.get_float("water_density", 960.0),
            rng_seed=self.seed if seed is None else seed,
            solid_fraction=s.get_float("solid_fraction", 0.60),
        )
        cfg.validate()
        return cfg
