"""Flat pipeline configuration shared by the library helpers and the CLI."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .geometry import ScreenGeometry


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    # screen
    width_px: int = 2560
    height_px: int = 1600
    width_mm: float = 640.0
    height_mm: float = 400.0
    viewing_distance_mm: float = 750.0
    # preprocessing
    jitter_amplitude_deg: float = 1.0
    jitter_freq_hz: float = 100.0
    boundary_margin_px: float = 100.0
    max_gap_ms: float = 50.0
    cutoff_hz: float = 30.0
    filter_taps: int = 31
    # segmentation
    v_detect: float = 100.0
    v_start: float = 60.0
    v_final: float = 60.0
    min_saccade_ms: float = 10.0
    min_amplitude_deg: float = 0.5
    min_fixation_ms: float = 60.0
    # warp
    projection: str = "middle"
    quad_px: float = 25.0
    kernel: int = 5
    # selection
    n_trees: int = 20
    attrs_per_tree: int = 5
    max_depth: int = 50
    min_leaf: int = 2
    seed: int = 0

    def __post_init__(self):
        try:
            self.geometry
        except ValueError as e:
            raise ConfigError(str(e)) from None
        if self.projection.lower() not in ("bottom", "peak", "middle"):
            raise ConfigError(f"projection must be bottom, peak or middle, got {self.projection!r}")
        if not (self.v_detect >= self.v_start > 0 and self.v_detect >= self.v_final > 0):
            raise ConfigError("need v_detect >= v_start > 0 and v_detect >= v_final > 0")
        if self.quad_px <= 0 or self.kernel < 1 or self.filter_taps < 3:
            raise ConfigError("quad_px must be > 0, kernel >= 1, filter_taps >= 3")
        if not 1 <= self.attrs_per_tree <= 10 or self.n_trees < 1 or self.max_depth < 1 or self.min_leaf < 1:
            raise ConfigError("invalid forest parameters")

    @property
    def geometry(self) -> ScreenGeometry:
        return ScreenGeometry(self.width_px, self.height_px, self.width_mm,
                              self.height_mm, self.viewing_distance_mm)

    def preprocess_kwargs(self) -> dict:
        return dict(jitter_amplitude_deg=self.jitter_amplitude_deg, jitter_freq_hz=self.jitter_freq_hz,
                    boundary_margin_px=self.boundary_margin_px, max_gap_ms=self.max_gap_ms,
                    cutoff_hz=self.cutoff_hz, numtaps=self.filter_taps)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_mapping(cls, data: dict) -> "PipelineConfig":
        known = {f.name: f for f in fields(cls)}
        unknown = sorted(set(data) - set(known))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        kwargs = {}
        for key, value in data.items():
            default = known[key].default
            try:
                if isinstance(value, bool):
                    raise TypeError
                if isinstance(default, int):
                    number = float(value)
                    if number != int(number):
                        raise ValueError
                    kwargs[key] = int(number)
                elif isinstance(default, float):
                    kwargs[key] = float(value)
                elif isinstance(default, str) and isinstance(value, str):
                    kwargs[key] = value
                else:
                    raise TypeError
            except (TypeError, ValueError, OverflowError):
                raise ConfigError(f"bad value for {key}: {value!r}") from None
        return cls(**kwargs)

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        """Read a flat JSON object, or ``key = value`` lines (``#`` comments)."""
        text = Path(path).read_text(encoding="utf-8")
        stripped = text.lstrip()
        if stripped.startswith("{"):
            try:
                data = json.loads(text)
            except json.JSONDecodeError as e:
                raise ConfigError(f"config is not valid JSON: {e}") from None
            if not isinstance(data, dict) or any(isinstance(v, (dict, list)) for v in data.values()):
                raise ConfigError("config must be a flat JSON object")
            return cls.from_mapping(data)
        data = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            data[key] = value.strip("\"'")
        return cls.from_mapping(data)
