"""Experiment configuration.

One flat record of physical and sampling parameters, overridable from a JSON
file.  Defaults are the desk-scale setup (64 elements, 256 subcarriers at
1.485 MHz spacing, so the swept bandwidth matches the full-scale 380.16 MHz);
`paper_scale` switches to the full-size grid.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace
from pathlib import Path

from .channel import ArrayConfig, FrequencyGrid, thermal_noise_power_w
from .geometry import SPEED_OF_LIGHT, DeploymentRegion


@dataclass(frozen=True)
class ExperimentConfig:
    scene_id: str = "l"
    facet_deg: float = 1.0

    range_min_m: float = 5.0
    range_max_m: float = 200.0
    az_min_deg: float = -60.0
    az_max_deg: float = 60.0

    f0_hz: float = 28e9
    delta_f_hz: float = 1.485e6
    num_subcarriers: int = 256
    num_elements: int = 64
    spacing_m: float | None = None  # None -> half wavelength at f0

    tx_power_dbm: float = 23.0
    noise_figure_db: float = 7.0
    # log floor below the thermal noise floor (~-135 dB at desk spacing)
    epsilon_db_floor: float = 1e-15

    sweep_start_deg: float = -60.0
    sweep_end_deg: float = 60.0
    d_max_m: float = 200.0

    def with_scene(self, scene_id: str) -> "ExperimentConfig":
        return replace(self, scene_id=scene_id)

    @property
    def element_spacing_m(self) -> float:
        if self.spacing_m is not None:
            return self.spacing_m
        return SPEED_OF_LIGHT / self.f0_hz / 2.0

    def grid(self) -> FrequencyGrid:
        return FrequencyGrid(self.f0_hz, self.delta_f_hz, self.num_subcarriers)

    def array(self) -> ArrayConfig:
        return ArrayConfig(self.num_elements, self.element_spacing_m)

    def region(self) -> DeploymentRegion:
        return DeploymentRegion(
            range_min_m=self.range_min_m,
            range_max_m=self.range_max_m,
            az_min_deg=self.az_min_deg,
            az_max_deg=self.az_max_deg,
        )

    @property
    def tx_power_w(self) -> float:
        return 10.0 ** (self.tx_power_dbm / 10.0) / 1e3

    @property
    def noise_power_w(self) -> float:
        return thermal_noise_power_w(self.delta_f_hz, self.noise_figure_db)

    @property
    def sweep_start_rad(self) -> float:
        return math.radians(self.sweep_start_deg)

    @property
    def sweep_end_rad(self) -> float:
        return math.radians(self.sweep_end_deg)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in cls.__dataclass_fields__.values()}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path: str | Path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    @classmethod
    def paper_scale(cls, **overrides) -> "ExperimentConfig":
        base = cls(delta_f_hz=240e3, num_subcarriers=1584, num_elements=128)
        return replace(base, **overrides)
