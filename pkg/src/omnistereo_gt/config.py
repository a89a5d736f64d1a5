"""Pipeline configuration loaded from a JSON file.

Every key is optional; missing keys take the defaults below::

    {
      "rig": {"baseline": 0.191, "lidar_offset": 0.45, "fov_v": 42.4,
              "n_beams": 64, "fov_h": 360.0, "n_channels_h": 1024, "frame_rate": 10.0},
      "geometry": {"width": 1920, "height": 512, "theta_min": 48.0, "theta_max": 144.0},
      "completion": {"m": 4, "k": 17, "rip": 0.8, "t_ood": 0.375, "n_grid": 20000000,
                     "t_theta": 68.8, "t_inlier": 0.01, "inlier_mode": "relative",
                     "aggregation": "no_movement"},
      "calibration": {"gtol": 1e-8, "xtol": 1e-10, "max_iter": 500},
      "disparity_clamp": [0.048, 23.0],
      "full_height_px": 960,
      "seed": 0,
      "workers": 1
    }
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

from .completion import CompletionParams, RigConfig
from .geometry import DISPARITY_MAX_DEG, DISPARITY_MIN_DEG, FULL_HEIGHT_PX, EquirectGeometry, RigGeometry
from .io import read_json


@dataclass
class CalibrationOptions:
    gtol: float = 1e-8
    xtol: float = 1e-10
    max_iter: int = 500


@dataclass
class PipelineConfig:
    rig: RigGeometry = field(default_factory=RigGeometry)
    lidar: RigConfig = field(default_factory=RigConfig)
    geometry: EquirectGeometry = field(default_factory=EquirectGeometry.dataset)
    completion: CompletionParams = field(default_factory=CompletionParams)
    calibration: CalibrationOptions = field(default_factory=CalibrationOptions)
    disparity_clamp: tuple = (DISPARITY_MIN_DEG, DISPARITY_MAX_DEG)
    full_height_px: int = FULL_HEIGHT_PX
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        lo, hi = self.disparity_clamp
        if not 0 < lo < hi < 180:
            raise ValueError(f"invalid disparity clamp {self.disparity_clamp}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        data = dict(data)
        known = {"rig", "geometry", "completion", "calibration", "disparity_clamp", "full_height_px", "seed", "workers"}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        rig = dict(data.pop("rig", {}))
        geom_keys = {f.name for f in fields(RigGeometry)}
        lidar_keys = {f.name for f in fields(RigConfig)}
        bad = set(rig) - geom_keys - lidar_keys
        if bad:
            raise ValueError(f"unknown rig keys: {sorted(bad)}")
        try:
            return cls._build(data, rig, geom_keys, lidar_keys)
        except TypeError as exc:
            raise ValueError(f"invalid config: {exc}") from None

    @classmethod
    def _build(cls, data, rig, geom_keys, lidar_keys):
        return cls(
            rig=RigGeometry(**{k: v for k, v in rig.items() if k in geom_keys}),
            lidar=RigConfig(**{k: v for k, v in rig.items() if k in lidar_keys}),
            geometry=EquirectGeometry(**{**asdict(EquirectGeometry.dataset()), **data.pop("geometry", {})}),
            completion=CompletionParams(**data.pop("completion", {})),
            calibration=CalibrationOptions(**data.pop("calibration", {})),
            disparity_clamp=tuple(data.pop("disparity_clamp", (DISPARITY_MIN_DEG, DISPARITY_MAX_DEG))),
            **data,
        )

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        return cls.from_dict(read_json(path))

    def to_dict(self) -> dict:
        return {
            "rig": {**asdict(self.rig), **asdict(self.lidar)},
            "geometry": asdict(self.geometry),
            "completion": asdict(self.completion),
            "calibration": asdict(self.calibration),
            "disparity_clamp": list(self.disparity_clamp),
            "full_height_px": self.full_height_px,
            "seed": self.seed,
            "workers": self.workers,
        }
