"""Masked depth and disparity rasters."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEPTH = "depth"
DISPARITY = "disparity"
UNITS = {DEPTH: "m", DISPARITY: "deg"}


@dataclass
class DepthMap:
    """Per-pixel optional values with an explicit validity mask.

    Invalid pixels always hold 0 in ``values`` so two maps with the same
    labels compare equal bytewise. ``kind`` is ``"depth"`` (meters) or
    ``"disparity"`` (degrees).
    """

    values: np.ndarray
    valid: np.ndarray
    kind: str = DEPTH
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.values.ndim != 2 or self.values.shape != self.valid.shape:
            raise ValueError("values and mask must be 2-D arrays of equal shape")
        if self.kind not in UNITS:
            raise ValueError(f"unknown raster kind {self.kind!r}")
        if not np.all(np.isfinite(self.values[self.valid])):
            raise ValueError("valid pixels must hold finite values")
        self.values = np.where(self.valid, self.values, 0.0)

    @classmethod
    def empty(cls, width: int, height: int, kind: str = DEPTH) -> "DepthMap":
        return cls(np.zeros((height, width)), np.zeros((height, width), dtype=bool), kind)

    @classmethod
    def from_nan(cls, values, kind: str = DEPTH) -> "DepthMap":
        """Build from an array where NaN marks missing pixels."""
        values = np.asarray(values, dtype=np.float64)
        valid = np.isfinite(values)
        return cls(np.where(valid, values, 0.0), valid, kind)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def unit(self) -> str:
        return UNITS[self.kind]

    @property
    def n_valid(self) -> int:
        return int(self.valid.sum())

    def to_nan(self) -> np.ndarray:
        return np.where(self.valid, self.values, np.nan)

    def copy(self) -> "DepthMap":
        return DepthMap(self.values.copy(), self.valid.copy(), self.kind, dict(self.meta))

    def same_labels(self, other: "DepthMap") -> bool:
        return (
            self.values.shape == other.values.shape
            and np.array_equal(self.valid, other.valid)
            and np.array_equal(self.values, other.values)
        )


def splat_min(rows, cols, values, width: int, height: int, kind: str = DEPTH) -> DepthMap:
    """Write values to integer pixels, keeping the smallest value on collisions."""
    out = np.full((height, width), np.inf)
    np.minimum.at(out, (np.asarray(rows, dtype=np.intp), np.asarray(cols, dtype=np.intp)), values)
    valid = np.isfinite(out)
    return DepthMap(np.where(valid, out, 0.0), valid, kind)
