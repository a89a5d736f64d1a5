"""False-color rendering of depth and disparity rasters."""

from __future__ import annotations

import numpy as np
from matplotlib import colormaps

from .rasters import DepthMap


def normalize(values, vmin: float, vmax: float, mode: str = "linear"):
    """Map values to [0, 1]; ``mode="inverse"`` normalizes ``1 / value`` so near is high."""
    if not vmax > vmin:
        raise ValueError(f"need min < max, got {vmin} and {vmax}")
    values = np.asarray(values, dtype=float)
    if mode == "linear":
        t = (values - vmin) / (vmax - vmin)
    elif mode == "inverse":
        if vmin <= 0:
            raise ValueError("inverse normalization needs a positive minimum")
        with np.errstate(divide="ignore"):
            t = (1.0 / values - 1.0 / vmax) / (1.0 / vmin - 1.0 / vmax)
    else:
        raise ValueError("mode must be 'linear' or 'inverse'")
    return np.clip(t, 0.0, 1.0)


def colorize(depth: DepthMap, colormap: str = "turbo", vmin=None, vmax=None, mode: str = "linear") -> np.ndarray:
    """RGB uint8 image of shape ``(H, W, 3)``; missing pixels are black.

    Uses the 256-entry lookup table of the named matplotlib colormap, so a
    normalized value ``t`` maps to entry ``round(t * 255)``. ``vmin``/``vmax``
    default to the range of the valid values; a constant map then renders
    as the lowest color.
    """
    if colormap not in colormaps:
        raise ValueError(f"unknown colormap {colormap!r}")
    vals = depth.values[depth.valid]
    auto = vmin is None and vmax is None
    if vmin is None:
        vmin = float(vals.min()) if vals.size else 1.0
    if vmax is None:
        vmax = float(vals.max()) if vals.size else 2.0
    if auto and vmax == vmin:
        vmax = vmin + 1.0
    t = normalize(np.where(depth.valid, depth.values, vmin if mode == "linear" else vmax), vmin, vmax, mode)
    lut = (colormaps[colormap].resampled(256)(np.arange(256))[:, :3] * 255).round().astype(np.uint8)
    rgb = lut[np.round(t * 255).astype(np.intp)]
    rgb[~depth.valid] = 0
    return rgb
