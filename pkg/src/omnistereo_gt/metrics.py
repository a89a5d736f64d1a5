"""Masked depth / disparity error metrics.

Dataset-level MAE, RMSE and MARE average a per-image value over images, so
each image counts equally regardless of how many labeled pixels it has.
``aggregate="pixel"`` pools all pixels instead, for cross-checking.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .errors import DegenerateInputError
from .rasters import DepthMap

SCENE_TAGS = ("indoor", "outdoor", "night_outdoor")


def _as_map(x) -> DepthMap:
    if isinstance(x, DepthMap):
        return x
    return DepthMap.from_nan(x)


def _pairs(preds, gts):
    preds = [_as_map(p) for p in preds]
    gts = [_as_map(g) for g in gts]
    if len(preds) != len(gts):
        raise ValueError(f"{len(preds)} predictions for {len(gts)} ground-truth maps")
    if not gts:
        raise DegenerateInputError("no images to evaluate")
    for i, (p, g) in enumerate(zip(preds, gts)):
        if p.values.shape != g.values.shape:
            raise ValueError(f"image {i}: prediction {p.values.shape} vs ground truth {g.values.shape}")
    return preds, gts


def _per_image_errors(preds, gts, names=None):
    """Yield ``(gt_values, pred_values)`` over the shared valid pixels of each image."""
    for i, (p, g) in enumerate(zip(*_pairs(preds, gts))):
        mask = g.valid & p.valid
        if not mask.any():
            name = names[i] if names else f"#{i}"
            raise DegenerateInputError(f"image {name} has no pixel with both ground truth and prediction")
        yield g.values[mask], p.values[mask]


def _reduce(preds, gts, per_pixel, finish, aggregate, names):
    if aggregate == "image":
        return float(np.mean([finish(np.mean(per_pixel(g, p))) for g, p in _per_image_errors(preds, gts, names)]))
    if aggregate == "pixel":
        vals = np.concatenate([per_pixel(g, p) for g, p in _per_image_errors(preds, gts, names)])
        return float(finish(np.mean(vals)))
    raise ValueError("aggregate must be 'image' or 'pixel'")


def masked_mae(preds, gts, aggregate="image", names=None) -> float:
    return _reduce(preds, gts, lambda g, p: np.abs(g - p), lambda v: v, aggregate, names)


def masked_rmse(preds, gts, aggregate="image", names=None) -> float:
    """Root of the per-image mean squared error, averaged over images."""
    return _reduce(preds, gts, lambda g, p: (g - p) ** 2, np.sqrt, aggregate, names)


def masked_mare(preds, gts, aggregate="image", names=None) -> float:
    return _reduce(preds, gts, lambda g, p: np.abs((g - p) / g), lambda v: v, aggregate, names)


def point_metrics(estimates, truths) -> dict:
    """MAE, RMSE and MARE over a flat list of values."""
    est = np.asarray(estimates, dtype=float)
    true = np.asarray(truths, dtype=float)
    if est.shape != true.shape or est.size == 0:
        raise DegenerateInputError("need equal-length, nonempty estimate and truth lists")
    err = est - true
    return {
        "mae": float(np.mean(np.abs(err))),
        "rmse": float(np.sqrt(np.mean(err ** 2))),
        "mare": float(np.mean(np.abs(err / true))),
    }


def inlier_ratio(estimates, truths, t_inlier=0.01, mode="relative") -> float:
    """Fraction of estimates with error below ``t_inlier``.

    ``mode="relative"`` compares ``|est - true| / true``; ``"absolute"``
    compares ``|est - true|`` directly.
    """
    est = np.asarray(estimates, dtype=float)
    true = np.asarray(truths, dtype=float)
    if est.shape != true.shape or est.size == 0:
        raise DegenerateInputError("need equal-length, nonempty estimate and truth lists")
    err = np.abs(est - true)
    if mode == "relative":
        err = err / np.abs(true)
    elif mode != "absolute":
        raise ValueError("mode must be 'relative' or 'absolute'")
    return float(np.mean(err < t_inlier))


@dataclass
class LRCEResult:
    value: float
    images_used: int
    pairs_used: int
    pairs_skipped_no_pred: int


def lrce_details(preds, gts) -> LRCEResult:
    """Left-right consistency error with bookkeeping.

    A row is a valid pair when the ground truth labels both its first and
    last pixel. Pairs where the prediction lacks either edge are skipped and
    counted. Images without any pair do not enter the average.
    """
    per_image = []
    used = skipped = 0
    for p, g in zip(*_pairs(preds, gts)):
        gt_pair = g.valid[:, 0] & g.valid[:, -1]
        both = gt_pair & p.valid[:, 0] & p.valid[:, -1]
        skipped += int((gt_pair & ~both).sum())
        if not both.any():
            continue
        e_gt = np.abs(g.values[both, 0] - g.values[both, -1])
        e_pred = np.abs(p.values[both, 0] - p.values[both, -1])
        per_image.append(np.mean(np.abs(e_gt - e_pred)))
        used += int(both.sum())
    if not per_image:
        raise DegenerateInputError("no row is labeled at both image edges")
    return LRCEResult(float(np.mean(per_image)), len(per_image), used, skipped)


def lrce(preds, gts) -> float:
    return lrce_details(preds, gts).value


@dataclass
class MetricsReport:
    mae: float
    rmse: float
    mare: float
    lrce: float | None
    image_count: int
    evaluated_pixel_count: int
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate_maps(preds, gts, completed_gts=None, aggregate="image", names=None) -> MetricsReport:
    """All metrics for a set of images; LRCE only when completed ground truth is given."""
    preds, gts = _pairs(preds, gts)
    n_px = sum(int((p.valid & g.valid).sum()) for p, g in zip(preds, gts))
    lr = None
    diag = {}
    if completed_gts is not None:
        d = lrce_details(preds, completed_gts)
        lr = d.value
        diag = {"lrce_images": d.images_used, "lrce_pairs": d.pairs_used, "lrce_pairs_skipped": d.pairs_skipped_no_pred}
    return MetricsReport(
        mae=masked_mae(preds, gts, aggregate, names),
        rmse=masked_rmse(preds, gts, aggregate, names),
        mare=masked_mare(preds, gts, aggregate, names),
        lrce=lr,
        image_count=len(gts),
        evaluated_pixel_count=n_px,
        diagnostics=diag,
    )


def evaluate_by_scene(
    preds: Sequence,
    gts: Sequence,
    tags: Sequence[str | None],
    completed_gts: Sequence | None = None,
    aggregate: str = "image",
    names: Sequence[str] | None = None,
) -> dict:
    """Metrics overall and per scene tag; untagged images only count in ``"all"``."""
    out = {"all": evaluate_maps(preds, gts, completed_gts, aggregate, names).to_dict()}
    for tag in sorted({t for t in tags if t}):
        sel = [i for i, t in enumerate(tags) if t == tag]
        pick = lambda seq: None if seq is None else [seq[i] for i in sel]  # noqa: E731
        out[tag] = evaluate_maps(pick(list(preds)), pick(list(gts)), pick(completed_gts), aggregate, pick(names)).to_dict()
    return out
