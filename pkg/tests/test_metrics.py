import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from omnistereo_gt.errors import DegenerateInputError
from omnistereo_gt.metrics import (
    evaluate_by_scene,
    evaluate_maps,
    inlier_ratio,
    lrce,
    lrce_details,
    masked_mae,
    masked_mare,
    masked_rmse,
)
from omnistereo_gt.rasters import DepthMap

nan = np.nan


def test_two_pixel_example():
    gt = np.array([[2.0, 4.0]])
    pred = np.array([[2.5, 3.5]])
    assert masked_mae([pred], [gt]) == pytest.approx(0.5)
    assert masked_rmse([pred], [gt]) == pytest.approx(0.5)
    assert masked_mare([pred], [gt]) == pytest.approx(0.1875)


def test_identical_is_zero():
    gt = np.array([[1.0, 2.0], [nan, 5.0]])
    for f in (masked_mae, masked_rmse, masked_mare):
        assert f([gt.copy()], [gt]) == 0.0


def test_per_image_then_mean():
    gt1, pr1 = np.ones((1, 1)), np.full((1, 1), 2.0)       # one pixel, MAE 1
    gt2, pr2 = np.ones((3, 3)), np.full((3, 3), 4.0)       # nine pixels, MAE 3
    assert masked_mae([pr1, pr2], [gt1, gt2]) == pytest.approx(2.0)
    assert masked_mae([pr1, pr2], [gt1, gt2], aggregate="pixel") == pytest.approx((1 + 27) / 10)


def test_rmse_is_per_image_root():
    gt = [np.zeros((1, 2)) + 1, np.zeros((1, 2)) + 1]
    pred = [np.array([[1.0, 3.0]]), np.array([[1.0, 1.0]])]
    assert masked_rmse(pred, gt) == pytest.approx(np.sqrt(2.0) / 2)


def test_invalid_gt_pixels_ignored():
    gt = np.array([[2.0, nan]])
    pred = np.array([[2.0, 99.0]])
    assert masked_mae([pred], [gt]) == 0.0


def test_empty_image_names_it():
    gt = np.array([[nan, nan]])
    with pytest.raises(DegenerateInputError, match="frame_7"):
        masked_mae([np.ones((1, 2))], [gt], names=["frame_7"])


def test_lrce_examples():
    gt = np.array([[10.0, 5.0, 10.0]])
    assert lrce([gt.copy()], [gt]) == 0.0
    assert lrce([np.array([[10.0, 1.0, 12.0]])], [gt]) == pytest.approx(2.0)
    # both maps perfectly periodic, different values
    assert lrce([np.array([[3.0, 1.0, 3.0]])], [gt]) == 0.0


def test_lrce_skips_pairs_without_prediction():
    gt = np.array([[10.0, 1.0, 10.0], [4.0, 1.0, 6.0]])
    pred = np.array([[nan, 1.0, 10.0], [4.0, 1.0, 5.0]])
    d = lrce_details([pred], [gt])
    assert d.pairs_used == 1 and d.pairs_skipped_no_pred == 1
    assert d.value == pytest.approx(1.0)
    with pytest.raises(DegenerateInputError):
        lrce([np.array([[1.0, 2.0]])], [np.array([[nan, 2.0]])])


def test_inlier_ratio_examples():
    assert inlier_ratio([3.0, 4.0], [3.0, 4.0]) == 1.0
    assert inlier_ratio([10.05, 11.0], [10.0, 10.0], 0.01) == 0.5
    assert inlier_ratio([1.0, 2.0001], [1.0, 2.0], 0.0) == 0.0
    assert inlier_ratio([10.005, 11.0], [10.0, 10.0], 0.01, mode="absolute") == 0.5
    with pytest.raises(DegenerateInputError):
        inlier_ratio([], [])


def _random_maps(rng, n):
    out = []
    for _ in range(n):
        h, w = rng.integers(1, 6, 2)
        gt = rng.uniform(0.5, 20, (h, w))
        gt[rng.random((h, w)) < 0.3] = nan
        gt[0, 0] = 1.0
        gt[:, -1] = np.where(np.isnan(gt[:, -1]), 2.0, gt[:, -1])
        gt[:, 0] = np.where(np.isnan(gt[:, 0]), 3.0, gt[:, 0])
        pred = gt + rng.normal(0, 0.5, (h, w))
        out.append((DepthMap.from_nan(np.abs(pred) + 0.1), DepthMap.from_nan(gt)))
    return out


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_metrics_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    pairs = _random_maps(rng, int(rng.integers(1, 5)))
    preds, gts = [p for p, _ in pairs], [g for _, g in pairs]
    base = evaluate_maps(preds, gts, completed_gts=gts)
    order = rng.permutation(len(pairs))
    perm = evaluate_maps([preds[i] for i in order], [gts[i] for i in order], completed_gts=[gts[i] for i in order])
    for key in ("mae", "rmse", "mare", "lrce"):
        assert getattr(perm, key) == pytest.approx(getattr(base, key), rel=1e-12)
    # pixel order within an image: permute rows and columns consistently (edge columns stay put for LRCE)
    rows = [rng.permutation(g.height) for g in gts]
    shuf = lambda m, r: DepthMap(m.values[r], m.valid[r])  # noqa: E731
    p2 = [shuf(p, r) for p, r in zip(preds, rows)]
    g2 = [shuf(g, r) for g, r in zip(gts, rows)]
    moved = evaluate_maps(p2, g2, completed_gts=g2)
    for key in ("mae", "rmse", "mare", "lrce"):
        assert getattr(moved, key) == pytest.approx(getattr(base, key), rel=1e-12)


def test_zero_iff_equal():
    rng = np.random.default_rng(0)
    gt = rng.uniform(1, 5, (4, 4))
    assert masked_mae([gt.copy()], [gt]) == 0.0
    pred = gt.copy()
    pred[2, 3] += 1e-6
    assert masked_mae([pred], [gt]) > 0 and masked_rmse([pred], [gt]) > 0 and masked_mare([pred], [gt]) > 0


def test_periodic_maps_lrce_zero():
    rng = np.random.default_rng(1)
    gt, pred = rng.uniform(1, 5, (6, 8)), rng.uniform(1, 5, (6, 8))
    gt[:, -1] = gt[:, 0]
    pred[:, -1] = pred[:, 0]
    assert lrce([pred], [gt]) == 0.0


def test_evaluate_by_scene():
    gts = [np.ones((1, 1)), np.ones((1, 1)), np.ones((1, 1))]
    preds = [np.full((1, 1), 2.0), np.full((1, 1), 4.0), np.full((1, 1), 1.5)]
    out = evaluate_by_scene(preds, gts, ["indoor", "outdoor", None])
    assert out["all"]["mae"] == pytest.approx(1.5)
    assert out["indoor"]["mae"] == 1.0 and out["outdoor"]["mae"] == 3.0
    assert set(out) == {"all", "indoor", "outdoor"}
    assert out["all"]["lrce"] is None
