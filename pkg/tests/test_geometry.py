import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from omnistereo_gt.errors import DegenerateInputError, OutOfBandError
from omnistereo_gt.geometry import (
    EquirectGeometry,
    cart_to_spherical,
    circular_pad,
    cost_volume_cap,
    crop_padding,
    depth_to_disparity,
    disparity_deg_to_pixels,
    disparity_to_depth,
    pixel_to_spherical_direction,
    polar_angle_map,
    spherical_to_cart,
    spherical_to_pixel,
    wrap_azimuth,
)

FULL = EquirectGeometry.full_sphere(1920, 960)
CROP = EquirectGeometry(1920, 512, 48.0, 144.0)
B = 0.191


@pytest.mark.parametrize(
    "p, expected",
    [
        ((0, 0, 1), (1.0, 0.0, 0.0)),
        ((1, 0, 0), (1.0, 90.0, 0.0)),
        ((1, 1, 0), (math.sqrt(2), 90.0, 45.0)),
    ],
)
def test_cart_to_spherical_examples(p, expected):
    assert cart_to_spherical(p) == pytest.approx(expected, abs=1e-12)


def test_cart_to_spherical_zero_vector():
    with pytest.raises(DegenerateInputError):
        cart_to_spherical((0, 0, 0))


@pytest.mark.parametrize(
    "sp, expected",
    [((1, 0, 0), (0, 0, 1)), ((1, 90, 0), (1, 0, 0)), ((2, 90, 90), (0, 2, 0))],
)
def test_spherical_to_cart_examples(sp, expected):
    np.testing.assert_allclose(spherical_to_cart(*sp), expected, atol=1e-15)


def test_azimuth_range_is_half_open():
    assert cart_to_spherical((-1, 0, 0)).phi == -180.0
    assert wrap_azimuth(180.0) == -180.0
    assert wrap_azimuth(-1e-18) < 180.0


def test_cart_round_trip_random():
    rng = np.random.default_rng(0)
    p = rng.normal(size=(10_000, 3)) * rng.uniform(0.01, 100, size=(10_000, 1))
    r, theta, phi = cart_to_spherical(p)
    back = spherical_to_cart(r, theta, phi)
    rel = np.linalg.norm(back - p, axis=1) / np.linalg.norm(p, axis=1)
    assert rel.max() < 1e-12


def test_spherical_round_trip():
    rng = np.random.default_rng(1)
    theta = rng.uniform(1, 179, 2000)
    phi = rng.uniform(-180, 180, 2000)
    r = rng.uniform(0.1, 50, 2000)
    r2, t2, p2 = cart_to_spherical(spherical_to_cart(r, theta, phi))
    np.testing.assert_allclose(r2, r, rtol=1e-12)
    np.testing.assert_allclose(t2, theta, rtol=1e-12)
    np.testing.assert_allclose(p2, phi, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize(
    "theta, phi, geom, expected",
    [
        (90.0, 0.0, FULL, (960.0, 480.0)),
        (0.0, -180.0, FULL, (0.0, 0.0)),
        (48.0, -180.0, CROP, (0.0, 0.0)),
    ],
)
def test_spherical_to_pixel_examples(theta, phi, geom, expected):
    assert tuple(spherical_to_pixel(theta, phi, geom)) == pytest.approx(expected)


def test_spherical_to_pixel_out_of_band():
    with pytest.raises(OutOfBandError):
        spherical_to_pixel(30.0, 0.0, CROP)
    x, y = spherical_to_pixel(30.0, 0.0, CROP, check=False)
    assert y < 0


def test_pixel_to_direction_examples():
    assert tuple(pixel_to_spherical_direction(960, 480, FULL)) == pytest.approx((1, 90, 0))
    assert tuple(pixel_to_spherical_direction(0, 0, FULL)) == pytest.approx((1, 0, -180))
    with pytest.raises(OutOfBandError):
        pixel_to_spherical_direction(-1, 0, FULL)


@pytest.mark.parametrize("geom", [FULL, CROP])
def test_pixel_round_trip(geom):
    rng = np.random.default_rng(2)
    theta = rng.uniform(geom.theta_min, geom.theta_max, 5000)
    phi = rng.uniform(-180, 180, 5000)
    x, y = spherical_to_pixel(theta, phi, geom)
    _, t2, p2 = pixel_to_spherical_direction(x, y, geom)
    assert np.max(np.abs(t2 - theta)) < 1e-12
    assert np.max(np.abs(wrap_azimuth(p2 - phi))) < 1e-12


def test_depth_to_disparity_examples():
    # mpmath (40 digits) reference values
    assert depth_to_disparity(0.191, 90.0, B) == pytest.approx(45.0, abs=1e-12)
    assert depth_to_disparity(1.91, 90.0, B) == pytest.approx(5.710593137499642512695881, abs=1e-12)
    assert depth_to_disparity(2.0, 48.0, B) == pytest.approx(4.335588945605155994419808, abs=1e-12)


def test_depth_to_disparity_singular_denominator():
    # r / B == cos(theta) with sin(theta) > 0 is exactly perpendicular
    theta = 60.0
    r = B * math.cos(math.radians(theta))
    assert depth_to_disparity(r, theta, B) == pytest.approx(90.0)


def test_depth_to_disparity_rejects_nonpositive_depth():
    with pytest.raises(DegenerateInputError):
        depth_to_disparity(0.0, 90.0, B)


def test_disparity_to_depth_examples():
    assert disparity_to_depth(45.0, 90.0, B) == pytest.approx(0.191, rel=1e-12)
    assert disparity_to_depth(5.710593137499642512695881, 90.0, B) == pytest.approx(1.91, rel=1e-12)
    # inverse at the minimum disparity clamp, mpmath reference
    assert disparity_to_depth(0.048, 90.0, B) == pytest.approx(227.98940264187563, rel=1e-12)


def test_disparity_clamp_flags():
    r, flags = disparity_to_depth(np.array([0.01, 1.0]), 90.0, B, d_min=0.048, return_flags=True)
    assert flags.tolist() == [True, False]
    assert r[0] == pytest.approx(disparity_to_depth(0.048, 90.0, B))
    with pytest.raises(DegenerateInputError):
        disparity_to_depth(0.0, 90.0, B)


def test_disparity_round_trip_and_monotonicity():
    rng = np.random.default_rng(3)
    r = B * rng.uniform(1.1, 2000, 20_000)
    theta = rng.uniform(48, 144, 20_000)
    d = depth_to_disparity(r, theta, B)
    assert np.all((d > 0) & (d < 180))
    back = disparity_to_depth(d, theta, B)
    d2 = depth_to_disparity(back, theta, B)
    assert np.max(np.abs(d2 - d) / d) < 1e-9
    grid = np.linspace(0.2, 200, 500)
    for t in (48.0, 90.0, 144.0):
        assert np.all(np.diff(depth_to_disparity(grid, t, B)) < 0)


def test_degree_pixel_conversion():
    assert disparity_deg_to_pixels(180.0) == 960.0
    assert disparity_deg_to_pixels(0.1875) == pytest.approx(1.0)
    px = disparity_deg_to_pixels(23.0)
    assert px == pytest.approx(122.667, abs=5e-4)
    assert cost_volume_cap(px) == 128
    assert cost_volume_cap(128.0) == 160


def test_polar_angle_map():
    geom = EquirectGeometry(5, 4, 48.0, 144.0)
    m = polar_angle_map(geom)
    np.testing.assert_allclose(m[:, 0], [60, 84, 108, 132])
    assert np.all(m == m[:, :1])
    assert polar_angle_map(EquirectGeometry(3, 1, 48.0, 144.0)).tolist() == [[96.0, 96.0, 96.0]]
    assert np.all(np.diff(polar_angle_map(CROP)[:, 7]) > 0)


def test_circular_pad_example():
    row = np.array([["a", "b", "c", "d"]])
    assert circular_pad(row, 1).tolist() == [["d", "a", "b", "c", "d", "a"]]
    assert circular_pad(row, 0).tolist() == row.tolist()
    with pytest.raises(ValueError):
        circular_pad(row, 5)


def _case_formula(img, pad):
    """Three-case definition of the padded image, column by column."""
    h, w = img.shape[:2]
    out = np.empty((h, w + 2 * pad) + img.shape[2:], dtype=img.dtype)
    for j in range(w + 2 * pad):
        if j < pad:
            out[:, j] = img[:, j + w - pad]
        elif j < w + pad:
            out[:, j] = img[:, j - pad]
        else:
            out[:, j] = img[:, j - w - pad]
    return out


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 12), st.integers(1, 20), st.data())
def test_circular_pad_properties(h, w, data):
    pad = data.draw(st.integers(0, w))
    img = np.arange(h * w, dtype=float).reshape(h, w)
    out = circular_pad(img, pad)
    np.testing.assert_array_equal(out, _case_formula(img, pad))
    np.testing.assert_array_equal(out[:, pad:w + pad], img)
    np.testing.assert_array_equal(out[:, :pad], img[:, w - pad:])
    np.testing.assert_array_equal(crop_padding(out, pad), img)


def test_geometry_validation():
    with pytest.raises(ValueError):
        EquirectGeometry(0, 10)
    with pytest.raises(ValueError):
        EquirectGeometry(10, 10, 100.0, 50.0)
