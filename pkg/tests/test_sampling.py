import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dualstitch.sampling import interp_grid, remap, remap_affine


def ramp(h=6, w=8):
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float32)
    return (xs + 10 * ys)[:, :, None]


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 7), st.floats(0, 5))
def test_bilinear_reproduces_linear_function(x, y):
    out, valid = remap(ramp(), None, np.array([[x]]), np.array([[y]]))
    assert valid[0, 0]
    assert out[0, 0, 0] == pytest.approx(x + 10 * y, abs=1e-4)


def test_last_row_and_column_are_valid_but_beyond_is_not():
    out, valid = remap(ramp(), None, np.array([[7.0, 7.0001, -0.0001]]), np.array([[5.0, 0.0, 0.0]]))
    assert valid.tolist() == [[True, False, False]]
    assert out[0, 0, 0] == 57.0


def test_invalid_neighbour_with_weight_poisons_sample():
    valid_src = np.ones((6, 8), bool)
    valid_src[2, 3] = False
    _, v = remap(ramp(), valid_src, np.array([[3.5, 2.0, 3.0]]), np.array([[2.0, 2.0, 1.0]]))
    # (3.5, 2) touches (3, 2); (2, 2) has zero weight on column 3; (3, 1) has zero weight on row 2
    assert v.tolist() == [[False, True, True]]


def test_pre_valid_mask_skips_pixels():
    out, valid = remap(ramp(), None, np.zeros((1, 2)), np.zeros((1, 2)), np.array([[True, False]]))
    assert valid.tolist() == [[True, False]]
    assert out[0, 1, 0] == 0.0


def test_sphere_wraps_longitude():
    img = ramp(4, 8)
    m = np.array([[1.0, 0.0, -2.0], [0.0, 1.0, 0.0]])
    out, valid = remap_affine(img, None, m, (4, 8), sphere=True)
    assert valid.all()
    assert np.array_equal(out[:, :, 0], np.roll(img[:, :, 0], 2, axis=1))
    _, flat_valid = remap_affine(img, None, m, (4, 8), sphere=False)
    assert not flat_valid[:, :2].any()


def test_sphere_folds_over_north_pole():
    img = ramp(4, 8)
    # y = -1 is row 1 on the far side (longitude + 180 degrees)
    m = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, -1.0]])
    out, valid = remap_affine(img, None, m, (4, 8), sphere=True)
    assert valid[0].all()
    assert np.array_equal(out[0, :, 0], np.roll(img[1, :, 0], -4))


def test_sphere_between_last_row_and_south_pole():
    img = ramp(4, 8)
    # y = 3.5 is halfway from the last row to the pole; its mirror lies at x + 4
    m = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 3.5]])
    out, valid = remap_affine(img, None, m, (1, 8), sphere=True)
    assert valid.all()
    last = img[3, :, 0]
    want = 0.75 * last + 0.25 * np.roll(last, -4)
    assert np.allclose(out[0, :, 0], want)


def test_interp_grid_is_exact_on_affine_fields():
    gh, gw, s = 5, 7, 4
    ys, xs = np.mgrid[0:gh, 0:gw] * s
    nodes = np.stack([2 * xs + 1, -ys + 0.5 * xs], -1).astype(float)
    px = np.array([0.0, 3.3, 24.0, 11.7])
    py = np.array([0.0, 2.2, 16.0, 9.1])
    got = interp_grid(nodes, s, px, py)
    assert np.allclose(got, np.column_stack([2 * px + 1, -py + 0.5 * px]))
