import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dualstitch.errors import DeformationDegenerateError
from dualstitch.images import EquirectImage
from dualstitch.mls import (
    ControlPointSet,
    DeformationGrid,
    Variant,
    apply_grid,
    build_backward_grid,
    grid_shape,
    load_grid,
    mls_point,
    mls_points,
    save_grid,
)


def perp(a):
    return np.array([-a[1], a[0]])


def reference_mls(v, p, q, alpha, variant):
    """Per-point textbook evaluation, written independently of the vectorised code."""
    v = np.asarray(v, float)
    w = np.array([1.0 / np.sum((pi - v) ** 2) ** alpha for pi in p])
    ps = (w[:, None] * p).sum(0) / w.sum()
    qs = (w[:, None] * q).sum(0) / w.sum()
    ph, qh = p - ps, q - qs
    d = v - ps
    if variant == "affine":
        a = sum(w[i] * np.outer(ph[i], ph[i]) for i in range(len(p)))
        b = sum(w[i] * np.outer(ph[i], qh[i]) for i in range(len(p)))
        return d @ np.linalg.inv(a) @ b + qs
    blocks = []
    for i in range(len(p)):
        left = np.vstack([ph[i], -perp(ph[i])])
        right = np.vstack([d, -perp(d)]).T
        blocks.append(w[i] * left @ right)
    u = sum(qh[i] @ blocks[i] for i in range(len(p)))
    if variant == "similarity":
        mu = sum(w[i] * ph[i] @ ph[i] for i in range(len(p)))
        return u / mu + qs
    return np.linalg.norm(d) * u / np.linalg.norm(u) + qs


def random_set(rng, n=None, max_disp=40.0, alpha=1.0, w=2048, h=1024):
    n = n or int(rng.integers(8, 25))
    p = np.column_stack([rng.uniform(0, w, n), rng.uniform(0, h, n)])
    ang = rng.uniform(0, 2 * np.pi, n)
    mag = rng.uniform(0, max_disp, n)
    q = p + np.column_stack([mag * np.cos(ang), mag * np.sin(ang)])
    return ControlPointSet(p, q, alpha)


@pytest.mark.parametrize("variant", ["affine", "similarity", "rigid"])
def test_matches_reference_closed_form(variant, rng):
    for _ in range(5):
        cps = random_set(rng, alpha=float(rng.choice([0.5, 1.0, 2.0])))
        vs = np.column_stack([rng.uniform(0, 2048, 40), rng.uniform(0, 1024, 40)])
        got = mls_points(vs, cps, variant)
        want = np.array([reference_mls(v, cps.p, cps.q, cps.alpha, variant) for v in vs])
        assert np.allclose(got, want, atol=1e-7, rtol=0)


def test_single_pair_is_translation():
    cps = ControlPointSet([[10.0, 10.0]], [[20.0, 15.0]])
    for variant in Variant:
        assert np.allclose(mls_point([123.0, -40.0], cps, variant), [133.0, -35.0], atol=1e-12)


def test_rotation_plus_translation_reproduced():
    rot = np.array([[math.cos(math.pi / 6), -math.sin(math.pi / 6)], [math.sin(math.pi / 6), math.cos(math.pi / 6)]])
    t = np.array([5.0, -3.0])
    p = np.array([[0, 0], [100, 20], [40, 90], [-30, 60], [70, -50]], float)
    cps = ControlPointSet(p, p @ rot.T + t)
    v = np.array([[1.0, 2.0], [500.0, -300.0], [-1e3, 7.0]])
    for variant in Variant:
        assert np.allclose(mls_points(v, cps, variant), v @ rot.T + t, atol=1e-9, rtol=0)


def test_snap_returns_exact_target():
    cps = ControlPointSet([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]], [[1.0, 1.0], [12.0, 0.5], [0.3, 9.0]])
    assert np.array_equal(mls_point([10.0, 0.0], cps), [12.0, 0.5])
    assert np.array_equal(mls_point([10.0 + 1e-7, 0.0], cps), [12.0, 0.5])


def test_affine_collinear_sources_are_degenerate():
    p = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
    cps = ControlPointSet(p, p + 1.0)
    with pytest.raises(DeformationDegenerateError):
        mls_point([5.0, 1.0], cps, Variant.AFFINE)


def test_rigid_zero_u_is_degenerate():
    # two sources, targets swapped through the centre: at the midpoint u vanishes
    cps = ControlPointSet([[-1.0, 0.0], [1.0, 0.0]], [[0.0, 0.0], [0.0, 0.0]])
    with pytest.raises(DeformationDegenerateError):
        mls_point([0.0, 0.0], cps, Variant.RIGID)


def test_duplicate_sources_rejected():
    with pytest.raises(ValueError):
        ControlPointSet([[1.0, 1.0], [1.0, 1.0]], [[0.0, 0.0], [2.0, 2.0]])
    with pytest.raises(ValueError):
        ControlPointSet([[1.0, 1.0]], [[0.0, 0.0]], alpha=0.0)


point = st.tuples(st.floats(0, 500), st.floats(0, 250))


@settings(max_examples=60, deadline=None)
@given(st.lists(point, min_size=3, max_size=12, unique=True), point, st.sampled_from(list(Variant)))
def test_identity_property(ps, v, variant):
    p = np.array(ps)
    if np.linalg.matrix_rank(p - p.mean(0), tol=1e-3) < 2:
        return
    cps = ControlPointSet(p, p)
    assert np.allclose(mls_point(v, cps, variant), v, atol=1e-6)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(list(Variant)))
def test_interpolation_property(seed, variant):
    rng = np.random.default_rng(seed)
    cps = random_set(rng, w=500, h=250)
    assert np.allclose(mls_points(cps.p, cps, variant), cps.q, atol=1e-6)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), point)
def test_rigid_local_map_preserves_distance(seed, v):
    rng = np.random.default_rng(seed)
    cps = random_set(rng, w=500, h=250)
    v = np.asarray(v)
    d2 = np.sum((cps.p - v) ** 2, axis=1)
    if d2.min() < 1e-6:
        return
    w = 1.0 / d2**cps.alpha
    ps = w @ cps.p / w.sum()
    qs = w @ cps.q / w.sum()
    f = mls_point(v, cps, Variant.RIGID)
    assert np.linalg.norm(f - qs) == pytest.approx(np.linalg.norm(v - ps), rel=1e-9)


def test_grid_shape_and_identity():
    assert grid_shape(2048, 1024, 8) == (129, 257)
    assert grid_shape(100, 50, 8) == (8, 14)
    g = DeformationGrid.identity(100, 50, 8)
    pts = np.array([[3.3, 7.1], [99.0, 49.0], [0.0, 0.0]])
    assert np.allclose(g.lookup(pts[:, 0], pts[:, 1]), pts, atol=1e-12)


def test_backward_grid_nodes_are_swapped_mls(rng):
    cps = random_set(rng, w=256, h=128)
    g = build_backward_grid(cps, 256, 128, 8)
    ys, xs = np.mgrid[0:g.nodes.shape[0], 0:g.nodes.shape[1]] * 8
    want = mls_points(np.column_stack([xs.ravel(), ys.ravel()]).astype(float), cps.swapped())
    assert np.allclose(g.nodes.reshape(-1, 2), want, atol=1e-9)


def test_grid_file_round_trip_and_layout(tmp_path, rng):
    cps = random_set(rng, w=64, h=32)
    g = build_backward_grid(cps, 64, 32, 8)
    path = tmp_path / "g.bin"
    save_grid(path, g)
    raw = path.read_bytes()
    assert raw[:12] == np.array([64, 32, 8], "<u4").tobytes()
    # first node is (x, y) of output (0, 0), stored as two float32
    assert np.frombuffer(raw[12:20], "<f4").tolist() == pytest.approx(g.nodes[0, 0].astype(np.float32).tolist())
    back = load_grid(path)
    assert (back.width, back.height, back.spacing) == (64, 32, 8)
    assert np.allclose(back.nodes, g.nodes, atol=1e-3)
    path.write_bytes(raw[:-4])
    with pytest.raises(ValueError):
        load_grid(path)


def test_apply_identity_grid_is_exact():
    rng = np.random.default_rng(0)
    img = EquirectImage.full(rng.uniform(0, 1, (32, 64, 1)).astype(np.float32))
    out = apply_grid(img, DeformationGrid.identity(64, 32, 8))
    assert np.array_equal(out.pixels, img.pixels)
    assert out.valid.all()


def test_apply_translation_grid_moves_content():
    # backward map x -> x - 3: output column j shows input column j - 3
    rng = np.random.default_rng(0)
    img = EquirectImage.full(rng.uniform(0, 1, (32, 64, 1)).astype(np.float32))
    nodes = DeformationGrid.identity(64, 32, 8).nodes.copy()
    nodes[..., 0] -= 3.0
    out = apply_grid(img, DeformationGrid(64, 32, 8, nodes))
    assert np.allclose(out.pixels[:, 3:], img.pixels[:, :-3])
    # longitude wraps
    assert np.allclose(out.pixels[:, :3], img.pixels[:, -3:])
