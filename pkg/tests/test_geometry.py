import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from orchardtrack.geometry import (
    BoundingBox,
    CameraMatrix,
    DegenerateProjection,
    GeometryError,
    InsufficientViews,
    SingularCamera,
    box_centroid,
    camera_center,
    dlt_triangulate,
    dlt_triangulate_batch,
    focal_length,
    iou,
    iou_matrix,
    point_depth,
    project,
    reprojection_error,
)

CANONICAL = CameraMatrix(np.hstack([np.eye(3), np.zeros((3, 1))]))


def random_camera(rng, target=(0.0, 0.0, 0.0)):
    """Camera looking at ``target`` from a random position about 3 units away."""
    c = rng.normal(size=3)
    c = 3.0 * c / np.linalg.norm(c)
    fwd = np.asarray(target) - c
    fwd /= np.linalg.norm(fwd)
    up = np.array([0.0, 0.0, 1.0]) if abs(fwd[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    right = np.cross(fwd, up)
    right /= np.linalg.norm(right)
    r = np.vstack([right, np.cross(fwd, right), fwd])
    f = rng.uniform(300, 1500)
    k = np.array([[f, 0, rng.uniform(200, 800)], [0, f, rng.uniform(200, 600)], [0, 0, 1]])
    return CameraMatrix.from_krt(k, r, -r @ c)


def test_project_canonical():
    np.testing.assert_allclose(project(CANONICAL, (0, 0, 1)), (0, 0))


def test_project_with_intrinsics():
    k = np.array([[100.0, 0, 50], [0, 100, 50], [0, 0, 1]])
    cam = CameraMatrix.from_krt(k, np.eye(3), np.zeros(3))
    np.testing.assert_allclose(project(cam, (1, 0, 2)), (100, 50))


def test_project_zero_depth():
    with pytest.raises(DegenerateProjection):
        project(CANONICAL, (0, 0, 0))


def test_camera_center_simple_cases():
    np.testing.assert_allclose(camera_center(CANONICAL), 0)
    t = np.array([1.0, -2.0, 3.5])
    cam = CameraMatrix(np.hstack([np.eye(3), -t[:, None]]))
    np.testing.assert_allclose(camera_center(cam), t)


def test_camera_center_singular():
    p = np.zeros((3, 4))
    p[0, 0] = 1
    with pytest.raises(SingularCamera):
        camera_center(CameraMatrix(p))


def test_camera_center_result_is_a_copy():
    c = camera_center(CANONICAL)
    c[0] = 99
    assert camera_center(CANONICAL)[0] == 0


def test_camera_matrix_shape_checked():
    with pytest.raises(GeometryError):
        CameraMatrix(np.eye(3))
    with pytest.raises(GeometryError):
        CameraMatrix(np.full((3, 4), np.nan))


def test_focal_length_from_matrix():
    k = np.array([[812.0, 0, 300], [0, 812.0, 200], [0, 0, 1]])
    a = np.radians(30)
    r = np.array([[np.cos(a), -np.sin(a), 0], [np.sin(a), np.cos(a), 0], [0, 0, 1]])
    cam = CameraMatrix.from_krt(k, r, [0, 0, 1])
    assert focal_length(cam) == pytest.approx(812.0)
    # overall scale of P does not matter
    assert focal_length(CameraMatrix(cam.p * -3.0)) == pytest.approx(812.0)


def test_point_depth_sign():
    assert point_depth(CANONICAL, (0, 0, 2)) == pytest.approx(2)
    assert point_depth(CameraMatrix(-CANONICAL.p), (0, 0, 2)) == pytest.approx(2)
    assert point_depth(CANONICAL, (0, 0, -1)) < 0


def test_triangulation_round_trip():
    rng = np.random.default_rng(7)
    x = np.array([0.3, -0.2, 2.0])
    cams = [random_camera(rng, target=x) for _ in range(3)]
    est = dlt_triangulate([(project(c, x), c) for c in cams])
    assert np.linalg.norm(est - x) <= 1e-6 * np.linalg.norm(x)


def test_triangulation_same_camera_is_nil():
    cam = random_camera(np.random.default_rng(2))
    x = np.array([0.1, 0.2, 0.3])
    assert dlt_triangulate([(project(cam, x), cam), (project(cam, x), cam)]) is None


def test_triangulation_needs_two_views():
    with pytest.raises(InsufficientViews):
        dlt_triangulate([((0.0, 0.0), CANONICAL)])


def test_batch_triangulation_matches_single():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(5, 3)) * 0.3
    cams = [random_camera(rng) for _ in range(4)]
    pix = np.array([[project(c, xi) for c in cams] for xi in x])
    mats = np.broadcast_to(np.stack([c.p for c in cams]), (5, 4, 3, 4))
    pts, ok = dlt_triangulate_batch(pix, mats)
    assert ok.all()
    np.testing.assert_allclose(pts, x, atol=1e-8)


def test_reprojection_error_cases():
    x = np.array([0.1, 0.1, 1.0])
    assert reprojection_error(CANONICAL, x, project(CANONICAL, x)) == 0
    k = np.diag([100.0, 100.0, 1.0])
    cam = CameraMatrix.from_krt(k, np.eye(3), np.zeros(3))
    assert reprojection_error(cam, (0.1, 0.1, 1.0), (13, 14)) == pytest.approx(5)
    with pytest.raises(DegenerateProjection):
        reprojection_error(CANONICAL, (1, 1, 0), (0, 0))


@pytest.mark.parametrize(
    "box, center",
    [((0, 0, 10, 10), (5, 5)), ((2, 4, 6, 8), (5, 8)), ((0, 0, 1, 1), (0.5, 0.5))],
)
def test_box_centroid(box, center):
    np.testing.assert_allclose(box_centroid(BoundingBox(*box)), center)


def test_iou_examples():
    a = BoundingBox(0, 0, 10, 10)
    assert iou(a, a) == 1.0
    assert iou(a, BoundingBox(20, 20, 5, 5)) == 0.0
    assert iou(BoundingBox(0, 0, 2, 2), BoundingBox(1, 1, 2, 2)) == pytest.approx(1 / 7)
    # shared edge only
    assert iou(a, BoundingBox(10, 0, 5, 5)) == 0.0


def test_box_rejects_non_positive_size():
    with pytest.raises(GeometryError):
        BoundingBox(0, 0, 0, 1)
    with pytest.raises(GeometryError):
        BoundingBox(0, 0, 1, -1)


boxes = st.builds(
    BoundingBox,
    st.floats(-100, 100),
    st.floats(-100, 100),
    st.floats(0.5, 50),
    st.floats(0.5, 50),
)


@given(boxes, boxes)
def test_iou_symmetric_and_bounded(a, b):
    v = iou(a, b)
    assert 0.0 <= v <= 1.0
    assert v == pytest.approx(iou(b, a))


@given(boxes)
def test_centroid_inside_box(b):
    u, v = box_centroid(b)
    assert b.x <= u <= b.x2 and b.y <= v <= b.y2


@given(st.lists(boxes, min_size=1, max_size=5), st.lists(boxes, min_size=1, max_size=5))
def test_iou_matrix_matches_scalar(a, b):
    arr = iou_matrix([x.as_tuple() for x in a], [x.as_tuple() for x in b])
    expect = np.array([[iou(x, y) for y in b] for x in a])
    np.testing.assert_allclose(arr, expect, atol=1e-12)


@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1))
def test_camera_center_null_vector(seed):
    cam = random_camera(np.random.default_rng(seed))
    c = camera_center(cam)
    assert np.linalg.norm(cam.p @ np.append(c, 1.0)) <= 1e-9
