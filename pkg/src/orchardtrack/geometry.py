"""Projective camera helpers: projection, camera centers, DLT triangulation and box math."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

DEPTH_EPS = 1e-12
SINGULAR_COND = 1e12
# ratio of the two smallest singular values of the DLT system under which the
# null space is treated as more than one-dimensional
RANK_TOL = 1e-10


class GeometryError(ValueError):
    pass


class DegenerateProjection(GeometryError):
    pass


class SingularCamera(GeometryError):
    pass


class InsufficientViews(GeometryError):
    pass


@dataclass(frozen=True, eq=False)
class CameraMatrix:
    """3x4 projective matrix of one frame. Hashes by identity."""

    p: np.ndarray = field(repr=False)
    frame_index: int = 0

    def __post_init__(self):
        p = np.array(self.p, dtype=np.float64)
        if p.shape != (3, 4):
            raise GeometryError(f"camera matrix must be 3x4, got {p.shape}")
        if not np.all(np.isfinite(p)):
            raise GeometryError("camera matrix has non-finite entries")
        p.setflags(write=False)
        object.__setattr__(self, "p", p)

    @property
    def m(self) -> np.ndarray:
        return self.p[:, :3]

    @classmethod
    def from_krt(cls, k, r, t, frame_index: int = 0) -> "CameraMatrix":
        k = np.asarray(k, dtype=np.float64)
        rt = np.hstack([np.asarray(r, dtype=np.float64), np.asarray(t, dtype=np.float64).reshape(3, 1)])
        return cls(k @ rt, frame_index)


@dataclass(frozen=True)
class BoundingBox:
    x: float
    y: float
    width: float
    height: float

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise GeometryError(f"box needs positive size, got {self.width}x{self.height}")

    @property
    def x2(self) -> float:
        return self.x + self.width

    @property
    def y2(self) -> float:
        return self.y + self.height

    @property
    def area(self) -> float:
        return self.width * self.height

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.width, self.height)

    def translated(self, dx: float, dy: float) -> "BoundingBox":
        return BoundingBox(self.x + dx, self.y + dy, self.width, self.height)


def project(cam: CameraMatrix, point) -> np.ndarray:
    """Pixel (u, v) of a 3-D point."""
    xh = cam.p @ np.append(np.asarray(point, dtype=np.float64), 1.0)
    if abs(xh[2]) < DEPTH_EPS:
        raise DegenerateProjection("point lies on the principal plane")
    return xh[:2] / xh[2]


def project_many(p: np.ndarray, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised projection of (N, 3) points through one 3x4 matrix.

    Returns pixels (N, 2) and the homogeneous depth (N,); rows with near-zero
    depth are NaN.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    xh = pts @ p[:, :3].T + p[:, 3]
    z = xh[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        uv = xh[:, :2] / z[:, None]
    uv[np.abs(z) < DEPTH_EPS] = np.nan
    return uv, z


def camera_center(cam: CameraMatrix) -> np.ndarray:
    return _camera_center(cam).copy()


@lru_cache(maxsize=8192)
def _camera_center(cam: CameraMatrix) -> np.ndarray:
    m = cam.m
    cond = np.linalg.cond(m)
    if not np.isfinite(cond) or cond > SINGULAR_COND:
        raise SingularCamera("left 3x3 block of the camera matrix is singular")
    return -np.linalg.solve(m, cam.p[:, 3])


def point_depth(cam: CameraMatrix, point) -> float:
    """Signed depth of a point in front of the camera (positive when visible)."""
    m = cam.m
    xh = cam.p @ np.append(np.asarray(point, dtype=np.float64), 1.0)
    return float(np.sign(np.linalg.det(m)) * xh[2] / np.linalg.norm(m[2]))


@lru_cache(maxsize=8192)
def focal_length(cam: CameraMatrix) -> float:
    """Mean of the two focal lengths recovered from an RQ split of the left block."""
    from scipy.linalg import rq

    k, _ = rq(cam.m)
    k = k / k[2, 2]
    return float((abs(k[0, 0]) + abs(k[1, 1])) / 2.0)


def _dlt_system(pixels: np.ndarray, mats: np.ndarray) -> np.ndarray:
    # pixels (..., n, 2), mats (..., n, 3, 4) -> (..., 2n, 4) with unit rows
    u = pixels[..., 0, None]
    v = pixels[..., 1, None]
    r0 = u * mats[..., 2, :] - mats[..., 0, :]
    r1 = v * mats[..., 2, :] - mats[..., 1, :]
    a = np.stack([r0, r1], axis=-2)
    a = a.reshape(*a.shape[:-3], -1, 4)
    norms = np.linalg.norm(a, axis=-1, keepdims=True)
    return a / np.where(norms > 0, norms, 1.0)


def _solve_dlt(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Null vectors of stacked systems; also a validity mask."""
    _, s, vt = np.linalg.svd(a, full_matrices=False)
    xh = vt[..., -1, :]
    ok = s[..., -2] > RANK_TOL * s[..., 0]
    w = xh[..., 3]
    ok &= np.abs(w) > DEPTH_EPS * np.linalg.norm(xh[..., :3], axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        pts = xh[..., :3] / w[..., None]
    ok &= np.all(np.isfinite(pts), axis=-1)
    return pts, ok


def dlt_triangulate(observations: Sequence[tuple[Sequence[float], CameraMatrix]]) -> np.ndarray | None:
    """Linear triangulation from (pixel, camera) pairs.

    Returns None when the stacked system has no unique solution (for example
    every view shares one camera center).
    """
    if len(observations) < 2:
        raise InsufficientViews(f"need at least 2 views, got {len(observations)}")
    pixels = np.array([obs[0] for obs in observations], dtype=np.float64)
    mats = np.stack([obs[1].p for obs in observations])
    pts, ok = _solve_dlt(_dlt_system(pixels, mats))
    return pts if bool(ok) else None


def dlt_triangulate_batch(pixels: np.ndarray, mats: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Triangulate K samples at once: pixels (K, n, 2), mats (K, n, 3, 4)."""
    return _solve_dlt(_dlt_system(pixels, mats))


def reprojection_error(cam: CameraMatrix, point, centroid) -> float:
    return float(np.linalg.norm(project(cam, point) - np.asarray(centroid, dtype=np.float64)))


def box_centroid(b: BoundingBox) -> np.ndarray:
    # the true center; (x + w) / 2 is only right for boxes at the origin
    return np.array([b.x + b.width / 2.0, b.y + b.height / 2.0])


def iou(a: BoundingBox, b: BoundingBox) -> float:
    iw = min(a.x2, b.x2) - max(a.x, b.x)
    ih = min(a.y2, b.y2) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    # (x + w) - x can exceed w by an ulp
    return min(1.0, inter / (a.area + b.area - inter))


def boxes_to_array(boxes: Iterable[BoundingBox]) -> np.ndarray:
    arr = np.array([b.as_tuple() for b in boxes], dtype=np.float64)
    return arr.reshape(-1, 4)


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU between (P, 4) and (Q, 4) arrays of x, y, w, h."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    ax2, ay2 = a[:, 0] + a[:, 2], a[:, 1] + a[:, 3]
    bx2, by2 = b[:, 0] + b[:, 2], b[:, 1] + b[:, 3]
    iw = np.minimum(ax2[:, None], bx2[None]) - np.maximum(a[:, 0, None], b[None, :, 0])
    ih = np.minimum(ay2[:, None], by2[None]) - np.maximum(a[:, 1, None], b[None, :, 1])
    inter = np.where((iw > 0) & (ih > 0), iw * ih, 0.0)
    union = (a[:, 2] * a[:, 3])[:, None] + (b[:, 2] * b[:, 3])[None] - inter
    return np.minimum(inter / union, 1.0)
