"""Fruit center and radius estimation from a (possibly discontinuous) track."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .geometry import (
    BoundingBox,
    CameraMatrix,
    GeometryError,
    camera_center,
    dlt_triangulate_batch,
    focal_length,
    point_depth,
    project,
)

# batch sizes for triangulating combinations; the first sample usually wins
_CHUNKS = (1, 16, 128)


class MissingCamera(KeyError):
    pass


@dataclass(frozen=True)
class RansacParams:
    max_geom_error: float = 8.0
    inliers_ratio: float = 0.5
    max_iters: int = 500
    min_track_len: int = 5

    def __post_init__(self):
        if self.max_geom_error <= 0 or self.max_iters <= 0 or self.min_track_len <= 0:
            raise ValueError("RANSAC parameters must be positive")
        if not 0 < self.inliers_ratio <= 1:
            raise ValueError(f"inliers_ratio must be in (0, 1], got {self.inliers_ratio}")


@dataclass(frozen=True)
class SphereEstimate:
    center: np.ndarray
    ray: float
    inlier_frames: frozenset[int]


def _track_arrays(track: Mapping[int, BoundingBox], cams: Mapping[int, CameraMatrix]):
    frames = sorted(track)
    missing = [f for f in frames if f not in cams]
    if missing:
        raise MissingCamera(f"no camera matrix for frames {missing[:5]}")
    boxes = np.array([track[f].as_tuple() for f in frames], dtype=np.float64).reshape(-1, 4)
    centroids = boxes[:, :2] + boxes[:, 2:] / 2.0
    mats = np.stack([cams[f].p for f in frames]) if frames else np.zeros((0, 3, 4))
    return frames, boxes, centroids, mats


def _reprojection_errors(points: np.ndarray, mats: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # points (K, 3) -> errors (K, n); degenerate depths give inf
    xh = np.einsum("nij,kj->kni", mats[:, :, :3], points) + mats[None, :, :, 3]
    z = xh[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        uv = xh[..., :2] / z[..., None]
        err = np.linalg.norm(uv - centroids[None], axis=-1)
    err[~np.isfinite(err) | (np.abs(z) < 1e-12)] = np.inf
    return err


@dataclass
class FirstSampleMemo:
    """Triangulation of rows (0, 1, 2) and its per-row errors for a growing track.

    Rows are only ever appended, so the first sample never changes and only
    errors of new rows need computing.
    """

    point: np.ndarray | None = None
    errors: np.ndarray | None = None
    degenerate: bool = False


def _first_sample(centroids, mats, params, memo: FirstSampleMemo):
    n = len(centroids)
    if memo.point is None and not memo.degenerate:
        pts, ok = dlt_triangulate_batch(centroids[None, :3], mats[None, :3])
        if not ok[0]:
            memo.degenerate = True
            return None, None
        memo.point = pts[0]
        memo.errors = np.zeros(0)
    if memo.degenerate:
        return None, None
    done = len(memo.errors)
    if done < n:
        fresh = _reprojection_errors(memo.point[None], mats[done:], centroids[done:])[0]
        memo.errors = np.concatenate([memo.errors, fresh])
    inliers = memo.errors[:n] <= params.max_geom_error
    if inliers.sum() / n >= params.inliers_ratio:
        return _refit(centroids, mats, np.flatnonzero(inliers))
    return None, None


def _refit(centroids, mats, keep):
    point, good = dlt_triangulate_batch(centroids[keep][None], mats[keep][None])
    if not good[0]:
        return None, None
    return point[0], keep


def _ransac_core(centroids: np.ndarray, mats: np.ndarray, params: RansacParams, memo: FirstSampleMemo | None = None):
    """Array form of ``ransac_triangulation``: point and inlier row indices, or (None, None)."""
    n = len(centroids)
    if n < 3:
        return None, None
    if memo is not None:
        point, keep = _first_sample(centroids, mats, params, memo)
        if keep is not None:
            return point, keep
        # otherwise the full search re-scores the first sample and reaches
        # the same verdict on it
    combos = itertools.combinations(range(n), 3)
    n_iters = 1
    for step in itertools.count():
        size = _CHUNKS[min(step, len(_CHUNKS) - 1)]
        chunk = np.array(list(itertools.islice(combos, size)), dtype=np.intp).reshape(-1, 3)
        if chunk.size == 0:
            return None, None
        pts, ok = dlt_triangulate_batch(centroids[chunk], mats[chunk])
        valid = np.flatnonzero(ok)
        if valid.size == 0:
            continue
        inliers = _reprojection_errors(pts[valid], mats, centroids) <= params.max_geom_error
        consensus = inliers.sum(axis=1) / n >= params.inliers_ratio
        hits = np.flatnonzero(consensus)
        budget = params.max_iters - n_iters + 1
        if hits.size and hits[0] < budget:
            return _refit(centroids, mats, np.flatnonzero(inliers[hits[0]]))
        n_iters += valid.size
        if n_iters > params.max_iters:
            return None, None
    raise AssertionError("unreachable")


def ransac_triangulation(
    track: Mapping[int, BoundingBox],
    cams: Mapping[int, CameraMatrix],
    params: RansacParams = RansacParams(),
) -> tuple[np.ndarray | None, frozenset[int]]:
    """Consensus triangulation of the box centroids of one track.

    Three-box samples are visited in lexicographic frame order. A sample whose
    DLT system is degenerate is skipped without counting as an iteration; the
    search gives up after ``max_iters`` scored samples. On consensus the point
    is re-triangulated from every inlier.
    """
    frames, _, centroids, mats = _track_arrays(track, cams)
    point, keep = _ransac_core(centroids, mats, params)
    if point is None:
        return None, frozenset()
    return point, frozenset(frames[k] for k in keep)


def sphere_from_arrays(
    boxes: np.ndarray,
    mats: np.ndarray,
    centers: np.ndarray,
    focals: np.ndarray,
    c: float = 0.9,
    params: RansacParams = RansacParams(),
    memo: FirstSampleMemo | None = None,
) -> tuple[np.ndarray, float, np.ndarray] | None:
    """Core of ``estimate_orange`` on per-observation arrays.

    ``boxes`` (n, 4) as x, y, w, h; ``mats`` (n, 3, 4); camera ``centers``
    (n, 3); ``focals`` (n,). Returns (center, ray, inlier rows) or None.
    A ``memo`` kept across calls on the same growing track skips redundant work.
    """
    centroids = boxes[:, :2] + boxes[:, 2:] / 2.0
    point, keep = _ransac_core(centroids, mats, params, memo)
    if point is None:
        return None
    r_px = boxes[keep, 2:].max(axis=1) / 2.0
    d = np.linalg.norm(centers[keep] - point, axis=1)
    ray = c * float(np.median(d * r_px / focals[keep]))
    if not ray > 0:
        return None
    return point, ray, keep


def estimate_orange(
    track: Mapping[int, BoundingBox],
    cams: Mapping[int, CameraMatrix],
    f_focal: float | Mapping[int, float] | None = None,
    c: float = 0.9,
    params: RansacParams = RansacParams(),
) -> SphereEstimate | None:
    """Center from consensus triangulation, radius from similar triangles.

    Every inlier box gives radius ``d * r_i / f`` with ``r_i`` half of the
    larger box side and ``d`` the camera-to-center distance; the estimate is
    ``c`` times their median. ``f_focal`` may be a constant, a per-frame
    mapping, or None to read it off each camera matrix.
    """
    frames, boxes, _, mats = _track_arrays(track, cams)
    if len(frames) < 3:
        return None
    if f_focal is None:
        focals = np.array([focal_length(cams[f]) for f in frames])
    elif isinstance(f_focal, Mapping):
        focals = np.array([float(f_focal[f]) for f in frames])
    else:
        focals = np.full(len(frames), float(f_focal))
    centers = np.array([camera_center(cams[f]) for f in frames])
    out = sphere_from_arrays(boxes, mats, centers, focals, c, params)
    if out is None:
        return None
    point, ray, keep = out
    return SphereEstimate(center=point, ray=ray, inlier_frames=frozenset(frames[k] for k in keep))


def reproject_sphere(
    est: SphereEstimate,
    cam: CameraMatrix,
    f_focal: float | None = None,
    image_size: tuple[float, float] | None = None,
) -> BoundingBox | None:
    """Square box of the sphere in ``cam``; None when behind the camera or,
    given ``image_size`` as (width, height), entirely outside the image."""
    try:
        if point_depth(cam, est.center) <= 0:
            return None
        u, v = project(cam, est.center)
        d = float(np.linalg.norm(est.center - camera_center(cam)))
    except GeometryError:
        return None
    focal = focal_length(cam) if f_focal is None else float(f_focal)
    r = focal * est.ray / d
    box = BoundingBox(u - r, v - r, 2 * r, 2 * r)
    if image_size is not None:
        w, h = image_size
        if box.x2 <= 0 or box.y2 <= 0 or box.x >= w or box.y >= h:
            return None
    return box


def reproject_spheres(
    centers: np.ndarray,
    rays: np.ndarray,
    cam: CameraMatrix,
    f_focal: float,
    image_size: tuple[float, float] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Batched ``reproject_sphere`` for the tracker: boxes (N, 4) and a mask of usable rows."""
    centers = np.asarray(centers, dtype=np.float64).reshape(-1, 3)
    m = cam.m
    xh = centers @ m.T + cam.p[:, 3]
    depth = np.sign(np.linalg.det(m)) * xh[:, 2] / np.linalg.norm(m[2])
    ok = depth > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        uv = xh[:, :2] / xh[:, 2:3]
    d = np.linalg.norm(centers - camera_center(cam), axis=1)
    r = f_focal * np.asarray(rays, dtype=np.float64) / d
    boxes = np.column_stack([uv[:, 0] - r, uv[:, 1] - r, 2 * r, 2 * r])
    ok &= np.all(np.isfinite(boxes), axis=1) & (r > 0)
    if image_size is not None:
        w, h = image_size
        ok &= (boxes[:, 0] + boxes[:, 2] > 0) & (boxes[:, 1] + boxes[:, 3] > 0)
        ok &= (boxes[:, 0] < w) & (boxes[:, 1] < h)
    return boxes, ok
