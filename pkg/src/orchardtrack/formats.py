"""File formats and ingestion helpers.

MOT16 rows, COLMAP text models (cameras.txt / images.txt), scene
directories written by the simulator, plus the detection-side utilities:
non-maximum suppression, tile merging and stride frame sampling.
"""

from __future__ import annotations

import json
import os
import re
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.spatial.transform import Rotation

from .geometry import BoundingBox, CameraMatrix, boxes_to_array, iou_matrix
from .metrics import LabeledBox

SEED_ENV = "ORCHARD_TRACK_SEED"
DEFAULT_FRAME_PATTERN = r"(\d+)\D*$"
ROTATION_TOL = 1e-3


class FormatError(ValueError):
    pass


class ParseError(FormatError):
    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.line = line


class NegativeDimensions(ParseError):
    pass


class UnknownCameraModel(FormatError):
    pass


class UnnormalizedRotation(FormatError):
    pass


class MissingIntrinsics(FormatError):
    pass


class OffsetOutOfFrame(FormatError):
    pass


def resolve_seed(seed: int | None) -> int:
    """Explicit seed, else the environment fallback, else 0."""
    if seed is not None:
        return int(seed)
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return int(env)
        except ValueError:
            raise FormatError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    return 0


# ---------------------------------------------------------------- MOT16

@dataclass(frozen=True)
class Mot16Row:
    frame: int
    id: int
    bb_left: float
    bb_top: float
    bb_width: float
    bb_height: float
    conf: float = 1.0
    cls: int = 1
    visibility: float = 1.0

    @property
    def box(self) -> BoundingBox:
        return BoundingBox(self.bb_left, self.bb_top, self.bb_width, self.bb_height)


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def format_mot16(rows: Iterable[Mot16Row]) -> str:
    lines = []
    for r in sorted(rows, key=lambda r: (r.frame, r.id)):
        nums = (r.bb_left, r.bb_top, r.bb_width, r.bb_height, r.conf)
        lines.append(",".join([str(r.frame), str(r.id), *map(_fmt, nums), str(r.cls), _fmt(r.visibility)]))
    return "".join(line + "\n" for line in lines)


def write_mot16(path, rows: Iterable[Mot16Row]) -> None:
    """Frame-major, then id, with six significant digits for reals."""
    Path(path).write_text(format_mot16(rows))


def _int_field(text: str) -> int:
    val = float(text)
    if not val.is_integer():
        raise ValueError(f"expected an integer, got {text!r}")
    return int(val)


def parse_mot16(text: str, path="<string>") -> list[Mot16Row]:
    rows = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 9:
            raise ParseError(path, line_no, f"expected 9 comma-separated fields, got {len(parts)}")
        try:
            frame, tid = _int_field(parts[0]), _int_field(parts[1])
            left, top, width, height, conf = (float(p) for p in parts[2:7])
            cls = _int_field(parts[7])
            vis = float(parts[8])
        except ValueError as exc:
            raise ParseError(path, line_no, str(exc)) from None
        vals = (left, top, width, height, conf, vis)
        if not all(np.isfinite(vals)):
            raise ParseError(path, line_no, "non-finite value")
        if frame < 1:
            raise ParseError(path, line_no, f"frame must be >= 1, got {frame}")
        if width <= 0 or height <= 0:
            raise NegativeDimensions(path, line_no, f"box size must be positive, got {width}x{height}")
        rows.append(Mot16Row(frame, tid, left, top, width, height, conf, cls, vis))
    return rows


def read_mot16(path) -> list[Mot16Row]:
    return parse_mot16(Path(path).read_text(), path)


def rows_to_labeled(rows: Iterable[Mot16Row]) -> list[LabeledBox]:
    return [LabeledBox(r.frame, r.id, r.box, visibility=r.visibility, conf=r.conf) for r in rows]


def labeled_to_rows(boxes: Iterable[LabeledBox], cls: int = 1) -> list[Mot16Row]:
    return [
        Mot16Row(b.frame, b.track_id, b.box.x, b.box.y, b.box.width, b.box.height, b.conf, cls, b.visibility)
        for b in boxes
    ]


def detection_rows(frames: Iterable[tuple[int, Sequence[BoundingBox]]]) -> list[Mot16Row]:
    """Raw detections: id -1, unit confidence, no class or visibility."""
    return [
        Mot16Row(f, -1, b.x, b.y, b.width, b.height, 1.0, -1, -1.0)
        for f, boxes in frames
        for b in boxes
    ]


# ---------------------------------------------------------------- COLMAP

_MODELS = {"SIMPLE_PINHOLE": 3, "PINHOLE": 4, "SIMPLE_RADIAL": 4}


@dataclass(frozen=True)
class ColmapIntrinsics:
    camera_id: int
    model: str
    width: int
    height: int
    params: tuple[float, ...]

    @property
    def k(self) -> np.ndarray:
        if self.model == "PINHOLE":
            fx, fy, cx, cy = self.params[:4]
        else:
            f, cx, cy = self.params[:3]
            fx = fy = f
        return np.array([[fx, 0.0, cx], [0.0, fy, cy], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class ColmapPose:
    image_id: int
    rotation: tuple[float, float, float, float]  # qw, qx, qy, qz
    translation: tuple[float, float, float]
    camera_id: int
    name: str

    @property
    def r(self) -> np.ndarray:
        qw, qx, qy, qz = self.rotation
        return Rotation.from_quat([qx, qy, qz, qw]).as_matrix()


def _content_lines(path):
    for line_no, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if line.startswith("#"):
            continue
        yield line_no, line


def read_colmap_cameras(path) -> dict[int, ColmapIntrinsics]:
    out = {}
    for line_no, line in _content_lines(path):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) < 4:
            raise ParseError(path, line_no, "camera line needs id, model, width, height")
        model = parts[1]
        if model not in _MODELS:
            raise UnknownCameraModel(f"{path}:{line_no}: unsupported camera model {model}")
        try:
            cam_id, width, height = int(parts[0]), int(parts[2]), int(parts[3])
            params = tuple(float(p) for p in parts[4:])
        except ValueError as exc:
            raise ParseError(path, line_no, str(exc)) from None
        if len(params) < _MODELS[model]:
            raise ParseError(path, line_no, f"{model} needs {_MODELS[model]} parameters")
        n_focal = 2 if model == "PINHOLE" else 1
        if width <= 0 or height <= 0 or any(p <= 0 for p in params[:n_focal]):
            raise ParseError(path, line_no, "focal length and image size must be positive")
        if model == "SIMPLE_RADIAL":
            warnings.warn(f"camera {cam_id}: radial distortion is ignored")
        out[cam_id] = ColmapIntrinsics(cam_id, model, width, height, params)
    return out


def read_colmap_images(path) -> list[ColmapPose]:
    """Image poses; the second line of every image (its 2-D points) is skipped."""
    lines = list(_content_lines(path))
    poses = []
    k = 0
    while k < len(lines):
        line_no, line = lines[k]
        if not line.strip():
            k += 1
            continue
        parts = line.split()
        if len(parts) < 10:
            raise ParseError(path, line_no, "image line needs 10 fields")
        try:
            image_id = int(parts[0])
            q = tuple(float(p) for p in parts[1:5])
            t = tuple(float(p) for p in parts[5:8])
            cam_id = int(parts[8])
        except ValueError as exc:
            raise ParseError(path, line_no, str(exc)) from None
        norm = float(np.linalg.norm(q))
        if abs(norm - 1.0) > ROTATION_TOL:
            raise UnnormalizedRotation(f"{path}:{line_no}: quaternion norm {norm:.6g}")
        q = tuple(v / norm for v in q)
        poses.append(ColmapPose(image_id, q, t, cam_id, " ".join(parts[9:])))
        k += 2
    return poses


def frame_from_name(name: str, pattern: str = DEFAULT_FRAME_PATTERN) -> int:
    stem = Path(name).stem
    m = re.search(pattern, stem)
    if m is None:
        raise FormatError(f"no frame index in image name {name!r}")
    return int(m.group(1))


def read_colmap(
    cameras_path,
    images_path,
    frame_pattern: str = DEFAULT_FRAME_PATTERN,
) -> tuple[dict[int, CameraMatrix], dict[int, ColmapIntrinsics]]:
    """Camera matrices keyed by frame index, plus intrinsics by camera id."""
    intr = read_colmap_cameras(cameras_path)
    cams: dict[int, CameraMatrix] = {}
    for pose in read_colmap_images(images_path):
        if pose.camera_id not in intr:
            raise MissingIntrinsics(f"image {pose.name} refers to unknown camera {pose.camera_id}")
        frame = frame_from_name(pose.name, frame_pattern)
        if frame in cams:
            raise FormatError(f"two images map to frame {frame}")
        cams[frame] = CameraMatrix.from_krt(intr[pose.camera_id].k, pose.r, pose.translation, frame)
    return cams, intr


def image_size(intr: Mapping[int, ColmapIntrinsics]) -> tuple[int, int] | None:
    """Common (width, height) of all cameras, or None when they differ."""
    sizes = {(c.width, c.height) for c in intr.values()}
    return sizes.pop() if len(sizes) == 1 else None


def write_colmap(
    cameras_path,
    images_path,
    poses: Mapping[int, tuple[np.ndarray, np.ndarray]],
    k: np.ndarray,
    size: tuple[int, int],
    name_format: str = "{:06d}.png",
) -> None:
    """One PINHOLE camera and one image per frame from (R, t) poses."""
    fx, fy, cx, cy = k[0, 0], k[1, 1], k[0, 2], k[1, 2]
    Path(cameras_path).write_text(
        "# Camera list with one line of data per camera:\n"
        "#   CAMERA_ID, MODEL, WIDTH, HEIGHT, PARAMS[]\n"
        f"1 PINHOLE {size[0]} {size[1]} {fx:.17g} {fy:.17g} {cx:.17g} {cy:.17g}\n"
    )
    lines = [
        "# Image list with two lines of data per image:",
        "#   IMAGE_ID, QW, QX, QY, QZ, TX, TY, TZ, CAMERA_ID, NAME",
        "#   POINTS2D[] as (X, Y, POINT3D_ID)",
    ]
    for image_id, frame in enumerate(sorted(poses), start=1):
        r, t = poses[frame]
        qx, qy, qz, qw = Rotation.from_matrix(r).as_quat()
        if qw < 0:
            qw, qx, qy, qz = -qw, -qx, -qy, -qz
        vals = " ".join(f"{v:.17g}" for v in (qw, qx, qy, qz, *np.asarray(t, dtype=float)))
        lines.append(f"{image_id} {vals} 1 {name_format.format(frame)}")
        lines.append("")
    Path(images_path).write_text("\n".join(lines) + "\n")


def pose_from_matrix(cam: CameraMatrix, k: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split P = K [R | t] given K."""
    rt = np.linalg.solve(k, cam.p)
    return rt[:, :3], rt[:, 3]


# ---------------------------------------------------------------- detection utilities

def nms(boxes: Sequence[BoundingBox], scores: Sequence[float], iou_threshold: float = 0.2) -> list[int]:
    """Greedy suppression; indices of kept boxes by decreasing score.

    Equal scores keep input order.
    """
    if len(boxes) != len(scores):
        raise ValueError("boxes and scores differ in length")
    if not boxes:
        return []
    ious = iou_matrix(boxes_to_array(boxes), boxes_to_array(boxes))
    order = sorted(range(len(boxes)), key=lambda i: (-scores[i], i))
    kept: list[int] = []
    suppressed = np.zeros(len(boxes), dtype=bool)
    for i in order:
        if suppressed[i]:
            continue
        kept.append(i)
        suppressed |= ious[i] > iou_threshold
    return kept


def merge_tiles(
    tiles: Sequence[tuple[Sequence[BoundingBox], Sequence[float]]],
    offsets: Sequence[tuple[float, float]],
    frame_size: tuple[float, float] | None = None,
    iou_threshold: float = 0.2,
) -> tuple[list[BoundingBox], list[float]]:
    """Move tile-local detections to frame coordinates and suppress duplicates."""
    if len(tiles) != len(offsets):
        raise ValueError("one offset per tile is required")
    boxes: list[BoundingBox] = []
    scores: list[float] = []
    for (tile_boxes, tile_scores), (dx, dy) in zip(tiles, offsets):
        if dx < 0 or dy < 0 or (frame_size is not None and (dx >= frame_size[0] or dy >= frame_size[1])):
            raise OffsetOutOfFrame(f"tile offset ({dx}, {dy}) lies outside the frame")
        boxes += [b.translated(dx, dy) for b in tile_boxes]
        scores += list(tile_scores)
    keep = nms(boxes, scores, iou_threshold)
    return [boxes[i] for i in keep], [scores[i] for i in keep]


def stride_sample(frames: Iterable[int], stride: int) -> dict[int, int]:
    """Every ``stride``-th frame from the first, as new index -> original index."""
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    kept = sorted(frames)[::stride]
    return {new: old for new, old in enumerate(kept, start=1)}


# ---------------------------------------------------------------- scene directories

def write_scene(directory, scene) -> None:
    """gt.txt, cameras.txt, images.txt and scene.json for a generated scene."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_mot16(d / "gt.txt", labeled_to_rows(scene.gt_boxes))
    k = scene.intrinsics.k
    poses = {f: pose_from_matrix(cam, k) for f, cam in scene.cams.items()}
    write_colmap(d / "cameras.txt", d / "images.txt", poses, k, scene.intrinsics.image_size)
    meta = {
        "config": scene.config.to_dict(),
        "spheres": [[*map(float, c), float(r)] for c, r in zip(scene.centers, scene.rays)],
    }
    (d / "scene.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def read_scene(directory):
    """(ground truth, cameras, intrinsics, scene.json contents or None)."""
    d = Path(directory)
    gt = rows_to_labeled(read_mot16(d / "gt.txt"))
    cams, intr = read_colmap(d / "cameras.txt", d / "images.txt")
    meta_path = d / "scene.json"
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else None
    return gt, cams, intr, meta
