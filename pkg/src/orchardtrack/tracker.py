"""Multiple-fruit tracking with sphere-based relocalization.

Each frame first re-attaches LOST tracks that carry a sphere estimate by
reprojecting the sphere and matching against detections nobody owns yet, then
links the frame's boxes to the next frame by IoU. Tracks that grow past
``min_track_len`` boxes get their sphere (re-)estimated; only sphere-bearing
tracks are counted.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .assignment import associate_boxes, associate_iou
from .geometry import BoundingBox, CameraMatrix, boxes_to_array, camera_center, focal_length, iou_matrix
from .metrics import LabeledBox
from .sphere import (
    FirstSampleMemo,
    MissingCamera,
    RansacParams,
    SphereEstimate,
    reproject_spheres,
    sphere_from_arrays,
)


class TrackState(enum.Enum):
    ACTIVE = "active"
    LOST = "lost"


@dataclass
class Track:
    """Identity-labelled, possibly discontinuous box sequence of one fruit.

    ``id`` stays None (the Nil label) until a sphere is first estimated.
    """

    boxes: dict[int, BoundingBox] = field(default_factory=dict)
    state: TrackState = TrackState.ACTIVE
    sphere: SphereEstimate | None = None
    id: int | None = None

    def __len__(self) -> int:
        return len(self.boxes)

    @property
    def frames(self) -> list[int]:
        return sorted(self.boxes)

    @property
    def last_frame(self) -> int:
        return max(self.boxes)


@dataclass
class FrameDetections:
    frame_index: int
    boxes: list[BoundingBox] = field(default_factory=list)

    def __post_init__(self):
        if self.frame_index < 1:
            raise ValueError(f"frame index must be >= 1, got {self.frame_index}")


@dataclass(frozen=True)
class TrackerConfig:
    ransac: RansacParams = RansacParams()
    c: float = 0.9
    # None reads the focal length off every camera matrix
    f_focal: float | None = None
    reloc_min_iou: float = 0.0
    relocalization: bool = True
    # (width, height); reprojections entirely outside are dropped
    image_size: tuple[float, float] | None = None

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError(f"c must be positive, got {self.c}")
        if self.f_focal is not None and not self.f_focal > 0:
            raise ValueError(f"f_focal must be positive, got {self.f_focal}")
        if not 0 <= self.reloc_min_iou < 1:
            raise ValueError(f"reloc_min_iou must be in [0, 1), got {self.reloc_min_iou}")


@dataclass
class TrackingResult:
    tracks: list[Track]
    count: int
    per_frame_active: dict[int, int]

    def counted(self) -> list[Track]:
        return [t for t in self.tracks if t.sphere is not None]

    def labeled_boxes(self) -> list[LabeledBox]:
        """Boxes of counted tracks, frame-major then by id."""
        out = [LabeledBox(f, t.id, b) for t in self.counted() for f, b in t.boxes.items()]
        out.sort(key=lambda lb: (lb.frame, lb.track_id))
        return out


def relative_error(count: int, gt_count: int) -> float:
    if gt_count <= 0:
        raise ValueError("ground-truth count must be positive")
    return abs(count - gt_count) / gt_count


class Tracker:
    """Stateful, frame-ordered tracker for one sequence."""

    def __init__(self, cams: Mapping[int, CameraMatrix], cfg: TrackerConfig = TrackerConfig()):
        self.cams = cams
        self.cfg = cfg
        self.tracks: list[Track] = []
        self._next_id = 1
        # frame -> owning track index per detection, -1 when unowned
        self._owner: dict[int, np.ndarray] = {}
        # stacked P, camera centers and focals; rows follow sorted frame order
        order = sorted(cams)
        self._pos = {f: i for i, f in enumerate(order)}
        self._mats = np.stack([cams[f].p for f in order]) if order else np.zeros((0, 3, 4))
        self._centers = np.array([camera_center(cams[f]) for f in order]).reshape(-1, 3)
        if cfg.f_focal is not None:
            self._focals = np.full(len(order), float(cfg.f_focal))
        else:
            self._focals = np.array([focal_length(cams[f]) for f in order])
        # per track: box rows and camera rows in observation order
        self._rows: list[list[tuple[float, float, float, float]]] = []
        self._cam_rows: list[list[int]] = []
        self._memos: list[FirstSampleMemo] = []

    def _focal(self, frame: int) -> float:
        return float(self._focals[self._pos[frame]])

    def _new_track(self) -> int:
        self.tracks.append(Track())
        self._rows.append([])
        self._cam_rows.append([])
        self._memos.append(FirstSampleMemo())
        return len(self.tracks) - 1

    def _add(self, k: int, frame: int, box: BoundingBox) -> None:
        self.tracks[k].boxes[frame] = box
        self._rows[k].append(box.as_tuple())
        self._cam_rows[k].append(self._pos[frame])

    def _owners(self, dets: FrameDetections) -> np.ndarray:
        own = self._owner.get(dets.frame_index)
        if own is None:
            own = np.full(len(dets.boxes), -1, dtype=np.intp)
            self._owner[dets.frame_index] = own
        return own

    def relocalize(self, dets: FrameDetections) -> list[tuple[Track, BoundingBox]]:
        """Re-attach LOST sphere-bearing tracks to unowned boxes of ``dets``."""
        own = self._owners(dets)
        free = np.flatnonzero(own < 0)
        lost = [k for k, t in enumerate(self.tracks) if t.state is TrackState.LOST and t.sphere is not None]
        if not lost or free.size == 0:
            return []
        cam = self.cams[dets.frame_index]
        centers = np.array([self.tracks[k].sphere.center for k in lost])
        rays = np.array([self.tracks[k].sphere.ray for k in lost])
        reproj, ok = reproject_spheres(centers, rays, cam, self._focal(dets.frame_index), self.cfg.image_size)
        cand = np.flatnonzero(ok)
        if cand.size == 0:
            return []
        det_arr = boxes_to_array(dets.boxes[j] for j in free)
        pairs = associate_iou(iou_matrix(reproj[cand], det_arr), self.cfg.reloc_min_iou)
        out = []
        for a, b in pairs:
            k, j = lost[cand[a]], int(free[b])
            track = self.tracks[k]
            self._add(k, dets.frame_index, dets.boxes[j])
            track.state = TrackState.ACTIVE
            own[j] = k
            out.append((track, dets.boxes[j]))
        return out

    def associate_next(self, dets: FrameDetections, dets_next: FrameDetections) -> None:
        own = self._owners(dets)
        own_next = self._owners(dets_next)
        f, g = dets.frame_index, dets_next.frame_index
        matched: set[int] = set()
        for p, q in associate_boxes(dets.boxes, dets_next.boxes):
            k = int(own[p])
            if k < 0:
                k = self._new_track()
                self._add(k, f, dets.boxes[p])
                own[p] = k
            self._add(k, g, dets_next.boxes[q])
            own_next[q] = k
            matched.add(k)
        for k, t in enumerate(self.tracks):
            if t.state is TrackState.ACTIVE and k not in matched:
                t.state = TrackState.LOST
        min_len = self.cfg.ransac.min_track_len
        for k in sorted(matched):
            t = self.tracks[k]
            t.state = TrackState.ACTIVE
            if len(t) > min_len:
                self._estimate(k)

    def _estimate(self, k: int) -> None:
        t = self.tracks[k]
        rows = np.array(self._cam_rows[k])
        out = sphere_from_arrays(
            np.array(self._rows[k]),
            self._mats[rows],
            self._centers[rows],
            self._focals[rows],
            self.cfg.c,
            self.cfg.ransac,
            self._memos[k],
        )
        if out is None:
            # keep the previous estimate
            return
        center, ray, keep = out
        # boxes are only ever appended at increasing frames
        frames = np.fromiter(t.boxes, dtype=np.int64, count=len(t.boxes))
        t.sphere = SphereEstimate(center, ray, frozenset(frames[keep].tolist()))
        if t.id is None:
            t.id = self._next_id
            self._next_id += 1

    def _active_at(self, frame: int) -> int:
        own = self._owner.get(frame)
        return 0 if own is None else int(np.count_nonzero(own >= 0))

    def run(self, seq: Sequence[FrameDetections]) -> TrackingResult:
        by_frame: dict[int, FrameDetections] = {}
        for fd in seq:
            if fd.frame_index in by_frame:
                raise ValueError(f"frame {fd.frame_index} appears twice")
            by_frame[fd.frame_index] = fd
        missing = sorted(f for f, fd in by_frame.items() if fd.boxes and f not in self.cams)
        if missing:
            raise MissingCamera(f"no camera pose for frames {missing[:5]}")
        # frames without any detection still break continuity
        frames = sorted(set(by_frame) | set(self.cams))
        seq_all = [by_frame.get(f) or FrameDetections(f) for f in frames]

        per_frame: dict[int, int] = {}
        for i, fd in enumerate(seq_all):
            if self.cfg.relocalization and fd.boxes:
                self.relocalize(fd)
            if i + 1 < len(seq_all):
                self.associate_next(fd, seq_all[i + 1])
            # tracks holding a box of this frame, including ones started here
            per_frame[fd.frame_index] = self._active_at(fd.frame_index)
            self._owner.pop(fd.frame_index, None)
        count = sum(t.sphere is not None for t in self.tracks)
        return TrackingResult(tracks=self.tracks, count=count, per_frame_active=per_frame)


def run(
    seq: Sequence[FrameDetections],
    cams: Mapping[int, CameraMatrix],
    cfg: TrackerConfig = TrackerConfig(),
) -> TrackingResult:
    return Tracker(cams, cfg).run(seq)


def detections_from_labeled(boxes: Iterable[LabeledBox], frames: Iterable[int] = ()) -> list[FrameDetections]:
    """Group labelled boxes into per-frame detections, dropping labels."""
    by_frame: dict[int, list[BoundingBox]] = {f: [] for f in frames}
    for lb in sorted(boxes, key=lambda lb: (lb.frame, lb.track_id)):
        by_frame.setdefault(lb.frame, []).append(lb.box)
    return [FrameDetections(f, by_frame[f]) for f in sorted(by_frame)]


def degrade_detections(gt: Sequence[FrameDetections], rate: float, seed: int = 0) -> list[FrameDetections]:
    """Keep each box iff its uniform draw is <= ``rate``; frames stay even when emptied."""
    if not 0 <= rate <= 1:
        raise ValueError(f"rate must be in [0, 1], got {rate}")
    rng = np.random.default_rng(seed)
    out = []
    for fd in gt:
        # draws in (0, 1] so rate 0 drops and rate 1 keeps everything
        draws = 1.0 - rng.uniform(size=len(fd.boxes))
        out.append(FrameDetections(fd.frame_index, [b for b, u in zip(fd.boxes, draws) if u <= rate]))
    return out
