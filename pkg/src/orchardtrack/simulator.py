"""Synthetic orchard scenes with exact ground truth.

Spheres are scattered in a canopy box and filmed by a pinhole camera moving
along a sweep path. Each frame yields square boxes for spheres whose image is
inside the frame and more than half unoccluded by nearer spheres; random
blackout intervals stand in for leaves and branches.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .geometry import CameraMatrix, BoundingBox
from .metrics import LabeledBox, countable_ids


class InfeasiblePlacement(RuntimeError):
    pass


@dataclass(frozen=True)
class Intrinsics:
    focal: float = 1200.0
    cx: float = 640.0
    cy: float = 360.0
    width: int = 1280
    height: int = 720

    @property
    def k(self) -> np.ndarray:
        return np.array([[self.focal, 0.0, self.cx], [0.0, self.focal, self.cy], [0.0, 0.0, 1.0]])

    @property
    def image_size(self) -> tuple[int, int]:
        return (self.width, self.height)


@dataclass(frozen=True)
class SceneConfig:
    n_spheres: int = 150
    radius_range: tuple[float, float] = (0.025, 0.035)
    canopy_min: tuple[float, float, float] = (-1.5, -0.5, -1.5)
    canopy_max: tuple[float, float, float] = (1.5, 0.5, 1.5)
    # "sweep": bottom/middle/top passes joined by vertical moves; "arc": circle
    # around the canopy at mid height; "line": single horizontal pass
    path: str = "sweep"
    n_frames: int = 300
    camera_distance: float = 1.3
    sweep_half_width: float = 1.5
    sweep_heights: tuple[float, ...] = (-1.0, 0.0, 1.0)
    arc_degrees: float = 90.0
    intrinsics: Intrinsics = field(default_factory=Intrinsics)
    blackout_rate: float = 1.0
    blackout_mean_len: float = 6.0
    visibility_threshold: float = 0.5
    occlusion_resolution: int = 64
    max_placement_tries: int = 200_000
    seed: int = 0
    # explicit (x, y, z, ray) rows override random placement
    spheres: tuple[tuple[float, float, float, float], ...] | None = None

    def __post_init__(self):
        lo, hi = self.radius_range
        if self.n_spheres < 1 and not self.spheres:
            raise ValueError("need at least one sphere")
        if not 0 < lo <= hi:
            raise ValueError(f"bad radius range {self.radius_range}")
        if self.n_frames < 2:
            raise ValueError("need at least two frames")
        if self.path not in ("sweep", "arc", "line"):
            raise ValueError(f"unknown camera path {self.path!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SceneConfig":
        data = dict(data)
        if "intrinsics" in data and isinstance(data["intrinsics"], dict):
            data["intrinsics"] = Intrinsics(**data["intrinsics"])
        for key in ("radius_range", "canopy_min", "canopy_max", "sweep_heights"):
            if key in data:
                data[key] = tuple(data[key])
        if data.get("spheres") is not None:
            data["spheres"] = tuple(tuple(s) for s in data["spheres"])
        return cls(**data)


@dataclass
class GroundTruthScene:
    centers: np.ndarray
    rays: np.ndarray
    cams: dict[int, CameraMatrix]
    gt_boxes: list[LabeledBox]
    config: SceneConfig

    @property
    def intrinsics(self) -> Intrinsics:
        return self.config.intrinsics

    def frames(self) -> list[int]:
        return sorted(self.cams)

    def countable(self, min_run: int) -> np.ndarray:
        """Spheres visible in at least ``min_run`` consecutive frames somewhere."""
        out = np.zeros(len(self.rays), dtype=bool)
        for tid in countable_ids(self.gt_boxes, min_run):
            out[tid - 1] = True
        return out


def look_at(center: np.ndarray, target: np.ndarray, up=(0.0, 0.0, 1.0)) -> np.ndarray:
    """World-to-camera rotation with x right, y down and z toward ``target``."""
    fwd = np.asarray(target, float) - np.asarray(center, float)
    fwd /= np.linalg.norm(fwd)
    right = np.cross(fwd, up)
    right /= np.linalg.norm(right)
    down = np.cross(fwd, right)
    return np.vstack([right, down, fwd])


def camera_path(cfg: SceneConfig) -> np.ndarray:
    """Camera centers (n_frames, 3), evenly spaced along the path."""
    y = -cfg.camera_distance
    if cfg.path == "arc":
        half = np.radians(cfg.arc_degrees) / 2.0
        ang = np.linspace(-half, half, cfg.n_frames)
        mid = (np.array(cfg.canopy_min) + np.array(cfg.canopy_max)) / 2.0
        return np.column_stack(
            [mid[0] + cfg.camera_distance * np.sin(ang), mid[1] - cfg.camera_distance * np.cos(ang), np.full_like(ang, mid[2])]
        )
    w = cfg.sweep_half_width
    heights = cfg.sweep_heights if cfg.path == "sweep" else (float(np.mean(cfg.sweep_heights)),)
    knots = []
    for k, z in enumerate(heights):
        xs = (-w, w) if k % 2 == 0 else (w, -w)
        knots += [(xs[0], y, z), (xs[1], y, z)]
    knots = np.array(knots)
    seg = np.linalg.norm(np.diff(knots, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    s = np.linspace(0.0, cum[-1], cfg.n_frames)
    return np.column_stack([np.interp(s, cum, knots[:, i]) for i in range(3)])


def place_spheres(cfg: SceneConfig, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    if cfg.spheres is not None:
        arr = np.array(cfg.spheres, dtype=np.float64).reshape(-1, 4)
        return arr[:, :3].copy(), arr[:, 3].copy()
    lo, hi = np.array(cfg.canopy_min), np.array(cfg.canopy_max)
    centers = np.zeros((cfg.n_spheres, 3))
    rays = np.zeros(cfg.n_spheres)
    placed = tries = 0
    while placed < cfg.n_spheres:
        tries += 1
        if tries > cfg.max_placement_tries:
            raise InfeasiblePlacement(f"placed {placed} of {cfg.n_spheres} spheres in {tries - 1} tries")
        c = rng.uniform(lo, hi)
        r = rng.uniform(*cfg.radius_range)
        if placed and np.any(np.linalg.norm(centers[:placed] - c, axis=1) < rays[:placed] + r):
            continue
        centers[placed], rays[placed] = c, r
        placed += 1
    return centers, rays


def occlusion_fraction(near_disks, target, resolution: int = 64) -> float:
    """Share of the target disk covered by the union of nearer disks.

    Disks are ((u, v), r) pairs in pixels. Midpoint samples on a
    ``resolution`` x ``resolution`` grid over the target's bounding square.
    """
    (tu, tv), tr = target
    if tr <= 0:
        raise ValueError("disk radius must be positive")
    if len(near_disks) == 0:
        return 0.0
    offs = (np.arange(resolution) + 0.5) / resolution * 2.0 - 1.0
    gx, gy = np.meshgrid(offs, offs)
    inside = gx**2 + gy**2 <= 1.0
    px = tu + tr * gx[inside]
    py = tv + tr * gy[inside]
    covered = np.zeros(px.shape, dtype=bool)
    for (nu, nv), nr in near_disks:
        if nr <= 0:
            raise ValueError("disk radius must be positive")
        covered |= (px - nu) ** 2 + (py - nv) ** 2 <= nr**2
    return float(covered.mean())


def lens_area(r1: float, r2: float, dist: float) -> float:
    """Closed-form intersection area of two circles."""
    if dist >= r1 + r2:
        return 0.0
    if dist <= abs(r1 - r2):
        return np.pi * min(r1, r2) ** 2
    a1 = r1**2 * np.arccos((dist**2 + r1**2 - r2**2) / (2 * dist * r1))
    a2 = r2**2 * np.arccos((dist**2 + r2**2 - r1**2) / (2 * dist * r2))
    k = 0.5 * np.sqrt((-dist + r1 + r2) * (dist + r1 - r2) * (dist - r1 + r2) * (dist + r1 + r2))
    return float(a1 + a2 - k)


def _blackouts(cfg: SceneConfig, n: int, rng: np.random.Generator) -> np.ndarray:
    """(n_spheres, n_frames) mask of frames hidden by foliage."""
    hidden = np.zeros((n, cfg.n_frames), dtype=bool)
    if cfg.blackout_rate <= 0:
        return hidden
    counts = rng.poisson(cfg.blackout_rate, size=n)
    for s in range(n):
        for _ in range(counts[s]):
            start = int(rng.integers(0, cfg.n_frames))
            length = 1 + int(rng.geometric(1.0 / max(cfg.blackout_mean_len, 1.0)))
            hidden[s, start : start + length] = True
    return hidden


def generate_scene(cfg: SceneConfig) -> GroundTruthScene:
    rng = np.random.default_rng(cfg.seed)
    centers, rays = place_spheres(cfg, rng)
    n = len(rays)
    hidden = _blackouts(cfg, n, rng)
    intr = cfg.intrinsics
    k = intr.k
    target = (np.array(cfg.canopy_min) + np.array(cfg.canopy_max)) / 2.0

    cams: dict[int, CameraMatrix] = {}
    gt: list[LabeledBox] = []
    for idx, c in enumerate(camera_path(cfg)):
        frame = idx + 1
        r = look_at(c, target)
        t = -r @ c
        cam = CameraMatrix.from_krt(k, r, t, frame)
        cams[frame] = cam

        cam_pts = centers @ r.T + t
        depth = cam_pts[:, 2]
        dist = np.linalg.norm(centers - c, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            u = intr.focal * cam_pts[:, 0] / depth + intr.cx
            v = intr.focal * cam_pts[:, 1] / depth + intr.cy
        rad = intr.focal * rays / dist
        front = depth > 0
        order = np.argsort(dist, kind="stable")
        for rank, s in enumerate(order):
            if not front[s] or hidden[s, idx]:
                continue
            x0, y0 = u[s] - rad[s], v[s] - rad[s]
            if x0 < 0 or y0 < 0 or x0 + 2 * rad[s] > intr.width or y0 + 2 * rad[s] > intr.height:
                continue
            nearer = order[:rank]
            nearer = nearer[front[nearer]]
            gap = np.hypot(u[nearer] - u[s], v[nearer] - v[s])
            nearer = nearer[gap < rad[nearer] + rad[s]]
            occ = occlusion_fraction(
                [((u[j], v[j]), rad[j]) for j in nearer], ((u[s], v[s]), rad[s]), cfg.occlusion_resolution
            )
            vis = 1.0 - occ
            if vis <= cfg.visibility_threshold:
                continue
            gt.append(LabeledBox(frame, int(s) + 1, BoundingBox(x0, y0, 2 * rad[s], 2 * rad[s]), visibility=vis))
    gt.sort(key=lambda lb: (lb.frame, lb.track_id))
    return GroundTruthScene(centers=centers, rays=rays, cams=cams, gt_boxes=gt, config=cfg)
