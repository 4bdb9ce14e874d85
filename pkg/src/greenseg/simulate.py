"""Deterministic synthetic greenhouse scenes with analytic labels.

Scenes are built in a world frame; every frame samples the surfaces around
the robot on a jittered grid, keeps what falls inside a forward camera
wedge, and expresses the result in the camera frame. Truth labels come
straight from construction: floor is ground, physical objects are obstacle
or above depending on their base-frame height, and injected artifacts
(ghost returns, flying pixels, self returns) are noise.

Artifact severities and material constants here are generator settings,
not measured values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .core import PointCloud, RigidTransform, SemanticLabel

SCENARIOS = ("central_corridor", "crop_rows", "end_turn", "corridor_change")
SOLAR = ("s1", "s2", "s3", "s4")


@dataclass(frozen=True)
class SolarProfile:
    ghost_fraction: float
    ghost_holes: int
    glare_holes: int
    outlier_fraction: float

    @property
    def has_artifacts(self) -> bool:
        return self.ghost_fraction > 0 or self.ghost_holes > 0 or self.glare_holes > 0


# ordered by severity: 08:00, 10:00, 12:00, 14:00
SOLAR_PROFILES = {
    "s1": SolarProfile(0.0, 0, 0, 0.002),
    "s2": SolarProfile(0.015, 1, 0, 0.004),
    "s3": SolarProfile(0.03, 2, 1, 0.006),
    "s4": SolarProfile(0.05, 2, 2, 0.008),
}


@dataclass(frozen=True)
class Material:
    """``relief`` is the RMS height of a smooth random surface (m);
    ``sensor_sigma`` the isotropic white noise added to every return."""

    relief: float
    sensor_sigma: float = 0.0015


MATERIALS = {
    "concrete": Material(0.002),
    "gravel": Material(0.008),
    "tilled_soil": Material(0.015),
}

SCENARIO_MATERIALS = {
    "central_corridor": {"floor": "concrete"},
    "crop_rows": {"floor": "gravel"},
    "end_turn": {"aisle": "tilled_soil", "corridor": "concrete"},
    "corridor_change": {"aisle": "gravel", "corridor": "concrete"},
}


@dataclass(frozen=True)
class ScenePreset:
    scenario: str = "central_corridor"
    solar: str = "s1"
    slope_pct: float = 1.0
    # region name -> Material; None uses the scenario defaults
    materials: dict | None = None
    rng_seed: int = 0
    aisle_width: float = 1.0
    spacing: float = 0.013
    static: bool = False
    # overrides the solar profile's ghost fraction when set
    ghost_fraction: float | None = None
    outliers: bool = True
    robot_height: float = 0.5
    mount: RigidTransform = field(
        default_factory=lambda: RigidTransform.from_rpy(0.0, 30.0, 0.0, translation=(0.4, 0.0, 0.5))
    )
    hfov_deg: float = 87.0
    max_range: float = 3.15

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}")
        if self.solar not in SOLAR_PROFILES:
            raise ValueError(f"unknown solar profile {self.solar!r}")
        if not 0 <= self.slope_pct <= 2:
            raise ValueError("slope_pct must lie in [0, 2]")
        if self.spacing <= 0:
            raise ValueError("spacing must be positive")
        for m in (self.materials or {}).values():
            if m.relief < 0 or m.sensor_sigma < 0:
                raise ValueError("material sigmas must be non-negative")

    @property
    def profile(self) -> SolarProfile:
        p = SOLAR_PROFILES[self.solar]
        if self.ghost_fraction is not None:
            p = replace(p, ghost_fraction=self.ghost_fraction,
                        ghost_holes=max(p.ghost_holes, 1 if self.ghost_fraction > 0 else 0))
        return p

    def material(self, region: str) -> Material:
        if self.materials and region in self.materials:
            return self.materials[region]
        return MATERIALS[SCENARIO_MATERIALS[self.scenario][region]]

    def with_(self, **changes) -> "ScenePreset":
        return replace(self, **changes)


@dataclass(frozen=True, eq=False)
class SceneFrame:
    cloud: PointCloud
    true_labels: np.ndarray
    artifact_index: np.ndarray
    tf: RigidTransform
    base_points: np.ndarray
    ghost_index: np.ndarray
    frame_index: int = 0

    def __len__(self) -> int:
        return len(self.cloud)


# --------------------------------------------------------------------------
# world geometry


@dataclass
class _Rect:
    x0: float
    x1: float
    y0: float
    y1: float
    region: str = "floor"
    lift: float = 0.0

    def contains(self, x, y):
        return (x >= self.x0) & (x <= self.x1) & (y >= self.y0) & (y <= self.y1)


@dataclass
class _Wall:
    """Vertical foliage/structure plane, either x = const or y = const."""

    axis: str  # "x": plane x = c spanning y in [a, b]; "y": plane y = c spanning x
    c: float
    a: float
    b: float
    height: float = 2.0


@dataclass
class _Box:
    cx: float
    cy: float
    hx: float
    hy: float
    h: float


@dataclass
class _Pipe:
    y: float
    x0: float
    x1: float
    zc: float
    radius: float


@dataclass
class _Blob:
    center: np.ndarray
    radius: float


@dataclass
class _World:
    floors: list
    walls: list
    boxes: list = field(default_factory=list)
    pipes: list = field(default_factory=list)
    blobs: list = field(default_factory=list)
    hole_zone: tuple = (1.0, 2.6, -0.3, 0.3)
    pose_step: tuple = (0.1, 0.0, 0.0)  # dx, dy, dyaw(deg) per frame


class _Relief:
    """Smooth random height field: a sum of plane waves, unit RMS."""

    def __init__(self, rng: np.random.Generator, n_waves: int = 6):
        lam = rng.uniform(0.4, 1.2, n_waves)
        ang = rng.uniform(0, 2 * math.pi, n_waves)
        self.k = np.stack([np.cos(ang), np.sin(ang)], axis=1) * (2 * math.pi / lam)[:, None]
        self.phase = rng.uniform(0, 2 * math.pi, n_waves)
        self.amp = math.sqrt(2.0 / n_waves)

    def __call__(self, x, y):
        arg = np.outer(x, self.k[:, 0]) + np.outer(y, self.k[:, 1]) + self.phase
        return self.amp * np.cos(arg).sum(axis=1)


def _build_world(preset: ScenePreset, rng: np.random.Generator) -> _World:
    s = preset.scenario
    if s == "central_corridor":
        half = 1.0
        world = _World(
            floors=[_Rect(-2, 60, -half, half, "floor")],
            walls=[_Wall("y", -half, -2, 60), _Wall("y", half, -2, 60)],
            boxes=[_Box(1.6 + rng.uniform(-0.1, 0.1), 0.55, 0.15, 0.15, 0.3),
                   _Box(2.5 + rng.uniform(-0.1, 0.1), -0.55, 0.15, 0.15, 0.3)],
            blobs=[_Blob(np.array([2.0, 0.0, 1.8]), 0.1)],
            hole_zone=(1.0, 2.4, -0.25, 0.25),
            pose_step=(0.1, 0.0, 0.0),
        )
    elif s == "crop_rows":
        half = preset.aisle_width / 2
        blobs = []
        for x in np.arange(0.8, 8.0, 0.6):
            side = rng.choice([-1.0, 1.0])
            blobs.append(_Blob(np.array([x + rng.uniform(-0.1, 0.1), side * (half - 0.05),
                                         rng.uniform(0.4, 1.4)]), 0.08))
        world = _World(
            floors=[_Rect(-2, 60, -half, half, "floor")],
            walls=[_Wall("y", -half, -2, 60), _Wall("y", half, -2, 60)],
            blobs=blobs,
            hole_zone=(1.0, 2.6, -0.12, 0.12),
            pose_step=(0.05, 0.0, 0.0),
        )
    elif s == "end_turn":
        half = preset.aisle_width / 2
        world = _World(
            floors=[_Rect(-4, 0.0, -half, half, "aisle"), _Rect(0.0, 2.0, -8, 8, "corridor")],
            walls=[_Wall("y", -half, -4, 0.0), _Wall("y", half, -4, 0.0),
                   _Wall("x", 0.0, -8, -half), _Wall("x", 0.0, half, 8),
                   _Wall("x", 2.0, -8, 8)],
            hole_zone=(0.8, 1.4, -0.7, 0.7),
            pose_step=(0.0, 0.0, 9.0),
        )
    else:  # corridor_change
        half = preset.aisle_width / 2
        world = _World(
            floors=[_Rect(-4, 0.0, -half, half, "aisle"),
                    _Rect(0.0, 2.0, -8, 8, "corridor", lift=0.01),
                    _Rect(2.0, 8.0, -half, half, "aisle")],
            walls=[_Wall("y", -half, -4, 0.0), _Wall("y", half, -4, 0.0),
                   _Wall("x", 0.0, -8, -half), _Wall("x", 0.0, half, 8),
                   _Wall("x", 2.0, -8, -half), _Wall("x", 2.0, half, 8),
                   _Wall("y", -half, 2.0, 8.0), _Wall("y", half, 2.0, 8.0)],
            pipes=[_Pipe(-0.3, 2.1, 8.0, 0.1, 0.025), _Pipe(0.3, 2.1, 8.0, 0.1, 0.025)],
            hole_zone=(0.6, 1.4, -0.7, 0.7),
            pose_step=(0.1, 0.0, 0.0),
        )
    return world


# --------------------------------------------------------------------------
# sampling helpers


def _grid(a0, a1, b0, b1, h, rng):
    a = np.arange(a0, a1, h)
    b = np.arange(b0, b1, h)
    if len(a) == 0 or len(b) == 0:
        return np.empty(0), np.empty(0)
    aa, bb = np.meshgrid(a, b, indexing="ij")
    aa = aa.ravel() + rng.uniform(-0.25 * h, 0.25 * h, aa.size)
    bb = bb.ravel() + rng.uniform(-0.25 * h, 0.25 * h, bb.size)
    return aa, bb


class _Scene:
    def __init__(self, preset: ScenePreset):
        self.preset = preset
        ss = np.random.SeedSequence([preset.rng_seed, SCENARIOS.index(preset.scenario),
                                     SOLAR.index(preset.solar)])
        geo_rng = np.random.default_rng(ss.spawn(1)[0])
        self.world = _build_world(preset, geo_rng)
        self.relief = _Relief(geo_rng)
        phi = geo_rng.uniform(0, 2 * math.pi)
        self.slope = preset.slope_pct / 100.0 * np.array([math.cos(phi), math.sin(phi)])
        self.holes = self._place_holes(geo_rng)

    # -- floor model -------------------------------------------------------

    def floor_region(self, x, y):
        """Index into world.floors (or -1) for each (x, y)."""
        out = np.full(len(x), -1)
        for i, rect in enumerate(self.world.floors):
            out[(out < 0) & rect.contains(x, y)] = i
        return out

    def floor_z(self, x, y, region=None):
        if region is None:
            region = self.floor_region(x, y)
        z = self.slope[0] * x + self.slope[1] * y
        base = self.relief(x, y)
        amp = np.zeros(len(x))
        lift = np.zeros(len(x))
        for i, rect in enumerate(self.world.floors):
            sel = region == i
            amp[sel] = self.preset.material(rect.region).relief
            lift[sel] = rect.lift
        return z + amp * base + lift

    def sensor_sigma(self, x, y):
        region = self.floor_region(x, y)
        sig = np.full(len(x), MATERIALS["concrete"].sensor_sigma)
        for i, rect in enumerate(self.world.floors):
            sig[region == i] = self.preset.material(rect.region).sensor_sigma
        return sig

    # -- artifacts ---------------------------------------------------------

    GHOST_RADIUS = 0.07
    GHOST_GAP = 0.2
    GLARE_RADIUS = 0.12

    @property
    def ghost_hole_radius(self) -> float:
        return self.GHOST_RADIUS + self.GHOST_GAP + 0.03

    def _obstacle_clearance(self, cx, cy):
        d = math.inf
        for b in self.world.boxes:
            dx = max(abs(cx - b.cx) - b.hx, 0.0)
            dy = max(abs(cy - b.cy) - b.hy, 0.0)
            d = min(d, math.hypot(dx, dy))
        for w in self.world.walls:
            if w.axis == "y" and w.a <= cx <= w.b:
                d = min(d, abs(cy - w.c))
            elif w.axis == "x" and w.a <= cy <= w.b:
                d = min(d, abs(cx - w.c))
        for p in self.world.pipes:
            if p.x0 - 0.3 <= cx <= p.x1:
                d = min(d, abs(cy - p.y))
        return d

    def _place_holes(self, rng):
        prof = self.preset.profile
        x0, x1, y0, y1 = self.world.hole_zone
        holes = []  # (cx, cy, radius, is_ghost)
        wanted = [(self.ghost_hole_radius, True)] * prof.ghost_holes
        wanted += [(self.GLARE_RADIUS, False)] * prof.glare_holes
        for radius, ghost in wanted:
            for _ in range(200):
                cx, cy = rng.uniform(x0, x1), rng.uniform(y0, y1)
                if self._obstacle_clearance(cx, cy) < radius + 0.05:
                    continue
                if any(math.hypot(cx - hx, cy - hy) < radius + hr + 0.3 for hx, hy, hr, _ in holes):
                    continue
                holes.append((cx, cy, radius, ghost))
                break
        return holes

    # -- per-frame sampling ------------------------------------------------

    def pose(self, frame_index: int):
        k = 0 if self.preset.static else frame_index
        dx, dy, dyaw = self.world.pose_step
        return k * dx, k * dy, math.radians(k * dyaw)

    def sample(self, frame_index: int, rng: np.random.Generator) -> SceneFrame:
        p = self.preset
        h = p.spacing
        px, py, yaw = self.pose(frame_index)
        R = p.max_range
        bx0, bx1, by0, by1 = px - R, px + R, py - R, py + R

        parts_pts, parts_lbl = [], []

        def add(pts, labels):
            if len(pts):
                parts_pts.append(pts)
                parts_lbl.append(labels)

        # floor
        fx, fy = _grid(bx0, bx1, by0, by1, h, rng)
        # cheap pre-cull to the range disk
        near = (fx - px) ** 2 + (fy - py) ** 2 <= R * R
        fx, fy = fx[near], fy[near]
        region = self.floor_region(fx, fy)
        keep = region >= 0
        for cx, cy, rad, _ in self.holes:
            keep &= (fx - cx) ** 2 + (fy - cy) ** 2 > rad * rad
        fx, fy, region = fx[keep], fy[keep], region[keep]
        fz = self.floor_z(fx, fy, region)
        add(np.column_stack([fx, fy, fz]), np.full(len(fx), SemanticLabel.GROUND))

        # walls: dense low band, sparse above
        for w in self.world.walls:
            lo, hi = (max(w.a, (by0 if w.axis == "x" else bx0)),
                      min(w.b, (by1 if w.axis == "x" else bx1)))
            if hi <= lo:
                continue
            if w.axis == "x" and not (bx0 <= w.c <= bx1):
                continue
            if w.axis == "y" and not (by0 <= w.c <= by1):
                continue
            for z0, z1, step in ((0.0, 0.3, h), (0.3, w.height, 2.5 * h)):
                s, t = _grid(lo, hi, z0, z1, step, rng)
                c = np.full(len(s), w.c) + rng.normal(0, 0.002, len(s))
                if w.axis == "x":
                    wx, wy = c, s
                else:
                    wx, wy = s, c
                wz = self._ground_under(wx, wy) + t
                add(np.column_stack([wx, wy, wz]), self._object_labels(wz))

        for b in self.world.boxes:
            add(*self._sample_box(b, h, rng))
        for pipe in self.world.pipes:
            add(*self._sample_pipe(pipe, h, bx0, bx1, rng))
        for blob in self.world.blobs:
            n = int(4 * math.pi * blob.radius ** 2 / h ** 2)
            v = rng.normal(size=(n, 3))
            v /= np.linalg.norm(v, axis=1, keepdims=True)
            pts = blob.center + blob.radius * v
            pts[:, 2] += self._ground_under(pts[:, 0], pts[:, 1])
            add(pts, self._object_labels(pts[:, 2]))

        world_pts = np.concatenate(parts_pts)
        labels = np.concatenate(parts_lbl).astype(np.uint8)

        # white sensor noise
        sig = self.sensor_sigma(world_pts[:, 0], world_pts[:, 1])
        world_pts = world_pts + rng.normal(size=world_pts.shape) * sig[:, None]

        base = self._to_base(world_pts, px, py, yaw)
        vis = self._visible(base)
        base, labels = base[vis], labels[vis]

        ghost_pts = self._ghosts(len(base), px, py, yaw, rng)
        outlier_pts = self._outliers(len(base), rng)
        self_pts = self._self_returns(rng)
        n_real = len(base)
        base = np.concatenate([base, ghost_pts, outlier_pts, self_pts])
        n_art = len(base) - n_real
        labels = np.concatenate([labels, np.full(n_art, SemanticLabel.NOISE, dtype=np.uint8)])
        artifact_index = np.arange(n_real, len(base))
        ghost_index = np.arange(n_real, n_real + len(ghost_pts))

        sensor = p.mount.inverse().apply(base)
        cloud = PointCloud(sensor, "camera_link", stamp=frame_index * 0.1)
        return SceneFrame(cloud, labels, artifact_index, p.mount, base, ghost_index, frame_index)

    def _ground_under(self, x, y):
        """Floor height at (x, y), ignoring holes; off-floor uses the nearest
        plane-plus-relief value."""
        return self.floor_z(x, y)

    def _object_labels(self, z):
        return np.where(z <= self.preset.robot_height, SemanticLabel.OBSTACLE,
                        SemanticLabel.ABOVE).astype(np.uint8)

    def _sample_box(self, b: _Box, h, rng):
        pts = []
        g = self._ground_under(np.array([b.cx]), np.array([b.cy]))[0]
        for sx in (-1, 1):
            s, t = _grid(b.cy - b.hy, b.cy + b.hy, 0.0, b.h, h, rng)
            pts.append(np.column_stack([np.full(len(s), b.cx + sx * b.hx), s, t + g]))
        for sy in (-1, 1):
            s, t = _grid(b.cx - b.hx, b.cx + b.hx, 0.0, b.h, h, rng)
            pts.append(np.column_stack([s, np.full(len(s), b.cy + sy * b.hy), t + g]))
        s, t = _grid(b.cx - b.hx, b.cx + b.hx, b.cy - b.hy, b.cy + b.hy, h, rng)
        pts.append(np.column_stack([s, t, np.full(len(s), g + b.h)]))
        pts = np.concatenate(pts)
        return pts, self._object_labels(pts[:, 2])

    def _sample_pipe(self, pipe: _Pipe, h, bx0, bx1, rng):
        x0, x1 = max(pipe.x0, bx0), min(pipe.x1, bx1)
        if x1 <= x0:
            return np.empty((0, 3)), np.empty(0, dtype=np.uint8)
        s, a = _grid(x0, x1, 0.0, 2 * math.pi, h / pipe.radius, rng)
        s = s + rng.uniform(-0.25 * h, 0.25 * h, len(s))
        y = pipe.y + pipe.radius * np.cos(a)
        z = pipe.zc + pipe.radius * np.sin(a) + self._ground_under(s, np.full(len(s), pipe.y))
        pts = np.column_stack([s, y, z])
        return pts, self._object_labels(z)

    def _to_base(self, pts, px, py, yaw):
        c, s = math.cos(yaw), math.sin(yaw)
        dx, dy = pts[:, 0] - px, pts[:, 1] - py
        return np.column_stack([c * dx + s * dy, -s * dx + c * dy, pts[:, 2]])

    def _from_base(self, pts, px, py, yaw):
        c, s = math.cos(yaw), math.sin(yaw)
        return np.column_stack([px + c * pts[:, 0] - s * pts[:, 1],
                                py + s * pts[:, 0] + c * pts[:, 1], pts[:, 2]])

    def _visible(self, base):
        cam = self.preset.mount.translation
        fwd = base[:, 0] - cam[0]
        ang = np.abs(np.arctan2(base[:, 1] - cam[1], fwd))
        r = np.hypot(base[:, 0], base[:, 1])
        return (fwd > 0.05) & (ang <= math.radians(self.preset.hfov_deg / 2)) & (r <= self.preset.max_range)

    def _ghosts(self, n_other, px, py, yaw, rng):
        f = self.preset.profile.ghost_fraction
        holes = [hl for hl in self.holes if hl[3]]
        if f <= 0 or not holes:
            return np.empty((0, 3))
        centers = self._to_base(np.array([[hx, hy, 0.0] for hx, hy, _, _ in holes]), px, py, yaw)
        r = np.hypot(centers[:, 0], centers[:, 1])
        usable = [i for i in range(len(holes))
                  if 0.6 <= r[i] <= self.preset.max_range - 0.5 and self._visible(centers[i:i + 1])[0]]
        if not usable:
            return np.empty((0, 3))
        n = int(round(f * n_other / (1.0 - f)))
        which = np.arange(n) % len(usable)
        out = np.empty((n, 3))
        for k, i in enumerate(usable):
            m = int(np.count_nonzero(which == k))
            hx, hy = holes[i][0], holes[i][1]
            rad = self.GHOST_RADIUS * np.sqrt(rng.uniform(0, 1, m))
            th = rng.uniform(0, 2 * math.pi, m)
            gx, gy = hx + rad * np.cos(th), hy + rad * np.sin(th)
            gz = self.floor_z(gx, gy) - rng.uniform(0.03, 0.10, m)
            out[which == k] = self._to_base(np.column_stack([gx, gy, gz]), px, py, yaw)
        return out

    def _outliers(self, n_other, rng):
        f = self.preset.profile.outlier_fraction if self.preset.outliers else 0.0
        n = int(round(f * n_other))
        if n == 0:
            return np.empty((0, 3))
        half = math.radians(self.preset.hfov_deg / 2) * 0.9
        r = rng.uniform(0.6, self.preset.max_range - 0.2, n)
        a = rng.uniform(-half, half, n)
        cam = self.preset.mount.translation
        x = cam[0] + r * np.cos(a)
        y = cam[1] + r * np.sin(a)
        z = rng.uniform(-0.4, 1.2, n)
        pts = np.column_stack([x, y, z])
        return pts[np.hypot(x, y) <= self.preset.max_range]

    def _self_returns(self, rng):
        n = 12
        r = rng.uniform(0.05, 0.25, n)
        a = rng.uniform(-0.6, 0.6, n)
        return np.column_stack([r * np.cos(a), r * np.sin(a), rng.uniform(0.0, 0.4, n)])


def _frame_rng(preset: ScenePreset, frame_index: int) -> np.random.Generator:
    # a static scene replays one realization, noise included
    k = 0 if preset.static else frame_index
    ss = np.random.SeedSequence([preset.rng_seed, SCENARIOS.index(preset.scenario),
                                 SOLAR.index(preset.solar), 1_000_003, k])
    return np.random.default_rng(ss)


def generate_frame(preset: ScenePreset, frame_index: int = 0) -> SceneFrame:
    return _Scene(preset).sample(frame_index, _frame_rng(preset, frame_index))


def generate_sequence(preset: ScenePreset, n_frames: int) -> list[SceneFrame]:
    if n_frames < 1:
        raise ValueError("n_frames must be at least 1")
    scene = _Scene(preset)
    return [scene.sample(k, _frame_rng(preset, k)) for k in range(n_frames)]


def scene_holes(preset: ScenePreset):
    """(cx, cy, radius, is_ghost) of every dropout hole, world frame."""
    return list(_Scene(preset).holes)


def flat_floor_frame(n_points: int = 10_000, slope_pct: float = 0.0, noise: float = 0.0,
                     seed: int = 0, extent=(0.3, 3.0)) -> tuple[np.ndarray, np.ndarray]:
    """Uniform random floor patch z = slope * x + noise in the base frame.

    Returns the points and the true (normal, offset) as a 4-vector.
    """
    rng = np.random.default_rng(seed)
    x = rng.uniform(extent[0], extent[1], n_points)
    y = rng.uniform(-1.0, 1.0, n_points)
    s = slope_pct / 100.0
    z = s * x + rng.normal(0, noise, n_points) if noise else s * x
    n = np.array([-s, 0.0, 1.0]) / math.sqrt(1 + s * s)
    return np.column_stack([x, y, z]), np.append(n, 0.0)
