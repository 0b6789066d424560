from dataclasses import dataclass
import logging

import numpy as np

from Classes.Base import Config
from Classes.Base.CustomExceptionClass import InvalidConfig, InvalidSceneParams
from Classes.Cloud.PointCloudClass import PointCloud
from Classes.Cloud.RigidTransformClass import RigidTransform

logger = logging.getLogger(__name__)

OBJECT_KINDS = ('box', 'cylinder', 'plane')
# objects keep this clearance from the first sensor position
MIN_OBJECT_RANGE = 3.0


@dataclass(frozen=True)
class SceneParams:
    frame_count: int = 2
    object_count: int = 12
    points_per_object: int = 400
    noise_sigma: float = 0.01
    dropout: float = 0.1
    intensity_noise: float = 0.02
    max_translation: float = 0.5
    max_rotation: float = 0.1
    scene_radius: float = 15.0

    def __post_init__(self):
        problems = []
        if self.frame_count < 1:
            problems.append("frame_count must be >= 1")
        if self.object_count < 1:
            problems.append("object_count must be >= 1")
        if self.points_per_object < 1:
            problems.append("points_per_object must be >= 1")
        if self.noise_sigma < 0 or self.intensity_noise < 0:
            problems.append("noise levels must be >= 0")
        if not 0.0 <= self.dropout < 1.0:
            problems.append("dropout must lie in [0, 1)")
        if self.max_translation < 0 or self.max_rotation < 0:
            problems.append("motion bounds must be >= 0")
        if self.scene_radius <= MIN_OBJECT_RANGE + 1.0:
            problems.append(f"scene_radius must exceed {MIN_OBJECT_RANGE + 1.0} m")
        if problems:
            raise InvalidSceneParams("; ".join(problems), payload={"problems": problems})

    @classmethod
    def from_mapping(cls, mapping):
        try:
            return Config.from_mapping(cls, mapping)
        except InvalidConfig as e:
            if isinstance(e, InvalidSceneParams):
                raise
            raise InvalidSceneParams(e.message)


def _box(rng, n):
    size = rng.uniform(0.6, 2.5, size=3)
    faces = [(axis, side) for axis in range(3) for side in (-0.5, 0.5)]
    areas = np.array([np.prod(np.delete(size, axis)) for axis, _ in faces])
    face = rng.choice(len(faces), size=n, p=areas / areas.sum())
    pts = (rng.random((n, 3)) - 0.5) * size
    shade = rng.uniform(0.05, 0.95, size=len(faces))
    for k, (axis, side) in enumerate(faces):
        pts[face == k, axis] = side * size[axis]
    pts[:, 2] += size[2] / 2.0
    return pts, shade[face]


def _cylinder(rng, n):
    radius, height = rng.uniform(0.2, 0.8), rng.uniform(0.8, 3.0)
    lateral_area, cap_area = 2 * np.pi * radius * height, np.pi * radius ** 2
    on_cap = rng.random(n) < cap_area / (lateral_area + cap_area)
    theta = rng.uniform(0.0, 2 * np.pi, size=n)
    r = np.where(on_cap, radius * np.sqrt(rng.random(n)), radius)
    z = np.where(on_cap, height, rng.uniform(0.0, height, size=n))
    shade = rng.uniform(0.05, 0.95, size=2)
    return np.column_stack([r * np.cos(theta), r * np.sin(theta), z]), np.where(on_cap, shade[1], shade[0])


def _plane(rng, n):
    width, height = rng.uniform(1.5, 5.0), rng.uniform(1.0, 3.0)
    tile = rng.uniform(0.3, 0.8)
    y = rng.uniform(-width / 2, width / 2, size=n)
    z = rng.uniform(0.0, height, size=n)
    # two-tone tiling so flat walls still carry reflectance structure
    shade = rng.uniform(0.05, 0.95, size=2)
    checker = (np.floor(y / tile) + np.floor(z / tile)).astype(np.int64) % 2
    return np.column_stack([np.zeros(n), y, z]), shade[checker]


SHAPES = {'box': _box, 'cylinder': _cylinder, 'plane': _plane}


def build_world(rng, params):
    """World-frame surface samples: (points, base intensity, object index)."""
    points, shades, owners = [], [], []
    for k in range(params.object_count):
        kind = OBJECT_KINDS[rng.integers(len(OBJECT_KINDS))]
        local, shade = SHAPES[kind](rng, params.points_per_object)
        bearing = rng.uniform(0.0, 2 * np.pi)
        distance = rng.uniform(MIN_OBJECT_RANGE + 1.0, params.scene_radius)
        place = RigidTransform.from_axis_angle(
            Config.GLOBAL_UP, rng.uniform(0.0, 2 * np.pi),
            (distance * np.cos(bearing), distance * np.sin(bearing), -1.5),
        )
        points.append(place.apply(local))
        shades.append(shade)
        owners.append(np.full(len(local), k, dtype=np.int64))
    return np.vstack(points), np.concatenate(shades), np.concatenate(owners)


def synth_scene(seed, params=None):
    """Posed synthetic frames of one static scene seen from a moving sensor.

    Frame 0 sits at the world origin; each later pose adds a bounded random
    yaw and planar translation to the previous one. Every frame observes the
    scene through its inverse pose, then receives position noise, point
    dropout and reflectance noise. ``point_ids`` name the surface sample
    behind every return.
    """
    params = params or SceneParams()
    rng = np.random.default_rng(seed)
    world, shade, _ = build_world(rng, params)
    ids = np.arange(len(world), dtype=np.int64)

    frames = []
    pose = RigidTransform.identity()
    for f in range(params.frame_count):
        if f:
            step = RigidTransform.from_axis_angle(
                Config.GLOBAL_UP,
                rng.uniform(-params.max_rotation, params.max_rotation),
                (*rng.uniform(-params.max_translation, params.max_translation, size=2), 0.0),
            )
            pose = pose.compose(step)
        keep = rng.random(len(world)) >= params.dropout
        local = pose.inverse().apply(world[keep])
        local = local + rng.normal(0.0, params.noise_sigma, size=local.shape)
        intensity = np.clip(shade[keep] + rng.normal(0.0, params.intensity_noise, size=int(keep.sum())), 0.0, 1.0)
        cloud = PointCloud(local, intensity, frame_id=f, point_ids=ids[keep])
        frames.append((cloud, RigidTransform(pose.rotation, pose.translation)))
    logger.info("Synthesized %d frame(s) of %d surface samples (seed %s)", len(frames), len(world), seed)
    return frames
