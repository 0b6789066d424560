from dataclasses import dataclass, field, replace
import logging
import math

import numpy as np

from Classes.Base import Config
from Classes.Base.CustomExceptionClass import DegenerateRay, EmptyNeighborhood, InvalidConfig
from Classes.Base.CustomThreadClass import run_chunked
from Classes.Cloud.PointCloudClass import Keypoint, radius_neighbors

logger = logging.getLogger(__name__)

# fallback threshold for rays parallel to the up vector
NEAR_VERTICAL = 1e-6


@dataclass(frozen=True)
class PatchParams:
    cube_edge: float = Config.CUBE_EDGE
    grid_rows: int = Config.GRID_ROWS
    grid_cols: int = Config.GRID_COLS
    channels: str = Config.CHANNEL_SETS[0]
    empty_fill: float = Config.EMPTY_FILL
    occupancy_epsilon: float = Config.OCCUPANCY_EPSILON

    def __post_init__(self):
        if not self.cube_edge > 0:
            raise InvalidConfig(f"cube_edge must be > 0, got {self.cube_edge}")
        if (self.grid_rows, self.grid_cols) != (Config.GRID_ROWS, Config.GRID_COLS):
            raise InvalidConfig(f"grid must be {Config.GRID_ROWS}x{Config.GRID_COLS}")
        if self.channels not in Config.CHANNEL_SETS:
            raise InvalidConfig(f"channels must be one of {', '.join(Config.CHANNEL_SETS)}, got '{self.channels}'")
        if not 0.0 < self.occupancy_epsilon < 1.0:
            raise InvalidConfig(f"occupancy_epsilon must lie in (0, 1), got {self.occupancy_epsilon}")

    @classmethod
    def from_mapping(cls, mapping):
        return Config.from_mapping(cls, mapping)

    @property
    def channel_count(self):
        return 2 if self.channels == 'depth+intensity' else 1

    @property
    def channel_code(self):
        return Config.CHANNEL_SETS.index(self.channels)

    @property
    def cell_size(self):
        return self.cube_edge / self.grid_cols

    @property
    def half_diagonal(self):
        return self.cube_edge * math.sqrt(3.0) / 2.0

    def with_channels(self, channels):
        return replace(self, channels=channels)


@dataclass
class VoxelPatch:
    values: np.ndarray
    keypoint: Keypoint
    params: PatchParams = field(default_factory=PatchParams)

    @property
    def depth(self):
        return self.values[..., 0] if self.params.channels != 'intensity' else None

    @property
    def intensity(self):
        return self.values[..., -1] if self.params.channels != 'depth' else None


def local_frame(sensor_origin, keypoint, up=Config.GLOBAL_UP):
    """Right-handed basis (u, v, w) with w along the sensor -> keypoint ray."""
    ray = np.asarray(keypoint, dtype=np.float64) - np.asarray(sensor_origin, dtype=np.float64)
    length = np.linalg.norm(ray)
    if length == 0.0:
        raise DegenerateRay(f"Keypoint {tuple(np.asarray(keypoint).tolist())} coincides with the sensor origin")
    w = ray / length
    u = np.cross(np.asarray(up, dtype=np.float64), w)
    if np.linalg.norm(u) < NEAR_VERTICAL:
        u = np.cross(np.asarray(Config.GLOBAL_X, dtype=np.float64), w)
    u /= np.linalg.norm(u)
    v = np.cross(w, u)
    return u, v, w


def extract_patch(cloud, keypoint, params=None):
    params = params or PatchParams()
    center = np.asarray(keypoint.position, dtype=np.float64)
    u, v, w = local_frame(cloud.sensor_origin, center, cloud.sensor_up)

    h = params.cube_edge / 2.0
    candidates = np.asarray(radius_neighbors(cloud, center, params.half_diagonal), dtype=np.int64)
    if not len(candidates):
        raise EmptyNeighborhood(f"No points inside the {params.cube_edge} m cube around keypoint {keypoint.source_index}")
    offsets = cloud.xyz[candidates] - center
    a, b, c = offsets @ u, offsets @ v, offsets @ w
    inside = (np.abs(a) <= h) & (np.abs(b) <= h) & (np.abs(c) <= h)
    if not inside.any():
        raise EmptyNeighborhood(f"No points inside the {params.cube_edge} m cube around keypoint {keypoint.source_index}")

    last = params.grid_cols - 1
    col = np.minimum(np.floor((a[inside] + h) / params.cell_size), last).astype(np.int64)
    row = np.minimum(np.floor((b[inside] + h) / params.cell_size), last).astype(np.int64)
    cell = row * params.grid_cols + col
    size = params.grid_rows * params.grid_cols

    counts = np.bincount(cell, minlength=size)
    occupied = counts > 0
    grids = []
    if params.channels != 'intensity':
        dist = np.linalg.norm(offsets[inside], axis=1)
        depth = np.full(size, params.empty_fill, dtype=np.float64)
        mean = np.bincount(cell, weights=dist, minlength=size)[occupied] / counts[occupied]
        depth[occupied] = np.clip(mean / params.half_diagonal, params.occupancy_epsilon, 1.0)
        grids.append(depth)
    if params.channels != 'depth':
        refl = cloud.intensity[candidates][inside]
        intensity = np.full(size, params.empty_fill, dtype=np.float64)
        intensity[occupied] = np.bincount(cell, weights=refl, minlength=size)[occupied] / counts[occupied]
        grids.append(intensity)

    values = np.stack(grids, axis=-1).reshape(params.grid_rows, params.grid_cols, len(grids))
    return VoxelPatch(values, keypoint, params)


def extract_patches(cloud, keypoints, params=None, workers=None):
    """extract_patch over many keypoints; output order follows ``keypoints``."""
    params = params or PatchParams()
    keypoints = list(keypoints)
    cloud.tree()

    def block(start, stop):
        return [extract_patch(cloud, kp, params) for kp in keypoints[start:stop]]

    blocks = run_chunked(block, len(keypoints), workers or Config.THREADS)
    patches = [patch for chunk in blocks for patch in chunk]
    logger.debug("Extracted %d patches from frame %d", len(patches), cloud.frame_id)
    return patches


def stack_patches(patches, dtype=np.float32):
    if not patches:
        return np.zeros((0, Config.GRID_ROWS, Config.GRID_COLS, 0), dtype=dtype)
    return np.stack([p.values for p in patches]).astype(dtype, copy=False)
