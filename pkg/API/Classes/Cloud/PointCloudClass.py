from pathlib import Path
from threading import Lock
from typing import NamedTuple
import logging
import re

import numpy as np
from scipy.spatial import cKDTree

from Classes.Base import Config
from Classes.Base.CustomExceptionClass import (
    NonFiniteValue, NonPositiveRadius, ParseError, ScanFileNotFound, TruncatedRecord,
)

logger = logging.getLogger(__name__)

KITTI_RECORD = np.dtype('<f4')
KITTI_RECORD_BYTES = 16
TEXT_SEPARATOR = re.compile(r"[,\s]+")


class Point(NamedTuple):
    x: float
    y: float
    z: float
    intensity: float


class Keypoint(NamedTuple):
    position: tuple
    frame_id: int
    source_index: int


class PointCloud:
    """Unordered LiDAR returns held column-wise.

    ``xyz`` is (N, 3) float64 in the sensor frame, ``intensity`` (N,) in [0, 1].
    ``point_ids`` is only set for generated scenes and names the underlying
    surface sample of each return.
    """

    def __init__(self, xyz=None, intensity=None, frame_id=0, sensor_origin=(0.0, 0.0, 0.0),
                 sensor_up=Config.GLOBAL_UP, point_ids=None):
        self.xyz = np.zeros((0, 3)) if xyz is None else np.array(xyz, dtype=np.float64).reshape(-1, 3)
        if intensity is None:
            intensity = np.zeros(len(self.xyz))
        self.intensity = np.array(intensity, dtype=np.float64).reshape(-1)
        if len(self.intensity) != len(self.xyz):
            raise ValueError("xyz and intensity must describe the same number of points")
        self.frame_id = int(frame_id)
        self.sensor_origin = np.array(sensor_origin, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(self.sensor_origin)):
            raise NonFiniteValue("Sensor origin must be finite.")
        up = np.array(sensor_up, dtype=np.float64).reshape(3)
        self.sensor_up = up / np.linalg.norm(up)
        self.point_ids = None if point_ids is None else np.array(point_ids, dtype=np.int64).reshape(-1)
        self._tree = None
        self._tree_lock = Lock()

    @classmethod
    def from_points(cls, points, **kwargs):
        data = np.array([tuple(p) for p in points], dtype=np.float64).reshape(-1, 4)
        return cls(data[:, :3], data[:, 3], **kwargs)

    @property
    def points(self):
        return [Point(*map(float, p), float(i)) for p, i in zip(self.xyz, self.intensity)]

    def __len__(self):
        return len(self.xyz)

    def __repr__(self):
        return f"PointCloud(frame_id={self.frame_id}, points={len(self)})"

    def copy(self):
        return PointCloud(self.xyz.copy(), self.intensity.copy(), self.frame_id,
                          self.sensor_origin.copy(), self.sensor_up.copy(),
                          None if self.point_ids is None else self.point_ids.copy())

    def subset(self, indices):
        indices = np.asarray(indices, dtype=np.int64)
        return PointCloud(self.xyz[indices], self.intensity[indices], self.frame_id,
                          self.sensor_origin, self.sensor_up,
                          None if self.point_ids is None else self.point_ids[indices])

    def tree(self):
        # built once per cloud, shared by concurrent readers
        with self._tree_lock:
            if self._tree is None:
                self._tree = cKDTree(self.xyz)
            return self._tree

    def bounding_box(self):
        if not len(self):
            return np.zeros(3), np.zeros(3)
        return self.xyz.min(axis=0), self.xyz.max(axis=0)


def _clamp_intensity(values, source):
    low, high = Config.INTENSITY_RANGE
    outside = int(np.count_nonzero((values < low) | (values > high)))
    if outside:
        logger.warning("Clamped %d reflectance value(s) outside [%s, %s] in %s", outside, low, high, source)
    return np.clip(values, low, high)


def load_kitti_bin(path, frame_id=0):
    path = Path(path)
    if not path.is_file():
        raise ScanFileNotFound(f"Scan file not found: {path}")
    raw = path.read_bytes()
    if len(raw) % KITTI_RECORD_BYTES:
        raise TruncatedRecord(
            f"{path.name}: {len(raw)} bytes is not a multiple of {KITTI_RECORD_BYTES}",
            payload={"bytes": len(raw)},
        )
    records = np.frombuffer(raw, dtype=KITTI_RECORD).reshape(-1, 4).astype(np.float64)
    if not np.all(np.isfinite(records)):
        bad = int(np.flatnonzero(~np.isfinite(records).all(axis=1))[0])
        raise NonFiniteValue(f"{path.name}: record {bad} holds a NaN or infinite value")
    logger.debug("Loaded %d points from %s", len(records), path)
    return PointCloud(records[:, :3], _clamp_intensity(records[:, 3], path.name), frame_id=frame_id)


def save_kitti_bin(cloud, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    records = np.empty((len(cloud), 4), dtype=KITTI_RECORD)
    records[:, :3] = cloud.xyz
    records[:, 3] = cloud.intensity
    path.write_bytes(records.tobytes())


def load_xyzi_text(path, frame_id=0):
    path = Path(path)
    if not path.is_file():
        raise ScanFileNotFound(f"Scan file not found: {path}")
    rows = []
    with open(path, mode="rb") as f:
        for line_number, raw in enumerate(f, start=1):
            try:
                line = raw.decode("utf-8").strip()
            except UnicodeDecodeError:
                raise ParseError("line is not valid UTF-8 text", line_number)
            if not line or line.startswith('#'):
                continue
            fields = TEXT_SEPARATOR.split(line)
            if len(fields) != 4:
                raise ParseError(f"expected 4 fields 'x y z intensity', found {len(fields)}", line_number)
            try:
                values = [float(v) for v in fields]
            except ValueError:
                raise ParseError(f"non-numeric field in '{line}'", line_number)
            if not all(np.isfinite(values)):
                raise NonFiniteValue(f"line {line_number}: NaN or infinite value")
            rows.append(values)
    data = np.array(rows, dtype=np.float64).reshape(-1, 4)
    return PointCloud(data[:, :3], _clamp_intensity(data[:, 3], path.name), frame_id=frame_id)


def load_scan(path, frame_id=0):
    """Load a scan, choosing the reader from the file extension (.bin = KITTI)."""
    if Path(path).suffix.lower() == '.bin':
        return load_kitti_bin(path, frame_id)
    return load_xyzi_text(path, frame_id)


def apply_transform(cloud, T):
    T.validate()
    if T.is_identity():
        return cloud.copy()
    return PointCloud(
        T.apply(cloud.xyz), cloud.intensity.copy(), cloud.frame_id,
        T.apply(cloud.sensor_origin), T.rotation @ cloud.sensor_up,
        None if cloud.point_ids is None else cloud.point_ids.copy(),
    )


def _check_radius(radius):
    if not radius > 0:
        raise NonPositiveRadius(f"Radius must be > 0, got {radius}")


def uniform_sample(cloud, sampling_radius=Config.SAMPLING_RADIUS):
    """One keypoint per occupied grid cell: the point nearest the cell center.

    The grid is anchored at the cloud's bounding-box minimum with cubic cells
    of edge ``sampling_radius``. Ties go to the lowest point index.
    """
    _check_radius(sampling_radius)
    if not len(cloud):
        return []
    origin = cloud.xyz.min(axis=0)
    cells = np.floor((cloud.xyz - origin) / sampling_radius).astype(np.int64)
    centers = origin + (cells + 0.5) * sampling_radius
    d2 = np.sum((cloud.xyz - centers) ** 2, axis=1)
    _, group = np.unique(cells, axis=0, return_inverse=True)
    group = group.reshape(-1)
    index = np.arange(len(cloud))
    order = np.lexsort((index, d2, group))
    ordered = group[order]
    first = np.r_[True, ordered[1:] != ordered[:-1]]
    chosen = np.sort(order[first])
    return [Keypoint(tuple(map(float, cloud.xyz[i])), cloud.frame_id, int(i)) for i in chosen]


def radius_neighbors(cloud, center, radius):
    """Indices i with ||p_i - center|| <= radius, ascending."""
    _check_radius(radius)
    if not len(cloud):
        return []
    center = np.asarray(center, dtype=np.float64).reshape(3)
    # widened query, then the exact distance test decides membership
    candidates = np.asarray(cloud.tree().query_ball_point(center, radius * (1.0 + 1e-9)), dtype=np.int64)
    if not len(candidates):
        return []
    keep = np.linalg.norm(cloud.xyz[candidates] - center, axis=1) <= radius
    return sorted(int(i) for i in candidates[keep])
