from pathlib import Path
import io
import logging
import re

import numpy as np
import pandas as pd

from Classes.Base.CustomExceptionClass import InvalidTransform, ParseError, ScanFileNotFound

logger = logging.getLogger(__name__)

ORTHONORMAL_TOLERANCE = 1e-9
REORTHONORMALIZE_TOLERANCE = 1e-3


class RigidTransform:
    """Rotation + translation acting as ``p -> R p + t``."""

    __slots__ = ("rotation", "translation")

    def __init__(self, rotation, translation):
        self.rotation = np.array(rotation, dtype=np.float64).reshape(3, 3)
        self.translation = np.array(translation, dtype=np.float64).reshape(3)

    @classmethod
    def identity(cls):
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_axis_angle(cls, axis, angle, translation=(0.0, 0.0, 0.0)):
        axis = np.asarray(axis, dtype=np.float64)
        norm = np.linalg.norm(axis)
        if norm == 0.0:
            raise InvalidTransform("Rotation axis must be non-zero.")
        kx, ky, kz = axis / norm
        K = np.array([[0.0, -kz, ky], [kz, 0.0, -kx], [-ky, kx, 0.0]])
        R = np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)
        return cls(R, translation)

    @classmethod
    def from_matrix(cls, matrix, orthonormalize=False):
        m = np.asarray(matrix, dtype=np.float64)
        if m.shape not in ((3, 4), (4, 4)):
            raise InvalidTransform(f"Expected a 3x4 or 4x4 matrix, got shape {m.shape}.")
        R = m[:3, :3]
        if orthonormalize and not cls._is_rotation(R, ORTHONORMAL_TOLERANCE):
            if not cls._is_rotation(R, REORTHONORMALIZE_TOLERANCE):
                raise InvalidTransform("Rotation block is too far from orthonormal to repair.")
            U, _, Vt = np.linalg.svd(R)
            R = U @ np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt))]) @ Vt
            logger.warning("Re-orthonormalized a rotation read with limited precision.")
        return cls(R, m[:3, 3])

    @staticmethod
    def _is_rotation(R, tol):
        if not np.all(np.isfinite(R)):
            return False
        return (np.max(np.abs(R.T @ R - np.eye(3))) <= tol
                and abs(np.linalg.det(R) - 1.0) <= tol)

    def validate(self):
        if not np.all(np.isfinite(self.translation)):
            raise InvalidTransform("Translation must be finite.")
        if not self._is_rotation(self.rotation, ORTHONORMAL_TOLERANCE):
            raise InvalidTransform("Rotation must be orthonormal with determinant +1.")
        return self

    def is_identity(self):
        return np.array_equal(self.rotation, np.eye(3)) and not self.translation.any()

    def inverse(self):
        Rt = self.rotation.T
        return RigidTransform(Rt, -Rt @ self.translation)

    def compose(self, other):
        """``self ∘ other``: apply ``other`` first, then ``self``."""
        return RigidTransform(self.rotation @ other.rotation,
                              self.rotation @ other.translation + self.translation)

    def apply(self, points):
        points = np.asarray(points, dtype=np.float64)
        return points @ self.rotation.T + self.translation

    def as_matrix(self):
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def row_major_3x4(self):
        return self.as_matrix()[:3, :].reshape(-1)

    def __repr__(self):
        return f"RigidTransform(rotation={self.rotation.tolist()}, translation={self.translation.tolist()})"


# frame_id r11 r12 r13 t1 r21 r22 r23 t2 r31 r32 r33 t3
POSE_COLUMNS = ['frame_id', 'r11', 'r12', 'r13', 't1', 'r21', 'r22', 'r23', 't2', 'r31', 'r32', 'r33', 't3']
# pandas tokenizer errors name the offending line as "... in line N, ..."
PANDAS_LINE = re.compile(r"line (\d+)")


def read_pose_file(path):
    """Read a pose file into ``{frame_id: RigidTransform}`` (sensor frame -> world)."""
    path = Path(path)
    if not path.is_file():
        raise ScanFileNotFound(f"Pose file not found: {path}")
    raw = path.read_bytes()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as e:
        raise ParseError("pose file is not valid UTF-8 text", line_number=raw[:e.start].count(b"\n") + 1)
    try:
        frame = pd.read_csv(io.StringIO(text), sep=r"\s+", header=None, comment='#', dtype=str)
    except pd.errors.EmptyDataError:
        return {}
    except pd.errors.ParserError as e:
        found = PANDAS_LINE.search(str(e))
        raise ParseError("pose rows have differing field counts", line_number=int(found.group(1)) if found else None)
    if frame.shape[1] != len(POSE_COLUMNS):
        raise ParseError(f"expected {len(POSE_COLUMNS)} columns, found {frame.shape[1]}", line_number=1)

    poses = {}
    for row_number, row in enumerate(frame.itertuples(index=False), start=1):
        try:
            frame_id = int(row[0])
            values = np.array([float(v) for v in row[1:]], dtype=np.float64)
        except (TypeError, ValueError):
            raise ParseError("pose row is not numeric", line_number=row_number)
        if not np.all(np.isfinite(values)):
            raise ParseError("pose row contains a non-finite value", line_number=row_number)
        if frame_id in poses:
            raise ParseError(f"duplicate frame id {frame_id}", line_number=row_number)
        poses[frame_id] = RigidTransform.from_matrix(values.reshape(3, 4), orthonormalize=True)
    return poses


def write_pose_file(path, poses):
    """Write ``{frame_id: RigidTransform}`` with round-trip precision, ordered by frame id."""
    lines = []
    for frame_id in sorted(poses):
        values = poses[frame_id].row_major_3x4()
        lines.append(" ".join([str(int(frame_id))] + [repr(float(v)) for v in values]))
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
