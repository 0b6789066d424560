"""Patch archive and pair index files.

Archive byte layout, all little-endian::

    header   magic     8s   b"LDPATCH\\0"
             version   u2
             rows      u2
             cols      u2
             channels  u1   0 depth+intensity, 1 depth, 2 intensity
             cube_edge f8
             epsilon   f8   occupancy epsilon
             fill      f8   empty fill
             count     u4   number of records
    record   x, y, z   f8   keypoint position, sensor frame
             frame     i4
             index     i4   source point index
             values    f4[rows, cols, C]

The pair index is a JSON document next to the archive listing, per pair,
the two record numbers, the label, the split tag and the frames involved.
"""
from pathlib import Path
import logging
import struct

import numpy as np

from Classes.Base import Config
from Classes.Base.CustomExceptionClass import CorruptArchive, InvalidConfig, ScanFileNotFound, VersionMismatch
from Classes.Base.FileClass import File
from Classes.Cloud.PointCloudClass import Keypoint
from Classes.Patch.PairClass import PairDataset, PatchPair
from Classes.Patch.VoxelPatchClass import PatchParams, VoxelPatch

logger = logging.getLogger(__name__)

MAGIC = b"LDPATCH\x00"
VERSION = 1
HEADER = struct.Struct('<8sHHHBdddI')
INDEX_VERSION = 1


def record_dtype(rows, cols, channels):
    return np.dtype([
        ('position', '<f8', (3,)),
        ('frame', '<i4'),
        ('index', '<i4'),
        ('values', '<f4', (rows, cols, channels)),
    ])


def write_patch_archive(path, patches, params):
    path = Path(path)
    dtype = record_dtype(params.grid_rows, params.grid_cols, params.channel_count)
    records = np.zeros(len(patches), dtype=dtype)
    for r, patch in enumerate(patches):
        records[r]['position'] = patch.keypoint.position
        records[r]['frame'] = patch.keypoint.frame_id
        records[r]['index'] = patch.keypoint.source_index
        records[r]['values'] = patch.values
    header = HEADER.pack(MAGIC, VERSION, params.grid_rows, params.grid_cols, params.channel_code,
                         params.cube_edge, params.occupancy_epsilon, params.empty_fill, len(patches))
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(header + records.tobytes())
    logger.info("Wrote %d patch records to %s", len(patches), path)


def read_patch_archive(path):
    """Return (records as VoxelPatch list, PatchParams)."""
    path = Path(path)
    if not path.is_file():
        raise ScanFileNotFound(f"Patch archive not found: {path}")
    raw = path.read_bytes()
    if len(raw) < HEADER.size:
        raise CorruptArchive(f"{path.name}: shorter than the archive header")
    magic, version, rows, cols, code, edge, epsilon, fill, count = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise CorruptArchive(f"{path.name}: not a patch archive")
    if version != VERSION:
        raise VersionMismatch(f"{path.name}: archive version {version}, expected {VERSION}")
    if code >= len(Config.CHANNEL_SETS):
        raise CorruptArchive(f"{path.name}: unknown channel code {code}")
    try:
        params = PatchParams(cube_edge=edge, grid_rows=rows, grid_cols=cols, channels=Config.CHANNEL_SETS[code],
                             empty_fill=fill, occupancy_epsilon=epsilon)
    except InvalidConfig as e:
        raise CorruptArchive(f"{path.name}: header describes unusable patches ({e.message})")
    dtype = record_dtype(rows, cols, params.channel_count)
    body = raw[HEADER.size:]
    if len(body) != count * dtype.itemsize:
        raise CorruptArchive(f"{path.name}: expected {count} records of {dtype.itemsize} bytes, found {len(body)} bytes")
    records = np.frombuffer(body, dtype=dtype)
    patches = [
        VoxelPatch(
            np.array(rec['values'], dtype=np.float32),
            Keypoint(tuple(map(float, rec['position'])), int(rec['frame']), int(rec['index'])),
            params,
        )
        for rec in records
    ]
    return patches, params


def write_pair_index(path, dataset, archive_name=Config.ARCHIVE_NAME):
    File.writeFile({
        "version": INDEX_VERSION,
        "archive": archive_name,
        "negatives_per_positive": dataset.negatives_per_positive,
        "pairs": [
            {
                "pair_id": p.pair_id,
                "a": p.record_a,
                "b": p.record_b,
                "label": p.label,
                "split": p.split,
                "frames": [p.patch_a.keypoint.frame_id, p.patch_b.keypoint.frame_id],
            }
            for p in dataset.pairs
        ],
    }, path)


def read_pair_index(path):
    path = Path(path)
    if not path.is_file():
        raise ScanFileNotFound(f"Pair index not found: {path}")
    try:
        index = File.readFile(path)
        if not isinstance(index["pairs"], list):
            raise TypeError("pairs")
    except (ValueError, KeyError, TypeError):
        raise CorruptArchive(f"{path.name}: not a pair index")
    if index.get("version") != INDEX_VERSION:
        raise VersionMismatch(f"{path.name}: pair index version {index.get('version')}, expected {INDEX_VERSION}")
    return index


def load_pair_dataset(archive_path, index_path=None):
    archive_path = Path(archive_path)
    index_path = Path(index_path) if index_path else archive_path.with_name(Config.PAIR_INDEX_NAME)
    records, params = read_patch_archive(archive_path)
    index = read_pair_index(index_path)
    pairs = []
    for entry in index["pairs"]:
        a, b = entry["a"], entry["b"]
        if not (0 <= a < len(records) and 0 <= b < len(records)):
            raise CorruptArchive(f"{index_path.name}: pair {entry['pair_id']} points past the archive")
        pairs.append(PatchPair(records[a], records[b], int(entry["label"]), int(entry["pair_id"]),
                               a, b, entry.get("split", "train")))
    logger.info("Loaded %d pairs over %d patches from %s", len(pairs), len(records), archive_path.name)
    return PairDataset(records, pairs, int(index.get("negatives_per_positive", Config.NEGATIVES_PER_POSITIVE)), params)
