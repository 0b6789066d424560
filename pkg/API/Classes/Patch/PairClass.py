from dataclasses import dataclass, field, replace
import logging

import numpy as np
from scipy.spatial import cKDTree

from Classes.Base import Config
from Classes.Base.CustomExceptionClass import InsufficientKeypoints, InvalidConfig, NoPositives
from Classes.Cloud.PointCloudClass import Keypoint
from Classes.Patch.VoxelPatchClass import PatchParams, VoxelPatch, extract_patches

logger = logging.getLogger(__name__)

SPLITS = ('train', 'test')


@dataclass
class PatchPair:
    patch_a: VoxelPatch
    patch_b: VoxelPatch
    label: int
    pair_id: int
    record_a: int = -1
    record_b: int = -1
    split: str = 'train'

    def __post_init__(self):
        if self.label not in (0, 1):
            raise InvalidConfig(f"Pair label must be 0 or 1, got {self.label}")
        if self.patch_a.params != self.patch_b.params:
            raise InvalidConfig(f"Pair {self.pair_id} mixes patch parameters")


@dataclass
class PairDataset:
    """Matching and non-matching patch pairs over a shared list of patch records."""

    records: list
    pairs: list
    negatives_per_positive: int = Config.NEGATIVES_PER_POSITIVE
    params: PatchParams = field(default_factory=PatchParams)

    @property
    def size(self):
        return len(self.pairs)

    def __len__(self):
        return len(self.pairs)

    @property
    def positives(self):
        return [p for p in self.pairs if p.label == 1]

    @property
    def negatives(self):
        return [p for p in self.pairs if p.label == 0]

    def labels(self):
        return np.array([p.label for p in self.pairs], dtype=np.int64)

    def counts(self):
        positives = sum(p.label for p in self.pairs)
        return {"patches": len(self.records), "positives": positives, "negatives": len(self.pairs) - positives}

    def select(self, split):
        if split in (None, 'both'):
            return self
        return replace(self, pairs=[p for p in self.pairs if p.split == split])


def _world_positions(frames, keypoints_per_frame):
    out = []
    for (cloud, pose), keypoints in zip(frames, keypoints_per_frame):
        local = np.array([kp.position for kp in keypoints], dtype=np.float64).reshape(-1, 3)
        out.append(pose.apply(local))
    return out


def track_keypoints(frames, reference_keypoints, tolerance=Config.MATCH_TOLERANCE, reference_frame=0,
                    track_window=Config.TRACK_WINDOW, min_track_frames=Config.MIN_TRACK_FRAMES):
    """Follow reference keypoints through the next frames using the known poses.

    A keypoint is found in a later frame at the nearest point within
    ``tolerance`` of its world position. Only frames in
    ``[reference_frame, reference_frame + track_window)`` are visited; tracks
    seen in fewer than ``min_track_frames`` frames are dropped. Returns one
    keypoint list per frame (empty outside the window).
    """
    if not tolerance > 0:
        raise InvalidConfig(f"Tracking tolerance must be > 0, got {tolerance}")
    ref_cloud, ref_pose = frames[reference_frame]
    world = ref_pose.apply(np.array([kp.position for kp in reference_keypoints], dtype=np.float64).reshape(-1, 3))

    stop = min(len(frames), reference_frame + track_window)
    found = {}
    for f in range(reference_frame + 1, stop):
        cloud, pose = frames[f]
        if not len(cloud) or not len(world):
            found[f] = np.full(len(world), -1, dtype=np.int64)
            continue
        local = pose.inverse().apply(world)
        dist, index = cloud.tree().query(local, k=1, distance_upper_bound=tolerance * (1.0 + 1e-9))
        hit = np.isfinite(dist)
        hit[hit] = np.linalg.norm(cloud.xyz[index[hit]] - local[hit], axis=1) <= tolerance
        found[f] = np.where(hit, index, -1)

    seen = np.ones(len(world), dtype=np.int64)
    for index in found.values():
        seen += index >= 0
    keep = seen >= min_track_frames

    tracked = [[] for _ in frames]
    tracked[reference_frame] = [kp for kp, k in zip(reference_keypoints, keep) if k]
    for f, index in found.items():
        cloud = frames[f][0]
        tracked[f] = [Keypoint(tuple(map(float, cloud.xyz[i])), cloud.frame_id, int(i))
                      for i, k in zip(index, keep) if k and i >= 0]
    logger.debug("Tracked %d of %d keypoints from frame %d", int(keep.sum()), len(world), reference_frame)
    return tracked


def associate_keypoints(frames, keypoints_per_frame, tolerance=Config.MATCH_TOLERANCE, track_window=Config.TRACK_WINDOW):
    """All (frame_i, key_i, frame_j, key_j), i < j < i + track_window, with world distance <= tolerance."""
    world = _world_positions(frames, keypoints_per_frame)
    matches = []
    for i in range(len(frames)):
        for j in range(i + 1, min(len(frames), i + track_window)):
            if not len(world[i]) or not len(world[j]):
                continue
            near = cKDTree(world[j]).query_ball_point(world[i], tolerance * (1.0 + 1e-9))
            for a, candidates in enumerate(near):
                for b in sorted(candidates):
                    if np.linalg.norm(world[i][a] - world[j][b]) <= tolerance:
                        matches.append((i, a, j, b))
    return matches


def _draw_negatives(world, count, min_distance, rng, exclude):
    """Seeded cross-frame keypoint pairs farther apart than ``min_distance``."""
    frame_pairs = [(i, j) for i in range(len(world)) for j in range(i + 1, len(world))]
    chosen, taken = [], set(exclude)
    # bounded rejection sampling in vectorised rounds
    for _ in range(1000):
        if len(chosen) >= count:
            break
        draws = max(64, 2 * (count - len(chosen)))
        pick = rng.integers(len(frame_pairs), size=draws)
        for p, ua, ub in zip(pick, rng.random(draws), rng.random(draws)):
            i, j = frame_pairs[p]
            a, b = int(ua * len(world[i])), int(ub * len(world[j]))
            key = (i, a, j, b)
            if key in taken or np.linalg.norm(world[i][a] - world[j][b]) <= min_distance:
                continue
            taken.add(key)
            chosen.append(key)
            if len(chosen) == count:
                break
    if len(chosen) < count:
        raise InsufficientKeypoints(
            f"Could only draw {len(chosen)} of {count} negatives farther apart than {min_distance} m",
        )
    return chosen


def label_pairs(frames, keypoints_per_frame, params=None, match_tolerance=Config.MATCH_TOLERANCE,
                negatives_per_positive=Config.NEGATIVES_PER_POSITIVE, seed=0,
                track_window=Config.TRACK_WINDOW, workers=None):
    """Build a PairDataset from posed frames and their keypoints.

    Positives are cross-frame keypoints whose world positions lie within
    ``match_tolerance``; negatives are seeded random cross-frame pairs more
    than one cube edge apart, ``negatives_per_positive`` of them per positive.
    """
    params = params or PatchParams()
    if len(frames) < 2:
        raise InsufficientKeypoints(f"Pair labeling needs at least 2 frames, got {len(frames)}")
    if len(keypoints_per_frame) != len(frames):
        raise InvalidConfig("One keypoint list per frame is required")
    if not match_tolerance > 0:
        raise InvalidConfig(f"match_tolerance must be > 0, got {match_tolerance}")
    if negatives_per_positive < 0:
        raise InvalidConfig(f"negatives_per_positive must be >= 0, got {negatives_per_positive}")
    for f, keypoints in enumerate(keypoints_per_frame):
        if not keypoints:
            raise InsufficientKeypoints(f"Frame {f} has no keypoints")
    for _, pose in frames:
        pose.validate()

    positives = associate_keypoints(frames, keypoints_per_frame, match_tolerance, track_window)
    if not positives:
        raise NoPositives(f"No keypoints associate across frames within {match_tolerance} m")

    rng = np.random.default_rng(seed)
    world = _world_positions(frames, keypoints_per_frame)
    negatives = _draw_negatives(world, negatives_per_positive * len(positives), params.cube_edge, rng,
                                exclude=positives)

    # one record per keypoint that takes part in a pair
    used = sorted({(i, a) for i, a, _, _ in positives + negatives} | {(j, b) for _, _, j, b in positives + negatives})
    record_of = {key: r for r, key in enumerate(used)}
    records = []
    for f, (cloud, _) in enumerate(frames):
        wanted = [keypoints_per_frame[f][a] for (g, a) in used if g == f]
        if wanted:
            records.extend(extract_patches(cloud, wanted, params, workers))

    pairs = []
    for pair_id, (i, a, j, b) in enumerate(positives + negatives):
        ra, rb = record_of[(i, a)], record_of[(j, b)]
        pairs.append(PatchPair(records[ra], records[rb], int(pair_id < len(positives)), pair_id, ra, rb))

    logger.info("Labeled %d positives and %d negatives over %d patches",
                len(positives), len(negatives), len(records))
    return PairDataset(records, pairs, negatives_per_positive, params)


def split_pairs(dataset, holdout_fraction, seed=0):
    """Tag pairs train/test so that no keypoint record appears in both splits.

    Records linked by a positive pair form one physical keypoint track; whole
    tracks are held out until ``holdout_fraction`` of the positives is
    reached. Negatives joining a train record to a test record are dropped.
    """
    if not 0.0 <= holdout_fraction < 1.0:
        raise InvalidConfig(f"holdout fraction must lie in [0, 1), got {holdout_fraction}")
    if holdout_fraction == 0.0:
        return replace(dataset, pairs=[replace(p, split='train') for p in dataset.pairs])

    parent = list(range(len(dataset.records)))

    def root(r):
        while parent[r] != r:
            parent[r] = parent[parent[r]]
            r = parent[r]
        return r

    for pair in dataset.positives:
        ra, rb = root(pair.record_a), root(pair.record_b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    tracks = {}
    for pair in dataset.positives:
        tracks.setdefault(root(pair.record_a), 0)
        tracks[root(pair.record_a)] += 1
    order = sorted(tracks)
    rng = np.random.default_rng(seed)
    rng.shuffle(order)

    target = holdout_fraction * sum(tracks.values())
    held, total = set(), 0
    for track in order:
        if total >= target:
            break
        held.add(track)
        total += tracks[track]

    kept, dropped = [], 0
    for pair in dataset.pairs:
        sa = 'test' if root(pair.record_a) in held else 'train'
        sb = 'test' if root(pair.record_b) in held else 'train'
        if sa != sb:
            dropped += 1
            continue
        kept.append(replace(pair, split=sa))
    logger.info("Held out %d of %d tracks; dropped %d straddling negatives", len(held), len(tracks), dropped)
    return replace(dataset, pairs=kept)
