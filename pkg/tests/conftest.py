import numpy as np
import pytest

from Classes.Cloud.PointCloudClass import Keypoint, uniform_sample
from Classes.Patch.PairClass import PairDataset, PatchPair, label_pairs, split_pairs, track_keypoints
from Classes.Patch.SceneClass import SceneParams, synth_scene
from Classes.Patch.VoxelPatchClass import PatchParams, VoxelPatch


def make_dataset(positives, negatives, channels='depth+intensity', seed=0):
    """Hand-built dataset: every pair gets its own two random patches."""
    rng = np.random.default_rng(seed)
    params = PatchParams(channels=channels)
    records, pairs = [], []
    for pair_id in range(positives + negatives):
        for _ in range(2):
            values = rng.random((64, 64, params.channel_count))
            records.append(VoxelPatch(values, Keypoint((float(pair_id), 0.0, 0.0), len(records) % 2, pair_id), params))
        pairs.append(PatchPair(records[-2], records[-1], int(pair_id < positives), pair_id,
                               len(records) - 2, len(records) - 1))
    return PairDataset(records, pairs, params=params)


@pytest.fixture(scope="session")
def small_scene():
    params = SceneParams(frame_count=2, object_count=4, points_per_object=250, noise_sigma=0.0, dropout=0.0,
                         intensity_noise=0.0)
    return synth_scene(11, params)


@pytest.fixture(scope="session")
def small_pairs(small_scene):
    keypoints = track_keypoints(small_scene, uniform_sample(small_scene[0][0], 0.8), tolerance=0.05)
    return label_pairs(small_scene, keypoints, PatchParams(), match_tolerance=0.05, negatives_per_positive=6, seed=3)


@pytest.fixture(scope="session")
def desk_pairs():
    scene = synth_scene(0, SceneParams(object_count=24, points_per_object=600))
    keypoints = track_keypoints(scene, uniform_sample(scene[0][0], 0.25), tolerance=0.05)
    return split_pairs(label_pairs(scene, keypoints, PatchParams(), seed=0), 0.2, seed=0)
