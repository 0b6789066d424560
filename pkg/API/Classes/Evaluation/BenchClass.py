import logging
import time

import numpy as np
import pandas as pd

from Classes.Base import Config
from Classes.Base.CustomExceptionClass import EmptyInput, InvalidConfig
from Classes.Cloud.PointCloudClass import uniform_sample
from Classes.Descriptor.ModelClass import describe
from Classes.Patch.VoxelPatchClass import PatchParams, extract_patches

logger = logging.getLogger(__name__)


def _monotone(values, name):
    values = [float(v) for v in values]
    if not values or min(values) <= 0:
        raise InvalidConfig(f"{name} must be a non-empty list of positive radii")
    steps = np.diff(values)
    if not (np.all(steps > 0) or np.all(steps < 0)):
        raise InvalidConfig(f"{name} must be strictly increasing or decreasing, got {values}")
    return values


def _timed(func, repeat):
    """Median wall-clock seconds of ``repeat`` calls and the last result."""
    seconds, result = [], None
    for _ in range(repeat):
        started = time.perf_counter()
        result = func()
        seconds.append(time.perf_counter() - started)
    return float(np.median(seconds)), result


def bench_timing(cloud, model, neighborhood_radii=Config.NEIGHBORHOOD_RADII, sampling_radii=Config.SAMPLING_RADII,
                 repeat=Config.BENCH_REPEAT, sampling_radius=Config.SAMPLING_RADIUS,
                 neighborhood_radius=Config.CUBE_EDGE, channels=None):
    """Per-feature and per-cloud computation times.

    The first table varies the neighborhood (cube edge) at a fixed sampling
    radius and reports milliseconds per keypoint, patch and descriptor
    separately. The second varies the sampling radius at a fixed neighborhood
    and reports totals. Every value is a median over ``repeat`` runs; patch
    extraction runs on one worker.
    """
    if not len(cloud):
        raise EmptyInput("Cannot benchmark an empty cloud")
    if repeat < 1:
        raise InvalidConfig(f"repeat must be >= 1, got {repeat}")
    neighborhood_radii = _monotone(neighborhood_radii, "neighborhood radii")
    sampling_radii = _monotone(sampling_radii, "sampling radii")
    channels = channels or model.config.channels

    keypoints = uniform_sample(cloud, sampling_radius)
    neighborhood_rows = []
    for radius in neighborhood_radii:
        params = PatchParams(cube_edge=radius, channels=channels)
        patch_s, patches = _timed(lambda: extract_patches(cloud, keypoints, params, workers=1), repeat)
        desc_s, _ = _timed(lambda: describe(model, patches), repeat)
        neighborhood_rows.append({
            'neighborhood_radius': radius,
            'keypoints': len(keypoints),
            'patch_ms': 1000.0 * patch_s / len(keypoints),
            'descriptor_ms': 1000.0 * desc_s / len(keypoints),
        })
        logger.info("neighborhood %.2f m: %.3f ms/patch, %.3f ms/descriptor", radius,
                    neighborhood_rows[-1]['patch_ms'], neighborhood_rows[-1]['descriptor_ms'])

    params = PatchParams(cube_edge=neighborhood_radius, channels=channels)
    sampling_rows = []
    for radius in sampling_radii:
        sample_s, sampled = _timed(lambda: uniform_sample(cloud, radius), repeat)
        patch_s, patches = _timed(lambda: extract_patches(cloud, sampled, params, workers=1), repeat)
        desc_s, _ = _timed(lambda: describe(model, patches), repeat)
        sampling_rows.append({
            'sampling_radius': radius,
            'keypoints': len(sampled),
            'sampling_ms': 1000.0 * sample_s,
            'patch_ms_total': 1000.0 * patch_s,
            'descriptor_ms_total': 1000.0 * desc_s,
            'total_ms': 1000.0 * (sample_s + patch_s + desc_s),
        })
        logger.info("sampling %.2f m: %d keypoints, %.1f ms total", radius, len(sampled), sampling_rows[-1]['total_ms'])

    return pd.DataFrame(neighborhood_rows), pd.DataFrame(sampling_rows)
