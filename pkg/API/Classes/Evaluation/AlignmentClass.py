from typing import NamedTuple
import logging
import math

import numpy as np
import pandas as pd
from scipy.spatial.distance import cdist

from Classes.Base import Config
from Classes.Base.CustomExceptionClass import (
    DegenerateGeometry, EmptyInput, InsufficientCorrespondences, InvalidConfig, NoConsensus, ShapeMismatch,
)
from Classes.Cloud.RigidTransformClass import RigidTransform
from Classes.Descriptor.ModelClass import metric_pairwise

logger = logging.getLogger(__name__)

# second singular value below this fraction of the first = collinear input
RANK_TOLERANCE = 1e-12
MATCHERS = ('metric', 'euclidean')


class Correspondence(NamedTuple):
    source: int
    target: int
    score: float


class AlignmentError(NamedTuple):
    t_e: float
    r_e: float


def match_keypoints(desc_a, desc_b, matcher='euclidean', accept_threshold=None, params=None, workers=None):
    """Mutual-best correspondences between two descriptor sets.

    ``metric`` maximises the learned match probability and keeps matches
    scoring at least ``accept_threshold`` (default 0.5). ``euclidean``
    minimises descriptor distance and keeps matches within
    ``accept_threshold`` (default: no limit). Ties go to the lowest index.
    """
    desc_a, desc_b = np.atleast_2d(desc_a), np.atleast_2d(desc_b)
    if not desc_a.size or not desc_b.size:
        raise EmptyInput(f"Matching needs descriptors on both sides, got {len(desc_a)} and {len(desc_b)}")
    if matcher == 'metric':
        if params is None:
            raise InvalidConfig("The metric matcher needs model parameters")
        scores = metric_pairwise(params, desc_a, desc_b, workers)
        threshold = Config.MATCH_ACCEPT_METRIC if accept_threshold is None else accept_threshold
        best_b, best_a = np.argmax(scores, axis=1), np.argmax(scores, axis=0)
        accept = lambda s: s >= threshold
    elif matcher == 'euclidean':
        scores = cdist(desc_a, desc_b)
        threshold = np.inf if accept_threshold is None else accept_threshold
        best_b, best_a = np.argmin(scores, axis=1), np.argmin(scores, axis=0)
        accept = lambda s: s <= threshold
    else:
        raise InvalidConfig(f"matcher must be one of {', '.join(MATCHERS)}, got '{matcher}'")

    matches = []
    for i, j in enumerate(best_b):
        if best_a[j] == i and accept(scores[i, j]):
            matches.append(Correspondence(i, int(j), float(scores[i, j])))
    logger.debug("%s matcher kept %d of %d source keypoints", matcher, len(matches), len(desc_a))
    return matches


def _paired(source, target, correspondences):
    source, target = np.asarray(source, dtype=np.float64), np.asarray(target, dtype=np.float64)
    if correspondences is not None:
        source = source[[c.source for c in correspondences]].reshape(-1, 3)
        target = target[[c.target for c in correspondences]].reshape(-1, 3)
    if source.shape != target.shape or source.ndim != 2 or source.shape[1] != 3:
        raise ShapeMismatch(f"Paired points must be two N x 3 arrays, got {source.shape} and {target.shape}")
    return source, target


def kabsch(source, target, correspondences=None):
    """Least-squares rigid transform taking ``source`` onto ``target``.

    Either pass paired N x 3 arrays, or full point arrays plus the
    correspondences indexing into them.
    """
    src, dst = _paired(source, target, correspondences)
    if len(src) < 3:
        raise InsufficientCorrespondences(f"Kabsch needs at least 3 correspondences, got {len(src)}")
    c_src, c_dst = src.mean(axis=0), dst.mean(axis=0)
    H = (src - c_src).T @ (dst - c_dst)
    U, S, Vt = np.linalg.svd(H)
    if S[0] == 0.0 or S[1] <= RANK_TOLERANCE * S[0]:
        raise DegenerateGeometry("Correspondences are coincident or collinear")
    V = Vt.T
    d = 1.0 if np.linalg.det(V @ U.T) > 0 else -1.0
    R = V @ np.diag([1.0, 1.0, d]) @ U.T
    return RigidTransform(R, c_dst - R @ c_src)


def residuals(T, src, dst):
    return np.linalg.norm(T.apply(src) - dst, axis=1)


def ransac_align(source, target, correspondences=None, iterations=Config.RANSAC_ITERATIONS,
                 inlier_threshold=Config.RANSAC_INLIER_THRESHOLD, seed=0):
    """Consensus rigid fit over 3-point samples, refit on the winning inlier set.

    Returns ``(transform, inlier indices)``. Candidates replace the best one
    only with strictly more inliers, so ties keep the first found. The refit
    is returned only if it keeps at least as many inliers as that candidate.
    """
    src, dst = _paired(source, target, correspondences)
    if len(src) < 3:
        raise InsufficientCorrespondences(f"RANSAC needs at least 3 correspondences, got {len(src)}")
    if iterations < 1 or not inlier_threshold > 0:
        raise InvalidConfig("RANSAC needs iterations >= 1 and a positive inlier threshold")
    rng = np.random.default_rng(seed)
    best, best_inliers = None, np.zeros(len(src), dtype=bool)
    for _ in range(iterations):
        sample = rng.choice(len(src), size=3, replace=False)
        try:
            candidate = kabsch(src[sample], dst[sample])
        except DegenerateGeometry:
            continue
        inliers = residuals(candidate, src, dst) <= inlier_threshold
        if inliers.sum() > best_inliers.sum():
            best, best_inliers = candidate, inliers
    if best_inliers.sum() < 3:
        raise NoConsensus(f"Best RANSAC model explains {int(best_inliers.sum())} correspondence(s), need 3")

    try:
        refit = kabsch(src[best_inliers], dst[best_inliers])
        refit_inliers = residuals(refit, src, dst) <= inlier_threshold
        if refit_inliers.sum() >= best_inliers.sum():
            best, best_inliers = refit, refit_inliers
    except DegenerateGeometry:
        pass
    logger.debug("RANSAC kept %d of %d correspondences", int(best_inliers.sum()), len(src))
    return best, np.flatnonzero(best_inliers)


def rotation_angle(R):
    """Angle of a rotation matrix in [0, pi], accurate near both ends."""
    skew = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    return math.atan2(float(np.linalg.norm(skew)), float(np.trace(R) - 1.0))


def alignment_error(estimated, ground_truth):
    estimated.validate()
    ground_truth.validate()
    delta = ground_truth.inverse().compose(estimated)
    return AlignmentError(float(np.linalg.norm(delta.translation)), rotation_angle(delta.rotation))


def summarize_alignment(rows):
    """Mean and standard deviation of t_e, r_e and matching time per filter."""
    frame = rows if isinstance(rows, pd.DataFrame) else pd.DataFrame(rows)
    frame = frame.dropna(subset=['t_e', 'r_e'])
    grouped = frame.groupby('filter', sort=True)
    summary = pd.DataFrame({
        'objects': grouped.size(),
        't_e_mean': grouped['t_e'].mean(),
        't_e_std': grouped['t_e'].std(ddof=0),
        'r_e_mean': grouped['r_e'].mean(),
        'r_e_std': grouped['r_e'].std(ddof=0),
        'match_seconds_mean': grouped['match_seconds'].mean(),
    })
    return summary.reset_index()
