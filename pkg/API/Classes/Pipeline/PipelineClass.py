from dataclasses import fields
from pathlib import Path
import logging
import time

import numpy as np
import pandas as pd

from Classes.Base import Config
from Classes.Base.CustomExceptionClass import InvalidConfig, InsufficientKeypoints, ParseError, ShapeMismatch
from Classes.Base.FileClass import File
from Classes.Cloud.PointCloudClass import load_scan, save_kitti_bin, uniform_sample
from Classes.Cloud.RigidTransformClass import read_pose_file, write_pose_file
from Classes.Descriptor.CheckpointClass import load_checkpoint
from Classes.Descriptor.ModelClass import ModelConfig, build_model, describe
from Classes.Evaluation.AlignmentClass import alignment_error, kabsch, match_keypoints, ransac_align, summarize_alignment
from Classes.Evaluation.BenchClass import bench_timing
from Classes.Evaluation.RocClass import fpr95, roc_curve, roc_frame, summary_line
from Classes.Patch.PairClass import label_pairs, split_pairs, track_keypoints
from Classes.Patch.PatchArchiveClass import load_pair_dataset, write_pair_index, write_patch_archive
from Classes.Patch.SceneClass import SceneParams, synth_scene
from Classes.Patch.VoxelPatchClass import PatchParams, extract_patches
from Classes.Training.TrainerClass import TrainConfig, evaluate_split, train

logger = logging.getLogger(__name__)

GROUND_TRUTH_NAME = 'ground_truth.txt'
FILTERS = ('raw', 'ransac', 'both')
SPLITS = ('all', 'train', 'test', 'both')

# run-level settings outside the parameter dataclasses, with their types and defaults
RUN_SETTINGS = {
    'sampling_radius': (float, Config.SAMPLING_RADIUS),
    'match_tolerance': (float, Config.MATCH_TOLERANCE),
    'negatives_per_positive': (int, Config.NEGATIVES_PER_POSITIVE),
    'track_window': (int, Config.TRACK_WINDOW),
    'min_track_frames': (int, Config.MIN_TRACK_FRAMES),
    'holdout': (float, 0.0),
    'matcher': (str, None),
    'accept_threshold': (float, None),
    'iterations': (int, Config.RANSAC_ITERATIONS),
    'inlier_threshold': (float, Config.RANSAC_INLIER_THRESHOLD),
    'repeat': (int, Config.BENCH_REPEAT),
}
PARAMETER_CLASSES = (PatchParams, SceneParams, ModelConfig, TrainConfig)


def allowed_settings():
    keys = set(RUN_SETTINGS)
    for cls in PARAMETER_CLASSES:
        keys.update(f.name for f in fields(cls))
    return sorted(keys)


def frame_file_name(frame_id):
    return f"frame_{frame_id:06d}.bin"


class Pipeline:
    """The six commands shared by the command line and the HTTP service.

    ``settings`` maps setting names to raw values (strings from a config
    file or natives from flags / JSON); later sources override earlier ones
    before they reach here. Every command returns a JSON-friendly summary.
    """

    def __init__(self, settings=None, workers=None):
        settings = {k: v for k, v in (settings or {}).items() if v is not None}
        unknown = sorted(set(settings) - set(allowed_settings()))
        if unknown:
            raise InvalidConfig(f"Unknown setting(s): {', '.join(unknown)}", payload={"unknown": unknown})
        self.settings = settings
        self.workers = workers or Config.THREADS

    @classmethod
    def from_config_file(cls, path, overrides=None, workers=None):
        settings = Config.read_config_file(path, allowed_settings()) if path else {}
        settings.update({k: v for k, v in (overrides or {}).items() if v is not None})
        return cls(settings, workers)

    def value(self, name):
        kind, default = RUN_SETTINGS[name]
        raw = self.settings.get(name)
        if raw is None:
            return default
        try:
            return kind(raw)
        except (TypeError, ValueError):
            raise InvalidConfig(f"Setting '{name}' cannot be read from '{raw}'")

    def params(self, cls, **forced):
        names = {f.name for f in fields(cls)}
        mapping = {k: v for k, v in self.settings.items() if k in names}
        mapping.update(forced)
        return cls.from_mapping(mapping)

    @property
    def seed(self):
        try:
            return int(self.settings.get('seed', 0))
        except (TypeError, ValueError):
            raise InvalidConfig(f"seed must be an integer, got '{self.settings.get('seed')}'")

    # ------------------------------------------------------------------ synth

    def synth(self, out_dir):
        out_dir = Path(out_dir)
        frames = synth_scene(self.seed, self.params(SceneParams))
        for cloud, _ in frames:
            save_kitti_bin(cloud, out_dir / frame_file_name(cloud.frame_id))
        poses = {cloud.frame_id: pose for cloud, pose in frames}
        write_pose_file(out_dir / Config.POSE_FILE_NAME, poses)
        # frame f -> frame f + 1, the ground truth for aligning consecutive scans
        relative = {f: poses[f + 1].inverse().compose(poses[f]) for f in range(len(frames) - 1)}
        if relative:
            write_pose_file(out_dir / GROUND_TRUTH_NAME, relative)
        return {
            "frames": len(frames),
            "points": [len(cloud) for cloud, _ in frames],
            "scans": [frame_file_name(cloud.frame_id) for cloud, _ in frames],
            "poses": Config.POSE_FILE_NAME,
        }

    # ---------------------------------------------------------------- extract

    def load_frames(self, scans, pose_path):
        scans = [Path(s) for s in scans]
        if len(scans) == 1 and scans[0].is_dir():
            scans = sorted(p for p in scans[0].iterdir() if p.suffix.lower() in ('.bin', '.txt', '.xyz')
                           and p.name not in (Config.POSE_FILE_NAME, GROUND_TRUTH_NAME))
        poses = read_pose_file(pose_path)
        if len(poses) != len(scans):
            raise ParseError(f"{len(scans)} scan(s) but {len(poses)} pose line(s) in {Path(pose_path).name}")
        frames = []
        for frame_id, scan in zip(sorted(poses), scans):
            frames.append((load_scan(scan, frame_id), poses[frame_id]))
        return frames

    def track(self, frames):
        """Keypoints per frame from pose-based tracking, one reference frame per window."""
        radius = self.value('sampling_radius')
        window = self.value('track_window')
        if window < 2:
            raise InvalidConfig(f"track_window must be >= 2, got {window}")
        per_frame = [dict() for _ in frames]
        for ref in range(0, len(frames), window - 1):
            if ref == len(frames) - 1 and ref:
                break
            tracked = track_keypoints(frames, uniform_sample(frames[ref][0], radius), self.value('match_tolerance'),
                                      ref, window, self.value('min_track_frames'))
            for f, keypoints in enumerate(tracked):
                for kp in keypoints:
                    per_frame[f].setdefault(kp.source_index, kp)
        keypoints = []
        for f, found in enumerate(per_frame):
            if not found:
                # untracked frames still contribute negatives
                found = {kp.source_index: kp for kp in uniform_sample(frames[f][0], radius)}
            keypoints.append([found[k] for k in sorted(found)])
        return keypoints

    def extract(self, scans, pose_path, out_dir):
        out_dir = Path(out_dir)
        params = self.params(PatchParams)
        frames = self.load_frames(scans, pose_path)
        if len(frames) < 2:
            raise InsufficientKeypoints(f"Extraction needs at least 2 scans, got {len(frames)}")
        keypoints = self.track(frames)
        dataset = label_pairs(frames, keypoints, params, self.value('match_tolerance'),
                              self.value('negatives_per_positive'), self.seed, self.value('track_window'),
                              self.workers)
        if self.value('holdout') > 0:
            dataset = split_pairs(dataset, self.value('holdout'), self.seed)
        write_patch_archive(out_dir / Config.ARCHIVE_NAME, dataset.records, params)
        write_pair_index(out_dir / Config.PAIR_INDEX_NAME, dataset)
        summary = dataset.counts()
        summary.update({
            "channels": params.channels,
            "train_pairs": sum(p.split == 'train' for p in dataset.pairs),
            "test_pairs": sum(p.split == 'test' for p in dataset.pairs),
            "archive": Config.ARCHIVE_NAME,
        })
        return summary

    # ------------------------------------------------------------------ train

    def train(self, archive, out_dir, index=None):
        out_dir = Path(out_dir)
        dataset = load_pair_dataset(archive, index)
        train_config = self.params(TrainConfig)
        forced = {} if 'channels' in self.settings else {'channels': dataset.params.channels}
        if 'head' not in self.settings:
            forced['head'] = train_config.head
        model_config = self.params(ModelConfig, **forced)
        if model_config.channels != dataset.params.channels:
            raise ShapeMismatch(f"Model channels '{model_config.channels}' do not match archive '{dataset.params.channels}'")
        model = build_model(model_config, train_config.seed)
        params, report = train(model, dataset.select('train'), train_config, out_dir / Config.CHECKPOINT_NAME)
        File.writeCsv(report.to_frame(), out_dir / Config.LOSS_TRACE_NAME)
        return {
            "head": train_config.head,
            "steps": report.steps,
            "epoch_loss": report.epoch_means,
            "seconds": round(report.seconds, 3),
            "checkpoint": Config.CHECKPOINT_NAME,
        }

    # --------------------------------------------------------------- evaluate

    def evaluate(self, checkpoint, archive, out_dir, split='all', index=None):
        if split not in SPLITS:
            raise InvalidConfig(f"split must be one of {', '.join(SPLITS)}, got '{split}'")
        out_dir = Path(out_dir)
        dataset = load_pair_dataset(archive, index)
        model = load_checkpoint(checkpoint, channels=dataset.params.channels)
        selections = {'all': [('all', None)], 'train': [('train', 'train')], 'test': [('test', 'test')],
                      'both': [('train', 'train'), ('test', 'test')]}[split]
        summary = {}
        for name, tag in selections:
            scores, labels = evaluate_split(model, dataset.select(tag).pairs)
            curve = roc_curve(scores, labels)
            target = Config.ROC_NAME if name == 'all' else f"roc_{name}.csv"
            File.writeCsv(roc_frame(curve), out_dir / target)
            summary[name] = {"fpr95": fpr95(curve), "auc": curve.auc, "line": summary_line(curve),
                             "pairs": int(len(labels)), "roc": target}
        return summary

    # ------------------------------------------------------------------ align

    def _describe_scan(self, cloud, model, params):
        keypoints = uniform_sample(cloud, self.value('sampling_radius'))
        patches = extract_patches(cloud, keypoints, params, self.workers)
        return np.array([kp.position for kp in keypoints], dtype=np.float64).reshape(-1, 3), describe(model, patches)

    def align(self, sources, targets, checkpoint, out_dir, ground_truth=None, filter='both'):
        if filter not in FILTERS:
            raise InvalidConfig(f"filter must be one of {', '.join(FILTERS)}, got '{filter}'")
        if len(sources) != len(targets) or not sources:
            raise InvalidConfig("align needs the same positive number of --source and --target scans")
        out_dir = Path(out_dir)
        model = load_checkpoint(checkpoint)
        params = self.params(PatchParams, channels=model.config.channels)
        matcher = self.value('matcher') or ('metric' if model.config.head == 'metric' else 'euclidean')
        truth = read_pose_file(ground_truth) if ground_truth else {}
        modes = ('raw', 'ransac') if filter == 'both' else (filter,)

        rows = []
        for obj, (source, target) in enumerate(zip(sources, targets)):
            src_cloud, dst_cloud = load_scan(source, 0), load_scan(target, 1)
            started = time.perf_counter()
            src_pts, src_desc = self._describe_scan(src_cloud, model, params)
            dst_pts, dst_desc = self._describe_scan(dst_cloud, model, params)
            matches = match_keypoints(src_desc, dst_desc, matcher, self.value('accept_threshold'), model, self.workers)
            match_seconds = time.perf_counter() - started
            for mode in modes:
                if mode == 'raw':
                    estimate, inliers = kabsch(src_pts, dst_pts, matches), len(matches)
                else:
                    estimate, kept = ransac_align(src_pts, dst_pts, matches, self.value('iterations'),
                                                  self.value('inlier_threshold'), self.seed)
                    inliers = len(kept)
                row = {
                    'object': obj, 'points': len(src_cloud), 'keypoints': len(src_pts),
                    'correspondences': len(matches), 'filter': mode, 'inliers': inliers,
                    't_e': np.nan, 'r_e': np.nan, 'match_seconds': match_seconds,
                    'transform': " ".join(repr(float(v)) for v in estimate.row_major_3x4()),
                }
                if obj in truth:
                    row['t_e'], row['r_e'] = alignment_error(estimate, truth[obj])
                rows.append(row)
                logger.info("object %d %s: %d correspondences, t_e %s, r_e %s",
                            obj, mode, len(matches), row['t_e'], row['r_e'])

        frame = pd.DataFrame(rows)
        File.writeCsv(frame, out_dir / Config.ALIGNMENT_NAME)
        result = {"objects": len(sources), "rows": frame.drop(columns=['transform']).to_dict(orient='records'),
                  "report": Config.ALIGNMENT_NAME}
        if truth:
            summary = summarize_alignment(frame)
            File.writeCsv(summary, out_dir / Config.ALIGNMENT_SUMMARY_NAME)
            result["summary"] = summary.to_dict(orient='records')
        return result

    # ------------------------------------------------------------------ bench

    def bench(self, scan, checkpoint, out_dir, neighborhood_radii=Config.NEIGHBORHOOD_RADII,
              sampling_radii=Config.SAMPLING_RADII):
        out_dir = Path(out_dir)
        model = load_checkpoint(checkpoint)
        cloud = load_scan(scan)
        neighborhood, sampling = bench_timing(cloud, model, neighborhood_radii, sampling_radii, self.value('repeat'),
                                              self.value('sampling_radius'),
                                              float(self.settings.get('cube_edge', Config.CUBE_EDGE)))
        File.writeCsv(neighborhood, out_dir / Config.NEIGHBORHOOD_TIMING_NAME)
        File.writeCsv(sampling, out_dir / Config.SAMPLING_TIMING_NAME)
        return {
            "neighborhood": neighborhood.to_dict(orient='records'),
            "sampling": sampling.to_dict(orient='records'),
            "tables": [Config.NEIGHBORHOOD_TIMING_NAME, Config.SAMPLING_TIMING_NAME],
        }
