#!/usr/bin/env python3
"""
LiDAR local-descriptor command line.

Commands:
  synth     generate a posed synthetic scan sequence (KITTI .bin + poses.txt)
  extract   sample keypoints, track them across scans, write patches + pair index
  train     train the Siamese descriptor network (metric or hinge head)
  evaluate  ROC / FPR95 on labeled patch pairs
  align     match two scans and estimate the rigid motion (raw and/or RANSAC)
  bench     per-feature timing over neighborhood and sampling radii

Usage:
    python API/cli.py synth --out runs/scene --seed 7
    python API/cli.py extract --scans runs/scene --poses runs/scene/poses.txt --out runs/patches --holdout 0.2
    python API/cli.py train --archive runs/patches/patches.bin --out runs/model --head metric
    python API/cli.py evaluate --checkpoint runs/model/model.ldesc --archive runs/patches/patches.bin --split both
    python API/cli.py align --source a.bin --target b.bin --checkpoint runs/model/model.ldesc --out runs/align
    python API/cli.py bench --scan a.bin --checkpoint runs/model/model.ldesc --out runs/bench

Every command takes --config FILE (flat key=value settings); flags override
file values, which override the built-in defaults. Exit codes: 0 success,
2 input/output error, 3 configuration or shape error, 4 algorithmic failure.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

if __package__ in (None, ""):
    sys.path.insert(0, str(Path(__file__).resolve().parent))

from Classes.Base import Config
from Classes.Base.CustomExceptionClass import DescriptorError
from Classes.Pipeline.PipelineClass import FILTERS, SPLITS, Pipeline, allowed_settings

logger = logging.getLogger("ldesc")

# flag dest -> setting name where they differ
SETTING_ALIASES = {
    'frames': 'frame_count',
    'objects': 'object_count',
    'points': 'points_per_object',
    'noise': 'noise_sigma',
    'tolerance': 'match_tolerance',
    'negatives': 'negatives_per_positive',
    'lr': 'learning_rate',
    'eta': 'l2_eta',
    'accept': 'accept_threshold',
}


def _common(parser):
    parser.add_argument("--config", type=Path, help="key=value settings file")
    parser.add_argument("--seed", type=int, help="random seed (default 0)")
    parser.add_argument("--workers", type=int, help=f"worker threads (default {Config.THREADS}, env LDESC_THREADS)")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (-vv for debug)")


def build_parser():
    parser = argparse.ArgumentParser(prog="ldesc", description="Learned local descriptors for sparse LiDAR scans.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic posed scan sequence")
    _common(p)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--frames", type=int)
    p.add_argument("--objects", type=int)
    p.add_argument("--points", type=int, help="surface samples per object")
    p.add_argument("--noise", type=float, help="position noise sigma (m)")
    p.add_argument("--dropout", type=float)

    p = sub.add_parser("extract", help="extract patches and labeled pairs")
    _common(p)
    p.add_argument("--scans", nargs="+", required=True, help="scan files in frame order, or one directory")
    p.add_argument("--poses", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--channels", choices=Config.CHANNEL_SETS)
    p.add_argument("--sampling-radius", dest="sampling_radius", type=float)
    p.add_argument("--cube-edge", dest="cube_edge", type=float)
    p.add_argument("--tolerance", type=float, help=f"match tolerance (default {Config.MATCH_TOLERANCE} m)")
    p.add_argument("--negatives", type=int, help="negatives per positive")
    p.add_argument("--holdout", type=float, help="fraction of keypoint tracks held out as the test split")

    p = sub.add_parser("train", help="train the descriptor network")
    _common(p)
    p.add_argument("--archive", type=Path, required=True)
    p.add_argument("--index", type=Path, help=f"pair index (default {Config.PAIR_INDEX_NAME} beside the archive)")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--head", choices=Config.HEADS)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--eta", type=float, help="l2 regularization weight")
    p.add_argument("--checkpoint-every", dest="checkpoint_every", type=int)

    p = sub.add_parser("evaluate", help="ROC and FPR95 on labeled pairs")
    _common(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--archive", type=Path, required=True)
    p.add_argument("--index", type=Path)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--split", choices=SPLITS, default="all")

    p = sub.add_parser("align", help="estimate the rigid motion between scans")
    _common(p)
    p.add_argument("--source", action="append", required=True, help="repeat once per object")
    p.add_argument("--target", action="append", required=True, help="repeat once per object")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--ground-truth", dest="ground_truth", type=Path,
                   help="pose file; line k is the source -> target motion of object k")
    p.add_argument("--filter", choices=FILTERS, default="both")
    p.add_argument("--matcher", choices=("metric", "euclidean"))
    p.add_argument("--accept", type=float, help="match acceptance threshold")
    p.add_argument("--iterations", type=int)
    p.add_argument("--inlier-threshold", dest="inlier_threshold", type=float)
    p.add_argument("--sampling-radius", dest="sampling_radius", type=float)

    p = sub.add_parser("bench", help="timing tables")
    _common(p)
    p.add_argument("--scan", type=Path, required=True)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--radii", nargs="+", type=float, default=list(Config.NEIGHBORHOOD_RADII))
    p.add_argument("--sampling-radii", dest="sampling_radii", nargs="+", type=float, default=list(Config.SAMPLING_RADII))
    p.add_argument("--repeat", type=int)
    p.add_argument("--sampling-radius", dest="sampling_radius", type=float)
    return parser


def configure_logging(verbose):
    level = Config.LOG_LEVEL
    if verbose == 1:
        level = "INFO"
    elif verbose > 1:
        level = "DEBUG"
    logging.basicConfig(level=getattr(logging, level, logging.INFO),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def overrides_from(args):
    allowed = set(allowed_settings())
    overrides = {}
    for dest, value in vars(args).items():
        name = SETTING_ALIASES.get(dest, dest)
        if name in allowed and value is not None:
            overrides[name] = value
    return overrides


def run(args):
    pipeline = Pipeline.from_config_file(args.config, overrides_from(args), args.workers)
    if args.command == "synth":
        summary = pipeline.synth(args.out)
        print(f"frames={summary['frames']} points={','.join(map(str, summary['points']))}")
    elif args.command == "extract":
        summary = pipeline.extract(args.scans, args.poses, args.out)
        print(f"patches={summary['patches']} positives={summary['positives']} negatives={summary['negatives']}"
              f" train_pairs={summary['train_pairs']} test_pairs={summary['test_pairs']}")
    elif args.command == "train":
        summary = pipeline.train(args.archive, args.out, args.index)
        print(f"head={summary['head']} steps={summary['steps']} final_epoch_loss={summary['epoch_loss'][-1]:.6f}")
    elif args.command == "evaluate":
        summary = pipeline.evaluate(args.checkpoint, args.archive, args.out, args.split, args.index)
        for name, result in summary.items():
            print(result["line"] if name == "all" else f"{name}: {result['line']}")
    elif args.command == "align":
        summary = pipeline.align(args.source, args.target, args.checkpoint, args.out, args.ground_truth, args.filter)
        for row in summary["rows"]:
            print(f"{row['object']}, {row['filter']}, {row['points']} points, {row['keypoints']} keypoints, "
                  f"t_e {row['t_e']:.4f}, r_e {row['r_e']:.4f}")
    elif args.command == "bench":
        summary = pipeline.bench(args.scan, args.checkpoint, args.out, args.radii, args.sampling_radii)
        print(json.dumps(summary["tables"]))
    return summary


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.verbose)
    try:
        run(args)
    except DescriptorError as e:
        logger.error("%s: %s", type(e).__name__, e.message)
        return e.exit_code
    except OSError as e:
        logger.error("%s", e)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
