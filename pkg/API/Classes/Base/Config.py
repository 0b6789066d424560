from pathlib import Path
import dataclasses
import os

from dotenv import load_dotenv, dotenv_values

from Classes.Base.CustomExceptionClass import InvalidConfig

# Central path validation utility (prevents path traversal)
def validate_path(base_dir, user_input):
    base_raw = os.fspath(base_dir)
    user_raw = "" if user_input is None else os.fspath(user_input)

    if isinstance(base_raw, (bytes, bytearray)):
        base_raw = base_raw.decode("utf-8", "surrogateescape")
    if isinstance(user_raw, (bytes, bytearray)):
        user_raw = user_raw.decode("utf-8", "surrogateescape")

    if "\x00" in base_raw or "\x00" in user_raw:
        raise PermissionError("Path Traversal Attempt Detected")

    base_abs = os.path.realpath(os.path.abspath(os.path.normpath(base_raw)))
    target_abs = os.path.realpath(
        os.path.abspath(os.path.normpath(os.path.join(base_abs, user_raw)))
    )

    try:
        common = os.path.commonpath([base_abs, target_abs])
    except ValueError:
        raise PermissionError("Path Traversal Attempt Detected")

    if common != base_abs or target_abs == base_abs:
        raise PermissionError("Path Traversal Attempt Detected")

    return target_abs


def read_config_file(path, allowed_keys):
    """Read a flat key=value run config.

    Blank lines and '#' comments are ignored. Keys outside ``allowed_keys``
    are rejected so a typo never silently falls back to a default.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"Config file not found: {path}")
    values = dotenv_values(path)
    unknown = sorted(set(values) - set(allowed_keys))
    if unknown:
        raise InvalidConfig(
            f"Unknown config key(s) in {path.name}: {', '.join(unknown)}",
            payload={"unknown": unknown, "allowed": sorted(allowed_keys)},
        )
    missing = [k for k, v in values.items() if v is None or v == ""]
    if missing:
        raise InvalidConfig(f"Config key(s) without a value in {path.name}: {', '.join(missing)}")
    return dict(values)


def from_mapping(cls, mapping):
    """Build a parameter dataclass from a mapping of native or string values.

    Field types drive the coercion; tuples are comma-separated integers.
    Unknown keys raise InvalidConfig, as do values that cannot be read.
    """
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(mapping) - set(known))
    if unknown:
        raise InvalidConfig(f"Unknown {cls.__name__} key(s): {', '.join(unknown)}")
    values = {}
    for name, raw in mapping.items():
        kind = known[name].type
        try:
            if kind is bool:
                values[name] = raw if isinstance(raw, bool) else str(raw).strip().lower() in ('1', 'true', 'yes')
            elif kind is tuple:
                items = raw.split(',') if isinstance(raw, str) else raw
                values[name] = tuple(int(v) for v in items)
            elif kind is int and isinstance(raw, str):
                values[name] = int(raw.strip())
            else:
                values[name] = kind(raw)
        except (TypeError, ValueError):
            raise InvalidConfig(f"{cls.__name__}.{name}: cannot read '{raw}'")
    return cls(**values)


def _env_int(name, default):
    raw = os.environ.get(name, "").strip()
    if not raw:
        return default
    try:
        value = int(raw)
    except ValueError:
        raise InvalidConfig(f"{name} must be an integer, got '{raw}'")
    if value < 1:
        raise InvalidConfig(f"{name} must be >= 1, got {value}")
    return value


#load environment variables
load_dotenv()

# This file is in: API/Classes/Base/Config.py
# So project root is 3 levels up
BASE_DIR = Path(__file__).resolve().parents[3]

# HTTP-submitted runs read and write below this folder only
DATA_STORAGE = Path(os.environ.get("LDESC_DATA_STORAGE", "").strip() or BASE_DIR / "DataStorage")

# default worker count for patch extraction and pair scoring
THREADS = _env_int("LDESC_THREADS", min(4, os.cpu_count() or 1))
LOG_LEVEL = os.environ.get("LDESC_LOG_LEVEL", "INFO").strip().upper() or "INFO"

#cloud
SAMPLING_RADIUS = 0.4
INTENSITY_RANGE = (0.0, 1.0)

#patches
CUBE_EDGE = 3.2
GRID_ROWS = 64
GRID_COLS = 64
EMPTY_FILL = 0.0
OCCUPANCY_EPSILON = 1e-3
CHANNEL_SETS = ('depth+intensity', 'depth', 'intensity')
GLOBAL_UP = (0.0, 0.0, 1.0)
GLOBAL_X = (1.0, 0.0, 0.0)

#pairs
MATCH_TOLERANCE = 0.05
NEGATIVES_PER_POSITIVE = 6
TRACK_WINDOW = 5
MIN_TRACK_FRAMES = 2

#network
GROWTH_RATE = 4
DESCRIPTOR_DIM = 256
METRIC_LAYER_WIDTHS = (512, 256, 128, 64, 2)
HINGE_HIDDEN = 512
HINGE_MARGIN = 1.0
BN_MOMENTUM = 0.99
BN_EPSILON = 1e-5
HEADS = ('metric', 'hinge')
MATCH_CLASS = 0

#training
BATCH_SIZE = 32
LEARNING_RATE = 1e-4
L2_ETA = 5e-4
EPOCHS = 5
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPSILON = 1e-8

#alignment
RANSAC_ITERATIONS = 1000
RANSAC_INLIER_THRESHOLD = 0.2
MATCH_ACCEPT_METRIC = 0.5

#timing grids
NEIGHBORHOOD_RADII = (0.4, 0.8, 1.6, 3.2, 6.4)
SAMPLING_RADII = (3.2, 1.6, 0.8, 0.4, 0.2, 0.1, 0.05)
BENCH_REPEAT = 5

#output artifacts
ARCHIVE_NAME = 'patches.bin'
PAIR_INDEX_NAME = 'pairs.json'
POSE_FILE_NAME = 'poses.txt'
CHECKPOINT_NAME = 'model.ldesc'
LOSS_TRACE_NAME = 'loss.csv'
ROC_NAME = 'roc.csv'
ALIGNMENT_NAME = 'alignment.csv'
ALIGNMENT_SUMMARY_NAME = 'alignment_summary.csv'
NEIGHBORHOOD_TIMING_NAME = 'timing_neighborhood.csv'
SAMPLING_TIMING_NAME = 'timing_sampling.csv'
